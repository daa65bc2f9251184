mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use advaug_core::data::{read_csv, read_dataset, write_csv, write_dataset, Dataset};
use advaug_core::ensemble::{train_baseline_ensemble, train_ensemble, EnsembleModel};
use advaug_core::experiment::ExperimentConfig;
use advaug_core::net::read_model;
use advaug_core::trainer::{accuracy, mean_loss, save_run, train};
use advaug_core::verify::{run_suite, Report, Suite};
use advaug_core::{par, Network};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use manifest::{resolve_config, RunManifest};

#[derive(Parser)]
#[command(name = "advaug", version, about = "Semantic-space adversarial data augmentation")]
struct Cli {
    /// Run every data-parallel loop sequentially.
    #[arg(long, global = true)]
    serial: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the source train/test splits and every target split.
    Gen {
        #[command(flatten)]
        config: ConfigArg,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Also write each split as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Train one model with adversarial augmentation.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        overrides: Overrides,
        /// Training split (.bin or .csv); generated from the config if absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a penalty-grid ensemble.
    Ensemble {
        #[command(flatten)]
        config: ConfigArg,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Same-size ensemble of plain ERM models differing only in seed.
        #[arg(long)]
        baseline: bool,
    },
    /// Accuracy of a model or ensemble on one or more datasets.
    Eval {
        #[arg(long, conflicts_with = "ensemble", required_unless_present = "ensemble")]
        model: Option<PathBuf>,
        /// Ensemble manifest.json.
        #[arg(long)]
        ensemble: Option<PathBuf>,
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run numerical verification suites.
    Verify {
        /// duality, newton, displacement, sandwich, gradients, envelope,
        /// ordering, or all.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArg {
    /// Preset name, experiment config JSON, or a previous run.json.
    #[arg(long, default_value = "default")]
    config: String,
}

#[derive(Args)]
struct Overrides {
    /// Training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of augmentation rounds.
    #[arg(long)]
    rounds: Option<usize>,
    /// Penalty weight on the semantic transport cost.
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
}

impl Overrides {
    fn apply(&self, mut cfg: ExperimentConfig) -> Result<ExperimentConfig> {
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        if let Some(k) = self.rounds {
            cfg.train.k = k;
        }
        if let Some(g) = self.gamma {
            cfg.train.gamma = g;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Failure that maps to exit code 2.
#[derive(Debug)]
struct Numerical(String);

impl std::fmt::Display for Numerical {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Numerical {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use advaug_core::Error as E;
    for cause in err.chain() {
        if cause.is::<Numerical>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::NonConvergence { .. } | E::NonFinite { .. } | E::Curvature { .. } | E::Lp(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    par::set_serial(cli.serial);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen { config, out, csv } => cmd_gen(&config.config, &out, csv),
        Command::Train {
            config,
            overrides,
            data,
            out,
        } => cmd_train(overrides.apply(resolve_config(&config.config)?)?, data.as_deref(), &out),
        Command::Ensemble {
            config,
            overrides,
            data,
            out,
            baseline,
        } => cmd_ensemble(overrides.apply(resolve_config(&config.config)?)?, data.as_deref(), &out, baseline),
        Command::Eval {
            model,
            ensemble,
            data,
            report,
        } => cmd_eval(model.as_deref(), ensemble.as_deref(), &data, report.as_deref()),
        Command::Verify {
            suite,
            trials,
            seed,
            report,
        } => cmd_verify(&suite, trials, seed, report.as_deref()),
    }
}

fn load_data(path: &Path, n_classes: usize) -> Result<Dataset> {
    let ds = if path.extension().is_some_and(|e| e == "csv") {
        read_csv(path, Some(n_classes))
    } else {
        read_dataset(path)
    };
    ds.with_context(|| format!("reading {}", path.display()))
}

/// The training split from `--data`, checked against the config, or
/// generated from it.
fn training_data(cfg: &ExperimentConfig, data: Option<&Path>) -> Result<Dataset> {
    let Some(path) = data else {
        return Ok(cfg.source_train()?);
    };
    let ds = load_data(path, cfg.source.n_classes)?;
    if ds.dim != cfg.source.dim || ds.n_classes != cfg.source.n_classes {
        bail!(
            "{} has d={}, m={} but the config expects d={}, m={}",
            path.display(),
            ds.dim,
            ds.n_classes,
            cfg.source.dim,
            cfg.source.n_classes
        );
    }
    Ok(ds)
}

fn cmd_gen(config: &str, out: &Path, csv: bool) -> Result<()> {
    let cfg = resolve_config(config)?;
    let manifest = RunManifest::new("gen", &cfg, vec![], out);
    manifest.write()?;
    let mut splits = vec![
        ("source_train".to_string(), cfg.source_train()?),
        ("source_test".to_string(), cfg.source_test()?),
    ];
    for t in &cfg.targets {
        splits.push((format!("target_{}", t.name), cfg.target(&t.name)?));
    }
    for (name, ds) in &splits {
        write_dataset(out.join(format!("{name}.bin")), ds)?;
        if csv {
            write_csv(out.join(format!("{name}.csv")), ds)?;
        }
        println!("{name}: {} examples", ds.len());
    }
    manifest.finish()
}

fn cmd_train(cfg: ExperimentConfig, data: Option<&Path>, out: &Path) -> Result<()> {
    let inputs = data.map(|p| vec![p.to_path_buf()]).unwrap_or_default();
    let manifest = RunManifest::new("train", &cfg, inputs, out);
    manifest.write()?;
    let ds = training_data(&cfg, data)?;
    let net = Network::init(&cfg.architecture(), cfg.train.seed)?;
    let result = train(&net, &ds.examples, &cfg.train)?;
    save_run(out, &cfg.train, &result)?;
    println!(
        "trained on {} examples ({} after augmentation), source accuracy {:.4}",
        ds.len(),
        result.dataset.len(),
        accuracy(&result.net, &ds.examples)?
    );
    manifest.finish()
}

fn cmd_ensemble(cfg: ExperimentConfig, data: Option<&Path>, out: &Path, baseline: bool) -> Result<()> {
    let inputs = data.map(|p| vec![p.to_path_buf()]).unwrap_or_default();
    let manifest = RunManifest::new(if baseline { "ensemble --baseline" } else { "ensemble" }, &cfg, inputs, out);
    manifest.write()?;
    let ds = training_data(&cfg, data)?;
    let arch = cfg.architecture();
    let model = if baseline {
        train_baseline_ensemble(&arch, &ds.examples, &cfg.train, cfg.gamma_grid.len(), cfg.selection)?
    } else {
        train_ensemble(&arch, &ds.examples, &cfg.train, &cfg.gamma_grid, cfg.selection)?
    };
    model.save(out)?;
    println!("{} members written to {}", model.len(), out.join("manifest.json").display());
    manifest.finish()
}

#[derive(Serialize)]
struct EvalRow {
    data: PathBuf,
    n: usize,
    accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_loss: Option<f64>,
}

#[derive(Serialize)]
struct EvalReport {
    model: PathBuf,
    kind: &'static str,
    results: Vec<EvalRow>,
}

fn cmd_eval(model: Option<&Path>, ensemble: Option<&Path>, data: &[PathBuf], report: Option<&Path>) -> Result<()> {
    enum Loaded {
        Single(Network),
        Ensemble(EnsembleModel),
    }
    let (path, loaded) = match (model, ensemble) {
        (Some(p), None) => (p, Loaded::Single(read_model(p).with_context(|| format!("reading {}", p.display()))?)),
        (None, Some(p)) => (p, Loaded::Ensemble(EnsembleModel::load(p).with_context(|| format!("reading {}", p.display()))?)),
        _ => bail!("exactly one of --model and --ensemble is required"),
    };
    let n_classes = match &loaded {
        Loaded::Single(net) => net.n_classes(),
        Loaded::Ensemble(e) => e.members()[0].net.n_classes(),
    };
    let mut rows = Vec::new();
    for p in data {
        let ds = load_data(p, n_classes)?;
        let row = match &loaded {
            Loaded::Single(net) => EvalRow {
                data: p.clone(),
                n: ds.len(),
                accuracy: accuracy(net, &ds.examples)?,
                mean_loss: Some(mean_loss(net, &ds.examples)?),
            },
            Loaded::Ensemble(e) => EvalRow {
                data: p.clone(),
                n: ds.len(),
                accuracy: e.accuracy(&ds.examples)?,
                mean_loss: None,
            },
        };
        println!("{}: accuracy {:.4} on {} examples", p.display(), row.accuracy, row.n);
        rows.push(row);
    }
    if let Some(r) = report {
        let rep = EvalReport {
            model: path.to_path_buf(),
            kind: if matches!(loaded, Loaded::Single(_)) { "model" } else { "ensemble" },
            results: rows,
        };
        std::fs::write(r, serde_json::to_string_pretty(&rep)?).with_context(|| format!("writing {}", r.display()))?;
    }
    Ok(())
}

fn cmd_verify(suite: &str, trials: usize, seed: u64, report: Option<&Path>) -> Result<()> {
    let suites: Vec<Suite> = if suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![suite.parse()?]
    };
    let mut reports: Vec<Report> = Vec::new();
    for s in suites {
        let r = run_suite(s, trials, seed)?;
        println!(
            "{:<10} {} {}/{} trials",
            r.suite,
            if r.all_pass { "PASS" } else { "FAIL" },
            r.passed_trials,
            r.trials
        );
        for f in r.failures().take(5) {
            eprintln!(
                "  {} trial {} ({}): lhs {:e} rhs {:e}",
                f.check, f.trial, f.instance_seed, f.lhs, f.rhs
            );
        }
        reports.push(r);
    }
    if let Some(path) = report {
        let json = if reports.len() == 1 {
            serde_json::to_string_pretty(&reports[0])?
        } else {
            serde_json::to_string_pretty(&reports)?
        };
        std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.all_pass).map(|r| r.suite).collect();
    if !failed.is_empty() {
        return Err(Numerical(format!("verification failed: {}", failed.join(", "))).into());
    }
    Ok(())
}
