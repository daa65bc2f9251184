//! The alternating augment-then-train loop.
//!
//! `train` runs `k` rounds of (minimization phase of `t_min` steps, then a
//! maximization phase that appends `n_append` adversarially perturbed copies
//! of uniformly sampled examples), followed by a final minimization phase of
//! `t_final` steps on the fully augmented dataset.
//!
//! All sampling draws from one ChaCha8 stream derived from `cfg.seed`, in a
//! fixed order, so a run is a pure function of `(net0, dataset0, cfg)`.
//! Ascent inside a maximization phase may run in parallel; the sampled
//! indices are drawn before any work is scheduled.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{write_dataset, Dataset};
use crate::error::{Error, Result};
use crate::net::{write_model, LabeledExample, NetGrad, Network};
use crate::optim::{AdamParams, Optimizer, OptimizerKind};
use crate::par;
use crate::rng::{self, Rng};
use crate::surrogate::{ascend_x_with, CostSpace};

const SAMPLING_STREAM: u64 = 0x5A;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Learning rate.
    pub alpha: f64,
    /// Ascent step size.
    pub eta: f64,
    /// Transport penalty.
    pub gamma: f64,
    /// Number of minimax rounds; 0 is plain ERM.
    pub k: usize,
    pub t_min: usize,
    pub t_max: usize,
    pub t_final: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub adam: AdamParams,
    pub seed: u64,
    /// Examples perturbed per maximization phase; `None` means the original
    /// dataset size.
    pub n_append: Option<usize>,
    pub cost_space: CostSpace,
    /// Steps per running-loss window in the run log.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            eta: 1.0,
            gamma: 1.0,
            k: 2,
            t_min: 100,
            t_max: 15,
            t_final: 1000,
            batch_size: 32,
            optimizer: OptimizerKind::Adam,
            adam: AdamParams::default(),
            seed: 0,
            n_append: None,
            cost_space: CostSpace::Semantic,
            log_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be finite and ≥ 0, got {}", self.alpha));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be finite and ≥ 0, got {}", self.eta));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be finite and ≥ 0, got {}", self.gamma));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.k > 0 && self.t_max == 0 {
            return bad("t_max must be positive when k > 0".into());
        }
        if self.log_every == 0 {
            return bad("log_every must be positive".into());
        }
        let AdamParams { beta1, beta2, eps } = self.adam;
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
            return bad(format!("invalid Adam parameters {:?}", self.adam));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_rounds(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    /// The stream every phase of one run draws from.
    pub fn sampling_rng(&self) -> Rng {
        rng::seeded(rng::derive(self.seed, SAMPLING_STREAM))
    }
}

/// Training set grown by maximization phases. Originals come first and are
/// never modified; `provenance[i]` is the round that produced example `i`
/// (0 for originals).
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDataset {
    examples: Vec<LabeledExample>,
    provenance: Vec<usize>,
    n_original: usize,
}

impl AugmentedDataset {
    pub fn new(originals: Vec<LabeledExample>) -> Self {
        let n = originals.len();
        Self {
            examples: originals,
            provenance: vec![0; n],
            n_original: n,
        }
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn provenance(&self) -> &[usize] {
        &self.provenance
    }

    pub fn originals(&self) -> &[LabeledExample] {
        &self.examples[..self.n_original]
    }

    pub fn n_original(&self) -> usize {
        self.n_original
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Examples appended in round `k`.
    pub fn round(&self, k: usize) -> impl Iterator<Item = &LabeledExample> {
        self.examples.iter().zip(&self.provenance).filter(move |(_, &r)| r == k).map(|(e, _)| e)
    }

    pub fn append(&mut self, round: usize, examples: Vec<LabeledExample>) {
        assert!(round > 0, "round 0 is reserved for originals");
        self.provenance.extend(std::iter::repeat_n(round, examples.len()));
        self.examples.extend(examples);
    }

    pub fn to_dataset(&self, n_classes: usize) -> Result<Dataset> {
        let dim = self.examples.first().map_or(0, |e| e.x.len());
        Dataset::new(dim, n_classes, self.examples.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Min,
    Max,
    Final,
}

/// One deterministic run-log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: PhaseKind,
    pub round: usize,
    pub steps: usize,
    pub dataset_size: usize,
    /// Mean minibatch loss per window of `log_every` steps.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub window_losses: Vec<f64>,
    /// Mean loss of the sampled sources under the frozen model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_loss: Option<f64>,
    /// Mean loss of the appended examples under the same model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub appended_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub appended: Option<usize>,
}

/// Phase records plus wall-clock seconds per phase. Only `records` is
/// reproducible.
#[derive(Debug, Clone, Default)]
pub struct RunLog {
    pub records: Vec<PhaseRecord>,
    pub wall_seconds: Vec<f64>,
}

impl RunLog {
    fn push(&mut self, record: PhaseRecord, started: Instant) {
        self.records.push(record);
        self.wall_seconds.push(started.elapsed().as_secs_f64());
    }

    /// One JSON object per phase. Byte-reproducible for a fixed config.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("phase record serializes"));
            out.push('\n');
        }
        out
    }

    /// `{"phase", "round", "wall_seconds"}` per phase, line-aligned with
    /// [`RunLog::to_jsonl`].
    pub fn timing_jsonl(&self) -> String {
        let mut out = String::new();
        for (r, t) in self.records.iter().zip(&self.wall_seconds) {
            let v = serde_json::json!({ "phase": r.phase, "round": r.round, "wall_seconds": t });
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct MaxPhaseOutput {
    pub appended: Vec<LabeledExample>,
    /// Index into the augmented dataset of each appended example's source.
    pub sources: Vec<usize>,
    pub source_loss: f64,
    pub appended_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub net: Network,
    pub dataset: AugmentedDataset,
    pub log: RunLog,
    /// Model after the minimization phase of round `k`, for `k = 1..=K`.
    pub checkpoints: Vec<Network>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn mean_loss(net: &Network, examples: &[LabeledExample]) -> Result<f64> {
    let losses = par::try_map_indexed(examples.len(), |i| net.loss(&examples[i]))?;
    Ok(mean(losses.into_iter()))
}

/// Fraction of examples whose argmax prediction equals the label.
pub fn accuracy(net: &Network, examples: &[LabeledExample]) -> Result<f64> {
    let hits = par::try_map_indexed(examples.len(), |i| Ok::<_, Error>(net.predict(&examples[i].x)? == examples[i].y))?;
    Ok(mean(hits.into_iter().map(|h| f64::from(u8::from(h)))))
}

/// Mean loss and gradient over a minibatch.
fn batch_gradient(net: &Network, batch: &[&LabeledExample]) -> Result<(f64, Vec<f64>)> {
    let grads = par::try_map_indexed(batch.len(), |i| net.grad_params_loss(batch[i]))?;
    let mut total = NetGrad::zeros_like(net);
    let mut loss = 0.0;
    for (l, g) in &grads {
        loss += l;
        total.add_scaled(g, 1.0);
    }
    let scale = 1.0 / batch.len() as f64;
    Ok((loss * scale, total.flatten().into_iter().map(|g| g * scale).collect()))
}

/// Exactly `steps` optimizer updates on minibatches drawn uniformly with
/// replacement from `dataset`. Optimizer state starts fresh.
pub fn min_phase_with_rng(
    net: &mut Network,
    dataset: &[LabeledExample],
    cfg: &TrainConfig,
    steps: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("minimization phase needs a nonempty dataset".into()));
    }
    let mut params = net.flat_params();
    let mut opt = Optimizer::new(cfg.optimizer, params.len(), cfg.adam);
    let mut windows = Vec::new();
    let mut window = (0.0, 0usize);
    for step in 0..steps {
        let batch: Vec<&LabeledExample> = (0..cfg.batch_size).map(|_| &dataset[rng.gen_range(0..dataset.len())]).collect();
        let (loss, grad) = batch_gradient(net, &batch)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                context: "minimization phase",
                step,
                state: Some(Box::new(net.clone())),
            });
        }
        opt.step(&mut params, &grad, cfg.alpha);
        net.set_flat_params(&params)?;
        window.0 += loss;
        window.1 += 1;
        if window.1 == cfg.log_every || step + 1 == steps {
            windows.push(window.0 / window.1 as f64);
            window = (0.0, 0);
        }
    }
    if !net.is_finite() {
        return Err(Error::NonFinite {
            context: "minimization phase",
            step: steps,
            state: Some(Box::new(net.clone())),
        });
    }
    Ok(windows)
}

/// Standalone minimization phase seeded from `cfg.seed`; identical to the
/// first phase of [`train`].
pub fn min_phase(net: &Network, dataset: &[LabeledExample], cfg: &TrainConfig, steps: usize) -> Result<(Network, Vec<f64>)> {
    cfg.validate()?;
    let mut out = net.clone();
    let windows = min_phase_with_rng(&mut out, dataset, cfg, steps, &mut cfg.sampling_rng())?;
    Ok((out, windows))
}

/// Sample `n_append` examples uniformly from the current dataset and run
/// `t_max` ascent steps on each, anchored at itself. The model is untouched.
pub fn max_phase_with_rng(
    net: &Network,
    dataset: &AugmentedDataset,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<MaxPhaseOutput> {
    let n_append = cfg.n_append.unwrap_or(dataset.n_original());
    if n_append > 0 && dataset.is_empty() {
        return Err(Error::InvalidConfig("maximization phase needs a nonempty dataset".into()));
    }
    let sources: Vec<usize> = (0..n_append).map(|_| rng.gen_range(0..dataset.len())).collect();
    let examples = dataset.examples();
    let results = par::try_map_indexed(n_append, |i| {
        let src = &examples[sources[i]];
        let out = ascend_x_with(net, src, src, cfg.gamma, cfg.eta, cfg.t_max, cfg.cost_space, false)?.example;
        Ok::<_, Error>((net.loss(src)?, net.loss(&out)?, out))
    })?;
    let source_loss = mean(results.iter().map(|r| r.0));
    let appended_loss = mean(results.iter().map(|r| r.1));
    Ok(MaxPhaseOutput {
        appended: results.into_iter().map(|r| r.2).collect(),
        sources,
        source_loss,
        appended_loss,
    })
}

/// Standalone maximization phase seeded from `cfg.seed`.
pub fn max_phase(net: &Network, dataset: &AugmentedDataset, cfg: &TrainConfig) -> Result<MaxPhaseOutput> {
    cfg.validate()?;
    max_phase_with_rng(net, dataset, cfg, &mut cfg.sampling_rng())
}

pub fn train(net0: &Network, dataset0: &[LabeledExample], cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    for ex in dataset0 {
        if ex.x.len() != net0.input_dim() {
            return Err(Error::dim("training example", net0.input_dim(), ex.x.len()));
        }
        if ex.y >= net0.n_classes() {
            return Err(Error::LabelOutOfRange {
                label: ex.y,
                classes: net0.n_classes(),
            });
        }
    }
    let mut rng = cfg.sampling_rng();
    let mut net = net0.clone();
    let mut data = AugmentedDataset::new(dataset0.to_vec());
    let mut log = RunLog::default();
    let mut checkpoints = Vec::with_capacity(cfg.k);

    for round in 1..=cfg.k {
        let started = Instant::now();
        let windows = min_phase_with_rng(&mut net, data.examples(), cfg, cfg.t_min, &mut rng)?;
        log.push(
            PhaseRecord {
                phase: PhaseKind::Min,
                round,
                steps: cfg.t_min,
                dataset_size: data.len(),
                window_losses: windows,
                source_loss: None,
                appended_loss: None,
                appended: None,
            },
            started,
        );
        checkpoints.push(net.clone());

        let started = Instant::now();
        let out = max_phase_with_rng(&net, &data, cfg, &mut rng)?;
        let appended = out.appended.len();
        data.append(round, out.appended);
        log.push(
            PhaseRecord {
                phase: PhaseKind::Max,
                round,
                steps: cfg.t_max,
                dataset_size: data.len(),
                window_losses: Vec::new(),
                source_loss: Some(out.source_loss),
                appended_loss: Some(out.appended_loss),
                appended: Some(appended),
            },
            started,
        );
    }

    let started = Instant::now();
    let windows = min_phase_with_rng(&mut net, data.examples(), cfg, cfg.t_final, &mut rng)?;
    log.push(
        PhaseRecord {
            phase: PhaseKind::Final,
            round: cfg.k,
            steps: cfg.t_final,
            dataset_size: data.len(),
            window_losses: windows,
            source_loss: None,
            appended_loss: None,
            appended: None,
        },
        started,
    );

    Ok(TrainOutput {
        net,
        dataset: data,
        log,
        checkpoints,
    })
}

/// Write the run directory: `config.json`, `model.adaw`,
/// `models/round_k.adaw`, `log.jsonl`, `timing.jsonl`,
/// `dataset.augmented.bin` and `dataset.provenance.json`. Everything except
/// `timing.jsonl` is byte-reproducible.
pub fn save_run(dir: impl AsRef<Path>, cfg: &TrainConfig, out: &TrainOutput) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("models"))?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    write_model(dir.join("model.adaw"), &out.net)?;
    for (i, net) in out.checkpoints.iter().enumerate() {
        write_model(dir.join("models").join(format!("round_{}.adaw", i + 1)), net)?;
    }
    fs::write(dir.join("log.jsonl"), out.log.to_jsonl())?;
    fs::write(dir.join("timing.jsonl"), out.log.timing_jsonl())?;
    write_dataset(dir.join("dataset.augmented.bin"), &out.dataset.to_dataset(out.net.n_classes())?)?;
    fs::write(dir.join("dataset.provenance.json"), serde_json::to_string(out.dataset.provenance())?)?;
    Ok(())
}
