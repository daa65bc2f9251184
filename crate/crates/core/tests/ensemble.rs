use advaug_core::ensemble::{train_baseline_ensemble, train_ensemble, EnsembleModel, Member, Selection};
use advaug_core::experiment::ExperimentConfig;
use advaug_core::net::{model_to_bytes, Architecture};
use advaug_core::trainer::{accuracy, train, TrainConfig};
use advaug_core::{Activation, LabeledExample, Network};

fn arch() -> Architecture {
    Architecture {
        input_dim: 2,
        hidden: vec![8],
        feature_dim: 4,
        n_classes: 3,
        activation: Activation::Tanh,
    }
}

fn cfg() -> TrainConfig {
    TrainConfig {
        alpha: 1e-2,
        k: 1,
        t_min: 30,
        t_max: 5,
        t_final: 60,
        batch_size: 16,
        seed: 21,
        ..Default::default()
    }
}

fn setup() -> (Vec<LabeledExample>, Vec<LabeledExample>) {
    let exp = ExperimentConfig::default_toy();
    (exp.source_train().unwrap().examples, exp.target("mid").unwrap().examples)
}

#[test]
fn single_member_ensemble_equals_plain_model() {
    let (train_set, test_set) = setup();
    let ens = train_ensemble(&arch(), &train_set, &cfg(), &[0.1], Selection::MaxLogit).unwrap();
    let net0 = Network::init(&arch(), cfg().seed).unwrap();
    let plain = train(&net0, &train_set, &cfg().with_gamma(0.1)).unwrap().net;
    assert_eq!(model_to_bytes(&ens.members()[0].net), model_to_bytes(&plain));
    assert_eq!(ens.accuracy(&test_set).unwrap(), accuracy(&plain, &test_set).unwrap());
}

#[test]
fn members_follow_grid_order_and_seed_xor_index() {
    let (train_set, _) = setup();
    let grid = [1.0, 0.1, 0.01];
    let ens = train_ensemble(&arch(), &train_set, &cfg(), &grid, Selection::MaxLogit).unwrap();
    for (i, m) in ens.members().iter().enumerate() {
        assert_eq!(m.gamma, grid[i]);
        assert_eq!(m.seed, 21 ^ i as u64);
    }
    let again = train_ensemble(&arch(), &train_set, &cfg(), &grid, Selection::MaxLogit).unwrap();
    assert_eq!(ens, again);
}

/// Accuracy recomputed member by member without going through `predict`.
#[test]
fn predict_accuracy_matches_brute_force_evaluation() {
    let (train_set, test_set) = setup();
    let grid = [1.0, 1e-2, 1e-4];
    for selection in [Selection::MaxLogit, Selection::MaxSoftmax] {
        let ens = train_ensemble(&arch(), &train_set, &cfg(), &grid, selection).unwrap();
        let mut hits = 0;
        for ex in &test_set {
            let mut best: Option<(f64, usize)> = None;
            for m in ens.members() {
                let logits = m.net.logits(&ex.x).unwrap();
                let score = match selection {
                    Selection::MaxLogit => logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    Selection::MaxSoftmax => {
                        let mx = logits.max();
                        let s: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
                        1.0 / s
                    }
                };
                let mut class = 0;
                for j in 1..logits.len() {
                    if logits[j] > logits[class] {
                        class = j;
                    }
                }
                if best.is_none_or(|(b, _)| score > b) {
                    best = Some((score, class));
                }
            }
            hits += usize::from(best.unwrap().1 == ex.y);
        }
        let brute = hits as f64 / test_set.len() as f64;
        assert!((ens.accuracy(&test_set).unwrap() - brute).abs() < 1e-12, "{selection:?}");
    }
}

#[test]
fn permuting_members_permutes_selection() {
    let (train_set, test_set) = setup();
    let ens = train_ensemble(&arch(), &train_set, &cfg(), &[1.0, 0.1, 0.01], Selection::MaxLogit).unwrap();
    let perm = [2, 0, 1];
    let permuted = EnsembleModel::new(perm.iter().map(|&i| ens.members()[i].clone()).collect(), Selection::MaxLogit).unwrap();
    for ex in test_set.iter().take(100) {
        let a = ens.select(&ex.x).unwrap();
        let b = permuted.select(&ex.x).unwrap();
        assert_eq!(perm[b], a);
        assert_eq!(ens.predict(&ex.x).unwrap(), permuted.predict(&ex.x).unwrap());
    }
}

#[test]
fn identical_members_predict_like_one() {
    let (train_set, test_set) = setup();
    let net = train(&Network::init(&arch(), 1).unwrap(), &train_set, &cfg()).unwrap().net;
    let members = (0..3).map(|s| Member { gamma: 1.0, seed: s, net: net.clone() }).collect();
    let ens = EnsembleModel::new(members, Selection::MaxLogit).unwrap();
    for ex in test_set.iter().take(100) {
        assert_eq!(ens.select(&ex.x).unwrap(), 0);
        assert_eq!(ens.predict(&ex.x).unwrap(), net.predict(&ex.x).unwrap());
    }
}

#[test]
fn baseline_ensemble_differs_only_in_seed() {
    let (train_set, _) = setup();
    let ens = train_baseline_ensemble(&arch(), &train_set, &cfg(), 3, Selection::MaxLogit).unwrap();
    assert_eq!(ens.len(), 3);
    for (i, m) in ens.members().iter().enumerate() {
        assert_eq!(m.gamma, 0.0);
        assert_eq!(m.seed, 21 ^ i as u64);
    }
    assert_ne!(ens.members()[0].net, ens.members()[1].net);
}
