use advaug_core::data::{dataset_from_bytes, dataset_to_bytes, Dataset};
use advaug_core::ensemble::{EnsembleModel, Member, Selection};
use advaug_core::net::{
    grad_z_loss, hessian_z_loss, loss_z, model_from_bytes, model_to_bytes, softmax_probs, Architecture, Dense,
};
use advaug_core::surrogate::lipschitz::{l0_bound, l_theta, op_norm};
use advaug_core::surrogate::{ascend_x, check_sandwich, maximize_z_exact, SoftmaxLoss};
use advaug_core::transport::{cost, wasserstein, Atom, DiscreteDistribution, TransportCost};
use advaug_core::{Activation, LabeledExample, Network};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;

fn softmax_case() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>, usize)> {
    (1usize..=4, 2usize..=5).prop_flat_map(|(p, m)| {
        (
            prop::collection::vec(-3.0f64..3.0, p * m),
            prop::collection::vec(-3.0f64..3.0, p),
            0..m,
        )
            .prop_map(move |(t, z, y)| (DMatrix::from_row_slice(p, m, &t), DVector::from_vec(z), y))
    })
}

fn linear_net(theta: &[f64]) -> Network {
    let layer = Dense {
        weights: DMatrix::identity(2, 2),
        bias: DVector::zeros(2),
        activation: Activation::Identity,
    };
    Network::new(vec![layer], DMatrix::from_row_slice(2, 2, theta)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_is_a_distribution_and_loss_nonnegative((theta, z, y) in softmax_case()) {
        let p = softmax_probs(&theta, &z);
        prop_assert!((p.sum() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!(loss_z(&theta, &z, y) >= 0.0);
    }

    #[test]
    fn derivatives_respect_lipschitz_constants((theta, z, y) in softmax_case()) {
        let g = grad_z_loss(&theta, &z, y);
        prop_assert!(g.norm() <= l0_bound(&theta) + 1e-12);
        let h = hessian_z_loss(&theta, &z);
        prop_assert!((&h - h.transpose()).abs().max() < 1e-14);
        let eig = SymmetricEigen::new(h.clone()).eigenvalues;
        prop_assert!(eig.min() >= -1e-10);
        prop_assert!(op_norm(&h) <= l_theta(&theta) + 1e-12);
    }

    #[test]
    fn surrogate_sits_in_the_regularizer_window((theta, z, y) in softmax_case(), mult in 1.5f64..50.0) {
        let l = l_theta(&theta);
        prop_assume!(l > 1e-6);
        let gamma = mult * l;
        let s = maximize_z_exact(&SoftmaxLoss::new(theta.clone(), y), &z, gamma, 1e-10).unwrap();
        prop_assert!(s.phi >= s.loss);
        let r = check_sandwich(&theta, &z, y, gamma).unwrap();
        prop_assert!(r.pass, "{:?}", r);
    }

    #[test]
    fn cost_is_symmetric_and_label_aware(
        a in prop::collection::vec(-5.0f64..5.0, 3),
        b in prop::collection::vec(-5.0f64..5.0, 3),
        ya in 0usize..3, yb in 0usize..3,
    ) {
        let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
        let ab = cost(&a, ya, &b, yb).unwrap();
        prop_assert_eq!(ab, cost(&b, yb, &a, ya).unwrap());
        match ab {
            TransportCost::Finite(c) => { prop_assert_eq!(ya, yb); prop_assert!(c >= 0.0); }
            TransportCost::Infeasible => prop_assert_ne!(ya, yb),
        }
    }

    #[test]
    fn wasserstein_to_itself_is_zero(points in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, 0usize..2), 1..8)) {
        let atoms = points.iter().map(|&(u, v, y)| Atom::new(DVector::from_vec(vec![u, v]), y)).collect();
        let p = DiscreteDistribution::uniform(atoms).unwrap();
        let w = wasserstein(&p, &p).unwrap().value().unwrap();
        prop_assert!(w.abs() < 1e-12);
    }

    #[test]
    fn model_bytes_round_trip(
        d in 1usize..5, h in 1usize..6, p in 1usize..4, m in 2usize..5, seed in any::<u64>(), relu in any::<bool>(),
    ) {
        let arch = Architecture {
            input_dim: d,
            hidden: vec![h],
            feature_dim: p,
            n_classes: m,
            activation: if relu { Activation::Relu } else { Activation::Tanh },
        };
        let net = Network::init(&arch, seed).unwrap();
        prop_assert_eq!(model_from_bytes(&model_to_bytes(&net)).unwrap(), net);
    }

    #[test]
    fn dataset_bytes_round_trip(rows in prop::collection::vec((prop::collection::vec(-1e6f32..1e6, 3), 0usize..4), 0..40)) {
        let examples = rows
            .into_iter()
            .map(|(x, y)| LabeledExample::new(x.into_iter().map(f64::from).collect(), y))
            .collect();
        let ds = Dataset::new(3, 4, examples).unwrap();
        prop_assert_eq!(dataset_from_bytes(&dataset_to_bytes(&ds)).unwrap(), ds);
    }

    #[test]
    fn zero_step_ascent_returns_the_start(x in prop::collection::vec(-3.0f64..3.0, 2), y in 0usize..2, gamma in 0.0f64..10.0) {
        let net = linear_net(&[1.0, -1.0, 0.5, 2.0]);
        let ex = LabeledExample::new(x, y);
        prop_assert_eq!(ascend_x(&net, &ex, &ex, gamma, 0.0, 5).unwrap(), ex);
    }

    #[test]
    fn selection_is_permutation_covariant(
        thetas in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 4), 1..5),
        x in prop::collection::vec(-2.0f64..2.0, 2),
        rot in 0usize..5,
    ) {
        let members: Vec<Member> = thetas
            .iter()
            .enumerate()
            .map(|(i, t)| Member { gamma: i as f64, seed: 0, net: linear_net(t) })
            .collect();
        let n = members.len();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let ens = EnsembleModel::new(members.clone(), Selection::MaxLogit).unwrap();
        let permuted = EnsembleModel::new(perm.iter().map(|&i| members[i].clone()).collect(), Selection::MaxLogit).unwrap();
        let scores = ens.scores(&x).unwrap();
        let a = ens.select(&x).unwrap();
        let b = permuted.select(&x).unwrap();
        // with ties, each picks its own lowest index among the maximizers
        prop_assert_eq!(scores[perm[b]], scores[a]);
        prop_assert!(scores.iter().all(|&s| s <= scores[a]));
        prop_assert_eq!(ens.select(&x).unwrap(), a);
    }
}
