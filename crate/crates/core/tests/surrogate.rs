mod common;

use advaug_core::net::{data_dependent_regularizer, Architecture, Dense};
use advaug_core::surrogate::lipschitz::{empirical_hessian_lipschitz, l_theta};
use advaug_core::surrogate::{
    ascend_x_with, envelope_grad_check, maximize_z_exact, newton_proxy, CostSpace, PointwiseLoss, SoftmaxLoss,
};
use advaug_core::verify::random_softmax_instance;
use advaug_core::{Activation, LabeledExample, Network};
use nalgebra::{DMatrix, DVector};

#[test]
fn exact_solver_matches_grid_search_at_gamma_eight() {
    let theta = DMatrix::identity(2, 2);
    for (z0, y) in [([0.0, 0.0], 0), ([0.5, -0.3], 1), ([-1.0, 2.0], 0), ([3.0, 3.0], 1)] {
        let z0 = DVector::from_row_slice(&z0);
        let sol = maximize_z_exact(&SoftmaxLoss::new(theta.clone(), y), &z0, 8.0, 1e-10).unwrap();
        let (phi, z) = common::grid_search_phi(&theta, &z0, y, 8.0);
        assert!((sol.phi - phi).abs() < 1e-6, "{} vs {phi}", sol.phi);
        assert!((sol.z_star() - z).norm() < 1e-5);
    }
}

#[test]
fn exact_solver_matches_grid_search_on_random_instances() {
    for seed in 0..10 {
        let (theta, z0, y) = random_softmax_instance(seed, 2, 3);
        let gamma = 2.0 * l_theta(&theta);
        let sol = maximize_z_exact(&SoftmaxLoss::new(theta.clone(), y), &z0, gamma, 1e-10).unwrap();
        let (phi, _) = common::grid_search_phi(&theta, &z0, y, gamma);
        assert!((sol.phi - phi).abs() < 1e-6, "seed {seed}: {} vs {phi}", sol.phi);
    }
}

#[test]
fn hessian_lipschitz_estimate_is_stable_across_seeds() {
    for seed in 0..5 {
        let (theta, _, _) = random_softmax_instance(100 + seed, 3, 3);
        let a = empirical_hessian_lipschitz(&theta, 10_000, 1);
        let b = empirical_hessian_lipschitz(&theta, 10_000, 2);
        assert!((a - b).abs() <= 0.1 * a.max(b), "{a} vs {b}");
    }
}

#[test]
fn surrogate_decreases_in_gamma_and_gap_approaches_half_regularizer_over_gamma() {
    for seed in 0..10 {
        let (theta, z0, y) = random_softmax_instance(200 + seed, 3, 4);
        let l = l_theta(&theta);
        let loss = SoftmaxLoss::new(theta.clone(), y);
        let mut prev = f64::INFINITY;
        for mult in [1.5, 3.0, 10.0, 100.0, 1e4] {
            let s = maximize_z_exact(&loss, &z0, mult * l, 1e-10).unwrap();
            assert!(s.phi >= s.loss);
            assert!(s.phi <= prev + s.epsilon_cert);
            prev = s.phi;
        }
        let gamma = 1e4 * l;
        let gap = maximize_z_exact(&loss, &z0, gamma, 1e-9).unwrap().gap();
        let r = data_dependent_regularizer(&theta, &z0, y);
        assert!((2.0 * gamma * gap / r - 1.0).abs() < 1e-3, "seed {seed}");
    }
}

#[test]
fn newton_proxy_error_shrinks_faster_than_first_order_step() {
    let (theta, z0, y) = random_softmax_instance(7, 3, 3);
    let loss = SoftmaxLoss::new(theta.clone(), y);
    let l = l_theta(&theta);
    let mut prev = f64::INFINITY;
    for mult in [2.0, 10.0, 100.0] {
        let gamma = mult * l;
        let exact = maximize_z_exact(&loss, &z0, gamma, 1e-12).unwrap().z_star();
        let newton = (newton_proxy(&loss, &z0, gamma).unwrap() - &exact).norm();
        let first = (&z0 + loss.grad(&z0) / gamma - &exact).norm();
        assert!(newton < first);
        assert!(newton < prev);
        prev = newton;
    }
}

fn identity_features(m: usize) -> Network {
    let layer = Dense {
        weights: DMatrix::identity(2, 2),
        bias: DVector::zeros(2),
        activation: Activation::Identity,
    };
    Network::new(vec![layer], DMatrix::from_fn(2, m, |i, j| ((i + 2 * j) as f64).sin())).unwrap()
}

#[test]
fn pixel_and_semantic_costs_coincide_when_features_are_inputs() {
    let net = identity_features(3);
    let ex = LabeledExample::new(vec![0.2, -0.7], 1);
    for gamma in [0.5, 1e4] {
        let a = ascend_x_with(&net, &ex, &ex, gamma, 1e-5, 20, CostSpace::Semantic, true).unwrap();
        let b = ascend_x_with(&net, &ex, &ex, gamma, 1e-5, 20, CostSpace::Pixel, true).unwrap();
        for (u, v) in a.example.x.iter().zip(&b.example.x) {
            assert!((u - v).abs() < 1e-14);
        }
    }
}

#[test]
fn large_penalty_keeps_ascent_near_anchor_in_both_spaces() {
    let arch = Architecture {
        input_dim: 2,
        hidden: vec![6],
        feature_dim: 3,
        n_classes: 3,
        activation: Activation::Tanh,
    };
    let net = Network::init(&arch, 4).unwrap();
    let ex = LabeledExample::new(vec![0.4, 0.1], 2);
    let grad = net.grad_input_loss(&ex).unwrap().norm();
    for space in [CostSpace::Semantic, CostSpace::Pixel] {
        let out = ascend_x_with(&net, &ex, &ex, 1e4, 1e-6, 15, space, false).unwrap();
        let moved: f64 = out.example.x.iter().zip(&ex.x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(moved <= 15.0 * 1e-6 * grad * 1.01 + 1e-15, "{space:?}: moved {moved}");
    }
}

#[test]
fn small_step_ascent_never_decreases_the_penalized_objective() {
    let arch = Architecture::default_for(2, 4, 3);
    for seed in 0..5 {
        let net = Network::init(&arch, seed).unwrap();
        let ex = LabeledExample::new(vec![0.3 * seed as f64, -0.5], (seed % 3) as usize);
        let trace = ascend_x_with(&net, &ex, &ex, 1.0, 1e-3, 50, CostSpace::Semantic, true).unwrap();
        for w in trace.objective.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "{w:?}");
        }
        assert!(trace.objective.last() > trace.objective.first());
    }
}

#[test]
fn envelope_identity_on_random_networks() {
    let arch = Architecture {
        input_dim: 2,
        hidden: vec![5],
        feature_dim: 3,
        n_classes: 2,
        activation: Activation::Tanh,
    };
    for seed in 0..3 {
        let net = Network::init(&arch, seed).unwrap();
        let ex = LabeledExample::new(vec![0.5, -1.0], (seed % 2) as usize);
        let gamma = 10.0 * l_theta(net.theta_c());
        let r = envelope_grad_check(&net, &ex, gamma).unwrap();
        assert!(r.rel_error <= 1e-4, "{}", r.rel_error);
    }
}
