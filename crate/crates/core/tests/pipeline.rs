use std::sync::Arc;

use heavytail::estimate::{choose_grouping, estimate_alpha, hill_estimate};
use heavytail::gradnoise::{noise_bundle, synth_dataset, Mlp, Model, SynthSpec};
use heavytail::meta::{double_well_pi, generator, stationary, Landscape1D};
use heavytail::sde::{simulate, Quadratic, SdeConfig};
use heavytail::stable::{sample, StableParams};
use heavytail::stats::{mean, variance};

/// Scale of the stationary law of `w <- (1 - eta) w + eps eta^(1/alpha) S`.
fn ou_scale(alpha: f64, eps: f64, eta: f64) -> f64 {
    eps * eta.powf(1.0 / alpha) / (1.0 - (1.0 - eta).powf(alpha)).powf(1.0 / alpha)
}

fn ou_states(alpha: f64, eps: f64, eta: f64, steps: u64, seed: u64) -> Vec<f64> {
    let cfg = SdeConfig::new(Arc::new(Quadratic { dim: 1 }), alpha, eps, eta, steps, vec![0.0], seed);
    let traj = simulate(&cfg).unwrap();
    let burn = traj.len() / 10;
    traj.states().skip(burn).map(|w| w[0]).collect()
}

#[test]
fn gaussian_ou_variance() {
    let (eps, eta) = (0.5, 0.01);
    let w = ou_states(2.0, eps, eta, 2_000_000, 1);
    let want = 2.0 * ou_scale(2.0, eps, eta).powi(2);
    let got = variance(&w);
    assert!((got / want - 1.0).abs() < 0.05, "{got} vs {want}");
}

#[test]
fn stable_ou_char_fn() {
    let (alpha, eps, eta) = (1.5, 1.0, 0.01);
    let w = ou_states(alpha, eps, eta, 2_000_000, 2);
    let s = ou_scale(alpha, eps, eta);
    for omega in [0.5, 1.0, 2.0] {
        let emp = mean(&w.iter().map(|x| (omega * x).cos()).collect::<Vec<_>>());
        let want = (-(s * omega).powf(alpha)).exp();
        assert!((emp - want).abs() < 0.03, "omega {omega}: {emp} vs {want}");
    }
}

#[test]
fn estimator_and_hill_agree_on_samples() {
    for alpha in [0.7, 1.2, 1.7] {
        let x = sample(StableParams::new(alpha, 2.5).unwrap(), 200_000, 40).unwrap();
        let a = estimate_alpha(x.values(), &choose_grouping(x.values().len()).unwrap())
            .unwrap()
            .alpha_hat;
        assert!((a - alpha).abs() < 0.05, "{alpha}: {a}");
        let h = hill_estimate(x.values(), 2000).unwrap();
        assert!((h - alpha).abs() < 0.25, "{alpha}: hill {h}");
    }
}

#[test]
fn stationary_matches_closed_form_for_double_wells() {
    for (m1, m2, alpha) in [(-1.0, 2.0, 1.0), (-3.0, 0.5, 1.5), (-0.2, 4.0, 0.6)] {
        let (p1, p2) = double_well_pi(m1, m2, alpha).unwrap();
        let q = generator(&Landscape1D::double_well(m1, m2).unwrap(), alpha).unwrap();
        let pi = stationary(&q).unwrap().pi;
        assert!((pi[0] - p1).abs() < 1e-12 && (pi[1] - p2).abs() < 1e-12);
    }
}

#[test]
fn full_batch_noise_is_zero() {
    let data = synth_dataset(200, 5, 3, SynthSpec::Blobs { separation: 3.0 }, 3).unwrap();
    let model = Mlp::linear(5, 3).unwrap();
    let w = model.init(1);
    let b = noise_bundle(&model, &w, &data, 200, 4).unwrap();
    assert!(b.values.iter().all(|v| v.abs() < 1e-12));
}
