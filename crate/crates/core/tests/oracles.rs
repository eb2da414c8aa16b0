//! Values checked against independent computations rather than against the
//! library's own formulas.

use peerhedge_core::bounds::{sigma_g_paper, theorem1_bound};
use peerhedge_core::estimation::{Moments, TwoGroupEstimator};
use peerhedge_core::peer_score::f_term;
use peerhedge_core::{
    BoundInputs, ImportanceWeightedEstimator, NoiseChannel, Outcome, Probability, PsiParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn f_term_extremes_by_grid_search() {
    // Brute-force the extremes of F(0.2, p) on a fine grid, independent of
    // the closed form used by the library.
    let eta: f64 = 0.2;
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for i in 0..=100_000 {
        let p = i as f64 / 100_000.0;
        // Expand F from its definition as the remainder of the quadratic
        // expansion at q = 0: (p̂ - 0)² - (1 - 2η) p².
        let p_hat = (1.0 - 2.0 * eta) * p + eta;
        let f = p_hat * p_hat - (1.0 - 2.0 * eta) * p * p;
        assert!((f - f_term(eta, p)).abs() < 1e-12);
        max = max.max(f);
        min = min.min(f);
    }
    assert!((max - 0.1).abs() < 1e-9);
    assert!((min - 0.04).abs() < 1e-12);
    assert!((sigma_g_paper(eta, 0.0, 1.0) - 4.1).abs() < 1e-9);
}

#[test]
fn forward_simulated_moments() {
    // P0 = P(y = 0) = 0.3, both groups flip at 0.2.
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let ch = NoiseChannel::Symmetric { eta: 0.2 };
    let mut est = TwoGroupEstimator::with_partition(vec![0], vec![1], 2).unwrap();
    let mut m = Moments {
        c1: 0.0,
        c2: 0.0,
        c3: 0.0,
    };
    for _ in 0..1_000_000 {
        let y = Outcome::from_bool(rng.random::<f64>() < 0.7);
        m = est.update(ch.sample(y, 1, &mut rng), ch.sample(y, 1, &mut rng));
    }
    assert!((m.c1 - 0.62).abs() < 0.005);
    assert!((m.c2 - 0.62).abs() < 0.005);
    assert!((m.c3 - 0.46).abs() < 0.005);
    let s = est.solve();
    assert!(s.is_ok());
    assert!((s.p0 - 0.3).abs() < 0.02 && (s.eta_a - 0.2).abs() < 0.02);
}

#[test]
fn importance_weighted_unbiased_over_short_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ch = NoiseChannel::Symmetric { eta: 0.2 };
    let runs = 10_000;
    let mut finals = Vec::with_capacity(runs);
    for _ in 0..runs {
        let mut est = ImportanceWeightedEstimator::new(Probability::new(0.3).unwrap()).unwrap();
        let mut last = 0.0;
        for _ in 0..50 {
            let y = Outcome::from_bool(rng.random_bool(0.5));
            let y_hat = ch.sample(y, 1, &mut rng);
            let shown = rng.random::<f64>() < 0.3;
            last = est.update(y_hat, shown.then_some(y));
        }
        finals.push(last);
    }
    let mean = finals.iter().sum::<f64>() / runs as f64;
    let sd = (finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs - 1) as f64).sqrt();
    assert!((mean - 0.2).abs() < 3.0 * sd / (runs as f64).sqrt());
}

#[test]
fn theorem1_direct_composition() {
    // Recompose the bound from textbook pieces: Azuma radius
    // σ sqrt(2T ln(2/δ)) and tuned-Hedge regret sqrt(T ln N / 2).
    let (delta, eta, sigma, t, n) = (0.05f64, 0.2f64, 4.1f64, 10_000usize, 10usize);
    let azuma = |s: f64| s * (2.0 * t as f64 * (2.0 / delta).ln()).sqrt();
    let hedge = (t as f64 * (n as f64).ln() / 2.0).sqrt();
    let expected = (2.0 * azuma(sigma) + hedge) / (1.0 - 2.0 * eta) + 2.0 * azuma(2.0);
    let got = theorem1_bound(&BoundInputs {
        delta,
        sigma_g: sigma,
        horizon: t,
        experts: n,
        psi: PsiParams::Symmetric { eta },
        epsilon: None,
        alpha: 3.0,
        max_eta_tilde: 0.0,
        score_range: 1.0,
        delta_g: 0.0,
    })
    .unwrap();
    assert!((got - expected).abs() < 1e-9);
    assert!((got - 4977.456).abs() < 1e-3, "{got}");
}
