//! Peer scores: surrogate losses evaluated against the peer reference
//! answer instead of the hidden outcome, together with their calibrating
//! divergence `g` and the two label-flipping transforms.
//!
//! Symmetric noise at rate `η` is undone by adding `η · c(p)` to the loss,
//! where `c` is the loss's noise correction (`2p(1 - p)` for squared loss).
//! The resulting score is g-calibrated with `g = (1 - 2η) f`. Asymmetric
//! noise uses the unbiased surrogate
//! `(1 - η_{1-ŷ}) ℓ(p, ŷ) - η_ŷ ℓ(p, 1 - ŷ)`, whose conditional
//! expectation is `(1 - η0 - η1) ℓ(p, y)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{CalibrationPair, LossFunction, PsiParams};
use crate::probability::{Outcome, Probability};

/// Estimated rates are clamped into `[0, ESTIMATE_CEILING]` before use.
pub const ESTIMATE_CEILING: f64 = 0.5 - 1e-6;

#[inline]
pub fn clamp_estimate(eta_hat: f64) -> f64 {
    if eta_hat.is_nan() {
        0.0
    } else {
        eta_hat.clamp(0.0, ESTIMATE_CEILING)
    }
}

/// Which noise correction the score applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Correction {
    Symmetric {
        eta: f64,
    },
    Asymmetric {
        eta0: f64,
        eta1: f64,
    },
    /// Symmetric correction with the most recent estimate available before
    /// the round; `initial_eta` is used until the estimator reports.
    Estimated {
        #[serde(default)]
        initial_eta: f64,
    },
}

/// Label-flipping transform applied to each round before scoring.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FlipMode {
    #[default]
    None,
    /// With probability 1/2 complement forecasts, outcome and reference.
    Symmetrize,
    /// Complement the reference with probability `flip_prob`.
    Homogenize { flip_prob: f64 },
}

fn check_symmetric_rate(eta: f64) -> Result<()> {
    if eta.is_finite() && (0.0..0.5).contains(&eta) {
        Ok(())
    } else {
        Err(Error::config(format!(
            "symmetric correction needs 0 <= eta < 0.5 (the bound diverges as eta -> 1/2), got {eta}"
        )))
    }
}

fn check_asymmetric_rates(eta0: f64, eta1: f64) -> Result<()> {
    if eta0.is_finite() && eta1.is_finite() && eta0 >= 0.0 && eta1 >= 0.0 && eta0 + eta1 < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "asymmetric correction needs eta0, eta1 >= 0 and eta0 + eta1 < 1, got ({eta0}, {eta1})"
        )))
    }
}

/// Symmetric-noise score on raw reals: `ℓ(p, ŷ) + η c(p)`.
#[inline]
pub fn symmetric_score(loss: &LossFunction, p: f64, y_hat: Outcome, eta: f64) -> f64 {
    loss.value(p, y_hat) + eta * loss.noise_correction(p)
}

/// Asymmetric-noise surrogate on raw reals.
#[inline]
pub fn asymmetric_score(loss: &LossFunction, p: f64, y_hat: Outcome, eta0: f64, eta1: f64) -> f64 {
    // (η_{1-ŷ}, η_ŷ) with η0 = P(ŷ=1 | y=0) and η1 = P(ŷ=0 | y=1).
    let (eta_other, eta_same) = match y_hat {
        Outcome::One => (eta0, eta1),
        Outcome::Zero => (eta1, eta0),
    };
    (1.0 - eta_other) * loss.value(p, y_hat) - eta_same * loss.value(p, y_hat.flip())
}

/// `s(p, ŷ) = ℓ(p, ŷ) + 2η p(1 - p)` for squared loss; the general form
/// uses the loss's own noise correction.
pub fn peer_score_symmetric(
    loss: &LossFunction,
    p: Probability,
    y_hat: Outcome,
    eta: f64,
) -> Result<f64> {
    check_symmetric_rate(eta)?;
    Ok(symmetric_score(loss, p.value(), y_hat, eta))
}

/// `s(p, ŷ) = (1 - η_{1-ŷ}) ℓ(p, ŷ) - η_ŷ ℓ(p, 1 - ŷ)`. May be negative.
pub fn peer_score_asymmetric(
    loss: &LossFunction,
    p: Probability,
    y_hat: Outcome,
    eta0: f64,
    eta1: f64,
) -> Result<f64> {
    check_asymmetric_rates(eta0, eta1)?;
    Ok(asymmetric_score(loss, p.value(), y_hat, eta0, eta1))
}

/// `g(p', p)`: the exact difference of expected symmetric scores when
/// `ŷ ~ Bernoulli((1 - 2η) p + η)`.
pub fn g_symmetric(
    loss: &LossFunction,
    p_prime: Probability,
    p: Probability,
    eta: f64,
) -> Result<f64> {
    check_symmetric_rate(eta)?;
    Ok(g_symmetric_raw(loss, p_prime.value(), p.value(), eta))
}

#[inline]
pub(crate) fn g_symmetric_raw(loss: &LossFunction, p_prime: f64, p: f64, eta: f64) -> f64 {
    let p_hat = (1.0 - 2.0 * eta) * p + eta;
    let diff =
        |y: Outcome| symmetric_score(loss, p_prime, y, eta) - symmetric_score(loss, p, y, eta);
    p_hat * diff(Outcome::One) + (1.0 - p_hat) * diff(Outcome::Zero)
}

/// `F(η, p) = -η(1 - η)(1 - 2p)² + 2ηp² - 2ηp + η`.
///
/// Kept for the `σ_g` recipe. Note that `(p̂ - q)² = (1 - 2η)(p - q)²
/// - 2η q(1 - q) + F(η, p)`; the expansion enters with a plus sign.
pub fn f_term(eta: f64, p: f64) -> f64 {
    let u = 1.0 - 2.0 * p;
    -eta * (1.0 - eta) * u * u + 2.0 * eta * p * p - 2.0 * eta * p + eta
}

/// Induced reference error rate after homogenization:
/// `η̃ = η (1 - flip_prob) + (1 - η) flip_prob`.
#[inline]
pub fn homogenized_rate(eta: f64, flip_prob: f64) -> f64 {
    eta * (1.0 - flip_prob) + (1.0 - eta) * flip_prob
}

/// Complement `ŷ` with probability `flip_prob`.
pub fn homogenize_flip<R: Rng + ?Sized>(
    y_hat: Outcome,
    flip_prob: Probability,
    rng: &mut R,
) -> Outcome {
    if rng.random::<f64>() < flip_prob.value() {
        y_hat.flip()
    } else {
        y_hat
    }
}

/// `ψ⁻¹(x)`: `x / (1 - 2η)` or `x / (1 - η0 - η1)`.
pub fn psi_inverse(x: f64, params: &CalibrationPair) -> Result<f64> {
    params.psi_inverse(x)
}

/// What the learner sees in one round, after any flips.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundView {
    pub t: usize,
    pub predictions: Vec<f64>,
    /// Reference label used for scoring (`ỹ_t` once a homogenizing flip ran).
    pub y_hat: Outcome,
    /// Hidden outcome; simulation only, never read by the learner.
    pub outcome: Option<Outcome>,
    /// Set whenever symmetrization ran this round.
    pub symmetrized: Option<bool>,
    /// Set whenever a homogenizing flip ran this round.
    pub homogenized: Option<bool>,
}

impl RoundView {
    pub fn new(t: usize, predictions: Vec<f64>, y_hat: Outcome, outcome: Option<Outcome>) -> Self {
        RoundView {
            t,
            predictions,
            y_hat,
            outcome,
            symmetrized: None,
            homogenized: None,
        }
    }

    fn complemented(mut self) -> Self {
        for p in &mut self.predictions {
            *p = 1.0 - *p;
        }
        self.y_hat = self.y_hat.flip();
        self.outcome = self.outcome.map(Outcome::flip);
        self
    }
}

/// With probability 1/2 complement every forecast, the outcome and the
/// reference. The coin is recorded in `symmetrized`.
pub fn symmetrize_round<R: Rng + ?Sized>(round: RoundView, rng: &mut R) -> RoundView {
    let flip = rng.random_bool(0.5);
    let mut out = if flip { round.complemented() } else { round };
    out.symmetrized = Some(flip);
    out
}

/// Homogenizing flip applied to a round view; recorded in `homogenized`.
pub fn homogenize_round<R: Rng + ?Sized>(
    mut round: RoundView,
    flip_prob: Probability,
    rng: &mut R,
) -> RoundView {
    let before = round.y_hat;
    round.y_hat = homogenize_flip(before, flip_prob, rng);
    round.homogenized = Some(round.y_hat != before);
    round
}

/// Full description of a peer score: base loss, correction and flips.
#[derive(Debug, Clone)]
pub struct PeerScoreSpec {
    pub base_loss: LossFunction,
    pub correction: Correction,
    pub flips: FlipMode,
}

impl PeerScoreSpec {
    pub fn new(base_loss: LossFunction, correction: Correction, flips: FlipMode) -> Result<Self> {
        match &correction {
            Correction::Symmetric { eta } => check_symmetric_rate(*eta)?,
            Correction::Asymmetric { eta0, eta1 } => check_asymmetric_rates(*eta0, *eta1)?,
            Correction::Estimated { initial_eta } => {
                if !initial_eta.is_finite() || *initial_eta < 0.0 || *initial_eta > ESTIMATE_CEILING
                {
                    return Err(Error::config(format!(
                        "initial estimate must lie in [0, {ESTIMATE_CEILING}], got {initial_eta}"
                    )));
                }
            }
        }
        if let FlipMode::Homogenize { flip_prob } = flips {
            if !(flip_prob.is_finite() && (0.0..0.5).contains(&flip_prob)) {
                return Err(Error::config(format!(
                    "homogenizing flip_prob must lie in [0, 0.5), got {flip_prob}"
                )));
            }
        }
        Ok(PeerScoreSpec {
            base_loss,
            correction,
            flips,
        })
    }

    pub fn is_estimated(&self) -> bool {
        matches!(self.correction, Correction::Estimated { .. })
    }

    /// Noise rate the symmetric correction uses this round. `estimate` is the
    /// latest estimator output (ignored for known corrections).
    pub fn effective_eta(&self, estimate: Option<f64>) -> Option<f64> {
        match self.correction {
            Correction::Symmetric { eta } => Some(eta),
            Correction::Asymmetric { .. } => None,
            Correction::Estimated { initial_eta } => {
                Some(clamp_estimate(estimate.unwrap_or(initial_eta)))
            }
        }
    }

    /// Score of forecast `p` against reference `y_hat`.
    #[inline]
    pub fn score(&self, p: f64, y_hat: Outcome, estimate: Option<f64>) -> f64 {
        match self.correction {
            Correction::Asymmetric { eta0, eta1 } => {
                asymmetric_score(&self.base_loss, p, y_hat, eta0, eta1)
            }
            _ => {
                let eta = self.effective_eta(estimate).unwrap_or(0.0);
                symmetric_score(&self.base_loss, p, y_hat, eta)
            }
        }
    }

    /// Smallest and largest score any forecast can receive, over both
    /// reference labels and (for estimated corrections) every admissible
    /// estimate. Scores are affine in the rate, so the rate extremes suffice.
    pub fn score_bounds(&self) -> (f64, f64) {
        let n = 1024;
        let etas: Vec<Option<f64>> = match self.correction {
            Correction::Estimated { .. } => vec![Some(0.0), Some(ESTIMATE_CEILING)],
            _ => vec![None],
        };
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..=n {
            let p = i as f64 / n as f64;
            for y in Outcome::BOTH {
                for eta in &etas {
                    let s = self.score(p, y, *eta);
                    lo = lo.min(s);
                    hi = hi.max(s);
                }
            }
        }
        (lo, hi)
    }

    /// Compatibility transform implied by a known correction.
    pub fn psi(&self) -> Option<PsiParams> {
        match self.correction {
            Correction::Symmetric { eta } => Some(PsiParams::Symmetric { eta }),
            Correction::Asymmetric { eta0, eta1 } => Some(PsiParams::Asymmetric { eta0, eta1 }),
            Correction::Estimated { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::SavagePotential;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SQ: LossFunction = LossFunction::Squared;

    fn p(v: f64) -> Probability {
        Probability::new(v).unwrap()
    }

    fn grid(n: usize) -> Vec<f64> {
        (0..=n).map(|i| i as f64 / n as f64).collect()
    }

    #[test]
    fn symmetric_examples() {
        let s = peer_score_symmetric(&SQ, p(0.5), Outcome::One, 0.25).unwrap();
        assert!((s - 0.375).abs() < 1e-15);
        for x in grid(16) {
            for y in Outcome::BOTH {
                assert_eq!(
                    peer_score_symmetric(&SQ, p(x), y, 0.0).unwrap(),
                    SQ.value(x, y)
                );
            }
        }
        for x in [0.0, 1.0] {
            for eta in [0.1, 0.3, 0.49] {
                for y in Outcome::BOTH {
                    assert_eq!(
                        peer_score_symmetric(&SQ, p(x), y, eta).unwrap(),
                        SQ.value(x, y)
                    );
                }
            }
        }
        assert!(matches!(
            peer_score_symmetric(&SQ, p(0.5), Outcome::One, 0.5),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn asymmetric_examples() {
        let s = peer_score_asymmetric(&SQ, p(0.8), Outcome::One, 0.1, 0.3).unwrap();
        assert!((s - (0.9 * 0.04 - 0.3 * 0.64)).abs() < 1e-15);
        assert!((s + 0.156).abs() < 1e-12);
        for x in grid(8) {
            for y in Outcome::BOTH {
                assert_eq!(
                    peer_score_asymmetric(&SQ, p(x), y, 0.0, 0.0).unwrap(),
                    SQ.value(x, y)
                );
            }
        }
        assert!(peer_score_asymmetric(&SQ, p(0.5), Outcome::One, 0.5, 0.5).is_err());
    }

    #[test]
    fn asymmetric_surrogate_is_unbiased() {
        let rates = [0.0, 0.1, 0.25, 0.4, 0.6];
        for x in grid(32) {
            for &e0 in &rates {
                for &e1 in &rates {
                    if e0 + e1 >= 1.0 {
                        continue;
                    }
                    for y in Outcome::BOTH {
                        let flip = match y {
                            Outcome::Zero => e0,
                            Outcome::One => e1,
                        };
                        let expect = (1.0 - flip) * asymmetric_score(&SQ, x, y, e0, e1)
                            + flip * asymmetric_score(&SQ, x, y.flip(), e0, e1);
                        let target = (1.0 - e0 - e1) * SQ.value(x, y);
                        assert!((expect - target).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn g_symmetric_examples() {
        for a in grid(16) {
            for b in grid(16) {
                let g0 = g_symmetric(&SQ, p(a), p(b), 0.0).unwrap();
                assert!((g0 - (a - b).powi(2)).abs() < 1e-12);
            }
            assert!(g_symmetric(&SQ, p(a), p(a), 0.3).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn g_is_psi_compatible_for_savage_losses() {
        let quartic = LossFunction::Savage(
            SavagePotential::new(
                |p| p.powi(4) + (1.0 - p).powi(4),
                |p| 4.0 * p.powi(3) - 4.0 * (1.0 - p).powi(3),
                0.5,
                -0.25,
            )
            .unwrap(),
        );
        for eta in [0.0, 0.1, 0.3, 0.45] {
            for a in grid(16) {
                for b in grid(16) {
                    let g = g_symmetric_raw(&quartic, a, b, eta);
                    let f = quartic.divergence(a, b);
                    assert!((g - (1.0 - 2.0 * eta) * f).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn f_term_examples() {
        for x in grid(8) {
            assert_eq!(f_term(0.0, x), 0.0);
        }
        assert!((f_term(0.2, 0.5) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn expansion_residual_is_forecast_independent() {
        // E[ℓ(q, ŷ)] - E[ℓ(p, ŷ)] - (1 - 2η)(p - q)² + 2η q(1 - q) must not
        // depend on q, and equals F(η, p) - η²(1 - 2p)².
        for eta in [0.05, 0.2, 0.45] {
            for pt in grid(16) {
                let p_hat = (1.0 - 2.0 * eta) * pt + eta;
                let residual = |q: f64| {
                    SQ.expected(q, p_hat)
                        - SQ.expected(pt, p_hat)
                        - (1.0 - 2.0 * eta) * (pt - q).powi(2)
                        + 2.0 * eta * q * (1.0 - q)
                };
                let r0 = residual(0.0);
                for q in grid(16) {
                    assert!((residual(q) - r0).abs() < 1e-12);
                }
                let closed = f_term(eta, pt) - eta * eta * (1.0 - 2.0 * pt).powi(2);
                assert!((r0 - closed).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetrize_examples() {
        let round = RoundView::new(4, vec![0.9, 0.2], Outcome::One, Some(Outcome::One));
        let mut flipped = None;
        let mut kept = None;
        for seed in 0..64 {
            let out = symmetrize_round(round.clone(), &mut ChaCha8Rng::seed_from_u64(seed));
            match out.symmetrized {
                Some(true) => flipped = Some(out),
                Some(false) => kept = Some(out),
                None => unreachable!(),
            }
        }
        let flipped = flipped.unwrap();
        assert!((flipped.predictions[0] - 0.1).abs() < 1e-15);
        assert!((flipped.predictions[1] - 0.8).abs() < 1e-15);
        assert_eq!(flipped.y_hat, Outcome::Zero);
        assert_eq!(flipped.outcome, Some(Outcome::Zero));
        let kept = kept.unwrap();
        assert_eq!(kept.predictions, round.predictions);
        assert_eq!(kept.y_hat, round.y_hat);
    }

    #[test]
    fn homogenize_examples() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            assert_eq!(
                homogenize_flip(Outcome::One, Probability::ZERO, &mut r),
                Outcome::One
            );
        }
        assert!((homogenized_rate(0.3, 0.25) - 0.4).abs() < 1e-15);
        let schedule = [0.0, 0.1, 0.35, 0.49];
        for fp in [0.0, 0.1, 0.25, 0.4, 0.49] {
            for a in schedule {
                for b in schedule {
                    let lhs = (homogenized_rate(a, fp) - homogenized_rate(b, fp)).abs();
                    assert!((lhs - (1.0 - 2.0 * fp) * (a - b).abs()).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn spec_validation_and_bounds() {
        assert!(
            PeerScoreSpec::new(SQ, Correction::Symmetric { eta: 0.5 }, FlipMode::None).is_err()
        );
        assert!(PeerScoreSpec::new(
            SQ,
            Correction::Asymmetric {
                eta0: 0.7,
                eta1: 0.3
            },
            FlipMode::None
        )
        .is_err());
        assert!(PeerScoreSpec::new(
            SQ,
            Correction::Symmetric { eta: 0.1 },
            FlipMode::Homogenize { flip_prob: 0.5 }
        )
        .is_err());
        let sym =
            PeerScoreSpec::new(SQ, Correction::Symmetric { eta: 0.3 }, FlipMode::None).unwrap();
        assert_eq!(sym.score_bounds(), (0.0, 1.0));
        let est = PeerScoreSpec::new(
            SQ,
            Correction::Estimated { initial_eta: 0.0 },
            FlipMode::None,
        )
        .unwrap();
        let (lo, hi) = est.score_bounds();
        assert!(lo.abs() < 1e-15 && (hi - 1.0).abs() < 1e-15);
        let asym = PeerScoreSpec::new(
            SQ,
            Correction::Asymmetric {
                eta0: 0.1,
                eta1: 0.3,
            },
            FlipMode::None,
        )
        .unwrap();
        let (lo, hi) = asym.score_bounds();
        assert!((lo + 0.3).abs() < 1e-12 && (hi - 0.9).abs() < 1e-12);
    }

    #[test]
    fn estimated_correction_clamps() {
        let est = PeerScoreSpec::new(
            SQ,
            Correction::Estimated { initial_eta: 0.1 },
            FlipMode::None,
        )
        .unwrap();
        assert_eq!(est.effective_eta(None), Some(0.1));
        assert_eq!(est.effective_eta(Some(0.7)), Some(ESTIMATE_CEILING));
        assert_eq!(est.effective_eta(Some(-0.2)), Some(0.0));
    }
}
