//! Proper losses on binary outcomes and their calibrating divergences.
//!
//! A loss `ℓ(p, y)` is f-calibrated when the excess expected loss of
//! forecasting `p'` while outcomes are drawn with probability `p` equals a
//! divergence `f(p', p)`. Squared loss is the running example; any bounded
//! proper loss can be built from a convex potential through its Savage
//! representation.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probability::{Outcome, Probability};

/// Resolution of the grids used for convexity and property checks.
pub const GRID_STEP: f64 = 1.0 / 256.0;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A convex potential `G` on `[0, 1]` with a caller-supplied (sub)gradient
/// `G'` and outcome-only offsets `φ(0)`, `φ(1)`.
///
/// The induced loss is `ℓ(p, y) = -G(p) - G'(p)(y - p) + φ(y)`.
#[derive(Clone)]
pub struct SavagePotential {
    potential: ScalarFn,
    derivative: ScalarFn,
    offset_zero: f64,
    offset_one: f64,
}

impl SavagePotential {
    pub fn new(
        potential: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
        offset_zero: f64,
        offset_one: f64,
    ) -> Result<Self> {
        let potential: ScalarFn = Arc::new(potential);
        let derivative: ScalarFn = Arc::new(derivative);
        check_midpoint_convex(&*potential, &*derivative)?;
        if !offset_zero.is_finite() || !offset_one.is_finite() {
            return Err(Error::config("savage offsets must be finite"));
        }
        Ok(SavagePotential {
            potential,
            derivative,
            offset_zero,
            offset_one,
        })
    }

    /// `G(p) = p² - p`, which generates squared loss exactly.
    pub fn brier() -> Self {
        SavagePotential::new(|p| p * p - p, |p| 2.0 * p - 1.0, 0.0, 0.0)
            .expect("quadratic potential is convex")
    }

    #[inline]
    pub fn potential(&self, p: f64) -> f64 {
        (self.potential)(p)
    }

    #[inline]
    pub fn derivative(&self, p: f64) -> f64 {
        (self.derivative)(p)
    }

    #[inline]
    fn offset(&self, y: Outcome) -> f64 {
        match y {
            Outcome::Zero => self.offset_zero,
            Outcome::One => self.offset_one,
        }
    }
}

impl fmt::Debug for SavagePotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SavagePotential")
            .field("offset_zero", &self.offset_zero)
            .field("offset_one", &self.offset_one)
            .finish_non_exhaustive()
    }
}

fn check_midpoint_convex(g: &dyn Fn(f64) -> f64, dg: &dyn Fn(f64) -> f64) -> Result<()> {
    let n = (1.0 / GRID_STEP).round() as usize;
    let values: Vec<f64> = (0..=n).map(|i| g(i as f64 * GRID_STEP)).collect();
    if let Some(i) =
        (0..=n).find(|&i| !values[i].is_finite() || !dg(i as f64 * GRID_STEP).is_finite())
    {
        return Err(Error::config(format!(
            "savage potential or derivative is not finite at p = {}",
            i as f64 * GRID_STEP
        )));
    }
    for i in 1..n {
        let second = values[i - 1] - 2.0 * values[i] + values[i + 1];
        let scale = 1.0 + values[i - 1].abs() + values[i].abs() + values[i + 1].abs();
        if second < -1e-12 * scale {
            return Err(Error::config(format!(
                "savage potential is not convex near p = {}",
                i as f64 * GRID_STEP
            )));
        }
    }
    Ok(())
}

/// A proper loss on binary outcomes.
#[derive(Debug, Clone, Default)]
pub enum LossFunction {
    /// `(y - p)²`
    #[default]
    Squared,
    Savage(SavagePotential),
}

impl LossFunction {
    /// Loss of forecast `p` on outcome `y`, on raw reals.
    #[inline]
    pub fn value(&self, p: f64, y: Outcome) -> f64 {
        match self {
            LossFunction::Squared => {
                let d = y.as_f64() - p;
                d * d
            }
            LossFunction::Savage(s) => {
                -s.potential(p) - s.derivative(p) * (y.as_f64() - p) + s.offset(y)
            }
        }
    }

    /// `E_{y ~ truth}[ℓ(forecast, y)]`.
    #[inline]
    pub fn expected(&self, forecast: f64, truth: f64) -> f64 {
        truth * self.value(forecast, Outcome::One)
            + (1.0 - truth) * self.value(forecast, Outcome::Zero)
    }

    /// Excess expected loss of `forecast` over `truth` when `y ~ truth`.
    #[inline]
    pub fn divergence(&self, forecast: f64, truth: f64) -> f64 {
        truth * (self.value(forecast, Outcome::One) - self.value(truth, Outcome::One))
            + (1.0 - truth)
                * (self.value(forecast, Outcome::Zero) - self.value(truth, Outcome::Zero))
    }

    /// The p-dependent term that symmetric label noise adds to the expected
    /// loss, normalised to vanish at `p = 0`:
    /// `c(p) = [ℓ(0,0) + ℓ(0,1)] - [ℓ(p,0) + ℓ(p,1)]`.
    ///
    /// For squared loss this is `2p(1 - p)`.
    #[inline]
    pub fn noise_correction(&self, p: f64) -> f64 {
        match self {
            LossFunction::Squared => 2.0 * p * (1.0 - p),
            _ => {
                let both = |q: f64| self.value(q, Outcome::Zero) + self.value(q, Outcome::One);
                both(0.0) - both(p)
            }
        }
    }
}

/// `ℓ(p, y)`.
pub fn loss(loss_fn: &LossFunction, p: Probability, y: Outcome) -> f64 {
    loss_fn.value(p.value(), y)
}

/// `f(p', p) = E_{y~p}[ℓ(p', y)] - E_{y~p}[ℓ(p, y)]`.
pub fn f_divergence(loss_fn: &LossFunction, p_prime: Probability, p: Probability) -> f64 {
    loss_fn.divergence(p_prime.value(), p.value())
}

/// Noise parameters that fix the compatibility transform between the
/// peer-score divergence `g` and the loss divergence `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PsiParams {
    Symmetric { eta: f64 },
    Asymmetric { eta0: f64, eta1: f64 },
}

impl PsiParams {
    /// Slope of `ψ`: `1 - 2η` or `1 - η0 - η1`.
    pub fn slope(&self) -> f64 {
        match *self {
            PsiParams::Symmetric { eta } => 1.0 - 2.0 * eta,
            PsiParams::Asymmetric { eta0, eta1 } => 1.0 - eta0 - eta1,
        }
    }

    pub fn inverse(&self, x: f64) -> Result<f64> {
        let slope = self.slope();
        if slope.is_nan() || slope <= 0.0 {
            return Err(Error::config(format!(
                "ψ⁻¹ undefined: noise parameters {self:?} leave a non-positive slope {slope}"
            )));
        }
        Ok(x / slope)
    }
}

/// A loss together with the noise model that relates its divergence `f` to
/// the peer-score divergence `g = ψ ∘ f`.
#[derive(Debug, Clone)]
pub struct CalibrationPair {
    pub loss: LossFunction,
    pub psi: PsiParams,
}

impl CalibrationPair {
    pub fn new(loss: LossFunction, psi: PsiParams) -> Self {
        CalibrationPair { loss, psi }
    }

    pub fn f(&self, p_prime: f64, p: f64) -> f64 {
        self.loss.divergence(p_prime, p)
    }

    pub fn psi_inverse(&self, x: f64) -> Result<f64> {
        self.psi.inverse(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(step: f64) -> impl Iterator<Item = f64> + Clone {
        let n = (1.0 / step).round() as usize;
        (0..=n).map(move |i| i as f64 * step)
    }

    fn p(v: f64) -> Probability {
        Probability::new(v).unwrap()
    }

    #[test]
    fn squared_loss_values() {
        let sq = LossFunction::Squared;
        assert!((loss(&sq, p(0.7), Outcome::One) - 0.09).abs() < 1e-15);
        assert_eq!(loss(&sq, p(0.0), Outcome::Zero), 0.0);
    }

    #[test]
    fn squared_divergence_examples() {
        let sq = LossFunction::Squared;
        assert!((f_divergence(&sq, p(0.2), p(0.8)) - 0.36).abs() < 1e-15);
        assert_eq!(f_divergence(&sq, p(0.0), p(1.0)), 1.0);
        assert_eq!(f_divergence(&sq, p(0.37), p(0.37)), 0.0);
    }

    #[test]
    fn savage_brier_matches_squared_differences() {
        // Expanding -G - G'(y - p) for G = p² - p gives (y - p)² term by term.
        let sav = LossFunction::Savage(SavagePotential::brier());
        let sq = LossFunction::Squared;
        let d_sav = loss(&sav, p(0.7), Outcome::One) - loss(&sav, p(0.3), Outcome::One);
        let d_sq = loss(&sq, p(0.7), Outcome::One) - loss(&sq, p(0.3), Outcome::One);
        assert!((d_sav - d_sq).abs() < 1e-12);
        for a in grid(1.0 / 64.0) {
            for b in grid(1.0 / 64.0) {
                let lhs = f_divergence(&sav, p(a), p(b));
                assert!((lhs - (a - b).powi(2)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn savage_offsets_do_not_change_differences() {
        let shifted = LossFunction::Savage(
            SavagePotential::new(|p| p * p - p, |p| 2.0 * p - 1.0, 3.0, -1.5).unwrap(),
        );
        let sq = LossFunction::Squared;
        for y in Outcome::BOTH {
            let a = shifted.value(0.9, y) - shifted.value(0.2, y);
            let b = sq.value(0.9, y) - sq.value(0.2, y);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn nonconvex_potential_rejected() {
        let err = SavagePotential::new(|p| -(p * p), |p| -2.0 * p, 0.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = SavagePotential::new(|p| p.ln(), |p| 1.0 / p, 0.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn strict_propriety_on_grid() {
        let quartic = LossFunction::Savage(
            SavagePotential::new(
                |p| p.powi(4) + (1.0 - p).powi(4),
                |p| 4.0 * p.powi(3) - 4.0 * (1.0 - p).powi(3),
                0.0,
                0.0,
            )
            .unwrap(),
        );
        for lf in [
            LossFunction::Squared,
            LossFunction::Savage(SavagePotential::brier()),
            quartic,
        ] {
            for a in grid(1.0 / 64.0) {
                for b in grid(1.0 / 64.0) {
                    let d = lf.divergence(a, b);
                    if a == b {
                        assert!(d.abs() < 1e-15);
                    } else {
                        assert!(d > 0.0, "f({a}, {b}) = {d}");
                    }
                }
            }
        }
    }

    #[test]
    fn noise_correction_matches_generic_form() {
        let sav = LossFunction::Savage(SavagePotential::brier());
        for x in grid(GRID_STEP) {
            let direct = LossFunction::Squared.noise_correction(x);
            assert!((sav.noise_correction(x) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn psi_inverse_examples() {
        let sym = PsiParams::Symmetric { eta: 0.2 };
        assert!((sym.inverse(0.3).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(sym.inverse(0.0).unwrap(), 0.0);
        assert_eq!(
            PsiParams::Symmetric { eta: 0.0 }.inverse(0.42).unwrap(),
            0.42
        );
        assert!(PsiParams::Symmetric { eta: 0.5 }.inverse(1.0).is_err());
        assert!(PsiParams::Asymmetric {
            eta0: 0.6,
            eta1: 0.4
        }
        .inverse(1.0)
        .is_err());
        let asym = PsiParams::Asymmetric {
            eta0: 0.1,
            eta1: 0.3,
        };
        assert!((asym.inverse(0.3).unwrap() - 0.5).abs() < 1e-15);
    }
}
