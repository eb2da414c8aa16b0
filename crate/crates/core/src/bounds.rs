//! Closed-form regret bounds. All logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::estimation_error_bound;
use crate::learner::online_bound;
use crate::loss::PsiParams;
use crate::peer_score::f_term;
use crate::probability::Probability;

/// Azuma-Hoeffding deviation for `T` increments bounded by `sigma`:
/// `sigma · sqrt(2T ln(2/δ))`.
pub fn e_mart(delta: f64, sigma: f64, horizon: usize) -> f64 {
    sigma * (2.0 * horizon as f64 * (2.0 / delta).ln()).sqrt()
}

/// Increment bound `max{4 + max F, 2 - min F}` for the symmetric score,
/// with the extrema of `F(η, p)` taken over `p` in `[lo, hi]` on a 1/1024
/// grid (endpoints included).
pub fn sigma_g_paper(eta: f64, lo: f64, hi: f64) -> f64 {
    let n = 1024;
    let mut max_f = f64::NEG_INFINITY;
    let mut min_f = f64::INFINITY;
    for i in 0..=n {
        let p = lo + (hi - lo) * i as f64 / n as f64;
        let f = f_term(eta, p);
        max_f = max_f.max(f);
        min_f = min_f.min(f);
    }
    (4.0 + max_f).max(2.0 - min_f)
}

/// `α (1/(1 - 2 max η̃) + 1)`.
pub fn c_comp(alpha: f64, max_eta_tilde: f64) -> Result<f64> {
    check_eta_tilde(max_eta_tilde)?;
    Ok(alpha * (1.0 / (1.0 - 2.0 * max_eta_tilde) + 1.0))
}

fn check_eta_tilde(max_eta_tilde: f64) -> Result<()> {
    if max_eta_tilde.is_finite() && (0.0..0.5).contains(&max_eta_tilde) {
        Ok(())
    } else {
        Err(Error::config(format!(
            "max homogenized noise rate must lie in [0, 0.5), got {max_eta_tilde}"
        )))
    }
}

/// Homogenizing flip probability for a schedule whose rates stray at most
/// `epsilon_eta` from their mean: `max(0, 1/2 - ε) + 1e-6`, kept below
/// `0.5 - 1e-6`.
pub fn choose_flip_prob(epsilon_eta: f64) -> Result<Probability> {
    if !(epsilon_eta.is_finite() && epsilon_eta > 0.0 && epsilon_eta < 0.5) {
        return Err(Error::config(format!(
            "epsilon_eta must lie in (0, 0.5), got {epsilon_eta}"
        )));
    }
    let ceiling = 0.5 - 1e-6;
    let raw = (0.5 - epsilon_eta).max(0.0) + 1e-6;
    if raw >= ceiling {
        return Err(Error::config(format!(
            "epsilon_eta {epsilon_eta} is too small: the flip would erase the reference signal"
        )));
    }
    Probability::new(raw)
}

/// Per-round estimation error of the importance-weighted estimator: round
/// `t` uses the estimate built from rounds `1..t`, so `ε_1` is the trivial
/// 1/2 and later terms are capped at 1/2.
pub fn importance_weighted_epsilon(horizon: usize, delta: f64, p_star: Probability) -> Vec<f64> {
    (1..=horizon)
        .map(|t| {
            if t == 1 {
                0.5
            } else {
                estimation_error_bound(t - 1, delta, p_star).min(0.5)
            }
        })
        .collect()
}

/// Per-round error of the two-group estimator, `sqrt(ln(6/δ) / (2(t-1)))`
/// capped at 1/2, with the same one-round lag.
pub fn two_group_epsilon(horizon: usize, delta: f64) -> Vec<f64> {
    (1..=horizon)
        .map(|t| {
            if t == 1 {
                0.5
            } else {
                ((6.0 / delta).ln() / (2.0 * (t - 1) as f64))
                    .sqrt()
                    .min(0.5)
            }
        })
        .collect()
}

/// Inputs shared by the bound evaluators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub delta: f64,
    pub sigma_g: f64,
    pub horizon: usize,
    pub experts: usize,
    pub psi: PsiParams,
    /// Per-round estimation errors; needed only for the estimated-noise bound.
    #[serde(default)]
    pub epsilon: Option<Vec<f64>>,
    pub alpha: f64,
    pub max_eta_tilde: f64,
    /// Width of the score range fed to Hedge.
    pub score_range: f64,
    /// Probability that peer scores single out the wrong best expert.
    /// Not given in closed form anywhere; the simulator reports the
    /// empirical frequency instead.
    #[serde(default)]
    pub delta_g: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.sigma_g.is_finite() && self.sigma_g >= 0.0) {
            return Err(Error::config(format!(
                "sigma_g must be nonnegative, got {}",
                self.sigma_g
            )));
        }
        if self.horizon == 0 || self.experts == 0 {
            return Err(Error::config("horizon and panel size must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.delta_g) {
            return Err(Error::config(format!(
                "delta_g must lie in [0, 1], got {}",
                self.delta_g
            )));
        }
        self.psi.inverse(0.0).map(|_| ())
    }

    fn e_online(&self) -> f64 {
        online_bound(self.horizon, self.experts, self.score_range)
    }

    /// Probability with which the known-noise bound holds.
    pub fn theorem1_confidence(&self) -> f64 {
        1.0 - 4.0 * self.delta - self.delta_g
    }
}

/// Known noise: `T ψ⁻¹((2 E_mart(δ, σ_g, T) + E_online) / T) + 2 E_mart(δ, 2, T)`.
pub fn theorem1_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let t = inputs.horizon as f64;
    let inner =
        (2.0 * e_mart(inputs.delta, inputs.sigma_g, inputs.horizon) + inputs.e_online()) / t;
    Ok(t * inputs.psi.inverse(inner)? + 2.0 * e_mart(inputs.delta, 2.0, inputs.horizon))
}

/// Estimated noise: the estimation errors `Σ ε_t` join the martingale and
/// online terms inside `ψ⁻¹`.
pub fn theorem3_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let eps = inputs.epsilon.as_ref().ok_or_else(|| {
        Error::config("the estimated-noise bound needs a per-round epsilon series")
    })?;
    let total_eps: f64 = eps.iter().sum();
    let numer =
        2.0 * e_mart(inputs.delta, inputs.sigma_g, inputs.horizon) + inputs.e_online() + total_eps;
    Ok(inputs.psi.inverse(numer)? + 2.0 * e_mart(inputs.delta, 2.0, inputs.horizon))
}

/// Heterogeneous noise after homogenization: total loss of the algorithm is
/// at most
/// `[E_mart(δ/2N, 2, T) + E_mart(δ/2N, σ_g, T) + E_online] / (1 - 2 max η̃) + c_comp(α) L*`.
pub fn theorem6_bound(inputs: &BoundInputs, l_star: f64) -> Result<f64> {
    inputs.validate()?;
    if inputs.alpha.is_nan() || inputs.alpha <= 2.0 {
        return Err(Error::config(format!(
            "alpha must exceed 2, got {}",
            inputs.alpha
        )));
    }
    let c = c_comp(inputs.alpha, inputs.max_eta_tilde)?;
    let d = inputs.delta / (2.0 * inputs.experts as f64);
    let numer = e_mart(d, 2.0, inputs.horizon)
        + e_mart(d, inputs.sigma_g, inputs.horizon)
        + inputs.e_online();
    Ok(numer / (1.0 - 2.0 * inputs.max_eta_tilde) + c * l_star)
}
