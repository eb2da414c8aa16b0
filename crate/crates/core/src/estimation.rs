//! Online estimates of the reference answer's error rate.
//!
//! Two settings are covered: occasional ground truth (importance weighting
//! of the disagreement indicator) and no ground truth at all (two disjoint
//! expert groups whose reference answers are conditionally independent given
//! the outcome, identified by the method of moments).

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probability::{Outcome, Probability};

/// Importance-weighted estimate of `P(ŷ ≠ y)` from outcomes revealed with
/// probability `reveal_prob`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceWeightedEstimator {
    reveal_prob: Probability,
    running_sum: f64,
    rounds: usize,
}

impl ImportanceWeightedEstimator {
    pub fn new(reveal_prob: Probability) -> Result<Self> {
        if reveal_prob.value() <= 0.0 {
            return Err(Error::config("reveal probability must be positive"));
        }
        Ok(ImportanceWeightedEstimator {
            reveal_prob,
            running_sum: 0.0,
            rounds: 0,
        })
    }

    pub fn reveal_prob(&self) -> Probability {
        self.reveal_prob
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// Add one round and return the running estimate. `revealed` carries the
    /// outcome when ground truth arrived this round.
    pub fn update(&mut self, y_hat: Outcome, revealed: Option<Outcome>) -> f64 {
        if let Some(y) = revealed {
            if y != y_hat {
                self.running_sum += 1.0 / self.reveal_prob.value();
            }
        }
        self.rounds += 1;
        self.running_sum / self.rounds as f64
    }

    /// `None` before the first round.
    pub fn estimate(&self) -> Option<f64> {
        (self.rounds > 0).then(|| self.running_sum / self.rounds as f64)
    }
}

/// Running moments `(ĉ1, ĉ2, ĉ3)`: the frequencies of `ŷ_A = 1`, `ŷ_B = 1`
/// and `ŷ_A = ŷ_B = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

/// Two-group moment estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoGroupEstimator {
    group_a: Vec<usize>,
    group_b: Vec<usize>,
    ones_a: u64,
    ones_b: u64,
    ones_both: u64,
    rounds: u64,
}

impl TwoGroupEstimator {
    /// Use a caller-chosen partition; it must be a disjoint cover of
    /// `0..n_experts` with both groups non-empty.
    pub fn with_partition(
        group_a: Vec<usize>,
        group_b: Vec<usize>,
        n_experts: usize,
    ) -> Result<Self> {
        let mut seen = vec![false; n_experts];
        for &i in group_a.iter().chain(&group_b) {
            if i >= n_experts || seen[i] {
                return Err(Error::config(
                    "expert groups must be a disjoint cover of the panel",
                ));
            }
            seen[i] = true;
        }
        if group_a.is_empty() || group_b.is_empty() || seen.iter().any(|s| !s) {
            return Err(Error::config(
                "expert groups must be a disjoint cover of the panel",
            ));
        }
        Ok(TwoGroupEstimator {
            group_a,
            group_b,
            ones_a: 0,
            ones_b: 0,
            ones_both: 0,
            rounds: 0,
        })
    }

    /// Shuffle the panel and split it in half (group A gets the smaller half).
    pub fn random_partition<R: Rng + ?Sized>(n_experts: usize, rng: &mut R) -> Result<Self> {
        if n_experts < 2 {
            return Err(Error::config(
                "two-group estimation needs at least two experts",
            ));
        }
        let mut ids: Vec<usize> = (0..n_experts).collect();
        ids.shuffle(rng);
        let b = ids.split_off(n_experts / 2);
        let mut a = ids;
        let mut b = b;
        a.sort_unstable();
        b.sort_unstable();
        Self::with_partition(a, b, n_experts)
    }

    pub fn group_a(&self) -> &[usize] {
        &self.group_a
    }

    pub fn group_b(&self) -> &[usize] {
        &self.group_b
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn update(&mut self, y_hat_a: Outcome, y_hat_b: Outcome) -> Moments {
        let a = y_hat_a.is_one();
        let b = y_hat_b.is_one();
        self.ones_a += a as u64;
        self.ones_b += b as u64;
        self.ones_both += (a && b) as u64;
        self.rounds += 1;
        self.moments()
    }

    /// All zeros before the first round.
    pub fn moments(&self) -> Moments {
        if self.rounds == 0 {
            return Moments {
                c1: 0.0,
                c2: 0.0,
                c3: 0.0,
            };
        }
        let n = self.rounds as f64;
        Moments {
            c1: self.ones_a as f64 / n,
            c2: self.ones_b as f64 / n,
            c3: self.ones_both as f64 / n,
        }
    }

    pub fn solve(&self) -> NoiseSolution {
        let m = self.moments();
        solve_noise_system(m.c1, m.c2, m.c3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Ok,
    /// `P0` too close to 1/2, or the groups carry no shared signal
    /// (zero covariance, which collapses `P0` onto `{0, 1}`).
    DegenerateP0,
    /// No root yields two rates in `[0, 1/2)`; usually too few samples.
    NoRealRoot,
}

/// Solution of the moment system. Values are `NaN` unless `status` is `Ok`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSolution {
    pub p0: f64,
    pub eta_a: f64,
    pub eta_b: f64,
    pub status: SolveStatus,
}

impl NoiseSolution {
    fn failed(status: SolveStatus) -> Self {
        NoiseSolution {
            p0: f64::NAN,
            eta_a: f64::NAN,
            eta_b: f64::NAN,
            status,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == SolveStatus::Ok
    }
}

/// Largest absolute violation of the three moment equations
/// `P0 ηA + (1-P0)(1-ηA) = c1`, the same for B, and
/// `P0 ηA ηB + (1-P0)(1-ηA)(1-ηB) = c3`.
pub fn moment_residual(c1: f64, c2: f64, c3: f64, p0: f64, eta_a: f64, eta_b: f64) -> f64 {
    let q = 1.0 - p0;
    let r1 = p0 * eta_a + q * (1.0 - eta_a) - c1;
    let r2 = p0 * eta_b + q * (1.0 - eta_b) - c2;
    let r3 = p0 * eta_a * eta_b + q * (1.0 - eta_a) * (1.0 - eta_b) - c3;
    r1.abs().max(r2.abs()).max(r3.abs())
}

const DEGENERATE_SEPARATION: f64 = 1e-3;
const COVARIANCE_FLOOR: f64 = 1e-12;
const RATE_SLACK: f64 = 1e-9;

/// Solve the moment system for `(P0, ηA, ηB)`.
///
/// With `x = P0`, the first two equations give
/// `ηA = (c1 - 1 + x) / (2x - 1)` and `ηB` likewise. Substituting into the
/// third and clearing `(2x - 1)²` leaves
/// `A (x² - x) = c3 - c1 c2` with `A = 2(c1 + c2) - 1 - 4 c3`,
/// a quadratic symmetric under `x ↔ 1 - x`. The mirrored root flips both
/// rates to `1 - η`, so at most one root has both rates below 1/2.
pub fn solve_noise_system(c1: f64, c2: f64, c3: f64) -> NoiseSolution {
    let in_unit = |c: f64| c.is_finite() && (-RATE_SLACK..=1.0 + RATE_SLACK).contains(&c);
    if !(in_unit(c1) && in_unit(c2) && in_unit(c3)) || c3 > c1.min(c2) + RATE_SLACK {
        return NoiseSolution::failed(SolveStatus::NoRealRoot);
    }
    // Between-group covariance; equals P0 (1 - P0)(1 - 2ηA)(1 - 2ηB).
    let covariance = c3 - c1 * c2;
    if covariance.abs() <= COVARIANCE_FLOOR {
        return NoiseSolution::failed(SolveStatus::DegenerateP0);
    }
    if covariance < 0.0 {
        return NoiseSolution::failed(SolveStatus::NoRealRoot);
    }
    let lead = 2.0 * (c1 + c2) - 1.0 - 4.0 * c3;
    if lead == 0.0 {
        return NoiseSolution::failed(SolveStatus::NoRealRoot);
    }
    let discriminant = 1.0 + 4.0 * covariance / lead;
    if discriminant < 0.0 {
        return NoiseSolution::failed(SolveStatus::NoRealRoot);
    }
    // |2 P0 - 1| for either root.
    let separation = discriminant.sqrt();
    if separation < DEGENERATE_SEPARATION {
        return NoiseSolution::failed(SolveStatus::DegenerateP0);
    }
    let mut best: Option<(f64, NoiseSolution)> = None;
    for p0 in [(1.0 - separation) / 2.0, (1.0 + separation) / 2.0] {
        if !(0.0..=1.0).contains(&p0) {
            continue;
        }
        let denom = 2.0 * p0 - 1.0;
        let eta_a = (c1 - 1.0 + p0) / denom;
        let eta_b = (c2 - 1.0 + p0) / denom;
        let admissible = |e: f64| (-RATE_SLACK..0.5).contains(&e);
        if !(admissible(eta_a) && admissible(eta_b)) {
            continue;
        }
        let candidate = NoiseSolution {
            p0,
            eta_a: eta_a.max(0.0),
            eta_b: eta_b.max(0.0),
            status: SolveStatus::Ok,
        };
        let residual = moment_residual(c1, c2, c3, candidate.p0, candidate.eta_a, candidate.eta_b);
        // Both roots admissible only under sampling noise; keep the better fit.
        if best.is_none_or(|(r, _)| residual < r) {
            best = Some((residual, candidate));
        }
    }
    best.map(|(_, s)| s)
        .unwrap_or_else(|| NoiseSolution::failed(SolveStatus::NoRealRoot))
}

/// High-probability deviation of the importance-weighted estimate after `t`
/// rounds: `sqrt(ln(2/δ)) / (p* sqrt(2t))`.
pub fn estimation_error_bound(t: usize, delta: f64, p_star: Probability) -> f64 {
    (2.0 / delta).ln().sqrt() / (p_star.value() * (2.0 * t as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn iw_full_observation() {
        let mut est = ImportanceWeightedEstimator::new(Probability::ONE).unwrap();
        assert_eq!(est.estimate(), None);
        let mut last = 0.0;
        for i in 0..10 {
            let y_hat = if i < 3 { Outcome::One } else { Outcome::Zero };
            last = est.update(y_hat, Some(Outcome::Zero));
        }
        assert!((last - 0.3).abs() < 1e-15);
    }

    #[test]
    fn iw_partial_observation() {
        let mut est = ImportanceWeightedEstimator::new(Probability::HALF).unwrap();
        let mut last = 0.0;
        for i in 0..10 {
            let revealed = match i {
                0 | 1 => Some(Outcome::Zero),
                2 | 3 => Some(Outcome::One),
                _ => None,
            };
            last = est.update(Outcome::One, revealed);
        }
        assert!((last - 0.4).abs() < 1e-15);
        assert!(ImportanceWeightedEstimator::new(Probability::ZERO).is_err());
    }

    #[test]
    fn two_group_moment_examples() {
        let mut est = TwoGroupEstimator::with_partition(vec![0], vec![1], 2).unwrap();
        for _ in 0..5 {
            est.update(Outcome::One, Outcome::One);
        }
        assert_eq!(
            est.moments(),
            Moments {
                c1: 1.0,
                c2: 1.0,
                c3: 1.0
            }
        );
        let mut est = TwoGroupEstimator::with_partition(vec![0], vec![1], 2).unwrap();
        for _ in 0..5 {
            est.update(Outcome::One, Outcome::Zero);
        }
        assert_eq!(
            est.moments(),
            Moments {
                c1: 1.0,
                c2: 0.0,
                c3: 0.0
            }
        );
    }

    #[test]
    fn partition_is_disjoint_cover() {
        for seed in 0..20 {
            let est = TwoGroupEstimator::random_partition(7, &mut ChaCha8Rng::seed_from_u64(seed))
                .unwrap();
            let mut all: Vec<usize> = est.group_a().iter().chain(est.group_b()).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..7).collect::<Vec<_>>());
            assert_eq!(est.group_a().len(), 3);
        }
        assert!(TwoGroupEstimator::random_partition(1, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        assert!(TwoGroupEstimator::with_partition(vec![0, 1], vec![1], 2).is_err());
        assert!(TwoGroupEstimator::with_partition(vec![0], vec![1], 3).is_err());
    }

    #[test]
    fn solve_examples() {
        let s = solve_noise_system(0.62, 0.62, 0.46);
        assert!(s.is_ok());
        assert!((s.p0 - 0.3).abs() < 1e-9);
        assert!((s.eta_a - 0.2).abs() < 1e-9);
        assert!((s.eta_b - 0.2).abs() < 1e-9);
        assert!(moment_residual(0.62, 0.62, 0.46, s.p0, s.eta_a, s.eta_b) < 1e-9);

        let s = solve_noise_system(0.6, 0.6, 0.6);
        assert!(s.is_ok());
        assert!((s.p0 - 0.4).abs() < 1e-12);
        assert!(s.eta_a.abs() < 1e-12 && s.eta_b.abs() < 1e-12);

        let s = solve_noise_system(1.0, 1.0, 1.0);
        assert!(matches!(
            s.status,
            SolveStatus::DegenerateP0 | SolveStatus::NoRealRoot
        ));
        assert!(s.p0.is_nan());
    }

    #[test]
    fn near_half_prior_is_degenerate() {
        // P0 = 0.5 exactly: c1 = c2 = 0.5, c3 = 0.5 (ηA ηB + (1-ηA)(1-ηB)) / 1.
        let (a, b) = (0.2, 0.3);
        let c3 = 0.5 * (a * b + (1.0 - a) * (1.0 - b));
        let s = solve_noise_system(0.5, 0.5, c3);
        assert_eq!(s.status, SolveStatus::DegenerateP0);
    }

    #[test]
    fn inconsistent_moments_have_no_root() {
        // Negative covariance cannot come from rates below 1/2.
        assert_eq!(
            solve_noise_system(0.5, 0.5, 0.1).status,
            SolveStatus::NoRealRoot
        );
        // c3 above min(c1, c2) is impossible for frequencies.
        assert_eq!(
            solve_noise_system(0.3, 0.6, 0.4).status,
            SolveStatus::NoRealRoot
        );
    }

    #[test]
    fn error_bound_examples() {
        let e = std::f64::consts::E;
        assert!((estimation_error_bound(2, 2.0 / e, Probability::ONE) - 0.5).abs() < 1e-15);
        let b1 = estimation_error_bound(100, 0.05, Probability::ONE);
        let b4 = estimation_error_bound(400, 0.05, Probability::ONE);
        assert!((b1 / b4 - 2.0).abs() < 1e-12);
        let half = estimation_error_bound(100, 0.05, Probability::HALF);
        assert!((half / b1 - 2.0).abs() < 1e-12);
    }
}
