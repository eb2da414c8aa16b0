//! Synthetic experts. Each sees `p_t` (and the round index) but never the
//! realized outcome of the current round.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExpertModel {
    /// Reports `p_t`.
    Oracle,
    /// `p_t` plus Gaussian noise with standard deviation `sigma`, clamped.
    Perturbed { sigma: f64 },
    /// `p_t + offset`, clamped.
    ConstantBias { offset: f64 },
    /// `1 - p_t`.
    Contrarian,
    /// Binary call on the likelier outcome (`p_t >= 1/2` means 1), right
    /// with probability `accuracy`.
    BinarySkill { accuracy: f64 },
    /// Binary expert whose accuracy cycles through `accuracies`, one entry
    /// per round.
    PeriodicSkill { accuracies: Vec<f64> },
}

impl ExpertModel {
    /// Message describing the first invalid parameter, if any.
    pub fn check(&self) -> Option<(&'static str, String)> {
        let unit = |x: f64| x.is_finite() && (0.0..=1.0).contains(&x);
        match self {
            ExpertModel::Perturbed { sigma } if !(sigma.is_finite() && *sigma >= 0.0) => Some((
                "sigma",
                format!("noise scale must be nonnegative, got {sigma}"),
            )),
            ExpertModel::ConstantBias { offset } if !offset.is_finite() => {
                Some(("offset", format!("offset must be finite, got {offset}")))
            }
            ExpertModel::BinarySkill { accuracy } if !unit(*accuracy) => {
                Some(("accuracy", format!("{accuracy} is outside [0, 1]")))
            }
            ExpertModel::PeriodicSkill { accuracies } => {
                if accuracies.is_empty() {
                    Some(("accuracies", "need at least one accuracy".into()))
                } else {
                    accuracies
                        .iter()
                        .find(|a| !unit(**a))
                        .map(|a| ("accuracies", format!("{a} is outside [0, 1]")))
                }
            }
            _ => None,
        }
    }

    /// Forecast for round `t` (1-based).
    pub fn predict<R: Rng + ?Sized>(&self, p_t: f64, t: usize, rng: &mut R) -> f64 {
        let call = |accuracy: f64, rng: &mut R| {
            let likely = p_t >= 0.5;
            let right = rng.random::<f64>() < accuracy;
            if likely == right {
                1.0
            } else {
                0.0
            }
        };
        match self {
            ExpertModel::Oracle => p_t,
            ExpertModel::Perturbed { sigma } => {
                let noise = if *sigma > 0.0 {
                    Normal::new(0.0, *sigma)
                        .expect("validated scale")
                        .sample(rng)
                } else {
                    0.0
                };
                (p_t + noise).clamp(0.0, 1.0)
            }
            ExpertModel::ConstantBias { offset } => (p_t + offset).clamp(0.0, 1.0),
            ExpertModel::Contrarian => 1.0 - p_t,
            ExpertModel::BinarySkill { accuracy } => call(*accuracy, rng),
            ExpertModel::PeriodicSkill { accuracies } => {
                call(accuracies[(t - 1) % accuracies.len()], rng)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn deterministic_experts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(ExpertModel::Oracle.predict(0.3, 1, &mut rng), 0.3);
        assert_eq!(ExpertModel::Contrarian.predict(0.3, 1, &mut rng), 0.7);
        assert_eq!(
            ExpertModel::ConstantBias { offset: 0.3 }.predict(0.9, 1, &mut rng),
            1.0
        );
        assert!(
            (ExpertModel::ConstantBias { offset: -0.1 }.predict(0.5, 1, &mut rng) - 0.4).abs()
                < 1e-15
        );
    }

    #[test]
    fn binary_skill_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e = ExpertModel::BinarySkill { accuracy: 0.8 };
        let n = 100_000;
        let right = (0..n)
            .filter(|_| e.predict(0.7, 1, &mut rng) == 1.0)
            .count() as f64
            / n as f64;
        assert!((right - 0.8).abs() < 4.0 * (0.16f64 / n as f64).sqrt());
        let perfect = ExpertModel::PeriodicSkill {
            accuracies: vec![1.0, 0.0],
        };
        assert_eq!(perfect.predict(0.2, 1, &mut rng), 0.0);
        assert_eq!(perfect.predict(0.2, 2, &mut rng), 1.0);
    }

    #[test]
    fn perturbed_stays_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = ExpertModel::Perturbed { sigma: 0.5 };
        for _ in 0..1000 {
            let p = e.predict(0.9, 1, &mut rng);
            assert!((0.0..=1.0).contains(&p));
        }
        assert!(ExpertModel::Perturbed { sigma: -1.0 }.check().is_some());
        assert!(ExpertModel::PeriodicSkill { accuracies: vec![] }
            .check()
            .is_some());
    }
}
