//! Peer reference answers: aggregating the panel into one label, and
//! synthetic noise channels that corrupt the hidden outcome at a known rate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probability::{Outcome, Probability, ROUNDOFF_TOLERANCE};

/// How the reference label `ŷ_t` is corrupted relative to `y_t`.
///
/// Round indices are 1-based; a time-varying schedule is cycled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseChannel {
    /// `P(ŷ ≠ y) = eta` regardless of `y`.
    Symmetric { eta: f64 },
    /// `P(ŷ = 1 | y = 0) = eta0`, `P(ŷ = 0 | y = 1) = eta1`.
    Asymmetric { eta0: f64, eta1: f64 },
    /// Symmetric with rate `schedule[(t - 1) mod len]` in round `t`.
    TimeVarying { schedule: Vec<f64> },
}

impl NoiseChannel {
    pub fn validate(&self) -> Result<()> {
        let rate_ok = |x: f64| x.is_finite() && (0.0..0.5).contains(&x);
        match self {
            NoiseChannel::Symmetric { eta } => {
                if !rate_ok(*eta) {
                    return Err(Error::config(format!(
                        "symmetric noise rate must lie in [0, 0.5), got {eta}"
                    )));
                }
            }
            NoiseChannel::Asymmetric { eta0, eta1 } => {
                let ok = eta0.is_finite()
                    && eta1.is_finite()
                    && *eta0 >= 0.0
                    && *eta1 >= 0.0
                    && eta0 + eta1 < 1.0;
                if !ok {
                    return Err(Error::config(format!(
                        "asymmetric noise rates need eta0, eta1 >= 0 and eta0 + eta1 < 1, got ({eta0}, {eta1})"
                    )));
                }
            }
            NoiseChannel::TimeVarying { schedule } => {
                if schedule.is_empty() {
                    return Err(Error::config("time-varying noise schedule is empty"));
                }
                if let Some(bad) = schedule.iter().find(|x| !rate_ok(**x)) {
                    return Err(Error::config(format!(
                        "time-varying noise rate {bad} outside [0, 0.5)"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `(P(ŷ = 1 | y = 0), P(ŷ = 0 | y = 1))` in round `t`.
    #[inline]
    pub fn flip_rates(&self, t: usize) -> (f64, f64) {
        match self {
            NoiseChannel::Symmetric { eta } => (*eta, *eta),
            NoiseChannel::Asymmetric { eta0, eta1 } => (*eta0, *eta1),
            NoiseChannel::TimeVarying { schedule } => {
                let eta = schedule[t.saturating_sub(1) % schedule.len()];
                (eta, eta)
            }
        }
    }

    /// Probability that the label is flipped when the truth is `y`.
    #[inline]
    pub fn flip_rate(&self, y: Outcome, t: usize) -> f64 {
        let (r0, r1) = self.flip_rates(t);
        match y {
            Outcome::Zero => r0,
            Outcome::One => r1,
        }
    }

    /// Largest per-round flip rate the channel can produce.
    pub fn max_rate(&self) -> f64 {
        match self {
            NoiseChannel::Symmetric { eta } => *eta,
            NoiseChannel::Asymmetric { eta0, eta1 } => eta0.max(*eta1),
            NoiseChannel::TimeVarying { schedule } => schedule.iter().cloned().fold(0.0, f64::max),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, y: Outcome, t: usize, rng: &mut R) -> Outcome {
        if rng.random::<f64>() < self.flip_rate(y, t) {
            y.flip()
        } else {
            y
        }
    }
}

/// `P(ŷ = 1)` when `P(y = 1) = p`: `(1 - η1) p + η0 (1 - p)`.
pub fn reference_prob(p: Probability, channel: &NoiseChannel, t: usize) -> Probability {
    let (eta0, eta1) = channel.flip_rates(t);
    let p = p.value();
    Probability::from_interior((1.0 - eta1) * p + eta0 * (1.0 - p))
        .expect("affine image of [0, 1] under valid rates stays in [0, 1]")
}

/// Rule mapping the panel's forecasts to a reference label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AggregationRule {
    /// Threshold each forecast and take the majority vote. Forecasts exactly
    /// at the threshold abstain.
    Majority { threshold: f64 },
    /// 1 iff `∏ p_i > ∏ (1 - p_i)`.
    ProductLikelihood,
    /// Corrupt the hidden outcome directly. Simulation only.
    Channel { channel: NoiseChannel },
}

impl AggregationRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            AggregationRule::Majority { threshold } => {
                if !(threshold.is_finite() && *threshold > 0.0 && *threshold < 1.0) {
                    return Err(Error::config(format!(
                        "majority threshold must lie in (0, 1), got {threshold}"
                    )));
                }
                Ok(())
            }
            AggregationRule::ProductLikelihood => Ok(()),
            AggregationRule::Channel { channel } => channel.validate(),
        }
    }

    pub fn needs_outcome(&self) -> bool {
        matches!(self, AggregationRule::Channel { .. })
    }
}

/// A reference label, plus whether a fair coin had to break a tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Aggregate {
    pub label: Outcome,
    pub tie_broken: bool,
}

/// Build `ŷ_t` from the panel.
///
/// Ties (equal vote counts, or equal likelihood products) are settled by a
/// fair coin drawn from `rng`, so the result depends only on the seed.
pub fn aggregate<R: Rng + ?Sized>(
    predictions: &[f64],
    rule: &AggregationRule,
    y: Option<Outcome>,
    t: usize,
    rng: &mut R,
) -> Result<Aggregate> {
    if predictions.is_empty() {
        return Err(Error::input("cannot aggregate an empty panel"));
    }
    let decided = |label| Aggregate {
        label,
        tie_broken: false,
    };
    let coin = |rng: &mut R| Aggregate {
        label: Outcome::from_bool(rng.random_bool(0.5)),
        tie_broken: true,
    };
    match rule {
        AggregationRule::Majority { threshold } => {
            let above = predictions.iter().filter(|&&p| p > *threshold).count();
            let below = predictions.iter().filter(|&&p| p < *threshold).count();
            Ok(match above.cmp(&below) {
                std::cmp::Ordering::Greater => decided(Outcome::One),
                std::cmp::Ordering::Less => decided(Outcome::Zero),
                std::cmp::Ordering::Equal => coin(rng),
            })
        }
        AggregationRule::ProductLikelihood => {
            // Log domain: a long panel underflows the raw products.
            let (log_one, log_zero) = predictions.iter().fold((0.0_f64, 0.0_f64), |(a, b), &p| {
                (a + p.ln(), b + (1.0 - p).ln())
            });
            // 1 - p is inexact, so mirrored panels differ by roundoff.
            let scale = 1.0_f64.max(log_one.abs()).max(log_zero.abs());
            Ok(
                if (log_one - log_zero).abs() <= ROUNDOFF_TOLERANCE * scale {
                    coin(rng)
                } else if log_one > log_zero {
                    decided(Outcome::One)
                } else {
                    decided(Outcome::Zero)
                },
            )
        }
        AggregationRule::Channel { channel } => {
            let y =
                y.ok_or_else(|| Error::input("channel aggregation needs the hidden outcome"))?;
            Ok(decided(channel.sample(y, t, rng)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn majority_and_product_examples() {
        let panel = [0.9, 0.8, 0.2];
        let maj = AggregationRule::Majority { threshold: 0.5 };
        let a = aggregate(&panel, &maj, None, 1, &mut rng()).unwrap();
        assert_eq!(
            a,
            Aggregate {
                label: Outcome::One,
                tie_broken: false
            }
        );
        let prod = aggregate(
            &panel,
            &AggregationRule::ProductLikelihood,
            None,
            1,
            &mut rng(),
        )
        .unwrap();
        assert_eq!(prod.label, Outcome::One);
    }

    #[test]
    fn noiseless_channel_is_identity() {
        let rule = AggregationRule::Channel {
            channel: NoiseChannel::Symmetric { eta: 0.0 },
        };
        let mut r = rng();
        for _ in 0..100 {
            assert_eq!(
                aggregate(&[0.3], &rule, Some(Outcome::Zero), 1, &mut r)
                    .unwrap()
                    .label,
                Outcome::Zero
            );
        }
    }

    #[test]
    fn input_errors() {
        let maj = AggregationRule::Majority { threshold: 0.5 };
        assert!(matches!(
            aggregate(&[], &maj, None, 1, &mut rng()),
            Err(Error::Input(_))
        ));
        let rule = AggregationRule::Channel {
            channel: NoiseChannel::Symmetric { eta: 0.1 },
        };
        assert!(matches!(
            aggregate(&[0.5], &rule, None, 1, &mut rng()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn ties_use_the_coin() {
        let maj = AggregationRule::Majority { threshold: 0.5 };
        let a = aggregate(&[0.9, 0.1], &maj, None, 1, &mut rng()).unwrap();
        assert!(a.tie_broken);
        let at_threshold = aggregate(&[0.5, 0.5, 0.5], &maj, None, 1, &mut rng()).unwrap();
        assert!(at_threshold.tie_broken);
        let prod = aggregate(
            &[0.9, 0.1],
            &AggregationRule::ProductLikelihood,
            None,
            1,
            &mut rng(),
        )
        .unwrap();
        assert!(prod.tie_broken);
        // Same seed, same coin.
        let again = aggregate(&[0.9, 0.1], &maj, None, 1, &mut rng()).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn odd_panel_majority_is_deterministic() {
        let maj = AggregationRule::Majority { threshold: 0.5 };
        let panel = [0.6, 0.4, 0.45, 0.9, 0.1];
        let labels: Vec<_> = (0..20)
            .map(|s| aggregate(&panel, &maj, None, 1, &mut ChaCha8Rng::seed_from_u64(s)).unwrap())
            .collect();
        assert!(labels
            .iter()
            .all(|a| !a.tie_broken && a.label == Outcome::Zero));
    }

    #[test]
    fn reference_prob_examples() {
        let p = |v| Probability::new(v).unwrap();
        let sym = NoiseChannel::Symmetric { eta: 0.1 };
        assert!((reference_prob(p(0.8), &sym, 1).value() - 0.74).abs() < 1e-15);
        let clean = NoiseChannel::Symmetric { eta: 0.0 };
        assert_eq!(reference_prob(p(0.37), &clean, 1).value(), 0.37);
        let asym = NoiseChannel::Asymmetric {
            eta0: 0.2,
            eta1: 0.1,
        };
        assert!((reference_prob(p(1.0), &asym, 1).value() - 0.9).abs() < 1e-15);
        let tv = NoiseChannel::TimeVarying {
            schedule: vec![0.1, 0.3],
        };
        assert!((reference_prob(p(1.0), &tv, 2).value() - 0.7).abs() < 1e-15);
        assert!((reference_prob(p(1.0), &tv, 3).value() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn channel_validation() {
        assert!(NoiseChannel::Symmetric { eta: 0.5 }.validate().is_err());
        assert!(NoiseChannel::Asymmetric {
            eta0: 0.6,
            eta1: 0.4
        }
        .validate()
        .is_err());
        assert!(NoiseChannel::Asymmetric {
            eta0: -0.1,
            eta1: 0.4
        }
        .validate()
        .is_err());
        assert!(NoiseChannel::Asymmetric {
            eta0: 0.6,
            eta1: 0.3
        }
        .validate()
        .is_ok());
        assert!(NoiseChannel::TimeVarying {
            schedule: vec![0.1, 0.5]
        }
        .validate()
        .is_err());
        assert!(NoiseChannel::TimeVarying { schedule: vec![] }
            .validate()
            .is_err());
        assert!(AggregationRule::Majority { threshold: 1.0 }
            .validate()
            .is_err());
    }

    #[test]
    fn channel_flip_frequency_matches_rate() {
        let n = 100_000;
        let mut r = ChaCha8Rng::seed_from_u64(2024);
        for (eta, y) in [
            (0.2, Outcome::One),
            (0.05, Outcome::Zero),
            (0.45, Outcome::One),
        ] {
            let ch = NoiseChannel::Symmetric { eta };
            let flips = (0..n).filter(|_| ch.sample(y, 1, &mut r) != y).count();
            let freq = flips as f64 / n as f64;
            let tol = 3.0 * (eta * (1.0 - eta) / n as f64).sqrt();
            assert!((freq - eta).abs() <= tol, "eta={eta}: freq={freq}");
        }
    }
}
