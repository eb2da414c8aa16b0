//! Synthetic worlds: the hidden outcome probability `p_t` for each round.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Law of `p_t` for i.i.d. worlds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PDistribution {
    Uniform { low: f64, high: f64 },
    Beta { a: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    Constant {
        p: f64,
    },
    Iid {
        distribution: PDistribution,
    },
    /// Linear path from `start` in round 1 to `end` in round `T`.
    Drift {
        start: f64,
        end: f64,
    },
    /// Each value held for `period` rounds, cycling.
    Periodic {
        values: Vec<f64>,
        period: usize,
    },
}

/// Horizon plus generator. `p_t` depends only on `t` and the world stream,
/// never on realized outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldModel {
    pub horizon: usize,
    pub generator: Generator,
}

fn unit(x: f64) -> bool {
    x.is_finite() && (0.0..=1.0).contains(&x)
}

impl WorldModel {
    /// Returns `(field, message)` for the first invalid parameter.
    pub fn check(&self) -> std::result::Result<(), (String, String)> {
        if self.horizon == 0 {
            return Err(("horizon".into(), "horizon must be at least 1".into()));
        }
        let bad = |field: &str, msg: String| Err((format!("generator.{field}"), msg));
        match &self.generator {
            Generator::Constant { p } => {
                if !unit(*p) {
                    return bad("p", format!("{p} is outside [0, 1]"));
                }
            }
            Generator::Iid { distribution } => match distribution {
                PDistribution::Uniform { low, high } => {
                    if !(unit(*low) && unit(*high) && low <= high) {
                        return bad(
                            "distribution",
                            format!("need 0 <= low <= high <= 1, got [{low}, {high}]"),
                        );
                    }
                }
                PDistribution::Beta { a, b } => {
                    if !(a.is_finite() && b.is_finite() && *a > 0.0 && *b > 0.0) {
                        return bad(
                            "distribution",
                            format!("beta shape parameters must be positive, got ({a}, {b})"),
                        );
                    }
                }
            },
            Generator::Drift { start, end } => {
                if !(unit(*start) && unit(*end)) {
                    return bad(
                        "start",
                        format!("drift endpoints must lie in [0, 1], got ({start}, {end})"),
                    );
                }
            }
            Generator::Periodic { values, period } => {
                if values.is_empty() {
                    return bad("values", "periodic world needs at least one value".into());
                }
                if let Some(v) = values.iter().find(|v| !unit(**v)) {
                    return bad("values", format!("{v} is outside [0, 1]"));
                }
                if *period == 0 {
                    return bad("period", "period must be at least 1".into());
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check()
            .map_err(|(path, message)| Error::spec(format!("world.{path}"), message))
    }

    /// `p_t` for round `t` (1-based).
    pub fn p<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> f64 {
        match &self.generator {
            Generator::Constant { p } => *p,
            Generator::Iid { distribution } => match distribution {
                PDistribution::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
                PDistribution::Beta { a, b } => {
                    Beta::new(*a, *b).expect("validated shape").sample(rng)
                }
            },
            Generator::Drift { start, end } => {
                if self.horizon == 1 {
                    *start
                } else {
                    // Convex combination, exact at both endpoints.
                    let lambda = (t - 1) as f64 / (self.horizon - 1) as f64;
                    (1.0 - lambda) * start + lambda * end
                }
            }
            Generator::Periodic { values, period } => values[((t - 1) / period) % values.len()],
        }
        .clamp(0.0, 1.0)
    }

    /// Interval containing every `p_t` the world can produce.
    pub fn support(&self) -> (f64, f64) {
        match &self.generator {
            Generator::Constant { p } => (*p, *p),
            Generator::Iid { distribution } => match distribution {
                PDistribution::Uniform { low, high } => (*low, *high),
                PDistribution::Beta { .. } => (0.0, 1.0),
            },
            Generator::Drift { start, end } => (start.min(*end), start.max(*end)),
            Generator::Periodic { values, .. } => (
                values.iter().cloned().fold(1.0, f64::min),
                values.iter().cloned().fold(0.0, f64::max),
            ),
        }
    }
}
