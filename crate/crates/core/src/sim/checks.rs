//! Machine-checkable identities on exact grids, plus a few seeded Monte
//! Carlo checks. Both back the `check` command.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregationRule, NoiseChannel};
use crate::bounds::{e_mart, sigma_g_paper};
use crate::estimation::{moment_residual, solve_noise_system, ImportanceWeightedEstimator};
use crate::loss::{LossFunction, SavagePotential};
use crate::peer_score::{
    asymmetric_score, f_term, g_symmetric_raw, homogenized_rate, symmetric_score, Correction,
};
use crate::probability::{Outcome, Probability};
use crate::sim::experts::ExpertModel;
use crate::sim::monte_carlo::monte_carlo;
use crate::sim::rng::{stream_rng, Stream};
use crate::sim::spec::{EstimatorConfig, ExperimentSpec, PeerScoreConfig};
use crate::sim::world::{Generator, PDistribution, WorldModel};
use crate::FlipMode;

/// Residual tolerance of every exact identity.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CheckOptions {
    /// Coarser grids and fewer replications.
    pub quick: bool,
    /// Fault injection: flip the sign with which `F(η, p)` enters the
    /// quadratic expansion of the reference-answer loss.
    pub negate_f_sign: bool,
}

/// One check: `value` must not exceed `limit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, value: f64, limit: f64) -> Check {
        Check {
            name: name.to_string(),
            value,
            limit,
            passed: value <= limit,
        }
    }

    fn residual(name: &str, value: f64) -> Check {
        Check::new(name, value, IDENTITY_TOLERANCE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub checks: Vec<Check>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn grid(quick: bool) -> Vec<f64> {
    let n = if quick { 16 } else { 64 };
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

fn eta_grid() -> Vec<f64> {
    (0..10).map(|k| k as f64 * 0.05).collect()
}

fn max_over(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, f64::max)
}

/// Exact identities on grids.
pub fn identity_suite(opts: CheckOptions) -> CheckReport {
    let ps = grid(opts.quick);
    let etas = eta_grid();
    let sq = LossFunction::Squared;
    let savage = LossFunction::Savage(SavagePotential::brier());
    let f_sign = if opts.negate_f_sign { -1.0 } else { 1.0 };
    let mut checks = Vec::new();

    let pairs = || ps.iter().flat_map(|&a| ps.iter().map(move |&b| (a, b)));

    checks.push(Check::residual(
        "f_divergence_is_squared_distance",
        max_over(pairs().map(|(q, p)| (sq.divergence(q, p) - (p - q) * (p - q)).abs())),
    ));
    checks.push(Check::residual(
        "savage_brier_matches_squared",
        max_over(pairs().map(|(q, p)| (savage.divergence(q, p) - sq.divergence(q, p)).abs())),
    ));
    let diag = max_over(ps.iter().map(|&p| sq.divergence(p, p).abs()));
    let off_min = pairs()
        .filter(|(q, p)| q != p)
        .map(|(q, p)| sq.divergence(q, p))
        .fold(f64::INFINITY, f64::min);
    checks.push(Check::residual(
        "strict_propriety",
        if off_min > 0.0 { diag } else { 1.0 },
    ));

    let with_eta = || etas.iter().flat_map(|&e| ps.iter().map(move |&p| (e, p)));
    checks.push(Check::residual(
        "g_vanishes_on_diagonal",
        max_over(with_eta().map(|(e, p)| g_symmetric_raw(&sq, p, p, e).abs())),
    ));

    let mut pairwise: f64 = 0.0;
    for &e in &etas {
        for &p in &ps {
            for &a in &ps {
                let ga = g_symmetric_raw(&sq, a, p, e);
                for &b in &ps {
                    let lhs = ga - g_symmetric_raw(&sq, b, p, e);
                    let rhs = (1.0 - 2.0 * e) * ((p - a) * (p - a) - (p - b) * (p - b));
                    pairwise = pairwise.max((lhs - rhs).abs());
                }
            }
        }
    }
    checks.push(Check::residual(
        "g_differences_scale_by_one_minus_two_eta",
        pairwise,
    ));

    // (p̂ - q)² = (1 - 2η)(p - q)² - 2η q(1 - q) + F(η, p), p̂ = (1 - 2η)p + η.
    let expanded = |e: f64, q: f64, p: f64| {
        (1.0 - 2.0 * e) * (p - q) * (p - q) - 2.0 * e * q * (1.0 - q) + f_sign * f_term(e, p)
    };
    let mut expansion: f64 = 0.0;
    for (e, p) in with_eta() {
        let p_hat = (1.0 - 2.0 * e) * p + e;
        for &q in &ps {
            expansion = expansion.max(((p_hat - q) * (p_hat - q) - expanded(e, q, p)).abs());
        }
    }
    checks.push(Check::residual("reference_loss_expansion", expansion));

    // g(p, p) once more, with E[s(p, ŷ)] taken from the expansion route and
    // subtracted from the direct expectation.
    checks.push(Check::residual(
        "g_vanishes_on_diagonal_via_expansion",
        max_over(with_eta().map(|(e, p)| {
            let p_hat = (1.0 - 2.0 * e) * p + e;
            let via_expansion = expanded(e, p, p) + p_hat * (1.0 - p_hat) + 2.0 * e * p * (1.0 - p);
            let direct = p_hat * symmetric_score(&sq, p, Outcome::One, e)
                + (1.0 - p_hat) * symmetric_score(&sq, p, Outcome::Zero, e);
            (via_expansion - direct).abs()
        })),
    ));

    let mut unbiased: f64 = 0.0;
    for &e0 in &etas {
        for &e1 in &etas {
            for &p in &ps {
                for y in Outcome::BOTH {
                    let flip = if y.is_one() { e1 } else { e0 };
                    let mean = (1.0 - flip) * asymmetric_score(&sq, p, y, e0, e1)
                        + flip * asymmetric_score(&sq, p, y.flip(), e0, e1);
                    unbiased = unbiased.max((mean - (1.0 - e0 - e1) * sq.value(p, y)).abs());
                }
            }
        }
    }
    checks.push(Check::residual("asymmetric_surrogate_unbiased", unbiased));

    checks.push(Check::residual(
        "g_and_f_share_minimizer",
        max_over(with_eta().map(|(e, p)| {
            let by = |h: &dyn Fn(f64) -> f64| {
                ps.iter()
                    .copied()
                    .min_by(|a, b| h(*a).total_cmp(&h(*b)))
                    .expect("grid is non-empty")
            };
            let qg = by(&|q| g_symmetric_raw(&sq, q, p, e));
            let qf = by(&|q| sq.divergence(q, p));
            (qg - qf).abs()
        })),
    ));

    // E[s(q, ŷ) - s(p, ŷ) | history] - g(q, p) = 0, enumerating y and ŷ,
    // with and without a homogenizing flip, and for the asymmetric surrogate.
    let mut zero_mean: f64 = 0.0;
    for &e in &etas {
        for fp in [0.0, 0.1, 0.3] {
            let eta_scored = homogenized_rate(e, fp);
            for &p in &ps {
                for &q in &ps {
                    let mut mean = 0.0;
                    for y in Outcome::BOTH {
                        for y_hat in Outcome::BOTH {
                            let pr = y.likelihood(p) * if y_hat == y { 1.0 - e } else { e };
                            // The homogenizing coin, enumerated as well.
                            for flipped in [false, true] {
                                let pf = if flipped { fp } else { 1.0 - fp };
                                let label = if flipped { y_hat.flip() } else { y_hat };
                                mean += pr
                                    * pf
                                    * (symmetric_score(&sq, q, label, eta_scored)
                                        - symmetric_score(&sq, p, label, eta_scored));
                            }
                        }
                    }
                    zero_mean =
                        zero_mean.max((mean - g_symmetric_raw(&sq, q, p, eta_scored)).abs());
                }
            }
        }
    }
    for &e0 in &etas {
        for &e1 in &[0.0, 0.1, 0.3] {
            for &p in &ps {
                for &q in &ps {
                    let mut mean = 0.0;
                    for y in Outcome::BOTH {
                        let flip = if y.is_one() { e1 } else { e0 };
                        for (y_hat, pr) in [(y, 1.0 - flip), (y.flip(), flip)] {
                            mean += y.likelihood(p)
                                * pr
                                * (asymmetric_score(&sq, q, y_hat, e0, e1)
                                    - asymmetric_score(&sq, p, y_hat, e0, e1));
                        }
                    }
                    zero_mean = zero_mean.max((mean - (1.0 - e0 - e1) * sq.divergence(q, p)).abs());
                }
            }
        }
    }
    checks.push(Check::residual(
        "martingale_increment_has_zero_mean",
        zero_mean,
    ));

    let mut sigma_excess: f64 = 0.0;
    for &e in &etas {
        let sigma = sigma_g_paper(e, 0.0, 1.0);
        for &p in &ps {
            for &q in &ps {
                let g = g_symmetric_raw(&sq, q, p, e);
                for y_hat in Outcome::BOTH {
                    let inc =
                        symmetric_score(&sq, q, y_hat, e) - symmetric_score(&sq, p, y_hat, e) - g;
                    sigma_excess = sigma_excess.max(inc.abs() - sigma);
                }
            }
        }
    }
    checks.push(Check::residual(
        "increments_within_sigma_g",
        sigma_excess.max(0.0),
    ));

    let mut contraction: f64 = 0.0;
    for &fp in &[0.0, 0.1, 0.2, 0.3, 0.4, 0.45] {
        for &a in &etas {
            for &b in &etas {
                let lhs = (homogenized_rate(a, fp) - homogenized_rate(b, fp)).abs();
                contraction = contraction.max((lhs - (1.0 - 2.0 * fp) * (a - b).abs()).abs());
            }
        }
    }
    checks.push(Check::residual(
        "homogenization_contracts_spread",
        contraction,
    ));

    // After the fair complement coin the two class-conditional error rates
    // coincide for any p.
    let mut balance: f64 = 0.0;
    for &e0 in &etas {
        for &e1 in &etas {
            for &p in &ps {
                let rate0 = (1.0 - p) * e0 + p * e1;
                let rate1 = p * e1 + (1.0 - p) * e0;
                let err0 = 0.5 * (1.0 - p) * e0 + 0.5 * p * e1;
                balance = balance
                    .max((rate0 - rate1).abs())
                    .max((err0 / 0.5 - rate0).abs());
            }
        }
    }
    checks.push(Check::residual("symmetrization_balances_rates", balance));

    let p0s: Vec<f64> = (1..=19)
        .filter(|k| *k != 10)
        .map(|k| k as f64 * 0.05)
        .collect();
    let mut round_trip: f64 = 0.0;
    for &p0 in &p0s {
        for &a in &etas {
            for &b in &etas {
                let c1 = p0 * a + (1.0 - p0) * (1.0 - a);
                let c2 = p0 * b + (1.0 - p0) * (1.0 - b);
                let c3 = p0 * a * b + (1.0 - p0) * (1.0 - a) * (1.0 - b);
                let s = solve_noise_system(c1, c2, c3);
                let err = if s.is_ok() {
                    (s.p0 - p0)
                        .abs()
                        .max((s.eta_a - a).abs())
                        .max((s.eta_b - b).abs())
                        .max(moment_residual(c1, c2, c3, s.p0, s.eta_a, s.eta_b))
                } else {
                    1.0
                };
                round_trip = round_trip.max(err);
            }
        }
    }
    checks.push(Check::residual("two_group_round_trip", round_trip));

    CheckReport { checks }
}

/// Seeded Monte Carlo checks. Fixed seeds make the outcome reproducible.
pub fn monte_carlo_checks(opts: CheckOptions) -> crate::error::Result<CheckReport> {
    let mut checks = Vec::new();
    let scale = if opts.quick { 1 } else { 5 };

    // Channel flip frequency within four standard errors.
    let n = 20_000 * scale;
    let eta = 0.2;
    let ch = NoiseChannel::Symmetric { eta };
    let mut rng = stream_rng(1, Stream::Channel);
    let flips = (0..n)
        .filter(|_| ch.sample(Outcome::One, 1, &mut rng) == Outcome::Zero)
        .count();
    let se = (eta * (1.0 - eta) / n as f64).sqrt();
    checks.push(Check::new(
        "channel_flip_frequency_z",
        (flips as f64 / n as f64 - eta).abs() / se,
        4.0,
    ));

    // Importance-weighted estimate is unbiased: mean over short runs within
    // four standard errors.
    let runs = 400 * scale;
    let mut finals = Vec::with_capacity(runs);
    let mut rng = stream_rng(2, Stream::Reveal);
    for _ in 0..runs {
        let mut est = ImportanceWeightedEstimator::new(Probability::new(0.3)?)?;
        let mut last = 0.0;
        for _ in 0..100 {
            let y = Outcome::from_bool(rng.random_bool(0.5));
            let y_hat = ch.sample(y, 1, &mut rng);
            let shown = rng.random::<f64>() < 0.3;
            last = est.update(y_hat, shown.then_some(y));
        }
        finals.push(last);
    }
    let mean = finals.iter().sum::<f64>() / runs as f64;
    let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
    checks.push(Check::new(
        "importance_weighted_unbiased_z",
        (mean - eta).abs() / (var / runs as f64).sqrt(),
        4.0,
    ));

    // Symmetrized class-conditional rates both near (η0 + η1) / 2.
    let rounds = 100_000 * scale;
    let (e0, e1) = (0.3, 0.1);
    let asym = NoiseChannel::Asymmetric { eta0: e0, eta1: e1 };
    let mut rng = stream_rng(3, Stream::Flips);
    let mut counts = [[0u64; 2]; 2];
    for _ in 0..rounds {
        let p: f64 = rng.random();
        let y = Outcome::from_bool(rng.random::<f64>() < p);
        let y_hat = asym.sample(y, 1, &mut rng);
        let swap = rng.random_bool(0.5);
        let (y, y_hat) = if swap {
            (y.flip(), y_hat.flip())
        } else {
            (y, y_hat)
        };
        counts[y.is_one() as usize][0] += 1;
        counts[y.is_one() as usize][1] += (y_hat != y) as u64;
    }
    let worst = counts
        .iter()
        .map(|c| (c[1] as f64 / c[0] as f64 - 0.2).abs())
        .fold(0.0, f64::max);
    checks.push(Check::new("symmetrized_rates_near_average", worst, 0.01));

    // Martingale concentration: the share of runs whose terminal deviation
    // exceeds the Azuma radius stays below δ.
    let delta = 0.05;
    let horizon = 500 * scale;
    let spec = martingale_spec(horizon, 20_231);
    let mc = monte_carlo(&spec, 40 * scale, None)?;
    let exceed = mc
        .runs
        .iter()
        .filter(|r| r.martingale[1].abs() > e_mart(delta, r.bounds.sigma_g_empirical, horizon))
        .count();
    checks.push(Check::new(
        "martingale_exceedance_rate",
        exceed as f64 / mc.runs.len() as f64,
        delta,
    ));
    let sigma_gap = mc
        .runs
        .iter()
        .map(|r| r.bounds.sigma_g_empirical - r.bounds.sigma_g_closed_form)
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::new(
        "empirical_sigma_within_closed_form",
        sigma_gap,
        0.0,
    ));

    Ok(CheckReport { checks })
}

/// Oracle versus a biased expert under a known symmetric channel.
pub fn martingale_spec(horizon: usize, seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        seed,
        world: WorldModel {
            horizon,
            generator: Generator::Iid {
                distribution: PDistribution::Uniform {
                    low: 0.0,
                    high: 1.0,
                },
            },
        },
        experts: vec![
            ExpertModel::Oracle,
            ExpertModel::ConstantBias { offset: 0.3 },
        ],
        aggregation: AggregationRule::Channel {
            channel: NoiseChannel::Symmetric { eta: 0.2 },
        },
        peer_score: PeerScoreConfig {
            base_loss: Default::default(),
            correction: Correction::Symmetric { eta: 0.2 },
            flips: FlipMode::None,
        },
        estimator: EstimatorConfig::None,
        learner: Default::default(),
        bounds: Default::default(),
        output: Default::default(),
    }
}
