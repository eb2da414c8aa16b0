//! One seeded run: the round protocol, the counterfactual books, and the
//! end-of-run bound comparison.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate, reference_prob, AggregationRule, NoiseChannel};
use crate::bounds::{
    c_comp, e_mart, importance_weighted_epsilon, sigma_g_paper, theorem1_bound, theorem3_bound,
    theorem6_bound, two_group_epsilon, BoundInputs,
};
use crate::error::Result;
use crate::estimation::{ImportanceWeightedEstimator, Moments, SolveStatus, TwoGroupEstimator};
use crate::learner::{
    hedge_learning_rate, online_bound, LedgerSummary, RegretLedger, RoundData, ScoreScaler,
    WeightVector,
};
use crate::loss::PsiParams;
use crate::peer_score::{
    clamp_estimate, homogenize_round, homogenized_rate, symmetrize_round, Correction, FlipMode,
    RoundView, ESTIMATE_CEILING,
};
use crate::probability::{Outcome, Probability};
use crate::sim::rng::{stream_rng, Stream};
use crate::sim::spec::{EstimatorConfig, ExperimentSpec, SigmaChoice, SigmaRule};

/// One round as the evaluator sees it. Optional fields are present exactly
/// when the corresponding mechanism is active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub p_t: f64,
    pub y: Outcome,
    /// Reference label before any flip (group A's label with two groups).
    pub y_hat: Outcome,
    pub y_hat_b: Option<Outcome>,
    /// Label actually scored against, after flips.
    pub y_tilde: Option<Outcome>,
    pub sym_flip: Option<bool>,
    pub homog_flip: Option<bool>,
    /// Whether a vote-style aggregator fell back to its coin.
    pub tie_coin: Option<bool>,
    /// Whether ground truth was revealed to the estimator.
    pub revealed: Option<bool>,
    pub chosen: usize,
    pub predictions: Vec<f64>,
    pub scores: Vec<f64>,
    pub losses: Vec<f64>,
    /// Noise rate the correction used this round.
    pub eta_hat: Option<f64>,
    /// Largest weight after the update, and its owner.
    pub weight_max: f64,
    pub weight_argmax: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorCheckpoint {
    pub t: usize,
    pub eta_hat: Option<f64>,
    pub p0: Option<f64>,
    pub eta_b: Option<f64>,
    pub status: Option<SolveStatus>,
    pub moments: Option<Moments>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub kind: String,
    pub final_eta_hat: Option<f64>,
    pub checkpoints: Vec<EstimatorCheckpoint>,
    pub group_a: Option<Vec<usize>>,
    pub group_b: Option<Vec<usize>>,
    pub revealed: Option<usize>,
    /// `Σ ε_t` of the matching high-probability error series.
    pub epsilon_total: f64,
    /// Largest `|P(A=1,B=1|y) - P(A=1|y) P(B=1|y)|` over both outcomes; zero
    /// when the groups really are conditionally independent.
    pub conditional_dependence: Option<f64>,
}

/// Bound values and every input needed to recompute them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub delta: f64,
    pub delta_g: f64,
    pub alpha: f64,
    pub sigma_g: f64,
    pub sigma_g_closed_form: f64,
    pub sigma_g_empirical: f64,
    pub score_range: f64,
    pub psi: Option<PsiParams>,
    pub e_online: f64,
    pub e_mart_sigma: f64,
    pub e_mart_two: f64,
    pub theorem1: Option<f64>,
    pub theorem1_holds: Option<bool>,
    pub theorem1_confidence: Option<f64>,
    pub theorem3_eta: Option<f64>,
    pub theorem3: Option<f64>,
    pub theorem3_holds: Option<bool>,
    pub max_eta_tilde: Option<f64>,
    pub c_comp: Option<f64>,
    pub theorem6: Option<f64>,
    pub theorem6_holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub horizon: usize,
    pub experts: usize,
    pub learning_rate: f64,
    pub score_lo: f64,
    pub score_hi: f64,
    pub ledger: LedgerSummary,
    pub terminal_weights: Vec<f64>,
    pub terminal_argmax: usize,
    /// Fraction of rounds where the unflipped reference missed the outcome.
    pub disagreement_rate: f64,
    pub ties: usize,
    /// Terminal value of `Σ_t [s(p_i, ỹ) - s(p_t, ỹ) - g(p_i, p_t)]` per expert.
    pub martingale: Vec<f64>,
    pub bounds: BoundReport,
    pub estimator: Option<EstimatorReport>,
}

enum EstimatorState {
    None,
    Iw(ImportanceWeightedEstimator),
    TwoGroup {
        est: TwoGroupEstimator,
        channel_b: Option<NoiseChannel>,
        // counts[y] = (rounds, A = 1, B = 1, both = 1)
        counts: [[u64; 4]; 2],
    },
}

/// Run and collect the whole trace in memory.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<(Vec<TraceRecord>, RunSummary)> {
    let mut trace = Vec::with_capacity(spec.horizon());
    let mut push = |r: &TraceRecord| {
        trace.push(r.clone());
        Ok(())
    };
    let summary = run_streaming(spec, Some(&mut push))?;
    Ok((trace, summary))
}

/// Run without keeping a trace.
pub fn run_summary(spec: &ExperimentSpec) -> Result<RunSummary> {
    run_streaming(spec, None)
}

fn is_checkpoint(t: usize, horizon: usize) -> bool {
    if t == horizon {
        return true;
    }
    let mut k = 1;
    while k < t {
        k *= 10;
    }
    k == t
}

/// Receives each trace record as it is produced.
pub type TraceSink<'a> = &'a mut dyn FnMut(&TraceRecord) -> Result<()>;

/// Run the round protocol, handing each record to `sink` as it is produced.
///
/// Per round: draw `p_t` and `y_t`; collect forecasts; build the reference;
/// apply flips; score with the estimate available before this round; run
/// Hedge on the rescaled scores; book true losses, `f` and exact `g`; only
/// then let the estimator see the round.
pub fn run_streaming(spec: &ExperimentSpec, mut sink: Option<TraceSink<'_>>) -> Result<RunSummary> {
    spec.validate()?;
    let score_spec = spec.peer_score.build()?;
    let loss = score_spec.base_loss.clone();
    let n = spec.experts.len();
    let horizon = spec.horizon();
    let seed = spec.seed;

    let mut world_rng = stream_rng(seed, Stream::World);
    let mut outcome_rng = stream_rng(seed, Stream::Outcome);
    let mut expert_rng = stream_rng(seed, Stream::Experts);
    let mut channel_rng = stream_rng(seed, Stream::Channel);
    let mut channel_b_rng = stream_rng(seed, Stream::ChannelB);
    let mut agg_rng = stream_rng(seed, Stream::Aggregation);
    let mut flip_rng = stream_rng(seed, Stream::Flips);
    let mut learner_rng = stream_rng(seed, Stream::Learner);
    let mut reveal_rng = stream_rng(seed, Stream::Reveal);

    let (score_lo, score_hi) = score_spec.score_bounds();
    let scaler = ScoreScaler::new(score_lo, score_hi)?;
    let learning_rate = spec
        .learner
        .learning_rate
        .unwrap_or_else(|| hedge_learning_rate(horizon, n));
    let mut weights = WeightVector::uniform(n, learning_rate)?;
    let mut ledger = RegretLedger::new(n);

    let symmetrize = matches!(score_spec.flips, FlipMode::Symmetrize);
    let flip_prob = match score_spec.flips {
        FlipMode::Homogenize { flip_prob } => Some(Probability::new(flip_prob)?),
        _ => None,
    };
    let channel = match &spec.aggregation {
        AggregationRule::Channel { channel } => Some(channel.clone()),
        _ => None,
    };

    let mut estimator = match &spec.estimator {
        EstimatorConfig::None => EstimatorState::None,
        EstimatorConfig::ImportanceWeighted { reveal_prob } => EstimatorState::Iw(
            ImportanceWeightedEstimator::new(Probability::new(*reveal_prob)?)?,
        ),
        EstimatorConfig::TwoGroup { group_b_channel } => {
            let mut partition_rng = stream_rng(seed, Stream::Partition);
            EstimatorState::TwoGroup {
                est: TwoGroupEstimator::random_partition(n, &mut partition_rng)?,
                channel_b: group_b_channel.clone(),
                counts: [[0; 4]; 2],
            }
        }
    };
    let mut latest_estimate: Option<f64> = None;
    let mut checkpoints = Vec::new();
    let mut revealed_count = 0usize;

    let mut preds = vec![0.0; n];
    let mut scores = vec![0.0; n];
    let mut scaled = vec![0.0; n];
    let mut losses = vec![0.0; n];
    let mut f_values = vec![0.0; n];
    let mut g_values = vec![0.0; n];
    let mut martingale = vec![0.0; n];
    let mut sigma_emp: f64 = 0.0;
    let mut disagreements = 0usize;
    let mut ties = 0usize;
    let mut group_a_preds = Vec::new();
    let mut group_b_preds = Vec::new();

    for t in 1..=horizon {
        let p_t = spec.world.p(t, &mut world_rng);
        let y = Outcome::from_bool(outcome_rng.random::<f64>() < p_t);
        for (slot, expert) in preds.iter_mut().zip(&spec.experts) {
            *slot = expert.predict(p_t, t, &mut expert_rng);
        }

        // Reference label, its law given the panel and history, and the
        // second group's label when two groups are in play.
        let mut tie_coin = None;
        let mut y_hat_b = None;
        let (y_hat, ref_prob) = match (&channel, &mut estimator) {
            (Some(ch), state) => {
                let a = ch.sample(y, t, &mut channel_rng);
                if let EstimatorState::TwoGroup { channel_b, .. } = state {
                    let chb = channel_b.as_ref().unwrap_or(ch);
                    y_hat_b = Some(chb.sample(y, t, &mut channel_b_rng));
                }
                (
                    a,
                    reference_prob(Probability::from_interior(p_t)?, ch, t).value(),
                )
            }
            (None, EstimatorState::TwoGroup { est, .. }) => {
                group_a_preds.clear();
                group_b_preds.clear();
                group_a_preds.extend(est.group_a().iter().map(|&i| preds[i]));
                group_b_preds.extend(est.group_b().iter().map(|&i| preds[i]));
                let a = aggregate(&group_a_preds, &spec.aggregation, Some(y), t, &mut agg_rng)?;
                let b = aggregate(&group_b_preds, &spec.aggregation, Some(y), t, &mut agg_rng)?;
                y_hat_b = Some(b.label);
                tie_coin = Some(a.tie_broken);
                (a.label, if a.tie_broken { 0.5 } else { a.label.as_f64() })
            }
            (None, _) => {
                let a = aggregate(&preds, &spec.aggregation, Some(y), t, &mut agg_rng)?;
                tie_coin = Some(a.tie_broken);
                (a.label, if a.tie_broken { 0.5 } else { a.label.as_f64() })
            }
        };
        if y_hat != y {
            disagreements += 1;
        }
        if tie_coin == Some(true) {
            ties += 1;
        }

        let mut view = RoundView::new(t, preds.clone(), y_hat, Some(y));
        if symmetrize {
            view = symmetrize_round(view, &mut flip_rng);
        }
        if let Some(fp) = flip_prob {
            view = homogenize_round(view, fp, &mut flip_rng);
        }

        // Noise rate of the scored label, from information before round t.
        let estimate = if score_spec.is_estimated() {
            let raw = match (latest_estimate, &score_spec.correction) {
                (Some(e), _) => clamp_estimate(e),
                (None, Correction::Estimated { initial_eta }) => *initial_eta,
                _ => 0.0,
            };
            Some(match flip_prob {
                Some(fp) => clamp_estimate(homogenized_rate(raw, fp.value())),
                None => raw,
            })
        } else {
            None
        };
        let eta_used = score_spec.effective_eta(estimate);

        let swapped = view.symmetrized == Some(true);
        let p_ref = if swapped { 1.0 - p_t } else { p_t };
        let s_ref = score_spec.score(p_ref, view.y_hat, estimate);
        let after_homog = |r: f64| match flip_prob {
            Some(fp) => (1.0 - 2.0 * fp.value()) * r + fp.value(),
            None => r,
        };
        let expected = |q: f64, r: f64| {
            r * score_spec.score(q, Outcome::One, estimate)
                + (1.0 - r) * score_spec.score(q, Outcome::Zero, estimate)
        };
        let r_plain = after_homog(ref_prob);
        let r_swapped = after_homog(1.0 - ref_prob);
        let e_ref_plain = expected(p_t, r_plain);
        let e_ref_swapped = expected(1.0 - p_t, r_swapped);

        for i in 0..n {
            scores[i] = score_spec.score(view.predictions[i], view.y_hat, estimate);
            scaled[i] = scaler.scale(scores[i]);
            losses[i] = loss.value(preds[i], y);
            f_values[i] = loss.divergence(preds[i], p_t);
            let plain = expected(preds[i], r_plain) - e_ref_plain;
            g_values[i] = if symmetrize {
                0.5 * plain + 0.5 * (expected(1.0 - preds[i], r_swapped) - e_ref_swapped)
            } else {
                plain
            };
            let increment = scores[i] - s_ref - g_values[i];
            martingale[i] += increment;
            sigma_emp = sigma_emp.max(increment.abs());
        }

        let drawn_from = weights.weights();
        let chosen = weights.hedge_step(&scaled, t, &mut learner_rng)?;
        ledger.record(RoundData {
            losses: &losses,
            scores: &scores,
            f_values: &f_values,
            g_values: &g_values,
            weights: &drawn_from,
            chosen,
        })?;

        let mut revealed = None;
        match &mut estimator {
            EstimatorState::None => {}
            EstimatorState::Iw(est) => {
                let show = reveal_rng.random::<f64>() < est.reveal_prob().value();
                revealed = Some(show);
                revealed_count += show as usize;
                latest_estimate = Some(est.update(y_hat, show.then_some(y)));
            }
            EstimatorState::TwoGroup { est, counts, .. } => {
                let b = y_hat_b.expect("two-group rounds produce a second label");
                est.update(y_hat, b);
                let c = &mut counts[y.is_one() as usize];
                c[0] += 1;
                c[1] += y_hat.is_one() as u64;
                c[2] += b.is_one() as u64;
                c[3] += (y_hat.is_one() && b.is_one()) as u64;
                let sol = est.solve();
                if sol.is_ok() {
                    latest_estimate = Some(sol.eta_a);
                }
            }
        }
        if !matches!(estimator, EstimatorState::None) && is_checkpoint(t, horizon) {
            checkpoints.push(match &estimator {
                EstimatorState::TwoGroup { est, .. } => {
                    let sol = est.solve();
                    let ok = sol.is_ok();
                    EstimatorCheckpoint {
                        t,
                        eta_hat: latest_estimate,
                        p0: ok.then_some(sol.p0),
                        eta_b: ok.then_some(sol.eta_b),
                        status: Some(sol.status),
                        moments: Some(est.moments()),
                    }
                }
                _ => EstimatorCheckpoint {
                    t,
                    eta_hat: latest_estimate,
                    p0: None,
                    eta_b: None,
                    status: None,
                    moments: None,
                },
            });
        }

        if let Some(sink) = sink.as_mut() {
            let (weight_argmax, weight_max) = weights.argmax();
            let flipped = symmetrize || flip_prob.is_some();
            sink(&TraceRecord {
                t,
                p_t,
                y,
                y_hat,
                y_hat_b,
                y_tilde: flipped.then_some(view.y_hat),
                sym_flip: view.symmetrized,
                homog_flip: view.homogenized,
                tie_coin,
                revealed,
                chosen,
                predictions: preds.clone(),
                scores: scores.clone(),
                losses: losses.clone(),
                eta_hat: if score_spec.is_estimated() {
                    eta_used
                } else {
                    None
                },
                weight_max,
                weight_argmax,
            })?;
        }
    }

    let ledger = ledger.summary();
    let terminal_weights = weights.weights();
    let terminal_argmax = weights.argmax().0;

    // Bound inputs.
    let b = &spec.bounds;
    let (p_lo, p_hi) = spec.world.support();
    let sigma_closed = match score_spec.correction {
        Correction::Symmetric { eta } => sigma_g_paper(eta, p_lo, p_hi),
        Correction::Estimated { .. } => (0..=10)
            .map(|k| sigma_g_paper(ESTIMATE_CEILING * k as f64 / 10.0, p_lo, p_hi))
            .fold(0.0, f64::max),
        // No closed form for the asymmetric surrogate; twice the score
        // range bounds any increment.
        Correction::Asymmetric { .. } => 2.0 * scaler.range(),
    };
    let sigma_g = match b.sigma_g {
        SigmaChoice::Rule(SigmaRule::ClosedForm) => sigma_closed,
        SigmaChoice::Rule(SigmaRule::Empirical) => sigma_emp,
        SigmaChoice::Value(v) => v,
    };
    let epsilon =
        match &spec.estimator {
            EstimatorConfig::None => None,
            EstimatorConfig::ImportanceWeighted { reveal_prob } => Some(
                importance_weighted_epsilon(horizon, b.delta, Probability::new(*reveal_prob)?),
            ),
            EstimatorConfig::TwoGroup { .. } => Some(two_group_epsilon(horizon, b.delta)),
        };
    let epsilon_total = epsilon.as_ref().map(|e| e.iter().sum()).unwrap_or(0.0);
    let base = |psi: PsiParams| BoundInputs {
        delta: b.delta,
        sigma_g,
        horizon,
        experts: n,
        psi,
        epsilon: epsilon.clone(),
        alpha: b.alpha,
        max_eta_tilde: 0.0,
        score_range: scaler.range(),
        delta_g: b.delta_g,
    };

    let psi = score_spec.psi();
    let (theorem1, theorem1_confidence) = match &psi {
        Some(psi) => {
            let inputs = base(*psi);
            (
                Some(theorem1_bound(&inputs)?),
                Some(inputs.theorem1_confidence()),
            )
        }
        None => (None, None),
    };
    // Rate of the scored label, known to the evaluator only under a
    // symmetric-style channel.
    let scored_rate = channel.as_ref().and_then(|ch| match ch {
        NoiseChannel::Asymmetric { .. } => None,
        other => {
            let eta = other.max_rate();
            Some(match flip_prob {
                Some(fp) => homogenized_rate(eta, fp.value()),
                None => eta,
            })
        }
    });
    let (theorem3_eta, theorem3) = match (score_spec.is_estimated(), scored_rate) {
        (true, Some(eta)) => (
            Some(eta),
            Some(theorem3_bound(&base(PsiParams::Symmetric { eta }))?),
        ),
        _ => (None, None),
    };
    let (max_eta_tilde, c_comp_value, theorem6) = match (flip_prob, &channel) {
        (Some(fp), Some(ch)) => {
            let tilde = homogenized_rate(ch.max_rate(), fp.value());
            if tilde < 0.5 {
                let mut inputs = base(PsiParams::Symmetric { eta: 0.0 });
                inputs.max_eta_tilde = tilde;
                (
                    Some(tilde),
                    Some(c_comp(b.alpha, tilde)?),
                    Some(theorem6_bound(&inputs, ledger.best_loss)?),
                )
            } else {
                (Some(tilde), None, None)
            }
        }
        _ => (None, None, None),
    };
    let bounds = BoundReport {
        delta: b.delta,
        delta_g: b.delta_g,
        alpha: b.alpha,
        sigma_g,
        sigma_g_closed_form: sigma_closed,
        sigma_g_empirical: sigma_emp,
        score_range: scaler.range(),
        psi,
        e_online: online_bound(horizon, n, scaler.range()),
        e_mart_sigma: e_mart(b.delta, sigma_g, horizon),
        e_mart_two: e_mart(b.delta, 2.0, horizon),
        theorem1_holds: theorem1.map(|v| ledger.regret <= v),
        theorem1,
        theorem1_confidence,
        theorem3_eta,
        theorem3_holds: theorem3.map(|v| ledger.regret <= v),
        theorem3,
        max_eta_tilde,
        c_comp: c_comp_value,
        theorem6_holds: theorem6.map(|v| ledger.algorithm_loss <= v),
        theorem6,
    };

    let estimator_report = match &estimator {
        EstimatorState::None => None,
        EstimatorState::Iw(_) => Some(EstimatorReport {
            kind: "importance_weighted".into(),
            final_eta_hat: latest_estimate,
            checkpoints,
            group_a: None,
            group_b: None,
            revealed: Some(revealed_count),
            epsilon_total,
            conditional_dependence: None,
        }),
        EstimatorState::TwoGroup { est, counts, .. } => {
            let dependence = counts
                .iter()
                .filter(|c| c[0] > 0)
                .map(|c| {
                    let m = c[0] as f64;
                    (c[3] as f64 / m - (c[1] as f64 / m) * (c[2] as f64 / m)).abs()
                })
                .fold(0.0, f64::max);
            Some(EstimatorReport {
                kind: "two_group".into(),
                final_eta_hat: latest_estimate,
                checkpoints,
                group_a: Some(est.group_a().to_vec()),
                group_b: Some(est.group_b().to_vec()),
                revealed: None,
                epsilon_total,
                conditional_dependence: Some(dependence),
            })
        }
    };

    Ok(RunSummary {
        seed,
        horizon,
        experts: n,
        learning_rate,
        score_lo,
        score_hi,
        ledger,
        terminal_weights,
        terminal_argmax,
        disagreement_rate: disagreements as f64 / horizon as f64,
        ties,
        martingale,
        bounds,
        estimator: estimator_report,
    })
}
