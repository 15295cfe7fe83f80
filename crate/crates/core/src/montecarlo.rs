//! Empirical stability and recurrence estimates with exact binomial bounds.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::certificates::{
    compose_foster, compute_thresholds, evaluate_theorem, CertificateBundle, CompositeFoster,
    GridSpec, LevelSetOutcome, TheoremCheckConfig, TheoremId,
};
use crate::error::{config_err, Error, Result};
use crate::executor::{
    par_map_indexed, solve, trial_seed, ExecConfig, RandomSolutionRecord, StopReason, Stream,
    STREAM_INITIAL_CONDITION,
};
use crate::hybrid::{lattice, SystemDefinition};
use crate::sets::{euclid, SetPredicate, SetSpec};

/// Rejection attempts per trial when drawing initial conditions.
pub const MAX_REJECTIONS: usize = 100;

/// Exact one-sided Clopper–Pearson lower confidence bound.
pub fn binomial_lower_bound(n_success: usize, n_trials: usize, confidence: f64) -> Result<f64> {
    if n_trials == 0 || n_success > n_trials {
        return Err(Error::Domain(format!(
            "need 0 <= successes <= trials and trials >= 1, got {n_success}/{n_trials}"
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Domain(format!("confidence {confidence} not in (0, 1)")));
    }
    let alpha = 1.0 - confidence;
    if n_success == 0 {
        return Ok(0.0);
    }
    let n = n_trials as f64;
    if n_success == n_trials {
        return Ok(alpha.powf(1.0 / n));
    }
    // P(X >= k | p) = I_p(k, n - k + 1), increasing in p.
    let k = n_success as f64;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if beta_reg(k, n - k + 1.0, mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(lo)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEstimate {
    pub n_trials: usize,
    pub n_success: usize,
    pub point_estimate: f64,
    pub lower_bound: f64,
    pub confidence: f64,
    /// Which event defined success.
    pub criterion: String,
    pub seed: u64,
    pub n_blow_up: usize,
}

impl EnsembleEstimate {
    fn new(
        n_success: usize,
        n_trials: usize,
        confidence: f64,
        criterion: String,
        seed: u64,
        n_blow_up: usize,
    ) -> Result<Self> {
        Ok(EnsembleEstimate {
            n_trials,
            n_success,
            point_estimate: n_success as f64 / n_trials as f64,
            lower_bound: binomial_lower_bound(n_success, n_trials, confidence)?,
            confidence,
            criterion,
            seed,
            n_blow_up,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub seed: u64,
    pub success: bool,
    /// First hybrid time `t + j` in the target, for recurrence trials.
    pub hitting_time: Option<f64>,
    pub stop_reason: StopReason,
    pub n_jumps: usize,
    pub initial_condition: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub estimate: EnsembleEstimate,
    pub trials: Vec<TrialRecord>,
}

impl EnsembleResult {
    /// One row per trial: `index,seed,success,hitting_time,stop_reason`.
    pub fn write_trials_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("index,seed,success,hitting_time,stop_reason\n");
        for t in &self.trials {
            let hit = t.hitting_time.map_or(String::new(), |h| h.to_string());
            let stop = serde_json::to_value(t.stop_reason)?;
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                t.index,
                t.seed,
                t.success,
                hit,
                stop.as_str().unwrap_or_default()
            ));
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn write_summary_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(&self.estimate)? + "\n")?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilityConfig {
    /// Initial conditions are drawn from `A~ + delta B`.
    pub delta: f64,
    pub eps_ball: f64,
    /// Attractivity time `T`.
    pub t_attract: f64,
    /// Hybrid-time horizon of each trial; `2 T` when absent.
    pub horizon: Option<f64>,
    pub trials: usize,
    pub confidence: f64,
    /// Inner radius as a fraction of `eps_ball`.
    pub inner_ratio: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            delta: 0.25,
            eps_ball: 0.5,
            t_attract: 20.0,
            horizon: None,
            trials: 500,
            confidence: 0.95,
            inner_ratio: 0.1,
        }
    }
}

impl StabilityConfig {
    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.eps_ball > 0.0 && self.t_attract > 0.0) {
            return Err(config_err("delta, eps_ball and T must be positive"));
        }
        if self.trials == 0 {
            return Err(config_err("need at least one trial"));
        }
        if self.horizon.is_some_and(|h| !(h >= self.t_attract)) {
            return Err(config_err("horizon must be at least T"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecurrenceConfig {
    /// Open bounded set of slow states; taken from the certificate when absent.
    pub o_slow: Option<SetSpec>,
    /// Radius of the fast-coordinate inflation `|z - m(x)| < delta_o`.
    pub delta_o: f64,
    /// Initial conditions are drawn from the ball of this radius.
    pub radius: f64,
    pub tau: f64,
    pub trials: usize,
    pub confidence: f64,
}

impl Default for RecurrenceConfig {
    fn default() -> Self {
        RecurrenceConfig {
            o_slow: None,
            delta_o: 0.1,
            radius: 5.0,
            tau: 10.0,
            trials: 1000,
            confidence: 0.95,
        }
    }
}

fn in_open(o: &SetPredicate, x: &[f64]) -> bool {
    match o.proximity(x) {
        Some(p) => p < 0.0,
        None => o.contains(x),
    }
}

/// Upper bound on `|y|_{A~}` through the projection of `x` onto `A`; exact
/// when `A` is a point.
pub fn distance_to_target(sys: &SystemDefinition, a: &SetPredicate, y: &[f64]) -> Result<f64> {
    let (x, z) = sys.split(y);
    let p = a
        .project(x)
        .ok_or_else(|| config_err("target set A does not support projection"))?;
    let dz = sys
        .qss_at(&p)?
        .values()
        .iter()
        .map(|m| euclid(z, m))
        .fold(f64::INFINITY, f64::min);
    let dx = euclid(x, &p);
    Ok(dx.hypot(dz))
}

fn uniform_in_box<R: Rng + ?Sized>(lo: &[f64], hi: &[f64], rng: &mut R) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(&l, &h)| {
            let u: f64 = rng.random();
            l + (h - l) * u
        })
        .collect()
}

/// Draws from `box` by rejection against `accept`.
fn rejection_sample<R: Rng + ?Sized>(
    lo: &[f64],
    hi: &[f64],
    rng: &mut R,
    mut accept: impl FnMut(&[f64]) -> Result<bool>,
) -> Result<Vec<f64>> {
    for _ in 0..MAX_REJECTIONS {
        let y = uniform_in_box(lo, hi, rng);
        if accept(&y)? {
            return Ok(y);
        }
    }
    Err(Error::NoInitialConditions {
        attempts: MAX_REJECTIONS,
    })
}

fn in_c_or_d(sys: &SystemDefinition, y: &[f64]) -> bool {
    sys.in_flow_set(y, 1e-9) || sys.in_jump_set(y, 1e-9)
}

/// Box containing `A~ + delta B`: the bounding box of `A` padded by `delta`,
/// and the range of `M` over it (probed on a lattice) padded by `delta`.
fn target_box(sys: &SystemDefinition, a: &SetPredicate, delta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let spec = a
        .spec()
        .ok_or_else(|| config_err("target set A must be a declarative set"))?;
    let (xl, xh) = spec.bounding_box(sys.n1);
    if xl.iter().chain(&xh).any(|v| !v.is_finite()) {
        return Err(config_err("target set A must be bounded"));
    }
    let mut zl = vec![f64::INFINITY; sys.n2];
    let mut zh = vec![f64::NEG_INFINITY; sys.n2];
    let xl: Vec<f64> = xl.iter().map(|v| v - delta).collect();
    let xh: Vec<f64> = xh.iter().map(|v| v + delta).collect();
    for x in lattice(&xl, &xh, 9) {
        for m in sys.qss_at(&x)?.values() {
            for k in 0..sys.n2 {
                zl[k] = zl[k].min(m[k]);
                zh[k] = zh[k].max(m[k]);
            }
        }
    }
    let mut lo = xl;
    let mut hi = xh;
    lo.extend(zl.iter().map(|v| v - delta));
    hi.extend(zh.iter().map(|v| v + delta));
    Ok((lo, hi))
}

/// Fraction of random solutions from `A~ + delta B` that stay in
/// `A~ + eps_ball B` and lie in `A~ + (inner_ratio eps_ball) B` once
/// `t + j >= T`.
pub fn estimate_stability_in_probability(
    sys: &SystemDefinition,
    cert: &CertificateBundle,
    epsilon: f64,
    config: &StabilityConfig,
    exec: &ExecConfig,
    seed: u64,
    workers: usize,
) -> Result<EnsembleResult> {
    config.validate()?;
    let a = cert
        .target_a
        .as_ref()
        .ok_or_else(|| config_err("certificate is missing target set A"))?;
    let (lo, hi) = target_box(sys, a, config.delta)?;
    let mut exec = exec.clone();
    exec.t_total = config.horizon.unwrap_or(2.0 * config.t_attract);
    let inner = config.inner_ratio * config.eps_ball;

    let trials = par_map_indexed(config.trials, workers, |i| -> Result<TrialRecord> {
        let s = trial_seed(seed, i as u64);
        let mut rng = Stream::seeded(s, STREAM_INITIAL_CONDITION);
        let y0 = rejection_sample(&lo, &hi, &mut rng, |y| {
            Ok(in_c_or_d(sys, y) && distance_to_target(sys, a, y)? <= config.delta)
        })?;
        let rec = solve(sys, &y0, epsilon, &exec, s)?;
        let mut success = rec.stop_reason != StopReason::BlowUp;
        for (time, y) in rec.arc.iter_nodes() {
            if !success {
                break;
            }
            let d = distance_to_target(sys, a, y)?;
            if d >= config.eps_ball || (time.total() >= config.t_attract && d >= inner) {
                success = false;
            }
        }
        Ok(trial_record(i, s, success, None, &rec, y0))
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    summarize(
        trials,
        config.confidence,
        format!(
            "stays within {} of A~ and within {} once t + j >= {} (start within {})",
            config.eps_ball, inner, config.t_attract, config.delta
        ),
        seed,
    )
}

fn trial_record(
    index: usize,
    seed: u64,
    success: bool,
    hitting_time: Option<f64>,
    rec: &RandomSolutionRecord,
    y0: Vec<f64>,
) -> TrialRecord {
    TrialRecord {
        index,
        seed,
        success,
        hitting_time,
        stop_reason: rec.stop_reason,
        n_jumps: rec.n_jumps(),
        initial_condition: y0,
    }
}

fn summarize(
    trials: Vec<TrialRecord>,
    confidence: f64,
    criterion: String,
    seed: u64,
) -> Result<EnsembleResult> {
    let n_success = trials.iter().filter(|t| t.success).count();
    let n_blow_up = trials
        .iter()
        .filter(|t| t.stop_reason == StopReason::BlowUp)
        .count();
    Ok(EnsembleResult {
        estimate: EnsembleEstimate::new(
            n_success,
            trials.len(),
            confidence,
            criterion,
            seed,
            n_blow_up,
        )?,
        trials,
    })
}

/// Fraction of random solutions from the `radius` ball that stop before
/// `t + j = tau` or visit `{x in O, |z - m(x)| < delta_o}` by then.
pub fn estimate_recurrence(
    sys: &SystemDefinition,
    cert: Option<&CertificateBundle>,
    config: &RecurrenceConfig,
    epsilon: f64,
    exec: &ExecConfig,
    seed: u64,
    workers: usize,
) -> Result<EnsembleResult> {
    if config.trials == 0 {
        return Err(config_err("need at least one trial"));
    }
    if !(config.delta_o > 0.0) || !(config.tau >= 0.0) || !(config.radius > 0.0) {
        return Err(config_err("delta_o and radius must be positive, tau nonnegative"));
    }
    let o: SetPredicate = match (&config.o_slow, cert.and_then(|c| c.target_o.clone())) {
        (Some(s), _) => s.clone().into(),
        (None, Some(o)) => o,
        (None, None) => return Err(config_err("recurrence needs an open set O")),
    };
    let n = sys.dim();
    let lo = vec![-config.radius; n];
    let hi = vec![config.radius; n];
    let mut exec = exec.clone();
    exec.t_total = config.tau;
    let in_target = |y: &[f64]| -> Result<bool> {
        let (x, _) = sys.split(y);
        Ok(in_open(&o, x) && sys.qss_distance(y)? < config.delta_o)
    };

    let trials = par_map_indexed(config.trials, workers, |i| -> Result<TrialRecord> {
        let s = trial_seed(seed, i as u64);
        let mut rng = Stream::seeded(s, STREAM_INITIAL_CONDITION);
        let y0 = rejection_sample(&lo, &hi, &mut rng, |y| {
            Ok(in_c_or_d(sys, y) && y.iter().map(|v| v * v).sum::<f64>().sqrt() <= config.radius)
        })?;
        let mut hit = None;
        if config.tau == 0.0 {
            if in_target(&y0)? {
                hit = Some(0.0);
            }
            let stop = StopReason::CompleteHorizon;
            return Ok(TrialRecord {
                index: i,
                seed: s,
                success: hit.is_some(),
                hitting_time: hit,
                stop_reason: stop,
                n_jumps: 0,
                initial_condition: y0,
            });
        }
        let rec = solve(sys, &y0, epsilon, &exec, s)?;
        for (time, y) in rec.arc.iter_nodes() {
            if time.total() > config.tau {
                break;
            }
            if in_target(y)? {
                hit = Some(time.total());
                break;
            }
        }
        let end = rec.arc.end().map_or(0.0, |(t, _)| t.total());
        let stopped_early = matches!(
            rec.stop_reason,
            StopReason::StoppedOutsideCUnionD | StopReason::JumpBudgetExhausted
        ) && end < config.tau;
        let success = rec.stop_reason != StopReason::BlowUp && (hit.is_some() || stopped_early);
        Ok(trial_record(i, s, success, hit, &rec, y0))
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    summarize(
        trials,
        config.confidence,
        format!(
            "stops before t + j = {tau} or visits {{x in O, |z - m(x)| < {}}} by t + j = {tau} \
             (the graph set is replaced by this inflation)",
            config.delta_o,
            tau = config.tau
        ),
        seed,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LevelSetConfig {
    pub levels: Vec<f64>,
    pub per_level: usize,
    pub duration: f64,
    /// Deviation below which a level counts as stationary.
    pub tolerance: f64,
    /// Search box for level-set points; the verification grid box when absent.
    pub search_lo: Option<Vec<f64>>,
    pub search_hi: Option<Vec<f64>>,
}

impl Default for LevelSetConfig {
    fn default() -> Self {
        LevelSetConfig {
            levels: vec![0.1, 0.5, 1.0],
            per_level: 8,
            duration: 5.0,
            tolerance: 1e-6,
            search_lo: None,
            search_hi: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub level: f64,
    /// Smallest (over sampled solutions) of the largest `|E - c|` along a solution.
    pub min_max_deviation: f64,
    pub stationary: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetReport {
    pub levels: Vec<LevelResult>,
    pub stationary_levels: Vec<f64>,
    pub passed: bool,
    pub note: String,
}

impl LevelSetReport {
    pub fn outcome(&self) -> LevelSetOutcome {
        LevelSetOutcome {
            passed: self.passed,
            detail: if self.passed {
                format!("no stationary level among {} sampled ({})", self.levels.len(), self.note)
            } else {
                format!("candidate stationary levels {:?} ({})", self.stationary_levels, self.note)
            },
        }
    }
}

/// Optional region whose points are skipped by the level-set screen.
pub type Exclusion<'a> = Option<&'a (dyn Fn(&[f64]) -> bool + Sync)>;

/// Points with `E(y) = c` by bisection between sampled points below and above
/// the level.
#[allow(clippy::too_many_arguments)]
fn level_points<R: Rng + ?Sized>(
    sys: &SystemDefinition,
    e: &dyn Fn(&[f64]) -> f64,
    c: f64,
    count: usize,
    lo: &[f64],
    hi: &[f64],
    exclude: Exclusion<'_>,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let budget = 200 * count.max(1);
    let admissible = |y: &[f64]| in_c_or_d(sys, y) && !exclude.is_some_and(|f| f(y));
    let mut below = Vec::new();
    let mut above = Vec::new();
    for _ in 0..budget {
        let y = uniform_in_box(lo, hi, rng);
        if e(&y) < c {
            below.push(y);
        } else {
            above.push(y);
        }
        if below.len() >= count && above.len() >= count {
            break;
        }
    }
    if below.is_empty() || above.is_empty() {
        return Err(Error::EmptyLevelSet { level: c });
    }
    let mut out = Vec::new();
    for k in 0..budget {
        if out.len() == count {
            break;
        }
        let (mut a, mut b) = (
            below[k % below.len()].clone(),
            above[(k * 7 + 3) % above.len()].clone(),
        );
        for _ in 0..100 {
            let mid: Vec<f64> = a.iter().zip(&b).map(|(p, q)| 0.5 * (p + q)).collect();
            if e(&mid) < c {
                a = mid;
            } else {
                b = mid;
            }
        }
        if admissible(&b) && (e(&b) - c).abs() <= 1e-9 * c.max(1.0) {
            out.push(b);
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyLevelSet { level: c });
    }
    Ok(out)
}

/// Heuristic screen for solutions that remain on a level set of `E`.
///
/// Flags a level as a stationary candidate when every sampled solution
/// started on it keeps `|E - c|` within the tolerance over the horizon. Not
/// conclusive either way.
#[allow(clippy::too_many_arguments)]
pub fn check_level_set_nonstationarity(
    sys: &SystemDefinition,
    e: &(dyn Fn(&[f64]) -> f64 + Sync),
    config: &LevelSetConfig,
    lo: &[f64],
    hi: &[f64],
    exclude: Exclusion<'_>,
    epsilon: f64,
    exec: &ExecConfig,
    seed: u64,
) -> Result<LevelSetReport> {
    if config.levels.is_empty() || config.levels.iter().any(|c| !(*c > 0.0)) {
        return Err(config_err("level-set heuristic needs positive levels"));
    }
    if config.per_level == 0 || !(config.duration > 0.0) {
        return Err(config_err("level-set heuristic needs samples and a positive duration"));
    }
    let mut exec = exec.clone();
    exec.t_total = config.duration;
    let mut levels = Vec::new();
    for (li, &c) in config.levels.iter().enumerate() {
        let mut rng = Stream::seeded(trial_seed(seed, li as u64), STREAM_INITIAL_CONDITION);
        let starts = level_points(sys, e, c, config.per_level, lo, hi, exclude, &mut rng)?;
        let devs = par_map_indexed(starts.len(), 0, |k| -> Result<f64> {
            let s = trial_seed(seed ^ 0x5eed_1e7e1, (li * 1000 + k) as u64);
            let rec = solve(sys, &starts[k], epsilon, &exec, s)?;
            let mut dev: f64 = 0.0;
            for (_, y) in rec.arc.iter_nodes() {
                if exclude.is_some_and(|f| f(y)) {
                    return Ok(f64::INFINITY);
                }
                dev = dev.max((e(y) - c).abs());
            }
            Ok(dev)
        })?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let min_dev = devs.iter().cloned().fold(f64::INFINITY, f64::min);
        let stationary = devs.iter().all(|d| *d <= config.tolerance);
        levels.push(LevelResult {
            level: c,
            min_max_deviation: min_dev,
            stationary,
        });
    }
    let stationary_levels: Vec<f64> = levels.iter().filter(|l| l.stationary).map(|l| l.level).collect();
    Ok(LevelSetReport {
        passed: stationary_levels.is_empty(),
        stationary_levels,
        levels,
        note: "sampling heuristic, not conclusive".into(),
    })
}

/// Level-set screen for the relaxed theorems: `E_θ*` levels, excluding the
/// inflated graph set for the recurrence version.
#[allow(clippy::too_many_arguments)]
pub fn level_set_outcome(
    sys: &SystemDefinition,
    cert: &CertificateBundle,
    theorem: TheoremId,
    epsilon: f64,
    grid: &GridSpec,
    config: &LevelSetConfig,
    exec: &ExecConfig,
    seed: u64,
) -> Result<LevelSetReport> {
    let k = cert
        .constants
        .flow()
        .ok_or_else(|| config_err("certificate is missing flow constants"))?;
    let foster: CompositeFoster = compose_foster(cert, compute_thresholds(k)?.theta_star, sys.n1)?;
    let e = |y: &[f64]| foster.eval(y);
    let lo = config.search_lo.clone().unwrap_or_else(|| grid.lo.clone());
    let hi = config.search_hi.clone().unwrap_or_else(|| grid.hi.clone());
    let radius = cert.o_tilde_radius.unwrap_or(1e-9);
    let o = cert.target_o.clone();
    let exclude = move |y: &[f64]| -> bool {
        let Some(o) = &o else { return false };
        let (x, _) = sys.split(y);
        in_open(o, x) && sys.qss_distance(y).is_ok_and(|d| d < radius)
    };
    let ex: Exclusion<'_> = if theorem == TheoremId::T4 {
        Some(&exclude)
    } else {
        None
    };
    check_level_set_nonstationarity(sys, &e, config, &lo, &hi, ex, epsilon, exec, seed)
}

/// Empirical side of a sweep row.
#[derive(Clone, Debug, PartialEq)]
pub enum Empirical {
    Stability(StabilityConfig),
    Recurrence(RecurrenceConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub verdict: bool,
    pub failing: Vec<String>,
    pub estimate: EnsembleEstimate,
}

/// Checklist verdict and empirical estimate for each `epsilon`, ordered by
/// `epsilon`.
#[allow(clippy::too_many_arguments)]
pub fn sweep_epsilon(
    sys: &SystemDefinition,
    cert: &CertificateBundle,
    eps_grid: &[f64],
    theorem: TheoremId,
    check: &TheoremCheckConfig,
    level_set: &LevelSetConfig,
    empirical: &Empirical,
    exec: &ExecConfig,
    seed: u64,
    workers: usize,
) -> Result<Vec<SweepRow>> {
    if eps_grid.is_empty() || eps_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(config_err("epsilon grid must be nonempty and positive"));
    }
    let mut grid = eps_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(grid.len());
    for eps in grid {
        let mut cfg = check.clone();
        if matches!(theorem, TheoremId::T2 | TheoremId::T4) && cfg.level_set.is_none() {
            let r = level_set_outcome(sys, cert, theorem, eps, &cfg.grid, level_set, exec, seed)?;
            cfg.level_set = Some(r.outcome());
        }
        let checklist = evaluate_theorem(sys, cert, eps, theorem, &cfg)?;
        let estimate = match empirical {
            Empirical::Stability(s) => {
                estimate_stability_in_probability(sys, cert, eps, s, exec, seed, workers)?.estimate
            }
            Empirical::Recurrence(r) => {
                estimate_recurrence(sys, Some(cert), r, eps, exec, seed, workers)?.estimate
            }
        };
        rows.push(SweepRow {
            epsilon: eps,
            verdict: checklist.verdict,
            failing: checklist.failing().iter().map(|e| e.name.clone()).collect(),
            estimate,
        });
    }
    Ok(rows)
}
