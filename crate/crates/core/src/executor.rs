//! Random hybrid solutions: alternating flow segments and stochastic jumps.
//!
//! Every solution owns a ChaCha8 generator keyed by its seed. Independent
//! streams of that generator feed the jump inputs, jump selections, overlap
//! draws and flow selections, so each kind of randomness is consumed in order
//! and independently of the others.

use std::collections::VecDeque;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{integrate_flow_from, FlowConfig, JumpWatch, TerminalReason, BLOW_UP_BOUND};
use crate::hybrid::{
    ArcSegment, HybridArc, HybridTime, JumpDistribution, JumpPoint, Node, SystemDefinition,
};

pub const STREAM_JUMP_INPUT: u64 = 0;
pub const STREAM_JUMP_SELECTION: u64 = 1;
pub const STREAM_OVERLAP: u64 = 2;
pub const STREAM_FLOW_SELECTION: u64 = 3;
pub const STREAM_INITIAL_CONDITION: u64 = 4;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `index` under `master`: SplitMix64 at counter `index + 1`.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// A random stream that first replays forced uniforms, then falls back to a
/// seeded ChaCha8 stream.
///
/// A forced value `u` is delivered so that `random::<f64>()` returns `u`
/// exactly when `u` is a multiple of 2^-53 (every double in `[0.5, 1)` is).
#[derive(Clone, Debug)]
pub struct Stream {
    forced: VecDeque<u64>,
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn seeded(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Stream {
            forced: VecDeque::new(),
            rng,
        }
    }

    pub fn forced(uniforms: &[f64], then: Stream) -> Self {
        let mut s = then;
        s.forced = uniforms
            .iter()
            .map(|u| ((u.clamp(0.0, 1.0 - f64::EPSILON / 2.0) * (1u64 << 53) as f64) as u64) << 11)
            .collect();
        s
    }
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        match self.forced.pop_front() {
            Some(v) => v,
            None => self.rng.next_u64(),
        }
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let b = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&b[..chunk.len()]);
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolutionStreams {
    pub jump_input: Stream,
    pub jump_selection: Stream,
    pub overlap: Stream,
    pub flow_selection: Stream,
}

impl SolutionStreams {
    pub fn from_seed(seed: u64) -> Self {
        SolutionStreams {
            jump_input: Stream::seeded(seed, STREAM_JUMP_INPUT),
            jump_selection: Stream::seeded(seed, STREAM_JUMP_SELECTION),
            overlap: Stream::seeded(seed, STREAM_OVERLAP),
            flow_selection: Stream::seeded(seed, STREAM_FLOW_SELECTION),
        }
    }

    /// Seeded streams whose jump-input stream starts with `uniforms`.
    pub fn with_forced_inputs(seed: u64, uniforms: &[f64]) -> Self {
        let mut s = Self::from_seed(seed);
        s.jump_input = Stream::forced(uniforms, s.jump_input);
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapPolicy {
    PreferJump,
    PreferFlow,
    Bernoulli(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpSelectionPolicy {
    First,
    Index(usize),
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Flow,
    Jump,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecConfig {
    pub flow: FlowConfig,
    pub j_max: usize,
    pub t_total: f64,
    pub overlap_policy: OverlapPolicy,
    pub jump_selection_policy: JumpSelectionPolicy,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            flow: FlowConfig::default(),
            j_max: 10_000,
            t_total: 20.0,
            overlap_policy: OverlapPolicy::PreferJump,
            jump_selection_policy: JumpSelectionPolicy::First,
        }
    }
}

impl ExecConfig {
    pub fn validate(&self) -> Result<()> {
        self.flow.validate()?;
        if !(self.t_total > 0.0) {
            return Err(Error::Config("T_total must be positive".into()));
        }
        if let OverlapPolicy::Bernoulli(p) = self.overlap_policy {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("bernoulli overlap p = {p} not in [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    CompleteHorizon,
    StoppedOutsideCUnionD,
    BlowUp,
    JumpBudgetExhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomSolutionRecord {
    pub arc: HybridArc,
    pub inputs: Vec<Vec<f64>>,
    pub seed: u64,
    pub stop_reason: StopReason,
    /// Set when the solution stopped at a point where it could neither flow
    /// nor jump at tolerance (a boundary tangency).
    pub boundary_stall: bool,
}

impl RandomSolutionRecord {
    pub fn n_jumps(&self) -> usize {
        self.arc.jumps.len()
    }

    /// Checks the record invariants: hybrid time domain, one input per jump,
    /// pre-jump states in `D`, post-jump states in the evaluated `G` bundle,
    /// flowing nodes in `C`.
    pub fn verify(&self, sys: &SystemDefinition, tol: f64) -> std::result::Result<(), String> {
        self.arc.check_domain()?;
        if self.inputs.len() != self.arc.jumps.len() {
            return Err(format!(
                "{} inputs for {} jumps",
                self.inputs.len(),
                self.arc.jumps.len()
            ));
        }
        for (k, (jp, v)) in self.arc.jumps.iter().zip(&self.inputs).enumerate() {
            if !sys.in_jump_set(&jp.pre, tol) {
                return Err(format!("jump {k} pre-state {:?} not in D", jp.pre));
            }
            let bundle = sys.jump_at(&jp.pre, v).map_err(|e| e.to_string())?;
            if !bundle.contains_exact(&jp.post) {
                return Err(format!("jump {k} post-state not in G(pre, v)"));
            }
        }
        for seg in &self.arc.segments {
            if seg.nodes.len() > 1 {
                if let Some(n) = seg.nodes.iter().find(|n| !sys.in_flow_set(&n.y, tol)) {
                    return Err(format!("flow node at t = {} outside C", n.t));
                }
            }
        }
        Ok(())
    }
}

/// One draw from the jump-input law; inverse CDF for finite support.
pub fn sample_jump_input<R: Rng + ?Sized>(
    dist: &JumpDistribution,
    stream: &mut R,
) -> Result<Vec<f64>> {
    dist.validate()?;
    Ok(draw_input(dist, stream))
}

fn draw_input<R: Rng + ?Sized>(dist: &JumpDistribution, stream: &mut R) -> Vec<f64> {
    match dist {
        JumpDistribution::FiniteSupport { atoms } => {
            let u: f64 = stream.random();
            let mut cum = 0.0;
            for a in atoms {
                cum += a.prob;
                if u < cum {
                    return a.value.clone();
                }
            }
            atoms.last().expect("validated nonempty").value.clone()
        }
        JumpDistribution::UniformBox { lo, hi } => lo
            .iter()
            .zip(hi)
            .map(|(&l, &h)| l + (h - l) * stream.random::<f64>())
            .collect(),
    }
}

/// Evaluates `G(y, v)` and picks one element by `policy`.
pub fn apply_jump<R: Rng + ?Sized>(
    sys: &SystemDefinition,
    y: &[f64],
    v: &[f64],
    policy: JumpSelectionPolicy,
    stream: &mut R,
    tol: f64,
) -> Result<Vec<f64>> {
    if !sys.in_jump_set(y, tol) {
        return Err(Error::JumpOutsideJumpSet { at: y.to_vec() });
    }
    let bundle = sys.jump_at(y, v)?;
    let k = match policy {
        JumpSelectionPolicy::First => 0,
        JumpSelectionPolicy::Index(k) => {
            if k >= bundle.len() {
                return Err(Error::Config(format!(
                    "jump selection index {k} out of range for bundle of {}",
                    bundle.len()
                )));
            }
            k
        }
        JumpSelectionPolicy::Random => {
            ((stream.random::<f64>() * bundle.len() as f64) as usize).min(bundle.len() - 1)
        }
    };
    Ok(bundle.values()[k].clone())
}

/// Flow or jump at a point of `C ∩ D`.
pub fn resolve_overlap<R: Rng + ?Sized>(policy: OverlapPolicy, stream: &mut R) -> Decision {
    match policy {
        OverlapPolicy::PreferJump => Decision::Jump,
        OverlapPolicy::PreferFlow => Decision::Flow,
        OverlapPolicy::Bernoulli(p) => {
            if stream.random::<f64>() < p {
                Decision::Jump
            } else {
                Decision::Flow
            }
        }
    }
}

fn norm(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Solves from `y0` with streams derived from `seed`.
pub fn solve(
    sys: &SystemDefinition,
    y0: &[f64],
    epsilon: f64,
    config: &ExecConfig,
    seed: u64,
) -> Result<RandomSolutionRecord> {
    solve_with_streams(sys, y0, epsilon, config, seed, SolutionStreams::from_seed(seed))
}

/// Solves with caller-supplied streams; `seed` is only recorded.
pub fn solve_with_streams(
    sys: &SystemDefinition,
    y0: &[f64],
    epsilon: f64,
    config: &ExecConfig,
    seed: u64,
    mut streams: SolutionStreams,
) -> Result<RandomSolutionRecord> {
    config.validate()?;
    sys.jump_input.validate()?;
    if y0.len() != sys.dim() {
        return Err(Error::Config(format!(
            "initial condition has {} components, expected {}",
            y0.len(),
            sys.dim()
        )));
    }
    let tol = config.flow.tol_event;
    if !(sys.in_flow_set(y0, tol) || sys.in_jump_set(y0, tol)) {
        return Err(Error::NoSolution { at: y0.to_vec() });
    }
    let horizon = config.t_total;
    let mut arc = HybridArc::default();
    let mut inputs = Vec::new();
    let mut nodes = vec![Node {
        t: 0.0,
        y: y0.to_vec(),
    }];
    let mut boundary_stall = false;

    let stop_reason = loop {
        let j = arc.segments.len();
        let last = nodes.last().expect("nonempty");
        let (t, y) = (last.t, last.y.clone());
        if !y.iter().all(|v| v.is_finite()) || norm(&y) > BLOW_UP_BOUND {
            break StopReason::BlowUp;
        }
        let remaining = horizon - (t + j as f64);
        if remaining <= 1e-12 * horizon.max(1.0) {
            break StopReason::CompleteHorizon;
        }
        let in_c = sys.in_flow_set(&y, tol);
        let in_d = sys.in_jump_set(&y, tol);
        let decision = match (in_c, in_d) {
            (false, false) => {
                break StopReason::StoppedOutsideCUnionD;
            }
            (true, false) => Decision::Flow,
            (false, true) => Decision::Jump,
            (true, true) => resolve_overlap(config.overlap_policy, &mut streams.overlap),
        };

        match decision {
            Decision::Jump => {
                if j >= config.j_max {
                    break StopReason::JumpBudgetExhausted;
                }
                if remaining < 1.0 {
                    break StopReason::CompleteHorizon;
                }
                let v = draw_input(&sys.jump_input, &mut streams.jump_input);
                let post = apply_jump(
                    sys,
                    &y,
                    &v,
                    config.jump_selection_policy,
                    &mut streams.jump_selection,
                    tol,
                )?;
                if !post.iter().all(|c| c.is_finite()) {
                    break StopReason::BlowUp;
                }
                arc.segments.push(ArcSegment {
                    j,
                    t_start: nodes[0].t,
                    t_end: t,
                    nodes: std::mem::take(&mut nodes),
                });
                arc.jumps.push(JumpPoint {
                    time: HybridTime::new(t, j),
                    pre: y,
                    post: post.clone(),
                });
                inputs.push(v);
                nodes.push(Node { t, y: post });
            }
            Decision::Flow => {
                let watch = if in_d {
                    JumpWatch::OnEntry
                } else {
                    JumpWatch::Immediate
                };
                let seg = integrate_flow_from(
                    sys,
                    t,
                    &y,
                    epsilon,
                    &config.flow,
                    remaining,
                    watch,
                    &mut streams.flow_selection,
                )?;
                let progressed = seg.nodes.len() > 1;
                nodes.extend(seg.nodes.into_iter().skip(1));
                match seg.terminal_reason {
                    TerminalReason::BlowUp => break StopReason::BlowUp,
                    TerminalReason::LeftFlowSet if !progressed => {
                        if in_d {
                            // Flow is impossible but a jump is not: take it.
                            if j >= config.j_max {
                                break StopReason::JumpBudgetExhausted;
                            }
                            if remaining < 1.0 {
                                break StopReason::CompleteHorizon;
                            }
                            continue_with_jump(
                                sys,
                                config,
                                &mut streams,
                                &mut arc,
                                &mut inputs,
                                &mut nodes,
                            )?;
                            continue;
                        }
                        boundary_stall = true;
                        break StopReason::StoppedOutsideCUnionD;
                    }
                    _ => {}
                }
            }
        }
    };

    let j = arc.segments.len();
    arc.segments.push(ArcSegment {
        j,
        t_start: nodes[0].t,
        t_end: nodes.last().expect("nonempty").t,
        nodes,
    });
    Ok(RandomSolutionRecord {
        arc,
        inputs,
        seed,
        stop_reason,
        boundary_stall,
    })
}

/// Jump from the last node when a flow attempt from a point of `C ∩ D` made
/// no progress.
fn continue_with_jump(
    sys: &SystemDefinition,
    config: &ExecConfig,
    streams: &mut SolutionStreams,
    arc: &mut HybridArc,
    inputs: &mut Vec<Vec<f64>>,
    nodes: &mut Vec<Node>,
) -> Result<()> {
    let last = nodes.last().expect("nonempty").clone();
    let j = arc.segments.len();
    let v = draw_input(&sys.jump_input, &mut streams.jump_input);
    let post = apply_jump(
        sys,
        &last.y,
        &v,
        config.jump_selection_policy,
        &mut streams.jump_selection,
        config.flow.tol_event,
    )?;
    arc.segments.push(ArcSegment {
        j,
        t_start: nodes[0].t,
        t_end: last.t,
        nodes: std::mem::take(nodes),
    });
    arc.jumps.push(JumpPoint {
        time: HybridTime::new(last.t, j),
        pre: last.y,
        post: post.clone(),
    });
    inputs.push(v);
    nodes.push(Node { t: last.t, y: post });
    Ok(())
}

/// Maps `f` over `0..n` on `workers` threads (0 = rayon default), returning
/// results in index order.
pub fn par_map_indexed<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let run = || (0..n).into_par_iter().map(&f).collect::<Vec<T>>();
    if workers == 0 {
        return Ok(run());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(run))
}

/// Solves one trial per initial condition, trial `i` seeded by
/// [`trial_seed`]`(master_seed, i)`.
pub fn solve_ensemble(
    sys: &SystemDefinition,
    initial_conditions: &[Vec<f64>],
    epsilon: f64,
    config: &ExecConfig,
    master_seed: u64,
    workers: usize,
) -> Result<Vec<RandomSolutionRecord>> {
    par_map_indexed(initial_conditions.len(), workers, |i| {
        solve(
            sys,
            &initial_conditions[i],
            epsilon,
            config,
            trial_seed(master_seed, i as u64),
        )
    })?
    .into_iter()
    .collect()
}

#[derive(Serialize)]
struct Sidecar<'a> {
    seed: u64,
    epsilon: f64,
    stop_reason: StopReason,
    boundary_stall: bool,
    n_jumps: usize,
    inputs: &'a [Vec<f64>],
    jumps: &'a [JumpPoint],
}

/// Trajectory CSV header: `t,j,x0..,z0..`.
pub fn csv_header(n1: usize, n2: usize) -> String {
    let mut cols = vec!["t".to_string(), "j".to_string()];
    cols.extend((0..n1).map(|i| format!("x{i}")));
    cols.extend((0..n2).map(|i| format!("z{i}")));
    cols.join(",")
}

pub fn write_trajectory_csv(
    record: &RandomSolutionRecord,
    n1: usize,
    n2: usize,
    path: &Path,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&csv_header(n1, n2));
    out.push('\n');
    for (time, y) in record.arc.iter_nodes() {
        out.push_str(&format!("{},{}", time.t, time.j));
        for v in y {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn write_sidecar_json(record: &RandomSolutionRecord, epsilon: f64, path: &Path) -> Result<()> {
    let side = Sidecar {
        seed: record.seed,
        epsilon,
        stop_reason: record.stop_reason,
        boundary_stall: record.boundary_stall,
        n_jumps: record.n_jumps(),
        inputs: &record.inputs,
        jumps: &record.arc.jumps,
    };
    fs::write(path, serde_json::to_string_pretty(&side)? + "\n")?;
    Ok(())
}
