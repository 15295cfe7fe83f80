//! Fixed-step RK4 integration of the ε-scaled flows with event localization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::{Node, SelectionBundle, SystemDefinition};

/// State norm above which a segment is reported as a finite-escape candidate.
pub const BLOW_UP_BOUND: f64 = 1e9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    First,
    Index(usize),
    RandomPerStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub h_base: f64,
    pub fast_substep_factor: u32,
    pub tol_event: f64,
    pub t_max: f64,
    pub selection_policy: SelectionPolicy,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            h_base: 0.05,
            fast_substep_factor: 1,
            tol_event: 1e-9,
            t_max: 100.0,
            selection_policy: SelectionPolicy::First,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h_base > 0.0 && self.h_base.is_finite()) {
            return Err(Error::Config("h_base must be positive".into()));
        }
        if self.fast_substep_factor == 0 {
            return Err(Error::Config("fast_substep_factor must be at least 1".into()));
        }
        if !(self.tol_event > 0.0) {
            return Err(Error::Config("tol_event must be positive".into()));
        }
        if !(self.t_max > 0.0) {
            return Err(Error::Config("T_max must be positive".into()));
        }
        Ok(())
    }

    /// `min(h_base, ε · h_base / fast_substep_factor)`.
    pub fn effective_step(&self, epsilon: f64) -> f64 {
        self.h_base
            .min(epsilon * self.h_base / self.fast_substep_factor as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    EnteredJumpSet,
    LeftFlowSet,
    ReachedTMax,
    BlowUp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSegment {
    pub nodes: Vec<Node>,
    pub terminal_reason: TerminalReason,
}

impl FlowSegment {
    pub fn last(&self) -> &Node {
        self.nodes.last().expect("segments always hold the start node")
    }
}

/// How the integrator watches the jump set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JumpWatch {
    /// Stop as soon as the state is in `D`, including at the start.
    Immediate,
    /// Stop only on a transition from outside `D` into `D`.
    OnEntry,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventTarget {
    EnterJumpSet,
    LeaveFlowSet,
}

/// A frozen selection rule used for one step (and its bisection re-integrations).
#[derive(Clone, Copy, Debug)]
pub(crate) enum Selector {
    Index { k: usize, strict: bool },
    Uniform(f64),
}

impl Selector {
    fn pick<'a>(&self, bundle: &'a SelectionBundle) -> Result<&'a [f64]> {
        let len = bundle.len();
        let k = match *self {
            Selector::Index { k, strict } => {
                if k >= len {
                    if strict {
                        return Err(Error::Config(format!(
                            "selection index {k} out of range for bundle of {len}"
                        )));
                    }
                    len - 1
                } else {
                    k
                }
            }
            Selector::Uniform(u) => ((u * len as f64) as usize).min(len - 1),
        };
        Ok(&bundle.values()[k])
    }

    fn draw<R: Rng + ?Sized>(policy: SelectionPolicy, rng: &mut R) -> Selector {
        match policy {
            SelectionPolicy::First => Selector::Index { k: 0, strict: false },
            SelectionPolicy::Index(k) => Selector::Index { k, strict: true },
            SelectionPolicy::RandomPerStep => Selector::Uniform(rng.random::<f64>()),
        }
    }
}

/// Picks one value of `bundle`; the random policy consumes one uniform draw.
pub fn select_flow_value<R: Rng + ?Sized>(
    bundle: &SelectionBundle,
    policy: SelectionPolicy,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Selector::draw(policy, rng).pick(bundle).map(<[f64]>::to_vec)
}

fn vector_field(
    sys: &SystemDefinition,
    y: &[f64],
    epsilon: f64,
    sel: Selector,
) -> Result<Vec<f64>> {
    let fx = sys.flow_x_at(y)?;
    let fz = sys.flow_z_at(y)?;
    let mut out = sel.pick(&fx)?.to_vec();
    out.extend(sel.pick(&fz)?.iter().map(|v| v / epsilon));
    Ok(out)
}

fn axpy(y: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(yi, ki)| yi + a * ki).collect()
}

pub(crate) fn rk4_step(
    sys: &SystemDefinition,
    y: &[f64],
    h: f64,
    epsilon: f64,
    sel: Selector,
) -> Result<Vec<f64>> {
    let k1 = vector_field(sys, y, epsilon, sel)?;
    let k2 = vector_field(sys, &axpy(y, 0.5 * h, &k1), epsilon, sel)?;
    let k3 = vector_field(sys, &axpy(y, 0.5 * h, &k2), epsilon, sel)?;
    let k4 = vector_field(sys, &axpy(y, h, &k3), epsilon, sel)?;
    Ok((0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn blown_up(y: &[f64]) -> bool {
    let n2: f64 = y.iter().map(|v| v * v).sum();
    !(n2.sqrt() <= BLOW_UP_BOUND)
}

fn hit(sys: &SystemDefinition, target: EventTarget, y: &[f64], tol: f64) -> bool {
    match target {
        EventTarget::EnterJumpSet => sys.in_jump_set(y, tol),
        EventTarget::LeaveFlowSet => !sys.in_flow_set(y, tol),
    }
}

/// Bisection over the sub-step `s in [0, h]` from `y_lo`.
///
/// Entry into `D` returns the first bracketed point inside `D`; exit from `C`
/// returns the last bracketed point still inside `C`.
#[allow(clippy::too_many_arguments)]
fn localize(
    sys: &SystemDefinition,
    t_lo: f64,
    y_lo: &[f64],
    h: f64,
    epsilon: f64,
    target: EventTarget,
    tol_event: f64,
    sel: Selector,
) -> Result<(f64, Vec<f64>)> {
    if hit(sys, target, y_lo, tol_event) {
        return Ok((t_lo, y_lo.to_vec()));
    }
    let mut y_hi = rk4_step(sys, y_lo, h, epsilon, sel)?;
    if !hit(sys, target, &y_hi, tol_event) {
        return Err(Error::EventBracketInvalid);
    }
    let (mut lo, mut hi) = (0.0, h);
    let mut y_in = y_lo.to_vec();
    while hi - lo > tol_event {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let y_mid = rk4_step(sys, y_lo, mid, epsilon, sel)?;
        if hit(sys, target, &y_mid, tol_event) {
            hi = mid;
            y_hi = y_mid;
        } else {
            lo = mid;
            y_in = y_mid;
        }
    }
    Ok(match target {
        EventTarget::EnterJumpSet => (t_lo + hi, y_hi),
        EventTarget::LeaveFlowSet => (t_lo + lo, y_in),
    })
}

/// Localizes the crossing of `target` over one RK4 step of size `h` started
/// at `(t_lo, y_lo)`, using the first selection for multi-valued flows.
pub fn localize_event(
    sys: &SystemDefinition,
    t_lo: f64,
    y_lo: &[f64],
    h: f64,
    epsilon: f64,
    target: EventTarget,
    tol_event: f64,
) -> Result<(f64, Vec<f64>)> {
    localize(
        sys,
        t_lo,
        y_lo,
        h,
        epsilon,
        target,
        tol_event,
        Selector::Index { k: 0, strict: false },
    )
}

/// Integrates from `y0` at time 0 for at most `config.t_max`, stopping on
/// entry into `D`.
pub fn integrate_flow<R: Rng + ?Sized>(
    sys: &SystemDefinition,
    y0: &[f64],
    epsilon: f64,
    config: &FlowConfig,
    rng: &mut R,
) -> Result<FlowSegment> {
    integrate_flow_from(
        sys,
        0.0,
        y0,
        epsilon,
        config,
        config.t_max,
        JumpWatch::Immediate,
        rng,
    )
}

/// Integrates from `(t0, y0)` for at most `duration` (capped by `config.t_max`).
#[allow(clippy::too_many_arguments)]
pub fn integrate_flow_from<R: Rng + ?Sized>(
    sys: &SystemDefinition,
    t0: f64,
    y0: &[f64],
    epsilon: f64,
    config: &FlowConfig,
    duration: f64,
    watch: JumpWatch,
    rng: &mut R,
) -> Result<FlowSegment> {
    config.validate()?;
    if !(epsilon > 0.0) {
        return Err(Error::Domain("epsilon must be positive".into()));
    }
    let tol = config.tol_event;
    if !sys.in_flow_set(y0, tol) {
        return Err(Error::FlowStartOutside { at: y0.to_vec() });
    }
    let mut nodes = vec![Node {
        t: t0,
        y: y0.to_vec(),
    }];
    let finish = |nodes, reason| {
        Ok(FlowSegment {
            nodes,
            terminal_reason: reason,
        })
    };
    if blown_up(y0) {
        return finish(nodes, TerminalReason::BlowUp);
    }
    let mut in_jump = sys.in_jump_set(y0, tol);
    if watch == JumpWatch::Immediate && in_jump {
        return finish(nodes, TerminalReason::EnteredJumpSet);
    }
    let duration = duration.min(config.t_max).max(0.0);
    let h = config.effective_step(epsilon);
    let n_steps = if duration == 0.0 {
        0
    } else {
        ((duration / h - 1e-9).ceil() as usize).max(1)
    };

    for k in 1..=n_steps {
        let prev = nodes.last().expect("nonempty");
        let (t_prev, y_prev) = (prev.t, prev.y.clone());
        let t_next = if k == n_steps {
            t0 + duration
        } else {
            t0 + k as f64 * h
        };
        let step = t_next - t_prev;
        if !(step > 0.0) {
            continue;
        }
        let sel = Selector::draw(config.selection_policy, rng);
        let y_next = rk4_step(sys, &y_prev, step, epsilon, sel)?;
        if blown_up(&y_next) {
            return finish(nodes, TerminalReason::BlowUp);
        }

        let next_in_jump = sys.in_jump_set(&y_next, tol);
        let jump_event = match watch {
            JumpWatch::Off => false,
            JumpWatch::Immediate => next_in_jump,
            JumpWatch::OnEntry => next_in_jump && !in_jump,
        };
        let exit_event = !sys.in_flow_set(&y_next, tol);

        if jump_event || exit_event {
            let jump_at = if jump_event {
                Some(localize(
                    sys,
                    t_prev,
                    &y_prev,
                    step,
                    epsilon,
                    EventTarget::EnterJumpSet,
                    tol,
                    sel,
                )?)
            } else {
                None
            };
            let exit_at = if exit_event {
                Some(localize(
                    sys,
                    t_prev,
                    &y_prev,
                    step,
                    epsilon,
                    EventTarget::LeaveFlowSet,
                    tol,
                    sel,
                )?)
            } else {
                None
            };
            let (event, reason) = match (jump_at, exit_at) {
                (Some(j), Some(e)) if e.0 + tol < j.0 => (e, TerminalReason::LeftFlowSet),
                (Some(j), _) => (j, TerminalReason::EnteredJumpSet),
                (None, Some(e)) => (e, TerminalReason::LeftFlowSet),
                (None, None) => unreachable!(),
            };
            if event.0 > t_prev {
                nodes.push(Node {
                    t: event.0,
                    y: event.1,
                });
            }
            return finish(nodes, reason);
        }
        in_jump = next_in_jump;
        nodes.push(Node {
            t: t_next,
            y: y_next,
        });
    }
    finish(nodes, TerminalReason::ReachedTMax)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::hybrid::{BundleSpec, JumpDistribution, MapBundle, SystemConfig};
    use crate::sets::SetSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// `x' = rate`, `z' = 0`, `D = {x >= 1}`.
    fn drift(rate: f64) -> SystemDefinition {
        SystemConfig {
            n1: 1,
            n2: 1,
            flow_x: BundleSpec::single(vec![Expr::c(rate)]),
            flow_z: BundleSpec::single(vec![Expr::c(0.0)]),
            jump: BundleSpec::single(vec![Expr::var(0), Expr::var(1)]),
            flow_set: SetSpec::All,
            jump_set: SetSpec::Halfspace {
                normal: vec![-1.0],
                offset: -1.0,
            },
            jump_input: JumpDistribution::scalar_atoms(&[(0.0, 1.0)]),
            quasi_steady_state: BundleSpec::single(vec![Expr::c(0.0)]),
        }
        .build()
        .unwrap()
    }

    #[test]
    fn linear_crossing_time() {
        let sys = drift(1.0);
        let (t, y) =
            localize_event(&sys, 0.0, &[0.9, 0.0], 0.5, 1.0, EventTarget::EnterJumpSet, 1e-9)
                .unwrap();
        assert!((t - 0.1).abs() <= 1e-9, "t = {t}");
        assert!(sys.in_jump_set(&y, 1e-9));
    }

    #[test]
    fn degenerate_bracket_returns_start() {
        let sys = drift(1.0);
        let (t, y) =
            localize_event(&sys, 0.3, &[1.2, 0.0], 0.5, 1.0, EventTarget::EnterJumpSet, 1e-9)
                .unwrap();
        assert_eq!(t, 0.3);
        assert_eq!(y, vec![1.2, 0.0]);
    }

    #[test]
    fn no_crossing_is_invalid_bracket() {
        let sys = drift(-1.0);
        let err =
            localize_event(&sys, 0.0, &[0.9, 0.0], 0.5, 1.0, EventTarget::EnterJumpSet, 1e-9)
                .unwrap_err();
        assert!(err.to_string().contains("event bracket invalid"));
    }

    #[test]
    fn selection_policies() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let single = SelectionBundle::singleton(vec![3.0]);
        for p in [
            SelectionPolicy::First,
            SelectionPolicy::Index(0),
            SelectionPolicy::RandomPerStep,
        ] {
            assert_eq!(select_flow_value(&single, p, &mut rng).unwrap(), vec![3.0]);
        }
        let two = SelectionBundle::new(vec![vec![1.0], vec![2.0]], false).unwrap();
        assert_eq!(
            select_flow_value(&two, SelectionPolicy::Index(1), &mut rng).unwrap(),
            vec![2.0]
        );
        assert!(select_flow_value(&two, SelectionPolicy::Index(2), &mut rng).is_err());
    }

    #[test]
    fn random_selection_replays_from_seed() {
        let two = SelectionBundle::new(vec![vec![1.0], vec![2.0]], false).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..64)
                .map(|_| select_flow_value(&two, SelectionPolicy::RandomPerStep, &mut rng).unwrap()[0])
                .collect::<Vec<_>>()
        };
        let a = run(9);
        assert_eq!(a, run(9));
        // Oracle: the documented rule floor(u * len) applied to the raw stream.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let expected: Vec<f64> = (0..64)
            .map(|_| if rng.random::<f64>() < 0.5 { 1.0 } else { 2.0 })
            .collect();
        assert_eq!(a, expected);
    }

    #[test]
    fn start_outside_flow_set_is_an_error() {
        let mut sys = drift(1.0);
        sys.flow_set = SetSpec::closed_box(vec![-1.0, -1.0], vec![1.0, 1.0]).into();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = integrate_flow(&sys, &[2.0, 0.0], 1.0, &FlowConfig::default(), &mut rng)
            .unwrap_err();
        assert!(err.to_string().contains("flow started outside flow set"));
    }

    #[test]
    fn leaving_flow_set_stops_inside() {
        let mut sys = drift(1.0);
        sys.flow_set = SetSpec::closed_box(vec![-1.0, -1.0], vec![0.5, 1.0]).into();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seg = integrate_flow(&sys, &[0.0, 0.0], 1.0, &FlowConfig::default(), &mut rng)
            .unwrap();
        assert_eq!(seg.terminal_reason, TerminalReason::LeftFlowSet);
        let last = seg.last();
        assert!((last.t - 0.5).abs() < 1e-8);
        assert!(sys.in_flow_set(&last.y, 1e-9));
    }

    #[test]
    fn escape_is_reported_not_truncated() {
        let mut sys = drift(0.0);
        sys.flow_x = MapBundle::Spec(BundleSpec::single(vec![Expr::var(0).square()]));
        let cfg = FlowConfig {
            h_base: 0.01,
            t_max: 2.0,
            ..FlowConfig::default()
        };
        sys.jump_set = SetSpec::Empty.into();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // x' = x^2 from 1 escapes at t = 1.
        let seg = integrate_flow(&sys, &[1.0, 0.0], 1.0, &cfg, &mut rng).unwrap();
        assert_eq!(seg.terminal_reason, TerminalReason::BlowUp);
        assert!(seg.last().t < 1.05);
        assert!(seg.nodes.iter().all(|n| n.y.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn segment_ends_exactly_at_t_max() {
        let sys = drift(0.0);
        let cfg = FlowConfig {
            h_base: 0.03,
            t_max: 1.0,
            ..FlowConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seg = integrate_flow(&sys, &[0.0, 0.0], 1.0, &cfg, &mut rng).unwrap();
        assert_eq!(seg.terminal_reason, TerminalReason::ReachedTMax);
        assert_eq!(seg.last().t, 1.0);
        assert!(seg.nodes.windows(2).all(|w| w[0].t < w[1].t));
    }
}
