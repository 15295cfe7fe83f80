//! Sampling screen for the well-posedness ("basic") conditions.
//!
//! Closedness, outer semicontinuity and measurability cannot be decided from
//! point evaluations; this screen only looks for concrete counterexamples to
//! the checkable parts (nonempty and finite values, convex values, proximity
//! functions consistent with membership) and reports finite bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::model::SystemDefinition;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeFailureKind {
    FlowMapEmpty,
    FlowMapNotFinite,
    FlowNotConvexValued,
    JumpMapEmpty,
    JumpMapNotFinite,
    ProximityInconsistent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeFailure {
    pub kind: ProbeFailureKind,
    pub witness: Vec<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasicConditionsReport {
    pub n_probes: usize,
    pub probes_in_flow_set: usize,
    pub probes_in_jump_set: usize,
    pub passed: bool,
    /// First failures found (at most [`MAX_RECORDED_FAILURES`]).
    pub failures: Vec<ProbeFailure>,
    pub total_failures: usize,
    /// Largest `|f|` over sampled `f in F_eps(y)`, `y in C`.
    pub max_flow_norm: f64,
    /// Largest `|g|` over sampled `g in G(y, v)`, `y in D`, `v` in the support probe.
    pub max_jump_norm: f64,
}

pub const MAX_RECORDED_FAILURES: usize = 32;

/// Spot-checks the basic conditions at `n_probes` uniform points of the box.
pub fn validate_basic_conditions(
    sys: &SystemDefinition,
    probe_lo: &[f64],
    probe_hi: &[f64],
    n_probes: usize,
    epsilon: f64,
    seed: u64,
) -> Result<BasicConditionsReport> {
    if n_probes == 0 {
        return Err(Error::Config("n_probes must be at least 1".into()));
    }
    if probe_lo.len() != sys.dim() || probe_hi.len() != sys.dim() {
        return Err(Error::Config("probe box dimension mismatch".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Domain("epsilon must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let support = sys.jump_input.support_probe(3);
    let mut report = BasicConditionsReport {
        n_probes,
        probes_in_flow_set: 0,
        probes_in_jump_set: 0,
        passed: true,
        failures: Vec::new(),
        total_failures: 0,
        max_flow_norm: 0.0,
        max_jump_norm: 0.0,
    };
    let fail = |report: &mut BasicConditionsReport, kind, y: &[f64], detail: String| {
        report.total_failures += 1;
        report.passed = false;
        if report.failures.len() < MAX_RECORDED_FAILURES {
            report.failures.push(ProbeFailure {
                kind,
                witness: y.to_vec(),
                detail,
            });
        }
    };

    for _ in 0..n_probes {
        let y: Vec<f64> = probe_lo
            .iter()
            .zip(probe_hi)
            .map(|(&l, &h)| if l == h { l } else { rng.random_range(l..h) })
            .collect();

        for (name, set) in [("flow set", &sys.flow_set), ("jump set", &sys.jump_set)] {
            if let Some(p) = set.proximity(&y) {
                if set.contains(&y) != (p <= 0.0) {
                    fail(
                        &mut report,
                        ProbeFailureKind::ProximityInconsistent,
                        &y,
                        format!("{name}: membership and proximity {p} disagree"),
                    );
                }
            }
        }

        if sys.flow_set.contains(&y) {
            report.probes_in_flow_set += 1;
            let fx = sys.flow_x.eval_raw(&y);
            let fz = sys.flow_z.eval_raw(&y);
            if fx.is_empty() || fz.is_empty() {
                fail(
                    &mut report,
                    ProbeFailureKind::FlowMapEmpty,
                    &y,
                    "flow map has no selection at a flow-set point".into(),
                );
            } else {
                if (fx.len() > 1 && !sys.flow_x.is_convexified())
                    || (fz.len() > 1 && !sys.flow_z.is_convexified())
                {
                    fail(
                        &mut report,
                        ProbeFailureKind::FlowNotConvexValued,
                        &y,
                        "multi-valued flow bundle not flagged convexified".into(),
                    );
                }
                for a in &fx {
                    for b in &fz {
                        let sq: f64 = a.iter().map(|v| v * v).sum::<f64>()
                            + b.iter().map(|v| (v / epsilon).powi(2)).sum::<f64>();
                        let n = sq.sqrt();
                        if n.is_finite() {
                            report.max_flow_norm = report.max_flow_norm.max(n);
                        } else {
                            fail(
                                &mut report,
                                ProbeFailureKind::FlowMapNotFinite,
                                &y,
                                "flow map value not finite".into(),
                            );
                        }
                    }
                }
            }
        }

        if sys.jump_set.contains(&y) {
            report.probes_in_jump_set += 1;
            for v in &support {
                match sys.jump_at(&y, v) {
                    Err(_) => fail(
                        &mut report,
                        ProbeFailureKind::JumpMapEmpty,
                        &y,
                        format!("jump map empty for v = {v:?}"),
                    ),
                    Ok(b) => {
                        let n = b.max_norm();
                        if n.is_finite() {
                            report.max_jump_norm = report.max_jump_norm.max(n);
                        } else {
                            fail(
                                &mut report,
                                ProbeFailureKind::JumpMapNotFinite,
                                &y,
                                format!("jump map value not finite for v = {v:?}"),
                            );
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}
