//! Theorem checklists: aggregates of class screens, thresholds and grid checks.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::SystemDefinition;

use super::bundle::CertificateBundle;
use super::checks::{CheckContext, CheckId, CheckSettings, GridSpec, ViolationReport};
use super::comparison::{scalar_probe, ComparisonClass, ComparisonFunction};
use super::thresholds::{compute_thresholds, quadratic_threshold, Thresholds};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TheoremId {
    T1,
    T2,
    T3,
    T4,
}

impl TheoremId {
    pub fn parse(s: &str) -> Option<TheoremId> {
        match s.to_ascii_uppercase().as_str() {
            "T1" | "1" => Some(TheoremId::T1),
            "T2" | "2" => Some(TheoremId::T2),
            "T3" | "3" => Some(TheoremId::T3),
            "T4" | "4" => Some(TheoremId::T4),
            _ => None,
        }
    }

    fn is_recurrence(self) -> bool {
        matches!(self, TheoremId::T3 | TheoremId::T4)
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Pass,
    Fail,
    NotChecked,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChecklistEntry {
    pub name: String,
    pub status: EntryStatus,
    pub detail: String,
    /// Informational entries do not affect the verdict.
    pub required: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ViolationReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremChecklist {
    pub theorem: TheoremId,
    pub epsilon: f64,
    pub thresholds: Option<Thresholds>,
    pub entries: Vec<ChecklistEntry>,
    pub verdict: bool,
}

impl TheoremChecklist {
    pub fn entry(&self, name: &str) -> Option<&ChecklistEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Required entries that did not pass.
    pub fn failing(&self) -> Vec<&ChecklistEntry> {
        self.entries
            .iter()
            .filter(|e| e.required && e.status != EntryStatus::Pass)
            .collect()
    }
}

/// Outcome of the level-set non-stationarity heuristic, computed elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetOutcome {
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheoremCheckConfig {
    pub grid: GridSpec,
    pub settings: CheckSettings,
    pub level_set: Option<LevelSetOutcome>,
}

struct Builder {
    entries: Vec<ChecklistEntry>,
}

impl Builder {
    fn push(&mut self, name: &str, status: EntryStatus, detail: impl Into<String>) {
        self.entries.push(ChecklistEntry {
            name: name.into(),
            status,
            detail: detail.into(),
            required: true,
            report: None,
        });
    }

    fn flag(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        let status = if ok { EntryStatus::Pass } else { EntryStatus::Fail };
        self.push(name, status, detail);
    }

    fn missing(&mut self, name: &str, what: &str) {
        self.push(name, EntryStatus::NotChecked, format!("missing {what}"));
    }

    fn info(&mut self, name: &str, detail: impl Into<String>) {
        self.entries.push(ChecklistEntry {
            name: name.into(),
            status: EntryStatus::Pass,
            detail: detail.into(),
            required: false,
            report: None,
        });
    }

    fn report(&mut self, name: &str, result: Result<ViolationReport>, required: bool) -> bool {
        let entry = match result {
            Ok(r) => ChecklistEntry {
                name: name.into(),
                status: if r.passed { EntryStatus::Pass } else { EntryStatus::Fail },
                detail: format!(
                    "max violation {:.3e} over {} points (tol {:.1e})",
                    r.max_violation, r.n_points, r.tolerance
                ),
                required,
                report: Some(r),
            },
            Err(Error::Config(msg)) => ChecklistEntry {
                name: name.into(),
                status: EntryStatus::NotChecked,
                detail: msg,
                required,
                report: None,
            },
            Err(e) => ChecklistEntry {
                name: name.into(),
                status: EntryStatus::Fail,
                detail: e.to_string(),
                required,
                report: None,
            },
        };
        let ok = entry.status == EntryStatus::Pass;
        self.entries.push(entry);
        ok
    }
}

/// Certificate pieces the theorem needs that are absent from `cert`.
pub fn missing_fields(cert: &CertificateBundle, theorem: TheoremId) -> Vec<String> {
    let c = &cert.constants;
    let mut out = Vec::new();
    let mut need = |present: bool, name: &str| {
        if !present {
            out.push(name.to_string());
        }
    };
    need(cert.v.is_some(), "v");
    need(cert.w.is_some(), "w");
    need(cert.alpha1.is_some(), "alpha1");
    need(cert.alpha2.is_some(), "alpha2");
    need(cert.alpha3.is_some(), "alpha3");
    need(cert.alpha4.is_some(), "alpha4");
    need(cert.phi_x.is_some(), "phi_x");
    need(cert.phi_z.is_some(), "phi_z");
    need(c.k_x.is_some(), "k_x");
    need(c.k_z.is_some(), "k_z");
    need(c.k1.is_some(), "k_1");
    need(c.k2.is_some(), "k_2");
    need(c.k3.is_some(), "k_3");
    need(cert.target_a.is_some(), "target_a");
    match theorem {
        TheoremId::T1 => need(cert.rho_hat.is_some(), "rho_hat"),
        TheoremId::T3 => {
            need(cert.rho_hat.is_some(), "rho_hat");
            need(cert.target_o.is_some(), "target_o");
            need(c.mu_f.is_some(), "mu_f");
            need(c.mu_j.is_some(), "mu_j");
        }
        TheoremId::T2 | TheoremId::T4 => {
            if theorem == TheoremId::T4 {
                need(cert.target_o.is_some(), "target_o");
            }
            let opt1 = option_missing(&[
                (cert.rho_x.is_some(), "rho_x"),
                (cert.rho_4.is_some(), "rho_4"),
                (c.c_x.is_some(), "c_x"),
                (c.k4.is_some(), "k_4"),
            ]);
            let opt2 = option_missing(&[
                (cert.rho_z.is_some(), "rho_z"),
                (cert.rho_5.is_some(), "rho_5"),
                (c.c_z.is_some(), "c_z"),
                (c.k5.is_some(), "k_5"),
            ]);
            if !opt1.is_empty() && !opt2.is_empty() {
                out.push(format!(
                    "{} (or, for the second relaxation: {})",
                    opt1.join(", "),
                    opt2.join(", ")
                ));
            }
        }
    }
    out
}

fn option_missing(items: &[(bool, &str)]) -> Vec<String> {
    items
        .iter()
        .filter(|(p, _)| !p)
        .map(|(_, n)| n.to_string())
        .collect()
}

fn class_entry(
    b: &mut Builder,
    name: &str,
    f: &Option<ComparisonFunction>,
    required: ComparisonClass,
) {
    let Some(f) = f else {
        b.missing(name, "function");
        return;
    };
    if !f.class.satisfies(required) {
        b.flag(
            name,
            false,
            format!("declared {:?}, needs {required:?}", f.class),
        );
        return;
    }
    let screen = f.check_scalar_class(required);
    b.flag(name, screen.passed, screen.detail);
}

/// Evaluates the checklist of `theorem` at `epsilon`.
pub fn evaluate_theorem(
    sys: &SystemDefinition,
    cert: &CertificateBundle,
    epsilon: f64,
    theorem: TheoremId,
    config: &TheoremCheckConfig,
) -> Result<TheoremChecklist> {
    let ctx = CheckContext::new(sys, cert, &config.grid, &config.settings)?;
    let tol = config.settings.membership_tol;
    let c = &cert.constants;
    let mut b = Builder {
        entries: Vec::new(),
    };
    let slow = config.grid.slow_points(sys.n1);
    let full = config.grid.points();
    let c_x_points: Vec<&Vec<f64>> = slow
        .iter()
        .filter(|x| ctx.reduced().in_flow_set(x, tol))
        .collect();

    // Quasi-steady-state map.
    if theorem.is_recurrence() {
        let bad = c_x_points.iter().find_map(|x| match sys.qss_at(x) {
            Err(e) => Some(e.to_string()),
            Ok(m) if m.len() != 1 => Some(format!("M({x:?}) has {} values", m.len())),
            Ok(m) if !sys.in_flow_set(&[x.as_slice(), &m.values()[0]].concat(), tol) => {
                Some(format!("(x, m(x)) outside C at x = {x:?}"))
            }
            Ok(_) => None,
        });
        b.flag(
            "A9",
            bad.is_none(),
            bad.unwrap_or_else(|| "m single-valued with m(x) in C_z on the grid".into()),
        );
    } else {
        let bad = c_x_points.iter().find_map(|x| match sys.qss_at(x) {
            Err(e) => Some(e.to_string()),
            Ok(m) => m
                .values()
                .iter()
                .find(|z| !sys.in_flow_set(&[x.as_slice(), z.as_slice()].concat(), tol))
                .map(|z| format!("(x, z) = ({x:?}, {z:?}) outside C")),
        });
        b.flag(
            "A1",
            bad.is_none(),
            bad.unwrap_or_else(|| "M(x) nonempty and inside C_z on the grid".into()),
        );
    }

    // Comparison classes.
    let alpha_class = if theorem.is_recurrence() {
        ComparisonClass::Ginf
    } else {
        ComparisonClass::Kinf
    };
    class_entry(&mut b, "alpha1 class", &cert.alpha1, alpha_class);
    class_entry(&mut b, "alpha2 class", &cert.alpha2, alpha_class);
    class_entry(&mut b, "alpha3 class", &cert.alpha3, alpha_class);
    class_entry(&mut b, "alpha4 class", &cert.alpha4, alpha_class);
    if !theorem.is_recurrence() {
        let def = if theorem == TheoremId::T1 {
            ComparisonClass::PdWrtSet
        } else {
            ComparisonClass::PsdWrtSet
        };
        match (&cert.phi_x, &cert.target_a) {
            (Some(phi), Some(a)) => {
                if !phi.class.satisfies(def) {
                    b.flag("phi_x class", false, format!("declared {:?}, needs {def:?}", phi.class));
                } else {
                    let s = phi.check_state_class(def, &slow, |x| a.member(x, tol));
                    b.flag("phi_x class", s.passed, s.detail);
                }
            }
            (None, _) => b.missing("phi_x class", "phi_x"),
            (_, None) => b.missing("phi_x class", "target set A"),
        }
        class_entry(&mut b, "phi_z class", &cert.phi_z, def);
        let mu_f = c.mu_f.unwrap_or(0.0);
        b.flag("mu_F = 0", mu_f == 0.0, format!("mu_F = {mu_f}"));
    } else {
        match c.mu_f {
            Some(m) => b.flag("mu_F > 0", m > 0.0, format!("mu_F = {m}")),
            None => b.missing("mu_F > 0", "mu_f"),
        }
        match (&cert.target_a, &cert.target_o) {
            (Some(a), Some(o)) => {
                let bad = slow.iter().find(|x| {
                    let in_closure = o.proximity(x).map_or(o.contains(x), |p| p <= tol);
                    a.member(x, tol) != in_closure
                });
                b.flag(
                    "A = cl(O)",
                    bad.is_none(),
                    bad.map_or("agree on the grid".into(), |x| format!("disagree at {x:?}")),
                );
            }
            _ => b.missing("A = cl(O)", "target sets A and O"),
        }
    }

    // Singular perturbation threshold.
    let thresholds = match c.flow() {
        Some(k) => {
            let t = compute_thresholds(k)?;
            b.flag(
                "epsilon in (0, eps*)",
                epsilon > 0.0 && epsilon < t.epsilon_star,
                format!("epsilon = {epsilon}, eps* = {}", t.epsilon_star),
            );
            let q = quadratic_threshold(k)?;
            if (q - t.epsilon_star).abs() > 1e-12 * t.epsilon_star.max(1.0) {
                b.info(
                    "quadratic-form threshold",
                    format!(
                        "positive definiteness at theta* needs epsilon < {q}, printed eps* = {}",
                        t.epsilon_star
                    ),
                );
            }
            Some(t)
        }
        None => {
            b.missing("epsilon in (0, eps*)", "flow constants k_x, k_z, k_1, k_2, k_3");
            None
        }
    };

    // Flow and bound assumptions.
    for id in [
        CheckId::A2a,
        CheckId::A2b,
        CheckId::A4a,
        CheckId::A4b,
        CheckId::A6a,
        CheckId::A6b,
    ] {
        b.report(&id.to_string(), ctx.run(id), true);
    }

    match theorem {
        TheoremId::T1 => {
            b.report("T1b", ctx.run(CheckId::T1b), true);
            match (&cert.rho_hat, &cert.target_a) {
                (Some(rho), Some(a)) => {
                    if !rho.class.satisfies(ComparisonClass::PdWrtSet) {
                        b.flag("rho_hat class", false, format!("declared {:?}", rho.class));
                    } else {
                        let in_set = |y: &[f64]| {
                            let (x, _) = sys.split(y);
                            a.member(x, tol) && sys.qss_distance(y).is_ok_and(|d| d <= tol)
                        };
                        let s = rho.check_state_class(ComparisonClass::PdWrtSet, &full, in_set);
                        b.flag("rho_hat class", s.passed, s.detail);
                    }
                }
                (None, _) => b.missing("rho_hat class", "rho_hat"),
                (_, None) => b.missing("rho_hat class", "target set A"),
            }
        }
        TheoremId::T3 => {
            b.report("T3b", ctx.run(CheckId::T3b), true);
            match &cert.rho_hat {
                Some(rho) => {
                    let bad = full.iter().find(|y| !(rho.eval(y) > 0.0));
                    b.flag(
                        "rho_hat > 0",
                        bad.is_none(),
                        bad.map_or("positive on the grid".into(), |y| format!("not positive at {y:?}")),
                    );
                }
                None => b.missing("rho_hat > 0", "rho_hat"),
            }
            match c.mu_j {
                Some(m) => b.flag("mu_J > 0", m > 0.0, format!("mu_J = {m}")),
                None => b.missing("mu_J > 0", "mu_j"),
            }
        }
        TheoremId::T2 | TheoremId::T4 => {
            relaxation(&mut b, &ctx, cert, theorem, &slow);
            let name = if theorem == TheoremId::T2 {
                "level sets not stationary"
            } else {
                "level sets outside O~ not stationary"
            };
            match &config.level_set {
                Some(o) => b.flag(name, o.passed, o.detail.clone()),
                None => b.missing(name, "level-set heuristic result"),
            }
        }
    }

    let verdict = b
        .entries
        .iter()
        .all(|e| !e.required || e.status == EntryStatus::Pass);
    Ok(TheoremChecklist {
        theorem,
        epsilon,
        thresholds,
        entries: b.entries,
        verdict,
    })
}

/// Relaxation condition (b): either jump option must pass completely.
fn relaxation(
    b: &mut Builder,
    ctx: &CheckContext<'_>,
    cert: &CertificateBundle,
    theorem: TheoremId,
    slow: &[Vec<f64>],
) {
    let c = &cert.constants;
    let stability = theorem == TheoremId::T2;

    let mut opt1 = b.report("A5", ctx.run(CheckId::A5), false);
    opt1 &= b.report("A7", ctx.run(CheckId::A7), false);
    if stability {
        let mu_j = c.mu_j.unwrap_or(0.0);
        opt1 &= mu_j == 0.0;
    }
    opt1 &= match (&cert.rho_x, &cert.rho_4) {
        (Some(a), Some(b4)) => slow.iter().all(|x| (a.eval(x) - b4.eval(x)).abs() <= 1e-12),
        _ => false,
    };
    let side1 = match (c.k1, c.k3, c.k4, c.c_x) {
        (Some(k1), Some(k3), Some(k4), Some(c_x)) => {
            let lhs = k3 * k4 / k1;
            b.entries.push(ChecklistEntry {
                name: "k_3 k_4 / k_1 < c_x".into(),
                status: if lhs < c_x { EntryStatus::Pass } else { EntryStatus::Fail },
                detail: format!("{lhs} vs c_x = {c_x}"),
                required: false,
                report: None,
            });
            lhs < c_x
        }
        _ => false,
    };
    opt1 &= side1;

    let mut opt2 = b.report("A3", ctx.run(CheckId::A3), false);
    opt2 &= b.report("A8", ctx.run(CheckId::A8), false);
    if stability {
        opt2 &= c.mu_j.unwrap_or(0.0) == 0.0;
    }
    opt2 &= match (&cert.rho_z, &cert.rho_5) {
        (Some(a), Some(b5)) => scalar_probe()
            .iter()
            .all(|&s| (a.eval_s(s) - b5.eval_s(s)).abs() <= 1e-12),
        _ => false,
    };
    let side2 = match (c.k1, c.k3, c.k5, c.c_z) {
        (Some(k1), Some(k3), Some(k5), Some(c_z)) => {
            let lhs = k1 * k5 / k3;
            b.entries.push(ChecklistEntry {
                name: "k_1 k_5 / k_3 < c_z".into(),
                status: if lhs < c_z { EntryStatus::Pass } else { EntryStatus::Fail },
                detail: format!("{lhs} vs c_z = {c_z}"),
                required: false,
                report: None,
            });
            lhs < c_z
        }
        _ => false,
    };
    opt2 &= side2;

    let detail = match (opt1, opt2) {
        (true, _) => "first relaxation holds (A5, A7, rho_x = rho_4)",
        (false, true) => "second relaxation holds (A3, A8, rho_z = rho_5)",
        _ => "neither relaxation holds",
    };
    b.flag("relaxation", opt1 || opt2, detail);
}
