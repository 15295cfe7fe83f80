//! Built-in examples with hand-derived certificates.

use serde::{Deserialize, Serialize};

use crate::certificates::{
    compute_thresholds, CertificateBundle, CertificateConfig, ComparisonClass, ComparisonSpec,
    Constants, GridSpec, TheoremId, Thresholds,
};
use crate::config::{ConfigDocument, VerificationConfig};
use crate::error::{Error, Result};
use crate::executor::ExecConfig;
use crate::expr::Expr;
use crate::hybrid::{BundleSpec, JumpDistribution, SystemConfig, SystemDefinition};
use crate::montecarlo::{LevelSetConfig, RecurrenceConfig};
use crate::sets::SetSpec;

pub const EXAMPLE_NAMES: [&str; 3] = ["linear-tracker", "weak-decrease", "noisy-reset"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectedVerdict {
    pub theorem: TheoremId,
    pub epsilon: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedExample {
    pub name: String,
    pub description: String,
    pub config: ConfigDocument,
    pub expected: Vec<ExpectedVerdict>,
}

impl NamedExample {
    pub fn system(&self) -> Result<SystemDefinition> {
        self.config.build_system()
    }

    pub fn certificate(&self) -> Result<CertificateBundle> {
        self.config
            .build_certificate()?
            .ok_or_else(|| Error::Config("example has no certificate".into()))
    }

    pub fn thresholds(&self) -> Result<Thresholds> {
        let k = self
            .config
            .certificate
            .as_ref()
            .and_then(|c| c.constants.flow())
            .ok_or_else(|| Error::Config("example has no flow constants".into()))?;
        compute_thresholds(k)
    }
}

fn x() -> Expr {
    Expr::var(0)
}

fn z() -> Expr {
    Expr::var(1)
}

fn s() -> Expr {
    Expr::var(0)
}

fn half_square(e: Expr) -> Expr {
    e.square().scale(0.5)
}

fn cmp(expr: Expr, class: ComparisonClass) -> Option<ComparisonSpec> {
    Some(ComparisonSpec { expr, class })
}

fn unit_flow_constants() -> Constants {
    Constants {
        k_x: Some(1.0),
        k_z: Some(1.0),
        k1: Some(1.0),
        k2: Some(1.0),
        k3: Some(1.0),
        ..Constants::default()
    }
}

/// `x' = -x + (z - x)`, `eps z' = -(z - x)`, `M(x) = {x}`.
fn tracker_flows() -> (BundleSpec, BundleSpec, BundleSpec) {
    (
        BundleSpec::single(vec![z() - x().scale(2.0)]),
        BundleSpec::single(vec![x() - z()]),
        BundleSpec::single(vec![x()]),
    )
}

fn scaling_law() -> JumpDistribution {
    JumpDistribution::scalar_atoms(&[(0.1, 0.9), (1.2, 0.1)])
}

/// `(x, z)+ = (v x, v x)`; jump-map arguments are `(x, z, v)`.
fn scaling_jump() -> BundleSpec {
    let vx = Expr::var(2) * x();
    BundleSpec::single(vec![vx.clone(), vx])
}

fn outside_unit_interval() -> SetSpec {
    SetSpec::BallExterior {
        coords: Some(vec![0]),
        center: vec![0.0],
        radius: 1.0,
    }
}

const LINEAR_TRACKER_DOC: &str = "\
Slow x tracks fast z, which relaxes onto M(x) = {x}. Jumps on |x| >= 1 scale \
both states by v in {0.1 (p = 0.9), 1.2 (p = 0.1)}, so E[v^2] = 0.153.
V = x^2/2, W = (z - x)^2/2, phi_x = |x|, phi_z(s) = s, all k = 1, so \
eps* = theta* = 0.5.
Flows: <dW/dz, f_z> = -(z - x)^2 (equality). <dW/dx, f_x> = -(z - x)^2 + \
x(z - x) <= |x||z - x| + (z - x)^2. f~(x) = -x gives <dV, f~> = -x^2 and \
<dV, f_x - f~> = x(z - x) <= |x||z - x|.
Jumps: E[E_0.5(g)] = 0.25 * 0.153 x^2, so with rho^ = (x^2 + (z - x)^2)/8 the \
margin is -0.08675 x^2 - 0.125 (z - x)^2 < 0 on D.";

fn linear_tracker() -> NamedExample {
    let (flow_x, flow_z, qss) = tracker_flows();
    let system = SystemConfig {
        n1: 1,
        n2: 1,
        flow_x,
        flow_z,
        jump: scaling_jump(),
        flow_set: SetSpec::All,
        jump_set: outside_unit_interval(),
        jump_input: scaling_law(),
        quasi_steady_state: qss,
    };
    let quad = || cmp(half_square(s()), ComparisonClass::Kinf);
    let certificate = CertificateConfig {
        v: Some(half_square(x())),
        v_smooth: true,
        w: Some(half_square(z() - x())),
        w_smooth: true,
        alpha1: quad(),
        alpha2: quad(),
        alpha3: quad(),
        alpha4: quad(),
        phi_x: cmp(x().abs(), ComparisonClass::PdWrtSet),
        phi_z: cmp(s(), ComparisonClass::Kinf),
        rho_hat: cmp(
            x().square().scale(0.125) + (z() - x()).square().scale(0.125),
            ComparisonClass::PdWrtSet,
        ),
        constants: Constants {
            mu_f: Some(0.0),
            mu_j: Some(0.0),
            ..unit_flow_constants()
        },
        target_a: Some(SetSpec::point(vec![0.0])),
        ..CertificateConfig::default()
    };
    NamedExample {
        name: "linear-tracker".into(),
        description: LINEAR_TRACKER_DOC.into(),
        config: ConfigDocument {
            system,
            certificate: Some(certificate),
            execution: ExecConfig::default(),
            verification: VerificationConfig {
                grid: Some(GridSpec::cube(2, -3.0, 3.0, 101)),
                ..VerificationConfig::default()
            },
        },
        expected: vec![
            ExpectedVerdict {
                theorem: TheoremId::T1,
                epsilon: 0.1,
                pass: true,
            },
            ExpectedVerdict {
                theorem: TheoremId::T1,
                epsilon: 0.6,
                pass: false,
            },
        ],
    }
}

const WEAK_DECREASE_DOC: &str = "\
Decoupled flows x' = -x, eps z' = -z with M = {0}; jumps as in linear-tracker. \
The tracker flows cannot be used here: with phi_x vanishing on |x| <= 0.1 the \
coupling term x(z - x) admits no bound k_1 phi_z phi_x + k_2 phi_z^2.
V = x^2/2, W = z^2/2, phi_x = max(|x| - 0.1, 0) (semidefinite only), \
phi_z(s) = s, flow k = 1.
Jumps on D: E[V(g)] - V + 0.4 x^2 = -0.0235 x^2 and \
E[W(g)] - W - 0.1 x^2 = -0.0235 x^2 - z^2/2 <= 0, so rho_x = rho_4 = x^2, \
c_x = 0.4, k_4 = 0.1 and k_3 k_4 / k_1 = 0.1 < 0.4.
No solution stays on a level set of E = (x^2 + z^2)/4: along flows \
dE/dt = -x^2/2 - z^2/(2 eps) < 0 off the origin, and jumps only occur with \
|x| >= 1.";

fn weak_decrease() -> NamedExample {
    let system = SystemConfig {
        n1: 1,
        n2: 1,
        flow_x: BundleSpec::single(vec![x().scale(-1.0)]),
        flow_z: BundleSpec::single(vec![z().scale(-1.0)]),
        jump: scaling_jump(),
        flow_set: SetSpec::All,
        jump_set: outside_unit_interval(),
        jump_input: scaling_law(),
        quasi_steady_state: BundleSpec::single(vec![Expr::c(0.0)]),
    };
    let quad = || cmp(half_square(s()), ComparisonClass::Kinf);
    let certificate = CertificateConfig {
        v: Some(half_square(x())),
        v_smooth: true,
        w: Some(half_square(z())),
        w_smooth: true,
        alpha1: quad(),
        alpha2: quad(),
        alpha3: quad(),
        alpha4: quad(),
        phi_x: cmp(
            (x().abs() - Expr::c(0.1)).max(Expr::c(0.0)),
            ComparisonClass::PsdWrtSet,
        ),
        phi_z: cmp(s(), ComparisonClass::Kinf),
        rho_x: cmp(x().square(), ComparisonClass::PsdWrtSet),
        rho_4: cmp(x().square(), ComparisonClass::PsdWrtSet),
        constants: Constants {
            k4: Some(0.1),
            c_x: Some(0.4),
            mu_f: Some(0.0),
            mu_j: Some(0.0),
            ..unit_flow_constants()
        },
        target_a: Some(SetSpec::point(vec![0.0])),
        ..CertificateConfig::default()
    };
    NamedExample {
        name: "weak-decrease".into(),
        description: WEAK_DECREASE_DOC.into(),
        config: ConfigDocument {
            system,
            certificate: Some(certificate),
            execution: ExecConfig::default(),
            verification: VerificationConfig {
                grid: Some(GridSpec::cube(2, -3.0, 3.0, 101)),
                ..VerificationConfig::default()
            },
        },
        expected: vec![
            ExpectedVerdict {
                theorem: TheoremId::T2,
                epsilon: 0.1,
                pass: true,
            },
            ExpectedVerdict {
                theorem: TheoremId::T1,
                epsilon: 0.1,
                pass: false,
            },
        ],
    }
}

const NOISY_RESET_DOC: &str = "\
Tracker flows; on D = {|x| <= 0.5} both states reset to x + v with \
v = +-2 (p = 1/2 each). m(x) = x, O = (-1, 1), A = [-1, 1].
V = x^2/2 with alpha_3(s) = s^2/2 and alpha_4(s) = (s + 1)^2/2, since \
|x|_A <= |x| <= |x|_A + 1. Flows: <dV, f~> + phi_x^2 = 0 <= mu_F = 1 on O.
Jumps: E[V(x + v)] - V + x^2 - 2.25 = x^2 - 0.25 <= 0 on D (tight at \
|x| = 0.5). E[W(g)] = 0, so k_4 = 0.5 with rho_4 = x^2.
Composite jump: E[E_0.5(g)] - E_0.5(y) = 1 - (z - x)^2/4, so rho^ = 0.25 and \
mu_J = 2.25 work once the graph set is inflated to |z - x| < 3 (any radius \
above sqrt(5)).";

fn noisy_reset() -> NamedExample {
    let (flow_x, flow_z, qss) = tracker_flows();
    let shifted = x() + Expr::var(2);
    let system = SystemConfig {
        n1: 1,
        n2: 1,
        flow_x,
        flow_z,
        jump: BundleSpec::single(vec![shifted.clone(), shifted]),
        flow_set: SetSpec::All,
        jump_set: SetSpec::Box {
            coords: Some(vec![0]),
            lo: vec![-0.5],
            hi: vec![0.5],
            open: false,
        },
        jump_input: JumpDistribution::scalar_atoms(&[(-2.0, 0.5), (2.0, 0.5)]),
        quasi_steady_state: qss,
    };
    let quad = || cmp(half_square(s()), ComparisonClass::Kinf);
    let certificate = CertificateConfig {
        v: Some(half_square(x())),
        v_smooth: true,
        w: Some(half_square(z() - x())),
        w_smooth: true,
        alpha1: quad(),
        alpha2: quad(),
        alpha3: quad(),
        alpha4: cmp(half_square(s() + Expr::c(1.0)), ComparisonClass::Ginf),
        phi_x: cmp(x().abs(), ComparisonClass::Continuous),
        phi_z: cmp(s(), ComparisonClass::Kinf),
        rho_x: cmp(x().square(), ComparisonClass::Continuous),
        rho_4: cmp(x().square(), ComparisonClass::Continuous),
        rho_hat: cmp(Expr::c(0.25), ComparisonClass::Continuous),
        constants: Constants {
            k4: Some(0.5),
            c_x: Some(1.0),
            mu_f: Some(1.0),
            mu_j: Some(2.25),
            ..unit_flow_constants()
        },
        target_a: Some(SetSpec::closed_box(vec![-1.0], vec![1.0])),
        target_o: Some(SetSpec::Box {
            coords: None,
            lo: vec![-1.0],
            hi: vec![1.0],
            open: true,
        }),
        o_tilde_radius: Some(3.0),
        ..CertificateConfig::default()
    };
    NamedExample {
        name: "noisy-reset".into(),
        description: NOISY_RESET_DOC.into(),
        config: ConfigDocument {
            system,
            certificate: Some(certificate),
            execution: ExecConfig::default(),
            verification: VerificationConfig {
                grid: Some(GridSpec::cube(2, -5.0, 5.0, 101)),
                // Levels of E below 0.25 lie entirely inside the inflated graph set.
                level_set: LevelSetConfig {
                    levels: vec![1.0, 2.5, 5.0],
                    ..LevelSetConfig::default()
                },
                recurrence: RecurrenceConfig {
                    delta_o: 0.1,
                    radius: 5.0,
                    tau: 10.0,
                    trials: 1000,
                    ..RecurrenceConfig::default()
                },
                ..VerificationConfig::default()
            },
        },
        expected: vec![
            ExpectedVerdict {
                theorem: TheoremId::T3,
                epsilon: 0.05,
                pass: true,
            },
            ExpectedVerdict {
                theorem: TheoremId::T4,
                epsilon: 0.05,
                pass: true,
            },
        ],
    }
}

pub fn make_example(name: &str) -> Result<NamedExample> {
    match name {
        "linear-tracker" => Ok(linear_tracker()),
        "weak-decrease" => Ok(weak_decrease()),
        "noisy-reset" => Ok(noisy_reset()),
        other => Err(Error::UnknownExample(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_example_builds() {
        for name in EXAMPLE_NAMES {
            let ex = make_example(name).unwrap();
            ex.system().unwrap();
            ex.certificate().unwrap();
        }
    }

    #[test]
    fn tracker_thresholds() {
        let t = make_example("linear-tracker").unwrap().thresholds().unwrap();
        assert_eq!((t.epsilon_star, t.theta_star), (0.5, 0.5));
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(
            make_example("nope"),
            Err(Error::UnknownExample(_))
        ));
    }

    #[test]
    fn config_round_trips() {
        for name in EXAMPLE_NAMES {
            let doc = make_example(name).unwrap().config;
            let back = ConfigDocument::from_json(&doc.to_json().unwrap()).unwrap();
            assert_eq!(back, doc);
        }
    }
}
