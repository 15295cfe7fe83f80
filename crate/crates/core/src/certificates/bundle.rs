use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::hybrid::{validate_set, ScalarFn};
use crate::sets::{SetPredicate, SetSpec};

use super::clarke::GradientSettings;
use super::comparison::{ComparisonFunction, ComparisonSpec};
use super::thresholds::FlowConstants;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Constants {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_z: Option<f64>,
    #[serde(rename = "k_1", skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(rename = "k_2", skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    #[serde(rename = "k_3", skip_serializing_if = "Option::is_none")]
    pub k3: Option<f64>,
    #[serde(rename = "k_4", skip_serializing_if = "Option::is_none")]
    pub k4: Option<f64>,
    #[serde(rename = "k_5", skip_serializing_if = "Option::is_none")]
    pub k5: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_j: Option<f64>,
}

impl Constants {
    pub fn flow(&self) -> Option<FlowConstants> {
        Some(FlowConstants::new(
            self.k_x?, self.k_z?, self.k1?, self.k2?, self.k3?,
        ))
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("k_x", self.k_x),
            ("k_z", self.k_z),
            ("k_1", self.k1),
            ("k_3", self.k3),
            ("k_4", self.k4),
            ("k_5", self.k5),
            ("c_x", self.c_x),
            ("c_z", self.c_z),
        ];
        for (name, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        for (name, v) in [("k_2", self.k2), ("mu_f", self.mu_f), ("mu_j", self.mu_j)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
                }
            }
        }
        Ok(())
    }
}

/// Declarative (JSON) certificate.
///
/// Argument conventions: `v`, `phi_x`, `rho_x`, `rho_4` take `x`; `w` and
/// `rho_hat` take `y = (x, z)`; `alpha1..alpha4`, `phi_z`, `rho_z`, `rho_5`
/// take the scalar `s`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertificateConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v: Option<Expr>,
    pub v_smooth: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<Expr>,
    pub w_smooth: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha1: Option<ComparisonSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha2: Option<ComparisonSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha3: Option<ComparisonSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha4: Option<ComparisonSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_x: Option<ComparisonSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_z: Option<ComparisonSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_x: Option<ComparisonSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_z: Option<ComparisonSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_4: Option<ComparisonSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_5: Option<ComparisonSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_hat: Option<ComparisonSpec>,
    pub constants: Constants,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_a: Option<SetSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_o: Option<SetSpec>,
    /// Radius `r` of the fast-coordinate inflation `{x in O, |z - m(x)| < r}`
    /// used for the graph set in the recurrence jump condition.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub o_tilde_radius: Option<f64>,
    pub gradient: GradientSettings,
}

/// A Lyapunov/Foster function with its smoothness declaration.
#[derive(Clone, Debug)]
pub struct CertFn {
    pub f: ScalarFn,
    pub smooth: bool,
}

impl CertFn {
    pub fn eval(&self, arg: &[f64]) -> f64 {
        self.f.eval(arg)
    }
}

#[derive(Clone, Debug, Default)]
pub struct CertificateBundle {
    pub v: Option<CertFn>,
    pub w: Option<CertFn>,
    pub alpha1: Option<ComparisonFunction>,
    pub alpha2: Option<ComparisonFunction>,
    pub alpha3: Option<ComparisonFunction>,
    pub alpha4: Option<ComparisonFunction>,
    pub phi_x: Option<ComparisonFunction>,
    pub phi_z: Option<ComparisonFunction>,
    pub rho_x: Option<ComparisonFunction>,
    pub rho_z: Option<ComparisonFunction>,
    pub rho_4: Option<ComparisonFunction>,
    pub rho_5: Option<ComparisonFunction>,
    pub rho_hat: Option<ComparisonFunction>,
    pub constants: Constants,
    pub target_a: Option<SetPredicate>,
    pub target_o: Option<SetPredicate>,
    pub o_tilde_radius: Option<f64>,
    pub gradient: GradientSettings,
}

fn check_arity(name: &str, e: &Expr, arity: usize) -> Result<()> {
    match e.max_var() {
        Some(i) if i >= arity => Err(Error::Config(format!(
            "certificate {name} references argument {i}, arity is {arity}"
        ))),
        _ => Ok(()),
    }
}

impl CertificateConfig {
    pub fn build(&self, n1: usize, n2: usize) -> Result<CertificateBundle> {
        let n = n1 + n2;
        self.constants.validate()?;
        let cf = |name: &str, spec: &Option<ComparisonSpec>, arity: usize| -> Result<Option<ComparisonFunction>> {
            spec.as_ref()
                .map(|s| {
                    check_arity(name, &s.expr, arity)?;
                    Ok(ComparisonFunction::from(s))
                })
                .transpose()
        };
        let func = |name: &str, e: &Option<Expr>, smooth: bool, arity: usize| -> Result<Option<CertFn>> {
            e.as_ref()
                .map(|e| {
                    check_arity(name, e, arity)?;
                    Ok(CertFn {
                        f: ScalarFn::Expr(e.clone()),
                        smooth,
                    })
                })
                .transpose()
        };
        let set = |name: &str, s: &Option<SetSpec>| -> Result<Option<SetPredicate>> {
            s.as_ref()
                .map(|s| {
                    validate_set(s, name, n1)?;
                    Ok(SetPredicate::Spec(s.clone()))
                })
                .transpose()
        };
        if let Some(r) = self.o_tilde_radius {
            if !(r > 0.0) {
                return Err(Error::Config("o_tilde_radius must be positive".into()));
            }
        }
        Ok(CertificateBundle {
            v: func("V", &self.v, self.v_smooth, n1)?,
            w: func("W", &self.w, self.w_smooth, n)?,
            alpha1: cf("alpha1", &self.alpha1, 1)?,
            alpha2: cf("alpha2", &self.alpha2, 1)?,
            alpha3: cf("alpha3", &self.alpha3, 1)?,
            alpha4: cf("alpha4", &self.alpha4, 1)?,
            phi_x: cf("phi_x", &self.phi_x, n1)?,
            phi_z: cf("phi_z", &self.phi_z, 1)?,
            rho_x: cf("rho_x", &self.rho_x, n1)?,
            rho_z: cf("rho_z", &self.rho_z, 1)?,
            rho_4: cf("rho_4", &self.rho_4, n1)?,
            rho_5: cf("rho_5", &self.rho_5, 1)?,
            rho_hat: cf("rho_hat", &self.rho_hat, n)?,
            constants: self.constants,
            target_a: set("target_a", &self.target_a)?,
            target_o: set("target_o", &self.target_o)?,
            o_tilde_radius: self.o_tilde_radius,
            gradient: self.gradient.clone(),
        })
    }
}

/// `E_θ(y) = (1-θ)V(x) + θW(x, z)`.
#[derive(Clone, Debug)]
pub struct CompositeFoster {
    v: CertFn,
    w: CertFn,
    theta: f64,
    n1: usize,
}

impl CompositeFoster {
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        (1.0 - self.theta) * self.v.eval(&y[..self.n1]) + self.theta * self.w.eval(y)
    }
}

pub fn compose_foster(cert: &CertificateBundle, theta: f64, n1: usize) -> Result<CompositeFoster> {
    let missing = |what: &str| Error::Config(format!("certificate is missing {what}"));
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Domain(format!("theta = {theta} not in [0, 1]")));
    }
    Ok(CompositeFoster {
        v: cert.v.clone().ok_or_else(|| missing("V"))?,
        w: cert.w.clone().ok_or_else(|| missing("W"))?,
        theta,
        n1,
    })
}
