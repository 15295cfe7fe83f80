use serde::{Deserialize, Serialize};

use crate::expr::Expr;
use crate::hybrid::ScalarFn;

/// Declared comparison class.
///
/// `PdWrtSet` and `PsdWrtSet` are relative to the target set `A` for state
/// functions (`phi_x`, `rho_x`, ...) and to `{0}` for scalar ones (`phi_z`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonClass {
    Ginf,
    Kinf,
    PdWrtSet,
    PsdWrtSet,
    Continuous,
}

impl ComparisonClass {
    /// Whether a function declared `self` belongs to `required`.
    pub fn satisfies(self, required: ComparisonClass) -> bool {
        use ComparisonClass::*;
        match required {
            Continuous => true,
            Ginf => matches!(self, Ginf | Kinf),
            Kinf => self == Kinf,
            PsdWrtSet => matches!(self, PsdWrtSet | PdWrtSet | Kinf),
            PdWrtSet => matches!(self, PdWrtSet | Kinf),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ComparisonFunction {
    pub f: ScalarFn,
    pub class: ComparisonClass,
}

/// Config form: an expression in `s` (argument 0) or in the state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSpec {
    pub expr: Expr,
    pub class: ComparisonClass,
}

impl From<&ComparisonSpec> for ComparisonFunction {
    fn from(s: &ComparisonSpec) -> Self {
        ComparisonFunction {
            f: ScalarFn::Expr(s.expr.clone()),
            class: s.class,
        }
    }
}

/// Outcome of a sampled class screen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassCheck {
    pub passed: bool,
    pub detail: String,
}

impl ClassCheck {
    fn ok() -> Self {
        ClassCheck {
            passed: true,
            detail: "sampled properties hold".into(),
        }
    }

    fn fail(detail: String) -> Self {
        ClassCheck {
            passed: false,
            detail,
        }
    }
}

const ZERO_TOL: f64 = 1e-12;

/// Probe abscissae for scalar comparison functions.
pub fn scalar_probe() -> Vec<f64> {
    let mut s: Vec<f64> = (0..=200).map(|i| i as f64 * 0.05).collect();
    s.extend([20.0, 100.0, 1e3, 1e4, 1e6]);
    s
}

impl ComparisonFunction {
    pub fn new(f: impl Into<ScalarFn>, class: ComparisonClass) -> Self {
        ComparisonFunction {
            f: f.into(),
            class,
        }
    }

    pub fn eval(&self, arg: &[f64]) -> f64 {
        self.f.eval(arg)
    }

    pub fn eval_s(&self, s: f64) -> f64 {
        self.f.eval(&[s])
    }

    /// Screens the scalar function `s -> f(s)` for membership in `class`.
    pub fn check_scalar_class(&self, class: ComparisonClass) -> ClassCheck {
        let s = scalar_probe();
        let v: Vec<f64> = s.iter().map(|&t| self.eval_s(t)).collect();
        if let Some(i) = v.iter().position(|x| !x.is_finite() || *x < 0.0) {
            return ClassCheck::fail(format!("value {} at s = {} not in [0, inf)", v[i], s[i]));
        }
        let unbounded = || {
            let last = *v.last().expect("probe nonempty");
            let at_one = self.eval_s(1.0);
            last >= 10.0 * at_one.max(1.0)
        };
        match class {
            ComparisonClass::Continuous | ComparisonClass::PsdWrtSet => ClassCheck::ok(),
            ComparisonClass::PdWrtSet => {
                if v[0] > ZERO_TOL {
                    return ClassCheck::fail(format!("value {} at s = 0", v[0]));
                }
                match (1..v.len()).find(|&i| v[i] <= 0.0) {
                    Some(i) => ClassCheck::fail(format!("zero at s = {}", s[i])),
                    None => ClassCheck::ok(),
                }
            }
            ComparisonClass::Ginf => {
                if let Some(i) = (1..v.len()).find(|&i| v[i] < v[i - 1]) {
                    return ClassCheck::fail(format!("decreasing at s = {}", s[i]));
                }
                if !unbounded() {
                    return ClassCheck::fail("appears bounded".into());
                }
                ClassCheck::ok()
            }
            ComparisonClass::Kinf => {
                if v[0].abs() > ZERO_TOL {
                    return ClassCheck::fail(format!("value {} at s = 0", v[0]));
                }
                if let Some(i) = (1..v.len()).find(|&i| v[i] <= v[i - 1]) {
                    return ClassCheck::fail(format!("not strictly increasing at s = {}", s[i]));
                }
                if !unbounded() {
                    return ClassCheck::fail("appears bounded".into());
                }
                ClassCheck::ok()
            }
        }
    }

    /// Screens a state function for (semi)definiteness with respect to the
    /// set described by `in_set` over `points`.
    pub fn check_state_class(
        &self,
        class: ComparisonClass,
        points: &[Vec<f64>],
        in_set: impl Fn(&[f64]) -> bool,
    ) -> ClassCheck {
        for p in points {
            let v = self.eval(p);
            if !v.is_finite() || v < 0.0 {
                return ClassCheck::fail(format!("value {v} at {p:?} not in [0, inf)"));
            }
            if class == ComparisonClass::PdWrtSet {
                let inside = in_set(p);
                if inside && v > ZERO_TOL {
                    return ClassCheck::fail(format!("value {v} on the set at {p:?}"));
                }
                if !inside && v <= 0.0 {
                    return ClassCheck::fail(format!("zero off the set at {p:?}"));
                }
            }
        }
        ClassCheck::ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_square() -> ComparisonFunction {
        ComparisonFunction::new(Expr::var(0).square().scale(0.5), ComparisonClass::Kinf)
    }

    #[test]
    fn class_inclusions() {
        use ComparisonClass::*;
        assert!(Kinf.satisfies(Ginf));
        assert!(!Ginf.satisfies(Kinf));
        assert!(PdWrtSet.satisfies(PsdWrtSet));
        assert!(!PsdWrtSet.satisfies(PdWrtSet));
    }

    #[test]
    fn quadratic_is_kinf() {
        assert!(half_square().check_scalar_class(ComparisonClass::Kinf).passed);
        assert!(half_square().check_scalar_class(ComparisonClass::Ginf).passed);
    }

    #[test]
    fn shifted_quadratic_is_ginf_not_kinf() {
        let f = ComparisonFunction::new(
            (Expr::var(0) + Expr::c(1.0)).square().scale(0.5),
            ComparisonClass::Ginf,
        );
        assert!(f.check_scalar_class(ComparisonClass::Ginf).passed);
        assert!(!f.check_scalar_class(ComparisonClass::Kinf).passed);
    }

    #[test]
    fn saturating_function_is_bounded() {
        let f = ComparisonFunction::new(
            ScalarFn::custom(|a: &[f64]| a[0] / (1.0 + a[0])),
            ComparisonClass::Kinf,
        );
        assert!(!f.check_scalar_class(ComparisonClass::Kinf).passed);
    }

    #[test]
    fn dead_zone_is_semidefinite_only() {
        let f = ComparisonFunction::new(
            (Expr::var(0).abs() - Expr::c(0.1)).max(Expr::c(0.0)),
            ComparisonClass::PsdWrtSet,
        );
        let pts: Vec<Vec<f64>> = (-10..=10).map(|i| vec![i as f64 * 0.02]).collect();
        let origin = |p: &[f64]| p[0] == 0.0;
        assert!(f.check_state_class(ComparisonClass::PsdWrtSet, &pts, origin).passed);
        assert!(!f.check_state_class(ComparisonClass::PdWrtSet, &pts, origin).passed);
    }
}
