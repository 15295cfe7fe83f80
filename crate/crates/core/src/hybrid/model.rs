use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sets::{euclid, SetPredicate, SetSpec};

use super::maps::{BundleSpec, MapBundle, SelectionBundle};

/// Slow/fast split of a joined state `y = (x, z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlowFastState {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

impl SlowFastState {
    pub fn new(x: Vec<f64>, z: Vec<f64>) -> Self {
        SlowFastState { x, z }
    }

    pub fn from_joined(y: &[f64], n1: usize) -> Self {
        SlowFastState {
            x: y[..n1].to_vec(),
            z: y[n1..].to_vec(),
        }
    }

    pub fn joined(&self) -> Vec<f64> {
        let mut y = self.x.clone();
        y.extend_from_slice(&self.z);
        y
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.z).all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: Vec<f64>,
    pub prob: f64,
}

/// Law of the i.i.d. jump inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpDistribution {
    FiniteSupport { atoms: Vec<Atom> },
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
}

impl JumpDistribution {
    /// Scalar finite-support law from `(value, probability)` pairs.
    pub fn scalar_atoms(pairs: &[(f64, f64)]) -> Self {
        JumpDistribution::FiniteSupport {
            atoms: pairs
                .iter()
                .map(|&(v, p)| Atom {
                    value: vec![v],
                    prob: p,
                })
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            JumpDistribution::FiniteSupport { atoms } => atoms.first().map_or(0, |a| a.value.len()),
            JumpDistribution::UniformBox { lo, .. } => lo.len(),
        }
    }

    pub fn is_finite_support(&self) -> bool {
        matches!(self, JumpDistribution::FiniteSupport { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            JumpDistribution::FiniteSupport { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::Config("finite support has no atoms".into()));
                }
                let dim = atoms[0].value.len();
                if atoms.iter().any(|a| a.value.len() != dim) {
                    return Err(Error::Config("jump input atoms have mixed dimensions".into()));
                }
                if let Some(a) = atoms.iter().find(|a| !(a.prob > 0.0) || !a.prob.is_finite()) {
                    return Err(Error::Config(format!(
                        "jump input atom {:?} has non-positive probability {}",
                        a.value, a.prob
                    )));
                }
                let total: f64 = atoms.iter().map(|a| a.prob).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "jump input probabilities sum to {total}, expected 1"
                    )));
                }
                Ok(())
            }
            JumpDistribution::UniformBox { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(Error::Config("uniform box bounds malformed".into()));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
                    return Err(Error::Config("uniform box bounds not ordered".into()));
                }
                Ok(())
            }
        }
    }

    /// Points of the support used for probing `G(D x V)`: the atoms, or a
    /// `per_axis`-point lattice of the box.
    pub fn support_probe(&self, per_axis: usize) -> Vec<Vec<f64>> {
        match self {
            JumpDistribution::FiniteSupport { atoms } => {
                atoms.iter().map(|a| a.value.clone()).collect()
            }
            JumpDistribution::UniformBox { lo, hi } => lattice(lo, hi, per_axis.max(2)),
        }
    }
}

/// Tensor lattice with `per_axis` points per coordinate (endpoints included).
pub(crate) fn lattice(lo: &[f64], hi: &[f64], per_axis: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = lo
        .iter()
        .zip(hi)
        .map(|(&l, &h)| axis_points(l, h, per_axis))
        .collect();
    let mut out = vec![Vec::new()];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out
}

pub(crate) fn axis_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || lo == hi {
        return vec![if n <= 1 { 0.5 * (lo + hi) } else { lo }];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * (i as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

/// Distance from `z` to the quasi-steady-state bundle `M(x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QssDistance {
    pub distance: f64,
    /// False when the bundle stands for a convex hull: the vertex minimum is
    /// then an over-approximation.
    pub exact: bool,
}

/// `|z|_{M(x)}` as the minimum over the finite bundle `M(x)`.
pub fn distance_to_quasi_steady_state(x: &[f64], z: &[f64], qss: &MapBundle) -> Result<QssDistance> {
    let values = qss.eval_raw(x);
    if values.is_empty() {
        return Err(Error::EmptyQuasiSteadyState { x: x.to_vec() });
    }
    let distance = values
        .iter()
        .map(|w| euclid(z, w))
        .fold(f64::INFINITY, f64::min);
    Ok(QssDistance {
        distance,
        exact: !qss.is_convexified() || values.len() == 1,
    })
}

/// A singularly perturbed stochastic hybrid system.
///
/// Argument conventions: flow maps take `y = (x, z)`, the jump map takes
/// `(x, z, v)` and returns the full post-jump state, the quasi-steady-state
/// map takes `x` and returns fast-state values.
#[derive(Clone, Debug)]
pub struct SystemDefinition {
    pub n1: usize,
    pub n2: usize,
    pub flow_x: MapBundle,
    pub flow_z: MapBundle,
    pub jump: MapBundle,
    pub flow_set: SetPredicate,
    pub jump_set: SetPredicate,
    pub jump_input: JumpDistribution,
    pub quasi_steady_state: MapBundle,
}

impl SystemDefinition {
    pub fn dim(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn split<'a>(&self, y: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        y.split_at(self.n1)
    }

    pub fn flow_x_at(&self, y: &[f64]) -> Result<SelectionBundle> {
        self.flow_x.eval(y, "flow map F_x")
    }

    pub fn flow_z_at(&self, y: &[f64]) -> Result<SelectionBundle> {
        self.flow_z.eval(y, "flow map F_z")
    }

    pub fn jump_at(&self, y: &[f64], v: &[f64]) -> Result<SelectionBundle> {
        let mut args = Vec::with_capacity(y.len() + v.len());
        args.extend_from_slice(y);
        args.extend_from_slice(v);
        let values = self.jump.eval_raw(&args);
        if values.is_empty() {
            return Err(Error::EmptyJumpMap { at: y.to_vec() });
        }
        SelectionBundle::new(values, self.jump.is_convexified())
    }

    pub fn qss_at(&self, x: &[f64]) -> Result<SelectionBundle> {
        let values = self.quasi_steady_state.eval_raw(x);
        if values.is_empty() {
            return Err(Error::EmptyQuasiSteadyState { x: x.to_vec() });
        }
        SelectionBundle::new(values, self.quasi_steady_state.is_convexified())
    }

    /// `|z|_{M(x)}` at the joined state `y`.
    pub fn qss_distance(&self, y: &[f64]) -> Result<f64> {
        let (x, z) = self.split(y);
        distance_to_quasi_steady_state(x, z, &self.quasi_steady_state).map(|d| d.distance)
    }

    pub fn in_flow_set(&self, y: &[f64], tol: f64) -> bool {
        self.flow_set.member(y, tol)
    }

    pub fn in_jump_set(&self, y: &[f64], tol: f64) -> bool {
        self.jump_set.member(y, tol)
    }

    /// Dimension checks by evaluating every map at the origin.
    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::Config("n1 and n2 must both be at least 1".into()));
        }
        self.jump_input.validate()?;
        let y = vec![0.0; self.dim()];
        let v = vec![0.0; self.jump_input.dim()];
        let check = |values: Vec<Vec<f64>>, expect: usize, name: &str| -> Result<()> {
            if let Some(bad) = values.iter().find(|w| w.len() != expect) {
                return Err(Error::Config(format!(
                    "{name} returns vectors of length {}, expected {expect}",
                    bad.len()
                )));
            }
            Ok(())
        };
        check(self.flow_x.eval_raw(&y), self.n1, "flow_x")?;
        check(self.flow_z.eval_raw(&y), self.n2, "flow_z")?;
        let mut yv = y.clone();
        yv.extend_from_slice(&v);
        check(self.jump.eval_raw(&yv), self.dim(), "jump")?;
        check(
            self.quasi_steady_state.eval_raw(&y[..self.n1]),
            self.n2,
            "quasi_steady_state",
        )?;
        Ok(())
    }
}

/// Declarative (JSON) form of a [`SystemDefinition`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n1: usize,
    pub n2: usize,
    pub flow_x: BundleSpec,
    pub flow_z: BundleSpec,
    pub jump: BundleSpec,
    pub flow_set: SetSpec,
    pub jump_set: SetSpec,
    pub jump_input: JumpDistribution,
    pub quasi_steady_state: BundleSpec,
}

impl SystemConfig {
    pub fn build(&self) -> Result<SystemDefinition> {
        let n = self.n1 + self.n2;
        self.jump_input.validate()?;
        let m = self.jump_input.dim();
        self.flow_x.validate("flow_x", n, self.n1)?;
        self.flow_z.validate("flow_z", n, self.n2)?;
        self.jump.validate("jump", n + m, n)?;
        self.quasi_steady_state
            .validate("quasi_steady_state", self.n1, self.n2)?;
        validate_set(&self.flow_set, "flow_set", n)?;
        validate_set(&self.jump_set, "jump_set", n)?;
        let sys = SystemDefinition {
            n1: self.n1,
            n2: self.n2,
            flow_x: self.flow_x.clone().into(),
            flow_z: self.flow_z.clone().into(),
            jump: self.jump.clone().into(),
            flow_set: self.flow_set.clone().into(),
            jump_set: self.jump_set.clone().into(),
            jump_input: self.jump_input.clone(),
            quasi_steady_state: self.quasi_steady_state.clone().into(),
        };
        sys.validate()?;
        Ok(sys)
    }
}

/// Coordinate and arity checks for a config set over `dim` coordinates.
pub(crate) fn validate_set(set: &SetSpec, name: &str, dim: usize) -> Result<()> {
    let bad = |msg: String| Err(Error::Config(format!("{name}: {msg}")));
    let check_coords = |coords: &Option<Vec<usize>>, len: usize| -> Result<()> {
        match coords {
            Some(c) if c.len() != len => bad(format!("{} coords for {len} bounds", c.len())),
            Some(c) if c.iter().any(|&i| i >= dim) => bad(format!("coordinate out of range in {c:?}")),
            None if len != dim => bad(format!("{len} bounds for a {dim}-dimensional set")),
            _ => Ok(()),
        }
    };
    match set {
        SetSpec::All | SetSpec::Empty => Ok(()),
        SetSpec::Box { coords, lo, hi, .. } => {
            if lo.len() != hi.len() {
                return bad("box bounds have different lengths".into());
            }
            if lo.iter().zip(hi).any(|(l, h)| l > h) {
                return bad("box bounds not ordered".into());
            }
            check_coords(coords, lo.len())
        }
        SetSpec::Ball { coords, center, .. } | SetSpec::BallExterior { coords, center, .. } => {
            check_coords(coords, center.len())
        }
        SetSpec::Halfspace { normal, .. } => {
            if normal.len() > dim || normal.iter().all(|v| *v == 0.0) {
                return bad("halfspace normal malformed".into());
            }
            Ok(())
        }
        SetSpec::Sublevel { expr, .. } => match expr.max_var() {
            Some(i) if i >= dim => bad(format!("expression references argument {i}")),
            _ => Ok(()),
        },
        SetSpec::Intersection { sets } | SetSpec::Union { sets } => {
            sets.iter().try_for_each(|s| validate_set(s, name, dim))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;

    fn consts(vals: &[f64]) -> BundleSpec {
        BundleSpec {
            selections: vals.iter().map(|v| vec![Expr::c(*v)]).collect(),
            convexified: false,
        }
    }

    #[test]
    fn qss_distance_examples() {
        let identity: MapBundle = BundleSpec::single(vec![Expr::var(0)]).into();
        let d = distance_to_quasi_steady_state(&[1.0], &[3.0], &identity).unwrap();
        assert_eq!(d.distance, 2.0);
        assert!(d.exact);

        let zero: MapBundle = consts(&[0.0]).into();
        assert_eq!(
            distance_to_quasi_steady_state(&[0.0], &[0.0], &zero)
                .unwrap()
                .distance,
            0.0
        );

        // Oracle: enumerate both candidates.
        let two: MapBundle = consts(&[0.5, 2.0]).into();
        let oracle = [0.5f64, 2.0]
            .iter()
            .map(|w| (0.0f64 - w).abs())
            .fold(f64::INFINITY, f64::min);
        let d = distance_to_quasi_steady_state(&[1.0], &[0.0], &two).unwrap();
        assert_eq!(d.distance, oracle);
        assert_eq!(d.distance, 0.5);
    }

    #[test]
    fn empty_qss_is_an_error() {
        let empty = MapBundle::custom(|_| Vec::new(), false);
        let err = distance_to_quasi_steady_state(&[0.3], &[0.0], &empty).unwrap_err();
        assert!(err.to_string().contains("quasi-steady-state map empty"));
    }

    #[test]
    fn hull_bundle_distance_is_flagged_inexact() {
        let hull = MapBundle::Spec(BundleSpec {
            selections: vec![vec![Expr::c(-1.0)], vec![Expr::c(1.0)]],
            convexified: true,
        });
        let d = distance_to_quasi_steady_state(&[0.0], &[0.0], &hull).unwrap();
        assert!(!d.exact);
        assert_eq!(d.distance, 1.0);
    }

    #[test]
    fn distribution_validation() {
        assert!(JumpDistribution::scalar_atoms(&[(0.1, 0.9), (1.2, 0.1)])
            .validate()
            .is_ok());
        assert!(JumpDistribution::scalar_atoms(&[(0.1, 0.9), (1.2, 0.2)])
            .validate()
            .is_err());
        assert!(JumpDistribution::scalar_atoms(&[(0.1, 1.0), (1.2, 0.0)])
            .validate()
            .is_err());
        assert!(JumpDistribution::UniformBox {
            lo: vec![1.0],
            hi: vec![-1.0]
        }
        .validate()
        .is_err());
    }

    #[test]
    fn lattice_hits_endpoints_exactly() {
        let pts = axis_points(-3.0, 3.0, 101);
        assert_eq!(pts[0], -3.0);
        assert_eq!(pts[100], 3.0);
        assert_eq!(pts[50], 0.0);
        assert_eq!(lattice(&[0.0, 0.0], &[1.0, 1.0], 3).len(), 9);
    }
}
