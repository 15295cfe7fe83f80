//! Set predicates for flow/jump sets and target sets.
//!
//! Every built-in set carries a signed proximity function (negative inside,
//! positive outside) that is sign-consistent with its membership test. Event
//! localization and tolerance-aware membership both go through it.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::expr::Expr;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SetSpec {
    All,
    Empty,
    /// Axis-aligned box over `coords` (all coordinates when omitted).
    Box {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coords: Option<Vec<usize>>,
        lo: Vec<f64>,
        hi: Vec<f64>,
        #[serde(default)]
        open: bool,
    },
    Ball {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coords: Option<Vec<usize>>,
        center: Vec<f64>,
        radius: f64,
        #[serde(default)]
        open: bool,
    },
    /// Closed exterior `{|p - center| >= radius}`.
    BallExterior {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coords: Option<Vec<usize>>,
        center: Vec<f64>,
        radius: f64,
    },
    /// `{normal · p <= offset}`.
    Halfspace { normal: Vec<f64>, offset: f64 },
    /// `{expr(p) <= level}`; the proximity is `expr - level`.
    Sublevel { expr: Expr, level: f64 },
    Intersection { sets: Vec<SetSpec> },
    Union { sets: Vec<SetSpec> },
}

fn coord(coords: &Option<Vec<usize>>, k: usize) -> usize {
    coords.as_ref().map_or(k, |c| c[k])
}

fn offset_norm(p: &[f64], coords: &Option<Vec<usize>>, center: &[f64]) -> f64 {
    center
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let d = p[coord(coords, k)] - c;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

impl SetSpec {
    pub fn closed_box(lo: Vec<f64>, hi: Vec<f64>) -> SetSpec {
        SetSpec::Box {
            coords: None,
            lo,
            hi,
            open: false,
        }
    }

    pub fn point(p: Vec<f64>) -> SetSpec {
        SetSpec::closed_box(p.clone(), p)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        match self {
            SetSpec::All => true,
            SetSpec::Empty => false,
            SetSpec::Box {
                coords,
                lo,
                hi,
                open,
            } => (0..lo.len()).all(|k| {
                let v = p[coord(coords, k)];
                if *open {
                    lo[k] < v && v < hi[k]
                } else {
                    lo[k] <= v && v <= hi[k]
                }
            }),
            SetSpec::Ball {
                coords,
                center,
                radius,
                open,
            } => {
                let r = offset_norm(p, coords, center);
                if *open {
                    r < *radius
                } else {
                    r <= *radius
                }
            }
            SetSpec::BallExterior {
                coords,
                center,
                radius,
            } => offset_norm(p, coords, center) >= *radius,
            SetSpec::Halfspace { normal, offset } => {
                normal.iter().zip(p).map(|(n, x)| n * x).sum::<f64>() <= *offset
            }
            SetSpec::Sublevel { expr, level } => expr.eval(p) <= *level,
            SetSpec::Intersection { sets } => sets.iter().all(|s| s.contains(p)),
            SetSpec::Union { sets } => sets.iter().any(|s| s.contains(p)),
        }
    }

    /// Signed proximity: `<= 0` on the closure of the set, `> 0` outside.
    pub fn proximity(&self, p: &[f64]) -> f64 {
        match self {
            SetSpec::All => f64::NEG_INFINITY,
            SetSpec::Empty => f64::INFINITY,
            SetSpec::Box { coords, lo, hi, .. } => {
                let mut inside_margin = f64::NEG_INFINITY;
                let mut outside_sq = 0.0;
                for k in 0..lo.len() {
                    let v = p[coord(coords, k)];
                    let d = (lo[k] - v).max(v - hi[k]);
                    inside_margin = inside_margin.max(d);
                    if d > 0.0 {
                        outside_sq += d * d;
                    }
                }
                if outside_sq > 0.0 {
                    outside_sq.sqrt()
                } else {
                    inside_margin
                }
            }
            SetSpec::Ball {
                coords,
                center,
                radius,
                ..
            } => offset_norm(p, coords, center) - radius,
            SetSpec::BallExterior {
                coords,
                center,
                radius,
            } => radius - offset_norm(p, coords, center),
            SetSpec::Halfspace { normal, offset } => {
                let n = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
                (normal.iter().zip(p).map(|(a, x)| a * x).sum::<f64>() - offset) / n
            }
            SetSpec::Sublevel { expr, level } => expr.eval(p) - level,
            SetSpec::Intersection { sets } => sets
                .iter()
                .map(|s| s.proximity(p))
                .fold(f64::NEG_INFINITY, f64::max),
            SetSpec::Union { sets } => sets
                .iter()
                .map(|s| s.proximity(p))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Nearest point of the set (closure), when it can be computed exactly.
    pub fn project(&self, p: &[f64]) -> Option<Vec<f64>> {
        match self {
            SetSpec::All => Some(p.to_vec()),
            SetSpec::Box { coords, lo, hi, .. } => {
                let mut q = p.to_vec();
                for k in 0..lo.len() {
                    let i = coord(coords, k);
                    q[i] = q[i].clamp(lo[k], hi[k]);
                }
                Some(q)
            }
            SetSpec::Ball {
                coords,
                center,
                radius,
                ..
            } => {
                let r = offset_norm(p, coords, center);
                let mut q = p.to_vec();
                if r > *radius {
                    for (k, c) in center.iter().enumerate() {
                        let i = coord(coords, k);
                        q[i] = c + (p[i] - c) * radius / r;
                    }
                }
                Some(q)
            }
            SetSpec::Union { sets } => {
                let mut best: Option<(f64, Vec<f64>)> = None;
                for s in sets {
                    let q = s.project(p)?;
                    let d = euclid(p, &q);
                    if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                        best = Some((d, q));
                    }
                }
                best.map(|b| b.1)
            }
            _ => None,
        }
    }

    /// `|p|_S`, when the projection is available.
    pub fn distance(&self, p: &[f64]) -> Option<f64> {
        self.project(p).map(|q| euclid(p, &q))
    }

    /// Axis-aligned bounding box in `dim` dimensions (entries may be infinite).
    pub fn bounding_box(&self, dim: usize) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::NEG_INFINITY; dim];
        let mut hi = vec![f64::INFINITY; dim];
        match self {
            SetSpec::Box {
                coords,
                lo: blo,
                hi: bhi,
                ..
            } => {
                for k in 0..blo.len() {
                    let i = coord(coords, k);
                    lo[i] = blo[k];
                    hi[i] = bhi[k];
                }
            }
            SetSpec::Ball {
                coords,
                center,
                radius,
                ..
            } => {
                for (k, c) in center.iter().enumerate() {
                    let i = coord(coords, k);
                    lo[i] = c - radius;
                    hi[i] = c + radius;
                }
            }
            SetSpec::Empty => {
                lo.fill(0.0);
                hi.fill(0.0);
            }
            SetSpec::Union { sets } => {
                lo.fill(f64::INFINITY);
                hi.fill(f64::NEG_INFINITY);
                for s in sets {
                    let (l, h) = s.bounding_box(dim);
                    for i in 0..dim {
                        lo[i] = lo[i].min(l[i]);
                        hi[i] = hi[i].max(h[i]);
                    }
                }
            }
            SetSpec::Intersection { sets } => {
                for s in sets {
                    let (l, h) = s.bounding_box(dim);
                    for i in 0..dim {
                        lo[i] = lo[i].max(l[i]);
                        hi[i] = hi[i].min(h[i]);
                    }
                }
            }
            _ => {}
        }
        (lo, hi)
    }
}

pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub type MembershipFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;
pub type ProximityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A user-supplied set: membership test plus optional signed proximity.
#[derive(Clone)]
pub struct CustomSet {
    pub contains: MembershipFn,
    pub proximity: Option<ProximityFn>,
}

#[derive(Clone)]
pub enum SetPredicate {
    Spec(SetSpec),
    Custom(CustomSet),
}

impl fmt::Debug for SetPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetPredicate::Spec(s) => write!(f, "SetPredicate::Spec({s:?})"),
            SetPredicate::Custom(c) => write!(
                f,
                "SetPredicate::Custom(proximity: {})",
                c.proximity.is_some()
            ),
        }
    }
}

impl From<SetSpec> for SetPredicate {
    fn from(s: SetSpec) -> Self {
        SetPredicate::Spec(s)
    }
}

impl SetPredicate {
    pub fn custom(
        contains: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
        proximity: Option<ProximityFn>,
    ) -> Self {
        SetPredicate::Custom(CustomSet {
            contains: Arc::new(contains),
            proximity,
        })
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        match self {
            SetPredicate::Spec(s) => s.contains(p),
            SetPredicate::Custom(c) => (c.contains)(p),
        }
    }

    pub fn proximity(&self, p: &[f64]) -> Option<f64> {
        match self {
            SetPredicate::Spec(s) => Some(s.proximity(p)),
            SetPredicate::Custom(c) => c.proximity.as_ref().map(|f| f(p)),
        }
    }

    pub fn spec(&self) -> Option<&SetSpec> {
        match self {
            SetPredicate::Spec(s) => Some(s),
            SetPredicate::Custom(_) => None,
        }
    }

    pub fn project(&self, p: &[f64]) -> Option<Vec<f64>> {
        self.spec().and_then(|s| s.project(p))
    }

    pub fn distance(&self, p: &[f64]) -> Option<f64> {
        self.spec().and_then(|s| s.distance(p))
    }

    /// Tolerance-aware membership, see [`set_membership`].
    pub fn member(&self, p: &[f64], tol: f64) -> bool {
        set_membership(p, self, tol)
    }
}

/// True iff the membership test passes, or the proximity (when supplied) is
/// within `tol` of the set.
pub fn set_membership(y: &[f64], pred: &SetPredicate, tol: f64) -> bool {
    pred.contains(y) || pred.proximity(y).is_some_and(|d| d <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn abs_x_ge_one() -> SetPredicate {
        SetSpec::BallExterior {
            coords: Some(vec![0]),
            center: vec![0.0],
            radius: 1.0,
        }
        .into()
    }

    #[test]
    fn jump_set_membership_examples() {
        let d = abs_x_ge_one();
        assert!(!set_membership(&[0.5, 0.0], &d, 0.0));
        assert!(set_membership(&[1.0, 0.0], &d, 0.0));
        assert!(!set_membership(&[0.999, 0.0], &d, 0.0));
        assert!(set_membership(&[0.999, 0.0], &d, 1e-2));
    }

    #[test]
    fn box_proximity_and_projection() {
        let b = SetSpec::closed_box(vec![-1.0], vec![1.0]);
        assert_eq!(b.proximity(&[3.0]), 2.0);
        assert_eq!(b.proximity(&[0.5]), -0.5);
        assert_eq!(b.distance(&[-2.5]), Some(1.5));
        assert_eq!(b.distance(&[0.2]), Some(0.0));
        let open = SetSpec::Box {
            coords: None,
            lo: vec![-1.0],
            hi: vec![1.0],
            open: true,
        };
        assert!(!open.contains(&[1.0]));
        assert!(open.contains(&[0.999]));
    }

    #[test]
    fn union_and_intersection() {
        let u = SetSpec::Union {
            sets: vec![
                SetSpec::point(vec![0.0, 0.0]),
                SetSpec::point(vec![3.0, 4.0]),
            ],
        };
        assert_eq!(u.distance(&[3.0, 0.0]), Some(3.0));
        let i = SetSpec::Intersection {
            sets: vec![
                SetSpec::closed_box(vec![0.0, 0.0], vec![2.0, 2.0]),
                SetSpec::Halfspace {
                    normal: vec![1.0, 1.0],
                    offset: 2.0,
                },
            ],
        };
        assert!(i.contains(&[0.5, 0.5]));
        assert!(!i.contains(&[1.5, 1.5]));
        assert!(i.proximity(&[1.5, 1.5]) > 0.0);
    }

    proptest! {
        #[test]
        fn membership_monotone_in_tol(x in -3.0f64..3.0, z in -3.0f64..3.0,
                                      t1 in 0.0f64..0.5, dt in 0.0f64..0.5) {
            let d = abs_x_ge_one();
            if set_membership(&[x, z], &d, t1) {
                prop_assert!(set_membership(&[x, z], &d, t1 + dt));
            }
        }

        #[test]
        fn proximity_sign_matches_membership(x in -3.0f64..3.0, z in -3.0f64..3.0) {
            let sets = [
                SetSpec::closed_box(vec![-1.0, -0.5], vec![1.0, 2.0]),
                SetSpec::Ball { coords: None, center: vec![0.3, 0.1], radius: 1.2, open: false },
                SetSpec::BallExterior { coords: Some(vec![0]), center: vec![0.0], radius: 1.0 },
            ];
            for s in &sets {
                prop_assert_eq!(s.contains(&[x, z]), s.proximity(&[x, z]) <= 0.0);
            }
        }
    }
}
