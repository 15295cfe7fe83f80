use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;

/// Finite representation of the value of a set-valued map at one point.
///
/// When `convexified` is set the bundle stands for the closed convex hull of
/// its values; otherwise it stands for the finite set itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionBundle {
    values: Vec<Vec<f64>>,
    convexified: bool,
}

impl SelectionBundle {
    pub fn new(values: Vec<Vec<f64>>, convexified: bool) -> Result<Self> {
        let Some(first) = values.first() else {
            return Err(Error::Domain("selection bundle must be nonempty".into()));
        };
        let dim = first.len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::Domain(
                "selection bundle values have mixed dimensions".into(),
            ));
        }
        Ok(SelectionBundle {
            values,
            convexified,
        })
    }

    pub fn singleton(v: Vec<f64>) -> Self {
        SelectionBundle {
            values: vec![v],
            convexified: false,
        }
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Vec<f64>> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn is_convexified(&self) -> bool {
        self.convexified
    }

    /// Exact (bitwise) membership of `v` among the stored values.
    pub fn contains_exact(&self, v: &[f64]) -> bool {
        self.values.iter().any(|w| {
            w.len() == v.len() && w.iter().zip(v).all(|(a, b)| a.to_bits() == b.to_bits())
        })
    }

    pub fn max_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|v| v.iter().map(|c| c * c).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Config form of a set-valued map: one expression list per selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleSpec {
    pub selections: Vec<Vec<Expr>>,
    #[serde(default)]
    pub convexified: bool,
}

impl BundleSpec {
    pub fn single(components: Vec<Expr>) -> Self {
        BundleSpec {
            selections: vec![components],
            convexified: false,
        }
    }

    pub(crate) fn validate(&self, name: &str, arity: usize, out_dim: usize) -> Result<()> {
        for (k, sel) in self.selections.iter().enumerate() {
            if sel.len() != out_dim {
                return Err(Error::Config(format!(
                    "{name}: selection {k} has {} components, expected {out_dim}",
                    sel.len()
                )));
            }
            if let Some(i) = sel.iter().filter_map(Expr::max_var).max() {
                if i >= arity {
                    return Err(Error::Config(format!(
                        "{name}: selection {k} references argument {i}, arity is {arity}"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub type BundleFn = Arc<dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync>;

/// A set-valued map evaluated through finite selection bundles.
#[derive(Clone)]
pub enum MapBundle {
    Spec(BundleSpec),
    Custom { f: BundleFn, convexified: bool },
}

impl fmt::Debug for MapBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapBundle::Spec(s) => write!(f, "MapBundle::Spec({s:?})"),
            MapBundle::Custom { convexified, .. } => {
                write!(f, "MapBundle::Custom(convexified: {convexified})")
            }
        }
    }
}

impl From<BundleSpec> for MapBundle {
    fn from(s: BundleSpec) -> Self {
        MapBundle::Spec(s)
    }
}

impl MapBundle {
    pub fn custom(
        f: impl Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync + 'static,
        convexified: bool,
    ) -> Self {
        MapBundle::Custom {
            f: Arc::new(f),
            convexified,
        }
    }

    pub fn is_convexified(&self) -> bool {
        match self {
            MapBundle::Spec(s) => s.convexified,
            MapBundle::Custom { convexified, .. } => *convexified,
        }
    }

    pub fn spec(&self) -> Option<&BundleSpec> {
        match self {
            MapBundle::Spec(s) => Some(s),
            MapBundle::Custom { .. } => None,
        }
    }

    pub fn eval_raw(&self, args: &[f64]) -> Vec<Vec<f64>> {
        match self {
            MapBundle::Spec(s) => s
                .selections
                .iter()
                .map(|sel| sel.iter().map(|e| e.eval(args)).collect())
                .collect(),
            MapBundle::Custom { f, .. } => f(args),
        }
    }

    /// Evaluates the map; an empty result is reported as [`Error::EmptyBundle`].
    pub fn eval(&self, args: &[f64], name: &'static str) -> Result<SelectionBundle> {
        let values = self.eval_raw(args);
        if values.is_empty() {
            return Err(Error::EmptyBundle {
                map: name,
                at: args.to_vec(),
            });
        }
        SelectionBundle::new(values, self.is_convexified())
    }
}

pub type ScalarClosure = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientClosure = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A real-valued function: either a config expression or a closure with an
/// optional hand-written gradient.
#[derive(Clone)]
pub enum ScalarFn {
    Expr(Expr),
    Custom {
        f: ScalarClosure,
        grad: Option<GradientClosure>,
    },
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarFn::Expr(e) => write!(f, "ScalarFn::Expr({e:?})"),
            ScalarFn::Custom { grad, .. } => {
                write!(f, "ScalarFn::Custom(gradient: {})", grad.is_some())
            }
        }
    }
}

impl From<Expr> for ScalarFn {
    fn from(e: Expr) -> Self {
        ScalarFn::Expr(e)
    }
}

impl ScalarFn {
    pub fn custom(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarFn::Custom {
            f: Arc::new(f),
            grad: None,
        }
    }

    pub fn eval(&self, args: &[f64]) -> f64 {
        match self {
            ScalarFn::Expr(e) => e.eval(args),
            ScalarFn::Custom { f, .. } => f(args),
        }
    }

    /// Analytic gradient when one is available.
    pub fn gradient(&self, args: &[f64]) -> Option<Vec<f64>> {
        match self {
            ScalarFn::Expr(e) => Some(e.eval_grad(args).1),
            ScalarFn::Custom { grad, .. } => grad.as_ref().map(|g| g(args)),
        }
    }

    pub fn expr(&self) -> Option<&Expr> {
        match self {
            ScalarFn::Expr(e) => Some(e),
            ScalarFn::Custom { .. } => None,
        }
    }
}
