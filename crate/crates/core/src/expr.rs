//! Declarative scalar expressions used by config-defined maps, sets and
//! certificate functions.
//!
//! The vocabulary is deliberately small: constants, affine forms, sparse
//! polynomials, sums/products, integer powers and the nonsmooth building
//! blocks `abs`, `min`, `max` and Euclidean `norm`. Variables are positional
//! indices into the argument vector of whatever map the expression belongs to
//! (`(x, z)` for flow maps, `(x, z, v)` for the jump map, `[s]` for comparison
//! functions, and so on).
//!
//! Gradients are computed by forward-mode differentiation. At kinks of
//! `abs`/`min`/`max` the returned vector is one element of the Clarke
//! gradient (right derivative for `abs`, first active branch for `min`/`max`).

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(f64),
    Var(usize),
    /// `coeffs · args + offset`; missing trailing coefficients are zero.
    Affine {
        coeffs: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    Poly(Vec<Monomial>),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Scale(f64, Box<Expr>),
    Powi(Box<Expr>, i32),
    Abs(Box<Expr>),
    Min(Vec<Expr>),
    Max(Vec<Expr>),
    Norm(Vec<Expr>),
}

/// `coeff * Π args[var]^pow`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    #[serde(default)]
    pub powers: Vec<(usize, u32)>,
}

impl Expr {
    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn c(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn scale(self, k: f64) -> Expr {
        Expr::Scale(k, Box::new(self))
    }

    pub fn powi(self, n: i32) -> Expr {
        Expr::Powi(Box::new(self), n)
    }

    pub fn square(self) -> Expr {
        self.powi(2)
    }

    pub fn abs(self) -> Expr {
        Expr::Abs(Box::new(self))
    }

    pub fn max(self, other: Expr) -> Expr {
        Expr::Max(vec![self, other])
    }

    pub fn min(self, other: Expr) -> Expr {
        Expr::Min(vec![self, other])
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Affine { coeffs, .. } => coeffs.len().checked_sub(1),
            Expr::Poly(terms) => terms
                .iter()
                .flat_map(|m| m.powers.iter().map(|(i, _)| *i))
                .max(),
            Expr::Sum(es) | Expr::Product(es) | Expr::Min(es) | Expr::Max(es) | Expr::Norm(es) => {
                es.iter().filter_map(Expr::max_var).max()
            }
            Expr::Scale(_, e) | Expr::Powi(e, _) | Expr::Abs(e) => e.max_var(),
        }
    }

    pub fn eval(&self, args: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => args[*i],
            Expr::Affine { coeffs, offset } => {
                coeffs.iter().zip(args).map(|(c, a)| c * a).sum::<f64>() + offset
            }
            Expr::Poly(terms) => terms.iter().map(|m| m.eval(args)).sum(),
            Expr::Sum(es) => es.iter().map(|e| e.eval(args)).sum(),
            Expr::Product(es) => es.iter().map(|e| e.eval(args)).product(),
            Expr::Scale(k, e) => k * e.eval(args),
            Expr::Powi(e, n) => e.eval(args).powi(*n),
            Expr::Abs(e) => e.eval(args).abs(),
            Expr::Min(es) => es.iter().map(|e| e.eval(args)).fold(f64::INFINITY, f64::min),
            Expr::Max(es) => es
                .iter()
                .map(|e| e.eval(args))
                .fold(f64::NEG_INFINITY, f64::max),
            Expr::Norm(es) => es
                .iter()
                .map(|e| {
                    let v = e.eval(args);
                    v * v
                })
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Value and gradient with respect to every argument.
    pub fn eval_grad(&self, args: &[f64]) -> (f64, Vec<f64>) {
        let n = args.len();
        match self {
            Expr::Const(c) => (*c, vec![0.0; n]),
            Expr::Var(i) => {
                let mut g = vec![0.0; n];
                g[*i] = 1.0;
                (args[*i], g)
            }
            Expr::Affine { coeffs, .. } => {
                let mut g = vec![0.0; n];
                g[..coeffs.len()].copy_from_slice(coeffs);
                (self.eval(args), g)
            }
            Expr::Poly(terms) => {
                let mut g = vec![0.0; n];
                let mut v = 0.0;
                for m in terms {
                    v += m.eval(args);
                    m.accumulate_grad(args, &mut g);
                }
                (v, g)
            }
            Expr::Sum(es) => {
                let mut g = vec![0.0; n];
                let mut v = 0.0;
                for e in es {
                    let (ev, eg) = e.eval_grad(args);
                    v += ev;
                    axpy(1.0, &eg, &mut g);
                }
                (v, g)
            }
            Expr::Product(es) => {
                let parts: Vec<(f64, Vec<f64>)> = es.iter().map(|e| e.eval_grad(args)).collect();
                let v: f64 = parts.iter().map(|p| p.0).product();
                let mut g = vec![0.0; n];
                for (k, (_, pg)) in parts.iter().enumerate() {
                    let others: f64 = parts
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != k)
                        .map(|(_, p)| p.0)
                        .product();
                    axpy(others, pg, &mut g);
                }
                (v, g)
            }
            Expr::Scale(k, e) => {
                let (v, mut g) = e.eval_grad(args);
                g.iter_mut().for_each(|gi| *gi *= k);
                (k * v, g)
            }
            Expr::Powi(e, p) => {
                let (u, mut g) = e.eval_grad(args);
                let d = if *p == 0 { 0.0 } else { *p as f64 * u.powi(p - 1) };
                g.iter_mut().for_each(|gi| *gi *= d);
                (u.powi(*p), g)
            }
            Expr::Abs(e) => {
                let (u, mut g) = e.eval_grad(args);
                if u < 0.0 {
                    g.iter_mut().for_each(|gi| *gi = -*gi);
                }
                (u.abs(), g)
            }
            Expr::Min(es) => select_branch(es, args, |cand, best| cand < best),
            Expr::Max(es) => select_branch(es, args, |cand, best| cand > best),
            Expr::Norm(es) => {
                let parts: Vec<(f64, Vec<f64>)> = es.iter().map(|e| e.eval_grad(args)).collect();
                let v = parts.iter().map(|p| p.0 * p.0).sum::<f64>().sqrt();
                let mut g = vec![0.0; n];
                if v > 0.0 {
                    for (pv, pg) in &parts {
                        axpy(pv / v, pg, &mut g);
                    }
                }
                (v, g)
            }
        }
    }
}

impl Monomial {
    pub fn new(coeff: f64, powers: Vec<(usize, u32)>) -> Self {
        Monomial { coeff, powers }
    }

    fn eval(&self, args: &[f64]) -> f64 {
        self.powers
            .iter()
            .fold(self.coeff, |acc, (i, p)| acc * args[*i].powi(*p as i32))
    }

    fn accumulate_grad(&self, args: &[f64], g: &mut [f64]) {
        for (k, (i, p)) in self.powers.iter().enumerate() {
            if *p == 0 {
                continue;
            }
            let mut d = self.coeff * *p as f64 * args[*i].powi(*p as i32 - 1);
            for (l, (i2, p2)) in self.powers.iter().enumerate() {
                if l != k {
                    d *= args[*i2].powi(*p2 as i32);
                }
            }
            g[*i] += d;
        }
    }
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn select_branch(
    es: &[Expr],
    args: &[f64],
    better: impl Fn(f64, f64) -> bool,
) -> (f64, Vec<f64>) {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for e in es {
        let cand = e.eval_grad(args);
        match &best {
            Some((bv, _)) if !better(cand.0, *bv) => {}
            _ => best = Some(cand),
        }
    }
    best.unwrap_or((f64::NAN, vec![0.0; args.len()]))
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        match self {
            Expr::Sum(mut es) => {
                es.push(rhs);
                Expr::Sum(es)
            }
            lhs => Expr::Sum(vec![lhs, rhs]),
        }
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        self + rhs.scale(-1.0)
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Product(vec![self, rhs])
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_grad(e: &Expr, args: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..args.len())
            .map(|i| {
                let mut p = args.to_vec();
                let mut m = args.to_vec();
                p[i] += h;
                m[i] -= h;
                (e.eval(&p) - e.eval(&m)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn half_square_of_difference() {
        let w = (Expr::var(1) - Expr::var(0)).square().scale(0.5);
        let (v, g) = w.eval_grad(&[1.0, 3.0]);
        assert_eq!(v, 2.0);
        assert_eq!(g, vec![-2.0, 2.0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let e = Expr::Poly(vec![
            Monomial::new(2.0, vec![(0, 3), (1, 1)]),
            Monomial::new(-1.5, vec![(1, 2)]),
            Monomial::new(0.25, vec![]),
        ]) + Expr::Norm(vec![Expr::var(0), Expr::var(1).scale(2.0)])
            + Expr::Product(vec![Expr::var(0), Expr::var(1), Expr::c(3.0)])
            + Expr::Affine {
                coeffs: vec![1.0, -4.0],
                offset: 2.0,
            }
            + (Expr::var(0) - Expr::c(0.3)).abs().max(Expr::c(0.1));
        for args in [[0.7, -1.2], [-0.4, 2.5], [1.9, 0.3]] {
            let (v, g) = e.eval_grad(&args);
            assert!((v - e.eval(&args)).abs() < 1e-12);
            let fd = fd_grad(&e, &args);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-6, "{g:?} vs {fd:?}");
            }
        }
    }

    #[test]
    fn abs_kink_uses_right_derivative() {
        let (_, g) = Expr::var(0).abs().eval_grad(&[0.0]);
        assert_eq!(g, vec![1.0]);
        let (_, g) = Expr::var(0).abs().eval_grad(&[-2.0]);
        assert_eq!(g, vec![-1.0]);
    }

    #[test]
    fn json_shape_is_stable() {
        let e = (Expr::var(0) - Expr::c(1.0)).square().scale(0.5);
        let s = serde_json::to_string(&e).unwrap();
        let back: Expr = serde_json::from_str(&s).unwrap();
        assert_eq!(back, e);
        assert!(s.contains("\"scale\""));
        assert_eq!(e.max_var(), Some(0));
    }
}
