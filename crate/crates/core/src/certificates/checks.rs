//! Grid screens for the Lyapunov/Foster inequalities.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::executor::par_map_indexed;
use crate::hybrid::{
    build_reduced_system, lattice, JumpDistribution, ReducedSystem, SelectionBundle,
    SystemDefinition, ZProbe,
};
use crate::sets::SetPredicate;

use super::bundle::{compose_foster, CertFn, CertificateBundle, CompositeFoster};
use super::clarke::{estimate_clarke_gradient, point_seed, project_bundle};
use super::comparison::ComparisonFunction;
use super::thresholds::compute_thresholds;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CheckId {
    A2a,
    A2b,
    A3,
    A4a,
    A4b,
    A5,
    A6a,
    A6b,
    A7,
    A8,
    T1b,
    T3b,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckKind {
    Bound,
    Flow,
    JumpExpectation,
}

impl CheckId {
    pub const ALL: [CheckId; 12] = [
        CheckId::A2a,
        CheckId::A2b,
        CheckId::A3,
        CheckId::A4a,
        CheckId::A4b,
        CheckId::A5,
        CheckId::A6a,
        CheckId::A6b,
        CheckId::A7,
        CheckId::A8,
        CheckId::T1b,
        CheckId::T3b,
    ];

    pub fn kind(self) -> CheckKind {
        match self {
            CheckId::A2a | CheckId::A4a => CheckKind::Bound,
            CheckId::A2b | CheckId::A4b | CheckId::A6a | CheckId::A6b => CheckKind::Flow,
            _ => CheckKind::JumpExpectation,
        }
    }

    /// True for checks stated over the slow coordinates only.
    pub fn is_slow(self) -> bool {
        matches!(self, CheckId::A4a | CheckId::A4b | CheckId::A5)
    }
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Tensor grid over `y = (x, z)`, `points` per axis, endpoints included.
/// Slow-coordinate checks use the first `n1` axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: usize,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, points: usize) -> Self {
        GridSpec { lo, hi, points }
    }

    /// Same bounds on every axis of a `dim`-dimensional space.
    pub fn cube(dim: usize, lo: f64, hi: f64, points: usize) -> Self {
        GridSpec::new(vec![lo; dim], vec![hi; dim], points)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.points == 0 {
            return Err(config_err("empty grid: points per axis must be at least 1"));
        }
        if self.lo.len() != dim || self.hi.len() != dim {
            return Err(config_err(format!("grid must have {dim} axes")));
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
            return Err(config_err("grid bounds must be finite with lo <= hi"));
        }
        Ok(())
    }

    /// Points in lexicographic order, first coordinate slowest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        lattice(&self.lo, &self.hi, self.points)
    }

    pub fn slow_points(&self, n1: usize) -> Vec<Vec<f64>> {
        lattice(&self.lo[..n1], &self.hi[..n1], self.points)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckSettings {
    /// Pass threshold on the maximal violation.
    pub tol: f64,
    /// Membership tolerance for `C`, `D` and their projections.
    pub membership_tol: f64,
    /// Monte Carlo draws per point for non-finite jump laws.
    pub n_mc: usize,
    pub seed: u64,
    /// Lattice resolution for probing `G(D x V)` under a continuous law.
    pub support_per_axis: usize,
    /// Fast-coordinate samples per axis realizing `D_z`, `C_x`, `D_x`.
    pub z_per_axis: usize,
    /// Adds pairwise midpoints to the reduced flow bundle.
    pub reduced_midpoints: bool,
    /// Overrides `theta*` in the composite checks.
    pub theta: Option<f64>,
    pub workers: usize,
}

impl Default for CheckSettings {
    fn default() -> Self {
        CheckSettings {
            tol: 1e-9,
            membership_tol: 1e-9,
            n_mc: 10_000,
            seed: 0,
            support_per_axis: 5,
            z_per_axis: 21,
            reduced_midpoints: true,
            theta: None,
            workers: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub id: CheckId,
    pub grid: GridSpec,
    /// Largest violation over the filtered points; 0 when none survive.
    pub max_violation: f64,
    pub witness: Option<Vec<f64>>,
    pub n_points: usize,
    pub tolerance: f64,
    /// Standard error at the witness, for sampled expectations.
    pub mc_std: Option<f64>,
    pub passed: bool,
}

/// Value of one check at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointValue {
    pub violation: f64,
    pub mc_std: Option<f64>,
}

impl PointValue {
    fn exact(violation: f64) -> Self {
        PointValue {
            violation,
            mc_std: None,
        }
    }
}

/// `E[f(v)]` over the jump law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Expectation {
    pub mean: f64,
    /// `None` for exact enumeration.
    pub std_error: Option<f64>,
}

/// Exact enumeration for finite support (in atom order); otherwise `n_mc`
/// uniform draws from a generator seeded with `seed`.
pub fn jump_expectation(
    dist: &JumpDistribution,
    n_mc: usize,
    seed: u64,
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<Expectation> {
    dist.validate()?;
    match dist {
        JumpDistribution::FiniteSupport { atoms } => {
            let mut mean = 0.0;
            for a in atoms {
                mean += a.prob * f(&a.value)?;
            }
            Ok(Expectation {
                mean,
                std_error: None,
            })
        }
        JumpDistribution::UniformBox { lo, hi } => {
            if n_mc < 100 {
                return Err(config_err("sampled expectations need n_mc >= 100"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut v = vec![0.0; lo.len()];
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..n_mc {
                for (k, slot) in v.iter_mut().enumerate() {
                    let u: f64 = rng.random();
                    *slot = lo[k] + (hi[k] - lo[k]) * u;
                }
                let s = f(&v)?;
                sum += s;
                sum_sq += s * s;
            }
            let n = n_mc as f64;
            let mean = sum / n;
            let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
            Ok(Expectation {
                mean,
                std_error: Some((var / n).sqrt()),
            })
        }
    }
}

fn max_over(bundle: &SelectionBundle, f: impl Fn(&[f64]) -> f64) -> f64 {
    bundle
        .values()
        .iter()
        .map(|g| f(g))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Everything a check needs, built once per grid.
pub struct CheckContext<'a> {
    sys: &'a SystemDefinition,
    cert: &'a CertificateBundle,
    grid: GridSpec,
    settings: CheckSettings,
    reduced: ReducedSystem<'a>,
}

impl<'a> CheckContext<'a> {
    pub fn new(
        sys: &'a SystemDefinition,
        cert: &'a CertificateBundle,
        grid: &GridSpec,
        settings: &CheckSettings,
    ) -> Result<Self> {
        grid.validate(sys.dim())?;
        let probe = ZProbe {
            lo: grid.lo[sys.n1..].to_vec(),
            hi: grid.hi[sys.n1..].to_vec(),
            per_axis: settings.z_per_axis,
        };
        let reduced = build_reduced_system(sys, &probe, &[])?
            .with_midpoints(settings.reduced_midpoints);
        Ok(CheckContext {
            sys,
            cert,
            grid: grid.clone(),
            settings: settings.clone(),
            reduced,
        })
    }

    pub fn reduced(&self) -> &ReducedSystem<'a> {
        &self.reduced
    }

    fn membership_tol(&self) -> f64 {
        self.settings.membership_tol
    }

    /// Grid points in the check's domain, in grid order; bound checks append
    /// images of jump-set points.
    pub fn domain_points(&self, id: CheckId) -> Result<Vec<Vec<f64>>> {
        let tol = self.membership_tol();
        let sys = self.sys;
        let support = self
            .sys
            .jump_input
            .support_probe(self.settings.support_per_axis);
        match id {
            CheckId::A2a => {
                let grid = self.grid.points();
                let mut out: Vec<Vec<f64>> = grid
                    .iter()
                    .filter(|y| sys.in_flow_set(y, tol) || sys.in_jump_set(y, tol))
                    .cloned()
                    .collect();
                for y in grid.iter().filter(|y| sys.in_jump_set(y, tol)) {
                    for v in &support {
                        out.extend(sys.jump_at(y, v)?.into_values());
                    }
                }
                Ok(out)
            }
            CheckId::A4a => {
                let grid = self.grid.slow_points(sys.n1);
                let r = &self.reduced;
                let mut out: Vec<Vec<f64>> = grid
                    .iter()
                    .filter(|x| r.in_flow_set(x, tol) || r.in_jump_set(x, tol))
                    .cloned()
                    .collect();
                for x in grid.iter().filter(|x| r.in_jump_set(x, tol)) {
                    for v in &support {
                        out.extend(r.jump(x, v, tol)?.into_values());
                    }
                }
                Ok(out)
            }
            CheckId::A4b => Ok(self
                .grid
                .slow_points(sys.n1)
                .into_iter()
                .filter(|x| self.reduced.in_flow_set(x, tol))
                .collect()),
            CheckId::A5 => Ok(self
                .grid
                .slow_points(sys.n1)
                .into_iter()
                .filter(|x| self.reduced.in_jump_set(x, tol))
                .collect()),
            CheckId::A2b | CheckId::A6a | CheckId::A6b => Ok(self
                .grid
                .points()
                .into_iter()
                .filter(|y| sys.in_flow_set(y, tol))
                .collect()),
            CheckId::A3 | CheckId::A7 | CheckId::A8 | CheckId::T1b | CheckId::T3b => Ok(self
                .grid
                .points()
                .into_iter()
                .filter(|y| sys.in_jump_set(y, tol))
                .collect()),
        }
    }

    /// Violation of check `id` at `p` (a slow point for slow checks). Domain
    /// membership is not re-tested, so witnesses re-evaluate exactly.
    pub fn evaluate_point(&self, id: CheckId, p: &[f64]) -> Result<PointValue> {
        let n1 = self.sys.n1;
        let c = self.cert;
        let value = match id {
            CheckId::A2a => {
                let d = self.sys.qss_distance(p)?;
                let w = need_fn(&c.w, "W")?.eval(p);
                let lo = need(&c.alpha1, "alpha1")?.eval_s(d);
                let hi = need(&c.alpha2, "alpha2")?.eval_s(d);
                PointValue::exact((lo - w).max(w - hi))
            }
            CheckId::A4a => {
                let d = self.dist_to_a(p)?;
                let v = need_fn(&c.v, "V")?.eval(p);
                let lo = need(&c.alpha3, "alpha3")?.eval_s(d);
                let hi = need(&c.alpha4, "alpha4")?.eval_s(d);
                PointValue::exact((lo - v).max(v - hi))
            }
            CheckId::A2b => {
                let d = self.sys.qss_distance(p)?;
                let k_z = need_k(c.constants.k_z, "k_z")?;
                let phi_z = need(&c.phi_z, "phi_z")?.eval_s(d);
                let grads = self.gradients(need_fn(&c.w, "W")?, p)?;
                let nu = project_bundle(&grads, n1..p.len());
                let f_z = self.sys.flow_z_at(p)?;
                let lhs = max_pairs(&nu, f_z.values());
                PointValue::exact(lhs + k_z * phi_z * phi_z)
            }
            CheckId::A4b => {
                let k_x = need_k(c.constants.k_x, "k_x")?;
                let phi_x = need(&c.phi_x, "phi_x")?.eval(p);
                let grads = self.gradients(need_fn(&c.v, "V")?, p)?;
                let f = self.reduced.flow(p)?;
                let lhs = max_pairs(grads.values(), f.values());
                let mu_f = c.constants.mu_f.unwrap_or(0.0);
                PointValue::exact(lhs + k_x * phi_x * phi_x - mu_f * self.indicator_o(p)?)
            }
            CheckId::A6a => {
                let (x, _) = self.sys.split(p);
                let d = self.sys.qss_distance(p)?;
                let k1 = need_k(c.constants.k1, "k_1")?;
                let k2 = need_k(c.constants.k2, "k_2")?;
                let phi_z = need(&c.phi_z, "phi_z")?.eval_s(d);
                let phi_x = need(&c.phi_x, "phi_x")?.eval(x);
                let grads = self.gradients(need_fn(&c.w, "W")?, p)?;
                let nu = project_bundle(&grads, 0..n1);
                let f_x = self.sys.flow_x_at(p)?;
                let lhs = max_pairs(&nu, f_x.values());
                PointValue::exact(lhs - k1 * phi_z * phi_x - k2 * phi_z * phi_z)
            }
            CheckId::A6b => {
                let (x, _) = self.sys.split(p);
                let d = self.sys.qss_distance(p)?;
                let k3 = need_k(c.constants.k3, "k_3")?;
                let phi_z = need(&c.phi_z, "phi_z")?.eval_s(d);
                let phi_x = need(&c.phi_x, "phi_x")?.eval(x);
                let grads = self.gradients(need_fn(&c.v, "V")?, x)?;
                let f_x = self.sys.flow_x_at(p)?;
                let f_red = self.reduced.flow(x)?;
                let lhs = f_x
                    .values()
                    .iter()
                    .map(|fx| {
                        f_red
                            .values()
                            .iter()
                            .map(|ft| {
                                let diff: Vec<f64> = fx.iter().zip(ft).map(|(a, b)| a - b).collect();
                                max_over(&grads, |nu| dot(nu, &diff))
                            })
                            .fold(f64::INFINITY, f64::min)
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                PointValue::exact(lhs - k3 * phi_z * phi_x)
            }
            CheckId::A3 => {
                let w = need_fn(&c.w, "W")?;
                let c_z = need_k(c.constants.c_z, "c_z")?;
                let rho_z = need(&c.rho_z, "rho_z")?.eval_s(self.sys.qss_distance(p)?);
                let e = self.full_expectation(p, |g| w.eval(g))?;
                stochastic(e, e.mean - w.eval(p) + c_z * rho_z)
            }
            CheckId::A7 => {
                let (x, _) = self.sys.split(p);
                let w = need_fn(&c.w, "W")?;
                let k4 = need_k(c.constants.k4, "k_4")?;
                let rho_4 = need(&c.rho_4, "rho_4")?.eval(x);
                let e = self.full_expectation(p, |g| w.eval(g))?;
                stochastic(e, e.mean - w.eval(p) - k4 * rho_4)
            }
            CheckId::A5 => {
                let v = need_fn(&c.v, "V")?;
                let c_x = need_k(c.constants.c_x, "c_x")?;
                let rho_x = need(&c.rho_x, "rho_x")?.eval(p);
                let mu_j = c.constants.mu_j.unwrap_or(0.0);
                let e = self.reduced_expectation(p, v)?;
                let o = self.indicator_o(p)?;
                stochastic(e, e.mean - v.eval(p) + c_x * rho_x - mu_j * o)
            }
            CheckId::A8 => {
                let (x, _) = self.sys.split(p);
                let v = need_fn(&c.v, "V")?;
                let k5 = need_k(c.constants.k5, "k_5")?;
                let rho_5 = need(&c.rho_5, "rho_5")?.eval_s(self.sys.qss_distance(p)?);
                let e = self.reduced_expectation(x, v)?;
                stochastic(e, e.mean - v.eval(x) - k5 * rho_5)
            }
            CheckId::T1b | CheckId::T3b => {
                let foster = self.composite()?;
                let rho_hat = need(&c.rho_hat, "rho_hat")?.eval(p);
                let e = self.full_expectation(p, |g| foster.eval(g))?;
                let mut v = e.mean - foster.eval(p) + rho_hat;
                if id == CheckId::T3b {
                    let mu_j = need_k(c.constants.mu_j, "mu_j")?;
                    v -= mu_j * self.indicator_o_tilde(p)?;
                }
                stochastic(e, v)
            }
        };
        if value.violation.is_nan() {
            return Err(Error::NotEvaluable { at: p.to_vec() });
        }
        Ok(value)
    }

    /// `E_θ` with `θ = θ*` unless overridden.
    pub fn composite(&self) -> Result<CompositeFoster> {
        let theta = match self.settings.theta {
            Some(t) => t,
            None => {
                let k = self
                    .cert
                    .constants
                    .flow()
                    .ok_or_else(|| config_err("certificate is missing flow constants for theta*"))?;
                compute_thresholds(k)?.theta_star
            }
        };
        compose_foster(self.cert, theta, self.sys.n1)
    }

    fn gradients(&self, f: &CertFn, p: &[f64]) -> Result<SelectionBundle> {
        estimate_clarke_gradient(&f.f, p, &self.cert.gradient, f.smooth, self.settings.seed)
    }

    fn dist_to_a(&self, x: &[f64]) -> Result<f64> {
        let a = self
            .cert
            .target_a
            .as_ref()
            .ok_or_else(|| config_err("certificate is missing target set A"))?;
        a.distance(x)
            .ok_or_else(|| config_err("target set A does not support distance queries"))
    }

    fn indicator_o(&self, x: &[f64]) -> Result<f64> {
        match &self.cert.target_o {
            Some(o) => Ok(if in_open(o, x) { 1.0 } else { 0.0 }),
            None => Ok(0.0),
        }
    }

    /// `1` on `{x in O, |z - m(x)| < r}`; `r = 0` reduces to the graph of `m`
    /// up to the membership tolerance.
    fn indicator_o_tilde(&self, y: &[f64]) -> Result<f64> {
        let (x, _) = self.sys.split(y);
        let o = self
            .cert
            .target_o
            .as_ref()
            .ok_or_else(|| config_err("certificate is missing open set O"))?;
        if !in_open(o, x) {
            return Ok(0.0);
        }
        let d = self.sys.qss_distance(y)?;
        let inside = match self.cert.o_tilde_radius {
            Some(r) => d < r,
            None => d <= self.membership_tol(),
        };
        Ok(if inside { 1.0 } else { 0.0 })
    }

    fn full_expectation(&self, y: &[f64], f: impl Fn(&[f64]) -> f64) -> Result<Expectation> {
        jump_expectation(
            &self.sys.jump_input,
            self.settings.n_mc,
            point_seed(self.settings.seed, y),
            |v| Ok(max_over(&self.sys.jump_at(y, v)?, &f)),
        )
    }

    fn reduced_expectation(&self, x: &[f64], v_fn: &CertFn) -> Result<Expectation> {
        let tol = self.membership_tol();
        jump_expectation(
            &self.sys.jump_input,
            self.settings.n_mc,
            point_seed(self.settings.seed, x),
            |v| Ok(max_over(&self.reduced.jump(x, v, tol)?, |g| v_fn.eval(g))),
        )
    }

    /// Runs check `id` over its filtered domain.
    pub fn run(&self, id: CheckId) -> Result<ViolationReport> {
        let points = self.domain_points(id)?;
        let values = par_map_indexed(points.len(), self.settings.workers, |i| {
            self.evaluate_point(id, &points[i])
        })?;
        let mut best: Option<(usize, PointValue)> = None;
        let mut passed = true;
        for (i, v) in values.into_iter().enumerate() {
            let v = v?;
            let slack = 3.0 * v.mc_std.unwrap_or(0.0);
            if v.violation - slack > self.settings.tol {
                passed = false;
            }
            if best.is_none_or(|(_, b)| v.violation > b.violation) {
                best = Some((i, v));
            }
        }
        Ok(ViolationReport {
            id,
            grid: self.grid.clone(),
            max_violation: best.map_or(0.0, |(_, v)| v.violation),
            witness: best.map(|(i, _)| points[i].clone()),
            n_points: points.len(),
            tolerance: self.settings.tol,
            mc_std: best.and_then(|(_, v)| v.mc_std),
            passed,
        })
    }
}

fn in_open(o: &SetPredicate, x: &[f64]) -> bool {
    match o.proximity(x) {
        Some(p) => p < 0.0,
        None => o.contains(x),
    }
}

fn stochastic(e: Expectation, violation: f64) -> PointValue {
    PointValue {
        violation,
        mc_std: e.std_error,
    }
}

fn max_pairs(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flat_map(|u| b.iter().map(move |w| dot(u, w)))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn need<'c>(f: &'c Option<ComparisonFunction>, name: &str) -> Result<&'c ComparisonFunction> {
    f.as_ref()
        .ok_or_else(|| config_err(format!("certificate is missing {name}")))
}

fn need_fn<'c>(f: &'c Option<CertFn>, name: &str) -> Result<&'c CertFn> {
    f.as_ref()
        .ok_or_else(|| config_err(format!("certificate is missing {name}")))
}

fn need_k(k: Option<f64>, name: &str) -> Result<f64> {
    k.ok_or_else(|| config_err(format!("certificate is missing constant {name}")))
}

fn ensure_kind(id: CheckId, kind: CheckKind) -> Result<()> {
    if id.kind() != kind {
        return Err(config_err(format!("{id} is not a {kind:?} check")));
    }
    Ok(())
}

/// Flow inequality screen for `A2b`, `A4b`, `A6a`, `A6b`.
pub fn check_flow_inequality(
    id: CheckId,
    sys: &SystemDefinition,
    cert: &CertificateBundle,
    grid: &GridSpec,
    settings: &CheckSettings,
) -> Result<ViolationReport> {
    ensure_kind(id, CheckKind::Flow)?;
    CheckContext::new(sys, cert, grid, settings)?.run(id)
}

/// Sandwich bound screen for `A2a`, `A4a`.
pub fn check_bound_inequality(
    id: CheckId,
    sys: &SystemDefinition,
    cert: &CertificateBundle,
    grid: &GridSpec,
    settings: &CheckSettings,
) -> Result<ViolationReport> {
    ensure_kind(id, CheckKind::Bound)?;
    CheckContext::new(sys, cert, grid, settings)?.run(id)
}

/// Expected jump decrease screen for `A3`, `A5`, `A7`, `A8`, `T1b`, `T3b`.
pub fn check_jump_expectation(
    id: CheckId,
    sys: &SystemDefinition,
    cert: &CertificateBundle,
    grid: &GridSpec,
    settings: &CheckSettings,
) -> Result<ViolationReport> {
    ensure_kind(id, CheckKind::JumpExpectation)?;
    CheckContext::new(sys, cert, grid, settings)?.run(id)
}

