//! Sampled Clarke generalized gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::executor::splitmix64;
use crate::hybrid::{ScalarFn, SelectionBundle};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Exact gradient (forward-mode differentiation of config expressions, or
    /// a supplied gradient closure).
    Analytic,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradientSettings {
    pub mode: GradientMode,
    pub radius: f64,
    pub n_samples: usize,
}

impl Default for GradientSettings {
    fn default() -> Self {
        GradientSettings {
            mode: GradientMode::Analytic,
            radius: 1e-4,
            n_samples: 64,
        }
    }
}

/// Central finite-difference gradient with step `h`.
pub fn central_difference(f: &ScalarFn, y: &[f64], h: f64) -> Vec<f64> {
    let mut p = y.to_vec();
    (0..y.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f.eval(&p);
            p[i] = orig - h;
            let down = f.eval(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Seed for sampling at `y`, so re-evaluation at a witness is exact.
pub(crate) fn point_seed(base: u64, y: &[f64]) -> u64 {
    y.iter()
        .fold(splitmix64(base), |h, v| splitmix64(h ^ v.to_bits()))
}

fn finite(g: &[f64]) -> bool {
    g.iter().all(|v| v.is_finite())
}

/// Approximates `∂f(y)` by a bundle of gradients.
///
/// Analytic mode returns the exact gradient when `f` provides one. Sampled
/// mode returns central differences at `n_samples` points drawn uniformly from
/// the ball of radius `radius` around `y`; functions flagged `smooth` get the
/// single central difference at `y`.
pub fn estimate_clarke_gradient(
    f: &ScalarFn,
    y: &[f64],
    settings: &GradientSettings,
    smooth: bool,
    seed: u64,
) -> Result<SelectionBundle> {
    let not_evaluable = || Error::NotEvaluable { at: y.to_vec() };
    if settings.mode == GradientMode::Analytic {
        if let Some(g) = f.gradient(y) {
            if !finite(&g) {
                return Err(not_evaluable());
            }
            return Ok(SelectionBundle::singleton(g));
        }
    }
    if !(settings.radius > 0.0) {
        return Err(Error::Config("gradient sampling radius must be positive".into()));
    }
    if settings.n_samples == 0 {
        return Err(Error::Config("gradient sampling needs at least one sample".into()));
    }
    let h = (settings.radius * 1e-2).max(1e-7);
    if smooth {
        let g = central_difference(f, y, h);
        if !finite(&g) {
            return Err(not_evaluable());
        }
        return Ok(SelectionBundle::singleton(g));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(point_seed(seed, y));
    let n = y.len();
    let mut out = Vec::with_capacity(settings.n_samples);
    while out.len() < settings.n_samples {
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        if u.iter().map(|v| v * v).sum::<f64>() > 1.0 {
            continue;
        }
        let p: Vec<f64> = y
            .iter()
            .zip(&u)
            .map(|(yi, ui)| yi + settings.radius * ui)
            .collect();
        let g = central_difference(f, &p, h);
        if !finite(&g) {
            return Err(not_evaluable());
        }
        out.push(g);
    }
    SelectionBundle::new(out, true)
}

/// Rows `range` of every gradient in `bundle` (partial gradients).
pub fn project_bundle(bundle: &SelectionBundle, range: std::ops::Range<usize>) -> Vec<Vec<f64>> {
    bundle
        .values()
        .iter()
        .map(|g| g[range.clone()].to_vec())
        .collect()
}
