//! The reduced (slow) system obtained by freezing the fast state on the
//! quasi-steady-state map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::maps::SelectionBundle;
use super::model::{lattice, SystemDefinition};

/// Box of fast-state samples used to realize `z in D_z` and the projections
/// `C_x`, `D_x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZProbe {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub per_axis: usize,
}

/// `F~(x)` as a vertex bundle (plus optional pairwise midpoints) and `G~(x, v)`
/// as the slow components of `G` over sampled `z in D_z`.
#[derive(Clone, Debug)]
pub struct ReducedSystem<'a> {
    sys: &'a SystemDefinition,
    z_candidates: Vec<Vec<f64>>,
    include_midpoints: bool,
}

/// Builds the reduced system, checking that `M` is nonempty at `check_points`.
pub fn build_reduced_system<'a>(
    sys: &'a SystemDefinition,
    probe: &ZProbe,
    check_points: &[Vec<f64>],
) -> Result<ReducedSystem<'a>> {
    if probe.per_axis == 0 {
        return Err(Error::Config("z_samples_per_x must be at least 1".into()));
    }
    if probe.lo.len() != sys.n2 || probe.hi.len() != sys.n2 {
        return Err(Error::Config(format!(
            "z probe box must have {} coordinates",
            sys.n2
        )));
    }
    for x in check_points {
        sys.qss_at(x)?;
    }
    Ok(ReducedSystem {
        sys,
        z_candidates: lattice(&probe.lo, &probe.hi, probe.per_axis),
        include_midpoints: false,
    })
}

fn push_unique(out: &mut Vec<Vec<f64>>, v: Vec<f64>) {
    let dup = out
        .iter()
        .any(|w| w.iter().zip(&v).all(|(a, b)| a.to_bits() == b.to_bits()));
    if !dup {
        out.push(v);
    }
}

fn joined(x: &[f64], z: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    y.extend_from_slice(z);
    y
}

impl<'a> ReducedSystem<'a> {
    pub fn with_midpoints(mut self, on: bool) -> Self {
        self.include_midpoints = on;
        self
    }

    pub fn system(&self) -> &'a SystemDefinition {
        self.sys
    }

    /// Vertices `{f in F_x(x, z) : z in M(x)}` without interior combinations.
    pub fn flow_vertices(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let qss = self.sys.qss_at(x)?;
        let mut out = Vec::new();
        for m in qss.values() {
            for f in self.sys.flow_x_at(&joined(x, m))?.into_values() {
                push_unique(&mut out, f);
            }
        }
        Ok(out)
    }

    /// `F~(x)`; always flagged as convexified.
    pub fn flow(&self, x: &[f64]) -> Result<SelectionBundle> {
        let mut values = self.flow_vertices(x)?;
        if self.include_midpoints && values.len() > 1 {
            let n = values.len();
            for a in 0..n {
                for b in a + 1..n {
                    let mid = values[a]
                        .iter()
                        .zip(&values[b])
                        .map(|(p, q)| 0.5 * (p + q))
                        .collect();
                    values.push(mid);
                }
            }
        }
        SelectionBundle::new(values, true)
    }

    fn z_candidates_for(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut zs = self
            .sys
            .qss_at(x)
            .map(SelectionBundle::into_values)
            .unwrap_or_default();
        zs.extend(self.z_candidates.iter().cloned());
        zs
    }

    /// `G~(x, v)`: slow components of `G(x, z, v)` over sampled `z` with
    /// `(x, z) in D`.
    pub fn jump(&self, x: &[f64], v: &[f64], tol: f64) -> Result<SelectionBundle> {
        let mut out = Vec::new();
        for z in self.z_candidates_for(x) {
            let y = joined(x, &z);
            if !self.sys.in_jump_set(&y, tol) {
                continue;
            }
            for g in self.sys.jump_at(&y, v)?.into_values() {
                push_unique(&mut out, g[..self.sys.n1].to_vec());
            }
        }
        if out.is_empty() {
            return Err(Error::EmptyBundle {
                map: "reduced jump map",
                at: x.to_vec(),
            });
        }
        SelectionBundle::new(out, false)
    }

    /// `x in C_x`, realized as: some sampled `z` puts `(x, z)` in `C`.
    pub fn in_flow_set(&self, x: &[f64], tol: f64) -> bool {
        self.z_candidates_for(x)
            .iter()
            .any(|z| self.sys.in_flow_set(&joined(x, z), tol))
    }

    pub fn in_jump_set(&self, x: &[f64], tol: f64) -> bool {
        self.z_candidates_for(x)
            .iter()
            .any(|z| self.sys.in_jump_set(&joined(x, z), tol))
    }
}
