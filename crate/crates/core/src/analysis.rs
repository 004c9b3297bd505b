//! Validation metrics: per-probe fidelity and Husimi Q-function surfaces.

use std::f64::consts::FRAC_1_PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{PovmMatrix, OUTCOMES};
use crate::error::{Error, Result};
use crate::probes::{poisson_pmf, tail_mass, DEFAULT_TAIL_EPSILON};

/// Overlap `sum_n sqrt(p_n q_n)` of two outcome distributions.
pub fn fidelity(measured: &[f64], reconstructed: &[f64]) -> Result<f64> {
    if measured.len() != reconstructed.len() {
        return Err(Error::Dimension(format!(
            "distributions of length {} and {}",
            measured.len(),
            reconstructed.len()
        )));
    }
    for (name, v) in [("measured", measured), ("reconstructed", reconstructed)] {
        if let Some(x) = v.iter().find(|&&x| !(x >= 0.0)) {
            return Err(Error::param(format!("{name} distribution has entry {x}")));
        }
        let s: f64 = v.iter().sum();
        if s > 1.0 + 1e-9 {
            return Err(Error::param(format!("{name} distribution sums to {s}")));
        }
    }
    Ok(measured
        .iter()
        .zip(reconstructed)
        .map(|(p, q)| (p * q).sqrt())
        .sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeFidelity {
    pub j: usize,
    pub mean_photons: f64,
    #[serde(rename = "F")]
    pub fidelity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub probes: Vec<ProbeFidelity>,
    pub min_fidelity: f64,
}

impl FidelityReport {
    /// Fidelity of every column of `measured` against `reconstructed` (`5 x J`).
    pub fn new(
        means: &[f64],
        measured: &DMatrix<f64>,
        reconstructed: &DMatrix<f64>,
    ) -> Result<Self> {
        if measured.shape() != reconstructed.shape() || measured.ncols() != means.len() {
            return Err(Error::Dimension(format!(
                "measured {:?}, reconstructed {:?}, {} probes",
                measured.shape(),
                reconstructed.shape(),
                means.len()
            )));
        }
        let probes = (0..means.len())
            .map(|j| {
                let e: Vec<f64> = measured.column(j).iter().copied().collect();
                // Reconstructed values may undershoot zero by rounding.
                let r: Vec<f64> = reconstructed.column(j).iter().map(|v| v.max(0.0)).collect();
                Ok(ProbeFidelity {
                    j,
                    mean_photons: means[j],
                    fidelity: fidelity(&e, &r)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let min_fidelity = probes
            .iter()
            .map(|p| p.fidelity)
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            probes,
            min_fidelity,
        })
    }
}

/// Q-function values of all outcomes at one phase-space radius.
#[derive(Clone, Debug, PartialEq)]
pub struct QValues {
    pub values: [f64; OUTCOMES],
    /// Poisson mass beyond the POVM truncation at this intensity.
    pub truncated_tail: f64,
    /// Set when the truncated tail exceeds the default tail epsilon.
    pub warning: Option<String>,
}

/// `Q_n(alpha) = (1/pi) sum_m Xi[n][m] P(m; |alpha|^2)` for every outcome.
pub fn q_function(povm: &PovmMatrix, mean_photons: f64) -> Result<QValues> {
    if !(mean_photons >= 0.0) || !mean_photons.is_finite() {
        return Err(Error::param(format!(
            "|alpha|^2 = {mean_photons} must be >= 0"
        )));
    }
    let mut values = [0.0; OUTCOMES];
    for m in 0..=povm.truncation() {
        let a = poisson_pmf(mean_photons, m);
        for (n, v) in values.iter_mut().enumerate() {
            *v += povm.get(n, m) * a;
        }
    }
    for v in &mut values {
        *v *= FRAC_1_PI;
    }
    let truncated_tail = tail_mass(mean_photons, povm.truncation());
    let warning = (truncated_tail > DEFAULT_TAIL_EPSILON).then(|| {
        format!(
            "Poisson mass {truncated_tail:.3e} beyond truncation M={} at |alpha|^2={mean_photons}",
            povm.truncation()
        )
    });
    Ok(QValues {
        values,
        truncated_tail,
        warning,
    })
}

/// Cartesian phase-space mesh `re, im in [-half_width, half_width]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Mesh {
    pub half_width: f64,
    /// Points per axis.
    pub points: usize,
}

impl Default for Mesh {
    fn default() -> Self {
        Self {
            half_width: 8.0,
            points: 161,
        }
    }
}

impl Mesh {
    pub fn validate(&self) -> Result<()> {
        if self.points == 0 || !(self.half_width >= 0.0) || !self.half_width.is_finite() {
            return Err(Error::param(format!("invalid mesh {self:?}")));
        }
        Ok(())
    }

    /// Axis coordinates; a single point sits at the origin.
    pub fn axis(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![0.0];
        }
        let step = 2.0 * self.half_width / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                let c = i as isize - (self.points / 2) as isize;
                if self.points % 2 == 1 {
                    c as f64 * step
                } else {
                    -self.half_width + i as f64 * step
                }
            })
            .collect()
    }
}

/// Experimental Q-function overlay point, placed at phase zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlayPoint {
    pub j: usize,
    pub mean_photons: f64,
    pub re: f64,
    pub q: [f64; OUTCOMES],
}

#[derive(Clone, Debug, PartialEq)]
pub struct QGrid {
    pub mesh: Mesh,
    pub axis: Vec<f64>,
    /// `values[n]` is a `points x points` matrix indexed `(re, im)`.
    pub values: [DMatrix<f64>; OUTCOMES],
    /// `(1/pi) xi[n][j]` for measured probes.
    pub overlay: Vec<OverlayPoint>,
    /// Largest truncated Poisson tail over the mesh.
    pub max_truncated_tail: f64,
}

impl QGrid {
    pub fn value(&self, n: usize, re_index: usize, im_index: usize) -> f64 {
        self.values[n][(re_index, im_index)]
    }
}

/// Evaluates every outcome's Q-function on `mesh`.
///
/// Values are computed from the radius `hypot(re, im)` alone, so the grid is
/// rotation invariant by construction.
pub fn q_grid(povm: &PovmMatrix, mesh: &Mesh) -> Result<QGrid> {
    mesh.validate()?;
    let axis = mesh.axis();
    let p = axis.len();
    let rows: Vec<Vec<QValues>> = (0..p)
        .into_par_iter()
        .map(|i| {
            (0..p)
                .map(|k| {
                    let r = axis[i].hypot(axis[k]);
                    q_function(povm, r * r)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values: [DMatrix<f64>; OUTCOMES] = std::array::from_fn(|_| DMatrix::zeros(p, p));
    let mut max_tail: f64 = 0.0;
    for (i, row) in rows.iter().enumerate() {
        for (k, q) in row.iter().enumerate() {
            for n in 0..OUTCOMES {
                values[n][(i, k)] = q.values[n];
            }
            max_tail = max_tail.max(q.truncated_tail);
        }
    }
    Ok(QGrid {
        mesh: *mesh,
        axis,
        values,
        overlay: Vec::new(),
        max_truncated_tail: max_tail,
    })
}

/// Places measured outcome frequencies (`5 x J`) on the real axis.
pub fn overlay_points(means: &[f64], frequencies: &DMatrix<f64>) -> Vec<OverlayPoint> {
    means
        .iter()
        .enumerate()
        .map(|(j, &mean)| OverlayPoint {
            j,
            mean_photons: mean,
            re: mean.sqrt(),
            q: std::array::from_fn(|n| FRAC_1_PI * frequencies[(n, j)]),
        })
        .collect()
}
