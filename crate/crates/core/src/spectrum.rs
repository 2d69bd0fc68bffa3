//! 4-MUSIC: noise subspace of an FCM, null-spectrum over a DOA grid,
//! three-coarray combination and peak picking.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cumulants::{Fcm, FcmGeometry};
use crate::error::{Error, Result};
use crate::geometry::NormalizedDoa;
use crate::linalg::{hermitian_eigen, CMatrix, CVector};

/// Lower clamp on null-spectrum values before taking the reciprocal.
pub const NULL_FLOOR: f64 = 1e-12;

/// Default number of grid points over `[-π, π)`.
pub const DEFAULT_GRID_POINTS: usize = 4096;

/// Uniform grid `θ_k = -π + 2πk/n`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| -PI + 2.0 * PI * k as f64 / n as f64).collect()
}

/// Eigen-split of a Hermitian matrix into signal and noise subspaces.
#[derive(Debug, Clone)]
pub struct SubspaceModel {
    /// Eigenvalues ordered by decreasing magnitude.
    pub eigenvalues: Vec<f64>,
    pub signal_dim: usize,
    /// Orthonormal basis of the noise subspace, one column per eigenvector.
    pub noise_basis: CMatrix,
    /// `Π⊥ = U_n U_n^H`.
    pub projector_noise: CMatrix,
}

impl SubspaceModel {
    pub fn dim(&self) -> usize {
        self.projector_noise.nrows()
    }

    /// `‖Π⊥ v‖²`.
    pub fn null_value(&self, v: &CVector) -> f64 {
        self.noise_basis.ad_mul(v).norm_squared()
    }
}

/// Largest gap between consecutive log-magnitude eigenvalues within the top
/// half of the spectrum.
pub fn gap_signal_dim(eigenvalues: &[f64]) -> usize {
    let top = eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if top == 0.0 || eigenvalues.len() < 2 {
        return 0;
    }
    let floor = top * 1e-300_f64.max(f64::MIN_POSITIVE);
    let logs: Vec<f64> = eigenvalues.iter().map(|v| v.abs().max(floor).ln()).collect();
    let half = (eigenvalues.len() / 2).max(1);
    let mut best = (0, f64::NEG_INFINITY);
    for k in 1..=half.min(logs.len() - 1) {
        let gap = logs[k - 1] - logs[k];
        if gap > best.1 {
            best = (k, gap);
        }
    }
    best.0
}

/// Eigendecomposes `matrix`, keeping the top `signal_dim` eigenvectors as the
/// signal subspace (gap heuristic when `None`).
pub fn subspace_of_matrix(matrix: &CMatrix, signal_dim: Option<usize>) -> Result<SubspaceModel> {
    let n = matrix.nrows();
    if !matrix.is_square() {
        return Err(Error::Dimension("subspace needs a square matrix".into()));
    }
    if let Some(d) = signal_dim {
        if d >= n {
            return Err(Error::Dimension(format!(
                "signal dimension {d} leaves no noise subspace in a {n}x{n} matrix"
            )));
        }
    }
    let eig = hermitian_eigen(matrix);
    let signal_dim = signal_dim.unwrap_or_else(|| gap_signal_dim(&eig.values));
    let noise_basis = eig.vectors.columns(signal_dim, n - signal_dim).into_owned();
    let projector_noise = &noise_basis * noise_basis.adjoint();
    Ok(SubspaceModel {
        eigenvalues: eig.values,
        signal_dim,
        noise_basis,
        projector_noise,
    })
}

pub fn subspace(fcm: &Fcm, signal_dim: Option<usize>) -> Result<SubspaceModel> {
    subspace_of_matrix(&fcm.matrix, signal_dim)
}

/// One null-spectrum curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullCurve {
    pub label: String,
    pub values: Vec<f64>,
}

/// Null-spectra sampled on a common grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumGrid {
    pub thetas: Vec<f64>,
    pub curves: Vec<NullCurve>,
    /// Pointwise sum of `curves`, present after combination.
    pub combined: Option<Vec<f64>>,
}

impl SpectrumGrid {
    pub fn single(thetas: Vec<f64>, label: impl Into<String>, values: Vec<f64>) -> Self {
        SpectrumGrid {
            thetas,
            curves: vec![NullCurve {
                label: label.into(),
                values,
            }],
            combined: None,
        }
    }

    /// The curve peaks are picked from: the combination if present, else the
    /// sum of all curves (the single curve in the common case).
    pub fn null_values(&self) -> Vec<f64> {
        if let Some(c) = &self.combined {
            return c.clone();
        }
        let mut out = vec![0.0; self.thetas.len()];
        for c in &self.curves {
            for (o, v) in out.iter_mut().zip(&c.values) {
                *o += v;
            }
        }
        out
    }

    pub fn pseudo_values(&self) -> Vec<f64> {
        self.null_values().into_iter().map(pseudo).collect()
    }

    pub fn curve(&self, label: &str) -> Option<&[f64]> {
        self.curves
            .iter()
            .find(|c| c.label == label)
            .map(|c| c.values.as_slice())
    }

    /// Writes `theta,h_ab,h_ac,h_bc,h_combined,pseudo_combined`; missing curves are empty fields.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "theta,h_ab,h_ac,h_bc,h_combined,pseudo_combined")?;
        let cols: Vec<Option<&[f64]>> = ["AB", "AC", "BC"].iter().map(|l| self.curve(l)).collect();
        let comb = self.null_values();
        for (k, th) in self.thetas.iter().enumerate() {
            write!(w, "{th}")?;
            for c in &cols {
                match c {
                    Some(v) => write!(w, ",{}", v[k])?,
                    None => write!(w, ",")?,
                }
            }
            writeln!(w, ",{},{}", comb[k], pseudo(comb[k]))?;
        }
        Ok(())
    }
}

/// Pseudo-spectrum value `1 / max(h, floor)`.
pub fn pseudo(h: f64) -> f64 {
    1.0 / h.max(NULL_FLOOR)
}

/// Evaluates `‖Π⊥ (a_0(θ) ⊗ b_0*(θ))‖²` on `grid`, with the composite steering
/// vector normalized to unit length so values lie in `[0, 1]`.
pub fn null_spectrum(model: &SubspaceModel, geometry: &FcmGeometry, grid: &[f64]) -> Result<SpectrumGrid> {
    if geometry.dim() != model.dim() {
        return Err(Error::Dimension(format!(
            "geometry has dimension {} but the subspace model has {}",
            geometry.dim(),
            model.dim()
        )));
    }
    let norm = 1.0 / (geometry.dim() as f64).sqrt();
    let values = grid
        .par_iter()
        .map(|&th| {
            let v = geometry.steering(NormalizedDoa::new(th)).scale(norm);
            model.null_value(&v)
        })
        .collect();
    Ok(SpectrumGrid::single(grid.to_vec(), geometry.pair.label(), values))
}

/// Pointwise sum of several single-pair spectra on the same grid.
pub fn combine_spectra(parts: &[&SpectrumGrid]) -> Result<SpectrumGrid> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Dimension("nothing to combine".into()))?;
    let thetas = first.thetas.clone();
    let mut curves = Vec::new();
    for p in parts {
        if p.thetas != thetas {
            return Err(Error::Dimension(format!(
                "spectrum grids differ ({} vs {} points)",
                p.thetas.len(),
                thetas.len()
            )));
        }
        curves.extend(p.curves.iter().cloned());
    }
    let mut combined = vec![0.0; thetas.len()];
    for c in &curves {
        for (o, v) in combined.iter_mut().zip(&c.values) {
            *o += v;
        }
    }
    Ok(SpectrumGrid {
        thetas,
        curves,
        combined: Some(combined),
    })
}

/// `h̄_ABC = h̄_AB + h̄_AC + h̄_BC`.
pub fn combined_null_spectrum(h_ab: &SpectrumGrid, h_ac: &SpectrumGrid, h_bc: &SpectrumGrid) -> Result<SpectrumGrid> {
    combine_spectra(&[h_ab, h_ac, h_bc])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoaEstimate {
    pub theta: NormalizedDoa,
    pub pseudo_height: f64,
    /// Whether the position was refined by parabolic interpolation.
    #[serde(skip)]
    pub refined: bool,
}

/// Smallest log-pseudo-spectrum rise over both neighbours that counts as a
/// peak; keeps rounding ripple on flat spectra out of the estimates.
pub const PEAK_MIN_RISE: f64 = 1e-9;

/// Local maxima of the pseudo-spectrum `1/h̄`.
///
/// A grid point is a peak when it strictly exceeds both neighbors; the grid
/// is periodic so the end points neighbor each other. Positions are refined
/// by a parabola through the log pseudo-spectrum at the peak and its two
/// neighbors. With `expected_count`, only the highest peaks are kept. The
/// result is sorted by direction.
pub fn find_peaks(spectrum: &SpectrumGrid, expected_count: Option<usize>) -> Vec<DoaEstimate> {
    let thetas = &spectrum.thetas;
    let n = thetas.len();
    if n < 3 {
        return Vec::new();
    }
    let logs: Vec<f64> = spectrum.pseudo_values().iter().map(|p| p.ln()).collect();
    let step = 2.0 * PI / n as f64;
    let mut peaks: Vec<DoaEstimate> = (0..n)
        .filter_map(|k| {
            let (l, c, r) = (logs[(k + n - 1) % n], logs[k], logs[(k + 1) % n]);
            if !(c > l + PEAK_MIN_RISE && c > r + PEAK_MIN_RISE) {
                return None;
            }
            let denom = l - 2.0 * c + r;
            let (offset, refined) = if denom < 0.0 {
                ((0.5 * (l - r) / denom).clamp(-0.5, 0.5), true)
            } else {
                (0.0, false)
            };
            let height = (c - 0.25 * (l - r) * offset).exp();
            Some(DoaEstimate {
                theta: NormalizedDoa::new(thetas[k] + offset * step),
                pseudo_height: height,
                refined,
            })
        })
        .collect();
    if let Some(count) = expected_count {
        peaks.sort_by(|a, b| b.pseudo_height.total_cmp(&a.pseudo_height));
        peaks.truncate(count);
    }
    peaks.sort_by(|a, b| a.theta.radians().total_cmp(&b.theta.radians()));
    peaks
}

/// Serializes estimates as a JSON list of `{theta, pseudo_height}`.
pub fn estimates_json(estimates: &[DoaEstimate]) -> String {
    serde_json::to_string_pretty(estimates).expect("estimates serialize")
}
