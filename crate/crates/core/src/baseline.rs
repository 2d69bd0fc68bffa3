//! Second-order coarray MUSIC on the virtual ULA of a coprime pair.
//!
//! Cross-correlations `E{y_A(i_A) y_B*(i_B)}` are rearranged by lag
//! `M·i_A - N·i_B`; for independent sources they are a sum of sinusoids in
//! the lag. Coherent sources add cross terms that are not, which is why this
//! estimator fails on them.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};
use crate::spectrum::{subspace_of_matrix, SpectrumGrid, SubspaceModel};

/// Lag correlations for lags `-max_lag ..= max_lag`; `None` where no sensor
/// pair produces the lag.
#[derive(Debug, Clone, PartialEq)]
pub struct LagCorrelations {
    pub max_lag: i64,
    pub values: Vec<Option<Complex64>>,
}

impl LagCorrelations {
    pub fn get(&self, lag: i64) -> Option<Complex64> {
        if lag.abs() > self.max_lag {
            return None;
        }
        self.values[(lag + self.max_lag) as usize]
    }

    pub fn missing(&self) -> Vec<i64> {
        (-self.max_lag..=self.max_lag)
            .filter(|&l| self.get(l).is_none())
            .collect()
    }
}

/// Averages `y_A(i_A, t) y_B*(i_B, t)` over time and over every sensor pair
/// with `M·i_A - N·i_B = lag`, for lags within `±M·N`. Each pair also
/// contributes its conjugate at the mirrored lag, as `y_B y_A*` would.
pub fn coarray_correlations(snap_a: &CMatrix, snap_b: &CMatrix, m: usize, n: usize) -> Result<LagCorrelations> {
    if crate::geometry::gcd(m, n) != 1 {
        return Err(Error::Config(format!("spacings {m} and {n} are not coprime")));
    }
    let t = snap_a.ncols();
    if t != snap_b.ncols() || t == 0 {
        return Err(Error::Dimension(format!(
            "snapshot counts differ or are zero: {t} vs {}",
            snap_b.ncols()
        )));
    }
    let cross = (snap_a * snap_b.adjoint()).unscale(t as f64);
    let max_lag = (m * n) as i64;
    let width = (2 * max_lag + 1) as usize;
    let mut sums = vec![Complex64::new(0.0, 0.0); width];
    let mut counts = vec![0usize; width];
    for ia in 0..cross.nrows() {
        for ib in 0..cross.ncols() {
            let lag = (m * ia) as i64 - (n * ib) as i64;
            if lag.abs() <= max_lag {
                let k = (lag + max_lag) as usize;
                sums[k] += cross[(ia, ib)];
                counts[k] += 1;
                let k = (max_lag - lag) as usize;
                sums[k] += cross[(ia, ib)].conj();
                counts[k] += 1;
            }
        }
    }
    let values = sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| (c > 0).then(|| s / c as f64))
        .collect();
    Ok(LagCorrelations { max_lag, values })
}

/// Spatially smoothed virtual-ULA correlation matrix.
///
/// Windows of length `max_lag + 1` slide over the contiguous lag vector;
/// the smoothed matrix is the average of their outer products.
pub fn virtual_ula_covariance(lags: &LagCorrelations) -> Result<CMatrix> {
    let missing = lags.missing();
    if !missing.is_empty() {
        return Err(Error::MissingLags(missing));
    }
    let w = (lags.max_lag + 1) as usize;
    let mut r = CMatrix::zeros(w, w);
    for i in 0..w {
        let x = CVector::from_fn(w, |k, _| {
            lags.get(k as i64 - i as i64)
                .expect("contiguous lags checked above")
        });
        r += &x * x.adjoint();
    }
    Ok(r.unscale(w as f64))
}

pub fn virtual_ula_subspace(lags: &LagCorrelations, num_signals: usize) -> Result<SubspaceModel> {
    subspace_of_matrix(&virtual_ula_covariance(lags)?, Some(num_signals))
}

/// MUSIC null-spectrum of the virtual ULA, steering `e^{jkθ}` normalized to
/// unit length.
pub fn virtual_ula_null_spectrum(model: &SubspaceModel, grid: &[f64]) -> SpectrumGrid {
    let w = model.dim();
    let norm = 1.0 / (w as f64).sqrt();
    let values = grid
        .par_iter()
        .map(|&th| {
            let v = CVector::from_fn(w, |k, _| Complex64::from_polar(norm, k as f64 * th));
            model.null_value(&v)
        })
        .collect();
    SpectrumGrid::single(grid.to_vec(), "baseline", values)
}

pub fn virtual_ula_music(lags: &LagCorrelations, num_signals: usize, grid: &[f64]) -> Result<SpectrumGrid> {
    let model = virtual_ula_subspace(lags, num_signals)?;
    Ok(virtual_ula_null_spectrum(&model, grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{NormalizedDoa, SparseArray};
    use crate::simulation::{synthesize, Scenario, SignalGroup, SourceKind};
    use crate::spectrum::{find_peaks, uniform_grid};
    use std::f64::consts::PI;

    fn arrays() -> Vec<SparseArray> {
        vec![
            SparseArray::new("A", 6, 9).unwrap(),
            SparseArray::new("B", 5, 10).unwrap(),
        ]
    }

    #[test]
    fn simulation_geometry_has_no_lag_holes() {
        let a = CMatrix::from_element(9, 1, Complex64::new(1.0, 0.0));
        let b = CMatrix::from_element(10, 1, Complex64::new(1.0, 0.0));
        let lags = coarray_correlations(&a, &b, 6, 5).unwrap();
        assert!(lags.missing().is_empty());
        assert_eq!(lags.values.len(), 61);
    }

    #[test]
    fn short_arrays_leave_holes() {
        let a = CMatrix::from_element(2, 1, Complex64::new(1.0, 0.0));
        let b = CMatrix::from_element(2, 1, Complex64::new(1.0, 0.0));
        let lags = coarray_correlations(&a, &b, 3, 2).unwrap();
        assert!(!lags.missing().is_empty());
        assert!(matches!(
            virtual_ula_music(&lags, 1, &uniform_grid(16)),
            Err(Error::MissingLags(_))
        ));
    }

    #[test]
    fn single_source_lags_are_a_sinusoid() {
        let theta = 0.37;
        let sc = Scenario::new(
            arrays(),
            vec![SignalGroup::independent(NormalizedDoa::new(theta), SourceKind::qpsk(1.0))],
            f64::INFINITY,
            50,
            4,
        );
        let s = synthesize(&sc).unwrap();
        let lags = coarray_correlations(s.get("A").unwrap(), s.get("B").unwrap(), 6, 5).unwrap();
        for l in -30..=30 {
            let want = Complex64::from_polar(1.0, l as f64 * theta);
            assert!((lags.get(l).unwrap() - want).norm() < 1e-12);
        }
        let zero = lags.get(0).unwrap();
        assert!(zero.im.abs() < 1e-12);
    }

    #[test]
    fn coherent_pair_breaks_the_sinusoid_model() {
        let (t1, t2) = (-0.9, 0.6);
        let g = SignalGroup::new(
            vec![NormalizedDoa::new(t1), NormalizedDoa::new(t2)],
            vec![Complex64::new(1.0, 0.0), Complex64::from_polar(1.0, 0.8)],
            SourceKind::qpsk(1.0),
        )
        .unwrap();
        let sc = Scenario::new(arrays(), vec![g], f64::INFINITY, 50, 4);
        let s = synthesize(&sc).unwrap();
        let lags = coarray_correlations(s.get("A").unwrap(), s.get("B").unwrap(), 6, 5).unwrap();
        // Best two-sinusoid fit at the true directions still leaves a residual.
        let rows: Vec<i64> = (-30..=30).collect();
        let design = CMatrix::from_fn(rows.len(), 2, |k, c| {
            let th = if c == 0 { t1 } else { t2 };
            Complex64::from_polar(1.0, rows[k] as f64 * th)
        });
        let y = CVector::from_iterator(rows.len(), rows.iter().map(|&l| lags.get(l).unwrap()));
        let coef = (design.adjoint() * &design).try_inverse().unwrap() * design.adjoint() * &y;
        let resid = (&y - &design * coef).norm() / y.norm();
        assert!(resid > 0.1, "residual {resid}");
    }

    #[test]
    fn independent_sources_resolved() {
        let doas = [-0.62 * PI, -0.1 * PI, 0.33 * PI];
        let sc = Scenario::new(
            arrays(),
            doas.iter()
                .map(|&d| SignalGroup::independent(NormalizedDoa::new(d), SourceKind::qpsk(1.0)))
                .collect(),
            f64::INFINITY,
            20_000,
            9,
        );
        let s = synthesize(&sc).unwrap();
        let lags = coarray_correlations(s.get("A").unwrap(), s.get("B").unwrap(), 6, 5).unwrap();
        let grid = uniform_grid(1024);
        let spec = virtual_ula_music(&lags, 3, &grid).unwrap();
        let peaks = find_peaks(&spec, Some(3));
        assert_eq!(peaks.len(), 3);
        for (p, d) in peaks.iter().zip(doas) {
            assert!(p.theta.distance(NormalizedDoa::new(d)) <= 2.0 * PI / 1024.0);
        }
    }

    #[test]
    fn noise_only_has_no_signal_peaks() {
        let grid = uniform_grid(256);
        let lags = LagCorrelations {
            max_lag: 30,
            values: (0..61).map(|k| Some(if k == 30 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) })).collect(),
        };
        let spec = virtual_ula_music(&lags, 0, &grid).unwrap();
        assert!(find_peaks(&spec, None).is_empty());
    }
}
