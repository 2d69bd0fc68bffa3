//! Generalized spatial smoothing of an FCM over all translated sub-coarrays.
//!
//! The `(u, v)` sub-coarray FCM is the principal submatrix of the full FCM on
//! sensors `u .. u+K_A` of the first array and `v .. v+K_B` of the second.
//! Summing all of them restores the rank lost to coherent groups.

use num_complex::Complex64;

use crate::cumulants::{source_kurtosis, Fcm, FcmGeometry};
use crate::error::{Error, Result};
use crate::geometry::{SparseArray, SubarraySpec};
use crate::linalg::{hermitize, kron, relative_distance, CMatrix};
use crate::simulation::SignalGroup;

/// Flattened Kronecker indices of sensors `u..u+K_A` × `v..v+K_B`, ascending.
pub fn submatrix_indices(
    u: usize,
    v: usize,
    k_a: usize,
    k_b: usize,
    l_a: usize,
    l_b: usize,
) -> Result<Vec<usize>> {
    if k_a == 0 || k_b == 0 || u + k_a > l_a || v + k_b > l_b {
        return Err(Error::Range(format!(
            "sub-coarray ({u}, {v}) of size {k_a}x{k_b} exceeds arrays of {l_a} and {l_b} sensors"
        )));
    }
    Ok((u..u + k_a)
        .flat_map(|i| (v..v + k_b).map(move |j| i * l_b + j))
        .collect())
}

/// Sums the principal submatrices of a full-array FCM over every `(u, v)`.
///
/// The sum is not normalized; divide by `smoothing_terms` to compare across
/// subarray sizes.
pub fn smooth_fcm(fcm: &Fcm, k_a: usize, k_b: usize) -> Result<Fcm> {
    let geo = &fcm.geometry;
    let (l_a, l_b) = (geo.pair.first.num_sensors, geo.pair.second.num_sensors);
    if geo.sub_first != geo.pair.first.whole() || geo.sub_second != geo.pair.second.whole() {
        return Err(Error::Dimension(
            "smoothing needs the FCM of the full arrays".into(),
        ));
    }
    if fcm.dim() != l_a * l_b {
        return Err(Error::Dimension(format!(
            "FCM is {0}x{0}, expected {1}x{1}",
            fcm.dim(),
            l_a * l_b
        )));
    }
    if k_a == 0 || k_a > l_a || k_b == 0 || k_b > l_b {
        return Err(Error::Dimension(format!(
            "subarray sizes ({k_a}, {k_b}) must lie in 1..={l_a} and 1..={l_b}"
        )));
    }
    let n = k_a * k_b;
    let mut out = CMatrix::zeros(n, n);
    let mut terms = 0;
    for u in 0..=l_a - k_a {
        for v in 0..=l_b - k_b {
            let idx = submatrix_indices(u, v, k_a, k_b, l_a, l_b)?;
            for (r, &i) in idx.iter().enumerate() {
                for (c, &j) in idx.iter().enumerate() {
                    out[(r, c)] += fcm.matrix[(i, j)];
                }
            }
            terms += 1;
        }
    }
    Ok(Fcm {
        matrix: out,
        geometry: FcmGeometry {
            pair: geo.pair.clone(),
            sub_first: SubarraySpec::new(0, k_a),
            sub_second: SubarraySpec::new(0, k_b),
            smoothing_terms: terms,
        },
    })
}

/// Shape parameters of the smoothing for one coarray pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmoothingShape {
    pub spacing_first: usize,
    pub spacing_second: usize,
    pub sensors_first: usize,
    pub sensors_second: usize,
    pub size_first: usize,
    pub size_second: usize,
}

impl SmoothingShape {
    pub fn new(first: &SparseArray, size_first: usize, second: &SparseArray, size_second: usize) -> Self {
        SmoothingShape {
            spacing_first: first.spacing,
            spacing_second: second.spacing,
            sensors_first: first.num_sensors,
            sensors_second: second.num_sensors,
            size_first,
            size_second,
        }
    }

    fn shifts(&self) -> Result<(usize, usize)> {
        if self.size_first == 0
            || self.size_second == 0
            || self.size_first > self.sensors_first
            || self.size_second > self.sensors_second
        {
            return Err(Error::Dimension(format!(
                "subarray sizes ({}, {}) do not fit {} and {} sensors",
                self.size_first, self.size_second, self.sensors_first, self.sensors_second
            )));
        }
        Ok((
            self.sensors_first - self.size_first + 1,
            self.sensors_second - self.size_second + 1,
        ))
    }
}

/// Smoothed amplitude FCM as the double sum of rotated `Ψ(s_g)`:
/// `Σ_u Σ_v Ω^{u,-v} Ψ Ω^{-u,v}` with `Ω^{u,-v} = Ω_A^u ⊗ Ω_B^{-v}`.
pub fn smoothed_amplitude_fcm_by_rotation(group: &SignalGroup, shape: SmoothingShape) -> Result<CMatrix> {
    let (nu, nv) = shape.shifts()?;
    let q = group.len();
    let psi = crate::cumulants::amplitude_fcm(group);
    let mut out = CMatrix::zeros(q * q, q * q);
    for u in 0..nu {
        for v in 0..nv {
            let diag: Vec<Complex64> = (0..q * q)
                .map(|k| {
                    let (p, r) = (k / q, k % q);
                    let ph = (shape.spacing_first * u) as f64 * group.doas[p].radians()
                        - (shape.spacing_second * v) as f64 * group.doas[r].radians();
                    Complex64::from_polar(1.0, ph)
                })
                .collect();
            for i in 0..q * q {
                for j in 0..q * q {
                    out[(i, j)] += diag[i] * psi[(i, j)] * diag[j].conj();
                }
            }
        }
    }
    Ok(out)
}

/// Smoothed amplitude FCM via its factorization `Ψ(σ) · W W^H`,
/// `W = W_A ⊗ W_B*`, `W_A = diag(η) V_A` with Vandermonde
/// `V_A[q, u] = exp(j M u θ_q)`.
pub fn smoothed_amplitude_fcm_by_factor(group: &SignalGroup, shape: SmoothingShape) -> Result<CMatrix> {
    let w = smoothing_factor(group, shape)?;
    Ok((&w * w.adjoint()).scale(source_kurtosis(group.source)))
}

/// The factor `W = W_A ⊗ W_B*`, `Q² × (L_A-K_A+1)(L_B-K_B+1)`.
pub fn smoothing_factor(group: &SignalGroup, shape: SmoothingShape) -> Result<CMatrix> {
    let (nu, nv) = shape.shifts()?;
    let vandermonde_scaled = |spacing: usize, shifts: usize| {
        CMatrix::from_fn(group.len(), shifts, |q, u| {
            group.coeffs[q] * Complex64::from_polar(1.0, (spacing * u) as f64 * group.doas[q].radians())
        })
    };
    let wa = vandermonde_scaled(shape.spacing_first, nu);
    let wb = vandermonde_scaled(shape.spacing_second, nv);
    Ok(kron(&wa, &wb.conjugate()))
}

/// Relative tolerance for agreement of the two smoothed-amplitude routes.
pub const ROUTE_TOL: f64 = 1e-10;

/// Smoothed amplitude FCM `Ψ̄(s_g)`, computed by both routes and cross-checked.
pub fn smoothed_amplitude_fcm(group: &SignalGroup, shape: SmoothingShape) -> Result<CMatrix> {
    let rotated = smoothed_amplitude_fcm_by_rotation(group, shape)?;
    let factored = smoothed_amplitude_fcm_by_factor(group, shape)?;
    let d = relative_distance(&rotated, &factored);
    if d > ROUTE_TOL {
        return Err(Error::Numerical(format!(
            "smoothed amplitude FCM routes differ by {d:e}"
        )));
    }
    Ok(hermitize(&rotated))
}

/// Subarray sizes for a set of arrays: each size is at least the largest
/// partner spacing, while leaving at least `max_group` overlapping subarrays.
/// Returns `None` for an array where both cannot hold.
pub fn default_subarray_sizes(arrays: &[SparseArray], max_group: usize) -> Vec<Option<usize>> {
    arrays
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let partner = arrays
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| b.spacing)
                .max()
                .unwrap_or(1);
            let upper = (a.num_sensors + 1).checked_sub(max_group.max(1))?;
            let k = partner.max(1);
            (k <= upper).then_some(k)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumulants::{group_manifold, theoretical_full_fcm, RANK_TOL};
    use crate::geometry::{CoarrayPair, NormalizedDoa};
    use crate::linalg::{max_abs, numerical_rank};
    use crate::simulation::SourceKind;
    use std::f64::consts::PI;

    fn pair(m: usize, la: usize, n: usize, lb: usize) -> CoarrayPair {
        CoarrayPair::new(
            SparseArray::new("A", m, la).unwrap(),
            SparseArray::new("B", n, lb).unwrap(),
        )
        .unwrap()
    }

    fn coherent(doas: &[f64], phases: &[f64]) -> SignalGroup {
        SignalGroup::new(
            doas.iter().map(|&d| NormalizedDoa::new(d)).collect(),
            phases.iter().map(|&p| Complex64::from_polar(1.0, p)).collect(),
            SourceKind::qpsk(1.0),
        )
        .unwrap()
    }

    #[test]
    fn origin_indices() {
        let idx = submatrix_indices(0, 0, 2, 3, 4, 5).unwrap();
        let want: Vec<usize> = (0..2).flat_map(|i| (0..3).map(move |j| i * 5 + j)).collect();
        assert_eq!(idx, want);
    }

    #[test]
    fn shifted_indices() {
        assert_eq!(submatrix_indices(1, 1, 2, 2, 3, 3).unwrap(), vec![4, 5, 7, 8]);
        let last = submatrix_indices(9 - 6, 10 - 7, 6, 7, 9, 10).unwrap();
        assert_eq!(*last.last().unwrap(), 8 * 10 + 9);
        assert!(submatrix_indices(4, 0, 6, 7, 9, 10).is_err());
    }

    #[test]
    fn small_geometry_enumeration() {
        // L_A = 2, L_B = 3, K_A = 1, K_B = 2.
        let cases = [((0, 0), vec![0, 1]), ((0, 1), vec![1, 2]), ((1, 0), vec![3, 4]), ((1, 1), vec![4, 5])];
        for ((u, v), want) in cases {
            assert_eq!(submatrix_indices(u, v, 1, 2, 2, 3).unwrap(), want);
        }
    }

    #[test]
    fn identity_smoothing() {
        let p = pair(3, 4, 2, 3);
        let g = coherent(&[0.2, -1.1], &[0.0, 1.0]);
        let fcm = theoretical_full_fcm(&[g], &p).unwrap();
        let s = smooth_fcm(&fcm, 4, 3).unwrap();
        assert_eq!(s.matrix, fcm.matrix);
        assert_eq!(s.geometry.smoothing_terms, 1);
    }

    #[test]
    fn simulation_one_dimensions() {
        let p = pair(6, 9, 5, 10);
        let g = SignalGroup::independent(NormalizedDoa::new(0.3), SourceKind::qpsk(1.0));
        let fcm = theoretical_full_fcm(&[g], &p).unwrap();
        assert_eq!(fcm.dim(), 90);
        let s = smooth_fcm(&fcm, 6, 7).unwrap();
        assert_eq!(s.dim(), 42);
        assert_eq!(s.geometry.smoothing_terms, 16);
        assert!(smooth_fcm(&fcm, 10, 7).is_err());
        assert!(smooth_fcm(&fcm, 0, 7).is_err());
    }

    #[test]
    fn smoothing_matches_brute_force_sum_of_sub_coarray_fcms() {
        let p = pair(3, 5, 4, 4);
        let groups = vec![
            coherent(&[0.2, -1.1, 2.0], &[0.0, 1.0, 2.5]),
            SignalGroup::independent(NormalizedDoa::new(0.9), SourceKind::qam4(2.0)),
        ];
        let fcm = theoretical_full_fcm(&groups, &p).unwrap();
        let s = smooth_fcm(&fcm, 3, 2).unwrap();
        let mut want = CMatrix::zeros(6, 6);
        for u in 0..3 {
            for v in 0..3 {
                want += crate::cumulants::theoretical_fcm(&groups, &p, SubarraySpec::new(u, 3), SubarraySpec::new(v, 2))
                    .unwrap()
                    .matrix;
            }
        }
        assert!(relative_distance(&s.matrix, &want) < 1e-12);
    }

    #[test]
    fn scalar_group_scales_by_term_count() {
        let g = SignalGroup::independent(NormalizedDoa::new(0.4), SourceKind::qpsk(1.0));
        let shape = SmoothingShape::new(
            &SparseArray::new("A", 6, 9).unwrap(),
            6,
            &SparseArray::new("B", 5, 10).unwrap(),
            7,
        );
        let m = smoothed_amplitude_fcm(&g, shape).unwrap();
        assert_eq!(m.shape(), (1, 1));
        assert!((m[(0, 0)] - Complex64::new(-16.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn case_one_full_rank() {
        let g = coherent(&[-0.9, 0.7], &[0.3, 2.2]);
        let shape = SmoothingShape::new(
            &SparseArray::new("A", 6, 9).unwrap(),
            6,
            &SparseArray::new("B", 5, 10).unwrap(),
            7,
        );
        let m = smoothed_amplitude_fcm(&g, shape).unwrap();
        assert_eq!(numerical_rank(&m, RANK_TOL), 4);
    }

    #[test]
    fn case_two_ambiguous_pair_routes_agree() {
        let t2 = 0.25;
        let g = coherent(&[t2 + 2.0 * PI / 6.0, t2], &[0.0, 0.9]);
        let shape = SmoothingShape::new(
            &SparseArray::new("A", 6, 9).unwrap(),
            6,
            &SparseArray::new("B", 5, 10).unwrap(),
            7,
        );
        let rot = smoothed_amplitude_fcm_by_rotation(&g, shape).unwrap();
        let fac = smoothed_amplitude_fcm_by_factor(&g, shape).unwrap();
        assert!(relative_distance(&rot, &fac) < ROUTE_TOL);
        // Rows of V_A coincide, so W_A has rank 1 and W has rank 2.
        assert_eq!(numerical_rank(&rot, RANK_TOL), 2);
    }

    #[test]
    fn equivalence_of_smoothing_paths() {
        let p = pair(6, 9, 5, 10);
        let groups = vec![
            coherent(&[-2.0, 0.4], &[0.1, 1.7]),
            coherent(&[1.1, 2.5, -0.6], &[0.0, 2.0, 4.0]),
            SignalGroup::independent(NormalizedDoa::new(-1.3), SourceKind::qam4(1.0)),
        ];
        let full = theoretical_full_fcm(&groups, &p).unwrap();
        let smoothed = smooth_fcm(&full, 6, 7).unwrap();
        let shape = SmoothingShape::new(&p.first, 6, &p.second, 7);
        let mut want = CMatrix::zeros(42, 42);
        for g in &groups {
            let k = group_manifold(g, &p.first, SubarraySpec::new(0, 6), &p.second, SubarraySpec::new(0, 7)).unwrap();
            want += &k * smoothed_amplitude_fcm(g, shape).unwrap() * k.adjoint();
        }
        assert!(relative_distance(&smoothed.matrix, &want) < 1e-10);
        assert!(max_abs(&(&smoothed.matrix - smoothed.matrix.adjoint())) < 1e-10 * max_abs(&smoothed.matrix));
    }

    #[test]
    fn rank_enhancement() {
        let p = pair(6, 9, 5, 10);
        let g = coherent(&[-2.0, 0.4], &[0.1, 1.7]);
        let full = theoretical_full_fcm(&[g], &p).unwrap();
        assert_eq!(numerical_rank(&full.matrix, RANK_TOL), 1);
        let s = smooth_fcm(&full, 6, 7).unwrap();
        assert_eq!(numerical_rank(&s.matrix, RANK_TOL), 4);
    }

    #[test]
    fn default_sizes_follow_partner_spacing() {
        let arrays = vec![
            SparseArray::new("A", 6, 9).unwrap(),
            SparseArray::new("B", 5, 10).unwrap(),
        ];
        assert_eq!(default_subarray_sizes(&arrays, 2), vec![Some(5), Some(6)]);
        assert_eq!(default_subarray_sizes(&arrays, 5), vec![Some(5), Some(6)]);
        assert_eq!(default_subarray_sizes(&arrays, 6), vec![None, None]);
    }
}
