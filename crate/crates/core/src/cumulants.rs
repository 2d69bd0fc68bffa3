//! Fourth-order cumulant matrices of a coprime array pair.
//!
//! With `z(t) = y_A(t) ⊗ y_B*(t)` the FCM is
//!
//! ```text
//! Φ = E{z z^H} - E{z} E{z}^H - E{y_A y_A^H} ⊗ E{y_B y_B^H}*
//! ```
//!
//! Rows and columns are indexed by sensor pairs `(i_A, i_B) ↦ i_A·L_B + i_B`.
//! For circular sources this is the fourth-order cumulant slice
//! `cum(y_A,i, y_B,j*, y_A,k*, y_B,l)`, so Gaussian noise drops out and
//! independent groups add.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{partial_steering_vector, CoarrayPair, SparseArray, SubarraySpec};
use crate::linalg::{hermitize, kron, kron_vec, CMatrix, CVector};
use crate::simulation::{Modulation, SignalGroup, SourceKind};

/// Snapshots per accumulation chunk. Fixed so the summation order never
/// depends on the thread pool.
const CHUNK: usize = 512;

/// Relative eigenvalue threshold used to count the rank of exact matrices.
pub const RANK_TOL: f64 = 1e-8;

/// Sample moments of a coprime pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub pair: CoarrayPair,
    /// `mean z z^H`, `(L_A L_B)²`.
    pub gamma4_z: CMatrix,
    /// `mean y_A y_A^H`.
    pub gamma2_a: CMatrix,
    /// `mean y_B y_B^H`.
    pub gamma2_b: CMatrix,
    /// `mean z`.
    pub mu2_z: CVector,
    pub sample_count: usize,
}

/// Sensor-pair geometry behind an FCM's rows and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FcmGeometry {
    pub pair: CoarrayPair,
    pub sub_first: SubarraySpec,
    pub sub_second: SubarraySpec,
    /// Number of sub-coarray FCMs summed into this matrix (1 when unsmoothed).
    pub smoothing_terms: usize,
}

impl FcmGeometry {
    pub fn full(pair: CoarrayPair) -> Self {
        let sub_first = pair.first.whole();
        let sub_second = pair.second.whole();
        FcmGeometry {
            pair,
            sub_first,
            sub_second,
            smoothing_terms: 1,
        }
    }

    pub fn dim(&self) -> usize {
        self.sub_first.size * self.sub_second.size
    }

    /// Composite steering vector `a_u(θ) ⊗ b_v*(θ)` for this geometry.
    pub fn steering(&self, theta: crate::geometry::NormalizedDoa) -> CVector {
        let a = partial_steering_vector(&self.pair.first, self.sub_first, theta)
            .expect("geometry subarrays are validated on construction");
        let b = partial_steering_vector(&self.pair.second, self.sub_second, theta)
            .expect("geometry subarrays are validated on construction");
        kron_vec(&a, &b.conjugate())
    }

    /// Cross-term `a_u(θ_p) ⊗ b_v*(θ_q)`.
    pub fn cross_steering(
        &self,
        theta_p: crate::geometry::NormalizedDoa,
        theta_q: crate::geometry::NormalizedDoa,
    ) -> CVector {
        let a = partial_steering_vector(&self.pair.first, self.sub_first, theta_p)
            .expect("geometry subarrays are validated on construction");
        let b = partial_steering_vector(&self.pair.second, self.sub_second, theta_q)
            .expect("geometry subarrays are validated on construction");
        kron_vec(&a, &b.conjugate())
    }
}

/// Fourth-order cumulant matrix with the geometry of its rows/columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Fcm {
    pub matrix: CMatrix,
    pub geometry: FcmGeometry,
}

impl Fcm {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

struct Partial {
    g4: CMatrix,
    g2a: CMatrix,
    g2b: CMatrix,
    mu: CVector,
}

/// Sample moments over all snapshots of both arrays.
///
/// `snap_a` is `L_A × T`, `snap_b` is `L_B × T`. Partial sums are formed per
/// fixed-size chunk (in parallel) and combined in chunk order.
pub fn empirical_moments(pair: &CoarrayPair, snap_a: &CMatrix, snap_b: &CMatrix) -> Result<MomentSet> {
    let (la, t) = snap_a.shape();
    let (lb, tb) = snap_b.shape();
    if t != tb {
        return Err(Error::Dimension(format!(
            "snapshot counts differ: {t} on {} vs {tb} on {}",
            pair.first.label, pair.second.label
        )));
    }
    if t == 0 {
        return Err(Error::Dimension("at least one snapshot is required".into()));
    }
    if la != pair.first.num_sensors || lb != pair.second.num_sensors {
        return Err(Error::Dimension(format!(
            "snapshot rows ({la}, {lb}) do not match sensor counts ({}, {})",
            pair.first.num_sensors, pair.second.num_sensors
        )));
    }
    let n = la * lb;
    let chunks: Vec<(usize, usize)> = (0..t)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(t)))
        .collect();

    let partials: Vec<Partial> = chunks
        .par_iter()
        .map(|&(s, e)| {
            let len = e - s;
            let ya = snap_a.columns(s, len);
            let yb = snap_b.columns(s, len);
            // Rows of `zt` are z(t)^T, so zt^T conj(zt) = Σ z z^H.
            let zt = CMatrix::from_fn(len, n, |k, idx| ya[(idx / lb, k)] * yb[(idx % lb, k)].conj());
            let g4 = zt.tr_mul(&zt.conjugate());
            let g2a = ya * ya.adjoint();
            let g2b = yb * yb.adjoint();
            let mu = CVector::from_fn(n, |idx, _| zt.column(idx).sum());
            Partial { g4, g2a, g2b, mu }
        })
        .collect();

    let mut g4 = CMatrix::zeros(n, n);
    let mut g2a = CMatrix::zeros(la, la);
    let mut g2b = CMatrix::zeros(lb, lb);
    let mut mu = CVector::zeros(n);
    for p in partials {
        g4 += p.g4;
        g2a += p.g2a;
        g2b += p.g2b;
        mu += p.mu;
    }
    let scale = 1.0 / t as f64;
    Ok(MomentSet {
        pair: pair.clone(),
        gamma4_z: hermitize(&g4.scale(scale)),
        gamma2_a: hermitize(&g2a.scale(scale)),
        gamma2_b: hermitize(&g2b.scale(scale)),
        mu2_z: mu.scale(scale),
        sample_count: t,
    })
}

/// `Φ̂ = Γ̂_4(z) - μ̂ μ̂^H - Γ̂_2(y_A) ⊗ Γ̂_2(y_B)*`, Hermitian-symmetrized.
pub fn estimate_fcm(m: &MomentSet) -> Fcm {
    let outer = &m.mu2_z * m.mu2_z.adjoint();
    let sep = kron(&m.gamma2_a, &m.gamma2_b.conjugate());
    let phi = &m.gamma4_z - outer - sep;
    Fcm {
        matrix: hermitize(&phi),
        geometry: FcmGeometry::full(m.pair.clone()),
    }
}

/// Fourth-order cumulant `E|σ|⁴ - 2(E|σ|²)²` of a source.
pub fn source_kurtosis(kind: SourceKind) -> f64 {
    match kind.modulation {
        // Constant modulus: E|σ|⁴ = p².
        Modulation::Qpsk | Modulation::Qam4 => -kind.power * kind.power,
        Modulation::Gaussian => 0.0,
    }
}

/// Coefficient outer vector `η ⊗ η*`, index `p·Q + q`.
pub fn coefficient_kron(group: &SignalGroup) -> CVector {
    let eta = CVector::from_column_slice(&group.coeffs);
    kron_vec(&eta, &eta.conjugate())
}

/// Amplitude FCM of a group, `(η ⊗ η*) Ψ(σ) (η ⊗ η*)^H`.
pub fn amplitude_fcm(group: &SignalGroup) -> CMatrix {
    let e = coefficient_kron(group);
    (&e * e.adjoint()).scale(source_kurtosis(group.source))
}

/// `A_u(g) ⊗ B_v*(g)`: column `p·Q + q` is `a_u(θ_p) ⊗ b_v*(θ_q)`.
pub fn group_manifold(
    group: &SignalGroup,
    first: &SparseArray,
    sub_first: SubarraySpec,
    second: &SparseArray,
    sub_second: SubarraySpec,
) -> Result<CMatrix> {
    let q = group.len();
    let mut a = CMatrix::zeros(sub_first.size, q);
    let mut b = CMatrix::zeros(sub_second.size, q);
    for (k, doa) in group.doas.iter().enumerate() {
        a.set_column(k, &partial_steering_vector(first, sub_first, *doa)?);
        b.set_column(k, &partial_steering_vector(second, sub_second, *doa)?.conjugate());
    }
    Ok(kron(&a, &b))
}

/// Exact FCM of the `(u, v)` sub-coarray for the given signal groups.
pub fn theoretical_fcm(
    groups: &[SignalGroup],
    pair: &CoarrayPair,
    sub_first: SubarraySpec,
    sub_second: SubarraySpec,
) -> Result<Fcm> {
    sub_first.check(&pair.first)?;
    sub_second.check(&pair.second)?;
    let n = sub_first.size * sub_second.size;
    let mut phi = CMatrix::zeros(n, n);
    for g in groups {
        let k = group_manifold(g, &pair.first, sub_first, &pair.second, sub_second)?;
        phi += &k * amplitude_fcm(g) * k.adjoint();
    }
    Ok(Fcm {
        matrix: hermitize(&phi),
        geometry: FcmGeometry {
            pair: pair.clone(),
            sub_first,
            sub_second,
            smoothing_terms: 1,
        },
    })
}

/// Exact FCM of the full arrays.
pub fn theoretical_full_fcm(groups: &[SignalGroup], pair: &CoarrayPair) -> Result<Fcm> {
    theoretical_fcm(groups, pair, pair.first.whole(), pair.second.whole())
}

/// Sample kurtosis `mean|x|⁴ - 2 (mean|x|²)²` of a scalar stream.
pub fn sample_kurtosis(x: &[Complex64]) -> f64 {
    let n = x.len() as f64;
    let m2 = x.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
    let m4 = x.iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>() / n;
    m4 - 2.0 * m2 * m2
}
