//! Coprime array geometry: sparse uniform arrays, steering vectors,
//! subarrays, direction ambiguity and grating-lobe overlap prediction.
//!
//! Directions are normalized DOAs `θ = π sin(ϑ)` for a unit spacing of half a
//! wavelength. Sensor `i` of an array with spacing multiple `M` sits at `M·i`
//! unit spacings and sees the phase `exp(j·M·i·θ)`.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CVector;

const TWO_PI: f64 = 2.0 * PI;

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let w = x - TWO_PI * ((x + PI) / TWO_PI).floor();
    if w >= PI {
        w - TWO_PI
    } else {
        w
    }
}

pub fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Normalized direction of arrival in radians, always inside `[-π, π)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(from = "f64", into = "f64")]
pub struct NormalizedDoa(f64);

impl NormalizedDoa {
    pub fn new(theta: f64) -> Self {
        NormalizedDoa(wrap_angle(theta))
    }

    pub fn from_pi_units(x: f64) -> Self {
        Self::new(x * PI)
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn pi_units(self) -> f64 {
        self.0 / PI
    }

    /// Physical arrival angle `arcsin(θ/π)` in radians.
    pub fn physical_angle(self) -> f64 {
        (self.0 / PI).asin()
    }

    /// Shortest signed angular distance to `other`.
    pub fn distance(self, other: NormalizedDoa) -> f64 {
        wrap_angle(self.0 - other.0).abs()
    }
}

impl From<f64> for NormalizedDoa {
    fn from(x: f64) -> Self {
        NormalizedDoa::new(x)
    }
}

impl From<NormalizedDoa> for f64 {
    fn from(d: NormalizedDoa) -> f64 {
        d.0
    }
}

impl fmt::Display for NormalizedDoa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}π", self.pi_units())
    }
}

/// Uniform sparse linear array with sensors at `spacing · i` unit spacings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseArray {
    pub label: String,
    pub spacing: usize,
    pub num_sensors: usize,
}

impl SparseArray {
    pub fn new(label: impl Into<String>, spacing: usize, num_sensors: usize) -> Result<Self> {
        let array = SparseArray {
            label: label.into(),
            spacing,
            num_sensors,
        };
        array.validate()?;
        Ok(array)
    }

    pub fn validate(&self) -> Result<()> {
        if self.spacing < 1 {
            return Err(Error::Config(format!(
                "array {}: spacing must be at least 1",
                self.label
            )));
        }
        if self.num_sensors < 2 {
            return Err(Error::Config(format!(
                "array {}: needs at least 2 sensors, got {}",
                self.label, self.num_sensors
            )));
        }
        Ok(())
    }

    /// Sensor positions in unit spacings.
    pub fn positions(&self) -> Vec<usize> {
        (0..self.num_sensors).map(|i| self.spacing * i).collect()
    }

    pub fn whole(&self) -> SubarraySpec {
        SubarraySpec {
            start: 0,
            size: self.num_sensors,
        }
    }

    /// Number of overlapping subarrays of the given size, `L - K + 1`.
    pub fn num_subarrays(&self, size: usize) -> usize {
        (self.num_sensors + 1).saturating_sub(size)
    }
}

/// Two sparse arrays with coprime spacings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoarrayPair {
    pub first: SparseArray,
    pub second: SparseArray,
}

impl CoarrayPair {
    pub fn new(first: SparseArray, second: SparseArray) -> Result<Self> {
        check_coprime(&first, &second)?;
        Ok(CoarrayPair { first, second })
    }

    pub fn label(&self) -> String {
        format!("{}{}", self.first.label, self.second.label)
    }
}

pub fn check_coprime(a: &SparseArray, b: &SparseArray) -> Result<()> {
    if gcd(a.spacing, b.spacing) != 1 {
        return Err(Error::Config(format!(
            "arrays {} and {} have non-coprime spacings {} and {}",
            a.label, b.label, a.spacing, b.spacing
        )));
    }
    Ok(())
}

/// Contiguous run of `size` sensors starting at sensor `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubarraySpec {
    pub start: usize,
    pub size: usize,
}

impl SubarraySpec {
    pub fn new(start: usize, size: usize) -> Self {
        SubarraySpec { start, size }
    }

    pub fn check(&self, array: &SparseArray) -> Result<()> {
        if self.size == 0 || self.start + self.size > array.num_sensors {
            return Err(Error::Range(format!(
                "subarray [{}, {}) does not fit array {} with {} sensors",
                self.start,
                self.start + self.size,
                array.label,
                array.num_sensors
            )));
        }
        Ok(())
    }
}

/// Full-array response `[exp(j·M·i·θ)]_{i < L}`.
pub fn steering_vector(array: &SparseArray, theta: NormalizedDoa) -> CVector {
    phase_ramp(array.spacing, 0, array.num_sensors, theta)
}

/// Response of sensors `start .. start + size` of `array`.
pub fn partial_steering_vector(
    array: &SparseArray,
    sub: SubarraySpec,
    theta: NormalizedDoa,
) -> Result<CVector> {
    sub.check(array)?;
    Ok(phase_ramp(array.spacing, sub.start, sub.size, theta))
}

fn phase_ramp(spacing: usize, start: usize, len: usize, theta: NormalizedDoa) -> CVector {
    let th = theta.radians();
    CVector::from_fn(len, |k, _| {
        // Integer position first so large indices keep full phase accuracy.
        let pos = (spacing * (start + k)) as f64;
        Complex64::from_polar(1.0, pos * th)
    })
}

/// All directions indistinguishable from `theta` on `array`, sorted ascending.
///
/// These are `θ + 2πm/M` for `m = 0 .. M-1`, wrapped into `[-π, π)`.
pub fn ambiguity_set(array: &SparseArray, theta: NormalizedDoa) -> Vec<NormalizedDoa> {
    let m = array.spacing as f64;
    let mut set: Vec<NormalizedDoa> = (0..array.spacing)
        .map(|k| NormalizedDoa::new(theta.radians() + TWO_PI * k as f64 / m))
        .collect();
    set.sort_by(|a, b| a.radians().total_cmp(&b.radians()));
    set
}

/// Grating-lobe overlap tolerance for a pair of subarrays:
/// half the narrower grating-lobe beamwidth, `min(π/(M·K_A), π/(N·K_B))`.
pub fn grating_lobe_tolerance(
    first: &SparseArray,
    first_size: usize,
    second: &SparseArray,
    second_size: usize,
) -> f64 {
    let wa = PI / (first.spacing * first_size) as f64;
    let wb = PI / (second.spacing * second_size) as f64;
    wa.min(wb)
}

/// A predicted spurious null caused by overlapping grating lobes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FalsePeak {
    /// Midpoint of the two overlapping lobe centers.
    pub direction: NormalizedDoa,
    /// Lobe index on the first array (`θ_p + 2πm/M`).
    pub lobe_first: usize,
    /// Lobe index on the second array (`θ_q + 2πn/N`).
    pub lobe_second: usize,
    /// Absolute angular offset between the two lobe centers.
    pub mismatch: f64,
}

/// Every nonzero grating-lobe pair `(m, n)` whose centers lie within `tol`.
///
/// Lobe indices run over `1 .. M-1` and `1 .. N-1`; wrapping the centers
/// into `[-π, π)` covers every integer choice that lands inside the
/// visible region.
pub fn false_peak_candidates(
    first: &SparseArray,
    second: &SparseArray,
    theta_p: NormalizedDoa,
    theta_q: NormalizedDoa,
    tol: f64,
) -> Result<Vec<FalsePeak>> {
    check_coprime(first, second)?;
    if theta_p.distance(theta_q) == 0.0 {
        return Err(Error::Config(
            "false-peak prediction needs two distinct directions".into(),
        ));
    }
    let mut out = Vec::new();
    for m in 1..first.spacing {
        let ca = theta_p.radians() + TWO_PI * m as f64 / first.spacing as f64;
        for n in 1..second.spacing {
            let cb = theta_q.radians() + TWO_PI * n as f64 / second.spacing as f64;
            let diff = wrap_angle(ca - cb);
            if diff.abs() <= tol {
                out.push(FalsePeak {
                    direction: NormalizedDoa::new(cb + 0.5 * diff),
                    lobe_first: m,
                    lobe_second: n,
                    mismatch: diff.abs(),
                });
            }
        }
    }
    out.sort_by(|a, b| a.mismatch.total_cmp(&b.mismatch));
    Ok(out)
}

/// Predicts the false peak produced by the cross term `a(θ_p) ⊗ b*(θ_q)`.
///
/// `tol` defaults to [`grating_lobe_tolerance`]. When several lobe pairs
/// qualify (only possible for subarrays shorter than the coprime partner's
/// spacing), the closest overlap is returned.
pub fn predict_false_peak(
    first: &SparseArray,
    first_size: usize,
    second: &SparseArray,
    second_size: usize,
    theta_p: NormalizedDoa,
    theta_q: NormalizedDoa,
    tol: Option<f64>,
) -> Result<Option<FalsePeak>> {
    let tol =
        tol.unwrap_or_else(|| grating_lobe_tolerance(first, first_size, second, second_size));
    Ok(false_peak_candidates(first, second, theta_p, theta_q, tol)?
        .into_iter()
        .next())
}
