//! Signal model: constant-modulus or Gaussian sources, coherent groups that
//! share one waveform, and noisy snapshots on several sparse arrays.
//!
//! Every random draw comes from a ChaCha stream derived from the scenario
//! seed and a fixed stream id, so results do not depend on evaluation order
//! or thread count.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{steering_vector, wrap_angle, NormalizedDoa, SparseArray};
use crate::linalg::{hermitian_eigen, CMatrix, CVector};

/// Stream id for drawing propagation-coefficient phases.
pub const STREAM_COEFFS: u64 = 0;
/// Stream id for drawing preset DOA layouts.
pub const STREAM_LAYOUT: u64 = 1;
const STREAM_SOURCE_BASE: u64 = 1 << 16;
const STREAM_NOISE_BASE: u64 = 2 << 16;

/// Independent random stream `stream` of the generator seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Qpsk,
    Qam4,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceKind {
    pub modulation: Modulation,
    pub power: f64,
}

impl SourceKind {
    pub fn qpsk(power: f64) -> Self {
        SourceKind {
            modulation: Modulation::Qpsk,
            power,
        }
    }

    pub fn qam4(power: f64) -> Self {
        SourceKind {
            modulation: Modulation::Qam4,
            power,
        }
    }

    pub fn gaussian(power: f64) -> Self {
        SourceKind {
            modulation: Modulation::Gaussian,
            power,
        }
    }
}

/// Draws `len` i.i.d. source samples.
///
/// QPSK picks one of `exp(j(π/4 + kπ/2))`, QAM4 picks independent `±1` in-phase
/// and quadrature levels; both are scaled to the requested power. Gaussian
/// samples are circular complex normal.
pub fn generate_source<R: Rng + ?Sized>(kind: SourceKind, len: usize, rng: &mut R) -> Vec<Complex64> {
    let amp = kind.power.sqrt();
    match kind.modulation {
        Modulation::Qpsk => (0..len)
            .map(|_| {
                let k = rng.random_range(0..4u32);
                Complex64::from_polar(amp, FRAC_PI_4 + FRAC_PI_2 * k as f64)
            })
            .collect(),
        Modulation::Qam4 => (0..len)
            .map(|_| {
                let i = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let q = if rng.random::<bool>() { 1.0 } else { -1.0 };
                Complex64::new(i, q) * (amp * FRAC_1_SQRT_2)
            })
            .collect(),
        Modulation::Gaussian => {
            let s = (kind.power / 2.0).sqrt();
            (0..len)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(re * s, im * s)
                })
                .collect()
        }
    }
}

/// Signals sharing one source waveform `σ(t)` along several paths.
///
/// Path `q` arrives from `doas[q]` with complex gain `coeffs[q]`; a group of one
/// path is an independent signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalGroup {
    pub doas: Vec<NormalizedDoa>,
    pub coeffs: Vec<Complex64>,
    pub source: SourceKind,
}

impl SignalGroup {
    pub fn new(doas: Vec<NormalizedDoa>, coeffs: Vec<Complex64>, source: SourceKind) -> Result<Self> {
        let g = SignalGroup {
            doas,
            coeffs,
            source,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn independent(doa: NormalizedDoa, source: SourceKind) -> Self {
        SignalGroup {
            doas: vec![doa],
            coeffs: vec![Complex64::new(1.0, 0.0)],
            source,
        }
    }

    pub fn len(&self) -> usize {
        self.doas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doas.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.doas.is_empty() {
            return Err(Error::Config("signal group has no paths".into()));
        }
        if self.doas.len() != self.coeffs.len() {
            return Err(Error::Config(format!(
                "signal group has {} directions but {} coefficients",
                self.doas.len(),
                self.coeffs.len()
            )));
        }
        if self.coeffs.iter().any(|c| c.norm() == 0.0 || !c.is_finite()) {
            return Err(Error::Config("propagation coefficients must be nonzero and finite".into()));
        }
        if !(self.source.power > 0.0 && self.source.power.is_finite()) {
            return Err(Error::Config("source power must be positive".into()));
        }
        for (i, a) in self.doas.iter().enumerate() {
            for b in &self.doas[i + 1..] {
                if a.distance(*b) == 0.0 {
                    return Err(Error::Config(format!("duplicate direction {a} in group")));
                }
            }
        }
        Ok(())
    }

    /// Combined group response on an array, `Σ_q η_q a(θ_q)`.
    pub fn array_response(&self, array: &SparseArray) -> CVector {
        let mut x = CVector::zeros(array.num_sensors);
        for (doa, eta) in self.doas.iter().zip(&self.coeffs) {
            x += steering_vector(array, *doa) * *eta;
        }
        x
    }

    /// Total received path power `p · Σ_q |η_q|²`.
    pub fn path_power(&self) -> f64 {
        self.source.power * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }
}

const CLASS_TOL: f64 = 1e-9;

/// True when no ambiguity class of the group cancels on `array`.
///
/// Directions equal modulo `2π/M` have identical steering vectors on an
/// `M`-sparse array; their coefficients must not sum to zero.
pub fn check_nonvanishing(group: &SignalGroup, array: &SparseArray) -> bool {
    let m = array.spacing as f64;
    let mut seen = vec![false; group.len()];
    for i in 0..group.len() {
        if seen[i] {
            continue;
        }
        let mut sum = Complex64::new(0.0, 0.0);
        for j in i..group.len() {
            let d = wrap_angle(m * (group.doas[j].radians() - group.doas[i].radians()));
            if d.abs() < CLASS_TOL {
                seen[j] = true;
                sum += group.coeffs[j];
            }
        }
        if sum.norm() <= CLASS_TOL {
            return false;
        }
    }
    true
}

/// Noise applied to one array.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum NoiseShape {
    #[default]
    White,
    /// Spatial covariance shape (Hermitian PSD, scaled so its mean diagonal is one).
    Correlated(CMatrix),
}

/// A complete simulation setup.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub arrays: Vec<SparseArray>,
    pub groups: Vec<SignalGroup>,
    /// Per-sensor SNR in dB; `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub num_snapshots: usize,
    pub seed: u64,
    /// Optional per-array noise shape, indexed like `arrays`; missing entries are white.
    pub noise_shapes: Vec<NoiseShape>,
}

impl Scenario {
    pub fn new(arrays: Vec<SparseArray>, groups: Vec<SignalGroup>, snr_db: f64, num_snapshots: usize, seed: u64) -> Self {
        Scenario {
            arrays,
            groups,
            snr_db,
            num_snapshots,
            seed,
            noise_shapes: Vec::new(),
        }
    }

    pub fn array(&self, label: &str) -> Option<&SparseArray> {
        self.arrays.iter().find(|a| a.label == label)
    }

    pub fn num_signals(&self) -> usize {
        self.groups.iter().map(SignalGroup::len).sum()
    }

    pub fn max_group_size(&self) -> usize {
        self.groups.iter().map(SignalGroup::len).max().unwrap_or(0)
    }

    pub fn all_doas(&self) -> Vec<NormalizedDoa> {
        self.groups.iter().flat_map(|g| g.doas.iter().copied()).collect()
    }

    /// Total signal power seen by one sensor.
    pub fn signal_power(&self) -> f64 {
        self.groups.iter().map(SignalGroup::path_power).sum()
    }

    /// Noise variance per sensor implied by the SNR, zero when noise-free.
    pub fn noise_variance(&self) -> f64 {
        if self.snr_db.is_infinite() && self.snr_db > 0.0 {
            0.0
        } else {
            self.signal_power() / 10f64.powf(self.snr_db / 10.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_snapshots == 0 {
            return Err(Error::Config("snapshot count must be positive".into()));
        }
        if self.snr_db.is_nan() {
            return Err(Error::Config("SNR must be a number".into()));
        }
        for a in &self.arrays {
            a.validate()?;
        }
        for (gi, g) in self.groups.iter().enumerate() {
            g.validate().map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("group {gi}: {msg}")),
                other => other,
            })?;
        }
        let doas = self.all_doas();
        for (i, a) in doas.iter().enumerate() {
            for b in &doas[i + 1..] {
                if a.distance(*b) == 0.0 {
                    return Err(Error::Config(format!("direction {a} appears more than once")));
                }
            }
        }
        for (gi, g) in self.groups.iter().enumerate() {
            for a in &self.arrays {
                if !check_nonvanishing(g, a) {
                    return Err(Error::VanishingGroup {
                        group: gi,
                        array: a.label.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Measurements of one array, `num_sensors × num_snapshots`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArraySnapshots {
    pub label: String,
    pub data: CMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub arrays: Vec<ArraySnapshots>,
    /// Source waveform `σ_g(t)` of every group, shared by all arrays.
    pub sources: Vec<Vec<Complex64>>,
    pub noise_variance: f64,
}

impl SnapshotSet {
    pub fn get(&self, label: &str) -> Option<&CMatrix> {
        self.arrays.iter().find(|a| a.label == label).map(|a| &a.data)
    }
}

/// Generates snapshots for every array of the scenario.
pub fn synthesize(scenario: &Scenario) -> Result<SnapshotSet> {
    scenario.validate()?;
    let t = scenario.num_snapshots;
    let sources: Vec<Vec<Complex64>> = scenario
        .groups
        .par_iter()
        .enumerate()
        .map(|(g, group)| {
            let mut rng = stream_rng(scenario.seed, STREAM_SOURCE_BASE + g as u64);
            generate_source(group.source, t, &mut rng)
        })
        .collect();
    let g_count = scenario.groups.len();
    let waveforms = CMatrix::from_fn(g_count, t, |g, k| sources[g][k]);
    let noise_var = scenario.noise_variance();

    let arrays = scenario
        .arrays
        .par_iter()
        .enumerate()
        .map(|(k, array)| {
            let mut mixing = CMatrix::zeros(array.num_sensors, g_count);
            for (g, group) in scenario.groups.iter().enumerate() {
                mixing.set_column(g, &group.array_response(array));
            }
            let mut data = if g_count == 0 {
                CMatrix::zeros(array.num_sensors, t)
            } else {
                &mixing * &waveforms
            };
            if noise_var > 0.0 {
                let shape = scenario.noise_shapes.get(k).cloned().unwrap_or_default();
                let mut rng = stream_rng(scenario.seed, STREAM_NOISE_BASE + k as u64);
                let noise = white_noise(array.num_sensors, t, noise_var, &mut rng);
                data += match shape {
                    NoiseShape::White => noise,
                    NoiseShape::Correlated(cov) => psd_sqrt(&cov)? * noise,
                };
            }
            Ok(ArraySnapshots {
                label: array.label.clone(),
                data,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SnapshotSet {
        arrays,
        sources,
        noise_variance: noise_var,
    })
}

fn white_noise<R: Rng + ?Sized>(rows: usize, cols: usize, variance: f64, rng: &mut R) -> CMatrix {
    let s = (variance / 2.0).sqrt();
    // Column-major fill keeps the draw order tied to (snapshot, sensor).
    let mut m = CMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            m[(r, c)] = Complex64::new(re * s, im * s);
        }
    }
    m
}

/// Hermitian square root of a PSD matrix; small negative eigenvalues are clamped.
fn psd_sqrt(cov: &CMatrix) -> Result<CMatrix> {
    if !cov.is_square() {
        return Err(Error::Dimension("noise covariance must be square".into()));
    }
    let eig = hermitian_eigen(cov);
    let top = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if eig.values.iter().any(|&v| v < -1e-9 * top.max(1.0)) {
        return Err(Error::Config("noise covariance is not positive semidefinite".into()));
    }
    let n = cov.nrows();
    let d = CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(eig.values[i].max(0.0).sqrt(), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    Ok(&eig.vectors * d * eig.vectors.adjoint())
}
