//! Scenario configuration files and the two built-in presets.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{gcd, NormalizedDoa, SparseArray};
use crate::simulation::{
    check_nonvanishing, stream_rng, Scenario, SignalGroup, SourceKind, STREAM_COEFFS, STREAM_LAYOUT,
};
use crate::spectrum::DEFAULT_GRID_POINTS;

/// Array labels a configuration may use, in pairing order.
pub const ARRAY_LABELS: [&str; 3] = ["A", "B", "C"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub label: String,
    pub spacing: usize,
    pub num_sensors: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffConfig {
    pub re: f64,
    pub im: f64,
}

impl From<CoeffConfig> for Complex64 {
    fn from(c: CoeffConfig) -> Self {
        Complex64::new(c.re, c.im)
    }
}

impl From<Complex64> for CoeffConfig {
    fn from(c: Complex64) -> Self {
        CoeffConfig { re: c.re, im: c.im }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    /// Normalized directions in radians.
    pub doas: Vec<f64>,
    /// Path coefficients; unit-modulus random phases are drawn when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<CoeffConfig>>,
    pub source: SourceKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    #[serde(rename = "K_A", default, skip_serializing_if = "Option::is_none")]
    pub k_a: Option<usize>,
    #[serde(rename = "K_B", default, skip_serializing_if = "Option::is_none")]
    pub k_b: Option<usize>,
    #[serde(rename = "K_C", default, skip_serializing_if = "Option::is_none")]
    pub k_c: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal_dim: Option<usize>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

fn default_grid_points() -> usize {
    DEFAULT_GRID_POINTS
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            k_a: None,
            k_b: None,
            k_c: None,
            signal_dim: None,
            grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Per-sensor SNR; `null` means noise-free.
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub snapshots: usize,
    pub seed: u64,
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub arrays: Vec<ArrayConfig>,
    pub groups: Vec<GroupConfig>,
    #[serde(default)]
    pub estimation: EstimationConfig,
    pub noise: NoiseConfig,
    pub run: RunConfig,
}

/// A validated configuration ready to run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    /// Subarray size for each array, indexed like `scenario.arrays`.
    pub subarray_sizes: Vec<usize>,
    pub signal_dim: Option<usize>,
    pub grid_points: usize,
    /// Conditions that do not stop a run but weaken its guarantees.
    pub warnings: Vec<String>,
}

fn config_err(path: impl AsRef<str>, msg: impl AsRef<str>) -> Error {
    Error::Config(format!("{}: {}", path.as_ref(), msg.as_ref()))
}

impl Config {
    /// Parses JSON text; syntax and type errors carry line and column.
    pub fn from_json(text: &str) -> Result<Config> {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Config::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn subarray_size(&self, label: &str) -> Option<usize> {
        match label {
            "A" => self.estimation.k_a,
            "B" => self.estimation.k_b,
            "C" => self.estimation.k_c,
            _ => None,
        }
    }

    /// Validates and builds the scenario, drawing missing coefficients from
    /// the seed.
    pub fn prepare(&self) -> Result<Prepared> {
        let mut warnings = Vec::new();
        if self.arrays.len() < 2 || self.arrays.len() > 3 {
            return Err(config_err("arrays", "expected two or three arrays"));
        }
        let mut arrays = Vec::new();
        for (i, a) in self.arrays.iter().enumerate() {
            let path = format!("arrays[{i}]");
            if a.label != ARRAY_LABELS[i] {
                return Err(config_err(
                    format!("{path}.label"),
                    format!("expected \"{}\", found \"{}\"", ARRAY_LABELS[i], a.label),
                ));
            }
            let arr = SparseArray::new(a.label.clone(), a.spacing, a.num_sensors)
                .map_err(|e| config_err(&path, e.to_string()))?;
            arrays.push(arr);
        }
        for i in 0..arrays.len() {
            for j in i + 1..arrays.len() {
                if gcd(arrays[i].spacing, arrays[j].spacing) != 1 {
                    return Err(config_err(
                        format!("arrays[{j}].spacing"),
                        format!(
                            "spacings {} and {} of arrays {} and {} are not coprime",
                            arrays[i].spacing, arrays[j].spacing, arrays[i].label, arrays[j].label
                        ),
                    ));
                }
            }
        }

        if self.groups.is_empty() {
            return Err(config_err("groups", "at least one signal group is required"));
        }
        let mut coeff_rng = stream_rng(self.run.seed, STREAM_COEFFS);
        let mut groups = Vec::new();
        for (gi, g) in self.groups.iter().enumerate() {
            let path = format!("groups[{gi}]");
            if g.doas.is_empty() {
                return Err(config_err(format!("{path}.doas"), "a group needs at least one direction"));
            }
            for (k, d) in g.doas.iter().enumerate() {
                if !d.is_finite() || *d < -PI || *d >= PI {
                    return Err(config_err(
                        format!("{path}.doas[{k}]"),
                        format!("{d} is outside [-pi, pi)"),
                    ));
                }
            }
            if !(g.source.power > 0.0 && g.source.power.is_finite()) {
                return Err(config_err(format!("{path}.source.power"), "power must be positive"));
            }
            let coeffs: Vec<Complex64> = match &g.coeffs {
                Some(c) => {
                    if c.len() != g.doas.len() {
                        return Err(config_err(
                            format!("{path}.coeffs"),
                            format!("{} coefficients for {} directions", c.len(), g.doas.len()),
                        ));
                    }
                    for (k, v) in c.iter().enumerate() {
                        if Complex64::from(*v).norm() == 0.0 || !v.re.is_finite() || !v.im.is_finite() {
                            return Err(config_err(format!("{path}.coeffs[{k}]"), "coefficient must be nonzero"));
                        }
                    }
                    c.iter().map(|&v| v.into()).collect()
                }
                None => (0..g.doas.len())
                    .map(|_| Complex64::from_polar(1.0, coeff_rng.random_range(0.0..2.0 * PI)))
                    .collect(),
            };
            let group = SignalGroup::new(g.doas.iter().map(|&d| NormalizedDoa::new(d)).collect(), coeffs, g.source)
                .map_err(|e| config_err(&path, e.to_string()))?;
            for a in &arrays {
                if !check_nonvanishing(&group, a) {
                    return Err(Error::VanishingGroup {
                        group: gi,
                        array: a.label.clone(),
                    });
                }
            }
            groups.push(group);
        }
        let all: Vec<(usize, usize, f64)> = self
            .groups
            .iter()
            .enumerate()
            .flat_map(|(gi, g)| g.doas.iter().enumerate().map(move |(k, &d)| (gi, k, d)))
            .collect();
        for (i, &(g1, k1, d1)) in all.iter().enumerate() {
            for &(g2, k2, d2) in &all[i + 1..] {
                if NormalizedDoa::new(d1).distance(NormalizedDoa::new(d2)) == 0.0 {
                    return Err(config_err(
                        format!("groups[{g2}].doas[{k2}]"),
                        format!("duplicates groups[{g1}].doas[{k1}]"),
                    ));
                }
            }
        }

        let snr_db = self.noise.snr_db.unwrap_or(f64::INFINITY);
        if snr_db.is_nan() {
            return Err(config_err("noise.snr_db", "not a number"));
        }
        if self.run.snapshots == 0 {
            return Err(config_err("run.snapshots", "must be positive"));
        }
        if self.estimation.grid_points < 3 {
            return Err(config_err("estimation.grid_points", "at least 3 grid points are required"));
        }

        let scenario = Scenario::new(arrays.clone(), groups, snr_db, self.run.snapshots, self.run.seed);
        let q_max = scenario.max_group_size();
        let defaults = crate::smoothing::default_subarray_sizes(&arrays, q_max);
        let mut sizes = Vec::new();
        for (i, a) in arrays.iter().enumerate() {
            let key = format!("estimation.K_{}", a.label);
            let k = match (self.subarray_size(&a.label), defaults[i]) {
                (Some(k), _) => k,
                (None, Some(k)) => k,
                (None, None) => {
                    return Err(config_err(
                        key,
                        format!(
                            "no subarray size satisfies both smoothing conditions on array {}; set it explicitly",
                            a.label
                        ),
                    ))
                }
            };
            if k == 0 || k > a.num_sensors {
                return Err(config_err(
                    key,
                    format!("{k} does not fit array {} with {} sensors", a.label, a.num_sensors),
                ));
            }
            if a.num_sensors + 1 < k + q_max {
                warnings.push(format!(
                    "{key}={k} leaves {} subarrays on array {}, fewer than the largest group size {q_max}",
                    a.num_sensors + 1 - k,
                    a.label
                ));
            }
            sizes.push(k);
        }
        if let Some(d) = self.estimation.signal_dim {
            let smallest = (0..arrays.len())
                .flat_map(|i| (i + 1..arrays.len()).map(move |j| (i, j)))
                .map(|(i, j)| sizes[i] * sizes[j])
                .min()
                .unwrap_or(0);
            if d >= smallest {
                return Err(config_err(
                    "estimation.signal_dim",
                    format!("{d} leaves no noise subspace in a {smallest}-dimensional smoothed FCM"),
                ));
            }
        }
        Ok(Prepared {
            scenario,
            subarray_sizes: sizes,
            signal_dim: self.estimation.signal_dim,
            grid_points: self.estimation.grid_points,
            warnings,
        })
    }
}

/// Built-in scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Ten signals on a coprime pair: four independent and three coherent pairs.
    Sim1,
    /// Nine signals in two coherent groups plus four independents, with a third array.
    Sim2,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim1" => Ok(Preset::Sim1),
            "sim2" => Ok(Preset::Sim2),
            other => Err(Error::Config(format!("unknown preset \"{other}\" (expected sim1 or sim2)"))),
        }
    }
}

/// Smallest separation between the randomly drawn sim1 directions.
pub const SIM1_MIN_SEPARATION: f64 = 0.08 * PI;
/// Sim1 directions are drawn uniformly from `[-SIM1_SPAN, SIM1_SPAN]`.
pub const SIM1_SPAN: f64 = 0.8 * PI;

fn modulation_for(index: usize) -> SourceKind {
    if index % 2 == 0 {
        SourceKind::qpsk(1.0)
    } else {
        SourceKind::qam4(1.0)
    }
}

fn draw_phases<R: Rng>(rng: &mut R, n: usize) -> Vec<CoeffConfig> {
    (0..n)
        .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)).into())
        .collect()
}

/// Ten directions for sim1, redrawn until every pair is at least
/// `SIM1_MIN_SEPARATION` apart.
fn sim1_doas(seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, STREAM_LAYOUT);
    loop {
        let doas: Vec<f64> = (0..10).map(|_| rng.random_range(-SIM1_SPAN..=SIM1_SPAN)).collect();
        let separated = doas.iter().enumerate().all(|(i, &x)| {
            doas[i + 1..]
                .iter()
                .all(|&y| NormalizedDoa::new(x).distance(NormalizedDoa::new(y)) >= SIM1_MIN_SEPARATION)
        });
        if separated {
            return doas;
        }
    }
}

fn array(label: &str, spacing: usize, num_sensors: usize) -> ArrayConfig {
    ArrayConfig {
        label: label.into(),
        spacing,
        num_sensors,
    }
}

/// Builds a preset configuration; coefficients and sim1 directions are
/// drawn from `seed` and written into the config.
pub fn make_scenario(preset: Preset, seed: u64) -> Config {
    let mut coeff_rng = stream_rng(seed, STREAM_COEFFS);
    let layout: Vec<Vec<f64>> = match preset {
        Preset::Sim1 => {
            let d = sim1_doas(seed);
            let mut groups: Vec<Vec<f64>> = d[..4].iter().map(|&x| vec![x]).collect();
            groups.extend(d[4..].chunks(2).map(|c| c.to_vec()));
            groups
        }
        Preset::Sim2 => {
            let pi = |v: &[f64]| v.iter().map(|x| x * PI).collect::<Vec<f64>>();
            vec![
                pi(&[-0.6, 0.2, 0.3]),
                pi(&[-0.5, -0.3]),
                pi(&[-0.4]),
                pi(&[-0.1]),
                pi(&[0.1]),
                pi(&[0.25]),
            ]
        }
    };
    let groups = layout
        .into_iter()
        .enumerate()
        .map(|(i, doas)| GroupConfig {
            coeffs: Some(draw_phases(&mut coeff_rng, doas.len())),
            doas,
            source: modulation_for(i),
        })
        .collect();
    let mut arrays = vec![array("A", 6, 9), array("B", 5, 10)];
    let mut estimation = EstimationConfig {
        k_a: Some(6),
        k_b: Some(7),
        ..EstimationConfig::default()
    };
    if preset == Preset::Sim2 {
        arrays.push(array("C", 7, 8));
        estimation.k_c = Some(5);
    }
    Config {
        arrays,
        groups,
        estimation,
        noise: NoiseConfig { snr_db: Some(5.0) },
        run: RunConfig { snapshots: 2000, seed },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sim2_preset_contents() {
        let c = make_scenario(Preset::Sim2, 3);
        assert_eq!(c.arrays[2], array("C", 7, 8));
        assert_eq!(c.estimation.k_c, Some(5));
        let p = c.prepare().unwrap();
        assert_eq!(p.scenario.num_signals(), 9);
        assert_eq!(p.subarray_sizes, vec![6, 7, 5]);
    }

    #[test]
    fn sim1_preset_contents() {
        let c = make_scenario(Preset::Sim1, 11);
        let p = c.prepare().unwrap();
        let sc = &p.scenario;
        assert_eq!(sc.num_signals(), 10);
        assert_eq!(sc.groups.iter().filter(|g| g.len() == 1).count(), 4);
        assert_eq!(sc.groups.iter().filter(|g| g.len() == 2).count(), 3);
        assert_eq!(sc.num_snapshots, 2000);
        assert_eq!(sc.snr_db, 5.0);
        assert!(p.warnings.is_empty(), "{:?}", p.warnings);
        let doas = sc.all_doas();
        for (i, a) in doas.iter().enumerate() {
            assert!(a.radians().abs() <= SIM1_SPAN + 1e-12);
            for b in &doas[i + 1..] {
                assert!(a.distance(*b) >= SIM1_MIN_SEPARATION);
            }
        }
        assert_ne!(make_scenario(Preset::Sim1, 12), c);
        assert_eq!(make_scenario(Preset::Sim1, 11), c);
    }

    #[test]
    fn presets_round_trip_through_json() {
        for p in [Preset::Sim1, Preset::Sim2] {
            let c = make_scenario(p, 5);
            assert_eq!(Config::from_json(&c.to_json()).unwrap(), c);
        }
    }

    #[test]
    fn syntax_errors_report_position() {
        let err = Config::from_json("{\n  \"arrays\": [,]\n}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    fn base() -> Config {
        make_scenario(Preset::Sim2, 1)
    }

    #[test]
    fn rejects_non_coprime_spacings() {
        let mut c = base();
        c.arrays[1].spacing = 4;
        let err = c.prepare().unwrap_err().to_string();
        assert!(err.contains("arrays[1].spacing"), "{err}");
    }

    #[test]
    fn rejects_duplicate_doas() {
        let mut c = base();
        c.groups[3].doas[0] = c.groups[0].doas[1];
        let err = c.prepare().unwrap_err().to_string();
        assert!(err.contains("groups[3].doas[0]"), "{err}");
    }

    #[test]
    fn rejects_zero_coefficient() {
        let mut c = base();
        c.groups[0].coeffs.as_mut().unwrap()[1] = CoeffConfig { re: 0.0, im: 0.0 };
        let err = c.prepare().unwrap_err().to_string();
        assert!(err.contains("groups[0].coeffs[1]"), "{err}");
    }

    #[test]
    fn rejects_oversized_subarray() {
        let mut c = base();
        c.estimation.k_b = Some(11);
        let err = c.prepare().unwrap_err().to_string();
        assert!(err.contains("estimation.K_B"), "{err}");
    }

    #[test]
    fn vanishing_group_is_named() {
        let mut c = base();
        let t = 0.1;
        c.groups[0] = GroupConfig {
            doas: vec![t, t + 2.0 * PI / 6.0],
            coeffs: Some(vec![CoeffConfig { re: 1.0, im: 0.0 }, CoeffConfig { re: -1.0, im: 0.0 }]),
            source: SourceKind::qpsk(1.0),
        };
        assert_eq!(
            c.prepare().unwrap_err(),
            Error::VanishingGroup {
                group: 0,
                array: "A".into()
            }
        );
    }

    #[test]
    fn missing_coefficients_are_drawn_from_seed() {
        let mut c = base();
        c.groups[0].coeffs = None;
        let a = c.prepare().unwrap();
        let b = c.prepare().unwrap();
        assert_eq!(a.scenario.groups[0].coeffs, b.scenario.groups[0].coeffs);
        for e in &a.scenario.groups[0].coeffs {
            assert!((e.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn warns_on_too_few_subarrays() {
        let mut c = base();
        c.estimation.k_c = Some(7);
        let p = c.prepare().unwrap();
        assert!(p.warnings.iter().any(|w| w.contains("K_C")), "{:?}", p.warnings);
    }

    #[test]
    fn null_snr_means_noise_free() {
        let mut c = base();
        c.noise.snr_db = None;
        assert_eq!(c.prepare().unwrap().scenario.noise_variance(), 0.0);
    }
}
