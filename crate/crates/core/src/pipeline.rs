//! End-to-end estimation: snapshots to DOA estimates.

use serde::Serialize;

use crate::baseline::{coarray_correlations, virtual_ula_null_spectrum, virtual_ula_subspace};
use crate::config::Prepared;
use crate::cumulants::{empirical_moments, estimate_fcm, theoretical_full_fcm, Fcm, RANK_TOL};
use crate::error::{Error, Result};
use crate::geometry::CoarrayPair;
use crate::linalg::numerical_rank;
use crate::simulation::{synthesize, Scenario, SnapshotSet};
use crate::smoothing::smooth_fcm;
use crate::spectrum::{
    combine_spectra, find_peaks, gap_signal_dim, null_spectrum, subspace, uniform_grid, DoaEstimate, SpectrumGrid,
    SubspaceModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// 4-MUSIC on the full-array FCM.
    Fcm,
    /// 4-MUSIC on the spatially smoothed FCM.
    FcmSmoothed,
    /// Second-order MUSIC on the virtual ULA.
    Baseline,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fcm" => Ok(Method::Fcm),
            "fcm-smoothed" => Ok(Method::FcmSmoothed),
            "baseline" => Ok(Method::Baseline),
            other => Err(Error::Config(format!(
                "unknown method \"{other}\" (expected fcm, fcm-smoothed or baseline)"
            ))),
        }
    }
}

/// Which coarray pairs to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PairSelection {
    Ab,
    Ac,
    Bc,
    Abc,
}

impl PairSelection {
    /// Array index pairs, in output order.
    pub fn indices(self) -> Vec<(usize, usize)> {
        match self {
            PairSelection::Ab => vec![(0, 1)],
            PairSelection::Ac => vec![(0, 2)],
            PairSelection::Bc => vec![(1, 2)],
            PairSelection::Abc => vec![(0, 1), (0, 2), (1, 2)],
        }
    }
}

impl std::str::FromStr for PairSelection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ab" => Ok(PairSelection::Ab),
            "ac" => Ok(PairSelection::Ac),
            "bc" => Ok(PairSelection::Bc),
            "abc" => Ok(PairSelection::Abc),
            other => Err(Error::Config(format!(
                "unknown array selection \"{other}\" (expected ab, ac, bc or abc)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunOptions {
    pub method: Method,
    pub arrays: PairSelection,
    /// Sum the null-spectra of all selected pairs. Implied when more than one
    /// pair is selected.
    pub combine: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            method: Method::FcmSmoothed,
            arrays: PairSelection::Ab,
            combine: false,
        }
    }
}

/// Subspace details of one coarray pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReport {
    pub label: String,
    pub matrix_dim: usize,
    pub subarray_sizes: [usize; 2],
    pub smoothing_terms: usize,
    /// Eigenvalues by decreasing magnitude.
    pub eigenvalues: Vec<f64>,
    pub signal_dim: usize,
    pub gap_signal_dim: usize,
    /// Rank of the noise-free matrix implied by the scenario.
    pub scenario_signal_dim: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub spectrum: SpectrumGrid,
    pub estimates: Vec<DoaEstimate>,
    pub pairs: Vec<PairReport>,
    pub noise_variance: f64,
}

/// The FCM of one pair as the chosen method sees it, with its noise-free
/// counterpart.
fn pair_fcm(
    method: Method,
    scenario: &Scenario,
    pair: &CoarrayPair,
    snaps: &SnapshotSet,
    sizes: [usize; 2],
) -> Result<(Fcm, Fcm)> {
    let ya = snaps
        .get(&pair.first.label)
        .ok_or_else(|| Error::Config(format!("no snapshots for array {}", pair.first.label)))?;
    let yb = snaps
        .get(&pair.second.label)
        .ok_or_else(|| Error::Config(format!("no snapshots for array {}", pair.second.label)))?;
    let est = estimate_fcm(&empirical_moments(pair, ya, yb)?);
    let exact = theoretical_full_fcm(&scenario.groups, pair)?;
    match method {
        Method::FcmSmoothed => Ok((
            smooth_fcm(&est, sizes[0], sizes[1])?,
            smooth_fcm(&exact, sizes[0], sizes[1])?,
        )),
        _ => Ok((est, exact)),
    }
}

fn report(label: String, model: &SubspaceModel, sizes: [usize; 2], terms: usize, scenario_dim: usize) -> PairReport {
    PairReport {
        label,
        matrix_dim: model.dim(),
        subarray_sizes: sizes,
        smoothing_terms: terms,
        eigenvalues: model.eigenvalues.clone(),
        signal_dim: model.signal_dim,
        gap_signal_dim: gap_signal_dim(&model.eigenvalues),
        scenario_signal_dim: scenario_dim,
    }
}

/// Synthesizes snapshots for the prepared scenario and estimates DOAs.
pub fn run(prepared: &Prepared, opts: &RunOptions) -> Result<RunOutput> {
    let snaps = synthesize(&prepared.scenario)?;
    run_on(prepared, opts, &snaps)
}

/// Estimates DOAs from existing snapshots.
pub fn run_on(prepared: &Prepared, opts: &RunOptions, snaps: &SnapshotSet) -> Result<RunOutput> {
    let scenario = &prepared.scenario;
    let pairs = opts.arrays.indices();
    if pairs.iter().any(|&(_, j)| j >= scenario.arrays.len()) {
        return Err(Error::Config(format!(
            "array selection {:?} needs a third array but the configuration has {}",
            opts.arrays,
            scenario.arrays.len()
        )));
    }
    if opts.method == Method::Baseline && pairs.len() > 1 {
        return Err(Error::Config("the baseline method works on a single coarray pair".into()));
    }
    let grid = uniform_grid(prepared.grid_points);
    let q = scenario.num_signals();

    let mut spectra = Vec::new();
    let mut reports = Vec::new();
    for (i, j) in pairs {
        let (a, b) = (&scenario.arrays[i], &scenario.arrays[j]);
        let pair = CoarrayPair::new(a.clone(), b.clone())?;
        let sizes = [prepared.subarray_sizes[i], prepared.subarray_sizes[j]];
        match opts.method {
            Method::Baseline => {
                let ya = snaps.get(&a.label).expect("synthesized for every array");
                let yb = snaps.get(&b.label).expect("synthesized for every array");
                let lags = coarray_correlations(ya, yb, a.spacing, b.spacing)?;
                let dim = prepared.signal_dim.unwrap_or(q);
                let model = virtual_ula_subspace(&lags, dim)?;
                spectra.push(virtual_ula_null_spectrum(&model, &grid));
                reports.push(report("baseline".into(), &model, [a.num_sensors, b.num_sensors], 1, q));
            }
            method => {
                let (fcm, exact) = pair_fcm(method, scenario, &pair, snaps, sizes)?;
                let scenario_dim = numerical_rank(&exact.matrix, RANK_TOL);
                let model = subspace(&fcm, Some(prepared.signal_dim.unwrap_or(scenario_dim)))?;
                spectra.push(null_spectrum(&model, &fcm.geometry, &grid)?);
                let used = [fcm.geometry.sub_first.size, fcm.geometry.sub_second.size];
                reports.push(report(pair.label(), &model, used, fcm.geometry.smoothing_terms, scenario_dim));
            }
        }
    }
    let spectrum = if opts.combine || spectra.len() > 1 {
        combine_spectra(&spectra.iter().collect::<Vec<_>>())?
    } else {
        spectra.pop().expect("at least one pair")
    };
    let estimates = find_peaks(&spectrum, Some(q));
    Ok(RunOutput {
        spectrum,
        estimates,
        pairs: reports,
        noise_variance: scenario.noise_variance(),
    })
}
