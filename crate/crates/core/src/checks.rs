//! Invariant suite run by `dynrecon checks`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cocycle::{cocycle_law_defect, JacobianGenerator};
use crate::config::ExperimentConfig;
use crate::embedding::ReservoirEmbedder;
use crate::error::Result;
use crate::experiment::orbit;
use crate::forecast::unitarity_deviation;
use crate::markov::{build_partition, koopman_matrix, koopman_to_markov, stationary_distribution, transition_matrix};
use crate::numerics::mean;
use crate::systems::{generate_trajectory, MeasurementMap, SystemKind, SystemSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

impl CheckResult {
    /// Passes when `value ≤ threshold`.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub checks: Vec<CheckResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{} {}: {:.3e} (limit {:.3e})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.threshold
                )
            })
            .collect()
    }
}

const KINDS: [SystemKind; 3] = [SystemKind::TorusRotation, SystemKind::Lorenz63, SystemKind::L63Rot];

fn kind_name(kind: SystemKind) -> &'static str {
    match kind {
        SystemKind::TorusRotation => "torus",
        SystemKind::Lorenz63 => "l63",
        SystemKind::L63Rot => "l63rot",
    }
}

/// Largest relative defect of the Jacobian cocycle law over `m, n ≤ max`.
pub fn cocycle_law_max_defect(spec: &SystemSpec, max: usize) -> Result<f64> {
    let states = generate_trajectory(spec, &spec.default_initial_state(), 2 * max + 1, &MeasurementMap::full_state())?
        .states;
    let gen = JacobianGenerator { spec };
    let mut worst: f64 = 0.0;
    for m in 0..=max {
        for n in 0..=max {
            worst = worst.max(cocycle_law_defect(&gen, &states, m, n)?);
        }
    }
    Ok(worst)
}

/// Largest post-washout distance between reservoir states driven by the same
/// measured series from the zero state and from a random state.
pub fn echo_state_gap(spec: &SystemSpec, dim: usize, lambda_c: f64, samples: usize, seed: u64) -> Result<f64> {
    let measurement = MeasurementMap::full_state();
    let mut tr = generate_trajectory(spec, &spec.default_initial_state(), samples, &measurement)?;
    tr.normalize_on(0..samples)?;
    let res = ReservoirEmbedder::init(dim, tr.measurement_dim(), lambda_c, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let y0 = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
    let a = res.drive(&tr.measured, &DVector::zeros(dim))?;
    let b = res.drive(&tr.measured, &y0)?;
    Ok(a.points
        .iter()
        .zip(&b.points)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max))
}

/// Largest relative RMS change of the mean-removed measured series under
/// `n ≤ lags` shifts.
pub fn unitarity_max_deviation(config: &ExperimentConfig, steps: usize, lags: usize) -> Result<f64> {
    let spec = &config.system;
    let tr = generate_trajectory(spec, &spec.default_initial_state(), steps, &config.measurement_map())?;
    let d = tr.measurement_dim();
    let means: Vec<f64> = (0..d).map(|c| mean(&tr.component(c))).collect();
    let centered: Vec<DVector<f64>> = tr
        .measured
        .iter()
        .map(|x| DVector::from_fn(d, |i, _| x[i] - means[i]))
        .collect();
    Ok(unitarity_deviation(&centered, lags)?.into_iter().fold(0.0, f64::max))
}

/// Run every invariant check for `config`.
pub fn run_checks(config: &ExperimentConfig) -> Result<CheckReport> {
    config.validate()?;
    let c = &config.checks;
    let mut checks = Vec::new();
    for kind in KINDS {
        let spec = SystemSpec::for_kind(kind);
        let defect = cocycle_law_max_defect(&spec, c.cocycle_orbit / 2)?;
        checks.push(CheckResult::at_most(
            format!("cocycle law ({})", kind_name(kind)),
            defect,
            c.cocycle_tol,
        ));
    }
    for kind in KINDS {
        let spec = SystemSpec::for_kind(kind);
        let gap = echo_state_gap(&spec, 100, 0.9, 2000, config.seed)?;
        checks.push(CheckResult::at_most(
            format!("echo state ({})", kind_name(kind)),
            gap,
            c.echo_tol,
        ));
    }
    let dev = unitarity_max_deviation(config, c.unitarity_steps, c.unitarity_lags)?;
    checks.push(CheckResult::at_most(
        format!("unitarity ({})", kind_name(config.system.kind)),
        dev,
        c.unitarity_tol,
    ));

    let mc = &config.markov;
    let states = orbit(config, mc.steps)?;
    let angular: Vec<bool> = mc.coordinates.iter().map(|k| config.system.kind.is_angular(*k)).collect();
    let partition = build_partition(&states, &mc.coordinates, &mc.resolution, &angular)?;
    let p = transition_matrix(&states, &partition)?;
    checks.push(CheckResult::at_most("column sums", p.max_column_defect(), 1e-12));
    let s = stationary_distribution(&p, mc.tol, mc.max_iters)?;
    checks.push(CheckResult::at_most("stationary residual", s.residual, 10.0 * mc.tol));
    let (q, clip) = koopman_to_markov(&koopman_matrix(&states, &partition)?);
    let m = partition.cells();
    let diff = (0..m)
        .flat_map(|j| (0..m).map(move |i| (i, j)))
        .map(|(i, j)| (q.get(i, j) - p.get(i, j)).abs())
        .fold(0.0, f64::max);
    checks.push(CheckResult::at_most("koopman estimator identity", diff, 1e-12));
    checks.push(CheckResult::at_most("koopman clipping", clip.total_clipped, 0.0));
    Ok(CheckReport { checks })
}
