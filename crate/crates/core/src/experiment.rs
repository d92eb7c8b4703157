//! End-to-end pipelines behind the command-line subcommands.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cocycle::{lyapunov_spectrum, stability_gap, JacobianGenerator, LyapunovEstimate, StabilityGap};
use crate::config::{EmbeddingConfig, ExperimentConfig, HypothesisConfig};
use crate::embedding::{DelayEmbedder, EmbeddedSeries, Embedder, ReservoirEmbedder};
use crate::error::{Error, Result};
use crate::forecast::{
    autocorrelation, direct_bound, error_direct, error_iterative, growth_slope, plateau_estimate, select_test_starts,
    ErrorCurve, GrowthFit, ReconstructedMap,
};
use crate::learning::{fit_feedback, fit_horizons, training_pairs, AnglePair, FeedbackModel, HypothesisSpace};
use crate::markov::{
    build_partition, eigenvalues, koopman_matrix, koopman_to_markov, reconstruct_law, simulate_markov,
    stationary_distribution, transition_matrix, BoxPartition, ClipReport, LawEntry, StationaryDistribution,
    TransitionMatrix,
};
use crate::numerics::{rms_norm, total_variation};
use crate::output::{csv, OutputDir};
use crate::systems::{generate_trajectory, Measurement, MeasurementMap, State, SystemKind, Trajectory};

/// Errors above this level count as saturated when locating plateaus.
pub const PLATEAU_THRESHOLD: f64 = 1.0;

/// Trajectory, embedding and training data shared by the pipelines.
pub struct Prepared {
    pub trajectory: Trajectory,
    pub embedder: Embedder,
    pub lift: EmbeddedSeries,
    pub space: Arc<HypothesisSpace>,
    pub inputs: Vec<DVector<f64>>,
    pub targets: Vec<DVector<f64>>,
    pub train: Range<usize>,
    pub tests: Vec<usize>,
}

fn build_embedder(config: &ExperimentConfig, d: usize) -> Result<Embedder> {
    Ok(match config.embedding {
        EmbeddingConfig::Delay { q } => Embedder::Delay(DelayEmbedder::new(q, d)?),
        EmbeddingConfig::Reservoir { dim, lambda_c } => {
            Embedder::Reservoir(ReservoirEmbedder::init(dim, d, lambda_c, config.seed)?)
        }
    })
}

fn angle_pairs(config: &ExperimentConfig, trajectory: &Trajectory) -> Vec<AnglePair> {
    let (Measurement::Trigonometric { indices }, EmbeddingConfig::Delay { .. }) = (&config.measurement, &config.embedding)
    else {
        return Vec::new();
    };
    (0..indices.len())
        .map(|j| {
            let (c, s) = (2 * j, 2 * j + 1);
            let origin = match &trajectory.measurement.normalization {
                Some(n) => (-n.mean[c] / n.scale[c], -n.mean[s] / n.scale[s]),
                None => (0.0, 0.0),
            };
            AnglePair {
                cos_index: c,
                sin_index: s,
                origin,
            }
        })
        .collect()
}

/// Generate the trajectory, embed it and collect one-step training pairs.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let spec = &config.system;
    let test_start = config.training + config.gap;
    let total = test_start + (config.ensemble - 1) * config.stride + config.n_max + 2;
    let mut trajectory = generate_trajectory(spec, &spec.default_initial_state(), total, &config.measurement_map())?;
    if config.normalize {
        trajectory.normalize_on(0..config.training)?;
    }
    let d = trajectory.measurement_dim();
    let embedder = build_embedder(config, d)?;
    let lift = embedder.lift(&trajectory.measured)?;
    let train = lift.start..config.training;
    let (inputs, targets) = training_pairs(&lift, &trajectory.measured, train.clone(), 1)?;
    let space = match &config.hypothesis {
        HypothesisConfig::Affine => HypothesisSpace::affine(embedder.dim()),
        HypothesisConfig::Trigonometric { order } => {
            HypothesisSpace::trigonometric(embedder.dim(), *order, angle_pairs(config, &trajectory))?
        }
        HypothesisConfig::Gaussian {
            centers,
            bandwidth_scale,
            affine,
        } => HypothesisSpace::gaussian_from_data(&inputs, *centers, *bandwidth_scale, *affine)?,
    };
    let tests = select_test_starts(test_start..total, config.n_max, config.ensemble, config.stride)?;
    Ok(Prepared {
        trajectory,
        embedder,
        lift,
        space: Arc::new(space),
        inputs,
        targets,
        train,
        tests,
    })
}

impl Prepared {
    pub fn fit_one_step(&self, ridge: Option<f64>) -> Result<ReconstructedMap> {
        let model = fit_feedback(&self.inputs, &self.targets, 1, self.space.clone(), ridge)?;
        ReconstructedMap::new(model, self.embedder.clone())
    }

    /// Direct models for horizons `0..=n_max`, sharing one factorization.
    pub fn fit_direct(&self, n_max: usize, ridge: Option<f64>) -> Result<Vec<FeedbackModel>> {
        fit_horizons(
            &self.inputs,
            &self.trajectory.measured[self.train.start..],
            0..n_max + 1,
            self.space.clone(),
            ridge,
            5,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastSummary {
    pub system: SystemKind,
    /// Projection error of the one-step model.
    pub delta: f64,
    pub derivative_norm: f64,
    pub ridge: f64,
    /// RMS norm of the measured training series.
    pub phi_norm: f64,
    pub direct_max: f64,
    pub direct_last: f64,
    pub plateau_direct: f64,
    pub plateau_iter: f64,
    pub growth: Option<GrowthFit>,
    /// Growth rate per time unit.
    pub growth_per_time: Option<f64>,
    /// Horizons where the direct error exceeds the bound by more than
    /// three times that horizon's projection error.
    pub bound_violations: Vec<usize>,
    pub diverged: usize,
    pub first_divergence: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub direct: ErrorCurve,
    pub iterative: ErrorCurve,
    pub autocorrelation: Vec<f64>,
    pub bound: Vec<f64>,
    /// Projection error of each direct model.
    pub direct_delta: Vec<f64>,
    pub summary: ForecastSummary,
}

impl ForecastReport {
    pub fn table(&self) -> String {
        csv(
            &["horizon", "error_direct", "error_iter", "autocorr", "bound"],
            (0..self.direct.values.len()).map(|k| {
                [
                    k as f64,
                    self.direct.values[k],
                    self.iterative.values[k],
                    self.autocorrelation[k],
                    self.bound[k],
                ]
            }),
        )
    }
}

pub fn run_forecast(config: &ExperimentConfig) -> Result<ForecastReport> {
    let prep = prepare(config)?;
    let measured = &prep.trajectory.measured;
    let map = prep.fit_one_step(config.ridge)?;
    let iterative = error_iterative(&map, &prep.lift, measured, &prep.tests, config.n_max, config.cap)?;
    let models = prep.fit_direct(config.n_max, config.ridge)?;
    let direct = error_direct(&models, &prep.lift, measured, &prep.tests)?;
    let training = &measured[..config.training];
    let phi_norm = rms_norm(training);
    let ac = autocorrelation(training, config.n_max)?;
    let bound = direct_bound(&ac, phi_norm);
    let direct_delta: Vec<f64> = models.iter().map(|m| m.delta).collect();
    let bound_violations = (0..direct.values.len())
        .filter(|&k| direct.values[k] > bound[k] + 3.0 * direct_delta[k])
        .collect();
    let plateau_iter = plateau_estimate(&iterative.values, PLATEAU_THRESHOLD);
    let saturated = iterative.values.iter().any(|v| *v > PLATEAU_THRESHOLD);
    let growth = growth_slope(&iterative.values, saturated.then_some(plateau_iter));
    let summary = ForecastSummary {
        system: config.system.kind,
        delta: map.model.delta,
        derivative_norm: map.model.derivative_norm,
        ridge: map.model.ridge,
        phi_norm,
        direct_max: direct.values.iter().copied().fold(0.0, f64::max),
        direct_last: direct.values[config.n_max],
        plateau_direct: plateau_estimate(&direct.values, PLATEAU_THRESHOLD),
        plateau_iter,
        growth_per_time: growth.as_ref().map(|g| g.slope / config.system.dt),
        growth,
        bound_violations,
        diverged: iterative.diverged,
        first_divergence: iterative.first_divergence,
    };
    let mut direct = direct;
    direct.bound = Some(bound.clone());
    Ok(ForecastReport {
        direct,
        iterative,
        autocorrelation: ac.values,
        bound,
        direct_delta,
        summary,
    })
}

pub fn write_forecast(report: &ForecastReport, out: &mut OutputDir) -> Result<()> {
    out.write("error_curves.csv", report.table().as_bytes())?;
    out.write_json("forecast_summary.json", &report.summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub system: SystemKind,
    pub estimate: LyapunovEstimate,
    pub stability: Option<StabilityGap>,
}

impl LyapunovReport {
    pub fn table(&self) -> String {
        let p = self.estimate.per_time.len();
        let header: Vec<String> = std::iter::once("step".to_string())
            .chain((1..=p).map(|i| format!("lambda{i}_running")))
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        csv(
            &header,
            self.estimate.trace.iter().map(|(step, v)| {
                let mut row = vec![*step as f64];
                row.extend(v);
                row
            }),
        )
    }
}

/// Orbit of `n` states of the configured system after spin-up.
pub fn orbit(config: &ExperimentConfig, n: usize) -> Result<Vec<State>> {
    let spec = &config.system;
    Ok(generate_trajectory(spec, &spec.default_initial_state(), n, &MeasurementMap::full_state())?.states)
}

pub fn run_lyapunov(config: &ExperimentConfig) -> Result<LyapunovReport> {
    config.validate()?;
    let spec = &config.system;
    let steps = config.lyapunov.steps;
    let states = orbit(config, steps)?;
    let p = config.lyapunov.exponents.unwrap_or(spec.state_dim());
    let estimate = lyapunov_spectrum(&JacobianGenerator { spec }, &states, steps, p, spec.dt)?;
    let stability = if config.lyapunov.stability_gap {
        let prep = prepare(config)?;
        let map = prep.fit_one_step(config.ridge)?;
        let start = prep.lift.start + 1;
        let end = start + config.lyapunov.gap_steps;
        if end > prep.trajectory.len() {
            return Err(Error::invalid(
                "lyapunov.gap_steps",
                format!("needs {end} samples but the forecast trajectory has {}", prep.trajectory.len()),
            ));
        }
        Some(stability_gap(
            &map,
            spec,
            &prep.trajectory.states,
            &prep.lift,
            &prep.trajectory.measured,
            start..end,
        )?)
    } else {
        None
    };
    Ok(LyapunovReport {
        system: spec.kind,
        estimate,
        stability,
    })
}

pub fn write_lyapunov(report: &LyapunovReport, out: &mut OutputDir) -> Result<()> {
    out.write("lyapunov.csv", report.table().as_bytes())?;
    out.write_json("lyapunov_summary.json", report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovSummary {
    pub system: SystemKind,
    pub cells: usize,
    pub occupied: usize,
    pub zero_columns: Vec<usize>,
    /// Largest `|Σ_i P_ij − 1|` over sampled columns.
    pub column_defect: f64,
    pub stationary_residual: f64,
    pub stationary_converged: bool,
    /// TV distance from the stationary vector to the occupation histogram of
    /// an independent orbit.
    pub tv_occupation: f64,
    /// TV distance from the stationary vector to the Lebesgue cell masses.
    pub tv_uniform: f64,
    /// TV distance from simulated chain frequencies to the stationary vector.
    pub tv_simulated: Option<f64>,
    pub simulation_halted_at: Option<usize>,
    /// Largest entry difference between the Ulam matrix and the normalized
    /// Koopman matrix.
    pub koopman_difference: f64,
    pub koopman_clipping: ClipReport,
    /// Eigenvalues `(re, im)` of the Koopman matrix by decreasing modulus.
    pub koopman_eigenvalues: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovReport {
    pub partition: BoxPartition,
    pub transition: TransitionMatrix,
    pub stationary: StationaryDistribution,
    pub occupation: Vec<f64>,
    pub law: Vec<LawEntry>,
    pub summary: MarkovSummary,
}

impl MarkovReport {
    pub fn stationary_table(&self) -> String {
        csv(
            &["cell", "stationary", "occupation"],
            (0..self.stationary.pi.len()).map(|c| [c as f64, self.stationary.pi[c], self.occupation[c]]),
        )
    }

    pub fn law_table(&self) -> String {
        let dim = self.partition.dim();
        let header: Vec<String> = std::iter::once("cell".to_string())
            .chain((1..=dim).map(|i| format!("centroid{i}")))
            .chain((1..=dim).map(|i| format!("image{i}")))
            .chain(std::iter::once("dispersion".to_string()))
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        csv(
            &header,
            self.law.iter().map(|e| {
                let mut row = vec![e.cell as f64];
                row.extend(e.centroid.iter());
                row.extend(e.image.iter());
                row.push(e.dispersion);
                row
            }),
        )
    }
}

pub fn run_markov(config: &ExperimentConfig) -> Result<MarkovReport> {
    config.validate()?;
    let mc = &config.markov;
    let spec = &config.system;
    let states = orbit(config, mc.steps)?;
    let angular: Vec<bool> = mc.coordinates.iter().map(|c| spec.kind.is_angular(*c)).collect();
    let partition = build_partition(&states, &mc.coordinates, &mc.resolution, &angular)?;
    let transition = transition_matrix(&states, &partition)?;
    let stationary = stationary_distribution(&transition, mc.tol, mc.max_iters)?;
    let last = states.last().expect("orbit is non-empty").clone();
    let independent = generate_trajectory(spec, &last, mc.steps, &MeasurementMap::full_state())?.states;
    let occupation = partition.occupation(&independent);
    let (simulated, halted) = if mc.simulate > 0 {
        let start = partition.occupied[0];
        let sample = simulate_markov(&transition, start, mc.simulate, config.seed)?;
        let freq = crate::markov::frequencies(&sample.cells, partition.cells());
        (Some(total_variation(&freq, &stationary.pi)), sample.halted_at)
    } else {
        (None, None)
    };
    let u = koopman_matrix(&states, &partition)?;
    let (normalized, koopman_clipping) = koopman_to_markov(&u);
    let m = partition.cells();
    let mut koopman_difference: f64 = 0.0;
    for j in 0..m {
        for i in 0..m {
            koopman_difference = koopman_difference.max((normalized.get(i, j) - transition.get(i, j)).abs());
        }
    }
    let koopman_eigenvalues = if m <= 500 { eigenvalues(&u) } else { Vec::new() };
    let law = reconstruct_law(&transition, &partition)?;
    let summary = MarkovSummary {
        system: spec.kind,
        cells: m,
        occupied: partition.occupied.len(),
        zero_columns: transition.zero_columns.clone(),
        column_defect: transition.max_column_defect(),
        stationary_residual: stationary.residual,
        stationary_converged: stationary.converged,
        tv_occupation: total_variation(&stationary.pi, &occupation),
        tv_uniform: total_variation(&stationary.pi, &partition.uniform_masses()),
        tv_simulated: simulated,
        simulation_halted_at: halted,
        koopman_difference,
        koopman_clipping,
        koopman_eigenvalues,
    };
    Ok(MarkovReport {
        partition,
        transition,
        stationary,
        occupation,
        law,
        summary,
    })
}

pub fn write_markov(report: &MarkovReport, out: &mut OutputDir) -> Result<()> {
    out.write("transition_matrix.coo", report.transition.matrix.to_coo().as_bytes())?;
    out.write("stationary.csv", report.stationary_table().as_bytes())?;
    out.write("law.csv", report.law_table().as_bytes())?;
    out.write_json("markov_summary.json", &report.summary)
}
