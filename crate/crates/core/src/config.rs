//! Experiment configuration: a versioned JSON document merged over
//! per-system defaults, with command-line overrides applied last.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::embedding::washout_for;
use crate::error::{Error, Result};
use crate::systems::{Measurement, MeasurementMap, SystemKind, SystemSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingKind {
    Delay,
    Reservoir,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EmbeddingConfig {
    Delay { q: usize },
    /// Random reservoir seeded from the run seed.
    Reservoir { dim: usize, lambda_c: f64 },
}

impl EmbeddingConfig {
    pub fn kind(&self) -> EmbeddingKind {
        match self {
            EmbeddingConfig::Delay { .. } => EmbeddingKind::Delay,
            EmbeddingConfig::Reservoir { .. } => EmbeddingKind::Reservoir,
        }
    }

    pub fn default_for(kind: EmbeddingKind) -> Self {
        match kind {
            EmbeddingKind::Delay => EmbeddingConfig::Delay { q: 1 },
            EmbeddingKind::Reservoir => EmbeddingConfig::Reservoir {
                dim: 200,
                lambda_c: 0.9,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HypothesisConfig {
    Affine,
    /// Harmonics of the measured angles; needs a trigonometric measurement
    /// and a delay embedding.
    Trigonometric { order: usize },
    /// Bandwidth is `bandwidth_scale` times the median pairwise distance.
    Gaussian {
        centers: usize,
        bandwidth_scale: f64,
        affine: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    pub steps: usize,
    /// Number of exponents; all of them when absent.
    pub exponents: Option<usize>,
    /// Also fit a model and compare its spectrum with the system's.
    pub stability_gap: bool,
    pub gap_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovConfig {
    /// State coordinates to partition.
    pub coordinates: Vec<usize>,
    pub resolution: Vec<usize>,
    pub steps: usize,
    pub tol: f64,
    pub max_iters: usize,
    /// Length of the simulated chain (0 to skip).
    pub simulate: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    pub cocycle_orbit: usize,
    pub cocycle_tol: f64,
    pub echo_tol: f64,
    pub unitarity_steps: usize,
    pub unitarity_lags: usize,
    pub unitarity_tol: f64,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self {
            cocycle_orbit: 40,
            cocycle_tol: 1e-10,
            echo_tol: 1e-8,
            unitarity_steps: 1_000_000,
            unitarity_lags: 100,
            unitarity_tol: 0.02,
        }
    }
}

/// Everything a run depends on. Identical configs give identical tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub system: SystemSpec,
    pub measurement: Measurement,
    /// Rescale the measured series to zero mean and unit RMS on the training
    /// span.
    pub normalize: bool,
    pub embedding: EmbeddingConfig,
    pub hypothesis: HypothesisConfig,
    /// Ridge parameter; a trace-scaled default when absent.
    pub ridge: Option<f64>,
    pub training: usize,
    /// Samples skipped between training and test spans.
    pub gap: usize,
    pub ensemble: usize,
    pub stride: usize,
    pub n_max: usize,
    /// Rollout norm treated as divergence.
    pub cap: f64,
    pub seed: u64,
    pub lyapunov: LyapunovConfig,
    pub markov: MarkovConfig,
    pub checks: ChecksConfig,
    pub out: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub system: Option<SystemKind>,
    pub embedding: Option<EmbeddingKind>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn defaults(kind: SystemKind) -> Self {
        let system = SystemSpec::for_kind(kind);
        let checks = ChecksConfig::default();
        match kind {
            SystemKind::TorusRotation => Self {
                version: SCHEMA_VERSION,
                system,
                measurement: Measurement::Trigonometric { indices: vec![0, 1] },
                normalize: false,
                embedding: EmbeddingConfig::Delay { q: 1 },
                hypothesis: HypothesisConfig::Trigonometric { order: 1 },
                ridge: None,
                training: 10_000,
                gap: 100,
                ensemble: 200,
                stride: 20,
                n_max: 500,
                cap: 1e3,
                seed: 1,
                lyapunov: LyapunovConfig {
                    steps: 10_000,
                    exponents: None,
                    stability_gap: true,
                    gap_steps: 5_000,
                },
                markov: MarkovConfig {
                    coordinates: vec![0, 1],
                    resolution: vec![5, 4],
                    steps: 1_000_000,
                    tol: 1e-12,
                    max_iters: 1_000_000,
                    simulate: 1_000_000,
                },
                checks,
                out: None,
            },
            SystemKind::Lorenz63 | SystemKind::L63Rot => Self {
                version: SCHEMA_VERSION,
                measurement: if kind == SystemKind::Lorenz63 {
                    Measurement::FullState
                } else {
                    Measurement::CoordinateProjection { indices: vec![1, 2, 3] }
                },
                system,
                normalize: true,
                embedding: EmbeddingConfig::Delay { q: 1 },
                hypothesis: HypothesisConfig::Gaussian {
                    centers: 800,
                    bandwidth_scale: 0.5,
                    affine: true,
                },
                ridge: Some(1e-12),
                training: 20_000,
                gap: 100,
                ensemble: 500,
                stride: 300,
                n_max: 1500,
                cap: 1e3,
                seed: 1,
                lyapunov: LyapunovConfig {
                    steps: 200_000,
                    exponents: None,
                    stability_gap: false,
                    gap_steps: 20_000,
                },
                markov: MarkovConfig {
                    coordinates: vec![if kind == SystemKind::Lorenz63 { 2 } else { 3 }],
                    resolution: vec![20],
                    steps: 1_000_000,
                    tol: 1e-12,
                    max_iters: 1_000_000,
                    simulate: 1_000_000,
                },
                checks,
                out: None,
            },
        }
    }

    /// Parse `text` (if any) over the defaults of the selected system, then
    /// apply `overrides` and validate.
    pub fn load(text: Option<&str>, overrides: &Overrides) -> Result<Self> {
        let mut user = match text {
            Some(t) => serde_json::from_str::<Value>(t).map_err(|e| Error::Parse {
                line: e.line(),
                message: e.to_string(),
            })?,
            None => Value::Object(Default::default()),
        };
        if !user.is_object() {
            return Err(Error::Parse {
                line: 1,
                message: "configuration must be a JSON object".into(),
            });
        }
        if let Some(v) = user.get("version") {
            if v.as_u64() != Some(SCHEMA_VERSION as u64) {
                return Err(Error::invalid("version", format!("unsupported schema version {v}")));
            }
        }
        let kind = match overrides.system {
            Some(k) => {
                if let Some(sys) = user.get_mut("system").and_then(Value::as_object_mut) {
                    sys.remove("kind");
                }
                k
            }
            None => match user.pointer("/system/kind") {
                Some(v) => serde_json::from_value(v.clone())
                    .map_err(|e| Error::invalid("system.kind", e.to_string()))?,
                None => SystemKind::TorusRotation,
            },
        };
        let mut merged = serde_json::to_value(Self::defaults(kind)).expect("defaults serialize");
        merge(&mut merged, user);
        if let Some(e) = overrides.embedding {
            let current = merged.pointer("/embedding/kind").and_then(Value::as_str);
            let wanted = serde_json::to_value(e).expect("kind serializes");
            if current != wanted.as_str() {
                merged["embedding"] = serde_json::to_value(EmbeddingConfig::default_for(e)).expect("serializes");
                if e == EmbeddingKind::Reservoir {
                    merged["hypothesis"] = serde_json::to_value(HypothesisConfig::Affine).expect("serializes");
                }
            }
        }
        if let Some(s) = overrides.seed {
            merged["seed"] = s.into();
        }
        if let Some(o) = &overrides.out {
            merged["out"] = o.to_string_lossy().into_owned().into();
        }
        let config: Self = serde_path_to_error::deserialize(merged).map_err(|e| {
            let path = e.path().to_string();
            Error::invalid(path, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn measurement_map(&self) -> MeasurementMap {
        MeasurementMap::new(self.measurement.clone())
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::invalid("version", format!("unsupported schema version {}", self.version)));
        }
        self.system.validate()?;
        let dim = self.system.kind.state_dim();
        self.measurement_map().validate(dim)?;
        let positive = |field: &str, v: usize| {
            if v == 0 {
                Err(Error::invalid(field, "must be positive"))
            } else {
                Ok(())
            }
        };
        let washout = match &self.embedding {
            EmbeddingConfig::Delay { q } => {
                positive("embedding.q", *q)?;
                *q
            }
            EmbeddingConfig::Reservoir { dim, lambda_c } => {
                positive("embedding.dim", *dim)?;
                if !(*lambda_c > 0.0 && *lambda_c < 1.0) {
                    return Err(Error::invalid("embedding.lambda_c", "must lie in (0, 1)"));
                }
                washout_for(*lambda_c)
            }
        };
        match &self.hypothesis {
            HypothesisConfig::Affine => {}
            HypothesisConfig::Trigonometric { order } => {
                positive("hypothesis.order", *order)?;
                if *order > 1 && !matches!(self.measurement, Measurement::Trigonometric { .. }) {
                    return Err(Error::invalid("hypothesis.kind", "higher harmonics need a trigonometric measurement"));
                }
                if *order > 1 && self.embedding.kind() != EmbeddingKind::Delay {
                    return Err(Error::invalid("hypothesis.kind", "higher harmonics need a delay embedding"));
                }
            }
            HypothesisConfig::Gaussian {
                centers,
                bandwidth_scale,
                ..
            } => {
                positive("hypothesis.centers", *centers)?;
                if !(*bandwidth_scale > 0.0 && bandwidth_scale.is_finite()) {
                    return Err(Error::invalid("hypothesis.bandwidth_scale", "must be positive"));
                }
            }
        }
        if let Some(r) = self.ridge {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::invalid("ridge", "must be a finite nonnegative number"));
            }
        }
        if self.training <= washout + 10 {
            return Err(Error::invalid("training", format!("must exceed the embedding washout {washout} by 10")));
        }
        if self.training < 2 * self.n_max {
            return Err(Error::invalid("training", "must be at least twice n_max"));
        }
        positive("ensemble", self.ensemble)?;
        positive("stride", self.stride)?;
        positive("n_max", self.n_max)?;
        if !(self.cap > 0.0) {
            return Err(Error::invalid("cap", "must be positive"));
        }
        if self.lyapunov.steps < 1000 {
            return Err(Error::invalid("lyapunov.steps", "must be at least 1000"));
        }
        if let Some(p) = self.lyapunov.exponents {
            if p == 0 || p > dim {
                return Err(Error::invalid("lyapunov.exponents", format!("must lie in 1..={dim}")));
            }
        }
        if self.lyapunov.stability_gap && self.lyapunov.gap_steps < 1000 {
            return Err(Error::invalid("lyapunov.gap_steps", "must be at least 1000"));
        }
        let m = &self.markov;
        if m.coordinates.is_empty() || m.coordinates.iter().any(|c| *c >= dim) {
            return Err(Error::invalid(
                "markov.coordinates",
                format!("must be a non-empty list of coordinates below {dim}"),
            ));
        }
        if m.resolution.len() != m.coordinates.len() {
            return Err(Error::invalid("markov.resolution", "needs one entry per coordinate"));
        }
        if let Some(r) = m.resolution.iter().find(|r| **r < 2) {
            return Err(Error::invalid("markov.resolution", format!("must be at least 2, got {r}")));
        }
        if m.steps < 2 {
            return Err(Error::invalid("markov.steps", "must be at least 2"));
        }
        if !(m.tol > 0.0) {
            return Err(Error::invalid("markov.tol", "must be positive"));
        }
        positive("markov.max_iters", m.max_iters)?;
        let c = &self.checks;
        if c.cocycle_orbit < 2 {
            return Err(Error::invalid("checks.cocycle_orbit", "must be at least 2"));
        }
        if c.unitarity_steps <= 2 * c.unitarity_lags {
            return Err(Error::invalid("checks.unitarity_steps", "must exceed twice the lag count"));
        }
        Ok(())
    }
}

/// Recursive object merge; tagged objects whose `kind` differs are replaced.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            let retag = matches!((b.get("kind"), o.get("kind")), (Some(x), Some(y)) if x != y);
            if retag {
                *b = o;
                return;
            }
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
