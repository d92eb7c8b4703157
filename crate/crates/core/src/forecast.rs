//! Direct and iterative forecasts, their error curves, and the correlation
//! diagnostics that predict them.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddedSeries, Embedder};
use crate::error::{check_dim, Error, Result};
use crate::learning::FeedbackModel;
use crate::numerics::{linear_fit, mean, rms_norm};

/// `𝒯̂(u, y) = (ŵ(y), g(u, y))` on `ℝ^d × ℝ^L`.
#[derive(Clone, Debug)]
pub struct ReconstructedMap {
    pub model: FeedbackModel,
    pub embedder: Embedder,
}

/// States `(u_n, y_n)` of an iterated reconstruction.
#[derive(Clone, Debug, Default)]
pub struct Rollout {
    pub u: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    /// First step whose state was non-finite or above the cap.
    pub diverged_at: Option<usize>,
}

impl ReconstructedMap {
    pub fn new(model: FeedbackModel, embedder: Embedder) -> Result<Self> {
        check_dim(embedder.dim(), model.space.input_dim)?;
        check_dim(embedder.input_dim(), model.output_dim())?;
        Ok(Self { model, embedder })
    }

    pub fn output_dim(&self) -> usize {
        self.model.output_dim()
    }

    pub fn step(&self, u: &DVector<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        Ok((self.model.predict(y)?, self.embedder.g(u, y)?))
    }

    /// `n` iterations from `(u_0, y_0)`. Iteration stops when a state is
    /// non-finite or its norm exceeds `cap`.
    pub fn iterate(&self, u0: &DVector<f64>, y0: &DVector<f64>, n: usize, cap: f64) -> Result<Rollout> {
        check_dim(self.output_dim(), u0.len())?;
        check_dim(self.embedder.dim(), y0.len())?;
        let mut out = Rollout {
            u: vec![u0.clone()],
            y: vec![y0.clone()],
            diverged_at: None,
        };
        for k in 1..=n {
            let (u, y) = self.step(&out.u[k - 1], &out.y[k - 1])?;
            let bad = !u.iter().chain(y.iter()).all(|v| v.is_finite()) || u.norm() > cap;
            if bad {
                out.diverged_at = Some(k);
                break;
            }
            out.u.push(u);
            out.y.push(y);
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForecastMode {
    Direct,
    Iterative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub mode: ForecastMode,
    /// RMS error for horizons `0..=n_max`.
    pub values: Vec<f64>,
    pub ensemble: usize,
    /// Test states whose rollout was saturated at the cap.
    pub diverged: usize,
    pub first_divergence: Option<usize>,
    pub bound: Option<Vec<f64>>,
}

impl ErrorCurve {
    pub fn n_max(&self) -> usize {
        self.values.len().saturating_sub(1)
    }
}

/// `count` test starts spaced by `stride` from `available.start`, each with
/// `n_max` future samples inside `available`.
pub fn select_test_starts(available: Range<usize>, n_max: usize, count: usize, stride: usize) -> Result<Vec<usize>> {
    if count == 0 || stride == 0 {
        return Err(Error::invalid("ensemble", "size and stride must be positive"));
    }
    let last = available.start + (count - 1) * stride;
    if last + n_max >= available.end {
        return Err(Error::SeriesTooShort {
            needed: last + n_max + 1,
            actual: available.end,
        });
    }
    Ok((0..count).map(|i| available.start + i * stride).collect())
}

/// Iterative error: RMS over test starts `s` of `‖ω̂_{s+k} − u_k‖` with
/// `z_0 = (ω̂_s, Φ(ω_s))`. Divergent rollouts contribute `cap` from the
/// divergence horizon on.
pub fn error_iterative(
    map: &ReconstructedMap,
    lift: &EmbeddedSeries,
    measured: &[DVector<f64>],
    tests: &[usize],
    n_max: usize,
    cap: f64,
) -> Result<ErrorCurve> {
    if tests.is_empty() {
        return Err(Error::Empty("test ensemble"));
    }
    let mut sq = vec![0.0; n_max + 1];
    let mut diverged = 0;
    let mut first: Option<usize> = None;
    for &s in tests {
        let y0 = lift.at(s).ok_or_else(|| Error::invalid("test start", format!("{s} has no embedded point")))?;
        if s + n_max >= measured.len() {
            return Err(Error::SeriesTooShort {
                needed: s + n_max + 1,
                actual: measured.len(),
            });
        }
        let r = map.iterate(&measured[s], y0, n_max, cap)?;
        for (k, acc) in sq.iter_mut().enumerate() {
            let e = match r.u.get(k) {
                Some(u) => (&measured[s + k] - u).norm().min(cap),
                None => cap,
            };
            *acc += e * e;
        }
        if let Some(k) = r.diverged_at {
            diverged += 1;
            first = Some(first.map_or(k, |f| f.min(k)));
        }
    }
    let n = tests.len() as f64;
    Ok(ErrorCurve {
        mode: ForecastMode::Iterative,
        values: sq.into_iter().map(|v| (v / n).sqrt()).collect(),
        ensemble: tests.len(),
        diverged,
        first_divergence: first,
        bound: None,
    })
}

/// Direct error: RMS over test starts of `‖ω̂_{s+k} − ŵ_k(Φ(ω_s))‖`, with
/// `models[k]` the horizon-`k` fit.
pub fn error_direct(
    models: &[FeedbackModel],
    lift: &EmbeddedSeries,
    measured: &[DVector<f64>],
    tests: &[usize],
) -> Result<ErrorCurve> {
    if tests.is_empty() {
        return Err(Error::Empty("test ensemble"));
    }
    if models.is_empty() {
        return Err(Error::Empty("direct models"));
    }
    for (k, m) in models.iter().enumerate() {
        if m.horizon != k {
            return Err(Error::invalid("direct models", format!("entry {k} has horizon {}", m.horizon)));
        }
    }
    let n_max = models.len() - 1;
    let mut points = Vec::with_capacity(tests.len());
    for &s in tests {
        points.push(
            lift.at(s)
                .ok_or_else(|| Error::invalid("test start", format!("{s} has no embedded point")))?
                .clone(),
        );
        if s + n_max >= measured.len() {
            return Err(Error::SeriesTooShort {
                needed: s + n_max + 1,
                actual: measured.len(),
            });
        }
    }
    let shared = models.iter().all(|m| Arc::ptr_eq(&m.space, &models[0].space));
    let h = if shared {
        Some(models[0].space.design_matrix(&points)?)
    } else {
        None
    };
    let mut values = Vec::with_capacity(models.len());
    for (k, m) in models.iter().enumerate() {
        let own;
        let hk = match &h {
            Some(h) => h,
            None => {
                own = m.space.design_matrix(&points)?;
                &own
            }
        };
        let pred = hk * m.coefficients.transpose();
        let mut acc = 0.0;
        for (i, &s) in tests.iter().enumerate() {
            let diff = pred.row(i).transpose() - &measured[s + k];
            acc += diff.norm_squared();
        }
        values.push((acc / tests.len() as f64).sqrt());
    }
    Ok(ErrorCurve {
        mode: ForecastMode::Direct,
        values,
        ensemble: tests.len(),
        diverged: 0,
        first_divergence: None,
        bound: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutocorrelationCurve {
    /// `AutCor(n)` for `n = 0..=n_max`.
    pub values: Vec<f64>,
}

/// `AutCor(n) = ⟨U^n ψ, ψ⟩ / ‖ψ‖²` by time averages; vector series use the
/// Euclidean inner product.
pub fn autocorrelation(series: &[DVector<f64>], n_max: usize) -> Result<AutocorrelationCurve> {
    if series.len() < 2 * n_max.max(1) {
        return Err(Error::SeriesTooShort {
            needed: 2 * n_max.max(1),
            actual: series.len(),
        });
    }
    let n = series.len();
    let var = series.iter().map(|x| x.norm_squared()).sum::<f64>() / n as f64;
    if !(var > 0.0) {
        return Err(Error::invalid("series", "has zero norm"));
    }
    let values = (0..=n_max)
        .map(|lag| {
            let s: f64 = (0..n - lag).map(|t| series[t + lag].dot(&series[t])).sum();
            (s / (n - lag) as f64 / var).clamp(-1.0, 1.0)
        })
        .collect();
    Ok(AutocorrelationCurve { values })
}

pub fn autocorrelation_scalar(series: &[f64], n_max: usize) -> Result<AutocorrelationCurve> {
    let v: Vec<DVector<f64>> = series.iter().map(|&x| DVector::from_element(1, x)).collect();
    autocorrelation(&v, n_max)
}

/// `‖φ‖ · sqrt(1 − AutCor(n)²)`.
pub fn direct_bound(curve: &AutocorrelationCurve, phi_norm: f64) -> Vec<f64> {
    curve
        .values
        .iter()
        .map(|a| phi_norm * (1.0 - a * a).max(0.0).sqrt())
        .collect()
}

/// Horizons where `error > bound + slack`.
pub fn bound_violations(errors: &[f64], bound: &[f64], slack: f64) -> Vec<usize> {
    errors
        .iter()
        .zip(bound)
        .enumerate()
        .filter(|(_, (e, b))| **e > **b + slack)
        .map(|(k, _)| k)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    /// Per-step exponential rate.
    pub slope: f64,
    pub intercept: f64,
    /// Horizons `[first, last]` of the fit window.
    pub window: (usize, usize),
}

/// Least-squares line through `ln error(n)` from horizon 1 to the first
/// horizon above half the plateau (or the whole curve without a plateau).
/// Zero errors are skipped.
pub fn growth_slope(values: &[f64], plateau: Option<f64>) -> Option<GrowthFit> {
    if values.len() < 3 {
        return None;
    }
    let last = match plateau {
        Some(p) => values
            .iter()
            .enumerate()
            .skip(1)
            .find(|(_, v)| **v > 0.5 * p)
            .map_or(values.len() - 1, |(k, _)| k),
        None => values.len() - 1,
    };
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (k, v) in values.iter().enumerate().take(last + 1).skip(1) {
        if *v > 0.0 && v.is_finite() {
            xs.push(k as f64);
            ys.push(v.ln());
        }
    }
    let (a, b) = linear_fit(&xs, &ys)?;
    Some(GrowthFit {
        slope: b,
        intercept: a,
        window: (1, last),
    })
}

/// Smallest `c` with `ln error(n) ≤ c + rate·n` over the window.
pub fn minimal_offset(values: &[f64], rate: f64, window: (usize, usize)) -> f64 {
    (window.0..=window.1.min(values.len().saturating_sub(1)))
        .filter(|&k| values[k] > 0.0)
        .map(|k| values[k].ln() - rate * k as f64)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Mean of the second half of `[k₀, n_max]`, with `k₀` the first horizon
/// whose error exceeds `threshold` (0 if none does).
pub fn plateau_estimate(values: &[f64], threshold: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let n_max = values.len() - 1;
    let k0 = values.iter().position(|v| *v > threshold).unwrap_or(0);
    let from = k0 + (n_max - k0) / 2;
    mean(&values[from..])
}

/// `|RMS(ψ∘f^n) − RMS(ψ)| / RMS(ψ)` for `n = 0..=n_max`, with both RMS values
/// over windows of the same length.
pub fn unitarity_deviation(series: &[DVector<f64>], n_max: usize) -> Result<Vec<f64>> {
    if series.len() <= n_max + 1 {
        return Err(Error::SeriesTooShort {
            needed: n_max + 2,
            actual: series.len(),
        });
    }
    let w = series.len() - n_max;
    let base = rms_norm(&series[..w]);
    if !(base > 0.0) {
        return Err(Error::invalid("series", "has zero norm"));
    }
    Ok((0..=n_max)
        .map(|n| (rms_norm(&series[n..n + w]) - base).abs() / base)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::DelayEmbedder;
    use crate::learning::HypothesisSpace;

    fn zero_map(d: usize, q: usize) -> ReconstructedMap {
        let e = DelayEmbedder::new(q, d).unwrap();
        let m = FeedbackModel::zero(Arc::new(HypothesisSpace::affine(q * d)), d, 1);
        ReconstructedMap::new(m, Embedder::Delay(e)).unwrap()
    }

    #[test]
    fn zero_model_rollout() {
        let map = zero_map(2, 3);
        let r = map
            .iterate(&DVector::from_vec(vec![1.0, 2.0]), &DVector::from_element(6, 0.5), 10, 1e3)
            .unwrap();
        assert!(r.u[1..].iter().all(|u| u.iter().all(|v| *v == 0.0)));
        for n in 0..10 {
            assert_eq!(r.y[n + 1].rows(0, 2), r.u[n].rows(0, 2));
        }
    }

    #[test]
    fn bound_edge_cases() {
        let c = AutocorrelationCurve {
            values: vec![1.0, 0.0, -1.0],
        };
        assert_eq!(direct_bound(&c, 1.0), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn autocorrelation_lag_zero_is_one() {
        let s: Vec<f64> = (0..200).map(|i| (0.3 * i as f64).sin()).collect();
        let a = autocorrelation_scalar(&s, 50).unwrap();
        assert!((a.values[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn autocorrelation_rejects_short_series() {
        assert!(autocorrelation_scalar(&[1.0, 2.0, 3.0], 2).is_err());
    }

    #[test]
    fn growth_slope_of_exponential() {
        let v: Vec<f64> = (0..100).map(|k| 1e-6 * (0.05 * k as f64).exp()).collect();
        let g = growth_slope(&v, None).unwrap();
        assert!((g.slope - 0.05).abs() < 1e-10);
        assert!(minimal_offset(&v, 0.05, g.window) - (1e-6f64).ln() < 1e-9);
    }

    #[test]
    fn growth_window_stops_at_half_plateau() {
        let v: Vec<f64> = (0..100).map(|k| (0.1 * k as f64).exp().min(50.0) * 1e-2).collect();
        let g = growth_slope(&v, Some(0.5)).unwrap();
        assert_eq!(g.window.1, 33);
        assert!((g.slope - 0.1).abs() < 1e-10);
    }

    #[test]
    fn plateau_of_saturating_curve() {
        let v: Vec<f64> = (0..=100).map(|k| if k < 20 { 0.01 * k as f64 } else { 1.4 }).collect();
        assert!((plateau_estimate(&v, 1.0) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn test_starts_fit_inside_span() {
        let s = select_test_starts(100..200, 20, 5, 10).unwrap();
        assert_eq!(s, vec![100, 110, 120, 130, 140]);
        assert!(select_test_starts(100..150, 20, 5, 10).is_err());
    }
}
