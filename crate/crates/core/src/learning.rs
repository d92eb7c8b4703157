//! Least-squares estimation of the feedback functions `ŵ_k` over a finite
//! hypothesis space that always contains the constant function.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::embedding::EmbeddedSeries;
use crate::error::{check_dim, Error, Result};
use crate::numerics::{rows_to_matrix, spectral_norm};

/// Angle extracted from a designated `(cos, sin)` coordinate pair.
#[derive(Clone, Debug, PartialEq)]
pub struct AnglePair {
    pub cos_index: usize,
    pub sin_index: usize,
    /// Point of the `(cos, sin)` plane that corresponds to the raw origin.
    pub origin: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum HypothesisKind {
    /// Constant plus the coordinates of `y`.
    Affine,
    /// Constant, the coordinates of `y`, and harmonics `2..=order` of the
    /// designated angles. Order 1 coincides with the affine space.
    Trigonometric { order: usize, pairs: Vec<AnglePair> },
    /// Constant, Gaussian bumps at the centers and optionally the coordinates.
    GaussianKernel {
        centers: Vec<DVector<f64>>,
        bandwidth: f64,
        affine: bool,
    },
}

/// A finite set of feature maps `h_1 ≡ 1, h_2, …, h_m` on `ℝ^L`.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisSpace {
    pub kind: HypothesisKind,
    pub input_dim: usize,
}

impl HypothesisSpace {
    pub fn affine(input_dim: usize) -> Self {
        Self {
            kind: HypothesisKind::Affine,
            input_dim,
        }
    }

    pub fn trigonometric(input_dim: usize, order: usize, pairs: Vec<AnglePair>) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("hypothesis.order", "must be at least 1"));
        }
        for p in &pairs {
            if p.cos_index >= input_dim || p.sin_index >= input_dim {
                return Err(Error::invalid("hypothesis.pairs", "index outside the embedding"));
            }
        }
        Ok(Self {
            kind: HypothesisKind::Trigonometric { order, pairs },
            input_dim,
        })
    }

    /// Gaussian features centered on an even subsample of `inputs`, with the
    /// median pairwise distance of up to 1000 inputs as bandwidth.
    pub fn gaussian_from_data(
        inputs: &[DVector<f64>],
        max_centers: usize,
        bandwidth_scale: f64,
        affine: bool,
    ) -> Result<Self> {
        if inputs.len() < 2 {
            return Err(Error::SeriesTooShort {
                needed: 2,
                actual: inputs.len(),
            });
        }
        if max_centers == 0 {
            return Err(Error::invalid("hypothesis.centers", "must be at least 1"));
        }
        if !(bandwidth_scale > 0.0 && bandwidth_scale.is_finite()) {
            return Err(Error::invalid("hypothesis.bandwidth_scale", "must be positive"));
        }
        let centers = even_subsample(inputs, max_centers.min(2000));
        let probe = even_subsample(inputs, 1000);
        let mut dists = Vec::with_capacity(probe.len() * probe.len() / 2);
        for i in 0..probe.len() {
            for j in i + 1..probe.len() {
                dists.push((&probe[i] - &probe[j]).norm());
            }
        }
        dists.sort_by(|a, b| a.total_cmp(b));
        let median = dists[dists.len() / 2];
        if !(median > 0.0) {
            return Err(Error::invalid("hypothesis", "inputs are all identical"));
        }
        Ok(Self {
            kind: HypothesisKind::GaussianKernel {
                centers,
                bandwidth: median * bandwidth_scale,
                affine,
            },
            input_dim: inputs[0].len(),
        })
    }

    /// Number of features `m`.
    pub fn size(&self) -> usize {
        let l = self.input_dim;
        match &self.kind {
            HypothesisKind::Affine => 1 + l,
            HypothesisKind::Trigonometric { order, pairs } => 1 + l + 2 * (order - 1) * pairs.len(),
            HypothesisKind::GaussianKernel {
                centers, affine, ..
            } => 1 + centers.len() + if *affine { l } else { 0 },
        }
    }

    /// Feature vector `h(y)`.
    pub fn features(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.input_dim, y.len())?;
        let mut h = DVector::zeros(self.size());
        self.fill_features(y, h.as_mut_slice());
        Ok(h)
    }

    fn fill_features(&self, y: &DVector<f64>, out: &mut [f64]) {
        let l = self.input_dim;
        out[0] = 1.0;
        match &self.kind {
            HypothesisKind::Affine => out[1..=l].copy_from_slice(y.as_slice()),
            HypothesisKind::Trigonometric { order, pairs } => {
                out[1..=l].copy_from_slice(y.as_slice());
                let mut k = 1 + l;
                for p in pairs {
                    let theta = pair_angle(p, y);
                    for j in 2..=*order {
                        let (s, c) = (j as f64 * theta).sin_cos();
                        out[k] = c;
                        out[k + 1] = s;
                        k += 2;
                    }
                }
            }
            HypothesisKind::GaussianKernel {
                centers,
                bandwidth,
                affine,
            } => {
                let inv = 1.0 / (2.0 * bandwidth * bandwidth);
                for (i, c) in centers.iter().enumerate() {
                    out[1 + i] = (-(y - c).norm_squared() * inv).exp();
                }
                if *affine {
                    out[1 + centers.len()..].copy_from_slice(y.as_slice());
                }
            }
        }
    }

    /// Rows `h(y_i)ᵀ` stacked into an `n x m` matrix.
    pub fn design_matrix(&self, ys: &[DVector<f64>]) -> Result<DMatrix<f64>> {
        let m = self.size();
        for y in ys {
            check_dim(self.input_dim, y.len())?;
        }
        if let HypothesisKind::GaussianKernel {
            centers,
            bandwidth,
            affine,
        } = &self.kind
        {
            // squared distances through one product, ‖y‖² + ‖c‖² − 2 y·c
            let yv = rows_to_matrix(ys);
            let cv = rows_to_matrix(centers);
            let cross = &yv * cv.transpose();
            let yn: Vec<f64> = ys.iter().map(|y| y.norm_squared()).collect();
            let cn: Vec<f64> = centers.iter().map(|c| c.norm_squared()).collect();
            let inv = 1.0 / (2.0 * bandwidth * bandwidth);
            let mut x = DMatrix::zeros(ys.len(), m);
            for i in 0..ys.len() {
                x[(i, 0)] = 1.0;
                for j in 0..centers.len() {
                    let d2 = (yn[i] + cn[j] - 2.0 * cross[(i, j)]).max(0.0);
                    x[(i, 1 + j)] = (-d2 * inv).exp();
                }
                if *affine {
                    for c in 0..self.input_dim {
                        x[(i, 1 + centers.len() + c)] = ys[i][c];
                    }
                }
            }
            return Ok(x);
        }
        let mut x = DMatrix::zeros(ys.len(), m);
        let mut row = vec![0.0; m];
        for (i, y) in ys.iter().enumerate() {
            self.fill_features(y, &mut row);
            for (j, v) in row.iter().enumerate() {
                x[(i, j)] = *v;
            }
        }
        Ok(x)
    }

    /// Jacobian of the feature map, `m x L`.
    pub fn feature_jacobian(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.input_dim, y.len())?;
        let l = self.input_dim;
        let mut j = DMatrix::zeros(self.size(), l);
        match &self.kind {
            HypothesisKind::Affine => {
                for c in 0..l {
                    j[(1 + c, c)] = 1.0;
                }
            }
            HypothesisKind::Trigonometric { order, pairs } => {
                for c in 0..l {
                    j[(1 + c, c)] = 1.0;
                }
                let mut k = 1 + l;
                for p in pairs {
                    if *order < 2 {
                        break;
                    }
                    let x = y[p.cos_index] - p.origin.0;
                    let s = y[p.sin_index] - p.origin.1;
                    let r2 = x * x + s * s;
                    if !(r2 > 1e-12) {
                        return Err(Error::NotDifferentiable);
                    }
                    let theta = s.atan2(x);
                    let (dx, ds) = (-s / r2, x / r2);
                    for o in 2..=*order {
                        let of = o as f64;
                        let (sn, cs) = (of * theta).sin_cos();
                        j[(k, p.cos_index)] += -of * sn * dx;
                        j[(k, p.sin_index)] += -of * sn * ds;
                        j[(k + 1, p.cos_index)] += of * cs * dx;
                        j[(k + 1, p.sin_index)] += of * cs * ds;
                        k += 2;
                    }
                }
            }
            HypothesisKind::GaussianKernel {
                centers,
                bandwidth,
                affine,
            } => {
                let inv = 1.0 / (2.0 * bandwidth * bandwidth);
                for (i, c) in centers.iter().enumerate() {
                    let diff = y - c;
                    let v = (-diff.norm_squared() * inv).exp();
                    for col in 0..l {
                        j[(1 + i, col)] = -2.0 * inv * v * diff[col];
                    }
                }
                if *affine {
                    for c in 0..l {
                        j[(1 + centers.len() + c, c)] = 1.0;
                    }
                }
            }
        }
        Ok(j)
    }
}

fn pair_angle(p: &AnglePair, y: &DVector<f64>) -> f64 {
    (y[p.sin_index] - p.origin.1).atan2(y[p.cos_index] - p.origin.0)
}

fn even_subsample(xs: &[DVector<f64>], k: usize) -> Vec<DVector<f64>> {
    if xs.len() <= k {
        return xs.to_vec();
    }
    (0..k).map(|i| xs[i * xs.len() / k].clone()).collect()
}

/// A fitted `ŵ_k(y) = C h(y)`.
#[derive(Clone, Debug)]
pub struct FeedbackModel {
    pub horizon: usize,
    /// `d x m` coefficient matrix.
    pub coefficients: DMatrix<f64>,
    pub space: Arc<HypothesisSpace>,
    /// RMS training residual.
    pub delta: f64,
    /// Largest `‖C Dh(y)‖₂` over sampled training inputs; a lower bound on
    /// the supremum of `‖Dŵ‖`.
    pub derivative_norm: f64,
    pub ridge: f64,
    /// Residual norm per training pair, when retained.
    pub residual_norms: Vec<f64>,
}

impl FeedbackModel {
    pub fn output_dim(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn predict(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.coefficients * self.space.features(y)?)
    }

    /// `Dŵ(y) = C Dh(y)`, `d x L`.
    pub fn jacobian(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(&self.coefficients * self.space.feature_jacobian(y)?)
    }

    /// Model with the same space and zero coefficients.
    pub fn zero(space: Arc<HypothesisSpace>, output_dim: usize, horizon: usize) -> Self {
        let m = space.size();
        Self {
            horizon,
            coefficients: DMatrix::zeros(output_dim, m),
            space,
            delta: 0.0,
            derivative_norm: 0.0,
            ridge: 0.0,
            residual_norms: Vec::new(),
        }
    }
}

/// Inputs and targets of a regression problem.
pub type Pairs = (Vec<DVector<f64>>, Vec<DVector<f64>>);

/// Training pairs `(Φ(ω_n), ω̂_{n+k})` for `n` in `range`.
pub fn training_pairs(
    embedded: &EmbeddedSeries,
    measured: &[DVector<f64>],
    range: Range<usize>,
    k: usize,
) -> Result<Pairs> {
    if range.start < embedded.start || range.end > embedded.end() {
        return Err(Error::invalid(
            "training range",
            format!(
                "{}..{} is outside the embedded span {}..{}",
                range.start,
                range.end,
                embedded.start,
                embedded.end()
            ),
        ));
    }
    if range.end + k > measured.len() {
        return Err(Error::SeriesTooShort {
            needed: range.end + k,
            actual: measured.len(),
        });
    }
    let inputs = range.clone().map(|n| embedded.at(n).cloned().unwrap()).collect();
    let targets = range.map(|n| measured[n + k].clone()).collect();
    Ok((inputs, targets))
}

/// Regularized normal equations of one design matrix, factored once.
struct NormalSystem {
    x: DMatrix<f64>,
    xt: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    ridge: f64,
}

impl NormalSystem {
    fn new(space: &HypothesisSpace, inputs: &[DVector<f64>], ridge: Option<f64>) -> Result<Self> {
        let m = space.size();
        let n = inputs.len();
        if n < m {
            return Err(Error::SeriesTooShort { needed: m, actual: n });
        }
        if let Some(r) = ridge {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::invalid("ridge", "must be finite and non-negative"));
            }
        }
        let x = space.design_matrix(inputs)?;
        let xt = x.transpose();
        let mut g = &xt * &x;
        g /= n as f64;
        let ridge = ridge.unwrap_or_else(|| 1e-8 * g.trace() / m as f64);
        for i in 1..m {
            g[(i, i)] += ridge;
        }
        let chol = Cholesky::new(g).ok_or_else(|| {
            Error::IllPosedFit("normal equations are not positive definite; set ridge > 0".into())
        })?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        if ridge == 0.0 && lo < 1e-7 * hi {
            return Err(Error::IllPosedFit(
                "rank-deficient normal equations; set ridge > 0".into(),
            ));
        }
        Ok(Self { x, xt, chol, ridge })
    }

    /// Coefficients `Cᵀ` (`m x k`) for a target block `Y` (`n x k`).
    fn solve(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut b = &self.xt * y;
        b /= self.x.nrows() as f64;
        self.chol.solve(&b)
    }
}

fn derivative_norm(
    space: &HypothesisSpace,
    coefficients: &DMatrix<f64>,
    inputs: &[DVector<f64>],
    samples: usize,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for y in even_subsample(inputs, samples.max(1)) {
        let j = coefficients * space.feature_jacobian(&y)?;
        worst = worst.max(spectral_norm(&j));
    }
    Ok(worst)
}

/// Minimize `(1/N) Σ ‖ŵ(y_n) − t_n‖² + ridge ‖C‖²` (intercept unpenalized).
/// `ridge = None` selects `1e-8 · trace(G) / m`.
pub fn fit_feedback(
    inputs: &[DVector<f64>],
    targets: &[DVector<f64>],
    horizon: usize,
    space: Arc<HypothesisSpace>,
    ridge: Option<f64>,
) -> Result<FeedbackModel> {
    check_dim(inputs.len(), targets.len())?;
    if targets.is_empty() {
        return Err(Error::Empty("training targets"));
    }
    let sys = NormalSystem::new(&space, inputs, ridge)?;
    let y = rows_to_matrix(targets);
    let ct = sys.solve(&y);
    let resid = &sys.x * &ct - &y;
    let residual_norms: Vec<f64> = resid.row_iter().map(|r| r.norm()).collect();
    let delta = (resid.norm_squared() / targets.len() as f64).sqrt();
    let coefficients = ct.transpose();
    let dnorm = derivative_norm(&space, &coefficients, inputs, 1000)?;
    Ok(FeedbackModel {
        horizon,
        coefficients,
        space,
        delta,
        derivative_norm: dnorm,
        ridge: sys.ridge,
        residual_norms,
    })
}

/// One model per horizon in `horizons`, sharing a single factorization.
/// `future[i + k]` is the horizon-`k` target of `inputs[i]`.
pub fn fit_horizons(
    inputs: &[DVector<f64>],
    future: &[DVector<f64>],
    horizons: Range<usize>,
    space: Arc<HypothesisSpace>,
    ridge: Option<f64>,
    derivative_samples: usize,
) -> Result<Vec<FeedbackModel>> {
    if inputs.is_empty() {
        return Err(Error::Empty("training inputs"));
    }
    if horizons.is_empty() {
        return Ok(Vec::new());
    }
    let n = inputs.len();
    let needed = n + horizons.end - 1;
    if future.len() < needed {
        return Err(Error::SeriesTooShort {
            needed,
            actual: future.len(),
        });
    }
    let d = future[0].len();
    let sys = NormalSystem::new(&space, inputs, ridge)?;
    let all: Vec<usize> = horizons.collect();
    let mut models = Vec::with_capacity(all.len());
    // blocks of horizons keep the stacked targets near a few tens of MB
    let block = (4_000_000 / (n * d).max(1)).clamp(1, 256);
    for chunk in all.chunks(block) {
        let y = DMatrix::from_fn(n, d * chunk.len(), |i, c| future[i + chunk[c / d]][c % d]);
        let ct = sys.solve(&y);
        let resid = &sys.x * &ct - &y;
        for (b, &k) in chunk.iter().enumerate() {
            let r = resid.columns(b * d, d);
            let coefficients = ct.columns(b * d, d).transpose();
            let dnorm = derivative_norm(&space, &coefficients, inputs, derivative_samples)?;
            models.push(FeedbackModel {
                horizon: k,
                coefficients,
                space: Arc::clone(&space),
                delta: (r.norm_squared() / n as f64).sqrt(),
                derivative_norm: dnorm,
                ridge: sys.ridge,
                residual_norms: Vec::new(),
            });
        }
    }
    Ok(models)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TradeoffEntry {
    pub size: usize,
    pub ridge: f64,
    pub delta: f64,
    pub derivative_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TradeoffScan {
    pub entries: Vec<TradeoffEntry>,
    /// For nested spaces: whether `δ` never increases along the family.
    pub delta_nonincreasing: Option<bool>,
    /// For ridge grids: whether `‖Dŵ‖` never increases with the ridge.
    pub derivative_nonincreasing: Option<bool>,
}

pub enum ScanFamily {
    /// Nested spaces listed from smallest to largest, fitted at one ridge.
    Nested {
        spaces: Vec<HypothesisSpace>,
        ridge: Option<f64>,
    },
    /// One space over increasing ridge values.
    Ridge {
        space: HypothesisSpace,
        ridges: Vec<f64>,
    },
}

fn nonincreasing(xs: impl Iterator<Item = f64>, slack: f64) -> bool {
    let v: Vec<f64> = xs.collect();
    v.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack) + slack)
}

/// Projection error and derivative norm across a family of fits.
pub fn tradeoff_scan(
    inputs: &[DVector<f64>],
    targets: &[DVector<f64>],
    family: ScanFamily,
) -> Result<TradeoffScan> {
    let mut entries = Vec::new();
    let nested = matches!(family, ScanFamily::Nested { .. });
    match family {
        ScanFamily::Nested { spaces, ridge } => {
            for s in spaces {
                let m = fit_feedback(inputs, targets, 1, Arc::new(s), ridge)?;
                entries.push(TradeoffEntry {
                    size: m.space.size(),
                    ridge: m.ridge,
                    delta: m.delta,
                    derivative_norm: m.derivative_norm,
                });
            }
        }
        ScanFamily::Ridge { space, ridges } => {
            let space = Arc::new(space);
            for r in ridges {
                let m = fit_feedback(inputs, targets, 1, Arc::clone(&space), Some(r))?;
                entries.push(TradeoffEntry {
                    size: space.size(),
                    ridge: r,
                    delta: m.delta,
                    derivative_norm: m.derivative_norm,
                });
            }
        }
    }
    let (mut dn, mut gn) = (None, None);
    if entries.len() >= 2 {
        if nested {
            dn = Some(nonincreasing(entries.iter().map(|e| e.delta), 1e-9));
        } else {
            gn = Some(nonincreasing(entries.iter().map(|e| e.derivative_norm), 1e-9));
        }
    }
    Ok(TradeoffScan {
        entries,
        delta_nonincreasing: dn,
        derivative_nonincreasing: gn,
    })
}
