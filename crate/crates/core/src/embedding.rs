//! Embeddings `Φ` of the measured series and the maps `g` that advance them:
//! delay coordinates (a linear shift) and a contracting tanh reservoir.
//!
//! Both paradigms satisfy `Φ(f ω) = g(φ(ω), Φ(ω))`. For delays this fixes
//! `Φ(ω_n)` to the window of measurements strictly before `n`; the reservoir
//! state `y_n` likewise only depends on `ω̂_0, …, ω̂_{n-1}`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::spectral_norm;

/// Points `y_n` of an embedded series, stored for `n ≥ start`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedSeries {
    pub points: Vec<DVector<f64>>,
    /// Trajectory index of `points[0]`.
    pub start: usize,
    /// Number of leading trajectory indices without a valid point.
    pub washout: usize,
}

impl EmbeddedSeries {
    /// Point aligned with trajectory index `n`.
    pub fn at(&self, n: usize) -> Option<&DVector<f64>> {
        n.checked_sub(self.start).and_then(|i| self.points.get(i))
    }

    /// One past the last trajectory index covered.
    pub fn end(&self) -> usize {
        self.start + self.points.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayEmbedder {
    pub q: usize,
    pub d: usize,
}

impl DelayEmbedder {
    pub fn new(q: usize, d: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::invalid("embedding.delays", "must be at least 1"));
        }
        if d == 0 {
            return Err(Error::invalid("measurement dimension", "must be at least 1"));
        }
        Ok(Self { q, d })
    }

    pub fn dim(&self) -> usize {
        self.q * self.d
    }

    pub fn g(&self, u: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.d, u.len())?;
        check_dim(self.dim(), y.len())?;
        Ok(shift_insert(u, y))
    }

    /// `G1` injects `u` into the newest block; `G2` shifts blocks down by one.
    pub fn partials(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let (d, l) = (self.d, self.dim());
        let g1 = DMatrix::from_fn(l, d, |r, c| if r == c { 1.0 } else { 0.0 });
        let g2 = DMatrix::from_fn(l, l, |r, c| if r >= d && c == r - d { 1.0 } else { 0.0 });
        (g1, g2)
    }

    /// `Φ(ω_n) = (ω̂_{n-1}, …, ω̂_{n-Q})` for `n = Q, …, N`.
    pub fn lift(&self, measured: &[DVector<f64>]) -> Result<EmbeddedSeries> {
        let e = delay_embed(measured, self.q)?;
        Ok(EmbeddedSeries {
            points: e.points,
            start: self.q,
            washout: self.q,
        })
    }
}

fn shift_insert(u: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    let d = u.len();
    let l = y.len();
    let mut out = DVector::zeros(l);
    out.rows_mut(0, d).copy_from(u);
    if l > d {
        out.rows_mut(d, l - d).copy_from(&y.rows(0, l - d));
    }
    out
}

/// Delay vectors `y_n = (ω̂_n, ω̂_{n-1}, …, ω̂_{n-Q+1})` for `n ≥ Q-1`.
pub fn delay_embed(measured: &[DVector<f64>], q: usize) -> Result<EmbeddedSeries> {
    if q == 0 {
        return Err(Error::invalid("embedding.delays", "must be at least 1"));
    }
    if measured.len() < q {
        return Err(Error::SeriesTooShort {
            needed: q,
            actual: measured.len(),
        });
    }
    let d = measured[0].len();
    if let Some(bad) = measured.iter().find(|m| m.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bad.len(),
        });
    }
    let points = (q - 1..measured.len())
        .map(|n| {
            let mut y = DVector::zeros(q * d);
            for b in 0..q {
                y.rows_mut(b * d, d).copy_from(&measured[n - b]);
            }
            y
        })
        .collect();
    Ok(EmbeddedSeries {
        points,
        start: q - 1,
        washout: q - 1,
    })
}

/// Shift map of the delay paradigm; the number of delays is `y.len() / u.len()`.
pub fn delay_g(u: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if u.is_empty() || !y.len().is_multiple_of(u.len()) || y.len() < u.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len().max(1) * (y.len() / u.len().max(1)).max(1),
            actual: y.len(),
        });
    }
    Ok(shift_insert(u, y))
}

/// Reservoir `g(u, y) = tanh(W y + B u)` with `‖W‖₂ ≤ λ_c < 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReservoirEmbedder {
    w: DMatrix<f64>,
    b: DMatrix<f64>,
    lambda_c: f64,
    seed: Option<u64>,
}

impl ReservoirEmbedder {
    /// Gaussian `W` rescaled to operator norm `λ_c`; uniform `B` with unit columns.
    pub fn init(l: usize, d: usize, lambda_c: f64, seed: u64) -> Result<Self> {
        check_lambda(lambda_c)?;
        if l == 0 || d == 0 {
            return Err(Error::invalid("embedding.nodes", "dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = DMatrix::from_fn(l, l, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = spectral_norm(&w);
        w *= lambda_c / s;
        let mut b = DMatrix::from_fn(l, d, |_, _| rng.gen_range(-1.0..=1.0));
        for mut col in b.column_iter_mut() {
            let n = col.norm();
            if n > 0.0 {
                col /= n;
            }
        }
        Ok(Self {
            w,
            b,
            lambda_c,
            seed: Some(seed),
        })
    }

    /// Wrap explicit matrices; `W` must respect the contraction factor.
    pub fn from_matrices(w: DMatrix<f64>, b: DMatrix<f64>, lambda_c: f64) -> Result<Self> {
        check_lambda(lambda_c)?;
        if !w.is_square() {
            return Err(Error::invalid("W", "must be square"));
        }
        check_dim(w.nrows(), b.nrows())?;
        if spectral_norm(&w) > lambda_c * (1.0 + 1e-12) {
            return Err(Error::invalid("W", "operator norm exceeds the contraction factor"));
        }
        Ok(Self {
            w,
            b,
            lambda_c,
            seed: None,
        })
    }

    pub fn recurrence(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn input(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn lambda_c(&self) -> f64 {
        self.lambda_c
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Steps needed for `λ_c^washout ≤ 1e-10`.
    pub fn washout(&self) -> usize {
        washout_for(self.lambda_c)
    }

    fn preactivation(&self, u: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.input_dim(), u.len())?;
        check_dim(self.dim(), y.len())?;
        Ok(&self.w * y + &self.b * u)
    }

    pub fn g(&self, u: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.preactivation(u, y)?.map(f64::tanh))
    }

    /// `(diag(1 − tanh²) B, diag(1 − tanh²) W)`.
    pub fn partials(&self, u: &DVector<f64>, y: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let z = self.preactivation(u, y)?;
        let s = z.map(|v| 1.0 - v.tanh().powi(2));
        let mut g1 = self.b.clone();
        let mut g2 = self.w.clone();
        for (r, sr) in s.iter().enumerate() {
            g1.row_mut(r).scale_mut(*sr);
            g2.row_mut(r).scale_mut(*sr);
        }
        Ok((g1, g2))
    }

    /// Drive with `y_{n+1} = g(ω̂_n, y_n)` from `y_0`; returns `y_n` for
    /// `washout ≤ n ≤ N`.
    pub fn drive(&self, measured: &[DVector<f64>], y0: &DVector<f64>) -> Result<EmbeddedSeries> {
        check_dim(self.dim(), y0.len())?;
        let washout = self.washout();
        if measured.len() < washout {
            return Err(Error::SeriesTooShort {
                needed: washout,
                actual: measured.len(),
            });
        }
        let mut points = Vec::with_capacity(measured.len() + 1 - washout);
        let mut y = y0.clone();
        if washout == 0 {
            points.push(y.clone());
        }
        for (n, u) in measured.iter().enumerate() {
            y = self.g(u, &y)?;
            if n + 1 >= washout {
                points.push(y.clone());
            }
        }
        Ok(EmbeddedSeries {
            points,
            start: washout,
            washout,
        })
    }

    /// Sampled sup of `‖∂g/∂y‖₂`, never above `λ_c`.
    pub fn sampled_state_derivative_norm(&self, samples: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let u = DVector::from_fn(self.input_dim(), |_, _| rng.gen_range(-2.0..2.0));
            let y = DVector::from_fn(self.dim(), |_, _| rng.gen_range(-1.0..1.0));
            let (_, g2) = self.partials(&u, &y)?;
            worst = worst.max(spectral_norm(&g2));
        }
        Ok(worst)
    }

    /// Bounds on `‖∂g/∂u‖₂`: the spectral norm of `B` (a valid bound) and
    /// the largest column norm of `B`.
    pub fn input_derivative_bounds(&self) -> (f64, f64) {
        let max_col = self
            .b
            .column_iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        (spectral_norm(&self.b), max_col)
    }
}

fn check_lambda(lambda_c: f64) -> Result<()> {
    if !(lambda_c > 0.0 && lambda_c < 1.0) {
        return Err(Error::invalid("embedding.lambda_c", "must lie in (0, 1)"));
    }
    Ok(())
}

/// `ceil(ln 1e-10 / ln λ_c)`.
pub fn washout_for(lambda_c: f64) -> usize {
    ((1e-10f64).ln() / lambda_c.ln()).ceil() as usize
}

/// Either embedding paradigm behind one interface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Embedder {
    Delay(DelayEmbedder),
    Reservoir(ReservoirEmbedder),
}

impl Embedder {
    pub fn dim(&self) -> usize {
        match self {
            Embedder::Delay(e) => e.dim(),
            Embedder::Reservoir(e) => e.dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Embedder::Delay(e) => e.d,
            Embedder::Reservoir(e) => e.input_dim(),
        }
    }

    pub fn g(&self, u: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Embedder::Delay(e) => e.g(u, y),
            Embedder::Reservoir(e) => e.g(u, y),
        }
    }

    /// `(∂g/∂u, ∂g/∂y)` at `(u, y)`.
    pub fn partials(&self, u: &DVector<f64>, y: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        match self {
            Embedder::Delay(e) => {
                check_dim(e.d, u.len())?;
                check_dim(e.dim(), y.len())?;
                Ok(e.partials())
            }
            Embedder::Reservoir(e) => e.partials(u, y),
        }
    }

    /// Samples of `Φ(ω_n)`; reservoirs start from the zero state.
    pub fn lift(&self, measured: &[DVector<f64>]) -> Result<EmbeddedSeries> {
        match self {
            Embedder::Delay(e) => e.lift(measured),
            Embedder::Reservoir(e) => e.drive(measured, &DVector::zeros(e.dim())),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Embedder::Delay(_))
    }
}

/// Smallest Euclidean distance between two distinct entries; an injectivity
/// diagnostic for the embedding.
pub fn min_pairwise_distance(points: &[DVector<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min((&points[i] - &points[j]).norm());
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_series(xs: &[f64]) -> Vec<DVector<f64>> {
        xs.iter().map(|&x| DVector::from_element(1, x)).collect()
    }

    #[test]
    fn single_delay_is_identity() {
        let s = scalar_series(&[1.0, 2.0, 3.0]);
        let e = delay_embed(&s, 1).unwrap();
        assert_eq!(e.points, s);
        assert_eq!(e.washout, 0);
    }

    #[test]
    fn delay_unrolled() {
        let e = delay_embed(&scalar_series(&[1.0, 2.0, 3.0, 4.0]), 3).unwrap();
        assert_eq!(e.at(2).unwrap().as_slice(), &[3.0, 2.0, 1.0]);
        assert_eq!(e.at(3).unwrap().as_slice(), &[4.0, 3.0, 2.0]);
        assert!(e.at(1).is_none());
        assert_eq!(e.washout, 2);
    }

    #[test]
    fn delay_too_short() {
        assert!(matches!(
            delay_embed(&scalar_series(&[1.0]), 2),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn delay_g_shift_insert() {
        let y = DVector::from_vec(vec![3.0, 2.0, 1.0]);
        let out = delay_g(&DVector::from_element(1, 5.0), &y).unwrap();
        assert_eq!(out.as_slice(), &[5.0, 3.0, 2.0]);
    }

    #[test]
    fn delay_g_rejects_mismatch() {
        let y = DVector::from_vec(vec![3.0, 2.0, 1.0]);
        assert!(delay_g(&DVector::from_vec(vec![1.0, 2.0]), &y).is_err());
    }

    #[test]
    fn delay_partials_reproduce_g() {
        let e = DelayEmbedder::new(3, 2).unwrap();
        let (g1, g2) = e.partials();
        let u = DVector::from_vec(vec![7.0, 8.0]);
        let y = DVector::from_fn(6, |i, _| i as f64);
        assert_eq!(&g1 * &u + &g2 * &y, e.g(&u, &y).unwrap());
    }

    #[test]
    fn delay_lift_is_past_window() {
        let s = scalar_series(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let e = DelayEmbedder::new(2, 1).unwrap();
        let lift = e.lift(&s).unwrap();
        assert_eq!(lift.start, 2);
        assert_eq!(lift.at(2).unwrap().as_slice(), &[2.0, 1.0]);
        assert_eq!(lift.at(4).unwrap().as_slice(), &[4.0, 3.0]);
        let next = e.g(&s[2], lift.at(2).unwrap()).unwrap();
        assert_eq!(&next, lift.at(3).unwrap());
    }

    #[test]
    fn reservoir_norm_and_columns() {
        let r = ReservoirEmbedder::init(50, 3, 0.9, 7).unwrap();
        assert!((spectral_norm(r.recurrence()) - 0.9).abs() < 1e-10);
        for c in r.input().column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reservoir_is_seeded() {
        let a = ReservoirEmbedder::init(20, 2, 0.5, 3).unwrap();
        let b = ReservoirEmbedder::init(20, 2, 0.5, 3).unwrap();
        let c = ReservoirEmbedder::init(20, 2, 0.5, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.recurrence(), c.recurrence());
    }

    #[test]
    fn reservoir_rejects_bad_lambda() {
        for l in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(ReservoirEmbedder::init(4, 1, l, 0).is_err());
        }
    }

    #[test]
    fn zero_reservoir_maps_to_zero() {
        let r = ReservoirEmbedder::from_matrices(DMatrix::zeros(4, 4), DMatrix::zeros(4, 2), 0.5).unwrap();
        let out = r
            .g(&DVector::from_vec(vec![1.0, -3.0]), &DVector::from_element(4, 0.7))
            .unwrap();
        assert_eq!(out, DVector::zeros(4));
    }

    #[test]
    fn memoryless_reservoir_forgets_after_one_step() {
        let b = DMatrix::from_row_slice(3, 1, &[1.0, -0.5, 0.25]);
        let r = ReservoirEmbedder::from_matrices(DMatrix::zeros(3, 3), b.clone(), 0.5).unwrap();
        let u = DVector::from_element(1, 0.8);
        let a = r.g(&u, &DVector::from_element(3, 0.9)).unwrap();
        let c = r.g(&u, &DVector::from_element(3, -0.4)).unwrap();
        assert_eq!(a, c);
        assert_eq!(a, (&b * &u).map(f64::tanh));
    }

    #[test]
    fn reservoir_contraction_sampled() {
        let r = ReservoirEmbedder::init(200, 3, 0.9, 11).unwrap();
        let worst = r.sampled_state_derivative_norm(200, 1).unwrap();
        assert!(worst <= 0.9 + 1e-12, "{worst}");
    }

    #[test]
    fn washout_for_default_lambda() {
        assert_eq!(washout_for(0.9), 219);
        assert!(0.9f64.powi(219) <= 1e-10);
        assert!(0.9f64.powi(218) > 1e-10);
    }

    #[test]
    fn reservoir_partials_match_finite_differences() {
        let r = ReservoirEmbedder::init(8, 2, 0.8, 5).unwrap();
        let u = DVector::from_vec(vec![0.3, -0.7]);
        let y = DVector::from_fn(8, |i, _| 0.1 * i as f64 - 0.3);
        let (g1, g2) = r.partials(&u, &y).unwrap();
        let h = 1e-6;
        for c in 0..2 {
            let mut up = u.clone();
            up[c] += h;
            let mut um = u.clone();
            um[c] -= h;
            let fd = (r.g(&up, &y).unwrap() - r.g(&um, &y).unwrap()) / (2.0 * h);
            assert!((fd - g1.column(c)).norm() < 1e-8);
        }
        for c in 0..8 {
            let mut yp = y.clone();
            yp[c] += h;
            let mut ym = y.clone();
            ym[c] -= h;
            let fd = (r.g(&u, &yp).unwrap() - r.g(&u, &ym).unwrap()) / (2.0 * h);
            assert!((fd - g2.column(c)).norm() < 1e-8);
        }
    }
}
