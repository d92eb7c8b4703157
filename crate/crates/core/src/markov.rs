//! Ulam-style Markov chains on box partitions, the indicator-basis Koopman
//! matrix, and correlation diagnostics.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Half-open boxes on a subset of coordinates. Angular coordinates span
/// exactly `[0, 2π)`; the others span the data range inflated by 1%.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxPartition {
    pub coordinates: Vec<usize>,
    pub angular: Vec<bool>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: Vec<usize>,
    /// Empirical centroid per cell (over the partition coordinates).
    pub centroids: Vec<Option<DVector<f64>>>,
    pub visits: Vec<usize>,
    pub occupied: Vec<usize>,
}

impl BoxPartition {
    pub fn cells(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn dim(&self) -> usize {
        self.coordinates.len()
    }

    fn width(&self, k: usize) -> f64 {
        (self.upper[k] - self.lower[k]) / self.resolution[k] as f64
    }

    /// Row-major cell index of `point`, if it lies in the box.
    pub fn locate(&self, point: &DVector<f64>) -> Option<usize> {
        let mut idx = 0;
        for (k, &c) in self.coordinates.iter().enumerate() {
            let mut x = *point.get(c)?;
            if self.angular[k] {
                x = x.rem_euclid(TAU);
            }
            if !(x >= self.lower[k] && x < self.upper[k]) {
                return None;
            }
            let i = (((x - self.lower[k]) / self.width(k)) as usize).min(self.resolution[k] - 1);
            idx = idx * self.resolution[k] + i;
        }
        Some(idx)
    }

    /// Per-coordinate indices of a cell.
    pub fn multi_index(&self, mut cell: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            out[k] = cell % self.resolution[k];
            cell /= self.resolution[k];
        }
        out
    }

    /// Geometric center of a cell.
    pub fn cell_center(&self, cell: usize) -> DVector<f64> {
        let mi = self.multi_index(cell);
        DVector::from_fn(self.dim(), |k, _| self.lower[k] + (mi[k] as f64 + 0.5) * self.width(k))
    }

    /// Euclidean length of a cell's diagonal.
    pub fn cell_diameter(&self) -> f64 {
        (0..self.dim()).map(|k| self.width(k).powi(2)).sum::<f64>().sqrt()
    }

    /// Coordinate-wise distance, circular on angular coordinates.
    pub fn distance(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (0..self.dim())
            .map(|k| {
                let mut d = (a[k] - b[k]).abs();
                if self.angular[k] {
                    d = d.rem_euclid(TAU);
                    d = d.min(TAU - d);
                }
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Fraction of `points` in each cell; points outside the box are ignored.
    pub fn occupation(&self, points: &[DVector<f64>]) -> Vec<f64> {
        let mut h = vec![0.0; self.cells()];
        let mut n = 0.0;
        for p in points {
            if let Some(c) = self.locate(p) {
                h[c] += 1.0;
                n += 1.0;
            }
        }
        if n > 0.0 {
            h.iter_mut().for_each(|v| *v /= n);
        }
        h
    }

    /// Lebesgue measure of each cell relative to the box.
    pub fn uniform_masses(&self) -> Vec<f64> {
        vec![1.0 / self.cells() as f64; self.cells()]
    }
}

/// Partition of `points` on `coordinates` with `resolution[k]` cells along
/// coordinate `k`.
pub fn build_partition(
    points: &[DVector<f64>],
    coordinates: &[usize],
    resolution: &[usize],
    angular: &[bool],
) -> Result<BoxPartition> {
    if points.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    if coordinates.is_empty() {
        return Err(Error::invalid("markov.coordinates", "must not be empty"));
    }
    check_dim(coordinates.len(), resolution.len())?;
    check_dim(coordinates.len(), angular.len())?;
    if let Some(r) = resolution.iter().find(|r| **r < 2) {
        return Err(Error::invalid("markov.resolution", format!("must be at least 2, got {r}")));
    }
    let dim = points[0].len();
    if let Some(c) = coordinates.iter().find(|c| **c >= dim) {
        return Err(Error::invalid("markov.coordinates", format!("{c} exceeds dimension {dim}")));
    }
    let mut lower = Vec::with_capacity(coordinates.len());
    let mut upper = Vec::with_capacity(coordinates.len());
    for (k, &c) in coordinates.iter().enumerate() {
        if angular[k] {
            lower.push(0.0);
            upper.push(TAU);
            continue;
        }
        let (lo, hi) = points
            .iter()
            .map(|p| p[c])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::invalid("trajectory", "contains non-finite values"));
        }
        let pad = if hi > lo { 0.005 * (hi - lo) } else { 0.5 };
        lower.push(lo - pad);
        upper.push(hi + pad);
    }
    let mut part = BoxPartition {
        coordinates: coordinates.to_vec(),
        angular: angular.to_vec(),
        lower,
        upper,
        resolution: resolution.to_vec(),
        centroids: Vec::new(),
        visits: Vec::new(),
        occupied: Vec::new(),
    };
    let m = part.cells();
    let dimp = part.dim();
    let mut sums = vec![DVector::<f64>::zeros(2 * dimp); m];
    let mut visits = vec![0usize; m];
    for p in points {
        let c = part.locate(p).expect("inflated box covers the data");
        visits[c] += 1;
        for (k, &coord) in coordinates.iter().enumerate() {
            if angular[k] {
                sums[c][2 * k] += p[coord].cos();
                sums[c][2 * k + 1] += p[coord].sin();
            } else {
                sums[c][2 * k] += p[coord];
            }
        }
    }
    part.centroids = (0..m)
        .map(|c| {
            (visits[c] > 0).then(|| {
                DVector::from_fn(dimp, |k, _| {
                    if angular[k] {
                        sums[c][2 * k + 1].atan2(sums[c][2 * k]).rem_euclid(TAU)
                    } else {
                        sums[c][2 * k] / visits[c] as f64
                    }
                })
            })
        })
        .collect();
    part.occupied = (0..m).filter(|&c| visits[c] > 0).collect();
    part.visits = visits;
    Ok(part)
}

/// Square sparse matrix stored by columns, each sorted by row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    pub size: usize,
    pub columns: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            columns: vec![Vec::new(); size],
        }
    }

    fn from_counts(size: usize, counts: &[std::collections::BTreeMap<usize, f64>]) -> Self {
        Self {
            size,
            columns: counts.iter().map(|c| c.iter().map(|(i, v)| (*i, *v)).collect()).collect(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.columns[j]
            .binary_search_by_key(&i, |(r, _)| *r)
            .map_or(0.0, |k| self.columns[j][k].1)
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.columns.iter().map(|c| c.iter().map(|(_, v)| v).sum()).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.size];
        for (j, col) in self.columns.iter().enumerate() {
            if x[j] != 0.0 {
                for (i, v) in col {
                    y[*i] += v * x[j];
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for (j, col) in self.columns.iter().enumerate() {
            for (i, v) in col {
                m[(*i, j)] = *v;
            }
        }
        m
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid("matrix", "must be square"));
        }
        Ok(Self {
            size: m.nrows(),
            columns: (0..m.ncols())
                .map(|j| (0..m.nrows()).filter(|&i| m[(i, j)] != 0.0).map(|i| (i, m[(i, j)])).collect())
                .collect(),
        })
    }

    /// Coordinate-list text: a `rows cols nnz` header, then `row col value`.
    pub fn to_coo(&self) -> String {
        let mut s = format!("{} {} {}\n", self.size, self.size, self.nnz());
        for (j, col) in self.columns.iter().enumerate() {
            for (i, v) in col {
                let _ = writeln!(s, "{i} {j} {v}");
            }
        }
        s
    }

    pub fn from_coo(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let parse_err = |line: usize, message: &str| Error::Parse {
            line: line + 1,
            message: message.into(),
        };
        let h: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err(hl, "header must be `rows cols nnz`")))
            .collect::<Result<_>>()?;
        if h.len() != 3 || h[0] != h[1] {
            return Err(parse_err(hl, "header must be `rows cols nnz` with rows = cols"));
        }
        let mut out = Self::zeros(h[0]);
        let mut count = 0;
        for (ln, line) in lines {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 3 {
                return Err(parse_err(ln, "expected `row col value`"));
            }
            let i: usize = t[0].parse().map_err(|_| parse_err(ln, "bad row"))?;
            let j: usize = t[1].parse().map_err(|_| parse_err(ln, "bad column"))?;
            let v: f64 = t[2].parse().map_err(|_| parse_err(ln, "bad value"))?;
            if i >= out.size || j >= out.size {
                return Err(parse_err(ln, "index out of range"));
            }
            out.columns[j].push((i, v));
            count += 1;
        }
        if count != h[2] {
            return Err(parse_err(hl, "entry count does not match header"));
        }
        for col in &mut out.columns {
            col.sort_by_key(|(i, _)| *i);
        }
        Ok(out)
    }
}

/// Column-stochastic Ulam matrix, `P_ij ≈ Prob(f(x) ∈ V_i | x ∈ V_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub matrix: SparseMatrix,
    /// Transitions counted out of each cell.
    pub samples: Vec<usize>,
    /// Columns left at zero for lack of samples.
    pub zero_columns: Vec<usize>,
}

impl TransitionMatrix {
    pub fn size(&self) -> usize {
        self.matrix.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    fn from_sparse_counts(counts: SparseMatrix, samples: Vec<usize>) -> Self {
        let mut matrix = counts;
        let mut zero_columns = Vec::new();
        for (j, col) in matrix.columns.iter_mut().enumerate() {
            let total: f64 = col.iter().map(|(_, v)| v).sum();
            if total > 0.0 {
                col.iter_mut().for_each(|(_, v)| *v /= total);
            } else {
                col.clear();
                zero_columns.push(j);
            }
        }
        Self {
            matrix,
            samples,
            zero_columns,
        }
    }

    /// Counts of consecutive cells in a symbol sequence.
    pub fn from_sequence(cells: &[usize], m: usize) -> Result<Self> {
        if cells.len() < 2 {
            return Err(Error::SeriesTooShort {
                needed: 2,
                actual: cells.len(),
            });
        }
        if let Some(c) = cells.iter().find(|c| **c >= m) {
            return Err(Error::invalid("cell", format!("{c} exceeds {m} cells")));
        }
        let mut counts = vec![std::collections::BTreeMap::new(); m];
        let mut samples = vec![0usize; m];
        for w in cells.windows(2) {
            *counts[w[0]].entry(w[1]).or_insert(0.0) += 1.0;
            samples[w[0]] += 1;
        }
        Ok(Self::from_sparse_counts(SparseMatrix::from_counts(m, &counts), samples))
    }

    /// Largest deviation of a sampled column's sum from 1.
    pub fn max_column_defect(&self) -> f64 {
        self.matrix
            .column_sums()
            .iter()
            .enumerate()
            .filter(|(j, _)| !self.zero_columns.contains(j))
            .map(|(_, s)| (s - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn cell_sequence(points: &[DVector<f64>], partition: &BoxPartition) -> Vec<Option<usize>> {
    points.iter().map(|p| partition.locate(p)).collect()
}

/// Ulam matrix of consecutive pairs of `points`; pairs leaving the box are
/// skipped.
pub fn transition_matrix(points: &[DVector<f64>], partition: &BoxPartition) -> Result<TransitionMatrix> {
    if points.len() < 2 {
        return Err(Error::SeriesTooShort {
            needed: 2,
            actual: points.len(),
        });
    }
    let m = partition.cells();
    let cells = cell_sequence(points, partition);
    let mut counts = vec![std::collections::BTreeMap::new(); m];
    let mut samples = vec![0usize; m];
    for w in cells.windows(2) {
        if let (Some(a), Some(b)) = (w[0], w[1]) {
            *counts[a].entry(b).or_insert(0.0) += 1.0;
            samples[a] += 1;
        }
    }
    Ok(TransitionMatrix::from_sparse_counts(SparseMatrix::from_counts(m, &counts), samples))
}

/// Indicator-basis Koopman matrix `Û_ij = ⟨1_{V_j}, U 1_{V_i}⟩`, estimated
/// as the fraction of consecutive pairs with `x ∈ V_j` and `f(x) ∈ V_i`.
pub fn koopman_matrix(points: &[DVector<f64>], partition: &BoxPartition) -> Result<SparseMatrix> {
    if points.len() < 2 {
        return Err(Error::SeriesTooShort {
            needed: 2,
            actual: points.len(),
        });
    }
    let m = partition.cells();
    let cells = cell_sequence(points, partition);
    let mut counts = vec![std::collections::BTreeMap::new(); m];
    let pairs = (points.len() - 1) as f64;
    for w in cells.windows(2) {
        if let (Some(a), Some(b)) = (w[0], w[1]) {
            *counts[a].entry(b).or_insert(0.0) += 1.0;
        }
    }
    let mut u = SparseMatrix::from_counts(m, &counts);
    for col in &mut u.columns {
        col.iter_mut().for_each(|(_, v)| *v /= pairs);
    }
    Ok(u)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipReport {
    /// Columns whose clipped negative mass exceeded 1% of their total.
    pub flagged_columns: Vec<usize>,
    pub total_clipped: f64,
}

/// Clip negative entries and normalize columns to sum 1.
pub fn koopman_to_markov(u: &SparseMatrix) -> (TransitionMatrix, ClipReport) {
    let mut clipped = u.clone();
    let mut flagged = Vec::new();
    let mut total_clipped = 0.0;
    for (j, col) in clipped.columns.iter_mut().enumerate() {
        let neg: f64 = col.iter().filter(|(_, v)| *v < 0.0).map(|(_, v)| -v).sum();
        let abs: f64 = col.iter().map(|(_, v)| v.abs()).sum();
        if neg > 0.0 {
            total_clipped += neg;
            if neg > 0.01 * abs {
                flagged.push(j);
            }
            col.retain(|(_, v)| *v > 0.0);
        }
    }
    let samples = clipped.columns.iter().map(|c| c.len()).collect();
    (
        TransitionMatrix::from_sparse_counts(clipped, samples),
        ClipReport {
            flagged_columns: flagged,
            total_clipped,
        },
    )
}

/// Eigenvalues `(re, im)` of a dense copy, ordered by decreasing modulus.
pub fn eigenvalues(u: &SparseMatrix) -> Vec<(f64, f64)> {
    let mut ev: Vec<(f64, f64)> = u
        .to_dense()
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect();
    ev.sort_by(|a, b| b.0.hypot(b.1).total_cmp(&a.0.hypot(a.1)));
    ev
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StationaryMethod {
    Power,
    /// Power iteration on the lazy chain `(I + P) / 2`, which has the same
    /// stationary vectors and no periodic classes.
    Lazy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryDistribution {
    /// Probability per cell (zero off the sampled cells).
    pub pi: Vec<f64>,
    /// `‖Pπ − π‖₁`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub method: StationaryMethod,
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

fn l1_residual(p: &SparseMatrix, pi: &[f64]) -> f64 {
    p.mul_vec(pi).iter().zip(pi).map(|(a, b)| (a - b).abs()).sum()
}

fn iterate_stationary(p: &TransitionMatrix, tol: f64, max_iters: usize, lazy: bool) -> (Vec<f64>, usize, bool) {
    let m = p.size();
    let mut pi: Vec<f64> = (0..m).map(|j| if p.samples[j] > 0 { 1.0 } else { 0.0 }).collect();
    normalize(&mut pi);
    for it in 1..=max_iters {
        let mut next = p.matrix.mul_vec(&pi);
        if lazy {
            next.iter_mut().zip(&pi).for_each(|(a, b)| *a = 0.5 * (*a + b));
        }
        normalize(&mut next);
        pi = next;
        if l1_residual(&p.matrix, &pi) <= tol {
            return (pi, it, true);
        }
    }
    (pi, max_iters, false)
}

/// Power iteration from the uniform vector on sampled cells; periodic chains
/// fall back to the lazy chain.
pub fn stationary_distribution(p: &TransitionMatrix, tol: f64, max_iters: usize) -> Result<StationaryDistribution> {
    if p.samples.iter().all(|s| *s == 0) {
        return Err(Error::Empty("transition samples"));
    }
    let mut pi: Vec<f64> = (0..p.size()).map(|j| if p.samples[j] > 0 { 1.0 } else { 0.0 }).collect();
    normalize(&mut pi);
    if l1_residual(&p.matrix, &pi) <= tol {
        let residual = l1_residual(&p.matrix, &pi);
        return Ok(StationaryDistribution {
            pi,
            residual,
            iterations: 0,
            converged: true,
            method: StationaryMethod::Power,
        });
    }
    let (pi, iterations, converged) = iterate_stationary(p, tol, max_iters, false);
    if converged {
        let residual = l1_residual(&p.matrix, &pi);
        return Ok(StationaryDistribution {
            pi,
            residual,
            iterations,
            converged,
            method: StationaryMethod::Power,
        });
    }
    let (pi, iterations, converged) = iterate_stationary(p, tol, max_iters, true);
    let residual = l1_residual(&p.matrix, &pi);
    Ok(StationaryDistribution {
        pi,
        residual,
        iterations,
        converged,
        method: StationaryMethod::Lazy,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkovSample {
    pub cells: Vec<usize>,
    /// Step at which a zero column stopped the chain.
    pub halted_at: Option<usize>,
}

/// Sample `n` states of the chain from `start` with a seeded generator.
pub fn simulate_markov(p: &TransitionMatrix, start: usize, n: usize, seed: u64) -> Result<MarkovSample> {
    if start >= p.size() {
        return Err(Error::invalid("start", format!("cell {start} exceeds {}", p.size())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = Vec::with_capacity(n);
    let mut cur = start;
    for k in 0..n {
        cells.push(cur);
        if k + 1 == n {
            break;
        }
        let col = &p.matrix.columns[cur];
        if col.is_empty() {
            return Ok(MarkovSample {
                cells,
                halted_at: Some(k),
            });
        }
        let r: f64 = rng.gen();
        let mut acc = 0.0;
        let mut next = col[col.len() - 1].0;
        for (i, v) in col {
            acc += v;
            if r < acc {
                next = *i;
                break;
            }
        }
        cur = next;
    }
    Ok(MarkovSample { cells, halted_at: None })
}

/// Visit frequencies of a cell sequence.
pub fn frequencies(cells: &[usize], m: usize) -> Vec<f64> {
    let mut f = vec![0.0; m];
    for c in cells {
        f[*c] += 1.0;
    }
    normalize(&mut f);
    f
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawEntry {
    pub cell: usize,
    pub centroid: DVector<f64>,
    /// `Σ_i P_ij centroid(i)`, circular on angular coordinates.
    pub image: DVector<f64>,
    /// Weighted RMS distance of the target centroids from `image`.
    pub dispersion: f64,
}

/// Image of the identity observable under the chain, per sampled cell.
pub fn reconstruct_law(p: &TransitionMatrix, partition: &BoxPartition) -> Result<Vec<LawEntry>> {
    check_dim(partition.cells(), p.size())?;
    let dim = partition.dim();
    let mut out = Vec::new();
    for (j, col) in p.matrix.columns.iter().enumerate() {
        let Some(cj) = &partition.centroids[j] else { continue };
        if col.is_empty() {
            continue;
        }
        let mut lin = DVector::zeros(dim);
        let mut cs = vec![(0.0, 0.0); dim];
        for (i, v) in col {
            let Some(ci) = &partition.centroids[*i] else { continue };
            for k in 0..dim {
                if partition.angular[k] {
                    cs[k].0 += v * ci[k].cos();
                    cs[k].1 += v * ci[k].sin();
                } else {
                    lin[k] += v * ci[k];
                }
            }
        }
        let image = DVector::from_fn(dim, |k, _| {
            if partition.angular[k] {
                cs[k].1.atan2(cs[k].0).rem_euclid(TAU)
            } else {
                lin[k]
            }
        });
        let dispersion = col
            .iter()
            .filter_map(|(i, v)| partition.centroids[*i].as_ref().map(|ci| v * partition.distance(ci, &image).powi(2)))
            .sum::<f64>()
            .sqrt();
        out.push(LawEntry {
            cell: j,
            centroid: cj.clone(),
            image,
            dispersion,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingDiagnostic {
    /// `⟨U^n ψ, χ⟩` for `n < N`.
    pub correlations: Vec<f64>,
    /// `(1/N′) Σ_{n<N′} ⟨U^n ψ, χ⟩` for `N′ = 1..=N`.
    pub cesaro: Vec<f64>,
}

/// Time-average correlations of two scalar series and their running Cesàro
/// means. Remove the means first to see decay of correlations.
pub fn mixing_diagnostic(psi: &[f64], chi: &[f64], n: usize) -> Result<MixingDiagnostic> {
    check_dim(psi.len(), chi.len())?;
    if n == 0 || psi.len() < 2 * n {
        return Err(Error::SeriesTooShort {
            needed: 2 * n.max(1),
            actual: psi.len(),
        });
    }
    let len = psi.len();
    let correlations: Vec<f64> = (0..n)
        .map(|lag| (0..len - lag).map(|t| psi[t + lag] * chi[t]).sum::<f64>() / (len - lag) as f64)
        .collect();
    let mut acc = 0.0;
    let cesaro = correlations
        .iter()
        .enumerate()
        .map(|(k, c)| {
            acc += c;
            acc / (k + 1) as f64
        })
        .collect();
    Ok(MixingDiagnostic { correlations, cesaro })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(xs: &[f64]) -> Vec<DVector<f64>> {
        xs.iter().map(|&x| DVector::from_element(1, x)).collect()
    }

    #[test]
    fn uniform_split_after_inflation() {
        let data: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let p = build_partition(&pts(&data), &[0], &[4], &[false]).unwrap();
        let w = (p.upper[0] - p.lower[0]) / 4.0;
        assert!((p.lower[0] + 0.005).abs() < 1e-12);
        assert!((w - 1.01 / 4.0).abs() < 1e-12);
        assert_eq!(p.locate(&DVector::from_element(1, 0.0)), Some(0));
        assert_eq!(p.locate(&DVector::from_element(1, 1.0)), Some(3));
        assert_eq!(p.locate(&DVector::from_element(1, 2.0)), None);
    }

    #[test]
    fn rejects_coarse_resolution() {
        assert!(build_partition(&pts(&[0.0, 1.0]), &[0], &[1], &[false]).is_err());
        assert!(build_partition(&[], &[0], &[4], &[false]).is_err());
    }

    #[test]
    fn three_cycle_is_permutation() {
        let seq: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let p = TransitionMatrix::from_sequence(&seq, 3).unwrap();
        for j in 0..3 {
            for i in 0..3 {
                let expected = if i == (j + 1) % 3 { 1.0 } else { 0.0 };
                assert_eq!(p.get(i, j), expected);
            }
        }
        let s = stationary_distribution(&p, 1e-12, 1000).unwrap();
        assert!(s.pi.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
        let sim = simulate_markov(&p, 0, 7, 1).unwrap();
        assert_eq!(sim.cells, vec![0, 1, 2, 0, 1, 2, 0]);
    }

    #[test]
    fn periodic_chain_uses_lazy_fallback() {
        // transient cell 2 feeds a 2-cycle, so plain iteration oscillates
        let seq = [2, 0, 1, 0, 1, 0];
        let p = TransitionMatrix::from_sequence(&seq, 3).unwrap();
        let s = stationary_distribution(&p, 1e-12, 100).unwrap();
        assert!(s.converged);
        assert_eq!(s.method, StationaryMethod::Lazy);
        assert!((s.pi[0] - 0.5).abs() < 1e-12 && (s.pi[1] - 0.5).abs() < 1e-12);
        assert!(s.pi[2] < 1e-12);
    }

    #[test]
    fn zero_column_is_flagged_and_halts() {
        let p = TransitionMatrix::from_sequence(&[0, 1, 2], 3).unwrap();
        assert_eq!(p.zero_columns, vec![2]);
        let sim = simulate_markov(&p, 0, 10, 3).unwrap();
        assert_eq!(sim.halted_at, Some(2));
        assert_eq!(sim.cells, vec![0, 1, 2]);
    }

    #[test]
    fn koopman_estimator_matches_counts() {
        let data: Vec<f64> = (0..500).map(|i| ((i as f64) * 0.731).sin()).collect();
        let points = pts(&data);
        let part = build_partition(&points, &[0], &[6], &[false]).unwrap();
        let p = transition_matrix(&points, &part).unwrap();
        let (q, clip) = koopman_to_markov(&koopman_matrix(&points, &part).unwrap());
        assert!(clip.flagged_columns.is_empty() && clip.total_clipped == 0.0);
        for i in 0..6 {
            for j in 0..6 {
                assert!((p.get(i, j) - q.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_dynamics() {
        let points = pts(&[0.1; 10]);
        let part = build_partition(&points, &[0], &[2], &[false]).unwrap();
        let (q, _) = koopman_to_markov(&koopman_matrix(&points, &part).unwrap());
        let c = part.locate(&points[0]).unwrap();
        assert_eq!(q.get(c, c), 1.0);
        let law = reconstruct_law(&q, &part).unwrap();
        assert_eq!(law.len(), 1);
        assert!((&law[0].image - &law[0].centroid).norm() < 1e-15);
    }

    #[test]
    fn clipping_is_reported() {
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, -0.1, 1.0]);
        let (p, clip) = koopman_to_markov(&SparseMatrix::from_dense(&m).unwrap());
        assert_eq!(clip.flagged_columns, vec![0]);
        assert_eq!(p.get(0, 0), 1.0);
    }

    #[test]
    fn coo_round_trip() {
        let seq: Vec<usize> = (0..50).map(|i| (i * 7 + i / 3) % 5).collect();
        let p = TransitionMatrix::from_sequence(&seq, 5).unwrap();
        let back = SparseMatrix::from_coo(&p.matrix.to_coo()).unwrap();
        assert_eq!(back, p.matrix);
    }

    #[test]
    fn coo_errors_name_the_line() {
        let err = SparseMatrix::from_coo("2 2 1\n0 x 1.0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn constant_series_is_uncorrelated_after_mean_removal() {
        let psi: Vec<f64> = (0..100).map(|i| (i as f64 * 0.3).sin()).collect();
        let chi = vec![0.0; 100];
        let d = mixing_diagnostic(&psi, &chi, 10).unwrap();
        assert!(d.correlations.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn eigenvalues_of_permutation_lie_on_circle() {
        let seq: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let p = TransitionMatrix::from_sequence(&seq, 3).unwrap();
        for (re, im) in eigenvalues(&p.matrix) {
            assert!((re.hypot(im) - 1.0).abs() < 1e-12);
        }
    }
}
