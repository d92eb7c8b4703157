//! Matrix cocycles along orbits: products, Lyapunov spectra by repeated QR,
//! the linearized reconstruction `M̂ = [0 Ŵ; G1 G2]` with its forcing `c`,
//! fluctuations of the iterated model, and the stability gap.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddedSeries;
use crate::error::{check_dim, Error, Result};
use crate::forecast::ReconstructedMap;
use crate::numerics::pseudo_inverse;
use crate::systems::{Measurement, MeasurementMap, State, SystemKind, SystemSpec};

/// A square-matrix-valued function on some point set.
pub trait CocycleGenerator {
    type Point;
    fn dim(&self) -> usize;
    fn generate(&self, point: &Self::Point) -> Result<DMatrix<f64>>;
}

/// Jacobian of a reference system's step map.
pub struct JacobianGenerator<'a> {
    pub spec: &'a SystemSpec,
}

impl CocycleGenerator for JacobianGenerator<'_> {
    type Point = State;

    fn dim(&self) -> usize {
        self.spec.state_dim()
    }

    fn generate(&self, point: &State) -> Result<DMatrix<f64>> {
        self.spec.jacobian(point)
    }
}

/// The same matrix at every point.
pub struct ConstantGenerator(pub DMatrix<f64>);

impl CocycleGenerator for ConstantGenerator {
    type Point = ();

    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn generate(&self, _: &()) -> Result<DMatrix<f64>> {
        Ok(self.0.clone())
    }
}

/// `M̂` (or `M`) of a bundle, indexed by bundle step.
pub struct BundleGenerator<'a> {
    pub bundle: &'a CocycleBundle,
    pub use_true: bool,
}

impl CocycleGenerator for BundleGenerator<'_> {
    type Point = usize;

    fn dim(&self) -> usize {
        self.bundle.d + self.bundle.l
    }

    fn generate(&self, i: &usize) -> Result<DMatrix<f64>> {
        let step = self.bundle.steps.get(*i).ok_or(Error::SeriesTooShort {
            needed: i + 1,
            actual: self.bundle.steps.len(),
        })?;
        if self.use_true {
            step.m_true().ok_or_else(|| Error::Unsupported("true feedback Jacobian unavailable".into()))
        } else {
            Ok(step.m_hat())
        }
    }
}

/// `𝒢(n, ω_j) = G(ω_{j+n−1}) ⋯ G(ω_j)`; the identity for `n = 0`.
pub fn cocycle_product<G: CocycleGenerator>(gen: &G, orbit: &[G::Point], n: usize, j: usize) -> Result<DMatrix<f64>> {
    if j + n > orbit.len() {
        return Err(Error::SeriesTooShort {
            needed: j + n,
            actual: orbit.len(),
        });
    }
    let mut p = DMatrix::identity(gen.dim(), gen.dim());
    for point in &orbit[j..j + n] {
        let g = gen.generate(point)?;
        check_dim(gen.dim(), g.nrows())?;
        p = g * p;
    }
    Ok(p)
}

/// Relative defect `‖𝒢(m+n, ω) − 𝒢(n, f^m ω) 𝒢(m, ω)‖ / ‖𝒢(m+n, ω)‖`.
pub fn cocycle_law_defect<G: CocycleGenerator>(gen: &G, orbit: &[G::Point], m: usize, n: usize) -> Result<f64> {
    let whole = cocycle_product(gen, orbit, m + n, 0)?;
    let split = cocycle_product(gen, orbit, n, m)? * cocycle_product(gen, orbit, m, 0)?;
    Ok((&whole - split).norm() / whole.norm())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    /// Exponents per step, sorted descending.
    pub per_step: Vec<f64>,
    /// Exponents per time unit, sorted descending.
    pub per_time: Vec<f64>,
    pub steps: usize,
    pub dt: f64,
    /// `(step, running per-time exponents)` every `steps / 100` steps.
    pub trace: Vec<(usize, Vec<f64>)>,
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Discrete QR method on the first `n` points of `orbit` with a `p`-frame.
pub fn lyapunov_spectrum<G: CocycleGenerator>(
    gen: &G,
    orbit: &[G::Point],
    n: usize,
    p: usize,
    dt: f64,
) -> Result<LyapunovEstimate> {
    if n < 1000 {
        return Err(Error::invalid("steps", "need at least 1000 steps"));
    }
    if orbit.len() < n {
        return Err(Error::SeriesTooShort {
            needed: n,
            actual: orbit.len(),
        });
    }
    let dim = gen.dim();
    if p == 0 || p > dim {
        return Err(Error::invalid("exponents", format!("must lie in 1..={dim}")));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    // a generic frame avoids starting inside an invariant subspace
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a9_0b0c);
    let start = DMatrix::from_fn(dim, p, |_, _| StandardNormal.sample(&mut rng));
    let mut frame = start.qr().q();
    let mut sums = vec![0.0; p];
    let every = (n / 100).max(1);
    let mut trace = Vec::with_capacity(100);
    for (k, point) in orbit[..n].iter().enumerate() {
        let moved = gen.generate(point)? * &frame;
        let qr = moved.qr();
        let r = qr.r();
        for (i, s) in sums.iter_mut().enumerate() {
            let rii = r[(i, i)].abs();
            if !(rii > 0.0 && rii.is_finite()) {
                return Err(Error::SingularCocycle { step: k });
            }
            *s += rii.ln();
        }
        frame = qr.q();
        if (k + 1) % every == 0 {
            let t = (k + 1) as f64 * dt;
            trace.push((k + 1, sorted_desc(sums.iter().map(|s| s / t).collect())));
        }
    }
    let per_step = sorted_desc(sums.iter().map(|s| s / n as f64).collect());
    let per_time = per_step.iter().map(|l| l / dt).collect();
    Ok(LyapunovEstimate {
        per_step,
        per_time,
        steps: n,
        dt,
        trace,
    })
}

/// Matrices of the linearized reconstruction at one orbit point `ω_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct BundleStep {
    /// Jacobian of the true feedback function, when known in closed form.
    pub w_true: Option<DMatrix<f64>>,
    /// `Dŵ(Φ(ω_n))`, `d x L`.
    pub w_hat: DMatrix<f64>,
    /// `∂g/∂u (φ(ω_n), Φ(ω_n))`, `L x d`.
    pub g1: DMatrix<f64>,
    /// `∂g/∂y (φ(ω_n), Φ(ω_n))`, `L x L`.
    pub g2: DMatrix<f64>,
    /// `(0, G1 e(ω_{n−1}))`.
    pub c: DVector<f64>,
    /// One-step residual `e(ω_{n−1}) = φ(ω_n) − ŵ(Φ(ω_{n−1}))`.
    pub e_prev: DVector<f64>,
}

fn assemble(top: &DMatrix<f64>, g1: &DMatrix<f64>, g2: &DMatrix<f64>) -> DMatrix<f64> {
    let (d, l) = (top.nrows(), g2.nrows());
    let mut m = DMatrix::zeros(d + l, d + l);
    m.view_mut((0, d), (d, l)).copy_from(top);
    m.view_mut((d, 0), (l, d)).copy_from(g1);
    m.view_mut((d, d), (l, l)).copy_from(g2);
    m
}

impl BundleStep {
    pub fn m_hat(&self) -> DMatrix<f64> {
        assemble(&self.w_hat, &self.g1, &self.g2)
    }

    pub fn m_true(&self) -> Option<DMatrix<f64>> {
        self.w_true.as_ref().map(|w| assemble(w, &self.g1, &self.g2))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CocycleBundle {
    pub steps: Vec<BundleStep>,
    /// Trajectory index of `steps[0]`.
    pub start: usize,
    pub d: usize,
    pub l: usize,
    /// Whether `w_true` is present on every step.
    pub has_true: bool,
}

impl CocycleBundle {
    /// `(a_0, b_0) = (−e(ω_{s−1}), 0)`, matching the initial fluctuation of
    /// an iteration started from `(φ(ω_s), Φ(ω_s))`.
    pub fn initial_perturbation(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        self.steps
            .first()
            .map(|s| (-&s.e_prev, DVector::zeros(self.l)))
    }
}

/// Jacobian of the exact feedback for the torus with a trigonometric
/// measurement and delay embedding: `φ(ω_{n+1})` from `Φ(ω_n)` rotates each
/// `(cos, sin)` pair by twice its angle increment.
pub fn torus_true_feedback_jacobian(spec: &SystemSpec, measurement: &MeasurementMap, q: usize) -> Result<DMatrix<f64>> {
    let indices = match (&spec.kind, &measurement.measurement) {
        (SystemKind::TorusRotation, Measurement::Trigonometric { indices }) => indices,
        _ => {
            return Err(Error::Unsupported(
                "closed-form feedback needs the torus with a trigonometric measurement".into(),
            ))
        }
    };
    let d = 2 * indices.len();
    let mut w = DMatrix::zeros(d, q * d);
    for (k, &i) in indices.iter().enumerate() {
        let (s, c) = (2.0 * spec.rotation[i]).sin_cos();
        w[(2 * k, 2 * k)] = c;
        w[(2 * k, 2 * k + 1)] = -s;
        w[(2 * k + 1, 2 * k)] = s;
        w[(2 * k + 1, 2 * k + 1)] = c;
    }
    Ok(w)
}

/// Bundle along trajectory indices `range`; each index `n` needs `Φ(ω_{n−1})`.
pub fn build_bundle(
    map: &ReconstructedMap,
    lift: &EmbeddedSeries,
    measured: &[DVector<f64>],
    range: Range<usize>,
    w_true: Option<&DMatrix<f64>>,
) -> Result<CocycleBundle> {
    if range.start < lift.start + 1 || range.end > lift.end() || range.end > measured.len() {
        return Err(Error::invalid(
            "bundle range",
            format!("{}..{} needs embedded points from {}", range.start, range.end, range.start.saturating_sub(1)),
        ));
    }
    let d = map.output_dim();
    let l = map.embedder.dim();
    if let Some(w) = w_true {
        check_dim(d, w.nrows())?;
        check_dim(l, w.ncols())?;
    }
    let mut steps = Vec::with_capacity(range.len());
    for n in range.clone() {
        let y = lift.at(n).unwrap();
        let y_prev = lift.at(n - 1).unwrap();
        let w_hat = map.model.jacobian(y)?;
        let (g1, g2) = map.embedder.partials(&measured[n], y)?;
        let e_prev = &measured[n] - map.model.predict(y_prev)?;
        let mut c = DVector::zeros(d + l);
        c.rows_mut(d, l).copy_from(&(&g1 * &e_prev));
        steps.push(BundleStep {
            w_true: w_true.cloned(),
            w_hat,
            g1,
            g2,
            c,
            e_prev,
        });
    }
    Ok(CocycleBundle {
        steps,
        start: range.start,
        d,
        l,
        has_true: w_true.is_some(),
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PerturbedSeries {
    pub a: Vec<DVector<f64>>,
    pub b: Vec<DVector<f64>>,
    pub diverged_at: Option<usize>,
}

/// `(a, b)_{k+1} = M̂(ω_k)(a, b)_k + c(ω_k)` for `k < n_max`; with `forced`
/// false the forcing is dropped (the limiting cocycle).
pub fn perturbed_iterate(
    bundle: &CocycleBundle,
    initial: (DVector<f64>, DVector<f64>),
    n_max: usize,
    forced: bool,
) -> Result<PerturbedSeries> {
    if bundle.steps.len() < n_max {
        return Err(Error::SeriesTooShort {
            needed: n_max,
            actual: bundle.steps.len(),
        });
    }
    let (d, l) = (bundle.d, bundle.l);
    check_dim(d, initial.0.len())?;
    check_dim(l, initial.1.len())?;
    let mut z = DVector::zeros(d + l);
    z.rows_mut(0, d).copy_from(&initial.0);
    z.rows_mut(d, l).copy_from(&initial.1);
    let mut out = PerturbedSeries {
        a: vec![initial.0],
        b: vec![initial.1],
        diverged_at: None,
    };
    for (k, step) in bundle.steps[..n_max].iter().enumerate() {
        z = step.m_hat() * &z;
        if forced {
            z += &step.c;
        }
        if !z.iter().all(|v| v.is_finite()) {
            out.diverged_at = Some(k + 1);
            break;
        }
        out.a.push(z.rows(0, d).into_owned());
        out.b.push(z.rows(d, l).into_owned());
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FluctuationSeries {
    pub du: Vec<DVector<f64>>,
    pub dy: Vec<DVector<f64>>,
    pub a: Vec<DVector<f64>>,
    pub b: Vec<DVector<f64>>,
    /// `‖Δu_n‖ / ‖a_n‖`, with `0/0` read as 1.
    pub ratio: Vec<f64>,
    pub diverged_at: Option<usize>,
}

/// Fluctuations of the iteration started at `(φ(ω_s), Φ(ω_s))` from the
/// reference `(ŵ(Φ(ω_{s+n−1})), Φ(ω_{s+n}))`, with the matching perturbed
/// cocycle iterates.
pub fn fluctuations(
    map: &ReconstructedMap,
    lift: &EmbeddedSeries,
    measured: &[DVector<f64>],
    s: usize,
    n_max: usize,
    cap: f64,
) -> Result<FluctuationSeries> {
    let bundle = build_bundle(map, lift, measured, s..s + n_max, None)?;
    let init = bundle.initial_perturbation().ok_or(Error::Empty("bundle"))?;
    let pert = perturbed_iterate(&bundle, init, n_max, true)?;
    let y0 = lift.at(s).unwrap();
    let roll = map.iterate(&measured[s], y0, n_max, cap)?;
    let steps = roll.u.len().min(pert.a.len());
    let mut out = FluctuationSeries {
        diverged_at: roll.diverged_at.or(pert.diverged_at),
        ..Default::default()
    };
    for n in 0..steps {
        let reference = map.model.predict(lift.at(s + n - 1).unwrap())?;
        let du = reference - &roll.u[n];
        let dy = lift.at(s + n).unwrap() - &roll.y[n];
        let (na, nu) = (pert.a[n].norm(), du.norm());
        let ratio = if na == 0.0 && nu == 0.0 { 1.0 } else { nu / na };
        out.ratio.push(ratio);
        out.du.push(du);
        out.dy.push(dy);
        out.a.push(pert.a[n].clone());
        out.b.push(pert.b[n].clone());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityGap {
    pub model: LyapunovEstimate,
    pub system: LyapunovEstimate,
    /// `λ₁(𝒯̂) − λ₁(f)` per time unit.
    pub gap: f64,
    /// Largest distance from an exponent of `f` to the nearest exponent of `𝒯̂`.
    pub containment: f64,
}

/// Lyapunov spectra of the `M̂` cocycle along the true embedded orbit and of
/// the system Jacobian cocycle along the same states.
pub fn stability_gap(
    map: &ReconstructedMap,
    spec: &SystemSpec,
    states: &[State],
    lift: &EmbeddedSeries,
    measured: &[DVector<f64>],
    range: Range<usize>,
) -> Result<StabilityGap> {
    let n = range.len();
    let bundle = build_bundle(map, lift, measured, range.clone(), None)?;
    let idx: Vec<usize> = (0..n).collect();
    let dim = bundle.d + bundle.l;
    let model = lyapunov_spectrum(
        &BundleGenerator {
            bundle: &bundle,
            use_true: false,
        },
        &idx,
        n,
        dim,
        spec.dt,
    )?;
    let system = lyapunov_spectrum(&JacobianGenerator { spec }, &states[range], n, spec.state_dim(), spec.dt)?;
    let gap = model.per_time[0] - system.per_time[0];
    let containment = system
        .per_time
        .iter()
        .map(|s| model.per_time.iter().map(|m| (m - s).abs()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    Ok(StabilityGap {
        model,
        system,
        gap,
        containment,
    })
}

/// Derivative of the delay lift `ω ↦ (φ(ω), φ(f⁻¹ω), …)` on the torus.
fn torus_delay_derivative(spec: &SystemSpec, phi: &MeasurementMap, omega: &State, q: usize) -> DMatrix<f64> {
    let d = phi.output_dim(2);
    let mut dphi = DMatrix::zeros(q * d, 2);
    let mut point = omega.clone();
    for b in 0..q {
        dphi.view_mut((b * d, 0), (d, 2)).copy_from(&phi.jacobian(&point));
        point[0] -= spec.rotation[0];
        point[1] -= spec.rotation[1];
    }
    dphi
}

/// `C(ω) = max_v ‖Dψ v‖ / ‖DΦ v‖` along `orbit`, for an observable `ψ` and
/// the delay lift of `phi` with `q` delays (newest first, current value
/// included). Torus only, where `Df` is the identity.
pub fn sensitivity_constant(
    spec: &SystemSpec,
    psi: &MeasurementMap,
    phi: &MeasurementMap,
    q: usize,
    orbit: &[State],
) -> Result<Vec<f64>> {
    if spec.kind != SystemKind::TorusRotation {
        return Err(Error::Unsupported("sensitivity constant is implemented for the torus".into()));
    }
    if q == 0 {
        return Err(Error::invalid("delays", "must be at least 1"));
    }
    let mut out = Vec::with_capacity(orbit.len());
    for omega in orbit {
        let dpsi = psi.jacobian(omega);
        let dlift = torus_delay_derivative(spec, phi, omega, q);
        // ker DΦ must lie in ker Dψ: Dψ has to vanish on the complement of
        // the row space of DΦ
        let svd = dlift.clone().svd(false, true);
        let smax = svd.singular_values.max();
        let vt = svd.v_t.unwrap();
        let mut null_proj = DMatrix::<f64>::identity(2, 2);
        for (i, s) in svd.singular_values.iter().enumerate() {
            if *s > 1e-12 * smax.max(1.0) {
                let v = vt.row(i).transpose();
                null_proj -= &v * v.transpose();
            }
        }
        if (&dpsi * null_proj).norm() > 1e-10 * dpsi.norm().max(1.0) {
            return Err(Error::RankDeficient);
        }
        let c = &dpsi * pseudo_inverse(&dlift, 1e-12);
        out.push(crate::numerics::spectral_norm(&c));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(a: f64, b: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![a, b]))
    }

    #[test]
    fn empty_product_is_identity() {
        let g = ConstantGenerator(diag(2.0, 0.5));
        assert_eq!(cocycle_product(&g, &[(); 4], 0, 2).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn constant_cocycle_power() {
        let g = ConstantGenerator(diag(2.0, 0.5));
        assert_eq!(cocycle_product(&g, &[(); 3], 3, 0).unwrap(), diag(8.0, 0.125));
    }

    #[test]
    fn constant_cocycle_exponents() {
        let g = ConstantGenerator(diag(2.0, 0.5));
        let est = lyapunov_spectrum(&g, &[(); 2000], 2000, 2, 1.0).unwrap();
        assert!((est.per_step[0] - 2f64.ln()).abs() < 1e-3);
        assert!((est.per_step[1] + 2f64.ln()).abs() < 1e-3);
        assert_eq!(est.trace.len(), 100);
    }

    #[test]
    fn torus_exponents_vanish() {
        let spec = SystemSpec::torus();
        let orbit: Vec<State> = (0..1000).map(|i| State::from_vec(vec![i as f64, 0.0])).collect();
        let est = lyapunov_spectrum(&JacobianGenerator { spec: &spec }, &orbit, 1000, 2, 1.0).unwrap();
        assert!(est.per_step.iter().all(|l| l.abs() < 1e-8));
    }

    #[test]
    fn singular_generator_is_reported() {
        let g = ConstantGenerator(diag(1.0, 0.0));
        assert!(matches!(
            lyapunov_spectrum(&g, &[(); 1000], 1000, 2, 1.0),
            Err(Error::SingularCocycle { step: 0 })
        ));
    }

    fn synthetic_bundle(m: &DMatrix<f64>, c: &DVector<f64>, n: usize) -> CocycleBundle {
        let step = BundleStep {
            w_true: None,
            w_hat: m.view((0, 1), (1, 2)).into_owned(),
            g1: m.view((1, 0), (2, 1)).into_owned(),
            g2: m.view((1, 1), (2, 2)).into_owned(),
            c: c.clone(),
            e_prev: DVector::zeros(1),
        };
        CocycleBundle {
            steps: vec![step; n],
            start: 0,
            d: 1,
            l: 2,
            has_true: false,
        }
    }

    #[test]
    fn zero_forcing_keeps_zero() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.1, 1.0, 0.2, 0.0, 0.0, 1.0, 0.0]);
        let b = synthetic_bundle(&m, &DVector::zeros(3), 10);
        let r = perturbed_iterate(&b, (DVector::zeros(1), DVector::zeros(2)), 10, true).unwrap();
        assert!(r.a.iter().chain(r.b.iter()).all(|v| v.norm() == 0.0));
    }

    #[test]
    fn constant_coefficients_match_geometric_series() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.1, 0.3, 0.2, 0.0, 0.0, 0.4, 0.1]);
        let c = DVector::from_vec(vec![0.0, 1.0, -0.5]);
        let b = synthetic_bundle(&m, &c, 20);
        let r = perturbed_iterate(&b, (DVector::zeros(1), DVector::zeros(2)), 20, true).unwrap();
        // z_n = (I − M)⁻¹ (I − Mⁿ) c
        let id = DMatrix::<f64>::identity(3, 3);
        let inv = (&id - &m).try_inverse().unwrap();
        for n in 0..=20 {
            let z = &inv * (&id - m.pow(n as u32)) * &c;
            assert!((z[0] - r.a[n][0]).abs() < 1e-8);
            assert!((z.rows(1, 2) - &r.b[n]).norm() < 1e-8);
        }
    }

    #[test]
    fn unforced_iterate_is_cocycle_action() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.1, 1.0, 0.2, 0.0, 0.0, 1.0, 0.0]);
        let b = synthetic_bundle(&m, &DVector::from_element(3, 1.0), 7);
        let a0 = DVector::from_element(1, 0.3);
        let b0 = DVector::from_vec(vec![1.0, -2.0]);
        let r = perturbed_iterate(&b, (a0.clone(), b0.clone()), 7, false).unwrap();
        let idx: Vec<usize> = (0..7).collect();
        let p = cocycle_product(&BundleGenerator { bundle: &b, use_true: false }, &idx, 7, 0).unwrap();
        let z = p * DVector::from_vec(vec![a0[0], b0[0], b0[1]]);
        assert!((z[0] - r.a[7][0]).abs() < 1e-12);
    }

    #[test]
    fn sensitivity_of_sub_block_is_one() {
        let spec = SystemSpec::torus();
        let orbit = vec![State::from_vec(vec![0.4, 1.9])];
        let c = sensitivity_constant(&spec, &MeasurementMap::coordinate(0), &MeasurementMap::full_state(), 1, &orbit)
            .unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sensitivity_rejects_blind_lift() {
        let spec = SystemSpec::torus();
        let orbit = vec![State::from_vec(vec![0.4, 1.9])];
        let r = sensitivity_constant(&spec, &MeasurementMap::full_state(), &MeasurementMap::coordinate(0), 1, &orbit);
        assert!(matches!(r, Err(Error::RankDeficient)));
    }
}
