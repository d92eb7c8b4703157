//! Reference dynamical systems: a quasiperiodic torus rotation, the Lorenz-63
//! flow sampled at a fixed interval, and their product with a rotating phase.
//!
//! Flows are discretized with a fixed-step classical Runge-Kutta scheme. The
//! Jacobian of the resulting one-step map is obtained by integrating the
//! variational equation with the same scheme, so it is the exact derivative
//! of the discrete map rather than of the continuous flow.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub type State = DVector<f64>;

/// Golden ratio, used for the default badly approximable rotation number.
pub const GOLDEN_RATIO: f64 = 1.618_033_988_749_895;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    TorusRotation,
    Lorenz63,
    L63Rot,
}

impl SystemKind {
    pub fn state_dim(self) -> usize {
        match self {
            SystemKind::TorusRotation => 2,
            SystemKind::Lorenz63 => 3,
            SystemKind::L63Rot => 4,
        }
    }

    /// Indices of the coordinates that live on the circle.
    pub fn angular_coordinates(self) -> &'static [usize] {
        match self {
            SystemKind::TorusRotation => &[0, 1],
            SystemKind::Lorenz63 => &[],
            SystemKind::L63Rot => &[0],
        }
    }

    pub fn is_angular(self, coordinate: usize) -> bool {
        self.angular_coordinates().contains(&coordinate)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }
}

/// Parameters of one reference system.
///
/// `rotation` holds the per-step rotation vector of the torus; the product
/// system uses its first entry as the phase increment. `dt` is the sampling
/// interval, which is 1 for the torus (a map has no underlying flow).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub kind: SystemKind,
    pub rotation: [f64; 2],
    pub lorenz: LorenzParams,
    pub dt: f64,
    pub substeps: usize,
    pub spin_up: usize,
}

pub fn default_rotation() -> [f64; 2] {
    [1.0, (TAU / GOLDEN_RATIO).rem_euclid(TAU)]
}

impl SystemSpec {
    pub fn torus() -> Self {
        Self {
            kind: SystemKind::TorusRotation,
            rotation: default_rotation(),
            lorenz: LorenzParams::default(),
            dt: 1.0,
            substeps: 1,
            spin_up: 0,
        }
    }

    pub fn lorenz63() -> Self {
        Self {
            kind: SystemKind::Lorenz63,
            rotation: default_rotation(),
            lorenz: LorenzParams::default(),
            dt: 0.01,
            substeps: 1,
            spin_up: 10_000,
        }
    }

    pub fn l63rot() -> Self {
        Self {
            kind: SystemKind::L63Rot,
            ..Self::lorenz63()
        }
    }

    pub fn for_kind(kind: SystemKind) -> Self {
        match kind {
            SystemKind::TorusRotation => Self::torus(),
            SystemKind::Lorenz63 => Self::lorenz63(),
            SystemKind::L63Rot => Self::l63rot(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.kind.state_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt", "must be positive and finite"));
        }
        if self.substeps == 0 {
            return Err(Error::invalid("substeps", "must be at least 1"));
        }
        if !self.rotation.iter().all(|r| r.is_finite()) {
            return Err(Error::invalid("rotation", "must be finite"));
        }
        Ok(())
    }

    /// A point on (or near) the attractor used when no initial state is given.
    pub fn default_initial_state(&self) -> State {
        match self.kind {
            SystemKind::TorusRotation => State::from_vec(vec![0.0, 0.0]),
            SystemKind::Lorenz63 => State::from_vec(vec![1.0, 1.0, 20.0]),
            SystemKind::L63Rot => State::from_vec(vec![0.0, 1.0, 1.0, 20.0]),
        }
    }

    /// Advance one sampling interval.
    pub fn step(&self, state: &State) -> Result<State> {
        check_dim(self.state_dim(), state.len())?;
        let next = match self.kind {
            SystemKind::TorusRotation => {
                let t = step_torus([state[0], state[1]], self.rotation);
                State::from_vec(t.to_vec())
            }
            SystemKind::Lorenz63 => {
                let x = step_lorenz63([state[0], state[1], state[2]], self)?;
                State::from_vec(x.to_vec())
            }
            SystemKind::L63Rot => {
                let s = step_l63rot([state[0], state[1], state[2], state[3]], self)?;
                State::from_vec(s.to_vec())
            }
        };
        Ok(next)
    }

    /// Jacobian of the one-step map at `state`.
    pub fn jacobian(&self, state: &State) -> Result<DMatrix<f64>> {
        Ok(self.step_with_jacobian(state)?.1)
    }

    /// One step together with the Jacobian of the step map at `state`.
    pub fn step_with_jacobian(&self, state: &State) -> Result<(State, DMatrix<f64>)> {
        check_dim(self.state_dim(), state.len())?;
        match self.kind {
            SystemKind::TorusRotation => Ok((self.step(state)?, DMatrix::identity(2, 2))),
            SystemKind::Lorenz63 => {
                let (x, j) = lorenz_variational([state[0], state[1], state[2]], self)?;
                Ok((State::from_vec(x.to_vec()), mat3_to_dmatrix(&j)))
            }
            SystemKind::L63Rot => {
                let theta = wrap_angle(state[0] + self.rotation[0]);
                let (x, j) = lorenz_variational([state[1], state[2], state[3]], self)?;
                let mut jac = DMatrix::zeros(4, 4);
                jac[(0, 0)] = 1.0;
                jac.view_mut((1, 1), (3, 3)).copy_from(&mat3_to_dmatrix(&j));
                Ok((State::from_vec(vec![theta, x[0], x[1], x[2]]), jac))
            }
        }
    }
}

#[inline]
fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid may round tiny negatives up to exactly TAU
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Rotate the torus by `rho`, reducing each angle to `[0, 2π)`.
pub fn step_torus(theta: [f64; 2], rho: [f64; 2]) -> [f64; 2] {
    [wrap_angle(theta[0] + rho[0]), wrap_angle(theta[1] + rho[1])]
}

fn lorenz_field(x: &Vector3<f64>, p: &LorenzParams) -> Vector3<f64> {
    Vector3::new(
        p.sigma * (x[1] - x[0]),
        x[0] * (p.rho - x[2]) - x[1],
        x[0] * x[1] - p.beta * x[2],
    )
}

fn lorenz_field_jacobian(x: &Vector3<f64>, p: &LorenzParams) -> Matrix3<f64> {
    Matrix3::new(
        -p.sigma,
        p.sigma,
        0.0,
        p.rho - x[2],
        -1.0,
        -x[0],
        x[1],
        x[0],
        -p.beta,
    )
}

/// Time-`dt` map of the Lorenz-63 flow by `substeps` RK4 steps.
pub fn step_lorenz63(x: [f64; 3], spec: &SystemSpec) -> Result<[f64; 3]> {
    if spec.substeps == 0 {
        return Err(Error::invalid("substeps", "must be at least 1"));
    }
    let h = spec.dt / spec.substeps as f64;
    let p = &spec.lorenz;
    let mut v = Vector3::from(x);
    for _ in 0..spec.substeps {
        let k1 = lorenz_field(&v, p);
        let k2 = lorenz_field(&(v + k1 * (0.5 * h)), p);
        let k3 = lorenz_field(&(v + k2 * (0.5 * h)), p);
        let k4 = lorenz_field(&(v + k3 * h), p);
        v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    if !v.iter().all(|c| c.is_finite()) {
        return Err(Error::NonFiniteState);
    }
    Ok([v[0], v[1], v[2]])
}

/// RK4 applied to the state and its variational equation jointly. The
/// returned matrix is the exact derivative of [`step_lorenz63`].
fn lorenz_variational(x: [f64; 3], spec: &SystemSpec) -> Result<([f64; 3], Matrix3<f64>)> {
    if spec.substeps == 0 {
        return Err(Error::invalid("substeps", "must be at least 1"));
    }
    let h = spec.dt / spec.substeps as f64;
    let p = &spec.lorenz;
    let mut v = Vector3::from(x);
    let mut m = Matrix3::identity();
    for _ in 0..spec.substeps {
        let v2 = |k: &Vector3<f64>, s: f64| v + k * s;
        let k1 = lorenz_field(&v, p);
        let j1 = lorenz_field_jacobian(&v, p) * m;
        let a2 = v2(&k1, 0.5 * h);
        let k2 = lorenz_field(&a2, p);
        let j2 = lorenz_field_jacobian(&a2, p) * (m + j1 * (0.5 * h));
        let a3 = v2(&k2, 0.5 * h);
        let k3 = lorenz_field(&a3, p);
        let j3 = lorenz_field_jacobian(&a3, p) * (m + j2 * (0.5 * h));
        let a4 = v2(&k3, h);
        let k4 = lorenz_field(&a4, p);
        let j4 = lorenz_field_jacobian(&a4, p) * (m + j3 * h);
        v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        m += (j1 + j2 * 2.0 + j3 * 2.0 + j4) * (h / 6.0);
    }
    if !v.iter().chain(m.iter()).all(|c| c.is_finite()) {
        return Err(Error::NonFiniteState);
    }
    Ok(([v[0], v[1], v[2]], m))
}

/// Angle advances by the phase increment; the Lorenz block by [`step_lorenz63`].
pub fn step_l63rot(state: [f64; 4], spec: &SystemSpec) -> Result<[f64; 4]> {
    let theta = wrap_angle(state[0] + spec.rotation[0]);
    let x = step_lorenz63([state[1], state[2], state[3]], spec)?;
    Ok([theta, x[0], x[1], x[2]])
}

fn mat3_to_dmatrix(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |i, j| m[(i, j)])
}

/// Shape of a measurement map before normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Measurement {
    FullState,
    CoordinateProjection { indices: Vec<usize> },
    /// Each row is a coefficient vector over the state coordinates.
    LinearCombination { coefficients: Vec<Vec<f64>> },
    /// `(cos x_i, sin x_i)` for every listed coordinate, in order.
    Trigonometric { indices: Vec<usize> },
}

/// Affine normalization `(x - mean) / scale` fitted on training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: DVector<f64>,
    pub scale: DVector<f64>,
}

/// Measurement map `φ` plus its normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementMap {
    pub measurement: Measurement,
    pub normalization: Option<Normalization>,
}

impl MeasurementMap {
    pub fn new(measurement: Measurement) -> Self {
        Self {
            measurement,
            normalization: None,
        }
    }

    pub fn full_state() -> Self {
        Self::new(Measurement::FullState)
    }

    pub fn coordinate(index: usize) -> Self {
        Self::new(Measurement::CoordinateProjection {
            indices: vec![index],
        })
    }

    pub fn trigonometric(indices: Vec<usize>) -> Self {
        Self::new(Measurement::Trigonometric { indices })
    }

    pub fn output_dim(&self, state_dim: usize) -> usize {
        match &self.measurement {
            Measurement::FullState => state_dim,
            Measurement::CoordinateProjection { indices } => indices.len(),
            Measurement::LinearCombination { coefficients } => coefficients.len(),
            Measurement::Trigonometric { indices } => 2 * indices.len(),
        }
    }

    pub fn validate(&self, state_dim: usize) -> Result<()> {
        let in_range = |idx: &[usize]| idx.iter().all(|&i| i < state_dim);
        match &self.measurement {
            Measurement::FullState => {}
            Measurement::CoordinateProjection { indices } | Measurement::Trigonometric { indices } => {
                if indices.is_empty() || !in_range(indices) {
                    return Err(Error::invalid(
                        "measurement.indices",
                        format!("must be a non-empty list of coordinates below {state_dim}"),
                    ));
                }
            }
            Measurement::LinearCombination { coefficients } => {
                if coefficients.is_empty() || coefficients.iter().any(|r| r.len() != state_dim) {
                    return Err(Error::invalid(
                        "measurement.coefficients",
                        format!("rows must have length {state_dim}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Unnormalized measurement.
    pub fn raw(&self, state: &State) -> DVector<f64> {
        match &self.measurement {
            Measurement::FullState => state.clone(),
            Measurement::CoordinateProjection { indices } => {
                DVector::from_iterator(indices.len(), indices.iter().map(|&i| state[i]))
            }
            Measurement::LinearCombination { coefficients } => DVector::from_iterator(
                coefficients.len(),
                coefficients
                    .iter()
                    .map(|row| row.iter().zip(state.iter()).map(|(a, b)| a * b).sum()),
            ),
            Measurement::Trigonometric { indices } => DVector::from_iterator(
                2 * indices.len(),
                indices
                    .iter()
                    .flat_map(|&i| [state[i].cos(), state[i].sin()]),
            ),
        }
    }

    /// Derivative of the unnormalized measurement, `d x m`.
    pub fn raw_jacobian(&self, state: &State) -> DMatrix<f64> {
        let m = state.len();
        match &self.measurement {
            Measurement::FullState => DMatrix::identity(m, m),
            Measurement::CoordinateProjection { indices } => {
                DMatrix::from_fn(indices.len(), m, |r, c| if indices[r] == c { 1.0 } else { 0.0 })
            }
            Measurement::LinearCombination { coefficients } => {
                DMatrix::from_fn(coefficients.len(), m, |r, c| coefficients[r][c])
            }
            Measurement::Trigonometric { indices } => {
                let mut j = DMatrix::zeros(2 * indices.len(), m);
                for (k, &i) in indices.iter().enumerate() {
                    j[(2 * k, i)] = -state[i].sin();
                    j[(2 * k + 1, i)] = state[i].cos();
                }
                j
            }
        }
    }

    pub fn apply(&self, state: &State) -> DVector<f64> {
        let raw = self.raw(state);
        match &self.normalization {
            Some(n) => (raw - &n.mean).component_div(&n.scale),
            None => raw,
        }
    }

    /// Derivative of the normalized measurement.
    pub fn jacobian(&self, state: &State) -> DMatrix<f64> {
        let mut j = self.raw_jacobian(state);
        if let Some(n) = &self.normalization {
            for (r, mut row) in j.row_iter_mut().enumerate() {
                row /= n.scale[r];
            }
        }
        j
    }

    /// Fit a zero-mean normalization with one common scale, chosen so that
    /// the mean squared Euclidean norm of the normalized series is 1.
    pub fn fit_normalization(&mut self, states: &[State]) -> Result<()> {
        if states.is_empty() {
            return Err(Error::Empty("normalization sample"));
        }
        let raws: Vec<DVector<f64>> = states.iter().map(|s| self.raw(s)).collect();
        let d = raws[0].len();
        let n = raws.len() as f64;
        let mut mean = DVector::zeros(d);
        for r in &raws {
            mean += r;
        }
        mean /= n;
        let ms: f64 = raws.iter().map(|r| (r - &mean).norm_squared()).sum::<f64>() / n;
        if !(ms > 0.0) {
            return Err(Error::invalid("measurement", "constant signal cannot be normalized"));
        }
        self.normalization = Some(Normalization {
            mean,
            scale: DVector::from_element(d, ms.sqrt()),
        });
        Ok(())
    }
}

/// A sampled orbit with its measured series.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub measured: Vec<DVector<f64>>,
    pub system: SystemSpec,
    pub measurement: MeasurementMap,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn measurement_dim(&self) -> usize {
        self.measured.first().map_or(0, |m| m.len())
    }

    /// Refit the normalization on `states[range]` and re-measure everything.
    pub fn normalize_on(&mut self, range: std::ops::Range<usize>) -> Result<()> {
        if range.end > self.states.len() || range.is_empty() {
            return Err(Error::invalid("normalization range", "out of bounds"));
        }
        self.measurement.fit_normalization(&self.states[range])?;
        self.measured = self.states.iter().map(|s| self.measurement.apply(s)).collect();
        Ok(())
    }

    /// One scalar component of the measured series.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.measured.iter().map(|m| m[c]).collect()
    }
}

/// Integrate `n` states starting `spin_up` steps after `initial`.
pub fn generate_trajectory(
    spec: &SystemSpec,
    initial: &State,
    n: usize,
    measurement: &MeasurementMap,
) -> Result<Trajectory> {
    spec.validate()?;
    check_dim(spec.state_dim(), initial.len())?;
    measurement.validate(spec.state_dim())?;
    if n == 0 {
        return Err(Error::invalid("length", "must be at least 1"));
    }
    if !initial.iter().all(|x| x.is_finite()) {
        return Err(Error::invalid("initial_state", "must be finite"));
    }
    let mut state = initial.clone();
    for _ in 0..spec.spin_up {
        state = spec.step(&state)?;
    }
    let mut states = Vec::with_capacity(n);
    states.push(state);
    for i in 1..n {
        let next = spec.step(&states[i - 1])?;
        states.push(next);
    }
    let measured = states.iter().map(|s| measurement.apply(s)).collect();
    Ok(Trajectory {
        states,
        measured,
        system: spec.clone(),
        measurement: measurement.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn torus_identity_rotation() {
        assert_eq!(step_torus([0.0, 0.0], [0.0, 0.0]), [0.0, 0.0]);
    }

    #[test]
    fn torus_wraps_modulo_two_pi() {
        let t = step_torus([6.0, 6.0], [0.5, 0.5]);
        assert!(close(t[0], 6.5 - TAU, 1e-15));
        assert!(close(t[0], 0.21681, 1e-5));
        assert!(t.iter().all(|x| (0.0..TAU).contains(x)));
    }

    #[test]
    fn torus_negative_tiny_angle_stays_in_range() {
        let t = step_torus([0.0, 0.0], [-1e-18, -1e-300]);
        assert!(t.iter().all(|x| (0.0..TAU).contains(x)));
    }

    #[test]
    fn torus_orbit_fills_the_circle() {
        let rho = default_rotation();
        let mut theta = [0.0, 0.0];
        let mut xs = [Vec::new(), Vec::new()];
        for _ in 0..10_000 {
            xs[0].push(theta[0]);
            xs[1].push(theta[1]);
            theta = step_torus(theta, rho);
        }
        for coord in xs.iter_mut() {
            coord.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut gap = coord[0] + TAU - coord[coord.len() - 1];
            for w in coord.windows(2) {
                gap = gap.max(w[1] - w[0]);
            }
            assert!(gap < 0.2, "gap {gap}");
        }
    }

    #[test]
    fn lorenz_origin_is_fixed() {
        let spec = SystemSpec::lorenz63();
        assert_eq!(step_lorenz63([0.0; 3], &spec).unwrap(), [0.0; 3]);
    }

    #[test]
    fn lorenz_nontrivial_equilibrium_is_fixed() {
        let spec = SystemSpec::lorenz63();
        let c = 72f64.sqrt();
        let x = step_lorenz63([c, c, 27.0], &spec).unwrap();
        for (a, b) in x.iter().zip([c, c, 27.0]) {
            assert!(close(*a, b, 1e-9));
        }
    }

    fn lorenz_with_substeps(x0: [f64; 3], substeps: usize) -> [f64; 3] {
        let spec = SystemSpec {
            substeps,
            ..SystemSpec::lorenz63()
        };
        step_lorenz63(x0, &spec).unwrap()
    }

    fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
        a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn lorenz_step_refinement_agrees() {
        let x0 = [1.3, -2.1, 18.0];
        let reference = lorenz_with_substeps(x0, 100);
        let coarse = lorenz_with_substeps(x0, 1);
        assert!(distance(coarse, reference) < 1e-5);
        // one-step error of a fourth-order scheme scales like h^5; at this step
        // size the ratio is still below the asymptotic 32
        let half = lorenz_with_substeps(x0, 2);
        let ratio = distance(coarse, reference) / distance(half, reference);
        assert!((12.0..45.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn lorenz_blow_up_is_rejected() {
        let spec = SystemSpec::lorenz63();
        assert!(matches!(
            step_lorenz63([1e150, 1e150, 1e150], &spec),
            Err(Error::NonFiniteState)
        ));
    }

    #[test]
    fn l63rot_equilibrium_and_zero_phase() {
        let spec = SystemSpec {
            rotation: [0.0, 0.0],
            ..SystemSpec::l63rot()
        };
        assert_eq!(step_l63rot([0.0; 4], &spec).unwrap(), [0.0; 4]);
    }

    #[test]
    fn l63rot_phase_is_independent_of_lorenz_block() {
        let spec = SystemSpec::l63rot();
        let a = step_l63rot([0.3, 1.0, 2.0, 20.0], &spec).unwrap();
        let b = step_l63rot([0.3, -5.0, 7.0, 30.0], &spec).unwrap();
        assert_eq!(a[0], b[0]);
    }

    #[test]
    fn l63rot_phase_has_closed_form() {
        let spec = SystemSpec::l63rot();
        let theta0 = 0.4;
        let mut s = [theta0, 1.0, 1.0, 20.0];
        for _ in 0..1000 {
            s = step_l63rot(s, &spec).unwrap();
        }
        let expected = (theta0 + 1000.0 * spec.rotation[0]).rem_euclid(TAU);
        assert!(close(s[0], expected, 1e-9), "{} vs {expected}", s[0]);
    }

    #[test]
    fn torus_trajectory_with_full_state_measurement() {
        let spec = SystemSpec::torus();
        let t = generate_trajectory(
            &spec,
            &State::from_vec(vec![0.1, 0.2]),
            3,
            &MeasurementMap::full_state(),
        )
        .unwrap();
        assert_eq!(t.len(), 3);
        for (s, m) in t.states.iter().zip(&t.measured) {
            assert_eq!(s, m);
        }
    }

    #[test]
    fn lorenz_spun_up_orbit_stays_in_box() {
        let spec = SystemSpec::lorenz63();
        let t = generate_trajectory(
            &spec,
            &spec.default_initial_state(),
            20_000,
            &MeasurementMap::full_state(),
        )
        .unwrap();
        for s in &t.states {
            assert!((-25.0..=25.0).contains(&s[0]));
            assert!((-30.0..=30.0).contains(&s[1]));
            assert!((0.0..=55.0).contains(&s[2]));
        }
    }

    #[test]
    fn normalized_series_has_zero_mean_unit_norm() {
        let spec = SystemSpec::lorenz63();
        let mut t = generate_trajectory(
            &spec,
            &spec.default_initial_state(),
            5_000,
            &MeasurementMap::full_state(),
        )
        .unwrap();
        t.normalize_on(0..t.len()).unwrap();
        let n = t.len() as f64;
        for c in 0..3 {
            let mean: f64 = t.measured.iter().map(|m| m[c]).sum::<f64>() / n;
            assert!(mean.abs() < 1e-12, "mean {mean}");
        }
        let ms: f64 = t.measured.iter().map(|m| m.norm_squared()).sum::<f64>() / n;
        assert!(close(ms, 1.0, 1e-12));
    }

    #[test]
    fn torus_jacobian_is_identity() {
        let spec = SystemSpec::torus();
        let j = spec.jacobian(&State::from_vec(vec![1.0, 2.0])).unwrap();
        assert_eq!(j, DMatrix::identity(2, 2));
    }

    #[test]
    fn l63rot_jacobian_is_block_diagonal() {
        let spec = SystemSpec::l63rot();
        let s = State::from_vec(vec![0.5, 1.0, 2.0, 20.0]);
        let j = spec.jacobian(&s).unwrap();
        assert_eq!(j[(0, 0)], 1.0);
        for k in 1..4 {
            assert_eq!(j[(0, k)], 0.0);
            assert_eq!(j[(k, 0)], 0.0);
        }
        let jl = SystemSpec::lorenz63()
            .jacobian(&State::from_vec(vec![1.0, 2.0, 20.0]))
            .unwrap();
        assert_eq!(j.view((1, 1), (3, 3)).clone_owned(), jl);
    }

    #[test]
    fn trigonometric_measurement_jacobian_matches_finite_differences() {
        let m = MeasurementMap::trigonometric(vec![0, 1]);
        let s = State::from_vec(vec![0.7, 2.9]);
        let j = m.raw_jacobian(&s);
        let h = 1e-6;
        for c in 0..2 {
            let mut sp = s.clone();
            sp[c] += h;
            let mut sm = s.clone();
            sm[c] -= h;
            let fd = (m.raw(&sp) - m.raw(&sm)) / (2.0 * h);
            for r in 0..4 {
                assert!(close(j[(r, c)], fd[r], 1e-8));
            }
        }
    }
}
