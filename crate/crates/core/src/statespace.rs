//! Continuous-time linear state-space models and their implicit time stepping.
//!
//! A zone's nodal thermal model is `dT/dt = A T + B u`, observed through
//! `y = C T + D u`. Models are advanced with backward Euler at a fixed step;
//! the factorization of `I - dt A` is what dominates the cost of a step and is
//! cached by [`ImplicitEuler`] for as long as `A` stays fixed.

use nalgebra::{DMatrix, DVector, Dyn, Schur, LU};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default output timestep: one hour.
pub const DEFAULT_DT: f64 = 3600.0;

/// Dense LTI model `(A, B, C, D)` with labelled states and inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub state_labels: Vec<String>,
    pub input_labels: Vec<String>,
}

impl StateSpaceModel {
    /// Builds a model after checking that the four matrices agree in shape.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        let state_labels = (0..n).map(|i| format!("x{i}")).collect();
        let input_labels = (0..b.ncols()).map(|j| format!("u{j}")).collect();
        Self::with_labels(a, b, c, d, state_labels, input_labels)
    }

    pub fn with_labels(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        state_labels: Vec<String>,
        input_labels: Vec<String>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!("A is {}x{}, expected square", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!("B has {} rows, expected {n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::Dimension(format!("C has {} columns, expected {n}", c.ncols())));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::Dimension(format!(
                "D is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            )));
        }
        if state_labels.len() != n || input_labels.len() != b.ncols() {
            return Err(Error::Dimension("label count does not match model size".into()));
        }
        Ok(Self { a, b, c, d, state_labels, input_labels })
    }

    /// Model whose outputs are the full state (`C = I`, `D = 0`).
    pub fn with_state_output(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        Self::new(a, b, DMatrix::identity(n, n), DMatrix::zeros(n, m))
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Output `C x + D u`.
    pub fn output(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.c * x + &self.d * u
    }

    /// Single output row `C[i,:] x + D[i,:] u`, without forming the full output.
    pub fn output_row(&self, i: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.c.row(i).dot(&x.transpose()) + self.d.row(i).dot(&u.transpose())
    }

    /// Steady state `-A^{-1} B u` for a constant input.
    pub fn steady_state(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let lu = self.a.clone().lu();
        let rhs = -(&self.b * u);
        lu.solve(&rhs).ok_or_else(|| Error::Unstable("A is singular".into()))
    }

    /// Factorizes `I - dt A` for repeated stepping.
    pub fn stepper(&self, dt: f64) -> Result<ImplicitEuler> {
        ImplicitEuler::new(&self.a, &self.b, dt)
    }
}

/// Which part of the input frame a column of `B` belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSegment {
    /// Outdoor air and sky temperatures.
    Meteorological,
    /// Short-wave flux densities incident on envelope surfaces.
    ShortWave,
    /// Heat delivered directly to the zone air.
    AirContribution,
    /// Temperatures of neighbouring zones.
    Coupling,
}

/// Ordered segment layout of a zone's input vector, fixed at construction.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InputFrame {
    pub columns: Vec<(InputSegment, String)>,
}

impl InputFrame {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn push(&mut self, segment: InputSegment, label: impl Into<String>) -> usize {
        // Segments must stay contiguous and in frame order.
        debug_assert!(self
            .columns
            .last()
            .map(|(s, _)| segment_rank(*s) <= segment_rank(segment))
            .unwrap_or(true));
        self.columns.push((segment, label.into()));
        self.columns.len() - 1
    }

    /// Column range occupied by `segment`.
    pub fn segment(&self, segment: InputSegment) -> std::ops::Range<usize> {
        let start = self.columns.iter().position(|(s, _)| *s == segment);
        match start {
            None => 0..0,
            Some(start) => {
                let len = self.columns[start..].iter().take_while(|(s, _)| *s == segment).count();
                start..start + len
            }
        }
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.columns.iter().position(|(_, l)| l == label)
    }

    pub fn labels(&self) -> Vec<String> {
        self.columns.iter().map(|(_, l)| l.clone()).collect()
    }
}

fn segment_rank(s: InputSegment) -> u8 {
    match s {
        InputSegment::Meteorological => 0,
        InputSegment::ShortWave => 1,
        InputSegment::AirContribution => 2,
        InputSegment::Coupling => 3,
    }
}

/// Simulated history; row `j` of each matrix belongs to `times[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: DMatrix<f64>,
    pub outputs: DMatrix<f64>,
    pub inputs: DMatrix<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Backward Euler integrator with a cached LU factorization of `I - dt A`.
#[derive(Debug, Clone)]
pub struct ImplicitEuler {
    lu: LU<f64, Dyn, Dyn>,
    b_dt: DMatrix<f64>,
    dt: f64,
}

impl ImplicitEuler {
    pub fn new(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Argument(format!("dt must be positive, got {dt}")));
        }
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n {
            return Err(Error::Dimension("A must be square with B rows matching".into()));
        }
        let mut m = a * (-dt);
        for i in 0..n {
            m[(i, i)] += 1.0;
        }
        let lu = m.lu();
        if !lu.is_invertible() {
            return Err(Error::SingularStep { dt });
        }
        Ok(Self { lu, b_dt: b * dt, dt })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn order(&self) -> usize {
        self.b_dt.nrows()
    }

    /// Writes the state after one step into `x` (which holds the previous state on entry).
    pub fn advance_in_place(&self, x: &mut DVector<f64>, u: &DVector<f64>) {
        x.gemv(1.0, &self.b_dt, u, 1.0);
        self.lu.solve_mut(x);
    }

    pub fn advance(&self, x_prev: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut x = x_prev.clone();
        self.advance_in_place(&mut x, u);
        x
    }
}

fn check_finite(a: &DMatrix<f64>) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Value("matrix has non-finite entries".into()))
    }
}

const SCHUR_MAX_ITERATIONS: usize = 10_000;

/// Real Schur form. The QR iteration in nalgebra can stall when deflating at
/// machine precision on stiff RC matrices, so the deflation threshold is
/// relaxed step by step up to `1e-12`.
pub(crate) fn real_schur(a: &DMatrix<f64>) -> Result<Schur<f64, Dyn>> {
    for eps in [f64::EPSILON, 1e-15, 1e-14, 1e-13, 1e-12] {
        if let Some(s) = Schur::try_new(a.clone(), eps, SCHUR_MAX_ITERATIONS) {
            return Ok(s);
        }
    }
    Err(Error::Convergence { iterations: SCHUR_MAX_ITERATIONS, residual: f64::NAN })
}

/// Eigenvalues of a square matrix as `(re, im)` pairs.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<(f64, f64)>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!("{}x{} matrix is not square", a.nrows(), a.ncols())));
    }
    check_finite(a)?;
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = real_schur(a)?;
    Ok(schur.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect())
}

/// True iff every eigenvalue has real part below `-1e-12 * ||A||`.
pub fn is_stable(a: &DMatrix<f64>) -> Result<bool> {
    let eig = eigenvalues(a)?;
    let tol = 1e-12 * a.norm();
    Ok(eig.iter().all(|&(re, _)| re < -tol))
}

/// Spectral abscissa (largest real part of the spectrum).
pub fn spectral_abscissa(a: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(a)?.into_iter().map(|(re, _)| re).fold(f64::NEG_INFINITY, f64::max))
}

/// Static gain `G(0) = -C A^{-1} B + D`.
pub fn dc_gain(model: &StateSpaceModel) -> Result<DMatrix<f64>> {
    if !is_stable(&model.a)? {
        return Err(Error::Unstable("dc gain requires a stable A".into()));
    }
    dc_gain_unchecked(&model.a, &model.b, &model.c, &model.d)
}

pub(crate) fn dc_gain_unchecked(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let x = a
        .clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Unstable("A is singular".into()))?;
    Ok(d - c * x)
}

/// One backward Euler step: solves `(I - dt A) x_now = x_prev + dt B u_now`.
pub fn step(
    model: &StateSpaceModel,
    x_prev: &DVector<f64>,
    u_now: &DVector<f64>,
    dt: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_vector_dims(model, x_prev, u_now)?;
    let stepper = model.stepper(dt)?;
    let x = stepper.advance(x_prev, u_now);
    let y = model.output(&x, u_now);
    Ok((x, y))
}

fn check_vector_dims(model: &StateSpaceModel, x: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
    if x.len() != model.order() {
        return Err(Error::Dimension(format!("state has {} entries, expected {}", x.len(), model.order())));
    }
    if u.len() != model.n_inputs() {
        return Err(Error::Dimension(format!("input has {} entries, expected {}", u.len(), model.n_inputs())));
    }
    Ok(())
}

/// Folds [`step`] over the rows of `inputs` (k x m), starting from `x0`.
pub fn simulate(
    model: &StateSpaceModel,
    inputs: &DMatrix<f64>,
    x0: &DVector<f64>,
    dt: f64,
) -> Result<Trajectory> {
    let k = inputs.nrows();
    if k == 0 {
        return Err(Error::Argument("at least one input row is required".into()));
    }
    if inputs.ncols() != model.n_inputs() {
        return Err(Error::Dimension(format!(
            "inputs have {} columns, expected {}",
            inputs.ncols(),
            model.n_inputs()
        )));
    }
    check_vector_dims(model, x0, &DVector::zeros(model.n_inputs()))?;
    let stepper = model.stepper(dt)?;
    let (n, p) = (model.order(), model.n_outputs());
    let mut states = DMatrix::zeros(k, n);
    let mut outputs = DMatrix::zeros(k, p);
    let mut times = Vec::with_capacity(k);
    let mut x = x0.clone();
    for j in 0..k {
        let u = inputs.row(j).transpose();
        stepper.advance_in_place(&mut x, &u);
        let y = model.output(&x, &u);
        states.row_mut(j).copy_from(&x.transpose());
        outputs.row_mut(j).copy_from(&y.transpose());
        times.push((j + 1) as f64 * dt);
    }
    Ok(Trajectory { times, states, outputs, inputs: inputs.clone() })
}
