//! Reduction strategies for thermal models whose air-node coefficients vary
//! with the airflow.
//!
//! * Conditional reduction keeps one reduced model and rebuilds it only when
//!   an airflow drifts past a tolerance. After a rebuild the previous reduced
//!   state is re-estimated from the previous temperatures by least squares.
//! * Separate reduction splits the states into the constant-coefficient
//!   envelope `X1` and the zone air `X2`. The envelope is reduced once with
//!   `X2` appended to its inputs; the air dynamics stay at full order. Both
//!   halves are coupled per step by fixed-point iteration on `X2`.

use nalgebra::{DMatrix, DVector};

use crate::balred::{reduce, ReducedModel};
use crate::error::{Error, Result};
use crate::statespace::{is_stable, ImplicitEuler, StateSpaceModel};

/// Rows of the time-varying air block: `dX2/dt = a21 X1 + a22 X2 + b2 u`.
#[derive(Debug, Clone, PartialEq)]
pub struct AirRow {
    pub a21: DMatrix<f64>,
    pub a22: DMatrix<f64>,
    pub b2: DMatrix<f64>,
}

/// Inflow of outside or neighbouring air into an air node.
///
/// An inflow `q` (kg/s) adds `-q k` to `a22[node, node]` and `+q k` to
/// `b2[node, source_column]`, with `k = cp / C_air` (1/kg).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InflowTerm {
    pub air_node: usize,
    pub source_column: usize,
    pub k: f64,
}

/// State partition `[X1; X2]` with constant envelope rows and air rows that
/// depend on the current inflows.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedModel {
    pub a11: DMatrix<f64>,
    pub a12: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    /// Air rows with every inflow at zero.
    pub base_air: AirRow,
    pub inflows: Vec<InflowTerm>,
    pub state_labels: Vec<String>,
    pub input_labels: Vec<String>,
}

impl PartitionedModel {
    pub fn new(
        a11: DMatrix<f64>,
        a12: DMatrix<f64>,
        b1: DMatrix<f64>,
        base_air: AirRow,
        inflows: Vec<InflowTerm>,
    ) -> Result<Self> {
        let n1 = a11.nrows();
        let n2 = base_air.a22.nrows();
        let m = b1.ncols();
        let ok = a11.ncols() == n1
            && a12.nrows() == n1
            && a12.ncols() == n2
            && b1.nrows() == n1
            && base_air.a21.shape() == (n2, n1)
            && base_air.a22.shape() == (n2, n2)
            && base_air.b2.shape() == (n2, m);
        if !ok {
            return Err(Error::Dimension("inconsistent partition blocks".into()));
        }
        if inflows.iter().any(|f| f.air_node >= n2 || f.source_column >= m) {
            return Err(Error::Dimension("inflow term refers to a missing node or column".into()));
        }
        let state_labels = (0..n1 + n2).map(|i| format!("x{i}")).collect();
        let input_labels = (0..m).map(|j| format!("u{j}")).collect();
        Ok(Self { a11, a12, b1, base_air, inflows, state_labels, input_labels })
    }

    pub fn n1(&self) -> usize {
        self.a11.nrows()
    }

    pub fn n2(&self) -> usize {
        self.base_air.a22.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b1.ncols()
    }

    pub fn order(&self) -> usize {
        self.n1() + self.n2()
    }

    /// Air rows for the given inflows (kg/s, one per [`InflowTerm`]).
    pub fn air_row(&self, inflows: &[f64]) -> Result<AirRow> {
        let mut row = self.base_air.clone();
        self.apply_inflows(&mut row, inflows)?;
        Ok(row)
    }

    /// Overwrites `row` with the air rows for `inflows`, reusing its storage.
    pub fn air_row_into(&self, row: &mut AirRow, inflows: &[f64]) -> Result<()> {
        row.a21.copy_from(&self.base_air.a21);
        row.a22.copy_from(&self.base_air.a22);
        row.b2.copy_from(&self.base_air.b2);
        self.apply_inflows(row, inflows)
    }

    fn apply_inflows(&self, row: &mut AirRow, inflows: &[f64]) -> Result<()> {
        if inflows.len() != self.inflows.len() {
            return Err(Error::Dimension(format!(
                "{} inflows given, model has {} inflow terms",
                inflows.len(),
                self.inflows.len()
            )));
        }
        for (term, &q) in self.inflows.iter().zip(inflows) {
            if q < 0.0 {
                return Err(Error::Value(format!("inflow must be non-negative, got {q}")));
            }
            row.a22[(term.air_node, term.air_node)] -= q * term.k;
            row.b2[(term.air_node, term.source_column)] += q * term.k;
        }
        Ok(())
    }

    /// Full state matrix and input matrix for the given air rows.
    pub fn full_matrices(&self, air: &AirRow) -> (DMatrix<f64>, DMatrix<f64>) {
        let (n1, n2, m) = (self.n1(), self.n2(), self.n_inputs());
        let n = n1 + n2;
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a11);
        a.view_mut((0, n1), (n1, n2)).copy_from(&self.a12);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&air.a21);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&air.a22);
        let mut b = DMatrix::zeros(n, m);
        b.view_mut((0, 0), (n1, m)).copy_from(&self.b1);
        b.view_mut((n1, 0), (n2, m)).copy_from(&air.b2);
        (a, b)
    }

    /// Full model with every nodal temperature as output (`C = I`, `D = 0`).
    pub fn full_model(&self, air: &AirRow) -> Result<StateSpaceModel> {
        let (a, b) = self.full_matrices(air);
        let n = a.nrows();
        let m = b.ncols();
        StateSpaceModel::with_labels(
            a,
            b,
            DMatrix::identity(n, n),
            DMatrix::zeros(n, m),
            self.state_labels.clone(),
            self.input_labels.clone(),
        )
    }

    /// Envelope subsystem `dX1/dt = A11 X1 + [B1 | A12] (u; X2)`, all of `X1` observed.
    pub fn envelope_model(&self) -> Result<StateSpaceModel> {
        let (n1, n2, m) = (self.n1(), self.n2(), self.n_inputs());
        let mut b = DMatrix::zeros(n1, m + n2);
        b.view_mut((0, 0), (n1, m)).copy_from(&self.b1);
        b.view_mut((0, m), (n1, n2)).copy_from(&self.a12);
        let mut inputs = self.input_labels.clone();
        inputs.extend(self.state_labels[n1..].iter().cloned());
        StateSpaceModel::with_labels(
            self.a11.clone(),
            b,
            DMatrix::identity(n1, n1),
            DMatrix::zeros(n1, m + n2),
            self.state_labels[..n1].to_vec(),
            inputs,
        )
    }
}

/// Least-squares estimate of a reduced state.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredState {
    pub x: DVector<f64>,
    /// `||Cr x - (T - Dr u)||_2` at the solution.
    pub residual: f64,
    /// Set when `Cr` lacks full column rank; `x` is then the minimum-norm solution.
    pub rank_deficient: bool,
}

/// Solves `min ||Cr x - (T_prev - Dr u_prev)||_2` by QR factorization.
pub fn recover_reduced_state(
    cr: &DMatrix<f64>,
    dr: &DMatrix<f64>,
    t_prev: &DVector<f64>,
    u_prev: &DVector<f64>,
) -> Result<RecoveredState> {
    let (p, nr) = cr.shape();
    if dr.nrows() != p || t_prev.len() != p || dr.ncols() != u_prev.len() {
        return Err(Error::Dimension("recover_reduced_state: inconsistent shapes".into()));
    }
    let rhs = t_prev - dr * u_prev;
    let mut rank_deficient = p < nr;
    let mut x = None;
    if !rank_deficient {
        let qr = cr.clone().qr();
        let r = qr.r();
        let rmax = r.diagonal().amax();
        rank_deficient = rmax == 0.0 || r.diagonal().iter().any(|d| d.abs() <= 1e-12 * rmax);
        if !rank_deficient {
            let qtb = qr.q().transpose() * &rhs;
            x = r.solve_upper_triangular(&qtb);
            rank_deficient = x.is_none();
        }
    }
    let x = match x {
        Some(x) => x,
        None => {
            let svd = cr.clone().svd(true, true);
            let tol = 1e-12 * svd.singular_values.amax();
            svd.solve(&rhs, tol).map_err(|e| Error::Value(e.to_string()))?
        }
    };
    let residual = (cr * &x - rhs).norm();
    Ok(RecoveredState { x, residual, rank_deficient })
}

/// Reduced model that is rebuilt when airflow drifts beyond a tolerance.
#[derive(Debug, Clone)]
pub struct ConditionalReducer {
    pub current: ReducedModel,
    pub reference_flows: Vec<f64>,
    pub flow_tolerance: f64,
    pub eps: f64,
    pub x_r: DVector<f64>,
    stepper: ImplicitEuler,
    /// Number of rebuilds after construction.
    pub rereductions: usize,
    /// Residual of the latest state recovery.
    pub last_residual: f64,
    pub rank_warnings: usize,
}

/// Result of [`ConditionalReducer::conditional_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalOutcome {
    pub t_now: DVector<f64>,
    pub did_rereduce: bool,
}

impl ConditionalReducer {
    /// Reduces `full_model` and places the reduced state so that it best
    /// reproduces the temperatures `t0` under input `u0`.
    pub fn new(
        full_model: &StateSpaceModel,
        flows: &[f64],
        flow_tolerance: f64,
        eps: f64,
        dt: f64,
        t0: &DVector<f64>,
        u0: &DVector<f64>,
    ) -> Result<Self> {
        if !(flow_tolerance >= 0.0) {
            return Err(Error::Argument(format!("flow tolerance must be non-negative, got {flow_tolerance}")));
        }
        let current = reduce(full_model, eps)?;
        let rec = recover_reduced_state(current.cr(), current.dr(), t0, u0)?;
        let stepper = current.model.stepper(dt)?;
        Ok(Self {
            current,
            reference_flows: flows.to_vec(),
            flow_tolerance,
            eps,
            x_r: rec.x,
            stepper,
            rereductions: 0,
            last_residual: rec.residual,
            rank_warnings: rec.rank_deficient as usize,
        })
    }

    /// Whether `flows_now` departs from the flows of the last reduction by more than the tolerance.
    pub fn needs_update(&self, flows_now: &[f64]) -> bool {
        flows_now.len() != self.reference_flows.len()
            || flows_now
                .iter()
                .zip(&self.reference_flows)
                .any(|(a, b)| (a - b).abs() > self.flow_tolerance)
    }

    /// Current temperatures `Cr x_r + Dr u`.
    pub fn temperatures(&self, u: &DVector<f64>) -> DVector<f64> {
        self.current.model.output(&self.x_r, u)
    }

    /// Rebuilds the reduced model if the flows drifted; the state at the
    /// previous step is then re-estimated from `(t_prev, u_prev)`.
    pub fn update(
        &mut self,
        full_model_now: &StateSpaceModel,
        flows_now: &[f64],
        t_prev: &DVector<f64>,
        u_prev: &DVector<f64>,
        dt: f64,
    ) -> Result<bool> {
        if !self.needs_update(flows_now) {
            if dt != self.stepper.dt() {
                self.stepper = self.current.model.stepper(dt)?;
            }
            return Ok(false);
        }
        let reduced = reduce(full_model_now, self.eps)?;
        let rec = recover_reduced_state(reduced.cr(), reduced.dr(), t_prev, u_prev)?;
        self.stepper = reduced.model.stepper(dt)?;
        self.current = reduced;
        self.reference_flows = flows_now.to_vec();
        self.x_r = rec.x;
        self.last_residual = rec.residual;
        self.rank_warnings += rec.rank_deficient as usize;
        self.rereductions += 1;
        Ok(true)
    }

    /// Next reduced state from the current one, without committing it.
    pub fn advance(&self, u_now: &DVector<f64>) -> DVector<f64> {
        self.stepper.advance(&self.x_r, u_now)
    }

    pub fn commit(&mut self, x_r: DVector<f64>) {
        self.x_r = x_r;
    }

    /// Re-reduces if needed, then advances one step and returns the temperatures.
    pub fn conditional_step(
        &mut self,
        full_model_now: &StateSpaceModel,
        flows_now: &[f64],
        u_now: &DVector<f64>,
        t_prev: &DVector<f64>,
        u_prev: &DVector<f64>,
        dt: f64,
    ) -> Result<ConditionalOutcome> {
        let did_rereduce = self.update(full_model_now, flows_now, t_prev, u_prev, dt)?;
        let x = self.advance(u_now);
        let t_now = self.current.model.output(&x, u_now);
        self.commit(x);
        Ok(ConditionalOutcome { t_now, did_rereduce })
    }
}

/// Default convergence tolerance of the envelope/air iteration, in degC.
pub const DEFAULT_ITERATION_EPS: f64 = 1e-3;
pub const DEFAULT_MAX_ITERATIONS: usize = 50;

/// Envelope reduced once, air dynamics at full order, coupled per step.
#[derive(Debug, Clone)]
pub struct CoupledReducedModel {
    pub envelope_reduced: ReducedModel,
    envelope_stepper: ImplicitEuler,
    pub iteration_eps: f64,
    pub max_iterations: usize,
    pub dt: f64,
    /// Whether the reduced envelope responds to the air temperature at all.
    feedback: bool,
    n_inputs: usize,
}

/// Per-run state of a [`CoupledReducedModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    pub x_r: DVector<f64>,
    pub x2: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledStep {
    pub state: CoupledState,
    pub iterations: usize,
    /// `||X2_hat - X2||_inf` at exit.
    pub residual: f64,
}

/// Reduces the envelope subsystem of `pm` once with tolerance `eps`.
pub fn separate_reduce(
    pm: &PartitionedModel,
    eps: f64,
    dt: f64,
    iteration_eps: f64,
    max_iterations: usize,
) -> Result<CoupledReducedModel> {
    if !is_stable(&pm.a11)? {
        return Err(Error::Unstable("envelope block A11 must be stable".into()));
    }
    if !(iteration_eps > 0.0) || max_iterations == 0 {
        return Err(Error::Argument("iteration tolerance and iteration cap must be positive".into()));
    }
    let envelope = pm.envelope_model()?;
    let envelope_reduced = reduce(&envelope, eps)?;
    let envelope_stepper = envelope_reduced.model.stepper(dt)?;
    let m = pm.n_inputs();
    let n2 = pm.n2();
    let br = envelope_reduced.br();
    let dr = envelope_reduced.dr();
    let feedback = pm.a12.amax() != 0.0
        && (br.columns(m, n2).amax() != 0.0 || dr.columns(m, n2).amax() != 0.0);
    Ok(CoupledReducedModel {
        envelope_reduced,
        envelope_stepper,
        iteration_eps,
        max_iterations,
        dt,
        feedback,
        n_inputs: m,
    })
}

impl CoupledReducedModel {
    pub fn envelope_order(&self) -> usize {
        self.envelope_reduced.nr
    }

    /// Extended input `(u; X2)`.
    pub fn extended_input(&self, u: &DVector<f64>, x2: &DVector<f64>) -> DVector<f64> {
        let mut e = DVector::zeros(u.len() + x2.len());
        e.rows_mut(0, u.len()).copy_from(u);
        e.rows_mut(u.len(), x2.len()).copy_from(x2);
        e
    }

    /// Envelope temperatures `Cr x_r + Dr (u; X2)`.
    pub fn envelope_temperatures(&self, x_r: &DVector<f64>, u: &DVector<f64>, x2: &DVector<f64>) -> DVector<f64> {
        let ext = self.extended_input(u, x2);
        self.envelope_reduced.model.output(x_r, &ext)
    }

    /// Reduced envelope state in steady state with constant `(u, x2)`.
    pub fn steady_envelope(&self, u: &DVector<f64>, x2: &DVector<f64>) -> Result<DVector<f64>> {
        self.envelope_reduced.model.steady_state(&self.extended_input(u, x2))
    }

    /// One envelope step from `x_r_prev` with the air temperature held at `x2_hat`.
    pub fn envelope_step(&self, x_r_prev: &DVector<f64>, u: &DVector<f64>, x2_hat: &DVector<f64>) -> DVector<f64> {
        self.envelope_stepper.advance(x_r_prev, &self.extended_input(u, x2_hat))
    }

    /// One implicit step of the air rows given envelope temperatures `x1_hat`.
    pub fn air_step(
        &self,
        air: &AirRow,
        x2_prev: &DVector<f64>,
        u: &DVector<f64>,
        x1_hat: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let n2 = x2_prev.len();
        let mut lhs = &air.a22 * (-self.dt);
        for i in 0..n2 {
            lhs[(i, i)] += 1.0;
        }
        let rhs = x2_prev + (&air.b2 * u + &air.a21 * x1_hat) * self.dt;
        if n2 == 1 {
            return Ok(DVector::from_element(1, rhs[0] / lhs[(0, 0)]));
        }
        lhs.lu().solve(&rhs).ok_or(Error::SingularStep { dt: self.dt })
    }

    /// Fixed-point step: envelope with `X2_hat`, rebuild `X1_hat`, air step to
    /// `X2`, repeat with `X2_hat <- X2` until they agree to `iteration_eps`.
    pub fn coupled_step(&self, air: &AirRow, u_now: &DVector<f64>, state: &CoupledState) -> Result<CoupledStep> {
        if u_now.len() != self.n_inputs {
            return Err(Error::Dimension(format!("input has {} entries, expected {}", u_now.len(), self.n_inputs)));
        }
        let mut x2_hat = state.x2.clone();
        let mut residual = f64::INFINITY;
        for it in 1..=self.max_iterations {
            let x_r = self.envelope_step(&state.x_r, u_now, &x2_hat);
            let x1_hat = self.envelope_temperatures(&x_r, u_now, &x2_hat);
            let x2 = self.air_step(air, &state.x2, u_now, &x1_hat)?;
            residual = (&x2 - &x2_hat).amax();
            if residual < self.iteration_eps || !self.feedback {
                return Ok(CoupledStep { state: CoupledState { x_r, x2 }, iterations: it, residual });
            }
            x2_hat = x2;
        }
        Err(Error::Convergence { iterations: self.max_iterations, residual })
    }
}
