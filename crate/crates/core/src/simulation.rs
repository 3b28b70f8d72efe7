//! Time loop over a multi-zone building under one of four strategies.
//!
//! Each step advances every zone by implicit Euler from the committed state.
//! Zones are visited in order and see the air temperatures already proposed
//! by earlier zones in the same pass (Gauss-Seidel). With a pressure network
//! the airflow is re-solved on the proposed temperatures and the thermal pass
//! repeated, up to [`COUPLING_MAX_ITERATIONS`] passes or until no flow moves
//! by more than [`COUPLING_FLOW_RTOL`] relative.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::airflow::{solve_network, FlowSchedule, NetworkConditions};
use crate::balred::{reduce, ReducedModel};
use crate::building::weather::format_timestamp;
use crate::building::{BuildingModel, InputAssembler, WeatherRecord, WeatherSeries, ZoneModel};
use crate::error::{Error, Result};
use crate::statespace::{ImplicitEuler, StateSpaceModel, DEFAULT_DT};
use crate::tvreduction::{
    recover_reduced_state, separate_reduce, AirRow, ConditionalReducer, CoupledReducedModel, CoupledState,
    DEFAULT_ITERATION_EPS, DEFAULT_MAX_ITERATIONS,
};

pub const COUPLING_MAX_ITERATIONS: usize = 3;
pub const COUPLING_FLOW_RTOL: f64 = 0.01;
/// Default reduction tolerance.
pub const DEFAULT_EPS: f64 = 0.2;
/// Default flow tolerance as a fraction of the mean design flow.
pub const DEFAULT_FLOW_TOLERANCE_FRACTION: f64 = 0.1;
const INITIAL_SWEEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Full,
    ReduceLti,
    Conditional,
    Separate,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Full, Strategy::ReduceLti, Strategy::Conditional, Strategy::Separate];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Full => "full",
            Strategy::ReduceLti => "reduce-lti",
            Strategy::Conditional => "conditional",
            Strategy::Separate => "separate",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown strategy {s:?} (full, reduce-lti, conditional, separate)")))
    }
}

/// Where mass flows come from.
#[derive(Debug, Clone, Default)]
pub enum FlowSource {
    /// Pressure network when the building has openings, nothing otherwise.
    #[default]
    Network,
    Schedule(FlowSchedule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub strategy: Strategy,
    pub eps: f64,
    /// kg/s; `None` picks a fraction of the mean design flow.
    pub flow_tolerance: Option<f64>,
    pub iteration_eps: f64,
    pub max_iterations: usize,
    pub dt: f64,
    /// Seconds since the epoch; defaults to the weather span.
    pub start: Option<f64>,
    pub end: Option<f64>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Full,
            eps: DEFAULT_EPS,
            flow_tolerance: None,
            iteration_eps: DEFAULT_ITERATION_EPS,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            dt: DEFAULT_DT,
            start: None,
            end: None,
        }
    }
}

impl SimulationConfig {
    pub fn with_strategy(strategy: Strategy) -> Self {
        Self { strategy, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0) {
            return Err(Error::Argument(format!("eps must be non-negative, got {}", self.eps)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Argument(format!("dt must be positive, got {}", self.dt)));
        }
        if let Some(tol) = self.flow_tolerance {
            if !(tol >= 0.0) {
                return Err(Error::Argument(format!("flow tolerance must be non-negative, got {tol}")));
            }
        }
        if !(self.iteration_eps > 0.0) || self.max_iterations == 0 {
            return Err(Error::Argument("iteration tolerance and iteration cap must be positive".into()));
        }
        if let (Some(a), Some(b)) = (self.start, self.end) {
            if !(b > a) {
                return Err(Error::Argument("end must come after start".into()));
            }
        }
        Ok(())
    }
}

/// Outcome of a run: one row per step, the initial condition excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub strategy: Strategy,
    pub zone_names: Vec<String>,
    pub link_ids: Vec<String>,
    pub t0: f64,
    pub initial_air: Vec<f64>,
    /// Opening flows at `t0`.
    pub initial_flows: Vec<f64>,
    pub times: Vec<f64>,
    /// `air[k][z]`: air temperature of zone `z` after step `k`.
    pub air: Vec<Vec<f64>>,
    /// Opening flows (kg/s) used by the final thermal pass of each step.
    pub flows: Vec<Vec<f64>>,
    /// Thermal/airflow passes per step.
    pub coupling_iterations: Vec<usize>,
    /// Largest envelope/air fixed-point count over zones per step (separate strategy).
    pub fixed_point_iterations: Vec<usize>,
    pub full_orders: Vec<usize>,
    /// Reduced order per zone at the end of the run (envelope order for `separate`).
    pub reduced_orders: Vec<usize>,
    /// A-priori bound per zone for the final reduced model, 0 when not reduced.
    pub bounds: Vec<f64>,
    pub rereductions: usize,
    pub flow_tolerance: f64,
    /// Wall-clock seconds spent building the reduced models before the loop.
    pub reduction_seconds: f64,
    /// Wall-clock seconds of the time loop.
    pub loop_seconds: f64,
}

impl SimulationResult {
    pub fn steps(&self) -> usize {
        self.times.len()
    }

    /// Air temperature series of zone `z`.
    pub fn zone_series(&self, z: usize) -> Vec<f64> {
        self.air.iter().map(|row| row[z]).collect()
    }

    /// CSV: timestamp, air temperature per zone, flow per link, iteration counts.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.zone_names.iter().map(|z| format!("T_{z}")));
        header.extend(self.link_ids.iter().map(|l| format!("m_{l}")));
        header.push("coupling_iterations".into());
        header.push("fixed_point_iterations".into());
        w.write_record(&header)?;
        for k in 0..self.steps() {
            let mut rec = vec![format_timestamp(self.times[k])];
            rec.extend(self.air[k].iter().map(|t| format!("{t:.6}")));
            rec.extend(self.flows[k].iter().map(|m| format!("{m:.9}")));
            rec.push(self.coupling_iterations[k].to_string());
            rec.push(self.fixed_point_iterations[k].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Full zone model at the given inflows.
pub fn zone_model_at(zone: &ZoneModel, inflows: &[f64]) -> Result<StateSpaceModel> {
    zone.pm.full_model(&zone.pm.air_row(inflows)?)
}

struct FullZone {
    x: DVector<f64>,
    proposal: DVector<f64>,
    row: AirRow,
    stepper: Option<ImplicitEuler>,
    cached_inflows: Vec<f64>,
}

struct LtiZone {
    reduced: ReducedModel,
    stepper: ImplicitEuler,
    x_r: DVector<f64>,
    proposal: DVector<f64>,
}

struct ConditionalZone {
    reducer: ConditionalReducer,
    pending: Option<ConditionalReducer>,
    proposal: DVector<f64>,
    u_prev: DVector<f64>,
}

struct SeparateZone {
    crm: CoupledReducedModel,
    state: CoupledState,
    proposal: Option<CoupledState>,
    row: AirRow,
}

enum Runner {
    Full(FullZone),
    Lti(LtiZone),
    Conditional(ConditionalZone),
    Separate(SeparateZone),
}

impl Runner {
    /// Proposes the next step; returns the new air temperature and fixed-point count.
    fn propose(&mut self, zone: &ZoneModel, u: &DVector<f64>, inflows: &[f64], dt: f64) -> Result<(f64, usize)> {
        let air = zone.air_state;
        match self {
            Runner::Full(f) => {
                if f.stepper.is_none() || f.cached_inflows.as_slice() != inflows {
                    zone.pm.air_row_into(&mut f.row, inflows)?;
                    let (a, b) = zone.pm.full_matrices(&f.row);
                    f.stepper = Some(ImplicitEuler::new(&a, &b, dt)?);
                    f.cached_inflows.clear();
                    f.cached_inflows.extend_from_slice(inflows);
                }
                f.proposal.copy_from(&f.x);
                f.stepper.as_ref().unwrap().advance_in_place(&mut f.proposal, u);
                Ok((f.proposal[air], 0))
            }
            Runner::Lti(l) => {
                l.proposal.copy_from(&l.x_r);
                l.stepper.advance_in_place(&mut l.proposal, u);
                Ok((l.reduced.model.output_row(air, &l.proposal, u), 0))
            }
            Runner::Conditional(c) => {
                if c.reducer.needs_update(inflows) {
                    let mut r = c.reducer.clone();
                    let t_prev = c.reducer.temperatures(&c.u_prev);
                    r.update(&zone_model_at(zone, inflows)?, inflows, &t_prev, &c.u_prev, dt)?;
                    c.proposal = r.advance(u);
                    let t = r.current.model.output_row(air, &c.proposal, u);
                    c.pending = Some(r);
                    Ok((t, 0))
                } else {
                    c.pending = None;
                    c.proposal = c.reducer.advance(u);
                    Ok((c.reducer.current.model.output_row(air, &c.proposal, u), 0))
                }
            }
            Runner::Separate(s) => {
                zone.pm.air_row_into(&mut s.row, inflows)?;
                let step = s.crm.coupled_step(&s.row, u, &s.state)?;
                let t = step.state.x2[0];
                s.proposal = Some(step.state);
                Ok((t, step.iterations))
            }
        }
    }

    fn commit(&mut self, u: &DVector<f64>) {
        match self {
            Runner::Full(f) => std::mem::swap(&mut f.x, &mut f.proposal),
            Runner::Lti(l) => std::mem::swap(&mut l.x_r, &mut l.proposal),
            Runner::Conditional(c) => {
                if let Some(r) = c.pending.take() {
                    c.reducer = r;
                }
                c.reducer.commit(c.proposal.clone());
                c.u_prev.copy_from(u);
            }
            Runner::Separate(s) => {
                if let Some(st) = s.proposal.take() {
                    s.state = st;
                }
            }
        }
    }

    fn reduced_order(&self, full: usize) -> usize {
        match self {
            Runner::Full(_) => full,
            Runner::Lti(l) => l.reduced.nr,
            Runner::Conditional(c) => c.reducer.current.nr,
            Runner::Separate(s) => s.crm.envelope_order(),
        }
    }

    fn bound(&self) -> f64 {
        match self {
            Runner::Full(_) => 0.0,
            Runner::Lti(l) => l.reduced.bound,
            Runner::Conditional(c) => c.reducer.current.bound,
            Runner::Separate(s) => s.crm.envelope_reduced.bound,
        }
    }

    fn rereductions(&self) -> usize {
        match self {
            Runner::Conditional(c) => c.reducer.rereductions,
            _ => 0,
        }
    }
}

/// Flow provider bound to a building for one run.
struct Flows<'a> {
    model: &'a BuildingModel,
    source: &'a FlowSource,
    pressures: Vec<f64>,
}

impl Flows<'_> {
    fn at(&mut self, t: f64, w: &WeatherRecord, air: &[f64]) -> Result<Vec<f64>> {
        if self.model.openings.is_empty() {
            return Ok(Vec::new());
        }
        match self.source {
            FlowSource::Schedule(s) => s.flows(t),
            FlowSource::Network => {
                let cond = NetworkConditions {
                    zone_temperatures: air,
                    outdoor_temperature: w.dry_bulb,
                    wind_speed: w.wind_speed,
                    wind_direction: w.wind_direction,
                };
                let s = solve_network(&self.model.openings, self.model.zones.len(), &cond, Some(&self.pressures))?;
                self.pressures = s.pressures;
                Ok(s.flows)
            }
        }
    }

    fn depends_on_temperature(&self) -> bool {
        matches!(self.source, FlowSource::Network) && !self.model.openings.is_empty()
    }
}

/// Steady state of the full building under the inputs at `t0`.
pub struct InitialCondition {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub air: Vec<f64>,
    pub flows: Vec<f64>,
}

fn initial_condition(
    model: &BuildingModel,
    asm: &InputAssembler,
    w: &WeatherRecord,
    flows: &mut Flows,
    t0: f64,
) -> Result<InitialCondition> {
    let nz = model.zones.len();
    let mut air = vec![model.initial_temperature; nz];
    let mut inputs: Vec<DVector<f64>> = model.zones.iter().map(|z| DVector::zeros(z.n_inputs())).collect();
    for (z, u) in inputs.iter_mut().enumerate() {
        asm.fill_weather(model, z, w, u);
    }
    let mut states: Vec<DVector<f64>> = model.zones.iter().map(|z| DVector::from_element(z.order(), model.initial_temperature)).collect();
    let mut flow_vec = Vec::new();
    for _ in 0..INITIAL_SWEEPS {
        flow_vec = flows.at(t0, w, &air)?;
        let mut change: f64 = 0.0;
        for (z, zone) in model.zones.iter().enumerate() {
            asm.fill_coupling(z, &air, &mut inputs[z]);
            let inflows = zone.inflows(&flow_vec);
            let x = zone_model_at(zone, &inflows)?.steady_state(&inputs[z])?;
            change = change.max((x[zone.air_state] - air[z]).abs());
            air[z] = x[zone.air_state];
            states[z] = x;
        }
        if change < 1e-10 {
            break;
        }
    }
    for (z, u) in inputs.iter_mut().enumerate() {
        asm.fill_coupling(z, &air, u);
    }
    Ok(InitialCondition { states, inputs, air, flows: flow_vec })
}

fn mean_abs(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
    }
}

fn with_time<T>(t: f64, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::At { timestamp: format_timestamp(t), source: Box::new(e) })
}

/// Runs `config.strategy` over the configured horizon.
pub fn simulate_building(
    model: &BuildingModel,
    weather: &WeatherSeries,
    source: &FlowSource,
    config: &SimulationConfig,
) -> Result<SimulationResult> {
    config.validate()?;
    let t0 = config.start.unwrap_or_else(|| weather.start());
    let t_end = config.end.unwrap_or_else(|| weather.end());
    if t0 < weather.start() || t_end > weather.end() {
        return Err(Error::Range { t: if t0 < weather.start() { t0 } else { t_end }, start: weather.start(), end: weather.end() });
    }
    let steps = ((t_end - t0) / config.dt + 1e-9).floor() as usize;
    if let FlowSource::Schedule(s) = source {
        let ids: Vec<String> = model.openings.iter().map(|o| o.id.clone()).collect();
        if s.links() != ids.as_slice() {
            return Err(Error::Topology("schedule links do not match the building openings".into()));
        }
    }

    let nz = model.zones.len();
    let mut asm = model.input_assembler();
    let w0 = weather.at(t0)?;
    asm.set_weather(model, &w0);
    let mut flows = Flows { model, source, pressures: vec![0.0; nz] };
    let init = with_time(t0, initial_condition(model, &asm, &w0, &mut flows, t0))?;
    let flow_tolerance = config
        .flow_tolerance
        .unwrap_or(DEFAULT_FLOW_TOLERANCE_FRACTION * mean_abs(&init.flows));

    let setup = Instant::now();
    let mut runners = Vec::with_capacity(nz);
    for (z, zone) in model.zones.iter().enumerate() {
        let inflows = zone.inflows(&init.flows);
        let x0 = &init.states[z];
        let u0 = &init.inputs[z];
        let ctx = |e: Error| Error::Value(format!("zone {}: {e}", zone.name));
        let runner = match config.strategy {
            Strategy::Full => Runner::Full(FullZone {
                x: x0.clone(),
                proposal: x0.clone(),
                row: zone.pm.air_row(&inflows)?,
                stepper: None,
                cached_inflows: Vec::new(),
            }),
            Strategy::ReduceLti => {
                let full = zone_model_at(zone, &inflows)?;
                let reduced = reduce(&full, config.eps).map_err(ctx)?;
                let x_r = recover_reduced_state(reduced.cr(), reduced.dr(), x0, u0)?.x;
                let stepper = reduced.model.stepper(config.dt)?;
                Runner::Lti(LtiZone { proposal: x_r.clone(), reduced, stepper, x_r })
            }
            Strategy::Conditional => {
                let full = zone_model_at(zone, &inflows)?;
                let reducer = ConditionalReducer::new(&full, &inflows, flow_tolerance, config.eps, config.dt, x0, u0)
                    .map_err(ctx)?;
                Runner::Conditional(ConditionalZone {
                    proposal: reducer.x_r.clone(),
                    reducer,
                    pending: None,
                    u_prev: u0.clone(),
                })
            }
            Strategy::Separate => {
                let crm = separate_reduce(&zone.pm, config.eps, config.dt, config.iteration_eps, config.max_iterations)
                    .map_err(ctx)?;
                let x2 = DVector::from_element(1, x0[zone.air_state]);
                let x_r = crm.steady_envelope(u0, &x2)?;
                Runner::Separate(SeparateZone {
                    crm,
                    state: CoupledState { x_r, x2 },
                    proposal: None,
                    row: zone.pm.air_row(&inflows)?,
                })
            }
        };
        runners.push(runner);
    }
    let reduction_seconds = setup.elapsed().as_secs_f64();

    let mut inputs = init.inputs.clone();
    let mut air = init.air.clone();
    let mut proposed = air.clone();
    let mut inflow_buf: Vec<Vec<f64>> = model.zones.iter().map(|z| vec![0.0; z.inflow_openings.len()]).collect();
    let mut times = Vec::with_capacity(steps);
    let mut air_rows = Vec::with_capacity(steps);
    let mut flow_rows = Vec::with_capacity(steps);
    let mut coupling_iterations = Vec::with_capacity(steps);
    let mut fixed_point_iterations = Vec::with_capacity(steps);
    let coupled = flows.depends_on_temperature();

    let start = Instant::now();
    for k in 1..=steps {
        let t = t0 + k as f64 * config.dt;
        let step = |runners: &mut Vec<Runner>,
                    flows: &mut Flows,
                    asm: &mut InputAssembler,
                    inputs: &mut Vec<DVector<f64>>,
                    proposed: &mut Vec<f64>,
                    inflow_buf: &mut Vec<Vec<f64>>|
         -> Result<(Vec<f64>, usize, usize)> {
            let w = weather.at(t)?;
            asm.set_weather(model, &w);
            for (z, u) in inputs.iter_mut().enumerate() {
                asm.fill_weather(model, z, &w, u);
            }
            let mut flow_vec = flows.at(t, &w, &air)?;
            let mut passes = 0;
            let mut fixed;
            loop {
                passes += 1;
                proposed.copy_from_slice(&air);
                fixed = 0;
                for (z, zone) in model.zones.iter().enumerate() {
                    asm.fill_coupling(z, proposed, &mut inputs[z]);
                    zone.inflows_into(&flow_vec, &mut inflow_buf[z]);
                    let (tz, it) = runners[z].propose(zone, &inputs[z], &inflow_buf[z], config.dt)?;
                    proposed[z] = tz;
                    fixed = fixed.max(it);
                }
                if !coupled || passes == COUPLING_MAX_ITERATIONS {
                    break;
                }
                let next = flows.at(t, &w, proposed)?;
                let moved = next
                    .iter()
                    .zip(&flow_vec)
                    .any(|(a, b)| (a - b).abs() > COUPLING_FLOW_RTOL * b.abs().max(a.abs()).max(1e-12));
                if !moved {
                    break;
                }
                flow_vec = next;
            }
            Ok((flow_vec, passes, fixed))
        };
        let (flow_vec, passes, fixed) =
            with_time(t, step(&mut runners, &mut flows, &mut asm, &mut inputs, &mut proposed, &mut inflow_buf))?;
        for (z, r) in runners.iter_mut().enumerate() {
            r.commit(&inputs[z]);
        }
        air.copy_from_slice(&proposed);
        times.push(t);
        air_rows.push(air.clone());
        flow_rows.push(flow_vec);
        coupling_iterations.push(passes);
        fixed_point_iterations.push(fixed);
    }
    let loop_seconds = start.elapsed().as_secs_f64();

    Ok(SimulationResult {
        strategy: config.strategy,
        zone_names: model.zones.iter().map(|z| z.name.clone()).collect(),
        link_ids: model.openings.iter().map(|o| o.id.clone()).collect(),
        t0,
        initial_air: init.air,
        initial_flows: init.flows,
        times,
        air: air_rows,
        flows: flow_rows,
        coupling_iterations,
        fixed_point_iterations,
        full_orders: model.orders(),
        reduced_orders: runners.iter().zip(model.zones.iter()).map(|(r, z)| r.reduced_order(z.order())).collect(),
        bounds: runners.iter().map(|r| r.bound()).collect(),
        rereductions: runners.iter().map(|r| r.rereductions()).sum(),
        flow_tolerance,
        reduction_seconds,
        loop_seconds,
    })
}
