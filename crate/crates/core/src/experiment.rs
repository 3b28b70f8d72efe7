//! Strategy comparison, tolerance sweeps and the cubic timing model.
//!
//! Timings cover the time loop only; building the reduced models is timed
//! separately and reported alongside.

use serde::{Deserialize, Serialize};

use crate::airflow::FlowSchedule;
use crate::balred::{balance, error_bound, select_order};
use crate::building::description::*;
use crate::building::{assemble_building, BuildingModel, WeatherSeries};
use crate::error::{Error, Result};
use crate::simulation::{simulate_building, FlowSource, SimulationConfig, SimulationResult, Strategy};

/// Per-zone deviation of `run` from `baseline`: (max |dT|, standard deviation of dT).
pub fn deviations(baseline: &SimulationResult, run: &SimulationResult) -> Result<(Vec<f64>, Vec<f64>)> {
    if baseline.times != run.times || baseline.zone_names != run.zone_names {
        return Err(Error::Argument("runs cover different horizons or zones".into()));
    }
    let nz = baseline.zone_names.len();
    let mut max = vec![0.0; nz];
    let mut std = vec![0.0; nz];
    for z in 0..nz {
        let d: Vec<f64> = baseline.air.iter().zip(&run.air).map(|(a, b)| b[z] - a[z]).collect();
        max[z] = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        std[z] = std_dev(&d);
    }
    Ok((max, std))
}

/// Population standard deviation; 0 for an empty slice.
pub fn std_dev(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

pub fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

/// Runs `config` `runs` times; returns the first result with its median loop time.
pub fn timed_runs(
    model: &BuildingModel,
    weather: &WeatherSeries,
    source: &FlowSource,
    config: &SimulationConfig,
    runs: usize,
) -> Result<(SimulationResult, f64)> {
    let mut times = Vec::with_capacity(runs.max(1));
    let mut first = None;
    for _ in 0..runs.max(1) {
        let r = simulate_building(model, weather, source, config)?;
        times.push(r.loop_seconds);
        if first.is_none() {
            first = Some(r);
        }
    }
    Ok((first.unwrap(), median(&mut times)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: Strategy,
    pub eps: f64,
    pub seconds: f64,
    pub reduction_seconds: f64,
    pub speedup: f64,
    pub reduced_orders: Vec<usize>,
    pub bounds: Vec<f64>,
    pub max_abs_deviation: Vec<f64>,
    pub std_deviation: Vec<f64>,
    pub rereductions: usize,
    pub max_fixed_point_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub building: String,
    pub zones: Vec<String>,
    pub full_orders: Vec<usize>,
    pub steps: usize,
    pub runs: usize,
    pub baseline_seconds: f64,
    pub strategies: Vec<StrategyReport>,
}

/// Runs the full baseline and every strategy over the same horizon.
///
/// Returns the report, the baseline run and one run per strategy.
pub fn compare(
    model: &BuildingModel,
    weather: &WeatherSeries,
    source: &FlowSource,
    config: &SimulationConfig,
    strategies: &[Strategy],
    runs: usize,
) -> Result<(ComparisonReport, SimulationResult, Vec<SimulationResult>)> {
    if strategies.is_empty() {
        return Err(Error::Argument("at least one strategy to compare against the full model".into()));
    }
    let base_cfg = SimulationConfig { strategy: Strategy::Full, ..config.clone() };
    let (baseline, baseline_seconds) = timed_runs(model, weather, source, &base_cfg, runs)?;
    let mut reports = Vec::with_capacity(strategies.len());
    let mut results = Vec::with_capacity(strategies.len());
    for &s in strategies {
        let cfg = SimulationConfig { strategy: s, ..config.clone() };
        let (r, seconds) = timed_runs(model, weather, source, &cfg, runs)?;
        let (max_abs_deviation, std_deviation) = deviations(&baseline, &r)?;
        reports.push(StrategyReport {
            strategy: s,
            eps: config.eps,
            seconds,
            reduction_seconds: r.reduction_seconds,
            speedup: baseline_seconds / seconds,
            reduced_orders: r.reduced_orders.clone(),
            bounds: r.bounds.clone(),
            max_abs_deviation,
            std_deviation,
            rereductions: r.rereductions,
            max_fixed_point_iterations: r.fixed_point_iterations.iter().copied().max().unwrap_or(0),
        });
        results.push(r);
    }
    Ok((
        ComparisonReport {
            building: model.name.clone(),
            zones: baseline.zone_names.clone(),
            full_orders: baseline.full_orders.clone(),
            steps: baseline.steps(),
            runs: runs.max(1),
            baseline_seconds,
            strategies: reports,
        },
        baseline,
        results,
    ))
}

/// Least-squares line `y = a + b x` with its coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Argument("linear fit needs at least two paired points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Argument("linear fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LinearFit { intercept, slope, r_squared })
}

/// One row of the tolerance sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub eps: f64,
    pub reduced_orders: Vec<usize>,
    pub total_order: usize,
    pub sum_cubed_orders: f64,
    pub seconds: f64,
    /// Standard deviation of the deviation from the full model, pooled over zones.
    pub std_error: f64,
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub strategy: Strategy,
    pub baseline_seconds: f64,
    pub rows: Vec<TradeoffRow>,
    /// `seconds = t_f + c * sum(n_i^3)` over the rows.
    pub fit: LinearFit,
}

impl BenchReport {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["eps", "reduced_orders", "total_order", "sum_cubed_orders", "seconds", "std_error", "max_error"])?;
        for r in &self.rows {
            let orders: Vec<String> = r.reduced_orders.iter().map(|n| n.to_string()).collect();
            w.write_record([
                r.eps.to_string(),
                orders.join(" "),
                r.total_order.to_string(),
                r.sum_cubed_orders.to_string(),
                format!("{:.9}", r.seconds),
                format!("{:.6}", r.std_error),
                format!("{:.6}", r.max_error),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const MIN_SWEEP_POINTS: usize = 4;
pub const MIN_TIMING_RUNS: usize = 3;

/// Sweeps the reduction tolerance; each point is the median of `runs` (at least 3) timings.
pub fn bench(
    model: &BuildingModel,
    weather: &WeatherSeries,
    source: &FlowSource,
    config: &SimulationConfig,
    eps_values: &[f64],
    runs: usize,
) -> Result<BenchReport> {
    if eps_values.len() < MIN_SWEEP_POINTS {
        return Err(Error::Argument(format!("an eps sweep needs at least {MIN_SWEEP_POINTS} values")));
    }
    if config.strategy == Strategy::Full {
        return Err(Error::Argument("the sweep needs a reducing strategy".into()));
    }
    let runs = runs.max(MIN_TIMING_RUNS);
    let base_cfg = SimulationConfig { strategy: Strategy::Full, ..config.clone() };
    let (baseline, baseline_seconds) = timed_runs(model, weather, source, &base_cfg, runs)?;
    let mut rows = Vec::with_capacity(eps_values.len());
    for &eps in eps_values {
        let cfg = SimulationConfig { eps, ..config.clone() };
        let (r, seconds) = timed_runs(model, weather, source, &cfg, runs)?;
        let (max, _) = deviations(&baseline, &r)?;
        let pooled: Vec<f64> = baseline
            .air
            .iter()
            .zip(&r.air)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| y - x).collect::<Vec<_>>())
            .collect();
        rows.push(TradeoffRow {
            eps,
            total_order: r.reduced_orders.iter().sum(),
            sum_cubed_orders: r.reduced_orders.iter().map(|&n| (n as f64).powi(3)).sum(),
            reduced_orders: r.reduced_orders,
            seconds,
            std_error: std_dev(&pooled),
            max_error: max.iter().copied().fold(0.0, f64::max),
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.sum_cubed_orders).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
    let fit = linear_fit(&x, &y).unwrap_or(LinearFit { intercept: f64::NAN, slope: f64::NAN, r_squared: f64::NAN });
    Ok(BenchReport { strategy: config.strategy, baseline_seconds, rows, fit })
}

/// Single ventilated zone of exactly `order` states: one exterior wall of
/// `order - 1` nodes plus the air node.
pub fn single_zone(order: usize) -> Result<BuildingDescription> {
    if order < 2 {
        return Err(Error::Argument("a zone needs at least one wall node and the air node".into()));
    }
    Ok(BuildingDescription {
        name: format!("single-zone-{order}"),
        site: Site { latitude_deg: crate::synthetic::LATITUDE_DEG },
        zones: vec![ZoneDescription {
            name: "room".into(),
            air_volume: 40.0,
            h_int: 4.0,
            h_ext: 17.0,
            walls: vec![WallDescription {
                name: "wall".into(),
                area: 40.0,
                layers: vec![Layer { conductivity: 1.75, density: 2300.0, specific_heat: 920.0, thickness: 0.2, nodes: order - 1 }],
                azimuth_deg: 0.0,
                tilt_deg: 90.0,
                boundary: Boundary::Exterior,
                solar_absorptance: 0.6,
            }],
            glazings: vec![],
            internal_capacity: 0.0,
            internal_gain: 100.0,
            gain_profile: vec![],
        }],
        openings: vec![OpeningDescription {
            id: "vent".into(),
            from: EXTERIOR.into(),
            to: "room".into(),
            cd: 0.6,
            area: 0.1,
            height: 1.0,
            cp: 0.0,
            azimuth_deg: 0.0,
            exponent: 0.5,
        }],
        initial_temperature: 26.0,
    })
}

/// Timing of one order in [`order_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderTiming {
    pub order: usize,
    pub seconds: f64,
}

/// Full-order runs of single zones whose ventilation changes every step, so
/// each step refactors the step matrix. Returns median timings and the
/// `t = t_f + c n^3` fit.
pub fn order_sweep(orders: &[usize], weather: &WeatherSeries, runs: usize) -> Result<(Vec<OrderTiming>, LinearFit)> {
    let mut timings = Vec::with_capacity(orders.len());
    for &n in orders {
        let model = assemble_building(&single_zone(n)?)?;
        let steps = ((weather.end() - weather.start()) / 3600.0).floor() as usize;
        let records: Vec<(f64, String, f64)> = (0..=steps)
            .map(|k| (weather.start() + 3600.0 * k as f64, "vent".to_string(), 0.02 + 0.01 * ((k % 7) as f64)))
            .collect();
        let schedule = FlowSchedule::from_records(&["vent".to_string()], &records)?;
        let source = FlowSource::Schedule(schedule);
        let (_, seconds) = timed_runs(&model, weather, &source, &SimulationConfig::default(), runs.max(MIN_TIMING_RUNS))?;
        timings.push(OrderTiming { order: n, seconds });
    }
    let x: Vec<f64> = timings.iter().map(|t| (t.order as f64).powi(3)).collect();
    let y: Vec<f64> = timings.iter().map(|t| t.seconds).collect();
    Ok((timings, linear_fit(&x, &y)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneReduction {
    pub zone: String,
    pub full_order: usize,
    /// Order of the reduced system (the envelope for `separate`).
    pub system_order: usize,
    pub hsv: Vec<f64>,
    pub reduced_order: usize,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub building: String,
    pub strategy: Strategy,
    pub eps: f64,
    pub zones: Vec<ZoneReduction>,
}

/// Hankel spectra and selected orders per zone, without simulating.
///
/// `separate` reduces the envelope subsystem, every other strategy the
/// whole zone at its design (zero-flow) air row.
pub fn reduction_report(model: &BuildingModel, strategy: Strategy, eps: f64) -> Result<ReductionReport> {
    if !(eps >= 0.0) {
        return Err(Error::Argument(format!("eps must be non-negative, got {eps}")));
    }
    let mut zones = Vec::with_capacity(model.zones.len());
    for z in &model.zones {
        let sys = match strategy {
            Strategy::Separate => z.pm.envelope_model()?,
            _ => z.pm.full_model(&z.pm.base_air)?,
        };
        let ctx = |e: Error| Error::Value(format!("zone {}: {e}", z.name));
        let bal = balance(&sys).map_err(ctx)?;
        let reduced_order = select_order(&bal.hsv, eps)?;
        let bound = error_bound(&bal.hsv, reduced_order)?;
        zones.push(ZoneReduction {
            zone: z.name.clone(),
            full_order: z.order(),
            system_order: sys.order(),
            hsv: bal.hsv,
            reduced_order,
            bound,
        });
    }
    Ok(ReductionReport { building: model.name.clone(), strategy, eps, zones })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 0.5 + 2.0 * v).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.intercept - 0.5).abs() < 1e-12 && (f.slope - 2.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn std_and_median() {
        assert_eq!(std_dev(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]), 2.0);
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn single_zone_has_requested_order() {
        for n in [2, 5, 40] {
            let m = assemble_building(&single_zone(n).unwrap()).unwrap();
            assert_eq!(m.orders(), vec![n]);
        }
        assert!(single_zone(1).is_err());
    }

    #[test]
    fn full_against_itself_is_exact() {
        let model = assemble_building(&crate::synthetic::two_zone(false)).unwrap();
        let w = crate::synthetic::tropical_weather(1);
        let (rep, _, _) = compare(&model, &w, &FlowSource::Network, &SimulationConfig::default(), &[Strategy::Full], 1).unwrap();
        assert!(rep.strategies[0].max_abs_deviation.iter().all(|&d| d == 0.0));
        assert!(rep.strategies[0].std_deviation.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn report_bounds_match_tails() {
        let model = assemble_building(&crate::synthetic::two_zone(false)).unwrap();
        let rep = reduction_report(&model, Strategy::ReduceLti, 0.2).unwrap();
        for z in &rep.zones {
            let tail: f64 = z.hsv[z.reduced_order..].iter().sum();
            assert!((z.bound - 2.0 * tail).abs() <= 1e-12 * (1.0 + tail));
            assert!(z.reduced_order <= z.full_order);
        }
        let zero = reduction_report(&model, Strategy::ReduceLti, 0.0).unwrap();
        assert!(zero.zones.iter().all(|z| z.reduced_order == z.full_order));
    }

    #[test]
    fn sweep_needs_four_points() {
        let model = assemble_building(&crate::synthetic::two_zone(false)).unwrap();
        let w = crate::synthetic::tropical_weather(1);
        let cfg = SimulationConfig::with_strategy(Strategy::ReduceLti);
        assert!(bench(&model, &w, &FlowSource::Network, &cfg, &[0.1, 0.2, 0.4], 3).is_err());
    }
}
