//! Mass flows through power-law openings: pressure network and prescribed schedules.
//!
//! Zone pressures are relative to the exterior at the reference height. The
//! pressure drop across an opening at height `h`, in its `from -> to`
//! direction, is `P_from - P_to - g h (rho_from - rho_to)` plus the wind
//! pressure on whichever side is the exterior.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::building::weather::parse_timestamp;
use crate::error::{Error, Result};

pub const GRAVITY: f64 = 9.81;
pub const RHO_REF: f64 = 1.2;
pub const T_REF_K: f64 = 293.15;
/// Below this pressure drop (Pa) the power law is replaced by a cubic.
pub const LINEAR_BAND: f64 = 0.01;
pub const NETWORK_TOLERANCE: f64 = 1e-9;
pub const NETWORK_MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpeningEnd {
    Exterior,
    Zone(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Opening {
    pub id: String,
    pub from: OpeningEnd,
    pub to: OpeningEnd,
    pub cd: f64,
    pub area: f64,
    pub height: f64,
    /// Wind pressure coefficient when facing the wind.
    pub cp: f64,
    /// Outward normal azimuth of an exterior opening, degrees from north.
    pub azimuth_deg: f64,
    pub exponent: f64,
}

impl Opening {
    pub fn is_exterior(&self) -> bool {
        self.from == OpeningEnd::Exterior || self.to == OpeningEnd::Exterior
    }

    fn coefficient(&self, rho: f64) -> f64 {
        self.cd * self.area * (2.0 * rho).sqrt()
    }
}

/// Ideal-gas air density (kg/m3) at `t` degrees Celsius.
pub fn air_density(t: f64) -> f64 {
    RHO_REF * T_REF_K / (t + 273.15)
}

/// Mass flow (kg/s) and its derivative with respect to `dp`.
///
/// Inside `|dp| < LINEAR_BAND` the law is the odd cubic matching value and
/// slope at the band edge, so the flow is C1, monotone and has a finite slope at 0.
pub fn opening_flow_with_slope(opening: &Opening, dp: f64, rho_upwind: f64) -> (f64, f64) {
    let k = opening.coefficient(rho_upwind);
    let n = opening.exponent;
    let a = dp.abs();
    if a >= LINEAR_BAND {
        let m = k * a.powf(n);
        (m.copysign(dp), n * m / a)
    } else {
        let edge = k * LINEAR_BAND.powf(n);
        let (c1, c3) = ((3.0 - n) / 2.0, (n - 1.0) / 2.0);
        let x = dp / LINEAR_BAND;
        (edge * (c1 * x + c3 * x * x * x), edge * (c1 + 3.0 * c3 * x * x) / LINEAR_BAND)
    }
}

pub fn opening_flow(opening: &Opening, dp: f64, rho_upwind: f64) -> f64 {
    opening_flow_with_slope(opening, dp, rho_upwind).0
}

/// Effective wind pressure coefficient for wind blowing from `wind_dir_deg`.
fn effective_cp(opening: &Opening, wind_dir_deg: f64) -> f64 {
    let c = (wind_dir_deg - opening.azimuth_deg).to_radians().cos();
    // leeward suction is weaker than windward pressure
    if c >= 0.0 {
        opening.cp * c
    } else {
        0.5 * opening.cp * c
    }
}

/// Boundary pressure contribution (Pa) across an opening in its `from -> to`
/// direction: stack term plus wind on the exterior side. `t_ext` sets the
/// exterior density.
pub fn stack_wind_pressure(opening: &Opening, t_from: f64, t_to: f64, t_ext: f64, wind_speed: f64, wind_dir_deg: f64) -> f64 {
    let stack = -GRAVITY * opening.height * (air_density(t_from) - air_density(t_to));
    let wind = 0.5 * effective_cp(opening, wind_dir_deg) * air_density(t_ext) * wind_speed * wind_speed;
    match (opening.from, opening.to) {
        (OpeningEnd::Exterior, OpeningEnd::Exterior) => stack,
        (OpeningEnd::Exterior, _) => stack + wind,
        (_, OpeningEnd::Exterior) => stack - wind,
        _ => stack,
    }
}

/// Converged pressure network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub pressures: Vec<f64>,
    /// Signed flows per opening, positive `from -> to`.
    pub flows: Vec<f64>,
    pub iterations: usize,
    /// Largest per-zone mass imbalance, kg/s.
    pub residual: f64,
}

/// Boundary conditions for one network solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConditions<'a> {
    pub zone_temperatures: &'a [f64],
    pub outdoor_temperature: f64,
    pub wind_speed: f64,
    pub wind_direction: f64,
}

fn end_temperature(end: OpeningEnd, c: &NetworkConditions) -> f64 {
    match end {
        OpeningEnd::Exterior => c.outdoor_temperature,
        OpeningEnd::Zone(i) => c.zone_temperatures[i],
    }
}

fn end_pressure(end: OpeningEnd, p: &[f64]) -> f64 {
    match end {
        OpeningEnd::Exterior => 0.0,
        OpeningEnd::Zone(i) => p[i],
    }
}

/// Zones whose pressure is an unknown. Components that never reach the
/// exterior have their first zone grounded at 0 Pa, as do zones without openings.
fn free_zones(openings: &[Opening], n_zones: usize) -> Vec<bool> {
    let mut parent: Vec<usize> = (0..=n_zones).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let node = |e: OpeningEnd| match e {
        OpeningEnd::Exterior => n_zones,
        OpeningEnd::Zone(i) => i,
    };
    let mut touched = vec![false; n_zones];
    for o in openings {
        for e in [o.from, o.to] {
            if let OpeningEnd::Zone(i) = e {
                touched[i] = true;
            }
        }
        let (a, b) = (find(&mut parent, node(o.from)), find(&mut parent, node(o.to)));
        parent[a] = b;
    }
    let ext = find(&mut parent, n_zones);
    let mut grounded_roots = Vec::new();
    let mut free = vec![false; n_zones];
    for i in 0..n_zones {
        if !touched[i] {
            continue;
        }
        let r = find(&mut parent, i);
        if r == ext {
            free[i] = true;
        } else if grounded_roots.contains(&r) {
            free[i] = true;
        } else {
            grounded_roots.push(r);
        }
    }
    free
}

/// Flows and per-zone net inflow at pressures `p`; fills the Jacobian when given.
fn evaluate(
    openings: &[Opening],
    boundary: &[f64],
    rho: &[(f64, f64)],
    p: &[f64],
    flows: &mut [f64],
    net: &mut [f64],
    mut jac: Option<&mut DMatrix<f64>>,
) {
    net.iter_mut().for_each(|x| *x = 0.0);
    if let Some(j) = jac.as_deref_mut() {
        j.fill(0.0);
    }
    for (k, o) in openings.iter().enumerate() {
        let dp = end_pressure(o.from, p) - end_pressure(o.to, p) + boundary[k];
        let r = if dp >= 0.0 { rho[k].0 } else { rho[k].1 };
        let (m, dm) = opening_flow_with_slope(o, dp, r);
        flows[k] = m;
        if let OpeningEnd::Zone(i) = o.from {
            net[i] -= m;
        }
        if let OpeningEnd::Zone(i) = o.to {
            net[i] += m;
        }
        if let Some(j) = jac.as_deref_mut() {
            // d(net_to)/dP_from = dm, d(net_from)/dP_from = -dm, ...
            let (f, t) = (o.from, o.to);
            if let OpeningEnd::Zone(a) = f {
                j[(a, a)] -= dm;
                if let OpeningEnd::Zone(b) = t {
                    j[(a, b)] += dm;
                }
            }
            if let OpeningEnd::Zone(b) = t {
                j[(b, b)] -= dm;
                if let OpeningEnd::Zone(a) = f {
                    j[(b, a)] += dm;
                }
            }
        }
    }
}

fn norm2(v: &[f64], mask: &[bool]) -> f64 {
    v.iter().zip(mask).filter(|(_, &f)| f).map(|(x, _)| x * x).sum::<f64>().sqrt()
}

fn max_abs(v: &[f64], mask: &[bool]) -> f64 {
    v.iter().zip(mask).filter(|(_, &f)| f).fold(0.0, |m, (x, _)| m.max(x.abs()))
}

/// Solves the zone pressures by damped Newton iteration on the mass balance.
///
/// `warm_start` seeds the pressures (for instance with the previous step's solution).
pub fn solve_network(
    openings: &[Opening],
    n_zones: usize,
    cond: &NetworkConditions,
    warm_start: Option<&[f64]>,
) -> Result<FlowState> {
    if cond.zone_temperatures.len() != n_zones {
        return Err(Error::Dimension(format!(
            "{} zone temperatures for {n_zones} zones",
            cond.zone_temperatures.len()
        )));
    }
    for o in openings {
        for e in [o.from, o.to] {
            if let OpeningEnd::Zone(i) = e {
                if i >= n_zones {
                    return Err(Error::Topology(format!("opening {} refers to zone {i}", o.id)));
                }
            }
        }
    }
    let free = free_zones(openings, n_zones);
    let unknowns: Vec<usize> = (0..n_zones).filter(|&i| free[i]).collect();
    let boundary: Vec<f64> = openings
        .iter()
        .map(|o| {
            stack_wind_pressure(
                o,
                end_temperature(o.from, cond),
                end_temperature(o.to, cond),
                cond.outdoor_temperature,
                cond.wind_speed,
                cond.wind_direction,
            )
        })
        .collect();
    let rho: Vec<(f64, f64)> = openings
        .iter()
        .map(|o| (air_density(end_temperature(o.from, cond)), air_density(end_temperature(o.to, cond))))
        .collect();

    let mut p = vec![0.0; n_zones];
    let mut flows = vec![0.0; openings.len()];
    let mut net = vec![0.0; n_zones];
    let mut jac = DMatrix::zeros(n_zones, n_zones);
    let mut trial = p.clone();
    let mut trial_flows = flows.clone();
    let mut trial_net = net.clone();

    // A warm start is only kept when it beats the zero guess.
    if let Some(w) = warm_start {
        if w.len() == n_zones {
            evaluate(openings, &boundary, &rho, &p, &mut flows, &mut net, None);
            let cold = norm2(&net, &free);
            for &i in &unknowns {
                trial[i] = w[i];
            }
            evaluate(openings, &boundary, &rho, &trial, &mut trial_flows, &mut trial_net, None);
            if norm2(&trial_net, &free) < cold {
                p.copy_from_slice(&trial);
            }
        }
    }

    evaluate(openings, &boundary, &rho, &p, &mut flows, &mut net, Some(&mut jac));
    let mut res = max_abs(&net, &free);
    let mut merit = norm2(&net, &free);
    let mut iterations = 0;
    while res > NETWORK_TOLERANCE {
        if iterations == NETWORK_MAX_ITERATIONS {
            return Err(Error::Convergence { iterations, residual: res });
        }
        iterations += 1;
        let nu = unknowns.len();
        let mut j = DMatrix::zeros(nu, nu);
        let mut r = DVector::zeros(nu);
        for (a, &i) in unknowns.iter().enumerate() {
            r[a] = -net[i];
            for (b, &k) in unknowns.iter().enumerate() {
                j[(a, b)] = jac[(i, k)];
            }
        }
        let step = match j.clone().lu().solve(&r) {
            Some(s) if s.iter().all(|x| x.is_finite()) => s,
            _ => j.svd(true, true).solve(&r, 1e-14).map_err(|e| Error::Value(e.to_string()))?,
        };
        // Armijo backtracking on ||net||_2; the square-root law makes full
        // Newton steps oscillate around the solution.
        let mut lambda = 1.0;
        let mut best = (f64::INFINITY, 0.0);
        loop {
            trial.copy_from_slice(&p);
            for (a, &i) in unknowns.iter().enumerate() {
                trial[i] += lambda * step[a];
            }
            evaluate(openings, &boundary, &rho, &trial, &mut trial_flows, &mut trial_net, None);
            let m = norm2(&trial_net, &free);
            if m < best.0 {
                best = (m, lambda);
            }
            if m <= (1.0 - 1e-4 * lambda) * merit || lambda < 1e-6 {
                break;
            }
            lambda *= 0.5;
        }
        let lambda = best.1;
        for (a, &i) in unknowns.iter().enumerate() {
            p[i] += lambda * step[a];
        }
        evaluate(openings, &boundary, &rho, &p, &mut flows, &mut net, Some(&mut jac));
        res = max_abs(&net, &free);
        merit = norm2(&net, &free);
    }
    Ok(FlowState { pressures: p, flows, iterations, residual: res })
}

/// Per-link mass flows held constant between records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowSchedule {
    links: Vec<String>,
    times: Vec<f64>,
    /// `values[k][l]`: flow of link `l` from record time `k` on.
    values: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct ScheduleRow {
    timestamp: String,
    link_id: String,
    mass_flow: f64,
}

impl FlowSchedule {
    /// Builds a schedule over `links` from `(time, link, flow)` records.
    /// Links missing at a record time keep their previous value (0 initially).
    pub fn from_records(links: &[String], records: &[(f64, String, f64)]) -> Result<Self> {
        let index: HashMap<&str, usize> = links.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let mut sorted: Vec<&(f64, String, f64)> = records.iter().collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut times: Vec<f64> = Vec::new();
        let mut values: Vec<Vec<f64>> = Vec::new();
        for (t, link, m) in sorted {
            if !t.is_finite() || !m.is_finite() {
                return Err(Error::Validation(format!("non-finite schedule record for {link}")));
            }
            let l = *index.get(link.as_str()).ok_or_else(|| Error::Topology(format!("schedule names unknown link {link}")))?;
            if times.last() != Some(t) {
                let prev = values.last().cloned().unwrap_or_else(|| vec![0.0; links.len()]);
                times.push(*t);
                values.push(prev);
            }
            values.last_mut().unwrap()[l] = *m;
        }
        Ok(Self { links: links.to_vec(), times, values })
    }

    pub fn from_csv<R: Read>(links: &[String], reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut records = Vec::new();
        for row in rdr.deserialize::<ScheduleRow>() {
            let row = row?;
            records.push((parse_timestamp(&row.timestamp)?, row.link_id, row.mass_flow));
        }
        Self::from_records(links, &records)
    }

    pub fn load(links: &[String], path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv(links, f)
    }

    pub fn links(&self) -> &[String] {
        &self.links
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Flows at `t`. Valid from the first record on; an empty schedule is zero everywhere.
    pub fn flows(&self, t: f64) -> Result<Vec<f64>> {
        if self.times.is_empty() {
            return Ok(vec![0.0; self.links.len()]);
        }
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            return Err(Error::Range { t, start: self.times[0], end: f64::INFINITY });
        }
        Ok(self.values[k - 1].clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn window(from: OpeningEnd, to: OpeningEnd, height: f64) -> Opening {
        Opening { id: "o".into(), from, to, cd: 0.6, area: 1.0, height, cp: 0.6, azimuth_deg: 0.0, exponent: 0.5 }
    }

    #[test]
    fn flow_hand_value() {
        let o = window(OpeningEnd::Exterior, OpeningEnd::Zone(0), 0.0);
        let expected = 0.6 * 1.0 * 1.2 * (2.0f64 / 1.2).sqrt();
        assert_relative_eq!(opening_flow(&o, 1.0, 1.2), expected, max_relative = 1e-14);
        assert!((opening_flow(&o, 1.0, 1.2) - 0.9295).abs() < 1e-4);
        assert_eq!(opening_flow(&o, 0.0, 1.2), 0.0);
    }

    #[test]
    fn flow_is_odd_monotone_and_smooth() {
        let o = window(OpeningEnd::Exterior, OpeningEnd::Zone(0), 0.0);
        let mut prev = f64::NEG_INFINITY;
        for k in -400..=400 {
            let dp = k as f64 * 1e-4;
            let m = opening_flow(&o, dp, 1.2);
            assert_eq!(m, -opening_flow(&o, -dp, 1.2));
            assert!(m > prev);
            prev = m;
        }
        let (below, s_below) = opening_flow_with_slope(&o, LINEAR_BAND * (1.0 - 1e-12), 1.2);
        let (above, s_above) = opening_flow_with_slope(&o, LINEAR_BAND, 1.2);
        assert_relative_eq!(below, above, max_relative = 1e-9);
        assert_relative_eq!(s_below, s_above, max_relative = 1e-9);
        assert!(opening_flow_with_slope(&o, 0.0, 1.2).1.is_finite());
    }

    #[test]
    fn stack_and_wind_terms() {
        let o = window(OpeningEnd::Zone(0), OpeningEnd::Zone(1), 1.0);
        assert_eq!(stack_wind_pressure(&o, 20.0, 20.0, 20.0, 0.0, 0.0), 0.0);
        let expected = GRAVITY * (air_density(20.0) - air_density(30.0));
        assert_relative_eq!(stack_wind_pressure(&o, 30.0, 20.0, 20.0, 0.0, 0.0), expected, max_relative = 1e-14);
        assert!((expected - 0.39).abs() < 0.01);
        let mut w = window(OpeningEnd::Exterior, OpeningEnd::Zone(0), 0.0);
        w.azimuth_deg = 90.0;
        // 20 C outside gives rho = 1.2
        assert_relative_eq!(stack_wind_pressure(&w, 20.0, 20.0, 20.0, 4.0, 90.0), 5.76, max_relative = 1e-12);
        assert!(stack_wind_pressure(&w, 20.0, 20.0, 20.0, 4.0, 270.0) < 0.0);
    }

    #[test]
    fn no_openings_gives_zero() {
        let cond = NetworkConditions { zone_temperatures: &[25.0, 26.0], outdoor_temperature: 20.0, wind_speed: 3.0, wind_direction: 0.0 };
        let s = solve_network(&[], 2, &cond, None).unwrap();
        assert_eq!(s.pressures, vec![0.0, 0.0]);
        assert!(s.flows.is_empty());
    }

    fn bisection_oracle(low: &Opening, high: &Opening, t_in: f64, t_out: f64) -> (f64, f64) {
        let net = |p: f64| {
            let mut n = 0.0;
            for o in [low, high] {
                let dp = -p + stack_wind_pressure(o, t_out, t_in, t_out, 0.0, 0.0);
                let r = if dp >= 0.0 { air_density(t_out) } else { air_density(t_in) };
                n += opening_flow(o, dp, r);
            }
            n
        };
        let (mut a, mut b) = (-10.0, 10.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if net(m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        let p = 0.5 * (a + b);
        let dp = -p + stack_wind_pressure(low, t_out, t_in, t_out, 0.0, 0.0);
        (p, opening_flow(low, dp, air_density(t_out)))
    }

    #[test]
    fn single_zone_stack_ventilation() {
        let low = window(OpeningEnd::Exterior, OpeningEnd::Zone(0), 0.5);
        let mut high = window(OpeningEnd::Exterior, OpeningEnd::Zone(0), 2.5);
        high.area = 0.5;
        let cond = NetworkConditions { zone_temperatures: &[28.0], outdoor_temperature: 22.0, wind_speed: 0.0, wind_direction: 0.0 };
        let s = solve_network(&[low.clone(), high.clone()], 1, &cond, None).unwrap();
        assert!(s.residual <= 1e-9);
        assert!(s.flows[0] > 0.0 && s.flows[1] < 0.0);
        assert!((s.flows[0] + s.flows[1]).abs() <= 1e-9);
        let (p, m) = bisection_oracle(&low, &high, 28.0, 22.0);
        assert!((s.pressures[0] - p).abs() < 1e-6);
        assert!((s.flows[0] - m).abs() < 1e-8);
    }

    #[test]
    fn closed_component_is_grounded() {
        // two zones linked only to each other
        let o = window(OpeningEnd::Zone(0), OpeningEnd::Zone(1), 1.0);
        let cond = NetworkConditions { zone_temperatures: &[30.0, 20.0], outdoor_temperature: 25.0, wind_speed: 0.0, wind_direction: 0.0 };
        let s = solve_network(&[o], 2, &cond, None).unwrap();
        assert!(s.flows[0].abs() <= 1e-9);
    }

    #[test]
    fn doubling_areas_keeps_balance_and_signs() {
        let mk = |scale: f64| {
            let mut v = vec![
                window(OpeningEnd::Exterior, OpeningEnd::Zone(0), 0.5),
                window(OpeningEnd::Zone(0), OpeningEnd::Zone(1), 1.0),
                window(OpeningEnd::Zone(1), OpeningEnd::Exterior, 2.5),
            ];
            v[2].azimuth_deg = 180.0;
            for o in &mut v {
                o.area *= scale;
            }
            v
        };
        let cond = NetworkConditions { zone_temperatures: &[27.0, 29.0], outdoor_temperature: 24.0, wind_speed: 2.0, wind_direction: 10.0 };
        let a = solve_network(&mk(1.0), 2, &cond, None).unwrap();
        let b = solve_network(&mk(2.0), 2, &cond, None).unwrap();
        for s in [&a, &b] {
            assert!(s.residual <= 1e-9);
        }
        for (x, y) in a.flows.iter().zip(&b.flows) {
            assert_eq!(x.signum(), y.signum());
        }
    }

    #[test]
    fn schedule_hold_semantics() {
        let links = vec!["a".to_string(), "b".to_string()];
        let empty = FlowSchedule::from_records(&links, &[]).unwrap();
        assert_eq!(empty.flows(123.0).unwrap(), vec![0.0, 0.0]);
        let one = FlowSchedule::from_records(&links, &[(10.0, "a".into(), 0.3)]).unwrap();
        assert_eq!(one.flows(10.0).unwrap(), vec![0.3, 0.0]);
        assert_eq!(one.flows(1e6).unwrap(), vec![0.3, 0.0]);
        assert!(matches!(one.flows(9.0), Err(Error::Range { .. })));
        let step = FlowSchedule::from_records(&links, &[(0.0, "b".into(), 0.1), (100.0, "b".into(), 0.5)]).unwrap();
        assert_eq!(step.flows(99.999).unwrap()[1], 0.1);
        assert_eq!(step.flows(100.0).unwrap()[1], 0.5);
        assert!(FlowSchedule::from_records(&links, &[(0.0, "zz".into(), 0.1)]).is_err());
    }

    #[test]
    fn schedule_csv() {
        let links = vec!["door".to_string()];
        let csv = "timestamp,link_id,mass_flow\n2002-02-01T00:00:00,door,0.05\n2002-02-01T01:00:00,door,0.07\n";
        let s = FlowSchedule::from_csv(&links, csv.as_bytes()).unwrap();
        let t0 = parse_timestamp("2002-02-01T00:30:00").unwrap();
        assert_eq!(s.flows(t0).unwrap(), vec![0.05]);
    }
}
