//! Nodal thermal model generation for multi-zone buildings.
//!
//! Each zone becomes a [`PartitionedModel`]: wall and glazing nodes form the
//! constant-coefficient envelope block, the zone air is the single
//! time-varying node. Airflow only ever touches the air row.
//!
//! Zone input frame, in order:
//! 1. `t_out`, `t_sky`
//! 2. `sw:<orientation>` incident short-wave flux per exterior orientation (kW/m2)
//! 3. `gain` convective internal gain (kW)
//! 4. `zone:<name>` air temperature of each neighbouring zone
//!
//! Power inputs are in kilo-units so every column has order-one amplitude;
//! the reduction tolerance is absolute and would otherwise discard them.

pub mod description;
pub mod solar;
pub mod wall;
pub mod weather;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

pub use description::{
    Boundary, BuildingDescription, GlazingDescription, Layer, OpeningDescription, Site, WallDescription,
    ZoneDescription, EXTERIOR,
};
pub use solar::Orientation;
pub use wall::{discretize_wall, RcChain};
pub use weather::{WeatherRecord, WeatherSeries};

use crate::airflow::{Opening, OpeningEnd};
use crate::error::{Error, Result};
use crate::statespace::{InputFrame, InputSegment};
use crate::tvreduction::{AirRow, InflowTerm, PartitionedModel};

pub const AIR_DENSITY: f64 = 1.2;
pub const AIR_CP: f64 = 1006.0;
/// Glass pane thickness used for the glazing node capacity, m.
pub const GLASS_THICKNESS: f64 = 0.006;
pub const GLASS_VOLUMETRIC_HEAT: f64 = 2500.0 * 840.0;
/// W/m2 per unit of short-wave input.
pub const SHORTWAVE_UNIT: f64 = 25.0;
/// W per unit of internal gain.
pub const GAIN_UNIT: f64 = 100.0;
/// Linearized long-wave coefficient to the sky, W/m2K.
pub const H_RADIATIVE: f64 = 5.0;

/// How a column of `B` is driven.
#[derive(Debug, Clone, PartialEq)]
enum ColumnSource {
    OutdoorAir,
    Sky,
    ShortWave(usize),
    Gain,
    Neighbour(usize),
}

/// Generated model of one zone.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneModel {
    pub name: String,
    pub pm: PartitionedModel,
    pub frame: InputFrame,
    /// Index of the air node in the full state vector.
    pub air_state: usize,
    /// `(opening index, sign)`; inflow through the opening is `max(0, sign * flow)`.
    pub inflow_openings: Vec<(usize, f64)>,
    sources: Vec<ColumnSource>,
    internal_gain: f64,
    gain_profile: Vec<f64>,
    /// Orientation of each short-wave column, in the building's orientation list.
    orientations: Vec<Orientation>,
    neighbours: Vec<String>,
}

impl ZoneModel {
    pub fn order(&self) -> usize {
        self.pm.order()
    }

    pub fn n_inputs(&self) -> usize {
        self.frame.len()
    }

    pub fn neighbours(&self) -> &[String] {
        &self.neighbours
    }

    /// Convective gain at time `t` (W).
    pub fn gain_at(&self, t: f64) -> f64 {
        if self.gain_profile.is_empty() {
            return self.internal_gain;
        }
        let hour = (t.rem_euclid(86_400.0) / 3600.0).floor() as usize % 24;
        self.internal_gain * self.gain_profile[hour]
    }

    /// Per-zone inflows (kg/s) from signed opening flows.
    pub fn inflows(&self, opening_flows: &[f64]) -> Vec<f64> {
        self.inflow_openings.iter().map(|&(k, s)| (s * opening_flows[k]).max(0.0)).collect()
    }

    pub fn inflows_into(&self, opening_flows: &[f64], out: &mut [f64]) {
        for (o, &(k, s)) in out.iter_mut().zip(&self.inflow_openings) {
            *o = (s * opening_flows[k]).max(0.0);
        }
    }
}

/// Assembled multi-zone building.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildingModel {
    pub name: String,
    pub site: Site,
    pub zones: Vec<ZoneModel>,
    pub openings: Vec<Opening>,
    /// Distinct exterior orientations over all zones.
    pub orientations: Vec<Orientation>,
    pub initial_temperature: f64,
}

struct Builder {
    caps: Vec<f64>,
    a: Vec<(usize, usize, f64)>,
    /// (state, column label, conductance or gain)
    b: Vec<(usize, String, f64)>,
}

impl Builder {
    fn link(&mut self, i: usize, j: usize, g: f64) {
        self.a.push((i, j, g));
    }
    fn drive(&mut self, i: usize, column: &str, g: f64) {
        if g != 0.0 {
            self.b.push((i, column.to_string(), g));
        }
    }
}

fn sw_label(o: &Orientation) -> String {
    format!("sw:{}", o.label())
}

fn neighbour_label(zone: &str) -> String {
    format!("zone:{zone}")
}

/// Zone model with coupling columns for `neighbours` and inflow sources given
/// as column labels (one entry per inflow term).
fn build_zone_with(
    zone: &ZoneDescription,
    neighbours: &[String],
    inflow_sources: &[String],
) -> Result<ZoneModel> {
    zone.validate()?;
    let n = zone.order();
    let n1 = n - 1;
    let air = n1;
    let mut bld = Builder { caps: vec![0.0; n], a: Vec::new(), b: Vec::new() };

    let exterior = |o: Orientation| -> Vec<(String, f64)> {
        // film split between sky (long-wave) and outdoor air
        let sky = (H_RADIATIVE * o.sky_view()).min(zone.h_ext);
        vec![("t_out".to_string(), (zone.h_ext - sky) / zone.h_ext), ("t_sky".to_string(), sky / zone.h_ext)]
    };

    let mut orientations: Vec<Orientation> = Vec::new();
    let mut orientation_of = |o: Orientation| -> String {
        if !orientations.iter().any(|x| x.key() == o.key()) {
            orientations.push(o);
        }
        sw_label(&o)
    };

    // Interior surfaces that receive transmitted solar, weighted by area.
    let mut receivers: Vec<(usize, f64)> = Vec::new();
    let mut next = 0;
    let mut wall_first = Vec::new();
    for wall in &zone.walls {
        let h_out = match wall.boundary {
            Boundary::Exterior => zone.h_ext,
            Boundary::Zone(_) => zone.h_int,
            Boundary::Adiabatic => 0.0,
        };
        let chain = discretize_wall(wall, zone.h_int, h_out)?;
        let first = next;
        for (k, &c) in chain.capacitances.iter().enumerate() {
            bld.caps[first + k] = c;
        }
        bld.link(air, first, chain.conductances[0]);
        for k in 1..chain.len() {
            bld.link(first + k - 1, first + k, chain.conductances[k]);
        }
        let last = first + chain.len() - 1;
        let g_out = *chain.conductances.last().unwrap();
        match &wall.boundary {
            Boundary::Exterior => {
                let o = Orientation { azimuth_deg: wall.azimuth_deg, tilt_deg: wall.tilt_deg };
                for (col, share) in exterior(o) {
                    bld.drive(last, &col, g_out * share);
                }
                let label = orientation_of(o);
                bld.drive(last, &label, wall.solar_absorptance * wall.area);
            }
            Boundary::Zone(other) => {
                if other == &zone.name {
                    return Err(Error::Topology(format!("wall {} of zone {} faces itself", wall.name, zone.name)));
                }
                bld.drive(last, &neighbour_label(other), g_out);
            }
            Boundary::Adiabatic => {}
        }
        wall_first.push(first);
        if wall.tilt_deg >= 135.0 {
            receivers.push((first, wall.area));
        }
        next += chain.len();
    }
    if receivers.is_empty() {
        receivers = zone.walls.iter().zip(&wall_first).map(|(w, &f)| (f, w.area)).collect();
    }
    let receiver_area: f64 = receivers.iter().map(|r| r.1).sum();

    for g in &zone.glazings {
        let node = next;
        next += 1;
        bld.caps[node] = GLASS_VOLUMETRIC_HEAT * GLASS_THICKNESS * g.area;
        let r_pane = (1.0 / g.u_value - 1.0 / zone.h_int - 1.0 / zone.h_ext).max(1e-3);
        let g_in = g.area / (1.0 / zone.h_int + r_pane / 2.0);
        let g_out = g.area / (1.0 / zone.h_ext + r_pane / 2.0);
        bld.link(air, node, g_in);
        let o = Orientation { azimuth_deg: g.azimuth_deg, tilt_deg: g.tilt_deg };
        for (col, share) in exterior(o) {
            bld.drive(node, &col, g_out * share);
        }
        let label = orientation_of(o);
        if receiver_area > 0.0 {
            for &(state, area) in &receivers {
                bld.drive(state, &label, g.transmittance * g.area * area / receiver_area);
            }
        } else {
            bld.drive(air, &label, g.transmittance * g.area);
        }
    }
    debug_assert_eq!(next, n1);
    bld.caps[air] = AIR_DENSITY * AIR_CP * zone.air_volume + zone.internal_capacity;
    bld.drive(air, "gain", 1.0);

    // Input frame
    let mut frame = InputFrame::default();
    let mut sources = Vec::new();
    frame.push(InputSegment::Meteorological, "t_out");
    sources.push(ColumnSource::OutdoorAir);
    frame.push(InputSegment::Meteorological, "t_sky");
    sources.push(ColumnSource::Sky);
    for (k, o) in orientations.iter().enumerate() {
        frame.push(InputSegment::ShortWave, sw_label(o));
        sources.push(ColumnSource::ShortWave(k));
    }
    frame.push(InputSegment::AirContribution, "gain");
    sources.push(ColumnSource::Gain);
    let mut all_neighbours: Vec<String> = neighbours.to_vec();
    for (_, col, _) in &bld.b {
        if let Some(z) = col.strip_prefix("zone:") {
            if !all_neighbours.iter().any(|x| x == z) {
                all_neighbours.push(z.to_string());
            }
        }
    }
    for (k, z) in all_neighbours.iter().enumerate() {
        frame.push(InputSegment::Coupling, neighbour_label(z));
        sources.push(ColumnSource::Neighbour(k));
    }
    let m = frame.len();

    let mut a = DMatrix::zeros(n, n);
    for &(i, j, g) in &bld.a {
        a[(i, i)] -= g / bld.caps[i];
        a[(i, j)] += g / bld.caps[i];
        a[(j, j)] -= g / bld.caps[j];
        a[(j, i)] += g / bld.caps[j];
    }
    let mut b = DMatrix::zeros(n, m);
    for (i, col, g) in &bld.b {
        let j = frame.index_of(col).expect("column registered");
        let unit = match sources[j] {
            ColumnSource::ShortWave(_) => SHORTWAVE_UNIT,
            ColumnSource::Gain => GAIN_UNIT,
            _ => 1.0,
        };
        b[(*i, j)] += unit * g / bld.caps[*i];
        if matches!(sources[j], ColumnSource::OutdoorAir | ColumnSource::Sky | ColumnSource::Neighbour(_)) {
            a[(*i, *i)] -= g / bld.caps[*i];
        }
    }

    let mut inflows = Vec::with_capacity(inflow_sources.len());
    for src in inflow_sources {
        let col = frame
            .index_of(src)
            .ok_or_else(|| Error::Topology(format!("zone {}: unknown inflow source {src}", zone.name)))?;
        inflows.push(InflowTerm { air_node: 0, source_column: col, k: AIR_CP / bld.caps[air] });
    }

    let base_air = AirRow {
        a21: a.view((n1, 0), (1, n1)).into_owned(),
        a22: a.view((n1, n1), (1, 1)).into_owned(),
        b2: b.rows(n1, 1).into_owned(),
    };
    let mut pm = PartitionedModel::new(
        a.view((0, 0), (n1, n1)).into_owned(),
        a.view((0, n1), (n1, 1)).into_owned(),
        b.rows(0, n1).into_owned(),
        base_air,
        inflows,
    )?;
    pm.input_labels = frame.labels();
    pm.state_labels = state_labels(zone);

    Ok(ZoneModel {
        name: zone.name.clone(),
        pm,
        frame,
        air_state: air,
        inflow_openings: Vec::new(),
        sources,
        internal_gain: zone.internal_gain,
        gain_profile: zone.gain_profile.clone(),
        orientations,
        neighbours: all_neighbours,
    })
}

fn state_labels(zone: &ZoneDescription) -> Vec<String> {
    let mut labels = Vec::with_capacity(zone.order());
    for w in &zone.walls {
        for k in 0..w.node_count() {
            labels.push(format!("{}:{}", w.name, k));
        }
    }
    for g in &zone.glazings {
        labels.push(g.name.clone());
    }
    labels.push("air".into());
    labels
}

/// Nodal model of a single zone, without airflow links.
pub fn build_zone(zone: &ZoneDescription) -> Result<ZoneModel> {
    build_zone_with(zone, &[], &[])
}

/// Builds every zone and wires inter-zone coupling columns and airflow inflows.
pub fn assemble_building(desc: &BuildingDescription) -> Result<BuildingModel> {
    desc.validate()?;
    let index: HashMap<&str, usize> = desc.zones.iter().enumerate().map(|(i, z)| (z.name.as_str(), i)).collect();
    let resolve = |name: &str| -> Result<OpeningEnd> {
        if name == EXTERIOR {
            Ok(OpeningEnd::Exterior)
        } else {
            index
                .get(name)
                .map(|&i| OpeningEnd::Zone(i))
                .ok_or_else(|| Error::Topology(format!("link refers to unknown zone {name}")))
        }
    };
    for z in &desc.zones {
        for w in &z.walls {
            if let Boundary::Zone(other) = &w.boundary {
                if !index.contains_key(other.as_str()) {
                    return Err(Error::Topology(format!("wall {} of zone {} faces unknown zone {other}", w.name, z.name)));
                }
            }
        }
    }
    let mut openings = Vec::with_capacity(desc.openings.len());
    for o in &desc.openings {
        openings.push(Opening {
            id: o.id.clone(),
            from: resolve(&o.from)?,
            to: resolve(&o.to)?,
            cd: o.cd,
            area: o.area,
            height: o.height,
            cp: o.cp,
            azimuth_deg: o.azimuth_deg,
            exponent: o.exponent,
        });
    }

    let mut zones = Vec::with_capacity(desc.zones.len());
    for (zi, z) in desc.zones.iter().enumerate() {
        let mut neighbours: Vec<String> = Vec::new();
        let mut sources = Vec::new();
        let mut inflow_openings = Vec::new();
        for (k, o) in openings.iter().enumerate() {
            let (other, sign) = if o.to == OpeningEnd::Zone(zi) {
                (o.from, 1.0)
            } else if o.from == OpeningEnd::Zone(zi) {
                (o.to, -1.0)
            } else {
                continue;
            };
            let src = match other {
                OpeningEnd::Exterior => "t_out".to_string(),
                OpeningEnd::Zone(j) => {
                    let name = &desc.zones[j].name;
                    if !neighbours.contains(name) {
                        neighbours.push(name.clone());
                    }
                    neighbour_label(name)
                }
            };
            sources.push(src);
            inflow_openings.push((k, sign));
        }
        // wall neighbours first, in wall order
        let mut ordered: Vec<String> = Vec::new();
        for w in &z.walls {
            if let Boundary::Zone(other) = &w.boundary {
                if !ordered.contains(other) {
                    ordered.push(other.clone());
                }
            }
        }
        for nb in neighbours {
            if !ordered.contains(&nb) {
                ordered.push(nb);
            }
        }
        let mut zm = build_zone_with(z, &ordered, &sources)?;
        zm.inflow_openings = inflow_openings;
        zones.push(zm);
    }

    let mut orientations: Vec<Orientation> = Vec::new();
    for zm in &zones {
        for o in &zm.orientations {
            if !orientations.iter().any(|x| x.key() == o.key()) {
                orientations.push(*o);
            }
        }
    }
    Ok(BuildingModel {
        name: desc.name.clone(),
        site: desc.site,
        zones,
        openings,
        orientations,
        initial_temperature: desc.initial_temperature,
    })
}

impl BuildingModel {
    pub fn zone_index(&self, name: &str) -> Option<usize> {
        self.zones.iter().position(|z| z.name == name)
    }

    pub fn orders(&self) -> Vec<usize> {
        self.zones.iter().map(|z| z.order()).collect()
    }

    pub fn is_closed(&self) -> bool {
        self.openings.is_empty()
    }

    /// Precomputes the column wiring used by [`InputAssembler::fill`].
    pub fn input_assembler(&self) -> InputAssembler {
        let zones = self
            .zones
            .iter()
            .map(|z| {
                z.sources
                    .iter()
                    .map(|s| match s {
                        ColumnSource::OutdoorAir => Wiring::OutdoorAir,
                        ColumnSource::Sky => Wiring::Sky,
                        ColumnSource::ShortWave(k) => {
                            let o = z.orientations[*k];
                            Wiring::ShortWave(self.orientations.iter().position(|x| x.key() == o.key()).unwrap())
                        }
                        ColumnSource::Gain => Wiring::Gain,
                        ColumnSource::Neighbour(k) => {
                            Wiring::Neighbour(self.zone_index(&z.neighbours[*k]).expect("validated topology"))
                        }
                    })
                    .collect()
            })
            .collect();
        InputAssembler { zones, flux: vec![0.0; self.orientations.len()] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Wiring {
    OutdoorAir,
    Sky,
    ShortWave(usize),
    Gain,
    Neighbour(usize),
}

/// Fills zone input vectors from weather and neighbour temperatures.
#[derive(Debug, Clone)]
pub struct InputAssembler {
    zones: Vec<Vec<Wiring>>,
    flux: Vec<f64>,
}

impl InputAssembler {
    /// Updates the incident flux per orientation for weather record `w`.
    pub fn set_weather(&mut self, model: &BuildingModel, w: &WeatherRecord) {
        let sun = solar::sun_position(w.time, model.site.latitude_deg);
        for (f, o) in self.flux.iter_mut().zip(&model.orientations) {
            *f = solar::incident_flux(w.global_horizontal, w.diffuse_horizontal, &sun, o);
        }
    }

    /// Weather-driven columns of zone `z` (coupling columns untouched).
    pub fn fill_weather(&self, model: &BuildingModel, z: usize, w: &WeatherRecord, u: &mut DVector<f64>) {
        let zone = &model.zones[z];
        for (j, wiring) in self.zones[z].iter().enumerate() {
            match *wiring {
                Wiring::OutdoorAir => u[j] = w.dry_bulb,
                Wiring::Sky => u[j] = w.sky_temperature,
                Wiring::ShortWave(k) => u[j] = self.flux[k] / SHORTWAVE_UNIT,
                Wiring::Gain => u[j] = zone.gain_at(w.time) / GAIN_UNIT,
                Wiring::Neighbour(_) => {}
            }
        }
    }

    /// Coupling columns of zone `z` from the current zone air temperatures.
    pub fn fill_coupling(&self, z: usize, air_temps: &[f64], u: &mut DVector<f64>) {
        for (j, wiring) in self.zones[z].iter().enumerate() {
            if let Wiring::Neighbour(k) = *wiring {
                u[j] = air_temps[k];
            }
        }
    }

    /// Columns of zone `z` that hold boundary temperatures (outdoor, sky, neighbours).
    pub fn temperature_columns(&self, z: usize) -> Vec<usize> {
        self.zones[z]
            .iter()
            .enumerate()
            .filter(|(_, w)| matches!(w, Wiring::OutdoorAir | Wiring::Sky | Wiring::Neighbour(_)))
            .map(|(j, _)| j)
            .collect()
    }
}

/// Per-zone input vectors at time `t`, coupling columns set to zero.
pub fn weather_inputs(weather: &WeatherSeries, model: &BuildingModel, t: f64) -> Result<Vec<DVector<f64>>> {
    let w = weather.at(t)?;
    let mut asm = model.input_assembler();
    asm.set_weather(model, &w);
    Ok((0..model.zones.len())
        .map(|z| {
            let mut u = DVector::zeros(model.zones[z].n_inputs());
            asm.fill_weather(model, z, &w, &mut u);
            u
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::is_stable;
    use approx::assert_relative_eq;

    fn lumped_zone() -> ZoneDescription {
        ZoneDescription {
            name: "z".into(),
            air_volume: 30.0,
            h_int: 3.0,
            h_ext: 20.0,
            walls: vec![WallDescription {
                name: "w".into(),
                area: 10.0,
                layers: vec![Layer { conductivity: 1.0, density: 2000.0, specific_heat: 1000.0, thickness: 0.1, nodes: 1 }],
                azimuth_deg: 180.0,
                tilt_deg: 90.0,
                boundary: Boundary::Exterior,
                solar_absorptance: 0.5,
            }],
            glazings: vec![],
            internal_capacity: 0.0,
            internal_gain: 0.0,
            gain_profile: vec![],
        }
    }

    #[test]
    fn two_node_model_by_hand() {
        let zm = build_zone(&lumped_zone()).unwrap();
        let (a, b) = zm.pm.full_matrices(&zm.pm.base_air);
        let c_wall = 2000.0 * 1000.0 * 0.1 * 10.0;
        let c_air = 1.2 * 1006.0 * 30.0;
        let half = 0.1 / 1.0 / 10.0 / 2.0;
        let g_in = 1.0 / (1.0 / (3.0 * 10.0) + half);
        let g_out = 1.0 / (1.0 / (20.0 * 10.0) + half);
        assert_relative_eq!(a[(0, 0)], -(g_in + g_out) / c_wall, max_relative = 1e-10);
        assert_relative_eq!(a[(0, 1)], g_in / c_wall, max_relative = 1e-10);
        assert_relative_eq!(a[(1, 0)], g_in / c_air, max_relative = 1e-10);
        assert_relative_eq!(a[(1, 1)], -g_in / c_air, max_relative = 1e-10);
        let sky = 5.0 * 0.5 / 20.0;
        assert_relative_eq!(b[(0, 0)], g_out * (1.0 - sky) / c_wall, max_relative = 1e-10);
        assert_relative_eq!(b[(0, 1)], g_out * sky / c_wall, max_relative = 1e-10);
        assert_relative_eq!(b[(0, 2)], 25.0 * 0.5 * 10.0 / c_wall, max_relative = 1e-10);
        assert_relative_eq!(b[(1, 3)], 100.0 / c_air, max_relative = 1e-10);
        assert_eq!(zm.frame.labels(), vec!["t_out", "t_sky", "sw:az180_tilt90", "gain"]);
    }

    #[test]
    fn closed_zone_is_time_invariant_and_stable() {
        let zm = build_zone(&lumped_zone()).unwrap();
        assert!(zm.pm.inflows.is_empty());
        let full = zm.pm.full_model(&zm.pm.air_row(&[]).unwrap()).unwrap();
        assert!(is_stable(&full.a).unwrap());
    }

    #[test]
    fn row_sums_vanish() {
        let mut z = lumped_zone();
        z.walls.push(WallDescription { boundary: Boundary::Adiabatic, tilt_deg: 180.0, name: "floor".into(), ..z.walls[0].clone() });
        z.glazings.push(GlazingDescription {
            name: "g".into(),
            area: 2.0,
            u_value: 5.0,
            transmittance: 0.7,
            azimuth_deg: 90.0,
            tilt_deg: 90.0,
        });
        let zm = build_zone(&z).unwrap();
        let (a, b) = zm.pm.full_matrices(&zm.pm.base_air);
        let temp_cols = [0usize, 1];
        for i in 0..a.nrows() {
            let s: f64 = a.row(i).sum() + temp_cols.iter().map(|&j| b[(i, j)]).sum::<f64>();
            assert!(s.abs() <= 1e-12 * a.row(i).amax(), "row {i}: {s}");
        }
    }

    #[test]
    fn dangling_links_are_rejected() {
        let mut desc = BuildingDescription {
            name: "b".into(),
            site: Site { latitude_deg: -21.0 },
            zones: vec![lumped_zone()],
            openings: vec![],
            initial_temperature: 25.0,
        };
        desc.zones[0].walls[0].boundary = Boundary::Zone("nowhere".into());
        assert!(matches!(assemble_building(&desc), Err(Error::Topology(_))));
        desc.zones[0].walls[0].boundary = Boundary::Exterior;
        desc.openings.push(OpeningDescription {
            id: "o".into(),
            from: "z".into(),
            to: "nowhere".into(),
            cd: 0.6,
            area: 1.0,
            height: 1.0,
            cp: 0.0,
            azimuth_deg: 0.0,
            exponent: 0.5,
        });
        assert!(matches!(assemble_building(&desc), Err(Error::Topology(_))));
    }

    #[test]
    fn two_zones_share_symmetric_coupling() {
        let mut a = lumped_zone();
        a.name = "a".into();
        let mut part = a.walls[0].clone();
        part.name = "partition".into();
        part.boundary = Boundary::Zone("b".into());
        a.walls.push(part.clone());
        let mut b = lumped_zone();
        b.name = "b".into();
        part.boundary = Boundary::Zone("a".into());
        b.walls.push(part);
        let desc = BuildingDescription {
            name: "pair".into(),
            site: Site { latitude_deg: -21.0 },
            zones: vec![a, b],
            openings: vec![],
            initial_temperature: 25.0,
        };
        let bm = assemble_building(&desc).unwrap();
        assert_eq!(bm.zones[0].frame.segment(InputSegment::Coupling).len(), 1);
        assert_eq!(bm.zones[1].frame.segment(InputSegment::Coupling).len(), 1);
        let ca = bm.zones[0].frame.index_of("zone:b").unwrap();
        let cb = bm.zones[1].frame.index_of("zone:a").unwrap();
        let (_, ba) = bm.zones[0].pm.full_matrices(&bm.zones[0].pm.base_air);
        let (_, bb) = bm.zones[1].pm.full_matrices(&bm.zones[1].pm.base_air);
        assert!(ba[(1, ca)] > 0.0);
        assert_eq!(ba.column(ca), bb.column(cb));
    }

    #[test]
    fn openings_add_inflow_terms() {
        let mut a = lumped_zone();
        a.name = "a".into();
        let mut b = lumped_zone();
        b.name = "b".into();
        let op = |id: &str, from: &str, to: &str| OpeningDescription {
            id: id.into(),
            from: from.into(),
            to: to.into(),
            cd: 0.6,
            area: 1.0,
            height: 1.0,
            cp: 0.5,
            azimuth_deg: 0.0,
            exponent: 0.5,
        };
        let desc = BuildingDescription {
            name: "pair".into(),
            site: Site { latitude_deg: -21.0 },
            zones: vec![a, b],
            openings: vec![op("in", "exterior", "a"), op("door", "a", "b")],
            initial_temperature: 25.0,
        };
        let bm = assemble_building(&desc).unwrap();
        assert_eq!(bm.zones[0].inflow_openings, vec![(0, 1.0), (1, -1.0)]);
        assert_eq!(bm.zones[1].inflow_openings, vec![(1, 1.0)]);
        assert_eq!(bm.zones[0].inflows(&[0.2, -0.1]), vec![0.2, 0.1]);
        assert_eq!(bm.zones[1].inflows(&[0.2, -0.1]), vec![0.0]);
        let row = bm.zones[1].pm.air_row(&[0.3]).unwrap();
        let col = bm.zones[1].frame.index_of("zone:a").unwrap();
        assert!(row.b2[(0, col)] > 0.0);
    }

    #[test]
    fn weather_inputs_fill_frame() {
        let desc = BuildingDescription {
            name: "one".into(),
            site: Site { latitude_deg: -21.0 },
            zones: vec![lumped_zone()],
            openings: vec![],
            initial_temperature: 25.0,
        };
        let bm = assemble_building(&desc).unwrap();
        let w = WeatherSeries::new(vec![
            WeatherRecord { time: 0.0, dry_bulb: 20.0, sky_temperature: 10.0, relative_humidity: 50.0, global_horizontal: 0.0, diffuse_horizontal: 0.0, wind_speed: 1.0, wind_direction: 0.0 },
            WeatherRecord { time: 3600.0, dry_bulb: 22.0, sky_temperature: 12.0, relative_humidity: 50.0, global_horizontal: 0.0, diffuse_horizontal: 0.0, wind_speed: 1.0, wind_direction: 0.0 },
        ])
        .unwrap();
        let u = weather_inputs(&w, &bm, 1800.0).unwrap();
        assert_eq!(u[0].as_slice(), &[21.0, 11.0, 0.0, 0.0]);
        assert!(matches!(weather_inputs(&w, &bm, 7200.0), Err(Error::Range { .. })));
    }
}
