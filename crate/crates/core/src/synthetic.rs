//! Synthetic test buildings and weather.
//!
//! The five-zone dwelling is a single-storey tropical house: three bedrooms,
//! a living room, and a service zone (kitchen, bathroom, WC). Its closed
//! zone orders are 33, 36, 37, 68 and 28.

use std::f64::consts::PI;

use crate::building::description::*;
use crate::building::weather::{parse_timestamp, WeatherRecord, WeatherSeries};

pub const LATITUDE_DEG: f64 = -21.0;
pub const WEATHER_START: &str = "2002-02-01T00:00:00";

fn layer(conductivity: f64, density: f64, specific_heat: f64, thickness: f64, nodes: usize) -> Layer {
    Layer { conductivity, density, specific_heat, thickness, nodes }
}

fn render() -> Layer {
    layer(1.15, 1800.0, 1000.0, 0.02, 1)
}

fn concrete(thickness: f64, nodes: usize) -> Layer {
    layer(1.75, 2300.0, 920.0, thickness, nodes)
}

fn wall(name: &str, area: f64, layers: Vec<Layer>, azimuth: f64, tilt: f64, boundary: Boundary) -> WallDescription {
    WallDescription {
        name: name.into(),
        area,
        layers,
        azimuth_deg: azimuth,
        tilt_deg: tilt,
        boundary,
        solar_absorptance: 0.6,
    }
}

/// Plastered concrete block facade, 5 nodes.
fn facade(name: &str, area: f64, azimuth: f64) -> WallDescription {
    wall(name, area, vec![concrete(0.15, 4), render()], azimuth, 90.0, Boundary::Exterior)
}

/// Interior concrete partition, 4 nodes.
fn partition(name: &str, area: f64, other: &str) -> WallDescription {
    wall(name, area, vec![concrete(0.10, 4)], 0.0, 90.0, Boundary::Zone(other.into()))
}

/// Plasterboard ceiling, mineral wool and fibre-cement sheet, 4 nodes.
fn roof(name: &str, area: f64) -> WallDescription {
    let mut w = wall(
        name,
        area,
        vec![
            layer(0.25, 900.0, 1000.0, 0.013, 1),
            layer(0.04, 30.0, 1030.0, 0.05, 2),
            layer(0.35, 1500.0, 1000.0, 0.006, 1),
        ],
        0.0,
        0.0,
        Boundary::Exterior,
    );
    w.solar_absorptance = 0.7;
    w
}

/// Slab on grade with a soil layer, 8 nodes, adiabatic at depth.
fn floor(name: &str, area: f64) -> WallDescription {
    wall(
        name,
        area,
        vec![concrete(0.12, 4), layer(1.5, 1800.0, 1300.0, 0.5, 4)],
        0.0,
        180.0,
        Boundary::Adiabatic,
    )
}

fn window(name: &str, area: f64, azimuth: f64) -> GlazingDescription {
    GlazingDescription { name: name.into(), area, u_value: 5.8, transmittance: 0.75, azimuth_deg: azimuth, tilt_deg: 90.0 }
}

fn zone(name: &str, air_volume: f64, walls: Vec<WallDescription>, glazings: Vec<GlazingDescription>, gain: f64, profile: Vec<f64>) -> ZoneDescription {
    ZoneDescription {
        name: name.into(),
        air_volume,
        h_int: 4.0,
        h_ext: 17.0,
        walls,
        glazings,
        internal_capacity: 20_000.0 * air_volume / 30.0,
        internal_gain: gain,
        gain_profile: profile,
    }
}

fn profile(on: &[usize]) -> Vec<f64> {
    (0..24).map(|h| if on.contains(&h) { 1.0 } else { 0.1 }).collect()
}

pub fn dwelling_closed() -> BuildingDescription {
    let night = profile(&[0, 1, 2, 3, 4, 5, 6, 21, 22, 23]);
    let day = profile(&[7, 8, 12, 13, 18, 19, 20, 21, 22]);
    let meals = profile(&[6, 7, 11, 12, 18, 19, 20]);
    let zones = vec![
        zone(
            "bedroom1",
            30.0,
            vec![
                facade("b1_north", 9.0, 0.0),
                facade("b1_east", 7.5, 90.0),
                partition("b1_living", 9.0, "living"),
                partition("b1_bedroom2", 7.5, "bedroom2"),
                roof("b1_roof", 12.0),
                floor("b1_floor", 12.0),
            ],
            vec![window("b1_win_n", 1.2, 0.0), window("b1_win_e", 0.6, 90.0)],
            80.0,
            night.clone(),
        ),
        zone(
            "bedroom2",
            27.0,
            vec![
                facade("b2_north", 8.0, 0.0),
                facade("b2_west", 6.5, 270.0),
                partition("b2_bedroom1", 7.5, "bedroom1"),
                partition("b2_living", 8.0, "living"),
                partition("b2_bedroom3", 6.5, "bedroom3"),
                roof("b2_roof", 10.8),
                floor("b2_floor", 10.8),
            ],
            vec![window("b2_win_n", 1.0, 0.0)],
            80.0,
            night.clone(),
        ),
        zone(
            "bedroom3",
            27.0,
            vec![
                facade("b3_south", 8.0, 180.0),
                facade("b3_west", 6.5, 270.0),
                partition("b3_bedroom2", 6.5, "bedroom2"),
                partition("b3_living", 8.0, "living"),
                partition("b3_service", 6.5, "service"),
                roof("b3_roof", 10.8),
                floor("b3_floor", 10.8),
            ],
            vec![window("b3_win_s", 1.0, 180.0), window("b3_win_w", 0.6, 270.0)],
            80.0,
            night,
        ),
        zone(
            "living",
            90.0,
            vec![
                facade("lv_south", 12.0, 180.0),
                facade("lv_east", 10.0, 90.0),
                facade("lv_north", 6.0, 0.0),
                facade("lv_west", 4.0, 270.0),
                partition("lv_bedroom1", 9.0, "bedroom1"),
                partition("lv_bedroom2", 8.0, "bedroom2"),
                partition("lv_bedroom3", 8.0, "bedroom3"),
                partition("lv_service", 7.0, "service"),
                roof("lv_roof_a", 18.0),
                roof("lv_roof_b", 18.0),
                floor("lv_floor_a", 18.0),
                floor("lv_floor_b", 18.0),
                wall("lv_furniture", 10.0, vec![concrete(0.08, 3)], 0.0, 90.0, Boundary::Adiabatic),
            ],
            vec![
                window("lv_win_s", 3.0, 180.0),
                window("lv_door_s", 2.0, 180.0),
                window("lv_win_e", 1.5, 90.0),
                window("lv_win_n", 1.0, 0.0),
            ],
            250.0,
            day,
        ),
        zone(
            "service",
            40.0,
            vec![
                facade("sv_south", 9.0, 180.0),
                facade("sv_east", 8.0, 90.0),
                partition("sv_bedroom3", 6.5, "bedroom3"),
                partition("sv_living", 7.0, "living"),
                roof("sv_roof", 14.0),
                wall("sv_floor", 14.0, vec![concrete(0.12, 4)], 0.0, 180.0, Boundary::Adiabatic),
            ],
            vec![window("sv_win_s", 0.8, 180.0)],
            300.0,
            meals,
        ),
    ];
    BuildingDescription {
        name: "dwelling-closed".into(),
        site: Site { latitude_deg: LATITUDE_DEG },
        zones,
        openings: vec![],
        initial_temperature: 27.0,
    }
}

fn opening(id: &str, from: &str, to: &str, area: f64, height: f64, cp: f64, azimuth: f64) -> OpeningDescription {
    OpeningDescription {
        id: id.into(),
        from: from.into(),
        to: to.into(),
        cd: 0.6,
        area,
        height,
        cp,
        azimuth_deg: azimuth,
        exponent: 0.5,
    }
}

/// Same dwelling with louvred windows and interior doors ajar.
pub fn dwelling_open() -> BuildingDescription {
    let mut b = dwelling_closed();
    b.name = "dwelling-open".into();
    b.openings = vec![
        opening("b1_louvre", EXTERIOR, "bedroom1", 0.05, 1.6, 0.6, 0.0),
        opening("b2_louvre", EXTERIOR, "bedroom2", 0.04, 1.6, 0.6, 0.0),
        opening("b3_louvre", EXTERIOR, "bedroom3", 0.04, 1.6, 0.6, 180.0),
        opening("lv_louvre_s", EXTERIOR, "living", 0.08, 1.0, 0.6, 180.0),
        opening("lv_louvre_e", EXTERIOR, "living", 0.06, 2.0, 0.6, 90.0),
        opening("sv_vent", "service", EXTERIOR, 0.04, 2.2, 0.6, 90.0),
        opening("door_b1", "living", "bedroom1", 0.03, 1.0, 0.0, 0.0),
        opening("door_b2", "living", "bedroom2", 0.03, 1.0, 0.0, 0.0),
        opening("door_b3", "living", "bedroom3", 0.03, 1.0, 0.0, 0.0),
        opening("door_sv", "living", "service", 0.03, 1.0, 0.0, 0.0),
    ];
    b
}

/// Two rooms sharing a partition, each with a facade and roof.
pub fn two_zone(open: bool) -> BuildingDescription {
    let room = |name: &str, other: &str, azimuth: f64| {
        zone(
            name,
            30.0,
            vec![
                facade(&format!("{name}_facade"), 9.0, azimuth),
                partition(&format!("{name}_partition"), 9.0, other),
                roof(&format!("{name}_roof"), 12.0),
            ],
            vec![window(&format!("{name}_win"), 1.2, azimuth)],
            100.0,
            vec![],
        )
    };
    let mut openings = Vec::new();
    if open {
        openings.push(opening("a_louvre", EXTERIOR, "a", 0.05, 1.0, 0.6, 0.0));
        openings.push(opening("door", "a", "b", 0.03, 1.0, 0.0, 0.0));
        openings.push(opening("b_louvre", "b", EXTERIOR, 0.05, 2.0, 0.6, 180.0));
    }
    BuildingDescription {
        name: if open { "two-zone-open" } else { "two-zone" }.into(),
        site: Site { latitude_deg: LATITUDE_DEG },
        zones: vec![room("a", "b", 0.0), room("b", "a", 180.0)],
        openings,
        initial_temperature: 27.0,
    }
}

/// Hourly tropical-summer weather starting at [`WEATHER_START`].
///
/// Deterministic: clear mornings, cloudier afternoons, trade winds from the
/// east-south-east strengthening in the afternoon.
pub fn tropical_weather(days: usize) -> WeatherSeries {
    let t0 = parse_timestamp(WEATHER_START).expect("valid literal");
    let mut records = Vec::with_capacity(days * 24 + 1);
    for k in 0..=days * 24 {
        let time = t0 + 3600.0 * k as f64;
        let hour = (k % 24) as f64;
        let day = (k / 24) as f64;
        let sun = crate::building::solar::sun_position(time, LATITUDE_DEG);
        let cosz = sun.cos_zenith().max(0.0);
        let cloud = 0.25 + 0.2 * (2.0 * PI * day / 5.0).sin().abs() + 0.25 * ((hour - 12.0) / 6.0).clamp(0.0, 1.0);
        let ghi = if cosz > 0.0 { 1050.0 * cosz.powf(1.15) * (1.0 - 0.75 * cloud) } else { 0.0 };
        let dhi = ghi * (0.15 + 0.6 * cloud).min(1.0);
        let swing = 3.5 + 0.8 * (2.0 * PI * day / 7.0).cos();
        let dry_bulb = 27.0 + 0.6 * (2.0 * PI * day / 4.0).sin() + swing * (2.0 * PI * (hour - 8.0) / 24.0).sin();
        let sky_temperature = dry_bulb - 11.0 + 6.0 * cloud;
        let relative_humidity = (78.0 - 2.5 * (dry_bulb - 27.0) + 5.0 * cloud).clamp(40.0, 100.0);
        let wind_speed = 3.0 + 1.5 * (2.0 * PI * (hour - 9.0) / 24.0).sin().max(0.0) + 0.5 * (2.0 * PI * day / 3.0).sin();
        let wind_direction = (110.0 + 20.0 * (2.0 * PI * (hour - 6.0) / 24.0).sin()).rem_euclid(360.0);
        records.push(WeatherRecord {
            time,
            dry_bulb,
            sky_temperature,
            relative_humidity,
            global_horizontal: ghi,
            diffuse_horizontal: dhi,
            wind_speed,
            wind_direction,
        });
    }
    WeatherSeries::new(records).expect("generator produces valid records")
}

/// Constant weather with no sun and no wind at temperature `t`.
pub fn isothermal_weather(t: f64, hours: usize) -> WeatherSeries {
    let t0 = parse_timestamp(WEATHER_START).expect("valid literal");
    let records = (0..=hours)
        .map(|k| WeatherRecord {
            time: t0 + 3600.0 * k as f64,
            dry_bulb: t,
            sky_temperature: t,
            relative_humidity: 70.0,
            global_horizontal: 0.0,
            diffuse_horizontal: 0.0,
            wind_speed: 0.0,
            wind_direction: 0.0,
        })
        .collect();
    WeatherSeries::new(records).expect("valid records")
}
