//! Sun position and short-wave flux on oriented surfaces (isotropic sky).

use chrono::{DateTime, Datelike, Timelike};
use serde::{Deserialize, Serialize};

/// Plane orientation: azimuth clockwise from north, tilt from horizontal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Orientation {
    pub azimuth_deg: f64,
    pub tilt_deg: f64,
}

impl Orientation {
    pub fn horizontal() -> Self {
        Self { azimuth_deg: 0.0, tilt_deg: 0.0 }
    }

    pub fn label(&self) -> String {
        format!("az{:.0}_tilt{:.0}", self.azimuth_deg, self.tilt_deg)
    }

    /// Unit normal in (east, north, up) coordinates.
    fn normal(&self) -> [f64; 3] {
        let (az, tilt) = (self.azimuth_deg.to_radians(), self.tilt_deg.to_radians());
        [tilt.sin() * az.sin(), tilt.sin() * az.cos(), tilt.cos()]
    }

    /// Fraction of the sky dome seen by the surface.
    pub fn sky_view(&self) -> f64 {
        (1.0 + self.tilt_deg.to_radians().cos()) / 2.0
    }

    pub(crate) fn key(&self) -> (i64, i64) {
        ((self.azimuth_deg * 1e6).round() as i64, (self.tilt_deg * 1e6).round() as i64)
    }
}

/// Unit vector towards the sun in (east, north, up) coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SunPosition {
    pub direction: [f64; 3],
}

impl SunPosition {
    pub fn cos_zenith(&self) -> f64 {
        self.direction[2]
    }
}

/// Declination in radians for a day of the year (Cooper's formula).
pub fn declination(day_of_year: u32) -> f64 {
    (23.45f64).to_radians() * (2.0 * std::f64::consts::PI * (284.0 + day_of_year as f64) / 365.0).sin()
}

/// Sun direction from declination, latitude and hour angle (radians, positive afternoon).
pub fn sun_direction(declination: f64, latitude: f64, hour_angle: f64) -> SunPosition {
    let (sd, cd) = declination.sin_cos();
    let (sl, cl) = latitude.sin_cos();
    let (sw, cw) = hour_angle.sin_cos();
    SunPosition { direction: [-cd * sw, sd * cl - cd * sl * cw, sl * sd + cl * cd * cw] }
}

/// Sun position at time `t` (seconds since the Unix epoch, read as local solar time).
pub fn sun_position(t: f64, latitude_deg: f64) -> SunPosition {
    let secs = t.floor() as i64;
    let dt = DateTime::from_timestamp(secs, 0).expect("timestamp in range").naive_utc();
    let hours = dt.hour() as f64 + dt.minute() as f64 / 60.0 + (dt.second() as f64 + (t - secs as f64)) / 3600.0;
    let omega = (15.0 * (hours - 12.0)).to_radians();
    sun_direction(declination(dt.ordinal()), latitude_deg.to_radians(), omega)
}

/// Sun elevations below this cosine of zenith carry no beam component.
const MIN_COS_ZENITH: f64 = 0.01;

/// Incident short-wave flux density (W/m2) on a surface: beam projection plus isotropic diffuse.
pub fn incident_flux(ghi: f64, dhi: f64, sun: &SunPosition, surface: &Orientation) -> f64 {
    let beam_h = (ghi - dhi).max(0.0);
    let cosz = sun.cos_zenith();
    let n = surface.normal();
    let cos_inc = n[0] * sun.direction[0] + n[1] * sun.direction[1] + n[2] * sun.direction[2];
    let ratio = if surface.tilt_deg == 0.0 {
        // beam on the horizontal is the measured beam by definition
        1.0
    } else if cosz > MIN_COS_ZENITH {
        cos_inc.max(0.0) / cosz
    } else {
        0.0
    };
    beam_h * ratio + dhi * surface.sky_view()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn night_gives_zero() {
        let sun = sun_direction(0.1, 0.5, std::f64::consts::PI);
        let s = Orientation { azimuth_deg: 180.0, tilt_deg: 90.0 };
        assert_eq!(incident_flux(0.0, 0.0, &sun, &s), 0.0);
    }

    #[test]
    fn horizontal_gets_global() {
        for omega in [-1.2, -0.3, 0.0, 0.7, 1.5] {
            let sun = sun_direction(-0.3, -0.37, omega);
            assert_eq!(incident_flux(640.0, 170.0, &sun, &Orientation::horizontal()), 640.0);
        }
    }

    #[test]
    fn vertical_south_at_noon() {
        // Hand geometry: at noon the sun sits due south at zenith (lat - decl),
        // so a south wall sees cos(incidence) = sin(lat - decl).
        let lat = 45f64.to_radians();
        let decl = declination(172);
        let sun = sun_direction(decl, lat, 0.0);
        let zen = lat - decl;
        let expected = 500.0 * zen.sin() / zen.cos() + 100.0 * 0.5;
        let s = Orientation { azimuth_deg: 180.0, tilt_deg: 90.0 };
        assert_relative_eq!(incident_flux(600.0, 100.0, &sun, &s), expected, epsilon = 1e-6);
        // the north wall sees only diffuse
        let north = Orientation { azimuth_deg: 0.0, tilt_deg: 90.0 };
        assert_relative_eq!(incident_flux(600.0, 100.0, &sun, &north), 50.0, epsilon = 1e-9);
    }

    #[test]
    fn morning_sun_is_east() {
        let sun = sun_direction(0.0, 0.0, -std::f64::consts::FRAC_PI_4);
        assert!(sun.direction[0] > 0.0);
        let east = Orientation { azimuth_deg: 90.0, tilt_deg: 90.0 };
        let west = Orientation { azimuth_deg: 270.0, tilt_deg: 90.0 };
        assert!(incident_flux(500.0, 100.0, &sun, &east) > incident_flux(500.0, 100.0, &sun, &west));
    }

    #[test]
    fn declination_extremes() {
        assert_relative_eq!(declination(172).to_degrees(), 23.45, epsilon = 0.05);
        assert_relative_eq!(declination(355).to_degrees(), -23.45, epsilon = 0.05);
    }

    #[test]
    fn sun_position_noon() {
        // 2002-06-21T12:00:00 local solar time at the equator
        let t = crate::building::weather::parse_timestamp("2002-06-21T12:00:00").unwrap();
        let sun = sun_position(t, 0.0);
        assert!(sun.direction[0].abs() < 1e-12);
        assert_relative_eq!(sun.cos_zenith(), declination(172).cos(), epsilon = 1e-12);
    }
}
