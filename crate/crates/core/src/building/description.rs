//! JSON building description.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NODES_PER_LAYER: usize = 3;

fn default_nodes() -> usize {
    DEFAULT_NODES_PER_LAYER
}
fn default_absorptance() -> f64 {
    0.6
}
fn default_exponent() -> f64 {
    0.5
}
fn default_cd() -> f64 {
    0.6
}
fn default_initial() -> f64 {
    26.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingDescription {
    pub name: String,
    pub site: Site,
    pub zones: Vec<ZoneDescription>,
    #[serde(default)]
    pub openings: Vec<OpeningDescription>,
    /// Used when a run does not start from a steady state.
    #[serde(default = "default_initial")]
    pub initial_temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub latitude_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneDescription {
    pub name: String,
    pub air_volume: f64,
    /// Interior convective coefficient, W/m2K.
    pub h_int: f64,
    /// Exterior film coefficient (convective plus long-wave), W/m2K.
    pub h_ext: f64,
    pub walls: Vec<WallDescription>,
    #[serde(default)]
    pub glazings: Vec<GlazingDescription>,
    /// Furniture and contents lumped with the air node, J/K.
    #[serde(default)]
    pub internal_capacity: f64,
    /// Convective internal gain, W.
    #[serde(default)]
    pub internal_gain: f64,
    /// Optional hourly multipliers of `internal_gain` (24 values).
    #[serde(default)]
    pub gain_profile: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Exterior,
    Adiabatic,
    Zone(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub conductivity: f64,
    pub density: f64,
    pub specific_heat: f64,
    pub thickness: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallDescription {
    pub name: String,
    pub area: f64,
    /// Layers listed from the zone side outwards.
    pub layers: Vec<Layer>,
    /// Degrees clockwise from north.
    #[serde(default)]
    pub azimuth_deg: f64,
    /// 0 = facing up, 90 = vertical, 180 = facing down.
    #[serde(default)]
    pub tilt_deg: f64,
    pub boundary: Boundary,
    #[serde(default = "default_absorptance")]
    pub solar_absorptance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlazingDescription {
    pub name: String,
    pub area: f64,
    pub u_value: f64,
    pub transmittance: f64,
    #[serde(default)]
    pub azimuth_deg: f64,
    #[serde(default = "default_vertical")]
    pub tilt_deg: f64,
}

fn default_vertical() -> f64 {
    90.0
}

/// Opening between two zones or between a zone and the exterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpeningDescription {
    pub id: String,
    /// Zone name or `"exterior"`.
    pub from: String,
    pub to: String,
    #[serde(default = "default_cd")]
    pub cd: f64,
    pub area: f64,
    /// Height above the reference level, m.
    pub height: f64,
    /// Wind pressure coefficient at normal incidence (exterior openings).
    #[serde(default)]
    pub cp: f64,
    /// Facade azimuth for exterior openings, degrees from north.
    #[serde(default)]
    pub azimuth_deg: f64,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
}

pub const EXTERIOR: &str = "exterior";

fn positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Validation(format!("{what} must be positive, got {v}")))
    }
}

impl Layer {
    pub fn validate(&self, ctx: &str) -> Result<()> {
        positive(&format!("{ctx}: conductivity"), self.conductivity)?;
        positive(&format!("{ctx}: density"), self.density)?;
        positive(&format!("{ctx}: specific heat"), self.specific_heat)?;
        positive(&format!("{ctx}: thickness"), self.thickness)?;
        if self.nodes == 0 {
            return Err(Error::Validation(format!("{ctx}: node count must be at least 1")));
        }
        Ok(())
    }
}

impl WallDescription {
    pub fn validate(&self) -> Result<()> {
        positive(&format!("wall {}: area", self.name), self.area)?;
        if self.layers.is_empty() {
            return Err(Error::Validation(format!("wall {} has no layers", self.name)));
        }
        for (i, l) in self.layers.iter().enumerate() {
            l.validate(&format!("wall {} layer {i}", self.name))?;
        }
        if !(0.0..=1.0).contains(&self.solar_absorptance) {
            return Err(Error::Validation(format!("wall {}: absorptance outside [0, 1]", self.name)));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.layers.iter().map(|l| l.nodes).sum()
    }
}

impl GlazingDescription {
    pub fn validate(&self) -> Result<()> {
        positive(&format!("glazing {}: area", self.name), self.area)?;
        positive(&format!("glazing {}: U-value", self.name), self.u_value)?;
        if !(0.0..=1.0).contains(&self.transmittance) {
            return Err(Error::Validation(format!("glazing {}: transmittance outside [0, 1]", self.name)));
        }
        Ok(())
    }
}

impl ZoneDescription {
    pub fn validate(&self) -> Result<()> {
        positive(&format!("zone {}: air volume", self.name), self.air_volume)?;
        positive(&format!("zone {}: h_int", self.name), self.h_int)?;
        positive(&format!("zone {}: h_ext", self.name), self.h_ext)?;
        if self.internal_capacity < 0.0 || self.internal_gain < 0.0 {
            return Err(Error::Validation(format!("zone {}: negative internal capacity or gain", self.name)));
        }
        if !self.gain_profile.is_empty() && self.gain_profile.len() != 24 {
            return Err(Error::Validation(format!("zone {}: gain profile needs 24 values", self.name)));
        }
        for w in &self.walls {
            w.validate()?;
        }
        for g in &self.glazings {
            g.validate()?;
        }
        Ok(())
    }

    /// Number of states of the generated nodal model (walls, glazings, air).
    pub fn order(&self) -> usize {
        self.walls.iter().map(|w| w.node_count()).sum::<usize>() + self.glazings.len() + 1
    }
}

impl OpeningDescription {
    pub fn validate(&self) -> Result<()> {
        if !(self.cd > 0.0 && self.cd <= 1.0) {
            return Err(Error::Validation(format!("opening {}: Cd must lie in (0, 1]", self.id)));
        }
        positive(&format!("opening {}: area", self.id), self.area)?;
        positive(&format!("opening {}: exponent", self.id), self.exponent)?;
        if self.from == self.to {
            return Err(Error::Validation(format!("opening {} connects {} to itself", self.id, self.from)));
        }
        Ok(())
    }
}

impl BuildingDescription {
    pub fn from_json(s: &str) -> Result<Self> {
        let b: Self = serde_json::from_str(s)?;
        b.validate()?;
        Ok(b)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.zones.is_empty() {
            return Err(Error::Validation("building has no zones".into()));
        }
        let mut names = std::collections::HashSet::new();
        for z in &self.zones {
            z.validate()?;
            if z.name == EXTERIOR || !names.insert(z.name.as_str()) {
                return Err(Error::Validation(format!("duplicate or reserved zone name {}", z.name)));
            }
        }
        for o in &self.openings {
            o.validate()?;
        }
        Ok(())
    }

    /// Same building with every layer meshed `factor` times finer.
    pub fn refined(&self, factor: usize) -> Self {
        let mut b = self.clone();
        for z in &mut b.zones {
            for w in &mut z.walls {
                for l in &mut w.layers {
                    l.nodes *= factor;
                }
            }
        }
        b
    }

    /// Same building with all openings removed.
    pub fn closed(&self) -> Self {
        Self { openings: Vec::new(), ..self.clone() }
    }
}
