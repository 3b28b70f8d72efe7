//! One-dimensional RC discretization of layered walls.

use super::description::WallDescription;
use crate::error::Result;

/// Node chain from the zone side (index 0) to the far boundary.
///
/// `conductances[0]` links the zone air to node 0, `conductances[i]` links
/// node `i - 1` to node `i`, and the last entry links the last node to the far
/// boundary (zero when the boundary is adiabatic).
#[derive(Debug, Clone, PartialEq)]
pub struct RcChain {
    pub capacitances: Vec<f64>,
    pub conductances: Vec<f64>,
}

impl RcChain {
    pub fn total_capacitance(&self) -> f64 {
        self.capacitances.iter().sum()
    }

    /// Series resistance through the chain, films included (K/W).
    pub fn total_resistance(&self) -> f64 {
        self.conductances.iter().filter(|g| **g > 0.0).map(|g| 1.0 / g).sum()
    }

    pub fn len(&self) -> usize {
        self.capacitances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.capacitances.is_empty()
    }
}

/// Splits every layer into equal cells with a node at each cell centre.
///
/// `h_inside` and `h_outside` are the film coefficients (W/m2K) on the zone
/// side and the far side; pass `0` for an adiabatic far side.
pub fn discretize_wall(wall: &WallDescription, h_inside: f64, h_outside: f64) -> Result<RcChain> {
    wall.validate()?;
    let area = wall.area;
    let mut capacitances = Vec::with_capacity(wall.node_count());
    // Half-cell resistances, one pair per node: (towards zone, towards far side).
    let mut halves = Vec::with_capacity(wall.node_count());
    for layer in &wall.layers {
        let n = layer.nodes as f64;
        let cell_c = layer.density * layer.specific_heat * layer.thickness * area / n;
        let half_r = layer.thickness / (layer.conductivity * area) / (2.0 * n);
        for _ in 0..layer.nodes {
            capacitances.push(cell_c);
            halves.push(half_r);
        }
    }
    let mut conductances = Vec::with_capacity(capacitances.len() + 1);
    conductances.push(1.0 / (1.0 / (h_inside * area) + halves[0]));
    for w in halves.windows(2) {
        conductances.push(1.0 / (w[0] + w[1]));
    }
    let last = *halves.last().expect("validated non-empty");
    conductances.push(if h_outside > 0.0 { 1.0 / (1.0 / (h_outside * area) + last) } else { 0.0 });
    Ok(RcChain { capacitances, conductances })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::building::description::{Boundary, Layer};
    use approx::assert_relative_eq;

    fn concrete(nodes: usize) -> WallDescription {
        WallDescription {
            name: "w".into(),
            area: 1.0,
            layers: vec![Layer { conductivity: 1.75, density: 2300.0, specific_heat: 920.0, thickness: 0.2, nodes }],
            azimuth_deg: 0.0,
            tilt_deg: 90.0,
            boundary: Boundary::Exterior,
            solar_absorptance: 0.6,
        }
    }

    #[test]
    fn lumped_wall() {
        let c = discretize_wall(&concrete(1), 3.0, 20.0).unwrap();
        assert_eq!(c.len(), 1);
        assert_relative_eq!(c.capacitances[0], 423_200.0);
        let half = 0.2 / 1.75 / 2.0;
        assert_relative_eq!(1.0 / c.conductances[0], 1.0 / 3.0 + half, max_relative = 1e-14);
        assert_relative_eq!(1.0 / c.conductances[1], 1.0 / 20.0 + half, max_relative = 1e-14);
    }

    #[test]
    fn concrete_aggregates() {
        let c = discretize_wall(&concrete(4), 3.0, 20.0).unwrap();
        assert_eq!(c.len(), 4);
        assert_relative_eq!(c.total_capacitance(), 423_200.0, max_relative = 1e-14);
        let conduction = c.total_resistance() - 1.0 / 3.0 - 1.0 / 20.0;
        assert_relative_eq!(conduction, 0.2 / 1.75, max_relative = 1e-12);
        assert!((conduction - 0.1143).abs() < 1e-4);
        assert!(c.capacitances.iter().all(|&x| (x - 105_800.0).abs() < 1e-9));
    }

    #[test]
    fn refinement_keeps_aggregates() {
        let coarse = discretize_wall(&concrete(3), 2.5, 17.0).unwrap();
        let fine = discretize_wall(&concrete(6), 2.5, 17.0).unwrap();
        assert_relative_eq!(coarse.total_capacitance(), fine.total_capacitance(), max_relative = 1e-14);
        assert_relative_eq!(coarse.total_resistance(), fine.total_resistance(), max_relative = 1e-12);
    }

    #[test]
    fn multilayer_interfaces() {
        let mut w = concrete(2);
        w.layers.push(Layer { conductivity: 0.04, density: 30.0, specific_heat: 1400.0, thickness: 0.05, nodes: 1 });
        let c = discretize_wall(&w, 3.0, 0.0).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(*c.conductances.last().unwrap(), 0.0);
        // node 1 (concrete) to node 2 (insulation): half cells of each layer
        let expected = 1.0 / (0.1 / 1.75 / 2.0 + 0.05 / 0.04 / 2.0);
        assert_relative_eq!(c.conductances[2], expected, max_relative = 1e-14);
    }

    #[test]
    fn invalid_layers() {
        let mut w = concrete(0);
        assert!(discretize_wall(&w, 3.0, 20.0).is_err());
        w.layers[0].nodes = 2;
        w.layers[0].conductivity = -1.0;
        assert!(discretize_wall(&w, 3.0, 20.0).is_err());
    }
}
