//! Shared fixtures for the criterion benches.

use thermal_mor::building::{assemble_building, BuildingModel};
use thermal_mor::nalgebra::DVector;
use thermal_mor::simulation::zone_model_at;
use thermal_mor::synthetic::{dwelling_closed, dwelling_open};
use thermal_mor::StateSpaceModel;

pub fn closed() -> BuildingModel {
    assemble_building(&dwelling_closed()).expect("synthetic building assembles")
}

pub fn open() -> BuildingModel {
    assemble_building(&dwelling_open()).expect("synthetic building assembles")
}

/// Full model of every zone with all inflows at `q` kg/s.
pub fn zone_models(model: &BuildingModel, q: f64) -> Vec<StateSpaceModel> {
    model
        .zones
        .iter()
        .map(|z| zone_model_at(z, &vec![q; z.pm.inflows.len()]).expect("zone model"))
        .collect()
}

pub fn unit_input(sys: &StateSpaceModel) -> DVector<f64> {
    DVector::from_element(sys.n_inputs(), 1.0)
}
