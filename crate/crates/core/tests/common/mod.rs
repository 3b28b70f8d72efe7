#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use thermal_mor::statespace::StateSpaceModel;

fn normal_matrix<R: Rng>(rng: &mut R, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random asymptotically stable system: a shifted random matrix (field of
/// values in the left half plane) under a random diagonal similarity.
pub fn random_stable<R: Rng>(rng: &mut R, n: usize, m: usize, p: usize) -> StateSpaceModel {
    let g = normal_matrix(rng, n, n) / (n as f64).sqrt();
    let shift = g.norm() + rng.random_range(0.05..1.0);
    let mut a = g - DMatrix::identity(n, n) * shift;
    let scale: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(-1.0..1.0))).collect();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] *= scale[i] / scale[j];
        }
    }
    let b = normal_matrix(rng, n, m);
    let c = normal_matrix(rng, p, n);
    let d = if rng.random_bool(0.5) { normal_matrix(rng, p, m) } else { DMatrix::zeros(p, m) };
    StateSpaceModel::new(a, b, c, d).expect("consistent shapes")
}

/// Largest entry of `|x - y|` relative to the largest entry of `|y|` (absolute below 1).
pub fn rel_max_diff(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    (x - y).amax() / y.amax().max(1.0)
}
