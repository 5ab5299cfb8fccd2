#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wsn_collab::compress::CompressionSet;
use wsn_collab::model::{Dimensions, ModelParts, SignalModel, Topology};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn gauss_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Random SPD matrix with eigenvalues bounded away from zero.
pub fn spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let a = gauss(rng, n, n);
    let m = &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * floor;
    (&m + m.transpose()) * 0.5
}

/// Random topology with self-links on the transmitters.
pub fn random_topology(rng: &mut ChaCha8Rng, m: usize, n: usize, density: f64) -> Topology {
    let adj = DMatrix::from_fn(m, n, |i, j| if i == j || rng.random::<f64>() < density { 1.0 } else { 0.0 });
    Topology::new(adj).unwrap()
}

pub fn random_model(rng: &mut ChaCha8Rng, dims: Dimensions) -> SignalModel {
    let (p, l, n, m, s) = (dims.param_dim, dims.obs_dim, dims.sensors, dims.transmitters, dims.antennas);
    let mut parts = ModelParts::isotropic(dims, 10.0, 10.0, 10.0);
    parts.prior_mean = gauss_vec(rng, p);
    parts.prior_cov = spd(rng, p, 0.2);
    parts.obs_noise = (0..n).map(|_| spd(rng, l, 0.05) * 0.2).collect();
    parts.collab_noise = (0..m).map(|_| spd(rng, l, 0.05) * 0.2).collect();
    parts.fc_noise = spd(rng, s, 0.05) * 0.2;
    parts.observation = gauss(rng, n * l, p);
    parts.channel = gauss(rng, s, m);
    SignalModel::new(parts).unwrap()
}

pub fn masked(rng: &mut ChaCha8Rng, topo: &Topology) -> DMatrix<f64> {
    let a = topo.adjacency();
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| if a[(i, j)] == 1.0 { rng.sample(StandardNormal) } else { 0.0 })
}

pub fn random_compression(rng: &mut ChaCha8Rng, m: usize, l: usize) -> CompressionSet {
    CompressionSet::new((0..m).map(|_| gauss_vec(rng, l)).collect()).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
