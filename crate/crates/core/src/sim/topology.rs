use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::Topology;

/// Sensor positions in the unit square, transmitters first.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub positions: Vec<[f64; 2]>,
    pub transmitters: usize,
    /// Index each sensor had in the original uniform draw.
    pub original_index: Vec<usize>,
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Draws `n` uniform positions and relabels so that the `m` sensors closest
/// to the center (ties by index) come first, in index order.
pub fn geometric_layout(n: usize, m: usize, seed: u64, stream: u64) -> Result<Layout> {
    if m == 0 || n < m {
        return Err(Error::Topology(format!("need 1 <= M <= N, got M = {m}, N = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let raw: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
    let center = [0.5, 0.5];
    let mut by_center: Vec<usize> = (0..n).collect();
    by_center.sort_by(|&a, &b| distance(raw[a], center).total_cmp(&distance(raw[b], center)).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = by_center[..m].to_vec();
    chosen.sort_unstable();
    let mut order = chosen.clone();
    order.extend((0..n).filter(|i| !chosen.contains(i)));
    Ok(Layout { positions: order.iter().map(|&i| raw[i]).collect(), transmitters: m, original_index: order })
}

impl Layout {
    /// `A[i][j] = 1` iff `i = j` or the distance is at most `radius`.
    pub fn topology(&self, radius: f64) -> Result<Topology> {
        let (m, n) = (self.transmitters, self.positions.len());
        let adj = DMatrix::from_fn(m, n, |i, j| {
            if i == j || distance(self.positions[i], self.positions[j]) <= radius {
                1.0
            } else {
                0.0
            }
        });
        Topology::new(adj)
    }
}

/// Random geometric topology of one layout.
pub fn geometric_topology(n: usize, m: usize, radius: f64, seed: u64) -> Result<Topology> {
    if !(radius >= 0.0) {
        return Err(Error::Topology(format!("radius must be >= 0, got {radius}")));
    }
    geometric_layout(n, m, seed, 0)?.topology(radius)
}
