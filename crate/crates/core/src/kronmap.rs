//! Reduction of Kronecker-structured trace forms in a topology-masked weight
//! matrix `W` to ordinary linear and quadratic forms in the vector `w` of its
//! admissible entries.
//!
//! With `X = W ⊗ I_L`:
//!
//! * `aᵀ X = wᵀ Ã` ([`row_lift`])
//! * `tr[B X C Xᵀ D] = wᵀ E w` ([`quad_form_matrix`])
//! * `tr[B X C] = wᵀ c̃` ([`linear_form_vector`])
//!
//! Entries of `w` follow column-major order over the links of the topology.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::Topology;

/// One admissible entry of `W`: `w[u] = W[row, col]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeightEntry {
    pub row: usize,
    pub col: usize,
}

impl WeightEntry {
    pub fn is_self_link(&self) -> bool {
        self.row == self.col
    }
}

/// Bijection between the links of a topology and positions in `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightIndexMap {
    entries: Vec<WeightEntry>,
    rows: usize,
    cols: usize,
}

impl WeightIndexMap {
    pub fn new(topology: &Topology) -> Self {
        Self::from_mask(topology.adjacency())
    }

    /// Map over the nonzero pattern of an arbitrary `M x N` mask.
    pub fn from_mask(mask: &DMatrix<f64>) -> Self {
        let (rows, cols) = mask.shape();
        let mut entries = Vec::new();
        for col in 0..cols {
            for row in 0..rows {
                if mask[(row, col)] != 0.0 {
                    entries.push(WeightEntry { row, col });
                }
            }
        }
        Self { entries, rows, cols }
    }

    pub fn entries(&self) -> &[WeightEntry] {
        &self.entries
    }

    /// `U`, the number of free weights.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// The map restricted to links with `row != col`, in the same order.
    pub fn off_diagonal(&self) -> WeightIndexMap {
        WeightIndexMap {
            entries: self.entries.iter().copied().filter(|e| !e.is_self_link()).collect(),
            rows: self.rows,
            cols: self.cols,
        }
    }
}

/// Off-diagonal selector `J` with `J w` = the entries of `w` whose link is
/// not a self-link.
#[derive(Debug, Clone, PartialEq)]
pub struct OffDiagonalSelector {
    matrix: DMatrix<f64>,
}

impl OffDiagonalSelector {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `s`, the number of off-diagonal links.
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }
}

pub fn vectorize_weights(w: &DMatrix<f64>, map: &WeightIndexMap) -> Result<DVector<f64>> {
    if w.shape() != map.shape() {
        return Err(Error::dims(
            "weight matrix",
            format!("{}x{}", map.rows, map.cols),
            format!("{}x{}", w.nrows(), w.ncols()),
        ));
    }
    let mut allowed = DMatrix::from_element(map.rows, map.cols, false);
    for e in &map.entries {
        allowed[(e.row, e.col)] = true;
    }
    for c in 0..w.ncols() {
        for r in 0..w.nrows() {
            if !allowed[(r, c)] && w[(r, c)] != 0.0 {
                return Err(Error::MaskViolation { row: r, col: c, value: w[(r, c)] });
            }
        }
    }
    Ok(DVector::from_iterator(map.len(), map.entries.iter().map(|e| w[(e.row, e.col)])))
}

pub fn devectorize(w: &DVector<f64>, map: &WeightIndexMap) -> Result<DMatrix<f64>> {
    if w.len() != map.len() {
        return Err(Error::dims("weight vector", map.len(), w.len()));
    }
    let mut out = DMatrix::zeros(map.rows, map.cols);
    for (e, &v) in map.entries.iter().zip(w.iter()) {
        out[(e.row, e.col)] = v;
    }
    Ok(out)
}

/// `Ã` (`U x NL`) with `wᵀ Ã = aᵀ (W ⊗ I_L)` for every admissible `W`.
///
/// Row `u` is supported on the `L` columns of block `col_u` and holds the
/// slice of `a` belonging to block `row_u`.
pub fn row_lift(a: &DVector<f64>, map: &WeightIndexMap, l: usize) -> Result<DMatrix<f64>> {
    if a.len() != map.rows * l {
        return Err(Error::dims("row_lift vector", map.rows * l, a.len()));
    }
    let mut out = DMatrix::zeros(map.len(), map.cols * l);
    fill_row_lift(a.as_slice(), map, l, &mut out);
    Ok(out)
}

fn fill_row_lift(a: &[f64], map: &WeightIndexMap, l: usize, out: &mut DMatrix<f64>) {
    for (u, e) in map.entries.iter().enumerate() {
        for r in 0..l {
            out[(u, e.col * l + r)] = a[e.row * l + r];
        }
    }
}

/// `E` (`U x U`, symmetrized) with `wᵀ E w = tr[B (W⊗I_L) C (W⊗I_L)ᵀ D]`.
///
/// `B` is `r x ML`, `C` is `NL x NL`, `D` is `ML x r`. The sum runs over the
/// `r` rows of `B` (paired with the columns of `D`).
pub fn quad_form_matrix(
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    map: &WeightIndexMap,
    l: usize,
) -> Result<DMatrix<f64>> {
    let (ml, nl) = (map.rows * l, map.cols * l);
    if b.ncols() != ml {
        return Err(Error::dims("quad_form B columns", ml, b.ncols()));
    }
    if c.shape() != (nl, nl) {
        return Err(Error::dims("quad_form C", format!("{nl}x{nl}"), format!("{}x{}", c.nrows(), c.ncols())));
    }
    if d.shape() != (ml, b.nrows()) {
        return Err(Error::dims(
            "quad_form D",
            format!("{ml}x{}", b.nrows()),
            format!("{}x{}", d.nrows(), d.ncols()),
        ));
    }
    let u = map.len();
    let mut e = DMatrix::zeros(u, u);
    let mut bt = DMatrix::zeros(u, nl);
    let mut dt = DMatrix::zeros(u, nl);
    let mut row = vec![0.0; ml];
    for i in 0..b.nrows() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = b[(i, k)];
        }
        fill_row_lift(&row, map, l, &mut bt);
        fill_row_lift(d.column(i).as_slice(), map, l, &mut dt);
        e += &bt * c * dt.transpose();
    }
    Ok((&e + e.transpose()) * 0.5)
}

/// `c̃` with `wᵀ c̃ = tr[B (W⊗I_L) C]`; `B` is `r x ML`, `C` is `NL x r`.
pub fn linear_form_vector(
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    map: &WeightIndexMap,
    l: usize,
) -> Result<DVector<f64>> {
    let (ml, nl) = (map.rows * l, map.cols * l);
    if b.ncols() != ml {
        return Err(Error::dims("linear_form B columns", ml, b.ncols()));
    }
    if c.shape() != (nl, b.nrows()) {
        return Err(Error::dims(
            "linear_form C",
            format!("{nl}x{}", b.nrows()),
            format!("{}x{}", c.nrows(), c.ncols()),
        ));
    }
    let mut out = DVector::zeros(map.len());
    let mut bt = DMatrix::zeros(map.len(), nl);
    let mut row = vec![0.0; ml];
    for i in 0..b.nrows() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = b[(i, k)];
        }
        fill_row_lift(&row, map, l, &mut bt);
        out += &bt * c.column(i);
    }
    Ok(out)
}

/// Selector `J` (`s x U`): row `r` picks the `r`-th off-diagonal link in
/// column-major order.
pub fn off_diagonal_selector(map: &WeightIndexMap) -> OffDiagonalSelector {
    let picks: Vec<usize> =
        map.entries.iter().enumerate().filter(|(_, e)| !e.is_self_link()).map(|(u, _)| u).collect();
    let mut matrix = DMatrix::zeros(picks.len(), map.len());
    for (r, &u) in picks.iter().enumerate() {
        matrix[(r, u)] = 1.0;
    }
    OffDiagonalSelector { matrix }
}
