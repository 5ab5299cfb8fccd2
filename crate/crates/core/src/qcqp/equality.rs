use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg;

/// Minimize `tᵀ Q1 t - 2 lᵀ t` subject to `tᵀ Q2 t = 0`, with `Q1` positive
/// definite and `Q2` symmetric (indefinite allowed).
#[derive(Debug, Clone)]
pub struct SingleEqualityQcqp {
    objective: DMatrix<f64>,
    constraint: DMatrix<f64>,
    linear: DVector<f64>,
}

impl SingleEqualityQcqp {
    pub fn new(objective: DMatrix<f64>, constraint: DMatrix<f64>, linear: DVector<f64>) -> Result<Self> {
        let n = linear.len();
        linalg::check_square("equality objective", &objective, n)?;
        linalg::check_square("equality constraint", &constraint, n)?;
        linalg::check_pd("equality objective", &objective)?;
        linalg::check_symmetric("equality constraint", &constraint)?;
        Ok(Self { objective, constraint, linear })
    }

    pub fn objective_matrix(&self) -> &DMatrix<f64> {
        &self.objective
    }

    pub fn constraint_matrix(&self) -> &DMatrix<f64> {
        &self.constraint
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    pub fn objective_value(&self, t: &DVector<f64>) -> f64 {
        t.dot(&(&self.objective * t)) - 2.0 * self.linear.dot(t)
    }

    /// `|tᵀ Q2 t| / (‖t‖² ‖Q2‖)`.
    pub fn constraint_residual(&self, t: &DVector<f64>) -> f64 {
        let scale = t.norm_squared() * self.constraint.norm();
        if scale == 0.0 {
            return 0.0;
        }
        t.dot(&(&self.constraint * t)).abs() / scale
    }

    /// Relative norm of `Q1 t + beta Q2 t - l`.
    pub fn stationarity_residual(&self, t: &DVector<f64>, beta: f64) -> f64 {
        let a = &self.objective * t;
        let b = &self.constraint * t * beta;
        let r = &a + &b - &self.linear;
        r.norm() / (a.norm() + b.norm() + self.linear.norm()).max(1e-300)
    }
}

/// Simultaneous diagonalization: `M Q1 Mᵀ = I`, `M Q2 Mᵀ = diag(sigma)`.
#[derive(Debug, Clone)]
pub struct WhitenedPair {
    pub transform: DMatrix<f64>,
    /// Sorted descending.
    pub sigma: DVector<f64>,
}

const WHITEN_TOL: f64 = 1e-10;

pub fn whiten_pair(q1: &DMatrix<f64>, q2: &DMatrix<f64>) -> Result<WhitenedPair> {
    let n = q1.nrows();
    linalg::check_square("whitening Q2", q2, n)?;
    let e1 = SymmetricEigen::new(linalg::symmetrize(q1));
    let scale = e1.eigenvalues.amax();
    let floor = linalg::PD_RELATIVE_FLOOR * scale.max(1e-300);
    if e1.eigenvalues.iter().any(|&d| !(d > floor)) {
        return Err(Error::Singular("whitening matrix Q1".into()));
    }
    // V⁻¹ = Σ1^{-1/2} U1ᵀ
    let inv_sqrt = e1.eigenvalues.map(|d| 1.0 / d.sqrt());
    let v_inv = DMatrix::from_diagonal(&inv_sqrt) * e1.eigenvectors.transpose();
    let k = linalg::symmetrize(&(&v_inv * q2 * v_inv.transpose()));
    let e2 = SymmetricEigen::new(k);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| e2.eigenvalues[b].total_cmp(&e2.eigenvalues[a]));
    let sigma = DVector::from_iterator(n, order.iter().map(|&i| e2.eigenvalues[i]));
    let u2 = DMatrix::from_fn(n, n, |r, c| e2.eigenvectors[(r, order[c])]);
    let transform = u2.transpose() * v_inv;

    let id_err = (&transform * q1 * transform.transpose() - DMatrix::identity(n, n)).amax();
    if id_err > WHITEN_TOL {
        return Err(Error::Solver(format!("whitening identity off by {id_err:e}")));
    }
    let diag = &transform * q2 * transform.transpose();
    let off = (&diag - DMatrix::from_diagonal(&diag.diagonal())).amax();
    let m_norm2 = (transform.norm()).powi(2);
    if off > WHITEN_TOL * (m_norm2 * q2.norm()).max(1e-300) {
        return Err(Error::Solver(format!("whitened constraint off-diagonal {off:e}")));
    }
    Ok(WhitenedPair { transform, sigma })
}

/// `Σ sigma_i m_i² / (1 + beta sigma_i)²`.
pub fn secular_function(beta: f64, sigma: &DVector<f64>, m: &DVector<f64>) -> Result<f64> {
    let mut acc = 0.0;
    for (&s, &mi) in sigma.iter().zip(m.iter()) {
        let den = 1.0 + beta * s;
        if den == 0.0 {
            return Err(Error::Solver(format!("secular function evaluated at a pole (beta = {beta:e})")));
        }
        acc += s * mi * mi / (den * den);
    }
    Ok(acc)
}

/// Which KKT case produced the solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KktCase {
    /// `Q2 = 0`: the constraint is vacuous.
    Unconstrained,
    /// `I + beta Σ2` positive definite; `beta` is a root of the secular
    /// equation.
    Interior,
    /// `I + beta Σ2` singular PSD; `beta` sits on a pole.
    Boundary,
}

#[derive(Debug, Clone)]
pub struct EqualitySolution {
    pub t: DVector<f64>,
    pub multiplier: f64,
    pub case: KktCase,
    pub objective: f64,
    pub constraint_residual: f64,
    pub stationarity_residual: f64,
}

const POLE_APPROACH: f64 = 1e-9;
const MAX_BISECTIONS: usize = 200;

/// Solves the single-equality QCQP: whiten, then find the multiplier by
/// bisection on the secular equation; if the secular function does not
/// change sign on the interval where `I + beta Σ2 ≻ 0`, try the two
/// boundary multipliers.
pub fn solve_single_equality_qcqp(problem: &SingleEqualityQcqp, tol: f64) -> Result<EqualitySolution> {
    let q2_norm = problem.constraint.amax();
    if q2_norm == 0.0 {
        let t = linalg::spd_solve_vec(&problem.objective, &problem.linear)
            .ok_or_else(|| Error::Singular("equality objective".into()))?;
        return Ok(finish(problem, t, 0.0, KktCase::Unconstrained));
    }

    let pair = whiten_pair(&problem.objective, &problem.constraint)?;
    let m = &pair.transform * &problem.linear;
    let smax_abs = pair.sigma.amax();
    let sigma = pair.sigma.map(|s| if s.abs() < 1e-12 * smax_abs { 0.0 } else { s });
    let n = sigma.len();
    if sigma.iter().all(|&s| s == 0.0) {
        let t = linalg::spd_solve_vec(&problem.objective, &problem.linear)
            .ok_or_else(|| Error::Singular("equality objective".into()))?;
        return Ok(finish(problem, t, 0.0, KktCase::Unconstrained));
    }

    let sigma_max = sigma.max();
    let sigma_min = sigma.min();
    // Poles bounding the interval on which I + beta Σ2 is positive definite.
    let lower_pole = (sigma_max > 0.0).then(|| -1.0 / sigma_max);
    let upper_pole = (sigma_min < 0.0).then(|| -1.0 / sigma_min);

    if let Some(beta) = interior_root(&sigma, &m, lower_pole, upper_pole)? {
        let r = DVector::from_fn(n, |i, _| m[i] / (1.0 + beta * sigma[i]));
        let t = pair.transform.transpose() * r;
        let sol = finish(problem, t, beta, KktCase::Interior);
        let weight: f64 = sigma.iter().zip(m.iter()).map(|(s, mi)| s.abs() * mi * mi).sum();
        let secular = secular_function(beta, &sigma, &m)?;
        if secular.abs() <= tol * weight.max(1e-300) || sol.constraint_residual <= tol {
            return Ok(sol);
        }
    }

    let mut best: Option<EqualitySolution> = None;
    for beta in [upper_pole, lower_pole].into_iter().flatten() {
        if let Some(r) = boundary_point(beta, &sigma, &m, tol) {
            let t = pair.transform.transpose() * r;
            let sol = finish(problem, t, beta, KktCase::Boundary);
            if best.as_ref().is_none_or(|b| sol.objective < b.objective) {
                best = Some(sol);
            }
        }
    }
    best.ok_or(Error::NoStationaryPoint)
}

fn finish(problem: &SingleEqualityQcqp, t: DVector<f64>, beta: f64, case: KktCase) -> EqualitySolution {
    EqualitySolution {
        objective: problem.objective_value(&t),
        constraint_residual: problem.constraint_residual(&t),
        stationarity_residual: problem.stationarity_residual(&t, beta),
        multiplier: beta,
        case,
        t,
    }
}

/// Root of the (decreasing) secular function strictly between the poles,
/// or `None` when no sign change can be bracketed.
fn interior_root(
    sigma: &DVector<f64>,
    m: &DVector<f64>,
    lower_pole: Option<f64>,
    upper_pole: Option<f64>,
) -> Result<Option<f64>> {
    let phi = |b: f64| secular_function(b, sigma, m);
    let at_zero = phi(0.0)?;
    if at_zero == 0.0 {
        return Ok(Some(0.0));
    }
    // Positive at zero: the root lies toward the upper pole, and vice versa.
    let pole = if at_zero > 0.0 { upper_pole } else { lower_pole };
    let Some(pole) = pole else {
        return Ok(None);
    };
    let mut inner = 0.0;
    let mut gap = pole;
    let outer = loop {
        gap *= 0.5;
        let probe = pole - gap;
        let v = phi(probe)?;
        if (v < 0.0) == (at_zero > 0.0) || v == 0.0 {
            break probe;
        }
        inner = probe;
        if gap.abs() < POLE_APPROACH * pole.abs() {
            return Ok(None);
        }
    };
    // Bisection keeping phi(inner) and phi(outer) of opposite signs.
    let (mut a, mut b) = (inner, outer);
    if phi(b)? == 0.0 {
        return Ok(Some(b));
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        let v = phi(mid)?;
        if v == 0.0 {
            return Ok(Some(mid));
        }
        if (v > 0.0) == (at_zero > 0.0) {
            a = mid;
        } else {
            b = mid;
        }
    }
    // Pick the endpoint with the smaller residual.
    let (fa, fb) = (phi(a)?.abs(), phi(b)?.abs());
    Ok(Some(if fa <= fb { a } else { b }))
}

/// KKT point for a boundary multiplier: `(I + beta Σ2) r = m` on the
/// regular coordinates, free coordinates chosen to zero `rᵀ Σ2 r`.
fn boundary_point(beta: f64, sigma: &DVector<f64>, m: &DVector<f64>, tol: f64) -> Option<DVector<f64>> {
    let n = sigma.len();
    let m_scale = m.amax().max(1e-300);
    let mut r = DVector::zeros(n);
    let mut free = Vec::new();
    let mut fixed_sum = 0.0;
    for i in 0..n {
        let den = 1.0 + beta * sigma[i];
        if den.abs() <= 1e-12 {
            if m[i].abs() > tol * m_scale {
                return None;
            }
            free.push(i);
        } else {
            r[i] = m[i] / den;
            fixed_sum += sigma[i] * r[i] * r[i];
        }
    }
    let &j = free.first()?;
    let need = -fixed_sum / sigma[j];
    if need < 0.0 {
        return None;
    }
    r[j] = need.sqrt();
    Some(r)
}
