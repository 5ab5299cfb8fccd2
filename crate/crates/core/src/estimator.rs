//! Recursive LMMSE estimation at the fusion center.
//!
//! Given the designed collaboration matrix `W`, compression matrix `F` and
//! gain `T`, the fusion center sees `q = D x + n` with `D = G F (W⊗I_L) H`
//! and effective noise covariance `R_n`. The covariance update uses the
//! Joseph form, which is valid for any gain.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{row_block_apply, SignalModel, StateDynamics};

/// Linear state evolution used by the tracking variant.
pub type StateModel = StateDynamics;

/// Estimate, error covariance and time index.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    pub k: usize,
}

const PSD_SLACK: f64 = 1e-10;

impl EstimatorState {
    pub fn new(x: DVector<f64>, p: DMatrix<f64>) -> Result<Self> {
        let s = Self { x, p, k: 0 };
        s.validate()?;
        Ok(s)
    }

    /// Prior state `(x0, R_x)` of a model.
    pub fn from_prior(model: &SignalModel) -> Self {
        Self { x: model.prior_mean().clone(), p: model.prior_cov().clone(), k: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.len();
        linalg::check_square("error covariance", &self.p, n)?;
        linalg::check_symmetric("error covariance", &self.p)?;
        let tr = self.p.trace();
        if !tr.is_finite() {
            return Err(Error::Solver("error covariance trace is not finite".into()));
        }
        let lo = linalg::min_eigenvalue(&self.p);
        if lo < -PSD_SLACK * tr.abs() {
            return Err(Error::NotPositiveDefinite { name: "error covariance".into(), min_eigenvalue: lo });
        }
        Ok(())
    }
}

/// `(W ⊗ I_L) H`, the `ML x P` post-collaboration observation matrix.
pub fn collaborated_observation(model: &SignalModel, w: &DMatrix<f64>) -> DMatrix<f64> {
    let d = model.dims();
    let l = d.obs_dim;
    let mut out = DMatrix::zeros(d.stacked_collab(), d.param_dim);
    for i in 0..d.transmitters {
        out.rows_mut(i * l, l).copy_from(&row_block_apply(w, i, model.observation(), l));
    }
    out
}

/// `(W ⊗ I_L) C (W ⊗ I_L)ᵀ` for an `NL x NL` matrix `C`.
pub fn collaborated_cov(model: &SignalModel, w: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let d = model.dims();
    let l = d.obs_dim;
    let mut left = DMatrix::zeros(d.stacked_collab(), c.ncols());
    for i in 0..d.transmitters {
        left.rows_mut(i * l, l).copy_from(&row_block_apply(w, i, c, l));
    }
    let mut out = DMatrix::zeros(d.stacked_collab(), d.stacked_collab());
    let lt = left.transpose();
    for i in 0..d.transmitters {
        out.columns_mut(i * l, l).copy_from(&row_block_apply(w, i, &lt, l).transpose());
    }
    out
}

/// `D = G F (W⊗I_L) H` (`S x P`).
pub fn effective_observation(model: &SignalModel, w: &DMatrix<f64>, f: &DMatrix<f64>) -> DMatrix<f64> {
    model.channel() * (f * collaborated_observation(model, w))
}

/// `R_n = G F [(W⊗I_L) R_v (W⊗I_L)ᵀ + R_alpha] Fᵀ Gᵀ + R_eps` (`S x S`).
pub fn effective_noise(model: &SignalModel, w: &DMatrix<f64>, f: &DMatrix<f64>) -> DMatrix<f64> {
    let inner = collaborated_cov(model, w, model.obs_noise_agg()) + model.collab_noise_agg();
    let gf = model.channel() * f;
    let mut r = &gf * inner * gf.transpose() + model.fc_noise();
    linalg::symmetrize_in_place(&mut r);
    r
}

/// Joseph-form update `(I - T D) P (I - T D)ᵀ + T R_n Tᵀ`, symmetrized.
pub fn joseph_covariance(p: &DMatrix<f64>, d: &DMatrix<f64>, r_n: &DMatrix<f64>, t: &DMatrix<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    let a = DMatrix::identity(n, n) - t * d;
    let mut out = &a * p * a.transpose() + t * r_n * t.transpose();
    linalg::symmetrize_in_place(&mut out);
    out
}

/// `tr` of [`joseph_covariance`] without forming the full product.
pub fn joseph_trace(p: &DMatrix<f64>, d: &DMatrix<f64>, r_n: &DMatrix<f64>, t: &DMatrix<f64>) -> f64 {
    let n = p.nrows();
    let a = DMatrix::identity(n, n) - t * d;
    (&a * p).component_mul(&a).sum() + (t * r_n).component_mul(t).sum()
}

/// `P Dᵀ (D P Dᵀ + R_n)⁻¹`, the trace-minimizing gain.
pub fn optimal_gain(p: &DMatrix<f64>, d: &DMatrix<f64>, r_n: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut innov = d * p * d.transpose() + r_n;
    linalg::symmetrize_in_place(&mut innov);
    let pdt = p * d.transpose();
    let ch = innov.cholesky().ok_or_else(|| Error::Singular("innovation covariance".into()))?;
    // T = P Dᵀ S⁻¹  <=>  S Tᵀ = D P
    Ok(ch.solve(&pdt.transpose()).transpose())
}

fn check_step_shapes(state: &EstimatorState, q: &DVector<f64>, d: &DMatrix<f64>, r_n: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<()> {
    let p = state.x.len();
    let s = q.len();
    if d.shape() != (s, p) {
        return Err(Error::dims("observation operator D", format!("{s}x{p}"), format!("{}x{}", d.nrows(), d.ncols())));
    }
    linalg::check_square("effective noise R_n", r_n, s)?;
    if t.shape() != (p, s) {
        return Err(Error::dims("filter gain T", format!("{p}x{s}"), format!("{}x{}", t.nrows(), t.ncols())));
    }
    Ok(())
}

/// `x ← x + T (q - D x)`, Joseph-form covariance, `k ← k + 1`.
pub fn rlmmse_step(
    state: &EstimatorState,
    q: &DVector<f64>,
    d: &DMatrix<f64>,
    r_n: &DMatrix<f64>,
    t: &DMatrix<f64>,
) -> Result<EstimatorState> {
    check_step_shapes(state, q, d, r_n, t)?;
    let innovation = q - d * &state.x;
    let next = EstimatorState {
        x: &state.x + t * innovation,
        p: joseph_covariance(&state.p, d, r_n, t),
        k: state.k + 1,
    };
    next.validate()?;
    Ok(next)
}

/// LMMSE update from all raw observations `y = H x + v`.
pub fn benchmark_step(
    state: &EstimatorState,
    y: &DVector<f64>,
    h: &DMatrix<f64>,
    r_v: &DMatrix<f64>,
) -> Result<EstimatorState> {
    let p = state.x.len();
    if h.ncols() != p || h.nrows() != y.len() {
        return Err(Error::dims(
            "benchmark observation matrix",
            format!("{}x{p}", y.len()),
            format!("{}x{}", h.nrows(), h.ncols()),
        ));
    }
    linalg::check_square("observation noise", r_v, y.len())?;
    let t = optimal_gain(&state.p, h, r_v)?;
    let mut cov = &state.p - &t * h * &state.p;
    linalg::symmetrize_in_place(&mut cov);
    let next = EstimatorState { x: &state.x + &t * (y - h * &state.x), p: cov, k: state.k + 1 };
    next.validate()?;
    Ok(next)
}

/// `tr P`, the mean squared error.
pub fn mse_trace(state: &EstimatorState) -> f64 {
    state.p.trace()
}

/// Observed MSE decrease against its guaranteed lower bound
/// `λ_min(P)² λ_min((D P Dᵀ + R_n)⁻¹) ‖D‖_F²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityReport {
    pub decrease: f64,
    pub bound: f64,
    pub violated: bool,
}

/// Relative slack (against the previous MSE) before a shortfall counts.
pub const MONOTONICITY_TOL: f64 = 1e-8;

pub fn monotonicity_check(
    phi_prev: f64,
    phi_curr: f64,
    d: &DMatrix<f64>,
    p_prev: &DMatrix<f64>,
    r_n: &DMatrix<f64>,
) -> MonotonicityReport {
    let decrease = phi_prev - phi_curr;
    let dnorm2 = d.norm_squared();
    let bound = if dnorm2 == 0.0 {
        0.0
    } else {
        let innov = d * p_prev * d.transpose() + r_n;
        let lam_p = linalg::min_eigenvalue(p_prev).max(0.0);
        lam_p * lam_p * dnorm2 / linalg::max_eigenvalue(&innov)
    };
    let violated = bound - decrease > MONOTONICITY_TOL * phi_prev.abs().max(bound.abs());
    MonotonicityReport { decrease, bound, violated }
}

/// `x ← A x`, `P ← A P Aᵀ + R_ns`.
pub fn kalman_predict(state: &EstimatorState, sm: &StateModel) -> Result<EstimatorState> {
    let p = state.x.len();
    linalg::check_square("state transition", &sm.transition, p)?;
    linalg::check_square("state noise covariance", &sm.noise_cov, p)?;
    let a = &sm.transition;
    let mut cov = a * &state.p * a.transpose() + &sm.noise_cov;
    linalg::symmetrize_in_place(&mut cov);
    Ok(EstimatorState { x: a * &state.x, p: cov, k: state.k })
}

/// Joseph-form measurement update of a predicted state.
pub fn kalman_update(
    predicted: &EstimatorState,
    q: &DVector<f64>,
    d: &DMatrix<f64>,
    r_n: &DMatrix<f64>,
    t: &DMatrix<f64>,
) -> Result<EstimatorState> {
    rlmmse_step(predicted, q, d, r_n, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn zero_gain_leaves_state_unchanged() {
        let st = EstimatorState::new(DVector::from_vec(vec![1.0, -2.0]), DMatrix::identity(2, 2) * 3.0).unwrap();
        let d = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let next = rlmmse_step(&st, &DVector::from_element(1, 5.0), &d, &s(0.5), &DMatrix::zeros(2, 1)).unwrap();
        assert_eq!(next.x, st.x);
        assert_eq!(next.p, st.p);
        assert_eq!(next.k, 1);
    }

    #[test]
    fn repeated_scalar_measurement_information_form() {
        let (p0, r) = (2.0, 0.5);
        let mut st = EstimatorState::new(DVector::zeros(1), s(p0)).unwrap();
        for k in 1..=25 {
            let t = optimal_gain(&st.p, &s(1.0), &s(r)).unwrap();
            st = rlmmse_step(&st, &DVector::zeros(1), &s(1.0), &s(r), &t).unwrap();
            let expected = p0 * r / (r + k as f64 * p0);
            assert!((st.p[(0, 0)] - expected).abs() < 1e-14 * expected.max(1.0));
        }
    }

    #[test]
    fn trace_of_joseph_matches_full_form() {
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let d = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, -1.0, 2.0, 1.0]);
        let rn = DMatrix::identity(3, 3) * 0.2;
        let t = DMatrix::from_fn(2, 3, |i, j| 0.1 * (i + 2 * j) as f64 - 0.2);
        let full = joseph_covariance(&p, &d, &rn, &t).trace();
        assert!((joseph_trace(&p, &d, &rn, &t) - full).abs() < 1e-13);
    }

    #[test]
    fn benchmark_without_observations_is_identity() {
        let st = EstimatorState::new(DVector::from_vec(vec![0.5]), s(1.0)).unwrap();
        let next = benchmark_step(&st, &DVector::from_element(2, 3.0), &DMatrix::zeros(2, 1), &DMatrix::identity(2, 2))
            .unwrap();
        assert_eq!(next.p, st.p);
        assert_eq!(next.x, st.x);
    }

    #[test]
    fn trace_accessor() {
        let st = EstimatorState::new(DVector::zeros(3), DMatrix::identity(3, 3)).unwrap();
        assert_eq!(mse_trace(&st), 3.0);
        let z = EstimatorState::new(DVector::zeros(2), DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(mse_trace(&z), 0.0);
    }

    #[test]
    fn monotonicity_scalar_and_degenerate() {
        let rep = monotonicity_check(1.0, 1.0, &s(0.0), &s(1.0), &s(1.0));
        assert_eq!(rep.bound, 0.0);
        assert_eq!(rep.decrease, 0.0);
        assert!(!rep.violated);
        let (p, d, r) = (1.5, 0.8, 0.3);
        let t = optimal_gain(&s(p), &s(d), &s(r)).unwrap();
        let after = joseph_covariance(&s(p), &s(d), &s(r), &t)[(0, 0)];
        let rep = monotonicity_check(p, after, &s(d), &s(p), &s(r));
        let hand = p * p * d * d / (d * d * p + r);
        assert!((rep.decrease - hand).abs() < 1e-14);
        assert!((rep.bound - hand).abs() < 1e-14, "scalar bound is tight");
        assert!(!rep.violated);
    }

    #[test]
    fn prediction_edge_cases() {
        let st = EstimatorState::new(DVector::from_vec(vec![1.0, 2.0]), DMatrix::identity(2, 2)).unwrap();
        let same = kalman_predict(&st, &StateModel::identity(2)).unwrap();
        assert_eq!(same, st);
        let q = DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.1, 0.2]);
        let zero = kalman_predict(&st, &StateModel::new(DMatrix::zeros(2, 2), q.clone()).unwrap()).unwrap();
        assert_eq!(zero.p, q);
        assert_eq!(zero.x, DVector::zeros(2));
    }
}
