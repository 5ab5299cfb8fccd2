//! Compression vectors `f_i` and the fusion-center gain `T`.
//!
//! For fixed `W` and `T` the MSE `tr P(k)` is a convex quadratic in each
//! `f_i`; the centralized design sweeps over the transmitters Gauss-Seidel
//! style, while the decentralized design drops the cross-sensor terms and
//! instead constrains `T` so that those terms vanish.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimator::{effective_noise, effective_observation, joseph_trace, optimal_gain};
use crate::linalg;
use crate::model::{expected_collab_cost, row_block_apply, row_block_form, EnergyBudget, SignalModel, Topology};
use crate::qcqp::{
    solve_convex_qcqp, solve_single_equality_qcqp, BarrierOptions, ConvexQcqp, QuadConstraint, SingleEqualityQcqp,
};

/// One length-`L` compression vector per transmitter.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressionSet {
    vectors: Vec<DVector<f64>>,
}

impl CompressionSet {
    pub fn new(vectors: Vec<DVector<f64>>) -> Result<Self> {
        let Some(first) = vectors.first() else {
            return Err(Error::Config("compression set needs at least one transmitter".into()));
        };
        let l = first.len();
        if let Some(v) = vectors.iter().find(|v| v.len() != l) {
            return Err(Error::dims("compression vector", l, v.len()));
        }
        Ok(Self { vectors })
    }

    pub fn zeros(transmitters: usize, obs_dim: usize) -> Self {
        Self { vectors: vec![DVector::zeros(obs_dim); transmitters] }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn vectors(&self) -> &[DVector<f64>] {
        &self.vectors
    }

    pub fn get(&self, i: usize) -> &DVector<f64> {
        &self.vectors[i]
    }

    pub fn set(&mut self, i: usize, f: DVector<f64>) {
        assert_eq!(f.len(), self.obs_dim(), "compression vector length");
        self.vectors[i] = f;
    }

    /// Block-diagonal `F` (`M x ML`) with row `i` holding `f_iᵀ` in block `i`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let (m, l) = (self.len(), self.obs_dim());
        let mut out = DMatrix::zeros(m, m * l);
        for (i, f) in self.vectors.iter().enumerate() {
            out.view_mut((i, i * l), (1, l)).copy_from(&f.transpose());
        }
        out
    }
}

/// Fusion-center gain together with how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterGain {
    /// `T`, `P x S`.
    pub gain: DMatrix<f64>,
    /// Multiplier of the equality constraint (zero for the closed form).
    pub multiplier: f64,
    /// The constrained solve found no stationary point and the closed form
    /// was used instead.
    pub fallback: bool,
}

impl FilterGain {
    /// Column-major `vec(T)`.
    pub fn vectorized(&self) -> DVector<f64> {
        linalg::vec_of(&self.gain)
    }
}

/// `tr P(k)` after a Joseph-form update with the given design.
pub fn trace_after_update(
    p_prev: &DMatrix<f64>,
    model: &SignalModel,
    w: &DMatrix<f64>,
    f: &DMatrix<f64>,
    t: &DMatrix<f64>,
) -> f64 {
    let d = effective_observation(model, w, f);
    let r_n = effective_noise(model, w, f);
    joseph_trace(p_prev, &d, &r_n, t)
}

/// `pi_ij = g_iᵀ Tᵀ T g_j` for all transmitter pairs.
pub fn gain_coupling(model: &SignalModel, t: &DMatrix<f64>) -> DMatrix<f64> {
    let tg = t * model.channel();
    tg.transpose() * tg
}

/// Convex subproblem in one compression vector; its objective equals the
/// MSE it stands for (the full `tr P(k)` in the centralized case).
#[derive(Debug, Clone)]
pub struct CompressionProblem {
    pub sensor: usize,
    pub qcqp: ConvexQcqp,
    /// Ridge added to the objective matrix (zero when it was already PD).
    pub ridge: f64,
    /// Collaboration energy `lambda_i` already committed by the sensor.
    pub collab_cost: f64,
}

impl CompressionProblem {
    /// Objective without the ridge term.
    pub fn objective_at(&self, f: &DVector<f64>) -> f64 {
        self.qcqp.objective_value(f) - self.ridge * f.norm_squared()
    }
}

struct FiTerms {
    omega3: DMatrix<f64>,
    own_linear: DVector<f64>,
    constraint: QuadConstraint,
    lambda: f64,
    ridge: f64,
    cw: DMatrix<f64>,
}

/// Shared pieces of the centralized and decentralized `f_i` problems.
#[allow(clippy::too_many_arguments)]
fn fi_terms(
    i: usize,
    p_prev: &DMatrix<f64>,
    model: &SignalModel,
    topo: &Topology,
    w: &DMatrix<f64>,
    t: &DMatrix<f64>,
    pi: &DMatrix<f64>,
    mu: f64,
) -> Result<FiTerms> {
    let d = model.dims();
    if i >= d.transmitters {
        return Err(Error::IndexOutOfRange { index: i, len: d.transmitters });
    }
    let l = d.obs_dim;
    let h = model.observation();
    let lambda = expected_collab_cost(i, w, model, topo)?;
    if lambda >= mu {
        return Err(Error::BudgetExhausted { sensor: i, cost: lambda, budget: mu });
    }
    let hp = h * p_prev;
    let mut c = &hp * h.transpose() + model.obs_noise_agg();
    linalg::symmetrize_in_place(&mut c);
    let r_alpha = model.collab_noise(i);

    let wcw = row_block_form(w, i, i, &c, l);
    let mut omega3 = (&wcw + r_alpha) * pi[(i, i)];
    linalg::symmetrize_in_place(&mut omega3);
    let mut omega4 = row_block_form(w, i, i, &model.obs_cov(), l) + r_alpha;
    linalg::symmetrize_in_place(&mut omega4);

    let ridge = if linalg::is_pd(&omega3) { 0.0 } else { 1e-10 * omega4.trace() / l as f64 };
    if ridge > 0.0 {
        for k in 0..l {
            omega3[(k, k)] += ridge;
        }
    }
    // W_i H P T g_i
    let own_linear = row_block_apply(w, i, &hp, l) * (t * model.channel_of(i));
    let constraint = QuadConstraint { quad: omega4, offset: lambda, bound: mu };
    Ok(FiTerms { omega3, own_linear, constraint, lambda, ridge, cw: c })
}

fn offset_at_zero(
    i: usize,
    p_prev: &DMatrix<f64>,
    model: &SignalModel,
    w: &DMatrix<f64>,
    t: &DMatrix<f64>,
    current: &CompressionSet,
) -> f64 {
    let mut f = current.clone();
    f.set(i, DVector::zeros(current.obs_dim()));
    trace_after_update(p_prev, model, w, &f.matrix(), t)
}

/// Centralized subproblem for `f_i` with the other transmitters fixed:
/// minimize `fᵀ Ω3 f - 2 fᵀ d1 + c` subject to
/// `fᵀ (W_i R_y W_iᵀ + R_alpha_i) f + lambda_i <= mu_i`, where
/// `d1 = W_i H P T g_i - sum_{j != i} pi_ij W_i C W_jᵀ f_j`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_centralized_fi(
    i: usize,
    p_prev: &DMatrix<f64>,
    model: &SignalModel,
    topo: &Topology,
    w: &DMatrix<f64>,
    t: &DMatrix<f64>,
    current: &CompressionSet,
    mu: f64,
) -> Result<CompressionProblem> {
    let pi = gain_coupling(model, t);
    let terms = fi_terms(i, p_prev, model, topo, w, t, &pi, mu)?;
    let l = model.dims().obs_dim;
    let mut linear = terms.own_linear.clone();
    for j in 0..model.dims().transmitters {
        if j != i && pi[(i, j)] != 0.0 {
            linear -= row_block_form(w, i, j, &terms.cw, l) * current.get(j) * pi[(i, j)];
        }
    }
    let offset = offset_at_zero(i, p_prev, model, w, t, current);
    let qcqp = ConvexQcqp::new(terms.omega3, linear, offset, vec![terms.constraint])?;
    Ok(CompressionProblem { sensor: i, qcqp, ridge: terms.ridge, collab_cost: terms.lambda })
}

/// Decentralized subproblem: as the centralized one but with the
/// cross-sensor terms dropped, so only `W_i H P T g_i` enters the linear
/// part. The offset is the MSE at `f_i = 0`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_decentralized_fi(
    i: usize,
    p_prev: &DMatrix<f64>,
    model: &SignalModel,
    topo: &Topology,
    w: &DMatrix<f64>,
    t: &DMatrix<f64>,
    current: &CompressionSet,
    mu: f64,
) -> Result<CompressionProblem> {
    let pi = gain_coupling(model, t);
    let terms = fi_terms(i, p_prev, model, topo, w, t, &pi, mu)?;
    let offset = offset_at_zero(i, p_prev, model, w, t, current);
    let qcqp = ConvexQcqp::new(terms.omega3, terms.own_linear, offset, vec![terms.constraint])?;
    Ok(CompressionProblem { sensor: i, qcqp, ridge: terms.ridge, collab_cost: terms.lambda })
}

/// Solves a compression subproblem.
pub fn solve_compression(problem: &CompressionProblem) -> Result<DVector<f64>> {
    Ok(solve_convex_qcqp(&problem.qcqp, &BarrierOptions::default())?.x)
}

/// Gauss-Seidel sweeps over the transmitters. A new `f_i` replaces the old
/// one only when it does not increase the MSE.
#[allow(clippy::too_many_arguments)]
pub fn sweep_centralized(
    p_prev: &DMatrix<f64>,
    model: &SignalModel,
    topo: &Topology,
    w: &DMatrix<f64>,
    t: &DMatrix<f64>,
    init: &CompressionSet,
    budget: &EnergyBudget,
    sweeps: usize,
) -> Result<CompressionSet> {
    let mut current = init.clone();
    let mut mse = trace_after_update(p_prev, model, w, &current.matrix(), t);
    for _ in 0..sweeps {
        for i in 0..current.len() {
            let problem = assemble_centralized_fi(i, p_prev, model, topo, w, t, &current, budget.cap(i))?;
            let f = solve_compression(&problem)?;
            let mut candidate = current.clone();
            candidate.set(i, f);
            let candidate_mse = trace_after_update(p_prev, model, w, &candidate.matrix(), t);
            if candidate_mse <= mse {
                current = candidate;
                mse = candidate_mse;
            }
        }
    }
    Ok(current)
}

/// One local solve per transmitter, all against the same current set.
#[allow(clippy::too_many_arguments)]
pub fn local_updates(
    p_prev: &DMatrix<f64>,
    model: &SignalModel,
    topo: &Topology,
    w: &DMatrix<f64>,
    t: &DMatrix<f64>,
    current: &CompressionSet,
    budget: &EnergyBudget,
) -> Result<CompressionSet> {
    let mut out = current.clone();
    for i in 0..current.len() {
        let problem = assemble_decentralized_fi(i, p_prev, model, topo, w, t, current, budget.cap(i))?;
        out.set(i, solve_compression(&problem)?);
    }
    Ok(out)
}

/// `T = P Dᵀ (D P Dᵀ + R_n)⁻¹`.
pub fn filter_gain_closed_form(
    p_prev: &DMatrix<f64>,
    model: &SignalModel,
    w: &DMatrix<f64>,
    f: &DMatrix<f64>,
) -> Result<FilterGain> {
    let d = effective_observation(model, w, f);
    let r_n = effective_noise(model, w, f);
    Ok(FilterGain { gain: optimal_gain(p_prev, &d, &r_n)?, multiplier: 0.0, fallback: false })
}

/// Gain design with the cross-sensor terms forced to zero:
/// minimize `tᵀ Ω_T1 t - 2 lᵀ t` s.t. `tᵀ Ω_T2 t = 0`.
#[derive(Debug, Clone)]
pub struct DecentralizedGainProblem {
    /// `(D P Dᵀ + R_n) ⊗ I_P`.
    pub omega1: DMatrix<f64>,
    /// `sym(B) ⊗ I_P`.
    pub omega2: DMatrix<f64>,
    /// `vec(P Dᵀ)`.
    pub linear: DVector<f64>,
    /// `Lambda_i = sum_{j != i} g_i (f_iᵀ W_i C W_jᵀ f_j) g_jᵀ`.
    pub lambdas: Vec<DMatrix<f64>>,
    /// `sym(sum_i Lambda_i)`, `S x S`.
    pub coupling: DMatrix<f64>,
    param_dim: usize,
}

pub fn assemble_decentralized_gain(
    p_prev: &DMatrix<f64>,
    model: &SignalModel,
    w: &DMatrix<f64>,
    comp: &CompressionSet,
) -> Result<DecentralizedGainProblem> {
    let dims = model.dims();
    let (p, s, l, m) = (dims.param_dim, dims.antennas, dims.obs_dim, dims.transmitters);
    let fmat = comp.matrix();
    let d = effective_observation(model, w, &fmat);
    let r_n = effective_noise(model, w, &fmat);
    let h = model.observation();
    let mut c = h * p_prev * h.transpose() + model.obs_noise_agg();
    linalg::symmetrize_in_place(&mut c);

    let mut lambdas = Vec::with_capacity(m);
    for i in 0..m {
        let gi = model.channel_of(i);
        let mut lam = DMatrix::zeros(s, s);
        for j in (0..m).filter(|&j| j != i) {
            let coef = comp.get(i).dot(&(row_block_form(w, i, j, &c, l) * comp.get(j)));
            if coef != 0.0 {
                lam += &gi * model.channel_of(j).transpose() * coef;
            }
        }
        lambdas.push(lam);
    }
    let total = lambdas.iter().fold(DMatrix::zeros(s, s), |acc, x| acc + x);
    let coupling = linalg::symmetrize(&total);
    let mut innov = &d * p_prev * d.transpose() + r_n;
    linalg::symmetrize_in_place(&mut innov);
    let eye = DMatrix::identity(p, p);
    Ok(DecentralizedGainProblem {
        omega1: linalg::kron(&innov, &eye),
        omega2: linalg::kron(&coupling, &eye),
        linear: linalg::vec_of(&(p_prev * d.transpose())),
        lambdas,
        coupling,
        param_dim: p,
    })
}

/// Constraint tolerance handed to the equality solver.
pub const GAIN_CONSTRAINT_TOL: f64 = 1e-10;

/// Decentralized gain; falls back to the closed form (with a warning) when
/// the equality-constrained problem has no stationary point.
pub fn filter_gain_decentralized(
    p_prev: &DMatrix<f64>,
    model: &SignalModel,
    w: &DMatrix<f64>,
    comp: &CompressionSet,
) -> Result<FilterGain> {
    let prob = assemble_decentralized_gain(p_prev, model, w, comp)?;
    let s = model.dims().antennas;
    let qcqp = SingleEqualityQcqp::new(prob.omega1.clone(), prob.omega2.clone(), prob.linear.clone())?;
    match solve_single_equality_qcqp(&qcqp, GAIN_CONSTRAINT_TOL) {
        Ok(sol) => Ok(FilterGain {
            gain: linalg::unvec(&sol.t, prob.param_dim, s),
            multiplier: sol.multiplier,
            fallback: false,
        }),
        Err(Error::NoStationaryPoint) => {
            warn!("decentralized gain has no stationary point; using the closed-form gain");
            let mut g = filter_gain_closed_form(p_prev, model, w, &comp.matrix())?;
            g.fallback = true;
            Ok(g)
        }
        Err(e) => Err(e),
    }
}
