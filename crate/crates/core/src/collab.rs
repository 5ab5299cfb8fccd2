//! Collaboration design: for fixed compression vectors and gain, the MSE is
//! a convex quadratic in the admissible weights `w`, and each sensor's
//! energy is a convex quadratic as well.

use nalgebra::{DMatrix, DVector};

use crate::compress::CompressionSet;
use crate::error::{Error, Result};
use crate::kronmap::{devectorize, linear_form_vector, quad_form_matrix, vectorize_weights, WeightIndexMap};
use crate::linalg;
use crate::model::{EnergyBudget, SignalModel, Topology};
use crate::qcqp::{solve_convex_qcqp, BarrierOptions, ConvexQcqp, ConvexSolution, QuadConstraint};

/// Convex QCQP over the link weights `w`.
#[derive(Debug, Clone)]
pub struct CollabProblem {
    pub qcqp: ConvexQcqp,
    pub map: WeightIndexMap,
    /// Ridge added to `Ω0` (zero when it was already PD).
    pub ridge: f64,
    /// `Ω1_i`, one per sensor: the collaboration energy.
    pub collab_quads: Vec<DMatrix<f64>>,
    /// `Ω2_i`, one per transmitter: the compression energy.
    pub compress_quads: Vec<DMatrix<f64>>,
    /// Sensor index of each constraint in `qcqp`.
    pub constraint_sensors: Vec<usize>,
}

impl CollabProblem {
    /// MSE at `w`, without the ridge term.
    pub fn objective_at(&self, w: &DVector<f64>) -> f64 {
        self.qcqp.objective_value(w) - self.ridge * w.norm_squared()
    }
}

/// Builds `wᵀ Ω0 w - 2 wᵀ d + eta0 = tr P(k)` and one energy constraint per
/// sensor that has anything to spend.
pub fn assemble_collab_problem(
    p_prev: &DMatrix<f64>,
    model: &SignalModel,
    topo: &Topology,
    comp: &CompressionSet,
    t: &DMatrix<f64>,
    budget: &EnergyBudget,
) -> Result<CollabProblem> {
    let dims = model.dims();
    let (n, m, l) = (dims.sensors, dims.transmitters, dims.obs_dim);
    if budget.len() != n {
        return Err(Error::dims("energy budget", n, budget.len()));
    }
    if comp.len() != m {
        return Err(Error::dims("compression set", m, comp.len()));
    }
    let map = WeightIndexMap::new(topo);
    let u = map.len();
    let h = model.observation();
    let f = comp.matrix();

    let b0 = t * model.channel() * &f;
    let hp = h * p_prev;
    let mut c0 = &hp * h.transpose() + model.obs_noise_agg();
    linalg::symmetrize_in_place(&mut c0);
    let mut omega0 = quad_form_matrix(&b0, &c0, &b0.transpose(), &map, l)?;
    let d = linear_form_vector(&b0, &hp, &map, l)?;
    let eta0 = p_prev.trace()
        + (t * model.fc_noise()).component_mul(t).sum()
        + (&b0 * model.collab_noise_agg()).component_mul(&b0).sum();

    linalg::check_psd("collaboration objective", &omega0, 1e-9)?;
    let ridge = if linalg::is_pd(&omega0) {
        0.0
    } else {
        let tr = omega0.trace();
        if tr > 0.0 { 1e-10 * tr / u as f64 } else { 1e-10 }
    };
    for k in 0..u {
        omega0[(k, k)] += ridge;
    }

    let r_y = model.obs_cov();
    let mut collab_quads = Vec::with_capacity(n);
    for i in 0..n {
        let tr = model.obs_cov_of(i).trace();
        let mut q = DMatrix::zeros(u, u);
        for (k, e) in map.entries().iter().enumerate() {
            if e.col == i && e.row != i {
                q[(k, k)] = tr;
            }
        }
        collab_quads.push(q);
    }
    let mut compress_quads = Vec::with_capacity(m);
    let mut offsets = Vec::with_capacity(m);
    for i in 0..m {
        let fi = comp.get(i);
        let mut b = DMatrix::zeros(1, m * l);
        b.view_mut((0, i * l), (1, l)).copy_from(&fi.transpose());
        compress_quads.push(quad_form_matrix(&b, &r_y, &b.transpose(), &map, l)?);
        offsets.push(fi.dot(&(model.collab_noise(i) * fi)));
    }

    let mut constraints = Vec::new();
    let mut constraint_sensors = Vec::new();
    for i in 0..n {
        let (quad, offset) = if i < m {
            (&collab_quads[i] + &compress_quads[i], offsets[i])
        } else {
            (collab_quads[i].clone(), 0.0)
        };
        if quad.iter().all(|&v| v == 0.0) && offset < budget.cap(i) {
            continue;
        }
        if offset >= budget.cap(i) {
            return Err(Error::InfeasibleStart { constraint: i, offset, bound: budget.cap(i) });
        }
        constraints.push(QuadConstraint { quad, offset, bound: budget.cap(i) });
        constraint_sensors.push(i);
    }
    let qcqp = ConvexQcqp::new(omega0, d, eta0, constraints)?;
    Ok(CollabProblem { qcqp, map, ridge, collab_quads, compress_quads, constraint_sensors })
}

#[derive(Debug, Clone)]
pub struct CollabSolution {
    pub w: DMatrix<f64>,
    /// MSE at the returned weights (ridge excluded).
    pub objective: f64,
    /// The solver's point was no better than `previous`, which was kept.
    pub kept_previous: bool,
    pub solution: ConvexSolution,
}

/// Solves the weight QCQP from `w = 0`. When `previous` is feasible and
/// strictly better than the solver's answer, it is returned instead so the
/// alternation never increases the MSE.
pub fn solve_collaboration(problem: &CollabProblem, previous: Option<&DMatrix<f64>>) -> Result<CollabSolution> {
    let solution = solve_convex_qcqp(&problem.qcqp, &BarrierOptions::default())?;
    let objective = problem.objective_at(&solution.x);
    if let Some(prev) = previous {
        let pv = vectorize_weights(prev, &problem.map)?;
        let prev_obj = problem.objective_at(&pv);
        if problem.qcqp.max_violation(&pv) == 0.0 && prev_obj < objective {
            return Ok(CollabSolution { w: prev.clone(), objective: prev_obj, kept_previous: true, solution });
        }
    }
    let w = devectorize(&solution.x, &problem.map)?;
    Ok(CollabSolution { w, objective, kept_previous: false, solution })
}
