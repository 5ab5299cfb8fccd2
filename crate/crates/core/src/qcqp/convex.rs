use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// `xᵀ Q x + offset <= bound`.
#[derive(Debug, Clone)]
pub struct QuadConstraint {
    pub quad: DMatrix<f64>,
    pub offset: f64,
    pub bound: f64,
}

impl QuadConstraint {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.quad * x)) + self.offset
    }

    /// `bound - value`; positive when strictly satisfied.
    pub fn slack(&self, x: &DVector<f64>) -> f64 {
        self.bound - self.value(x)
    }
}

/// Minimize `xᵀ Q0 x - 2 dᵀ x + eta0` subject to convex quadratic
/// constraints.
#[derive(Debug, Clone)]
pub struct ConvexQcqp {
    objective: DMatrix<f64>,
    linear: DVector<f64>,
    offset: f64,
    constraints: Vec<QuadConstraint>,
}

impl ConvexQcqp {
    /// Validates symmetry, positive definiteness of the objective,
    /// positive semidefiniteness of each constraint and strict feasibility
    /// of `x = 0`.
    pub fn new(
        objective: DMatrix<f64>,
        linear: DVector<f64>,
        offset: f64,
        constraints: Vec<QuadConstraint>,
    ) -> Result<Self> {
        let n = linear.len();
        linalg::check_square("objective matrix", &objective, n)?;
        linalg::check_pd("objective matrix", &objective)?;
        for (i, c) in constraints.iter().enumerate() {
            let name = format!("constraint matrix {i}");
            linalg::check_square(&name, &c.quad, n)?;
            linalg::check_psd(&name, &c.quad, 1e-9)?;
            if !(c.offset < c.bound) {
                return Err(Error::InfeasibleStart { constraint: i, offset: c.offset, bound: c.bound });
            }
        }
        Ok(Self { objective, linear, offset, constraints })
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn objective_matrix(&self) -> &DMatrix<f64> {
        &self.objective
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn constraints(&self) -> &[QuadConstraint] {
        &self.constraints
    }

    pub fn objective_value(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.objective * x)) - 2.0 * self.linear.dot(x) + self.offset
    }

    /// Largest constraint violation (zero when feasible).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        self.constraints.iter().map(|c| (-c.slack(x)).max(0.0)).fold(0.0, f64::max)
    }

    /// Relative norm of the Lagrangian gradient for the given multipliers.
    pub fn kkt_residual(&self, x: &DVector<f64>, duals: &[f64]) -> f64 {
        let obj_grad = &self.objective * x * 2.0;
        let mut grad = &obj_grad - &self.linear * 2.0;
        let mut scale = obj_grad.norm() + 2.0 * self.linear.norm();
        for (c, &lam) in self.constraints.iter().zip(duals) {
            let g = &c.quad * x * (2.0 * lam);
            scale += g.norm();
            grad += g;
        }
        grad.norm() / scale.max(1e-300)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    /// Newton iteration cap reached; the returned point is the best
    /// strictly feasible iterate.
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct ConvexSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub duals: Vec<f64>,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    pub newton_steps: usize,
}

/// Log-barrier parameters.
#[derive(Debug, Clone, Copy)]
pub struct BarrierOptions {
    pub initial_t: f64,
    pub t_growth: f64,
    /// Stop once `constraints / t` falls below this.
    pub gap_tol: f64,
    pub armijo: f64,
    /// Centering stops when half the squared Newton decrement is below this.
    pub newton_tol: f64,
    /// Newton steps allowed per centering.
    pub max_centering_steps: usize,
    pub max_newton_steps: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            initial_t: 1.0,
            t_growth: 10.0,
            gap_tol: 1e-9,
            armijo: 1e-4,
            newton_tol: 1e-10,
            max_centering_steps: 100,
            max_newton_steps: 2000,
        }
    }
}

/// Solves a convex QCQP by the log-barrier method, starting from the
/// strictly feasible point `x = 0`.
///
/// When the unconstrained minimizer `Q0⁻¹ d` is strictly feasible it is
/// returned directly with zero multipliers.
pub fn solve_convex_qcqp(problem: &ConvexQcqp, opts: &BarrierOptions) -> Result<ConvexSolution> {
    let n = problem.dim();
    let unconstrained = linalg::spd_solve_vec(&problem.objective, &problem.linear)
        .ok_or_else(|| Error::Singular("objective matrix".into()))?;
    if problem.constraints.iter().all(|c| c.slack(&unconstrained) > 0.0) {
        let duals = vec![0.0; problem.constraints.len()];
        return Ok(ConvexSolution {
            objective: problem.objective_value(&unconstrained),
            kkt_residual: problem.kkt_residual(&unconstrained, &duals),
            x: unconstrained,
            duals,
            status: SolveStatus::Converged,
            newton_steps: 0,
        });
    }

    let m = problem.constraints.len() as f64;
    let mut x = DVector::zeros(n);
    let mut t = opts.initial_t;
    let mut steps = 0usize;
    let mut status = SolveStatus::Converged;
    let mut work = Workspace::new(problem);

    'outer: loop {
        let mut fallbacks = 0;
        for _ in 0..opts.max_centering_steps {
            if steps >= opts.max_newton_steps {
                status = SolveStatus::IterationLimit;
                break 'outer;
            }
            work.derivatives(problem, &x, t);
            let step = match work.hess.clone().cholesky() {
                Some(ch) => -ch.solve(&work.grad),
                None => match work.hess.clone().lu().solve(&work.grad) {
                    Some(s) => -s,
                    None => return Err(Error::Singular("barrier Hessian".into())),
                },
            };
            steps += 1;
            let slope = work.grad.dot(&step);
            if -slope / 2.0 <= opts.newton_tol {
                break;
            }
            let phi0 = work.value(problem, &x, t).expect("iterate is strictly feasible");
            let s0 = work.max_step(problem, &x, &step).map_or(1.0, |s_max| (0.99 * s_max).min(1.0));
            let mut s = s0;
            let mut accepted = false;
            // Armijo is skipped once the predicted decrease is below the
            // resolution of the barrier value.
            let resolvable = -slope / 2.0 > 16.0 * f64::EPSILON * phi0.abs();
            while resolvable && s > 1e-16 {
                let trial = &x + &step * s;
                if trial == x {
                    break;
                }
                if let Some(phi) = work.value(problem, &trial, t) {
                    if phi <= phi0 + opts.armijo * s * slope {
                        x = trial;
                        accepted = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !accepted && fallbacks < MAX_FALLBACK_STEPS {
                // Barrier values no longer resolve the decrease: accept the
                // longest feasible step that still shrinks the gradient.
                let g0 = work.grad.norm();
                let mut s = s0;
                while s > 1e-16 {
                    let trial = &x + &step * s;
                    if trial == x {
                        break;
                    }
                    if work.value(problem, &trial, t).is_some() {
                        work.derivatives(problem, &trial, t);
                        if work.grad.norm() < g0 {
                            x = trial;
                            accepted = true;
                            fallbacks += 1;
                            break;
                        }
                    }
                    s *= 0.5;
                }
            }
            if !accepted {
                break;
            }
        }
        if m / t < opts.gap_tol {
            break;
        }
        t *= opts.t_growth;
    }

    if status == SolveStatus::IterationLimit {
        warn!("barrier solver hit the Newton step cap ({}) at t = {t:e}", opts.max_newton_steps);
    }
    let duals: Vec<f64> = problem.constraints.iter().map(|c| 1.0 / (t * c.slack(&x))).collect();
    Ok(ConvexSolution {
        objective: problem.objective_value(&x),
        kkt_residual: problem.kkt_residual(&x, &duals),
        x,
        duals,
        status,
        newton_steps: steps,
    })
}

/// Gradient-only steps allowed per centering once barrier values stop
/// resolving progress.
const MAX_FALLBACK_STEPS: usize = 3;

/// Preallocated buffers for the barrier derivatives and values.
struct Workspace {
    grad: DVector<f64>,
    hess: DMatrix<f64>,
    qx: DVector<f64>,
}

impl Workspace {
    fn new(problem: &ConvexQcqp) -> Self {
        let n = problem.dim();
        Self { grad: DVector::zeros(n), hess: DMatrix::zeros(n, n), qx: DVector::zeros(n) }
    }

    /// `t f0(x) - sum log(slack)`, or `None` outside the domain.
    fn value(&mut self, problem: &ConvexQcqp, x: &DVector<f64>, t: f64) -> Option<f64> {
        self.qx.gemv(1.0, &problem.objective, x, 0.0);
        let mut v = t * (x.dot(&self.qx) - 2.0 * problem.linear.dot(x) + problem.offset);
        for c in &problem.constraints {
            self.qx.gemv(1.0, &c.quad, x, 0.0);
            let s = c.bound - (x.dot(&self.qx) + c.offset);
            if !(s > 0.0) {
                return None;
            }
            v -= s.ln();
        }
        Some(v)
    }

    /// Largest `s` keeping `x + s step` inside every constraint, if bounded.
    fn max_step(&mut self, problem: &ConvexQcqp, x: &DVector<f64>, step: &DVector<f64>) -> Option<f64> {
        let mut best: Option<f64> = None;
        for c in &problem.constraints {
            self.qx.gemv(1.0, &c.quad, step, 0.0);
            let a = step.dot(&self.qx);
            let b = 2.0 * x.dot(&self.qx);
            let slack = c.bound - (x.dot(&(&c.quad * x)) + c.offset);
            let root = if a > 0.0 {
                (-b + (b * b + 4.0 * a * slack).sqrt()) / (2.0 * a)
            } else if b > 0.0 {
                slack / b
            } else {
                continue;
            };
            best = Some(best.map_or(root, |r: f64| r.min(root)));
        }
        best
    }

    fn derivatives(&mut self, problem: &ConvexQcqp, x: &DVector<f64>, t: f64) {
        self.grad.gemv(2.0 * t, &problem.objective, x, 0.0);
        self.grad.axpy(-2.0 * t, &problem.linear, 1.0);
        self.hess.copy_from(&problem.objective);
        self.hess.scale_mut(2.0 * t);
        for c in &problem.constraints {
            self.qx.gemv(1.0, &c.quad, x, 0.0);
            let s = c.bound - (x.dot(&self.qx) + c.offset);
            self.grad.axpy(2.0 / s, &self.qx, 1.0);
            let k = 2.0 / s;
            self.hess.zip_apply(&c.quad, |h, q| *h += k * q);
            self.hess.ger(4.0 / (s * s), &self.qx, &self.qx, 1.0);
        }
    }
}
