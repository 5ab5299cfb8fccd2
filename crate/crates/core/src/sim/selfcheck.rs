//! Identity and invariant checks run by the `check` subcommand.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::ScenarioConfig;
use super::runner::run_scenario;
use crate::collab::assemble_collab_problem;
use crate::compress::{trace_after_update, CompressionSet};
use crate::error::Result;
use crate::estimator::{joseph_covariance, optimal_gain};
use crate::kronmap::{linear_form_vector, quad_form_matrix, row_lift, vectorize_weights, WeightIndexMap};
use crate::linalg::{self, kron, relative_error};
use crate::model::{Dimensions, EnergyBudget, ModelParts, SignalModel, Topology};
use crate::qcqp::{
    solve_convex_qcqp, solve_single_equality_qcqp, BarrierOptions, ConvexQcqp, QuadConstraint, SingleEqualityQcqp,
};

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn gauss(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = gauss(rng, n, n);
    linalg::symmetrize(&(&a * a.transpose() + DMatrix::identity(n, n) * 0.1))
}

fn random_topology(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Result<Topology> {
    Topology::new(DMatrix::from_fn(m, n, |i, j| if i == j || rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 }))
}

fn masked(rng: &mut ChaCha8Rng, topo: &Topology) -> DMatrix<f64> {
    topo.adjacency().map(|a| if a == 1.0 { rng.sample(StandardNormal) } else { 0.0 })
}

fn outcome(name: &'static str, worst: f64, tol: f64) -> CheckOutcome {
    CheckOutcome { name, passed: worst <= tol, detail: format!("worst {worst:.3e} (tolerance {tol:.0e})") }
}

fn check_kronmap(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let m = rng.random_range(1..=3);
        let n = rng.random_range(m..=4);
        let l = rng.random_range(1..=2);
        let topo = random_topology(rng, m, n)?;
        let map = WeightIndexMap::new(&topo);
        let w = masked(rng, &topo);
        let wv = vectorize_weights(&w, &map)?;
        let x = kron(&w, &DMatrix::identity(l, l));
        let r = rng.random_range(1..=3);
        let b = gauss(rng, r, m * l);
        let c = gauss(rng, n * l, n * l);
        let d = gauss(rng, m * l, r);
        let a = DVector::from_fn(m * l, |_, _| rng.sample(StandardNormal));
        let quad = (&b * &x * &c * x.transpose() * &d).trace();
        let e = quad_form_matrix(&b, &c, &d, &map, l)?;
        worst = worst.max(relative_error(wv.dot(&(&e * &wv)), quad));
        let c1 = gauss(rng, n * l, r);
        let lin = (&b * &x * &c1).trace();
        worst = worst.max(relative_error(wv.dot(&linear_form_vector(&b, &c1, &map, l)?), lin));
        let lifted = wv.transpose() * row_lift(&a, &map, l)?;
        let direct = a.transpose() * &x;
        worst = worst.max((lifted - &direct).amax() / direct.amax().max(1e-300));
    }
    Ok(outcome("weight-map identities", worst, 1e-10))
}

fn check_assembly(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let dims = Dimensions::new(3, 2, 4, 2, 3)?;
    let mut parts = ModelParts::isotropic(dims, 10.0, 10.0, 10.0);
    parts.observation = gauss(rng, 8, 3);
    parts.channel = gauss(rng, 3, 2);
    let model = SignalModel::new(parts)?;
    let topo = random_topology(rng, 2, 4)?;
    let p = spd(rng, 3);
    let comp = CompressionSet::new((0..2).map(|_| DVector::from_fn(2, |_, _| rng.sample(StandardNormal))).collect())?;
    let t = gauss(rng, 3, 3);
    let prob = assemble_collab_problem(&p, &model, &topo, &comp, &t, &EnergyBudget::uniform(4, 1e6)?)?;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let w = masked(rng, &topo);
        let direct = trace_after_update(&p, &model, &w, &comp.matrix(), &t);
        worst = worst.max(relative_error(prob.objective_at(&vectorize_weights(&w, &prob.map)?), direct));
    }
    Ok(outcome("collaboration objective vs trace", worst, 1e-8))
}

fn check_convex(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    // Projection of a random point onto a ball: known closed form.
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let target = DVector::from_fn(3, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
        let radius2 = 0.5;
        let prob = ConvexQcqp::new(
            DMatrix::identity(3, 3),
            target.clone(),
            0.0,
            vec![QuadConstraint { quad: DMatrix::identity(3, 3), offset: 0.0, bound: radius2 }],
        )?;
        let sol = solve_convex_qcqp(&prob, &BarrierOptions::default())?;
        let expected = if target.norm_squared() <= radius2 { target.clone() } else { &target * (radius2.sqrt() / target.norm()) };
        worst = worst.max((sol.x - expected).norm());
    }
    Ok(outcome("barrier solver on ball projections", worst, 1e-6))
}

fn check_equality(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    let mut solved = 0;
    for _ in 0..20 {
        let q1 = spd(rng, 4);
        let mut q2 = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 0.5, -0.3]));
        let rot = gauss(rng, 4, 4);
        q2 = linalg::symmetrize(&(&rot * q2 * rot.transpose()));
        let l = DVector::from_fn(4, |_, _| rng.sample(StandardNormal));
        let prob = SingleEqualityQcqp::new(q1, q2, l)?;
        if let Ok(sol) = solve_single_equality_qcqp(&prob, 1e-10) {
            solved += 1;
            worst = worst.max(sol.constraint_residual).max(sol.stationarity_residual * 1e-2);
        }
    }
    let mut out = outcome("equality solver residuals", worst, 1e-8);
    out.passed &= solved > 0;
    out.detail.push_str(&format!(", {solved}/20 solved"));
    Ok(out)
}

fn check_joseph(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let p = spd(rng, 3);
        let d = gauss(rng, 2, 3);
        let rn = spd(rng, 2);
        let t = gauss(rng, 3, 2) * 10.0;
        let cov = joseph_covariance(&p, &d, &rn, &t);
        worst = worst.max(-linalg::min_eigenvalue(&cov) / cov.trace());
        let opt = optimal_gain(&p, &d, &rn)?;
        let best = joseph_covariance(&p, &d, &rn, &opt).trace();
        worst = worst.max((best - cov.trace()).max(0.0) / cov.trace());
    }
    Ok(outcome("Joseph form PSD and gain optimality", worst.max(0.0), 1e-10))
}

fn check_determinism() -> Result<CheckOutcome> {
    let mut cfg = ScenarioConfig::reference();
    cfg.trials = 2;
    cfg.horizon = 3;
    cfg.alternation.rho_centralized = 2;
    cfg.alternation.rho_decentralized = 2;
    let a = run_scenario(&cfg)?;
    let b = run_scenario(&cfg)?;
    let same = a.traces == b.traces;
    Ok(CheckOutcome {
        name: "run determinism",
        passed: same,
        detail: if same { "identical traces".into() } else { "traces differ".into() },
    })
}

/// Runs the suite; errors inside a check count as failures.
pub fn run_checks(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    type Check = fn(&mut ChaCha8Rng) -> Result<CheckOutcome>;
    let checks: [(&'static str, Check); 6] = [
        ("weight-map identities", check_kronmap),
        ("collaboration objective vs trace", check_assembly),
        ("barrier solver on ball projections", check_convex),
        ("equality solver residuals", check_equality),
        ("Joseph form PSD and gain optimality", check_joseph),
        ("run determinism", |_| check_determinism()),
    ];
    checks
        .into_iter()
        .map(|(name, f)| {
            f(&mut rng).unwrap_or_else(|e| CheckOutcome { name, passed: false, detail: format!("error: {e}") })
        })
        .collect()
}
