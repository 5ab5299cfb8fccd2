use std::time::{Duration, Instant};

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::config::{ScenarioConfig, TopologyConfig};
use super::topology::geometric_layout;
use crate::collab::{assemble_collab_problem, solve_collaboration};
use crate::compress::{
    filter_gain_closed_form, filter_gain_decentralized, local_updates, sweep_centralized, trace_after_update, CompressionSet,
    FilterGain,
};
use crate::error::Result;
use crate::estimator::{
    benchmark_step, effective_noise, effective_observation, kalman_predict, monotonicity_check, mse_trace,
    rlmmse_step, EstimatorState, MonotonicityReport,
};
use crate::model::{
    draw_realization, expected_collab_cost, row_block_apply, row_block_form, total_cost, EnergyBudget, SignalModel,
    StepDraw, Topology,
};

/// The three estimators a run can drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Design {
    Centralized,
    Decentralized,
    Benchmark,
}

pub const DESIGNS: [Design; 3] = [Design::Centralized, Design::Decentralized, Design::Benchmark];

impl Design {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Design::Centralized => "centralized",
            Design::Decentralized => "decentralized",
            Design::Benchmark => "benchmark",
        }
    }
}

/// Starting point of the alternation: `W` is the row-normalized adjacency,
/// shrunk so no sensor spends more than a quarter of its budget on
/// collaboration; each `f_i` is a multiple of the all-ones vector using half
/// of the budget on compression.
pub fn initial_design(model: &SignalModel, topo: &Topology, budget: &EnergyBudget) -> Result<(DMatrix<f64>, CompressionSet)> {
    let dims = model.dims();
    let mut w = topo.adjacency().clone();
    for mut row in w.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    let mut ratio: f64 = 0.0;
    for i in 0..dims.sensors {
        ratio = ratio.max(expected_collab_cost(i, &w, model, topo)? / budget.cap(i));
    }
    if ratio > 0.25 {
        w *= (0.25 / ratio).sqrt();
    }
    let l = dims.obs_dim;
    let r_y = model.obs_cov();
    let ones = DVector::from_element(l, 1.0);
    let mut comp = CompressionSet::zeros(dims.transmitters, l);
    for i in 0..dims.transmitters {
        let block = row_block_form(&w, i, i, &r_y, l) + model.collab_noise(i);
        let q = ones.dot(&(&block * &ones));
        comp.set(i, &ones * (0.5 * budget.cap(i) / q).sqrt());
    }
    Ok((w, comp))
}

/// Scales `(w, comp)` by a common factor `c <= 1` so every sensor is within
/// budget under `model`. Every cost term is at least quadratic in `c`.
fn rescale_into_budget(
    w: &DMatrix<f64>,
    comp: &CompressionSet,
    model: &SignalModel,
    topo: &Topology,
    budget: &EnergyBudget,
) -> Result<(DMatrix<f64>, CompressionSet)> {
    let mut ratio: f64 = 0.0;
    for i in 0..budget.len() {
        ratio = ratio.max(total_cost(i, w, comp.vectors(), model, topo)? / budget.cap(i));
    }
    if ratio <= 1.0 {
        return Ok((w.clone(), comp.clone()));
    }
    let c = (1.0 - 1e-9) / ratio.sqrt();
    let scaled = CompressionSet::new(comp.vectors().iter().map(|f| f * c).collect())?;
    Ok((w * c, scaled))
}

/// Result of the per-step design alternation.
#[derive(Debug, Clone)]
pub struct StepDesign {
    pub w: DMatrix<f64>,
    pub comp: CompressionSet,
    pub gain: FilterGain,
    /// Sub-steps that failed; the alternation stopped at the first one.
    pub failures: usize,
    /// Decentralized gain solves that fell back to the closed form.
    pub fallbacks: usize,
}

/// `rho` rounds of collaboration solve, compression update and gain update;
/// returns the round with the lowest updated trace.
/// Starts from `warm`, scaled into budget under `model`, or from
/// [`initial_design`] on the first step. `Design::Benchmark` is not a valid argument.
#[allow(clippy::too_many_arguments)]
pub fn design_step(
    design: Design,
    p_prev: &DMatrix<f64>,
    model: &SignalModel,
    topo: &Topology,
    budget: &EnergyBudget,
    rho: usize,
    sweeps: usize,
    warm: Option<(&DMatrix<f64>, &CompressionSet)>,
) -> Result<StepDesign> {
    assert!(design != Design::Benchmark, "the benchmark has no design step");
    let (mut w, mut comp) = match warm {
        Some((w, c)) => rescale_into_budget(w, c, model, topo, budget)?,
        None => initial_design(model, topo, budget)?,
    };
    let mut gain = filter_gain_closed_form(p_prev, model, &w, &comp.matrix())?;
    let mut failures = 0;
    let mut fallbacks = 0;
    let mut best: Option<(f64, DMatrix<f64>, CompressionSet, FilterGain)> = None;
    for _ in 0..rho {
        let round = (|| -> Result<(DMatrix<f64>, CompressionSet, FilterGain)> {
            let prob = assemble_collab_problem(p_prev, model, topo, &comp, &gain.gain, budget)?;
            let new_w = solve_collaboration(&prob, Some(&w))?.w;
            match design {
                Design::Centralized => {
                    let new_c = sweep_centralized(p_prev, model, topo, &new_w, &gain.gain, &comp, budget, sweeps)?;
                    let g = filter_gain_closed_form(p_prev, model, &new_w, &new_c.matrix())?;
                    Ok((new_w, new_c, g))
                }
                _ => {
                    let new_c = local_updates(p_prev, model, topo, &new_w, &gain.gain, &comp, budget)?;
                    let g = filter_gain_decentralized(p_prev, model, &new_w, &new_c)?;
                    Ok((new_w, new_c, g))
                }
            }
        })();
        match round {
            Ok((nw, nc, ng)) => {
                fallbacks += usize::from(ng.fallback);
                let value = trace_after_update(p_prev, model, &nw, &nc.matrix(), &ng.gain);
                if best.as_ref().is_none_or(|b| value < b.0) {
                    best = Some((value, nw.clone(), nc.clone(), ng.clone()));
                }
                w = nw;
                comp = nc;
                gain = ng;
            }
            Err(e) => {
                warn!("{} design step failed, keeping the previous design: {e}", design.name());
                failures += 1;
                break;
            }
        }
    }
    if let Some((_, bw, bc, bg)) = best {
        (w, comp, gain) = (bw, bc, bg);
    }
    Ok(StepDesign { w, comp, gain, failures, fallbacks })
}

/// `q = G F [(W⊗I_L) y + alpha] + eps` for a step's draws.
pub fn fc_signal(model: &SignalModel, w: &DMatrix<f64>, comp: &CompressionSet, y: &DVector<f64>, draw: &StepDraw) -> DVector<f64> {
    let dims = model.dims();
    let l = dims.obs_dim;
    let ym = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    let mut compressed = DVector::zeros(dims.transmitters);
    for i in 0..dims.transmitters {
        let zi = row_block_apply(w, i, &ym, l).column(0) + draw.collab_noise.rows(i * l, l);
        compressed[i] = comp.get(i).dot(&zi);
    }
    model.channel() * compressed + &draw.fc_noise
}

/// Per-step record of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTrace {
    pub trial: u64,
    /// `tr P(k)` per design, indexed by [`Design::index`].
    pub mse: [Option<Vec<f64>>; 3],
    /// `‖x̂(k) - x(k)‖²` per design.
    pub sq_error: [Option<Vec<f64>>; 3],
    /// Per-step, per-sensor expected energy of the first designed estimator.
    pub energy: Option<Vec<Vec<f64>>>,
    /// Largest `energy_i - mu_i` over every designed estimator and step.
    pub max_energy_excess: f64,
    /// Centralized decrease diagnostics, one per step.
    pub lemma: Vec<MonotonicityReport>,
    pub failures: usize,
    pub fallbacks: usize,
}

/// Topology of a trial: geometric layouts are redrawn per trial.
pub fn trial_topology(cfg: &ScenarioConfig, trial: u64) -> Result<Topology> {
    let d = &cfg.dims;
    match &cfg.topology {
        TopologyConfig::Full => Topology::full(d.transmitters, d.sensors),
        TopologyConfig::Geometric { radius, seed } => {
            geometric_layout(d.sensors, d.transmitters, *seed, trial)?.topology(*radius)
        }
        TopologyConfig::Explicit { .. } => Topology::new(cfg.explicit_adjacency()?.expect("explicit topology")),
    }
}

pub fn run_trial(cfg: &ScenarioConfig, base: &SignalModel, budget: &EnergyBudget, trial: u64) -> Result<TrialTrace> {
    let topo = trial_topology(cfg, trial)?;
    let dynamics = cfg.dynamics()?;
    let horizon = cfg.horizon;
    let real = draw_realization(base, horizon, dynamics.as_ref(), cfg.seed, trial);
    let mode = cfg.mode;
    let runs = [mode.runs_centralized(), mode.runs_decentralized(), mode.runs_benchmark()];
    let mut states: [Option<EstimatorState>; 3] =
        std::array::from_fn(|d| runs[d].then(|| EstimatorState::from_prior(base)));
    let mut mse: [Option<Vec<f64>>; 3] = std::array::from_fn(|d| runs[d].then(|| Vec::with_capacity(horizon)));
    let mut sq_error = mse.clone();
    let energy_design = [Design::Centralized, Design::Decentralized].into_iter().find(|d| runs[d.index()]);
    let mut energy = energy_design.map(|_| Vec::with_capacity(horizon));
    let mut max_excess = f64::NEG_INFINITY;
    let mut lemma = Vec::new();
    let (mut failures, mut fallbacks) = (0, 0);
    let mut designs: [Option<(DMatrix<f64>, CompressionSet)>; 2] = [None, None];

    for (k, draw) in real.steps.iter().enumerate() {
        let x_true = &real.states[k + 1];
        let model = base.with_channels(draw.observation.clone(), draw.channel.clone())?;
        let y = model.observation() * x_true + &draw.obs_noise;
        for design in DESIGNS {
            let idx = design.index();
            let Some(prev) = states[idx].take() else { continue };
            let prev = match &dynamics {
                Some(dy) => kalman_predict(&prev, dy)?,
                None => prev,
            };
            let next = if design == Design::Benchmark {
                benchmark_step(&prev, &y, model.observation(), model.obs_noise_agg())?
            } else {
                let rho = if design == Design::Centralized {
                    cfg.alternation.rho_centralized
                } else {
                    cfg.alternation.rho_decentralized
                };
                let warm = designs[idx].as_ref().map(|(w, c)| (w, c));
                let step = design_step(design, &prev.p, &model, &topo, budget, rho, cfg.alternation.sweeps, warm)?;
                failures += step.failures;
                fallbacks += step.fallbacks;
                let f = step.comp.matrix();
                let d = effective_observation(&model, &step.w, &f);
                let r_n = effective_noise(&model, &step.w, &f);
                let q = fc_signal(&model, &step.w, &step.comp, &y, draw);
                let next = rlmmse_step(&prev, &q, &d, &r_n, &step.gain.gain)?;
                if design == Design::Centralized {
                    lemma.push(monotonicity_check(mse_trace(&prev), mse_trace(&next), &d, &prev.p, &r_n));
                }
                let mut spent = Vec::with_capacity(budget.len());
                for i in 0..budget.len() {
                    let e = total_cost(i, &step.w, step.comp.vectors(), &model, &topo)?;
                    max_excess = max_excess.max(e - budget.cap(i));
                    spent.push(e);
                }
                if Some(design) == energy_design {
                    energy.as_mut().expect("energy trace").push(spent);
                }
                designs[idx] = Some((step.w, step.comp));
                next
            };
            if let Some(v) = mse[idx].as_mut() {
                v.push(mse_trace(&next));
            }
            if let Some(v) = sq_error[idx].as_mut() {
                v.push((&next.x - x_true).norm_squared());
            }
            states[idx] = Some(next);
        }
    }
    Ok(TrialTrace { trial, mse, sq_error, energy, max_energy_excess: max_excess, lemma, failures, fallbacks })
}

/// All trials of one scenario.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ScenarioConfig,
    /// Sorted by trial index.
    pub traces: Vec<TrialTrace>,
    pub wall_clock: Duration,
}

fn mean_and_se(columns: &[&Vec<f64>], k: usize) -> (f64, f64) {
    let n = columns.len() as f64;
    let mean = columns.iter().map(|c| c[k]).sum::<f64>() / n;
    if columns.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = columns.iter().map(|c| (c[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl RunResult {
    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    pub fn has(&self, design: Design) -> bool {
        self.traces.first().is_some_and(|t| t.mse[design.index()].is_some())
    }

    fn series(&self, design: Design, sample: bool) -> Option<Vec<&Vec<f64>>> {
        self.traces
            .iter()
            .map(|t| if sample { t.sq_error[design.index()].as_ref() } else { t.mse[design.index()].as_ref() })
            .collect()
    }

    fn summarize(&self, design: Design, sample: bool) -> Option<Vec<(f64, f64)>> {
        let cols = self.series(design, sample)?;
        Some((0..self.horizon()).map(|k| mean_and_se(&cols, k)).collect())
    }

    /// Trial-averaged `tr P(k)`.
    pub fn mean_mse(&self, design: Design) -> Option<Vec<f64>> {
        self.summarize(design, false).map(|v| v.into_iter().map(|(m, _)| m).collect())
    }

    /// Standard error of [`Self::mean_mse`].
    pub fn mse_std_err(&self, design: Design) -> Option<Vec<f64>> {
        self.summarize(design, false).map(|v| v.into_iter().map(|(_, s)| s).collect())
    }

    /// Trial-averaged squared estimation error.
    pub fn mean_sample_mse(&self, design: Design) -> Option<Vec<f64>> {
        self.summarize(design, true).map(|v| v.into_iter().map(|(m, _)| m).collect())
    }

    pub fn final_mse(&self, design: Design) -> Option<f64> {
        self.mean_mse(design).and_then(|v| v.last().copied())
    }

    /// Per-trial `tr P(k)` of one design.
    pub fn trial_mse(&self, design: Design) -> Option<Vec<&Vec<f64>>> {
        self.series(design, false)
    }

    /// Per-trial squared errors of one design.
    pub fn trial_sq_error(&self, design: Design) -> Option<Vec<&Vec<f64>>> {
        self.series(design, true)
    }

    /// Trial-averaged per-sensor energy, `K x N`.
    pub fn mean_energy(&self) -> Option<Vec<Vec<f64>>> {
        let traces: Vec<&Vec<Vec<f64>>> = self.traces.iter().map(|t| t.energy.as_ref()).collect::<Option<_>>()?;
        let n = self.config.dims.sensors;
        let count = traces.len() as f64;
        Some(
            (0..self.horizon())
                .map(|k| (0..n).map(|i| traces.iter().map(|t| t[k][i]).sum::<f64>() / count).collect())
                .collect(),
        )
    }

    /// Trial-averaged `(bound, decrease)` of the centralized diagnostics.
    pub fn mean_lemma(&self) -> Option<Vec<(f64, f64)>> {
        if self.traces.iter().any(|t| t.lemma.len() != self.horizon()) {
            return None;
        }
        let count = self.traces.len() as f64;
        Some(
            (0..self.horizon())
                .map(|k| {
                    let b = self.traces.iter().map(|t| t.lemma[k].bound).sum::<f64>() / count;
                    let d = self.traces.iter().map(|t| t.lemma[k].decrease).sum::<f64>() / count;
                    (b, d)
                })
                .collect(),
        )
    }

    pub fn lemma_violations(&self) -> usize {
        self.traces.iter().map(|t| t.lemma.iter().filter(|r| r.violated).count()).sum()
    }

    pub fn max_energy_excess(&self) -> f64 {
        self.traces.iter().map(|t| t.max_energy_excess).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn failures(&self) -> usize {
        self.traces.iter().map(|t| t.failures).sum()
    }

    pub fn fallbacks(&self) -> usize {
        self.traces.iter().map(|t| t.fallbacks).sum()
    }
}

/// Runs every trial (in parallel) and collects the traces in trial order.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunResult> {
    cfg.validate()?;
    let start = Instant::now();
    let base = cfg.base_model()?;
    let budget = cfg.budget(cfg.dims.sensors)?;
    let mut traces = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|trial| run_trial(cfg, &base, &budget, trial))
        .collect::<Result<Vec<_>>>()?;
    traces.sort_by_key(|t| t.trial);
    Ok(RunResult { config: cfg.clone(), traces, wall_clock: start.elapsed() })
}

/// One run per sweep value. Every run uses the same seed and trial indices,
/// so the values are compared on common random numbers.
pub fn sweep(cfg: &ScenarioConfig) -> Result<Vec<(f64, RunResult)>> {
    let spec = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| crate::error::Error::Config("configuration has no [sweep] section".into()))?;
    spec.values
        .iter()
        .map(|&v| {
            let c = cfg.with_parameter(spec.parameter, v)?;
            Ok((v, run_scenario(&c)?))
        })
        .collect()
}
