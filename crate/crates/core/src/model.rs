//! System model: dimensions, topology, noise statistics, per-step channel
//! realizations and the expected energy costs of collaboration and
//! compression.
//!
//! Sensors `0..M` are the ones that transmit to the fusion center; sensors
//! `M..N` only take part in collaboration. Callers with a different labeling
//! must permute their sensors before building a model.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, block_diag};

/// Problem sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Dimensions {
    /// Length of the unknown parameter vector.
    pub param_dim: usize,
    /// Observation length at each sensor.
    pub obs_dim: usize,
    /// Total number of sensors.
    pub sensors: usize,
    /// Number of sensors that transmit to the fusion center.
    pub transmitters: usize,
    /// Number of fusion-center antennas.
    pub antennas: usize,
}

impl Dimensions {
    pub fn new(param_dim: usize, obs_dim: usize, sensors: usize, transmitters: usize, antennas: usize) -> Result<Self> {
        let d = Self { param_dim, obs_dim, sensors, transmitters, antennas };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.param_dim, self.obs_dim, self.sensors, self.transmitters, self.antennas].contains(&0) {
            return Err(Error::Config(format!("all dimensions must be >= 1, got {self:?}")));
        }
        if self.transmitters > self.sensors {
            return Err(Error::Config(format!(
                "transmitters ({}) exceed sensors ({})",
                self.transmitters, self.sensors
            )));
        }
        Ok(())
    }

    /// `N L`, the stacked raw observation length.
    pub fn stacked_obs(&self) -> usize {
        self.sensors * self.obs_dim
    }

    /// `M L`, the stacked post-collaboration observation length.
    pub fn stacked_collab(&self) -> usize {
        self.transmitters * self.obs_dim
    }
}

/// Binary `M x N` collaboration topology with self-links on the transmitters.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    adjacency: DMatrix<f64>,
}

impl Topology {
    pub fn new(adjacency: DMatrix<f64>) -> Result<Self> {
        let (m, n) = adjacency.shape();
        if m == 0 || n < m {
            return Err(Error::Topology(format!("adjacency must be M x N with 1 <= M <= N, got {m}x{n}")));
        }
        for r in 0..m {
            for c in 0..n {
                let v = adjacency[(r, c)];
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Topology(format!("entry ({r}, {c}) = {v} is not binary")));
                }
            }
        }
        for i in 0..m {
            if adjacency[(i, i)] != 1.0 {
                return Err(Error::Topology(format!("missing self-link A[{i}][{i}]")));
            }
        }
        Ok(Self { adjacency })
    }

    /// Every transmitter listens to every sensor.
    pub fn full(transmitters: usize, sensors: usize) -> Result<Self> {
        Self::new(DMatrix::from_element(transmitters, sensors, 1.0))
    }

    /// Self-links only: `[I_M, 0]`.
    pub fn isolated(transmitters: usize, sensors: usize) -> Result<Self> {
        Self::new(DMatrix::from_fn(transmitters, sensors, |i, j| if i == j { 1.0 } else { 0.0 }))
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn transmitters(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn sensors(&self) -> usize {
        self.adjacency.ncols()
    }

    pub fn has_link(&self, row: usize, col: usize) -> bool {
        self.adjacency[(row, col)] == 1.0
    }

    /// Neighbors of transmitter `i`, excluding itself.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.sensors()).filter(|&j| j != i && self.has_link(i, j)).collect()
    }

    /// `1_M 1_Nᵀ - [I_M, 0]`: zero exactly on the self-links.
    pub fn off_diagonal_mask(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.transmitters(), self.sensors(), |i, j| if i == j { 0.0 } else { 1.0 })
    }

    /// Number of links (nonzeros of the adjacency).
    pub fn link_count(&self) -> usize {
        self.adjacency.iter().filter(|&&v| v == 1.0).count()
    }

    /// Checks that `w` is zero wherever the topology has no link.
    pub fn check_mask(&self, w: &DMatrix<f64>) -> Result<()> {
        if w.shape() != self.adjacency.shape() {
            return Err(Error::dims(
                "collaboration matrix",
                format!("{}x{}", self.transmitters(), self.sensors()),
                format!("{}x{}", w.nrows(), w.ncols()),
            ));
        }
        for c in 0..w.ncols() {
            for r in 0..w.nrows() {
                if !self.has_link(r, c) && w[(r, c)] != 0.0 {
                    return Err(Error::MaskViolation { row: r, col: c, value: w[(r, c)] });
                }
            }
        }
        Ok(())
    }
}

/// Per-sensor expected energy caps.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBudget {
    caps: Vec<f64>,
}

impl EnergyBudget {
    pub fn new(caps: Vec<f64>) -> Result<Self> {
        if let Some((i, c)) = caps.iter().enumerate().find(|(_, c)| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::Config(format!("budget of sensor {i} must be positive and finite, got {c}")));
        }
        Ok(Self { caps })
    }

    pub fn uniform(sensors: usize, cap: f64) -> Result<Self> {
        Self::new(vec![cap; sensors])
    }

    pub fn cap(&self, i: usize) -> f64 {
        self.caps[i]
    }

    pub fn caps(&self) -> &[f64] {
        &self.caps
    }

    pub fn len(&self) -> usize {
        self.caps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.caps.is_empty()
    }
}

/// `10^(-dB/10)`: noise variance for a unit-power signal at the given SNR.
pub fn snr_db_to_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Raw ingredients of a [`SignalModel`] before validation.
#[derive(Debug, Clone)]
pub struct ModelParts {
    pub dims: Dimensions,
    pub prior_mean: DVector<f64>,
    pub prior_cov: DMatrix<f64>,
    /// `R_{v_i}`, one `L x L` block per sensor.
    pub obs_noise: Vec<DMatrix<f64>>,
    /// `R_{alpha_i}`, one `L x L` block per transmitter.
    pub collab_noise: Vec<DMatrix<f64>>,
    /// `R_eps`, `S x S`.
    pub fc_noise: DMatrix<f64>,
    /// Stacked observation matrix `H`, `NL x P`.
    pub observation: DMatrix<f64>,
    /// Sensor-to-FC channel `G`, `S x M`.
    pub channel: DMatrix<f64>,
}

impl ModelParts {
    /// Isotropic noises at the given SNRs (dB) with a zero-mean identity
    /// prior; observation and channel matrices start at zero.
    pub fn isotropic(dims: Dimensions, snr_obs_db: f64, snr_collab_db: f64, snr_fc_db: f64) -> Self {
        let l = dims.obs_dim;
        let eye = |n: usize, var: f64| DMatrix::identity(n, n) * var;
        Self {
            dims,
            prior_mean: DVector::zeros(dims.param_dim),
            prior_cov: DMatrix::identity(dims.param_dim, dims.param_dim),
            obs_noise: vec![eye(l, snr_db_to_variance(snr_obs_db)); dims.sensors],
            collab_noise: vec![eye(l, snr_db_to_variance(snr_collab_db)); dims.transmitters],
            fc_noise: eye(dims.antennas, snr_db_to_variance(snr_fc_db)),
            observation: DMatrix::zeros(dims.stacked_obs(), dims.param_dim),
            channel: DMatrix::zeros(dims.antennas, dims.transmitters),
        }
    }
}

/// Validated signal model for one time step.
#[derive(Debug, Clone)]
pub struct SignalModel {
    dims: Dimensions,
    prior_mean: DVector<f64>,
    prior_cov: DMatrix<f64>,
    obs_noise: Vec<DMatrix<f64>>,
    collab_noise: Vec<DMatrix<f64>>,
    fc_noise: DMatrix<f64>,
    obs_noise_agg: DMatrix<f64>,
    collab_noise_agg: DMatrix<f64>,
    observation: DMatrix<f64>,
    channel: DMatrix<f64>,
}

/// Validates shapes and positive definiteness of every covariance, checks
/// the topology against the dimensions, and assembles the block-diagonal
/// aggregate noise covariances.
pub fn validate_model(parts: ModelParts, topology: &Topology) -> Result<SignalModel> {
    let d = parts.dims;
    if topology.transmitters() != d.transmitters || topology.sensors() != d.sensors {
        return Err(Error::dims(
            "topology",
            format!("{}x{}", d.transmitters, d.sensors),
            format!("{}x{}", topology.transmitters(), topology.sensors()),
        ));
    }
    SignalModel::new(parts)
}

impl SignalModel {
    pub fn new(parts: ModelParts) -> Result<Self> {
        let ModelParts { dims, prior_mean, prior_cov, obs_noise, collab_noise, fc_noise, observation, channel } =
            parts;
        dims.validate()?;
        let (p, l) = (dims.param_dim, dims.obs_dim);
        if prior_mean.len() != p {
            return Err(Error::dims("prior mean", p, prior_mean.len()));
        }
        linalg::check_square("prior covariance", &prior_cov, p)?;
        linalg::check_pd("prior covariance R_x", &prior_cov)?;
        if obs_noise.len() != dims.sensors {
            return Err(Error::dims("observation noise blocks", dims.sensors, obs_noise.len()));
        }
        for (i, r) in obs_noise.iter().enumerate() {
            let name = format!("observation noise R_v[{i}]");
            linalg::check_square(&name, r, l)?;
            linalg::check_pd(&name, r)?;
        }
        if collab_noise.len() != dims.transmitters {
            return Err(Error::dims("collaboration noise blocks", dims.transmitters, collab_noise.len()));
        }
        for (i, r) in collab_noise.iter().enumerate() {
            let name = format!("collaboration noise R_alpha[{i}]");
            linalg::check_square(&name, r, l)?;
            linalg::check_pd(&name, r)?;
        }
        linalg::check_square("FC noise R_eps", &fc_noise, dims.antennas)?;
        linalg::check_pd("FC noise R_eps", &fc_noise)?;
        check_channels(&dims, &observation, &channel)?;
        let obs_noise_agg = block_diag(&obs_noise);
        let collab_noise_agg = block_diag(&collab_noise);
        Ok(Self {
            dims,
            prior_mean,
            prior_cov,
            obs_noise,
            collab_noise,
            fc_noise,
            obs_noise_agg,
            collab_noise_agg,
            observation,
            channel,
        })
    }

    /// Same statistics with a new per-step observation matrix and channel.
    pub fn with_channels(&self, observation: DMatrix<f64>, channel: DMatrix<f64>) -> Result<Self> {
        check_channels(&self.dims, &observation, &channel)?;
        Ok(Self { observation, channel, ..self.clone() })
    }

    pub fn dims(&self) -> &Dimensions {
        &self.dims
    }
    pub fn prior_mean(&self) -> &DVector<f64> {
        &self.prior_mean
    }
    pub fn prior_cov(&self) -> &DMatrix<f64> {
        &self.prior_cov
    }
    pub fn obs_noise(&self, i: usize) -> &DMatrix<f64> {
        &self.obs_noise[i]
    }
    pub fn collab_noise(&self, i: usize) -> &DMatrix<f64> {
        &self.collab_noise[i]
    }
    pub fn fc_noise(&self) -> &DMatrix<f64> {
        &self.fc_noise
    }
    /// Block-diagonal `R_v`, `NL x NL`.
    pub fn obs_noise_agg(&self) -> &DMatrix<f64> {
        &self.obs_noise_agg
    }
    /// Block-diagonal `R_alpha`, `ML x ML`.
    pub fn collab_noise_agg(&self) -> &DMatrix<f64> {
        &self.collab_noise_agg
    }
    pub fn observation(&self) -> &DMatrix<f64> {
        &self.observation
    }
    pub fn channel(&self) -> &DMatrix<f64> {
        &self.channel
    }

    /// `H_i`, the `L x P` observation block of sensor `i`.
    pub fn observation_block(&self, i: usize) -> DMatrix<f64> {
        let l = self.dims.obs_dim;
        self.observation.rows(i * l, l).into_owned()
    }

    /// Column `i` of `G`: the channel from transmitter `i` to the antennas.
    pub fn channel_of(&self, i: usize) -> DVector<f64> {
        self.channel.column(i).into_owned()
    }

    /// `R_y = H R_x Hᵀ + R_v`, the covariance of the stacked raw observations.
    pub fn obs_cov(&self) -> DMatrix<f64> {
        let mut r = &self.observation * &self.prior_cov * self.observation.transpose() + &self.obs_noise_agg;
        linalg::symmetrize_in_place(&mut r);
        r
    }

    /// `R_{y_i} = H_i R_x H_iᵀ + R_{v_i}`.
    pub fn obs_cov_of(&self, i: usize) -> DMatrix<f64> {
        let h = self.observation_block(i);
        &h * &self.prior_cov * h.transpose() + &self.obs_noise[i]
    }
}

fn check_channels(dims: &Dimensions, observation: &DMatrix<f64>, channel: &DMatrix<f64>) -> Result<()> {
    if observation.shape() != (dims.stacked_obs(), dims.param_dim) {
        return Err(Error::dims(
            "observation matrix H",
            format!("{}x{}", dims.stacked_obs(), dims.param_dim),
            format!("{}x{}", observation.nrows(), observation.ncols()),
        ));
    }
    if channel.shape() != (dims.antennas, dims.transmitters) {
        return Err(Error::dims(
            "channel matrix G",
            format!("{}x{}", dims.antennas, dims.transmitters),
            format!("{}x{}", channel.nrows(), channel.ncols()),
        ));
    }
    Ok(())
}

/// `W_a C W_bᵀ` for `W_i = e_iᵀ W ⊗ I_L`, computed blockwise without forming
/// the Kronecker products. `c` is `NL x NL`; the result is `L x L`.
pub fn row_block_form(w: &DMatrix<f64>, a: usize, b: usize, c: &DMatrix<f64>, l: usize) -> DMatrix<f64> {
    let n = w.ncols();
    let mut out = DMatrix::zeros(l, l);
    for s in 0..n {
        let wa = w[(a, s)];
        if wa == 0.0 {
            continue;
        }
        for t in 0..n {
            let wb = w[(b, t)];
            if wb == 0.0 {
                continue;
            }
            out += c.view((s * l, t * l), (l, l)) * (wa * wb);
        }
    }
    out
}

/// `W_a X` for `W_a = e_aᵀ W ⊗ I_L` and `X` with `NL` rows.
pub fn row_block_apply(w: &DMatrix<f64>, a: usize, x: &DMatrix<f64>, l: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(l, x.ncols());
    for s in 0..w.ncols() {
        let ws = w[(a, s)];
        if ws != 0.0 {
            out += x.rows(s * l, l) * ws;
        }
    }
    out
}

fn check_sensor(i: usize, len: usize) -> Result<()> {
    if i >= len {
        return Err(Error::IndexOutOfRange { index: i, len });
    }
    Ok(())
}

/// Expected collaboration energy of sensor `i`:
/// `tr(R_{y_i}) * sum over transmitters m != i of W[m, i]^2`.
/// Self-weights are free.
pub fn expected_collab_cost(i: usize, w: &DMatrix<f64>, model: &SignalModel, topology: &Topology) -> Result<f64> {
    check_sensor(i, model.dims.sensors)?;
    topology.check_mask(w)?;
    let outgoing: f64 = (0..w.nrows()).filter(|&m| m != i).map(|m| w[(m, i)].powi(2)).sum();
    if outgoing == 0.0 {
        return Ok(0.0);
    }
    Ok(model.obs_cov_of(i).trace() * outgoing)
}

/// Expected energy transmitter `i` spends sending `f_iᵀ z_i` to the FC:
/// `f_iᵀ W_i R_y W_iᵀ f_i + f_iᵀ R_{alpha_i} f_i`.
pub fn expected_compress_cost(i: usize, f: &DVector<f64>, w: &DMatrix<f64>, model: &SignalModel) -> Result<f64> {
    check_sensor(i, model.dims.transmitters)?;
    let l = model.dims.obs_dim;
    if f.len() != l {
        return Err(Error::dims("compression vector", l, f.len()));
    }
    if w.shape() != (model.dims.transmitters, model.dims.sensors) {
        return Err(Error::dims(
            "collaboration matrix",
            format!("{}x{}", model.dims.transmitters, model.dims.sensors),
            format!("{}x{}", w.nrows(), w.ncols()),
        ));
    }
    let block = row_block_form(w, i, i, &model.obs_cov(), l) + &model.collab_noise[i];
    Ok(f.dot(&(&block * f)))
}

/// Total expected energy at sensor `i`: collaboration plus, for
/// transmitters, compression.
pub fn total_cost(
    i: usize,
    w: &DMatrix<f64>,
    compression: &[DVector<f64>],
    model: &SignalModel,
    topology: &Topology,
) -> Result<f64> {
    let collab = expected_collab_cost(i, w, model, topology)?;
    if i < model.dims.transmitters {
        let f = compression.get(i).ok_or(Error::IndexOutOfRange { index: i, len: compression.len() })?;
        Ok(collab + expected_compress_cost(i, f, w, model)?)
    } else {
        Ok(collab)
    }
}

/// Per-step random draws of one trial.
#[derive(Debug, Clone)]
pub struct StepDraw {
    /// `H(k)`, `NL x P`.
    pub observation: DMatrix<f64>,
    /// `G(k)`, `S x M`.
    pub channel: DMatrix<f64>,
    /// Observation noise `v(k)`, length `NL`.
    pub obs_noise: DVector<f64>,
    /// Collaboration noise `alpha(k)`, length `ML`.
    pub collab_noise: DVector<f64>,
    /// FC noise `eps(k)`, length `S`.
    pub fc_noise: DVector<f64>,
}

/// One trial's random draws: the parameter trajectory and every per-step
/// matrix and noise sample.
#[derive(Debug, Clone)]
pub struct Realization {
    pub seed: u64,
    pub trial: u64,
    /// `x(0), x(1), ..., x(K)`; constant for a static parameter.
    pub states: Vec<DVector<f64>>,
    /// Draws for steps `1..=K` (index `k - 1`).
    pub steps: Vec<StepDraw>,
}

/// Linear-Gaussian state evolution `x(k) = A x(k-1) + n(k-1)`.
#[derive(Debug, Clone)]
pub struct StateDynamics {
    pub transition: DMatrix<f64>,
    pub noise_cov: DMatrix<f64>,
}

impl StateDynamics {
    pub fn new(transition: DMatrix<f64>, noise_cov: DMatrix<f64>) -> Result<Self> {
        let p = transition.nrows();
        linalg::check_square("state transition", &transition, p)?;
        linalg::check_square("state noise covariance", &noise_cov, p)?;
        linalg::check_psd("state noise covariance", &noise_cov, 1e-12)?;
        Ok(Self { transition, noise_cov })
    }

    /// `A = I`, zero noise: the static parameter.
    pub fn identity(p: usize) -> Self {
        Self { transition: DMatrix::identity(p, p), noise_cov: DMatrix::zeros(p, p) }
    }
}

#[derive(Clone, Copy)]
#[repr(u64)]
enum Stream {
    Prior = 0,
    Observation = 1,
    Channel = 2,
    ObsNoise = 3,
    CollabNoise = 4,
    FcNoise = 5,
    StateNoise = 6,
}

const STREAMS_PER_TRIAL: u64 = 8;

/// Independent, reproducible RNG for one (trial, stream) pair.
fn stream_rng(seed: u64, trial: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial.wrapping_mul(STREAMS_PER_TRIAL).wrapping_add(stream as u64));
    rng
}

fn standard_normal(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn gaussian(rng: &mut impl Rng, factor: &DMatrix<f64>) -> DVector<f64> {
    factor * standard_normal(rng, factor.ncols())
}

/// Draws a reproducible realization: `x ~ N(x0, R_x)`, i.i.d. standard
/// normal entries for `H(k)` and `G(k)`, and zero-mean Gaussian noises with
/// the model's covariances. Each noise kind uses its own RNG stream, so the
/// draws of one kind do not depend on whether another kind is used.
pub fn draw_realization(
    model: &SignalModel,
    horizon: usize,
    dynamics: Option<&StateDynamics>,
    seed: u64,
    trial: u64,
) -> Realization {
    let d = model.dims;
    let mut prior_rng = stream_rng(seed, trial, Stream::Prior);
    let mut h_rng = stream_rng(seed, trial, Stream::Observation);
    let mut g_rng = stream_rng(seed, trial, Stream::Channel);
    let mut v_rng = stream_rng(seed, trial, Stream::ObsNoise);
    let mut a_rng = stream_rng(seed, trial, Stream::CollabNoise);
    let mut e_rng = stream_rng(seed, trial, Stream::FcNoise);
    let mut s_rng = stream_rng(seed, trial, Stream::StateNoise);

    let obs_factors: Vec<_> = model.obs_noise.iter().map(linalg::psd_factor).collect();
    let collab_factors: Vec<_> = model.collab_noise.iter().map(linalg::psd_factor).collect();
    let fc_factor = linalg::psd_factor(&model.fc_noise);
    let state_factor = dynamics.map(|dy| linalg::psd_factor(&dy.noise_cov));

    let x0 = &model.prior_mean + gaussian(&mut prior_rng, &linalg::psd_factor(&model.prior_cov));
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(x0);
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let prev = states.last().expect("non-empty");
        let next = match (dynamics, &state_factor) {
            (Some(dy), Some(sf)) => &dy.transition * prev + gaussian(&mut s_rng, sf),
            _ => prev.clone(),
        };
        states.push(next);
        let observation =
            DMatrix::from_fn(d.stacked_obs(), d.param_dim, |_, _| h_rng.sample::<f64, _>(StandardNormal));
        let channel = DMatrix::from_fn(d.antennas, d.transmitters, |_, _| g_rng.sample::<f64, _>(StandardNormal));
        let obs_noise = DVector::from_iterator(
            d.stacked_obs(),
            obs_factors.iter().flat_map(|f| gaussian(&mut v_rng, f).iter().copied().collect::<Vec<_>>()),
        );
        let collab_noise = DVector::from_iterator(
            d.stacked_collab(),
            collab_factors.iter().flat_map(|f| gaussian(&mut a_rng, f).iter().copied().collect::<Vec<_>>()),
        );
        let fc_noise = gaussian(&mut e_rng, &fc_factor);
        steps.push(StepDraw { observation, channel, obs_noise, collab_noise, fc_noise });
    }
    Realization { seed, trial, states, steps }
}
