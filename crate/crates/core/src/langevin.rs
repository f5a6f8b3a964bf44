//! Euler–Maruyama integration of the overdamped Langevin equation
//! `dQ/dτ = −U'(Q) + ξ(τ)`, `⟨ξ(τ)ξ(τ')⟩ = 2D δ(τ − τ')`, and the
//! estimators built on it: first-passage rates, the autocorrelation
//! decrement, stationary histograms and basin occupations.
//!
//! Every trajectory draws its noise from a ChaCha8 stream selected by
//! `(seed, trajectory index)`. Ensembles run in parallel but are reduced in
//! index order, so results do not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::params::ScaledParams;
use crate::potential::{
    stationary_distribution, support_half_width, GridSpec, PotentialModel, StationaryDistribution, SUPPORT_LEVEL,
};
use crate::rates::Channel;

/// Upper bound on dt·max|U''|.
pub const STABILITY_LIMIT: f64 = 0.1;
pub const DEFAULT_MIN_EVENTS: usize = 200;
/// Barrier range ΔU/D in which first-passage estimates are trusted.
pub const RECOMMENDED_BARRIER: (f64, f64) = (3.0, 8.0);
pub const DEFAULT_FIT_WINDOW: (f64, f64) = (0.05, 0.5);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub dt: f64,
    /// Production steps after burn-in.
    pub n_steps: u64,
    pub seed: u64,
    pub q0: f64,
    pub burn_in: u64,
    pub noise: f64,
    /// Record every `decimation`-th state.
    pub decimation: u64,
}

impl TrajectoryConfig {
    pub fn new(dt: f64, n_steps: u64, noise: f64, seed: u64) -> Self {
        Self {
            dt,
            n_steps,
            seed,
            q0: 0.0,
            burn_in: 0,
            noise,
            decimation: 1,
        }
    }

    pub fn validate(&self, model: &PotentialModel) -> Result<()> {
        ensure_positive("dt", self.dt)?;
        ensure_finite("q0", self.q0)?;
        ensure_finite("D", self.noise)?;
        if self.noise < 0.0 {
            return Err(Error::InvalidParameter {
                name: "D",
                reason: format!("must be non-negative, got {}", self.noise),
            });
        }
        if self.decimation == 0 {
            return Err(Error::InvalidParameter {
                name: "decimation",
                reason: "must be at least 1".into(),
            });
        }
        let window = stability_window(model, self.noise, self.q0)?;
        let product = self.dt * model.max_abs_curvature(window);
        if product > STABILITY_LIMIT {
            return Err(Error::StepTooLarge {
                dt: self.dt,
                product,
                limit: STABILITY_LIMIT,
            });
        }
        Ok(())
    }
}

/// Half-width of the region whose curvature limits the time step: the
/// support of the stationary density, widened to contain the start.
pub fn stability_window(model: &PotentialModel, noise: f64, q0: f64) -> Result<f64> {
    let support = if noise > 0.0 {
        support_half_width(model, noise, SUPPORT_LEVEL)?
    } else {
        model.find_extrema().outermost_q()
    };
    Ok(support.max(q0.abs()))
}

/// Largest time step allowed by the stability rule.
pub fn max_stable_dt(model: &PotentialModel, noise: f64, q0: f64) -> Result<f64> {
    let window = stability_window(model, noise, q0)?;
    Ok(STABILITY_LIMIT / model.max_abs_curvature(window))
}

/// Noise stream for one trajectory of an ensemble.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Single Euler–Maruyama path.
#[derive(Debug, Clone)]
pub struct Stepper {
    a: f64,
    b: f64,
    c: f64,
    dt: f64,
    amplitude: f64,
    rng: ChaCha8Rng,
    pub q: f64,
    pub step: u64,
    pub trajectory: u64,
}

impl Stepper {
    pub fn new(model: &PotentialModel, cfg: &TrajectoryConfig, trajectory: u64) -> Self {
        Self {
            a: 2.0 * model.c2,
            b: 4.0 * model.c4,
            c: 6.0 * model.c6,
            dt: cfg.dt,
            amplitude: (2.0 * cfg.noise * cfg.dt).sqrt(),
            rng: trajectory_rng(cfg.seed, trajectory),
            q: cfg.q0,
            step: 0,
            trajectory,
        }
    }

    #[inline]
    pub fn advance(&mut self) -> Result<f64> {
        let q = self.q;
        let x = q * q;
        let du = q * (self.a + x * (self.b + x * self.c));
        let xi: f64 = self.rng.sample(StandardNormal);
        let next = q - du * self.dt + self.amplitude * xi;
        self.step += 1;
        if !next.is_finite() {
            return Err(Error::NonFinite {
                trajectory: self.trajectory,
                step: self.step,
                q: next,
            });
        }
        self.q = next;
        Ok(next)
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }
}

/// Runs burn-in and then `n_steps` production steps, handing every
/// `decimation`-th production state (including the first) to `observe`.
pub fn integrate_with<F: FnMut(f64)>(
    model: &PotentialModel,
    cfg: &TrajectoryConfig,
    trajectory: u64,
    mut observe: F,
) -> Result<f64> {
    cfg.validate(model)?;
    let mut s = Stepper::new(model, cfg, trajectory);
    for _ in 0..cfg.burn_in {
        s.advance()?;
    }
    observe(s.q);
    for k in 1..=cfg.n_steps {
        let q = s.advance()?;
        if k % cfg.decimation == 0 {
            observe(q);
        }
    }
    Ok(s.q)
}

/// Decimated trace; `t` counts from the end of burn-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub q: Vec<f64>,
}

pub fn integrate(model: &PotentialModel, cfg: &TrajectoryConfig) -> Result<Trajectory> {
    let mut q = Vec::with_capacity((cfg.n_steps / cfg.decimation.max(1)) as usize + 1);
    integrate_with(model, cfg, 0, |x| q.push(x))?;
    let stride = cfg.dt * cfg.decimation as f64;
    let t = (0..q.len()).map(|i| i as f64 * stride).collect();
    Ok(Trajectory { t, q })
}

/// Maps `run` over trajectory indices in parallel, keeping index order.
pub fn run_ensemble<T, F>(n: u64, run: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..n).into_par_iter().map(run).collect()
}

/// Mean and standard error of per-batch values.
fn batch_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

// ---------------------------------------------------------------------------
// first passage

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Passage {
    /// Arrival at the destination attractor.
    Commitment,
    /// First crossing of the saddle.
    SaddleCrossing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfptConfig {
    pub dt: f64,
    pub seed: u64,
    /// Number of independent first-passage runs.
    pub runs: u64,
    /// Step budget per run; runs that exhaust it are censored.
    pub max_steps: u64,
    pub min_events: usize,
    pub passage: Passage,
    /// Start from the mirror-image attractor at Q < 0.
    pub mirrored: bool,
}

impl MfptConfig {
    pub fn new(dt: f64, runs: u64, max_steps: u64, seed: u64) -> Self {
        Self {
            dt,
            seed,
            runs,
            max_steps,
            min_events: DEFAULT_MIN_EVENTS,
            passage: Passage::Commitment,
            mirrored: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfptEstimate {
    pub channel: Channel,
    pub passage: Passage,
    pub mean_time: f64,
    pub std_error: f64,
    pub events: usize,
    pub censored: usize,
    /// 1/⟨T⟩, the total rate of leaving the start state.
    pub rate: f64,
    pub rate_std_error: f64,
    /// Equivalent exits from the start state (2 for entry from Q = 0).
    pub exit_channels: u32,
    pub barrier_ratio: f64,
    pub low_confidence: bool,
    pub barrier_out_of_range: bool,
    pub budget_exhausted: bool,
}

impl MfptEstimate {
    /// Rate into one destination, comparable with the Kramers rate of the
    /// channel.
    pub fn channel_rate(&self) -> f64 {
        self.rate / self.exit_channels as f64
    }
}

/// Region reached on passage, for a start on the positive side.
#[derive(Debug, Clone, Copy)]
enum Target {
    Below(f64),
    Outside(f64),
}

pub fn estimate_mfpt(
    model: &PotentialModel,
    sp: &ScaledParams,
    channel: Channel,
    cfg: &MfptConfig,
) -> Result<MfptEstimate> {
    let noise = sp.noise;
    ensure_positive("D", noise)?;
    if cfg.runs == 0 {
        return Err(Error::InvalidParameter {
            name: "runs",
            reason: "must be at least 1".into(),
        });
    }
    let (attractor, saddle) = channel.locate(&model.find_extrema())?;
    let (start, target, exit_channels) = match (channel, cfg.passage) {
        (Channel::Bistable, Passage::Commitment) => (attractor.q, Target::Below(-attractor.q), 1),
        (Channel::Bistable, Passage::SaddleCrossing) => (attractor.q, Target::Below(0.0), 1),
        (Channel::TristableEscape, Passage::Commitment) => (attractor.q, Target::Below(0.0), 1),
        (Channel::TristableEscape, Passage::SaddleCrossing) => (attractor.q, Target::Below(saddle.q), 1),
        (Channel::TristableEntry, Passage::Commitment) => {
            let outer = model
                .find_extrema()
                .outer_attractor()
                .map(|a| a.q)
                .ok_or_else(|| Error::MissingChannel {
                    channel: channel.to_string(),
                    regime: "tristable".into(),
                })?;
            (0.0, Target::Outside(outer), 2)
        }
        (Channel::TristableEntry, Passage::SaddleCrossing) => (0.0, Target::Outside(saddle.q), 2),
    };
    let sign = if cfg.mirrored { -1.0 } else { 1.0 };
    let traj = TrajectoryConfig {
        dt: cfg.dt,
        n_steps: cfg.max_steps,
        seed: cfg.seed,
        q0: sign * start,
        burn_in: 0,
        noise,
        decimation: 1,
    };
    traj.validate(model)?;

    let times = run_ensemble(cfg.runs, |i| {
        let mut s = Stepper::new(model, &traj, i);
        while s.step < cfg.max_steps {
            let q = sign * s.advance()?;
            let arrived = match target {
                Target::Below(b) => q <= b,
                Target::Outside(b) => q.abs() >= b,
            };
            if arrived {
                return Ok(Some(s.time()));
            }
        }
        Ok(None)
    })?;

    let done: Vec<f64> = times.iter().flatten().copied().collect();
    let events = done.len();
    let censored = times.len() - events;
    let (mean_time, std_error) = if events > 0 {
        batch_stats(&done)
    } else {
        (f64::NAN, f64::NAN)
    };
    let barrier_ratio = (saddle.u - attractor.u) / noise;
    Ok(MfptEstimate {
        channel,
        passage: cfg.passage,
        mean_time,
        std_error,
        events,
        censored,
        rate: 1.0 / mean_time,
        rate_std_error: std_error / (mean_time * mean_time),
        exit_channels,
        barrier_ratio,
        low_confidence: events < cfg.min_events,
        barrier_out_of_range: !(RECOMMENDED_BARRIER.0..=RECOMMENDED_BARRIER.1).contains(&barrier_ratio),
        budget_exhausted: censored > 0,
    })
}

// ---------------------------------------------------------------------------
// autocorrelation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Q,
    /// Q², for phases where ⟨Q(τ)Q(0)⟩ is not the slowest channel.
    QSquared,
}

impl Observable {
    fn apply(self, q: f64) -> f64 {
        match self {
            Observable::Q => q,
            Observable::QSquared => q * q,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcfConfig {
    /// Per-trajectory settings; `decimation` sets the lag spacing.
    pub trajectory: TrajectoryConfig,
    pub trajectories: u64,
    /// Largest lag in recorded samples.
    pub max_lag: usize,
    pub window: (f64, f64),
    pub observable: Observable,
    /// Burn-in reruns allowed when burn-in is shorter than 10/ν.
    pub burn_in_retries: u32,
}

impl AcfConfig {
    pub fn new(trajectory: TrajectoryConfig, trajectories: u64, max_lag: usize) -> Self {
        Self {
            trajectory,
            trajectories,
            max_lag,
            window: DEFAULT_FIT_WINDOW,
            observable: Observable::Q,
            burn_in_retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfEstimate {
    pub lags: Vec<f64>,
    /// Normalized autocorrelation, 1 at lag 0.
    pub acf: Vec<f64>,
    /// Autocovariance at lag 0.
    pub variance: f64,
    pub decrement: f64,
    /// Lag interval used in the fit.
    pub fit_window: (f64, f64),
    pub fit_points: usize,
    /// RMS residual of ln ACF about the fitted line.
    pub fit_residual: f64,
    pub burn_in: u64,
    pub samples: u64,
}

/// Lag sums of one trajectory; merged across trajectories before the
/// covariance is formed.
#[derive(Debug, Clone, Default)]
struct LagSums {
    cross: Vec<f64>,
    head: Vec<f64>,
    tail: Vec<f64>,
    count: Vec<f64>,
}

impl LagSums {
    fn new(max_lag: usize) -> Self {
        Self {
            cross: vec![0.0; max_lag + 1],
            head: vec![0.0; max_lag + 1],
            tail: vec![0.0; max_lag + 1],
            count: vec![0.0; max_lag + 1],
        }
    }

    fn from_series(x: &[f64], max_lag: usize) -> Self {
        let mut s = Self::new(max_lag);
        let n = x.len();
        for l in 0..=max_lag.min(n.saturating_sub(1)) {
            let m = n - l;
            let (a, b) = (&x[..m], &x[l..]);
            s.cross[l] = a.iter().zip(b).map(|(u, v)| u * v).sum();
            s.head[l] = a.iter().sum();
            s.tail[l] = b.iter().sum();
            s.count[l] = m as f64;
        }
        s
    }

    fn merge(&mut self, other: &Self) {
        for l in 0..self.cross.len() {
            self.cross[l] += other.cross[l];
            self.head[l] += other.head[l];
            self.tail[l] += other.tail[l];
            self.count[l] += other.count[l];
        }
    }

    fn autocovariance(&self) -> Vec<f64> {
        let mean = self.head[0] / self.count[0];
        (0..self.cross.len())
            .map(|l| {
                let n = self.count[l];
                if n == 0.0 {
                    return f64::NAN;
                }
                (self.cross[l] - mean * (self.head[l] + self.tail[l]) + mean * mean * n) / n
            })
            .collect()
    }
}

/// Least-squares decrement from ln ACF over the first contiguous stretch
/// with `lo ≤ ACF ≤ hi`. Returns (decrement, points, first lag, last lag,
/// rms residual).
pub fn fit_decrement(lags: &[f64], acf: &[f64], window: (f64, f64)) -> Result<(f64, usize, f64, f64, f64)> {
    let (lo, hi) = window;
    let mut i = 0;
    while i < acf.len() && acf[i] > hi {
        i += 1;
    }
    let start = i;
    while i < acf.len() && acf[i] >= lo && acf[i] <= hi {
        i += 1;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = (start..i).map(|k| (lags[k], acf[k].ln())).unzip();
    if xs.len() < 3 {
        return Err(Error::FitWindowEmpty { lo, hi });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let rms = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    if !(slope < 0.0) {
        return Err(Error::ConvergenceFailure {
            diagnostics: format!("autocorrelation does not decay in the fit window (slope {slope:.3e})"),
        });
    }
    Ok((-slope, xs.len(), xs[0], xs[xs.len() - 1], rms))
}

pub fn estimate_acf_decrement(model: &PotentialModel, cfg: &AcfConfig) -> Result<AcfEstimate> {
    let mut run = *cfg;
    loop {
        let est = acf_once(model, &run)?;
        let needed = (10.0 / est.decrement / run.trajectory.dt).ceil() as u64;
        if run.trajectory.burn_in >= needed || run.burn_in_retries == 0 {
            return Ok(est);
        }
        run.trajectory.burn_in = needed;
        run.burn_in_retries -= 1;
    }
}

fn acf_once(model: &PotentialModel, cfg: &AcfConfig) -> Result<AcfEstimate> {
    let traj = cfg.trajectory;
    traj.validate(model)?;
    let parts = run_ensemble(cfg.trajectories, |i| {
        let mut x = Vec::with_capacity((traj.n_steps / traj.decimation) as usize + 1);
        integrate_with(model, &traj, i, |q| x.push(cfg.observable.apply(q)))?;
        Ok(LagSums::from_series(&x, cfg.max_lag))
    })?;
    let mut total = LagSums::new(cfg.max_lag);
    for p in &parts {
        total.merge(p);
    }
    let cov = total.autocovariance();
    let variance = cov[0];
    let acf: Vec<f64> = cov.iter().map(|c| c / variance).collect();
    let stride = traj.dt * traj.decimation as f64;
    let lags: Vec<f64> = (0..acf.len()).map(|l| l as f64 * stride).collect();
    let (decrement, fit_points, a, b, fit_residual) = fit_decrement(&lags, &acf, cfg.window)?;
    Ok(AcfEstimate {
        lags,
        acf,
        variance,
        decrement,
        fit_window: (a, b),
        fit_points,
        fit_residual,
        burn_in: traj.burn_in,
        samples: total.count[0] as u64,
    })
}

// ---------------------------------------------------------------------------
// stationary statistics

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// `decimation` sets the spacing of recorded samples.
    pub trajectory: TrajectoryConfig,
    pub trajectories: u64,
    /// Batches per trajectory for batch-means standard errors; each batch
    /// should span many correlation times.
    pub batches: usize,
}

impl SamplingConfig {
    pub fn new(trajectory: TrajectoryConfig, trajectories: u64) -> Self {
        Self {
            trajectory,
            trajectories,
            batches: 20,
        }
    }
}

/// Per-batch sums of one trajectory.
#[derive(Debug, Clone)]
struct BatchSums {
    n: Vec<f64>,
    sum: Vec<f64>,
    counts: Vec<Vec<f64>>,
    outside: f64,
    moments: [f64; 5],
}

fn sample_batches(
    model: &PotentialModel,
    cfg: &SamplingConfig,
    index: u64,
    classify: &(dyn Fn(f64) -> Option<usize> + Sync),
    classes: usize,
) -> Result<BatchSums> {
    let traj = cfg.trajectory;
    let total = traj.n_steps / traj.decimation + 1;
    let batches = cfg.batches.max(1);
    let per_batch = total.div_ceil(batches as u64).max(1);
    let mut s = BatchSums {
        n: vec![0.0; batches],
        sum: vec![0.0; batches],
        counts: vec![vec![0.0; classes]; batches],
        outside: 0.0,
        moments: [0.0; 5],
    };
    let mut k = 0u64;
    integrate_with(model, &traj, index, |q| {
        let b = ((k / per_batch) as usize).min(batches - 1);
        k += 1;
        s.n[b] += 1.0;
        s.sum[b] += q;
        match classify(q) {
            Some(c) => s.counts[b][c] += 1.0,
            None => s.outside += 1.0,
        }
        let mut p = 1.0;
        for m in s.moments.iter_mut() {
            *m += p;
            p *= q;
        }
    })?;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub edges: Vec<f64>,
    /// Normalized sample density per bin.
    pub density: Vec<f64>,
    /// Bin probabilities of the sample and of the Boltzmann density.
    pub probability: Vec<f64>,
    pub reference: Vec<f64>,
    /// (sample − reference)/SE per bin, SE from batch means.
    pub z_scores: Vec<f64>,
    pub max_abs_z: f64,
    /// Total-variation distance, counting samples outside the range.
    pub tv_distance: f64,
    pub samples: u64,
    pub mean: f64,
    pub mean_std_error: f64,
    pub variance: f64,
    pub kurtosis: f64,
    /// Quadrature values of the same statistics.
    pub reference_variance: f64,
    pub reference_kurtosis: f64,
}

/// Histogram over [−half_width, half_width] (default: the support rule)
/// compared with the Boltzmann density.
pub fn stationary_histogram(
    model: &PotentialModel,
    cfg: &SamplingConfig,
    bins: usize,
    half_width: Option<f64>,
) -> Result<HistogramReport> {
    let noise = cfg.trajectory.noise;
    ensure_positive("D", noise)?;
    if bins == 0 {
        return Err(Error::InvalidParameter {
            name: "bins",
            reason: "must be at least 1".into(),
        });
    }
    cfg.trajectory.validate(model)?;
    let grid = GridSpec::from_support_rule(model, noise, crate::potential::DEFAULT_GRID_POINTS)?;
    let w = half_width.unwrap_or(grid.q_max);
    ensure_positive("half_width", w)?;
    let width = 2.0 * w / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| -w + i as f64 * width).collect();
    let classify = move |q: f64| {
        let k = ((q + w) / width).floor();
        (k >= 0.0 && k < bins as f64).then_some(k as usize)
    };
    let parts = run_ensemble(cfg.trajectories, |i| sample_batches(model, cfg, i, &classify, bins))?;

    let rho: StationaryDistribution = stationary_distribution(model, noise, &grid)?;
    let reference: Vec<f64> = edges
        .windows(2)
        .map(|e| StationaryDistribution::interval_probability(model, noise, rho.log_partition, e[0], e[1]))
        .collect();

    let mut counts = vec![0.0; bins];
    let mut moments = [0.0; 5];
    let mut outside = 0.0;
    let mut batch_means = Vec::new();
    let mut batch_fracs: Vec<Vec<f64>> = vec![Vec::new(); bins];
    for p in &parts {
        outside += p.outside;
        for (m, v) in moments.iter_mut().zip(p.moments) {
            *m += v;
        }
        for b in 0..p.n.len() {
            if p.n[b] == 0.0 {
                continue;
            }
            batch_means.push(p.sum[b] / p.n[b]);
            for (k, c) in p.counts[b].iter().enumerate() {
                counts[k] += c;
                batch_fracs[k].push(c / p.n[b]);
            }
        }
    }
    let n = moments[0];
    let probability: Vec<f64> = counts.iter().map(|c| c / n).collect();
    let density: Vec<f64> = probability.iter().map(|p| p / width).collect();
    let z_scores: Vec<f64> = batch_fracs
        .iter()
        .zip(&reference)
        .map(|(fr, r)| {
            let (m, se) = batch_stats(fr);
            if se > 0.0 {
                (m - r) / se
            } else {
                0.0
            }
        })
        .collect();
    let max_abs_z = z_scores.iter().map(|z| z.abs()).fold(0.0, f64::max);
    let tv_distance = 0.5
        * (probability
            .iter()
            .zip(&reference)
            .map(|(p, r)| (p - r).abs())
            .sum::<f64>()
            + outside / n
            + (1.0 - reference.iter().sum::<f64>()).max(0.0));

    let mean = moments[1] / n;
    let raw = |k: usize| moments[k] / n;
    let variance = raw(2) - mean * mean;
    let m4 = raw(4) - 4.0 * mean * raw(3) + 6.0 * mean * mean * raw(2) - 3.0 * mean.powi(4);
    let (_, mean_std_error) = batch_stats(&batch_means);
    Ok(HistogramReport {
        edges,
        density,
        probability,
        reference,
        z_scores,
        max_abs_z,
        tv_distance,
        samples: n as u64,
        mean,
        mean_std_error,
        variance,
        kurtosis: m4 / (variance * variance),
        reference_variance: rho.moment(2) - rho.moment(1).powi(2),
        reference_kurtosis: rho.kurtosis(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationEstimate {
    /// Saddle positions separating the basins, ascending.
    pub boundaries: Vec<f64>,
    /// Attractor of each basin, ascending.
    pub attractors: Vec<f64>,
    pub fractions: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub samples: u64,
}

impl OccupationEstimate {
    /// Occupations as (zero-amplitude state, period-two state, period-two
    /// state), the ordering of the balance equations. Tristable only.
    pub fn balance_order(&self) -> Option<([f64; 3], [f64; 3])> {
        (self.fractions.len() == 3).then(|| {
            let f = &self.fractions;
            let e = &self.std_errors;
            ([f[1], f[0], f[2]], [e[1], e[0], e[2]])
        })
    }
}

/// Fraction of time spent in each basin of attraction. Basins are bounded
/// by the saddles, which is exact in one dimension.
pub fn basin_occupations(model: &PotentialModel, cfg: &SamplingConfig) -> Result<OccupationEstimate> {
    cfg.trajectory.validate(model)?;
    let extrema = model.find_extrema();
    let boundaries: Vec<f64> = extrema.saddles.iter().map(|s| s.q).collect();
    let attractors: Vec<f64> = extrema.attractors.iter().map(|a| a.q).collect();
    let basins = attractors.len();
    let bounds = boundaries.clone();
    let classify = move |q: f64| Some(bounds.iter().filter(|&&b| b < q).count());
    let parts = run_ensemble(cfg.trajectories, |i| sample_batches(model, cfg, i, &classify, basins))?;

    let mut counts = vec![0.0; basins];
    let mut fracs: Vec<Vec<f64>> = vec![Vec::new(); basins];
    let mut n = 0.0;
    for p in &parts {
        n += p.moments[0];
        for b in 0..p.n.len() {
            if p.n[b] == 0.0 {
                continue;
            }
            for (k, c) in p.counts[b].iter().enumerate() {
                counts[k] += c;
                fracs[k].push(c / p.n[b]);
            }
        }
    }
    Ok(OccupationEstimate {
        boundaries,
        attractors,
        fractions: counts.iter().map(|c| c / n).collect(),
        std_errors: fracs.iter().map(|f| batch_stats(f).1).collect(),
        samples: n as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::switching_rate;

    #[test]
    fn deterministic_fixed_point_stays_put() {
        let model = PotentialModel::new(0.0, 1.5);
        let qa = model.find_extrema().outer_attractor().unwrap().q;
        let mut cfg = TrajectoryConfig::new(0.01, 1000, 0.0, 1);
        cfg.q0 = qa;
        let tr = integrate(&model, &cfg).unwrap();
        for w in tr.q.windows(2) {
            assert!((w[1] - w[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_descent_from_saddle_picks_side() {
        let model = PotentialModel::new(0.0, 1.5);
        let qa = model.find_extrema().outer_attractor().unwrap().q;
        for side in [1.0, -1.0] {
            let mut cfg = TrajectoryConfig::new(0.01, 20_000, 0.0, 1);
            cfg.q0 = side * 1e-3;
            let end = integrate_with(&model, &cfg, 0, |_| {}).unwrap();
            assert!((end - side * qa).abs() < 1e-9, "{end}");
        }
    }

    #[test]
    fn step_rule_is_enforced() {
        let model = PotentialModel::harmonic(2.0);
        let cfg = TrajectoryConfig::new(0.06, 10, 1.0, 1);
        assert!(matches!(cfg.validate(&model), Err(Error::StepTooLarge { .. })));
        let ok = TrajectoryConfig::new(0.05, 10, 1.0, 1);
        assert!(ok.validate(&model).is_ok());
    }

    #[test]
    fn non_finite_state_is_trapped() {
        // an inverted sextic escapes to infinity in finite time
        let model = PotentialModel::from_coefficients(0.0, 0.0, -1.0);
        let mut cfg = TrajectoryConfig::new(1e-3, 1_000_000, 0.0, 1);
        cfg.q0 = 2.0;
        let mut s = Stepper::new(&model, &cfg, 7);
        let err = (0..cfg.n_steps).map(|_| s.advance()).find(|r| r.is_err()).unwrap();
        assert!(matches!(err, Err(Error::NonFinite { trajectory: 7, .. })));
    }

    #[test]
    fn identical_seed_gives_identical_path() {
        let model = PotentialModel::new(0.0, 1.2);
        let mut cfg = TrajectoryConfig::new(0.005, 5000, 0.02, 42);
        cfg.decimation = 7;
        let a = integrate(&model, &cfg).unwrap();
        let b = integrate(&model, &cfg).unwrap();
        assert_eq!(a.q.len(), 5000 / 7 + 1);
        assert!(a.q.iter().zip(&b.q).all(|(x, y)| x.to_bits() == y.to_bits()));
        cfg.seed = 43;
        assert_ne!(integrate(&model, &cfg).unwrap().q, a.q);
    }

    #[test]
    fn streams_differ_between_trajectories() {
        let mut a = trajectory_rng(5, 0);
        let mut b = trajectory_rng(5, 1);
        let x: f64 = a.sample(StandardNormal);
        let y: f64 = b.sample(StandardNormal);
        assert_ne!(x, y);
    }

    #[test]
    fn ou_variance_matches_d_over_kappa() {
        let kappa = 1.0;
        let noise = 0.5;
        let model = PotentialModel::harmonic(kappa);
        let mut traj = TrajectoryConfig::new(0.005, 2_000_000, noise, 11);
        traj.burn_in = 2000;
        traj.decimation = 100;
        let rep = stationary_histogram(&model, &SamplingConfig::new(traj, 4), 40, None).unwrap();
        // standard error of the variance from batch means of Q²
        let m = &rep;
        let exact = noise / kappa;
        let se = 2.0 * exact * (2.0 / (kappa * 2_000_000.0 * 0.005 * 4.0)).sqrt();
        assert!((m.variance - exact).abs() < 3.0 * se, "{} vs {exact} (se {se})", m.variance);
        assert!((m.reference_variance - exact).abs() < 1e-9);
    }

    #[test]
    fn ou_acf_decrement_is_kappa() {
        let model = PotentialModel::harmonic(2.0);
        let mut traj = TrajectoryConfig::new(0.005, 1_000_000, 1.0, 3);
        traj.burn_in = 2000;
        traj.decimation = 10;
        let est = estimate_acf_decrement(&model, &AcfConfig::new(traj, 4, 40)).unwrap();
        assert!((est.variance - est.acf[0] * est.variance).abs() < 1e-15);
        assert!((est.decrement - 2.0).abs() < 0.1, "{}", est.decrement);
    }

    #[test]
    fn empty_fit_window_is_reported() {
        let model = PotentialModel::harmonic(2.0);
        let mut traj = TrajectoryConfig::new(0.005, 20_000, 1.0, 3);
        traj.decimation = 1;
        // lags reach only 0.02, where the ACF is still above 0.9
        let err = estimate_acf_decrement(&model, &AcfConfig::new(traj, 1, 4)).unwrap_err();
        assert!(matches!(err, Error::FitWindowEmpty { .. }));
    }

    #[test]
    fn fit_recovers_exact_exponential() {
        let lags: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let acf: Vec<f64> = lags.iter().map(|t| (-0.7 * t).exp()).collect();
        let (nu, points, a, b, rms) = fit_decrement(&lags, &acf, DEFAULT_FIT_WINDOW).unwrap();
        assert!((nu - 0.7).abs() < 1e-12);
        assert!(points > 10 && a > 0.9 && b < 4.3 && rms < 1e-12);
    }

    /// μ = 0 with ΔU/D = ratio.
    fn bistable(ratio: f64, noise: f64) -> (ScaledParams, PotentialModel) {
        let mu_b = (6.0 * ratio * noise).cbrt();
        let sp = ScaledParams::zero_temperature(0.0, (1.0 + mu_b * mu_b).sqrt(), noise);
        (sp, PotentialModel::from_params(&sp))
    }

    #[test]
    fn mfpt_parity_and_kramers() {
        let noise = 0.02;
        let (sp, model) = bistable(4.0, noise);
        let w = switching_rate(&model, &sp, Channel::Bistable).unwrap().rate;
        let dt = max_stable_dt(&model, noise, 0.0).unwrap();
        let mut cfg = MfptConfig::new(dt, 300, 50_000_000, 9);
        let plus = estimate_mfpt(&model, &sp, Channel::Bistable, &cfg).unwrap();
        cfg.mirrored = true;
        cfg.seed = 10;
        let minus = estimate_mfpt(&model, &sp, Channel::Bistable, &cfg).unwrap();
        assert_eq!(plus.events, 300);
        assert!(!plus.low_confidence && !plus.budget_exhausted && !plus.barrier_out_of_range);
        assert!((plus.rate / w - 1.0).abs() < 0.25, "{} vs {w}", plus.rate);
        let combined = (plus.std_error.powi(2) + minus.std_error.powi(2)).sqrt();
        assert!((plus.mean_time - minus.mean_time).abs() < 3.0 * combined);
    }

    #[test]
    fn saddle_crossing_takes_half_the_commitment_time() {
        let noise = 0.02;
        let (sp, model) = bistable(4.0, noise);
        let dt = max_stable_dt(&model, noise, 0.0).unwrap();
        let mut cfg = MfptConfig::new(dt, 300, 50_000_000, 21);
        let commit = estimate_mfpt(&model, &sp, Channel::Bistable, &cfg).unwrap();
        cfg.passage = Passage::SaddleCrossing;
        let cross = estimate_mfpt(&model, &sp, Channel::Bistable, &cfg).unwrap();
        let ratio = cross.mean_time / commit.mean_time;
        let se = ratio * ((cross.std_error / cross.mean_time).powi(2) + (commit.std_error / commit.mean_time).powi(2)).sqrt();
        assert!((ratio - 0.5).abs() < 3.0 * se, "{ratio} ± {se}");
    }

    #[test]
    fn few_events_are_flagged() {
        let noise = 0.02;
        let sp = ScaledParams::zero_temperature(0.0, 1.2, noise);
        let model = PotentialModel::from_params(&sp);
        let cfg = MfptConfig::new(0.005, 10, 10, 1);
        let est = estimate_mfpt(&model, &sp, Channel::Bistable, &cfg).unwrap();
        assert!(est.low_confidence && est.budget_exhausted);
        assert_eq!(est.censored + est.events, 10);
    }

    #[test]
    fn critical_histogram_is_flat_topped() {
        let noise = 1e-3;
        let model = PotentialModel::new(0.0, 1.0);
        let dt = max_stable_dt(&model, noise, 0.0).unwrap();
        let mut traj = TrajectoryConfig::new(dt, 4_000_000, noise, 5);
        traj.burn_in = 10_000;
        traj.decimation = 50;
        let rep = stationary_histogram(&model, &SamplingConfig::new(traj, 4), 40, None).unwrap();
        // Γ(5/6)Γ(1/6)/Γ(1/2)² for exp(−Q⁶/12D)
        assert!((rep.reference_kurtosis - 2.0).abs() < 1e-6);
        assert!(rep.kurtosis < 2.3, "{}", rep.kurtosis);
        assert!(rep.mean.abs() < 3.0 * rep.mean_std_error);
    }

    #[test]
    fn occupations_of_a_single_well() {
        let model = PotentialModel::harmonic(1.0);
        let traj = TrajectoryConfig::new(0.01, 1000, 0.1, 1);
        let occ = basin_occupations(&model, &SamplingConfig::new(traj, 2)).unwrap();
        assert_eq!(occ.fractions, vec![1.0]);
        assert!(occ.balance_order().is_none());
    }
}
