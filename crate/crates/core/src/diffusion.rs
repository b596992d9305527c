//! Noise schedules, timestep sampling and DDIM trajectory arithmetic over an
//! abstract noise predictor. Latents are plain vectors; no network is involved.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_T: usize = 1000;
pub const DEFAULT_MU: f64 = 500.0;
pub const DEFAULT_SIGMA: f64 = 250.0;

#[derive(Debug, Error, PartialEq)]
pub enum DiffusionError {
    #[error("invalid beta range [{start}, {end}]: need 0 < start <= end < 1")]
    BetaRange { start: f64, end: f64 },
    #[error("schedule length T must be >= 1")]
    EmptySchedule,
    #[error("timestep {t} outside 0..={max}")]
    TimeRange { t: usize, max: usize },
    #[error("expected {expected}-step ordering, got {from} -> {to}")]
    Ordering {
        expected: &'static str,
        from: usize,
        to: usize,
    },
    #[error("shape mismatch: {0:?} vs {1:?}")]
    Shape(Vec<usize>, Vec<usize>),
    #[error("latent has {len} values but shape {shape:?}")]
    BadLatent { len: usize, shape: Vec<usize> },
    #[error("iteration {iter} exceeds iter_max {iter_max}")]
    Iteration { iter: usize, iter_max: usize },
    #[error("cannot draw {m} strictly ascending timesteps from (0, {t_end}]")]
    TooFewSteps { m: usize, t_end: usize },
    #[error("sigma must be > 0, got {0}")]
    Sigma(f64),
    #[error("timesteps must be strictly ascending")]
    NotAscending,
    #[error("{what}: expected {expected} entries, got {got}")]
    Misaligned {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("substep size must be >= 1")]
    Substep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Linear,
    ScaledLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleTable {
    #[serde(rename = "T")]
    pub t_max: usize,
    /// Cumulative products indexed 0..=T, with `alpha_bar[0] == 1`.
    pub alpha_bar: Vec<f64>,
}

pub fn build_schedule(
    kind: ScheduleKind,
    t_max: usize,
    beta_start: f64,
    beta_end: f64,
) -> Result<ScheduleTable, DiffusionError> {
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(DiffusionError::BetaRange {
            start: beta_start,
            end: beta_end,
        });
    }
    if t_max == 0 {
        return Err(DiffusionError::EmptySchedule);
    }
    let mut alpha_bar = Vec::with_capacity(t_max + 1);
    alpha_bar.push(1.0);
    let mut acc = 1.0;
    for t in 1..=t_max {
        let f = if t_max == 1 { 0.0 } else { (t - 1) as f64 / (t_max - 1) as f64 };
        let beta = match kind {
            ScheduleKind::Linear => beta_start + (beta_end - beta_start) * f,
            ScheduleKind::ScaledLinear => {
                let r = beta_start.sqrt() + (beta_end.sqrt() - beta_start.sqrt()) * f;
                r * r
            }
        };
        acc *= 1.0 - beta;
        alpha_bar.push(acc);
    }
    Ok(ScheduleTable { t_max, alpha_bar })
}

impl ScheduleTable {
    /// The latent-diffusion default: scaled-linear, T = 1000, β ∈ [0.00085, 0.012].
    pub fn standard() -> Self {
        build_schedule(ScheduleKind::ScaledLinear, DEFAULT_T, 0.00085, 0.012).expect("valid constants")
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64, DiffusionError> {
        self.alpha_bar
            .get(t)
            .copied()
            .ok_or(DiffusionError::TimeRange { t, max: self.t_max })
    }

    fn check_noised(&self, t: usize) -> Result<f64, DiffusionError> {
        if t == 0 {
            return Err(DiffusionError::TimeRange { t, max: self.t_max });
        }
        self.alpha_bar(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    pub values: Vec<f64>,
    pub shape: Vec<usize>,
}

impl LatentState {
    pub fn new(values: Vec<f64>, shape: Vec<usize>) -> Result<Self, DiffusionError> {
        if values.len() != shape.iter().product::<usize>() {
            return Err(DiffusionError::BadLatent {
                len: values.len(),
                shape,
            });
        }
        Ok(Self { values, shape })
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        let n = values.len();
        Self { values, shape: vec![n] }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            values: vec![0.0; shape.iter().product()],
            shape: shape.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn same_shape(&self, other: &Self) -> Result<(), DiffusionError> {
        if self.shape != other.shape || self.values.len() != other.values.len() {
            return Err(DiffusionError::Shape(self.shape.clone(), other.shape.clone()));
        }
        Ok(())
    }

    fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self, DiffusionError> {
        self.same_shape(other)?;
        Ok(Self {
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
            shape: self.shape.clone(),
        })
    }
}

/// Opaque prompt token. `EMPTY` is the unconditional prompt and can never be
/// produced by [`PromptId::user`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PromptId(u32);

impl PromptId {
    pub const EMPTY: PromptId = PromptId(0);

    pub fn user(index: u32) -> PromptId {
        PromptId(index.checked_add(1).expect("prompt index overflow"))
    }

    pub fn is_empty(self) -> bool {
        self == Self::EMPTY
    }
}

/// ε(x, t, prompt). Implementations must be deterministic and return a latent
/// of the input's shape.
pub trait NoisePredictor: Sync {
    fn predict(&self, x: &LatentState, t: usize, prompt: PromptId) -> LatentState;
}

impl<F> NoisePredictor for F
where
    F: Fn(&LatentState, usize, PromptId) -> LatentState + Sync,
{
    fn predict(&self, x: &LatentState, t: usize, prompt: PromptId) -> LatentState {
        self(x, t, prompt)
    }
}

fn predict_checked(
    pred: &dyn NoisePredictor,
    x: &LatentState,
    t: usize,
    prompt: PromptId,
) -> Result<LatentState, DiffusionError> {
    let eps = pred.predict(x, t, prompt);
    x.same_shape(&eps)?;
    Ok(eps)
}

pub fn add_noise(
    x0: &LatentState,
    eps: &LatentState,
    t: usize,
    sched: &ScheduleTable,
) -> Result<LatentState, DiffusionError> {
    let ab = sched.check_noised(t)?;
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    x0.zip_map(eps, |x, e| a * x + b * e)
}

/// One-step estimate of x₀ from a noised latent and predicted noise.
pub fn pseudo_ground_truth(
    xt: &LatentState,
    eps_hat: &LatentState,
    t: usize,
    sched: &ScheduleTable,
) -> Result<LatentState, DiffusionError> {
    let ab = sched.check_noised(t)?;
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    xt.zip_map(eps_hat, |x, e| (x - b * e) / a)
}

/// Linearly shrinking upper bound on sampled timesteps, never below 1.
pub fn time_window(iter: usize, iter_max: usize) -> Result<usize, DiffusionError> {
    time_window_with(iter, iter_max, DEFAULT_T)
}

pub fn time_window_with(iter: usize, iter_max: usize, t_max: usize) -> Result<usize, DiffusionError> {
    if iter > iter_max {
        return Err(DiffusionError::Iteration { iter, iter_max });
    }
    if iter_max == 0 {
        return Ok(t_max.max(1));
    }
    let w = ((1.0 - iter as f64 / iter_max as f64) * t_max as f64).round() as usize;
    Ok(w.max(1))
}

/// One timestep per stratum ((i−1)/m, i/m]·T_end, i = 1..m.
///
/// Each draw is rounded to the nearest integer and then clamped into the
/// integers of its own stratum, so the list is strictly ascending without
/// any collision handling.
pub fn sample_timesteps(t_end: usize, m: usize, seed: u64) -> Result<Vec<usize>, DiffusionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_timesteps_rng(t_end, m, &mut rng)
}

pub fn sample_timesteps_rng(t_end: usize, m: usize, rng: &mut impl Rng) -> Result<Vec<usize>, DiffusionError> {
    if m == 0 || t_end < m {
        return Err(DiffusionError::TooFewSteps { m, t_end });
    }
    let width = t_end as f64 / m as f64;
    let mut out: Vec<usize> = Vec::with_capacity(m);
    for i in 0..m {
        let lo = width * i as f64;
        let hi = if i + 1 == m { t_end as f64 } else { width * (i + 1) as f64 };
        let u: f64 = rng.random();
        let x = lo + (1.0 - u) * (hi - lo);
        // Integers of (lo, hi]; nonempty because hi − lo >= 1.
        let first = lo.floor() as usize + 1;
        let last = hi.floor() as usize;
        let mut t = (x.round() as usize).clamp(first, last).max(1);
        if let Some(&prev) = out.last() {
            if t <= prev {
                t = prev + 1;
            }
        }
        out.push(t);
    }
    Ok(out)
}

fn dreamtime_raw(t: usize, mu: f64, sigma: f64, sched: &ScheduleTable) -> f64 {
    let ab = sched.alpha_bar[t];
    let d = t as f64 - mu;
    ((1.0 - ab) / ab).sqrt() * (-(d * d) / (2.0 * sigma * sigma)).exp()
}

/// Normalized weights for t = 1..=T (index 0 of the result is t = 1).
pub fn dreamtime_weights(mu: f64, sigma: f64, sched: &ScheduleTable) -> Result<Vec<f64>, DiffusionError> {
    if !(sigma > 0.0) {
        return Err(DiffusionError::Sigma(sigma));
    }
    let raw: Vec<f64> = (1..=sched.t_max).map(|t| dreamtime_raw(t, mu, sigma, sched)).collect();
    let z = neumaier_sum(raw.iter().copied());
    Ok(raw.into_iter().map(|w| w / z).collect())
}

pub fn dreamtime_weight(t: usize, mu: f64, sigma: f64, sched: &ScheduleTable) -> Result<f64, DiffusionError> {
    sched.check_noised(t)?;
    Ok(dreamtime_weights(mu, sigma, sched)?[t - 1])
}

fn ddim_update(x: &LatentState, eps: &LatentState, ab_from: f64, ab_to: f64) -> Result<LatentState, DiffusionError> {
    let (sf, nf) = (ab_from.sqrt(), (1.0 - ab_from).sqrt());
    let (st, nt) = (ab_to.sqrt(), (1.0 - ab_to).sqrt());
    x.zip_map(eps, |x, e| st * (x - nf * e) / sf + nt * e)
}

/// Intermediate timesteps from `from` to `to` (both included) spaced by at
/// most `delta`.
fn substeps(from: usize, to: usize, delta: Option<usize>) -> Result<Vec<usize>, DiffusionError> {
    let Some(d) = delta else {
        return Ok(vec![from, to]);
    };
    if d == 0 {
        return Err(DiffusionError::Substep);
    }
    let mut out = vec![from];
    let mut cur = from;
    while cur != to {
        cur = if to > cur { (cur + d).min(to) } else { cur.saturating_sub(d).max(to) };
        out.push(cur);
    }
    Ok(out)
}

fn ddim_chain(
    x: &LatentState,
    path: &[usize],
    pred: &dyn NoisePredictor,
    prompt: PromptId,
    sched: &ScheduleTable,
) -> Result<LatentState, DiffusionError> {
    let mut cur = x.clone();
    for w in path.windows(2) {
        let eps = predict_checked(pred, &cur, w[0], prompt)?;
        cur = ddim_update(&cur, &eps, sched.alpha_bar(w[0])?, sched.alpha_bar(w[1])?)?;
    }
    Ok(cur)
}

/// Deterministic inversion toward higher noise, with ε evaluated at the
/// source of each (sub)step. `t_from` may be 0 (clean latent).
pub fn ddim_invert_step(
    x: &LatentState,
    t_from: usize,
    t_to: usize,
    pred: &dyn NoisePredictor,
    prompt: PromptId,
    sched: &ScheduleTable,
    delta_t: Option<usize>,
) -> Result<LatentState, DiffusionError> {
    if t_to <= t_from {
        return Err(DiffusionError::Ordering {
            expected: "ascending",
            from: t_from,
            to: t_to,
        });
    }
    sched.alpha_bar(t_to)?;
    ddim_chain(x, &substeps(t_from, t_to, delta_t)?, pred, prompt, sched)
}

pub fn ddim_denoise_step(
    x: &LatentState,
    t_from: usize,
    t_to: usize,
    pred: &dyn NoisePredictor,
    prompt: PromptId,
    sched: &ScheduleTable,
    delta_t: Option<usize>,
) -> Result<LatentState, DiffusionError> {
    if t_to >= t_from {
        return Err(DiffusionError::Ordering {
            expected: "descending",
            from: t_from,
            to: t_to,
        });
    }
    sched.alpha_bar(t_from)?;
    ddim_chain(x, &substeps(t_from, t_to, delta_t)?, pred, prompt, sched)
}

fn check_ascending(ts: &[usize], sched: &ScheduleTable) -> Result<(), DiffusionError> {
    if ts.is_empty() || ts[0] == 0 || ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DiffusionError::NotAscending);
    }
    sched.alpha_bar(*ts.last().expect("nonempty"))?;
    Ok(())
}

/// Chained inversion through `ts` (ascending), returning x at each timestep.
pub fn invert_chain(
    x: &LatentState,
    ts: &[usize],
    pred: &dyn NoisePredictor,
    prompt: PromptId,
    sched: &ScheduleTable,
    delta_t: Option<usize>,
) -> Result<Vec<LatentState>, DiffusionError> {
    check_ascending(ts, sched)?;
    let mut out: Vec<LatentState> = vec![x.clone()];
    for w in ts.windows(2) {
        let next = ddim_invert_step(out.last().expect("nonempty"), w[0], w[1], pred, prompt, sched, delta_t)?;
        out.push(next);
    }
    Ok(out)
}

/// Chained denoising from the last of `ts` back down to the first; the
/// result is ordered like `ts`.
pub fn denoise_chain(
    x_top: &LatentState,
    ts: &[usize],
    pred: &dyn NoisePredictor,
    prompt: PromptId,
    sched: &ScheduleTable,
    delta_t: Option<usize>,
) -> Result<Vec<LatentState>, DiffusionError> {
    check_ascending(ts, sched)?;
    let mut out: Vec<LatentState> = vec![x_top.clone()];
    for w in ts.windows(2).rev() {
        let next = ddim_denoise_step(out.last().expect("nonempty"), w[1], w[0], pred, prompt, sched, delta_t)?;
        out.push(next);
    }
    out.reverse();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtsTrajectory {
    pub timesteps: Vec<usize>,
    pub latents: Vec<LatentState>,
    /// (ε at the positive prompt, ε at the negative prompt) per step; empty
    /// until [`MtsTrajectory::predict`] runs.
    #[serde(default)]
    pub predictions: Vec<(LatentState, LatentState)>,
}

impl MtsTrajectory {
    pub fn len(&self) -> usize {
        self.timesteps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timesteps.is_empty()
    }

    /// Evaluates and stores the prediction pairs. Calls run in parallel.
    pub fn predict(
        &mut self,
        pred: &dyn NoisePredictor,
        prompt_pos: PromptId,
        prompt_neg: PromptId,
    ) -> Result<(), DiffusionError> {
        self.predictions = prediction_pairs(self, pred, prompt_pos, prompt_neg)?;
        Ok(())
    }
}

fn prediction_pairs(
    traj: &MtsTrajectory,
    pred: &dyn NoisePredictor,
    prompt_pos: PromptId,
    prompt_neg: PromptId,
) -> Result<Vec<(LatentState, LatentState)>, DiffusionError> {
    if traj.latents.len() != traj.timesteps.len() {
        return Err(DiffusionError::Misaligned {
            what: "trajectory latents",
            expected: traj.timesteps.len(),
            got: traj.latents.len(),
        });
    }
    traj.latents
        .par_iter()
        .zip(traj.timesteps.par_iter())
        .map(|(x, &t)| {
            let pos = predict_checked(pred, x, t, prompt_pos)?;
            let neg = if prompt_pos == prompt_neg {
                pos.clone()
            } else {
                predict_checked(pred, x, t, prompt_neg)?
            };
            Ok((pos, neg))
        })
        .collect()
}

/// Inverts the clean latent x₀ (t = 0) through every t_i in turn.
pub fn build_mts_trajectory(
    x0: &LatentState,
    timesteps: &[usize],
    pred: &dyn NoisePredictor,
    invert_prompt: PromptId,
    sched: &ScheduleTable,
    delta_t: Option<usize>,
) -> Result<MtsTrajectory, DiffusionError> {
    check_ascending(timesteps, sched)?;
    let mut latents = Vec::with_capacity(timesteps.len());
    let mut cur = x0.clone();
    let mut t_prev = 0;
    for &t in timesteps {
        cur = ddim_invert_step(&cur, t_prev, t, pred, invert_prompt, sched, delta_t)?;
        latents.push(cur.clone());
        t_prev = t;
    }
    Ok(MtsTrajectory {
        timesteps: timesteps.to_vec(),
        latents,
        predictions: Vec::new(),
    })
}

pub fn guidance_direction(eps_a: &LatentState, eps_b: &LatentState, w: f64) -> Result<LatentState, DiffusionError> {
    eps_a.zip_map(eps_b, |a, b| w * (a - b))
}

/// Σ_i w_i·(ε(x_i, t_i, pos) − ε(x_i, t_i, neg)), summed with compensation in
/// step order.
pub fn mts_direction(
    traj: &MtsTrajectory,
    pred: &dyn NoisePredictor,
    prompt_pos: PromptId,
    prompt_neg: PromptId,
    weights: &[f64],
) -> Result<LatentState, DiffusionError> {
    if weights.len() != traj.len() {
        return Err(DiffusionError::Misaligned {
            what: "weights",
            expected: traj.len(),
            got: weights.len(),
        });
    }
    let pairs = prediction_pairs(traj, pred, prompt_pos, prompt_neg)?;
    combine_directions(&pairs, weights)
}

/// Weighted sum of guidance terms over precomputed prediction pairs.
pub fn combine_directions(pairs: &[(LatentState, LatentState)], weights: &[f64]) -> Result<LatentState, DiffusionError> {
    if weights.len() != pairs.len() {
        return Err(DiffusionError::Misaligned {
            what: "weights",
            expected: pairs.len(),
            got: weights.len(),
        });
    }
    let Some(first) = pairs.first() else {
        return Err(DiffusionError::Misaligned {
            what: "trajectory steps",
            expected: 1,
            got: 0,
        });
    };
    let terms: Vec<LatentState> = pairs
        .iter()
        .zip(weights)
        .map(|((a, b), &w)| guidance_direction(a, b, w))
        .collect::<Result<_, _>>()?;
    for t in &terms {
        first.0.same_shape(t)?;
    }
    let n = first.0.len();
    let values = (0..n).map(|k| neumaier_sum(terms.iter().map(|t| t.values[k]))).collect();
    Ok(LatentState {
        values,
        shape: first.0.shape.clone(),
    })
}

/// Uniform weights, the default for [`mts_direction`].
pub fn uniform_weights(m: usize) -> Vec<f64> {
    vec![1.0; m]
}

/// DreamTime weights looked up at each trajectory timestep.
pub fn dreamtime_step_weights(
    timesteps: &[usize],
    mu: f64,
    sigma: f64,
    sched: &ScheduleTable,
) -> Result<Vec<f64>, DiffusionError> {
    let table = dreamtime_weights(mu, sigma, sched)?;
    timesteps
        .iter()
        .map(|&t| {
            sched.check_noised(t)?;
            Ok(table[t - 1])
        })
        .collect()
}

pub fn reconstruction_loss(rendered: &[LatentState], targets: &[LatentState]) -> Result<f64, DiffusionError> {
    if rendered.len() != targets.len() {
        return Err(DiffusionError::Misaligned {
            what: "targets",
            expected: rendered.len(),
            got: targets.len(),
        });
    }
    let norms: Vec<f64> = rendered
        .iter()
        .zip(targets)
        .map(|(r, t)| Ok(r.zip_map(t, |a, b| a - b)?.norm()))
        .collect::<Result<_, DiffusionError>>()?;
    Ok(neumaier_sum(norms))
}

/// Compensated (Neumaier) summation. A single term is returned unchanged.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut it = values.into_iter();
    let Some(mut sum) = it.next() else {
        return 0.0;
    };
    let mut c = 0.0;
    let mut single = true;
    for v in it {
        single = false;
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    if single {
        sum
    } else {
        sum + c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lat(v: &[f64]) -> LatentState {
        LatentState::from_vec(v.to_vec())
    }

    #[test]
    fn schedule_basics() {
        let s = ScheduleTable::standard();
        assert_eq!(s.alpha_bar.len(), 1001);
        assert_eq!(s.alpha_bar[0], 1.0);
        assert!(s.alpha_bar.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
        assert!(build_schedule(ScheduleKind::Linear, 10, 0.0, 0.1).is_err());
        assert!(build_schedule(ScheduleKind::Linear, 10, 0.2, 0.1).is_err());
        assert!(build_schedule(ScheduleKind::Linear, 10, 0.1, 1.0).is_err());
        assert_eq!(build_schedule(ScheduleKind::Linear, 0, 0.1, 0.2), Err(DiffusionError::EmptySchedule));
    }

    #[test]
    fn time_window_cases() {
        assert_eq!(time_window(0, 1500), Ok(1000));
        assert_eq!(time_window(1500, 1500), Ok(1));
        assert_eq!(time_window(750, 1500), Ok(500));
        assert!(time_window(1501, 1500).is_err());
        let w: Vec<usize> = (0..=300).map(|i| time_window(i, 300).unwrap()).collect();
        assert!(w.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn timesteps_are_stratified_and_reproducible() {
        let a = sample_timesteps(1000, 4, 9).unwrap();
        assert_eq!(a, sample_timesteps(1000, 4, 9).unwrap());
        for (i, &t) in a.iter().enumerate() {
            assert!(t > i * 250 && t <= (i + 1) * 250);
        }
        let one = sample_timesteps(7, 1, 3).unwrap();
        assert!(one.len() == 1 && (1..=7).contains(&one[0]));
        assert!(sample_timesteps(3, 4, 0).is_err());
        assert!(sample_timesteps(10, 0, 0).is_err());
        // Narrow windows: every stratum holds exactly one integer.
        assert_eq!(sample_timesteps(4, 4, 5).unwrap(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn noise_round_trip_and_zero_eps() {
        let s = ScheduleTable::standard();
        let x0 = lat(&[0.3, -1.2, 2.0]);
        let eps = lat(&[1.0, 0.5, -0.25]);
        let xt = add_noise(&x0, &eps, 400, &s).unwrap();
        let back = pseudo_ground_truth(&xt, &eps, 400, &s).unwrap();
        for (a, b) in back.values.iter().zip(&x0.values) {
            assert!((a - b).abs() < 1e-12);
        }
        let z = LatentState::zeros(&[3]);
        let plain = add_noise(&x0, &z, 400, &s).unwrap();
        let r = s.alpha_bar[400].sqrt();
        assert_eq!(plain.values, x0.values.iter().map(|v| r * v).collect::<Vec<_>>());
        assert!(add_noise(&x0, &lat(&[1.0]), 10, &s).is_err());
        assert!(add_noise(&x0, &eps, 0, &s).is_err());
        assert!(add_noise(&x0, &eps, 1001, &s).is_err());
    }

    #[test]
    fn ddim_ordering_is_checked() {
        let s = ScheduleTable::standard();
        let zero = |x: &LatentState, _: usize, _: PromptId| LatentState::zeros(&x.shape);
        let x = lat(&[1.0]);
        assert!(ddim_invert_step(&x, 10, 10, &zero, PromptId::EMPTY, &s, None).is_err());
        assert!(ddim_denoise_step(&x, 10, 20, &zero, PromptId::EMPTY, &s, None).is_err());
        assert!(ddim_invert_step(&x, 10, 20, &zero, PromptId::EMPTY, &s, Some(0)).is_err());
    }

    #[test]
    fn substeps_cover_the_interval() {
        assert_eq!(substeps(100, 300, Some(50)).unwrap(), vec![100, 150, 200, 250, 300]);
        assert_eq!(substeps(300, 100, Some(75)).unwrap(), vec![300, 225, 150, 100]);
        assert_eq!(substeps(0, 30, None).unwrap(), vec![0, 30]);
    }

    #[test]
    fn bad_predictor_shape_is_an_error() {
        let s = ScheduleTable::standard();
        let bad = |_: &LatentState, _: usize, _: PromptId| LatentState::zeros(&[2]);
        let err = ddim_invert_step(&lat(&[1.0]), 0, 5, &bad, PromptId::EMPTY, &s, None).unwrap_err();
        assert!(matches!(err, DiffusionError::Shape(..)));
    }

    #[test]
    fn neumaier_handles_cancellation() {
        assert_eq!(neumaier_sum([1.0, 1e100, 1.0, -1e100]), 2.0);
        assert_eq!(neumaier_sum([]), 0.0);
        assert_eq!(neumaier_sum([0.1]), 0.1);
    }

    #[test]
    fn prompt_ids_never_collide_with_empty() {
        assert!(PromptId::EMPTY.is_empty());
        assert!(!PromptId::user(0).is_empty());
        assert_ne!(PromptId::user(0), PromptId::user(1));
    }

    #[test]
    fn latent_shape_is_validated() {
        assert!(LatentState::new(vec![0.0; 6], vec![2, 3]).is_ok());
        assert!(LatentState::new(vec![0.0; 5], vec![2, 3]).is_err());
    }
}
