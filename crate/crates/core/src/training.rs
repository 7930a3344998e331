//! Teacher-forced training of the linear readout, the 128-step warmup and
//! the closed-loop autonomous run.
//!
//! Training pairs the state reached after consuming teacher sample u(k)
//! with the target u(k+1). The output computed from the current state is
//! injected as the next input once the loop is closed, so an accurately
//! trained readout keeps the autonomous dynamics on the teacher's
//! trajectory.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::prediction_horizon;
use crate::fidelity::{quantize, FidelityRuntime, Tier};
use crate::reservoir::{drive, generate_mask, reservoir_step, ReservoirConfig, ReservoirState, StateTrajectory};
use crate::scalar::Scalar;
use crate::series::TimeSeries;
use crate::tasks::{
    gen_pattern, gen_sine, integrate_lorenz, integrate_mackey_glass, LorenzParams,
    MackeyGlassParams, MgHistory,
};

/// Trained readout vector, optionally quantized to the DSP weight format.
/// `output_gain` undoes any rescaling applied to keep weights in ]-1, 1[.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReadoutWeights<T: Scalar> {
    pub weights: Vec<T>,
    pub regularization: T,
    pub quantized: bool,
    pub output_gain: T,
}

/// y(n) = output_gain * sum_i w_i x_i(n) over the acquired state.
pub fn readout<T: Scalar>(state_values: &[T], weights: &ReadoutWeights<T>) -> Result<T> {
    if state_values.len() != weights.weights.len() {
        return Err(Error::LengthMismatch {
            left: state_values.len(),
            right: weights.weights.len(),
        });
    }
    let dot: T = state_values
        .iter()
        .zip(&weights.weights)
        .map(|(&x, &w)| x * w)
        .sum();
    Ok(weights.output_gain * dot)
}

/// Mean squared error between two equally long series.
pub fn mse<T: Scalar>(a: &TimeSeries<T>, b: &TimeSeries<T>) -> Result<T> {
    mse_slices(&a.values, &b.values)
}

pub fn mse_slices<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::invalid("mse needs non-empty sequences"));
    }
    let sum: T = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok(sum / T::from_usize_exact(a.len()))
}

/// Ridge regression on recorded states: minimizes
/// sum_n (w . x(n) - d(n))^2 + reg * |w|^2 via the normal equations,
/// solved with a Cholesky factorization.
pub fn ridge_train<T: Scalar>(
    trajectory: &StateTrajectory<T>,
    targets: &[T],
    regularization: T,
) -> Result<ReadoutWeights<T>> {
    if trajectory.n_rows() != targets.len() {
        return Err(Error::LengthMismatch {
            left: trajectory.n_rows(),
            right: targets.len(),
        });
    }
    if regularization < T::zero() || !regularization.is_finite() {
        return Err(Error::invalid("regularization must be non-negative"));
    }
    let n = trajectory.states.first().map(Vec::len).unwrap_or(0);
    if n == 0 || trajectory.n_rows() < n {
        return Err(Error::invalid(format!(
            "regression needs at least {n} rows, got {}",
            trajectory.n_rows()
        )));
    }

    // Gram matrix X^T X and right-hand side X^T d.
    let mut gram = vec![T::zero(); n * n];
    let mut rhs = vec![T::zero(); n];
    for (row, &d) in trajectory.states.iter().zip(targets) {
        for i in 0..n {
            let xi = row[i];
            rhs[i] += xi * d;
            // symmetric, fill upper triangle
            for j in i..n {
                gram[i * n + j] += xi * row[j];
            }
        }
    }
    for i in 0..n {
        gram[i * n + i] += regularization;
        for j in 0..i {
            gram[i * n + j] = gram[j * n + i];
        }
    }

    let weights = cholesky_solve(&gram, &rhs, n).ok_or(Error::IllConditionedTraining)?;
    Ok(ReadoutWeights {
        weights,
        regularization,
        quantized: false,
        output_gain: T::one(),
    })
}

/// Cholesky solve of a symmetric positive definite system; `None` when a
/// pivot collapses (singular or indefinite).
fn cholesky_solve<T: Scalar>(a: &[T], b: &[T], n: usize) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= T::zero() || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    // forward then backward substitution
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    Some(x)
}

/// Post-processes trained weights for the experimental tiers: rescale into
/// ]-1, 1[ if needed (folding the scale into `output_gain`), then quantize
/// to the DSP weight format.
pub fn finalize_weights<T: Scalar>(
    mut w: ReadoutWeights<T>,
    tier: Tier,
    weight_bits: u32,
) -> Result<ReadoutWeights<T>> {
    if tier == Tier::Idealized {
        return Ok(w);
    }
    let limit = T::one() - T::of(2.0).powi(-(weight_bits as i32 - 1));
    let max_abs = w.weights.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    if max_abs > limit {
        let scale = max_abs / limit;
        for v in &mut w.weights {
            *v = *v / scale;
        }
        w.output_gain = w.output_gain * scale;
    }
    for v in &mut w.weights {
        *v = quantize(*v, weight_bits, weight_bits - 1)?;
    }
    w.quantized = true;
    Ok(w)
}

/// Ridge parameter choice: a fixed value, or a decade grid scanned with a
/// 20% validation tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RidgeSelect<T: Scalar> {
    Fixed(T),
    Grid,
}

const RIDGE_GRID_DECADES: std::ops::RangeInclusive<i32> = -9..=-1;

fn select_and_train<T: Scalar>(
    trajectory: &StateTrajectory<T>,
    targets: &[T],
    select: RidgeSelect<T>,
) -> Result<(ReadoutWeights<T>, T)> {
    match select {
        RidgeSelect::Fixed(reg) => {
            let w = ridge_train(trajectory, targets, reg)?;
            Ok((w, reg))
        }
        RidgeSelect::Grid => {
            let rows = trajectory.n_rows();
            let split = rows - rows / 5;
            let head = StateTrajectory {
                states: trajectory.states[..split].to_vec(),
                inputs: TimeSeries::steps(trajectory.inputs.values[..split].to_vec()),
            };
            let mut best: Option<(T, T)> = None; // (validation mse, reg)
            for decade in RIDGE_GRID_DECADES {
                let reg = T::of(10f64.powi(decade));
                let Ok(w) = ridge_train(&head, &targets[..split], reg) else {
                    continue;
                };
                let val_mse = validation_mse(trajectory, targets, &w, split)?;
                let better = match best {
                    None => true,
                    Some((b, _)) => val_mse < b,
                };
                if better {
                    best = Some((val_mse, reg));
                }
            }
            let (_, reg) = best.ok_or(Error::IllConditionedTraining)?;
            let w = ridge_train(trajectory, targets, reg)?;
            Ok((w, reg))
        }
    }
}

fn validation_mse<T: Scalar>(
    trajectory: &StateTrajectory<T>,
    targets: &[T],
    w: &ReadoutWeights<T>,
    split: usize,
) -> Result<T> {
    let predictions: Vec<T> = trajectory.states[split..]
        .iter()
        .map(|row| readout(row, w))
        .collect::<Result<_>>()?;
    mse_slices(&predictions, &targets[split..])
}

/// Result of a closed-loop run: readouts recorded while the teacher still
/// drives the loop, then the self-driven output.
#[derive(Debug, Clone)]
pub struct AutonomousRun<T: Scalar> {
    /// Readouts during warmup, one per warmup input after the first; the
    /// k-th predicts warmup sample k+1.
    pub warmup_out: Vec<T>,
    /// Self-generated series; element 0 is the readout of the state at the
    /// moment the loop closes.
    pub output: TimeSeries<T>,
    pub diverged: bool,
}

/// Drives a fresh reservoir with `warmup` and then lets it run on its own
/// output for `horizon` steps. Stops early (flagged) if the output leaves
/// the finite range.
pub fn autonomous_run<T: Scalar>(
    config: &ReservoirConfig<T>,
    weights: &ReadoutWeights<T>,
    warmup: &TimeSeries<T>,
    horizon: usize,
    runtime: &mut FidelityRuntime<T>,
) -> Result<AutonomousRun<T>> {
    if warmup.is_empty() {
        return Err(Error::invalid("warmup must contain at least one sample"));
    }
    if horizon == 0 {
        return Err(Error::invalid("horizon must be positive"));
    }
    config.validate()?;

    let mut state = ReservoirState::zero(config.n_nodes);
    let mut warmup_out = Vec::with_capacity(warmup.len().saturating_sub(1));
    let mut last_acquired = Vec::new();
    for (k, &u) in warmup.values.iter().enumerate() {
        let outcome = reservoir_step(&state, u, config, runtime)?;
        state = outcome.state;
        last_acquired = outcome.acquired;
        if k + 1 < warmup.len() {
            warmup_out.push(readout(&last_acquired, weights)?);
        }
    }

    let mut output = Vec::with_capacity(horizon);
    let mut diverged = false;
    let mut y = readout(&last_acquired, weights)?;
    for step in 0..horizon {
        if !y.is_finite() {
            diverged = true;
            break;
        }
        output.push(y);
        if step + 1 == horizon {
            break;
        }
        let outcome = reservoir_step(&state, y, config, runtime)?;
        state = outcome.state;
        y = readout(&outcome.acquired, weights)?;
    }

    Ok(AutonomousRun {
        warmup_out,
        output: TimeSeries::steps(output),
        diverged,
    })
}

/// Task selector with the parameters each teacher generator needs.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskSpec<T: Scalar> {
    Sine {
        nu: T,
    },
    Pattern {
        pattern_len: usize,
    },
    MackeyGlass {
        params: MackeyGlassParams<T>,
        /// Subtracted from the raw series so the teacher is centred on the
        /// equilibrium and fits the DAC range.
        offset: T,
    },
    Lorenz {
        params: LorenzParams<T>,
    },
}

impl<T: Scalar> TaskSpec<T> {
    pub fn mackey_glass_default() -> Self {
        TaskSpec::MackeyGlass {
            params: MackeyGlassParams::default(),
            offset: T::one(),
        }
    }

    pub fn lorenz_default() -> Self {
        TaskSpec::Lorenz {
            params: LorenzParams::default(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::Sine { .. } => "sine",
            TaskSpec::Pattern { .. } => "pattern",
            TaskSpec::MackeyGlass { .. } => "mackey_glass",
            TaskSpec::Lorenz { .. } => "lorenz",
        }
    }

    /// Training rows skipped at the start of the trajectory. Delay tasks
    /// need the reservoir to forget more than one delay span.
    pub fn washout(&self) -> usize {
        match self {
            TaskSpec::MackeyGlass { params, .. } => {
                let tau_steps = (params.mg_tau / params.step).round().to_usize().unwrap_or(17);
                (6 * tau_steps).max(100)
            }
            _ => 100,
        }
    }

    /// Generates the teacher series. `train_len` lets the chaotic tasks
    /// pick a training window with balanced statistics; `total` covers
    /// training, warmup and the autonomous target.
    pub fn generate(&self, total: usize, train_len: usize, seed: u64) -> Result<TimeSeries<T>> {
        use rand::Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        match self {
            TaskSpec::Sine { nu } => {
                if !nu.is_finite() {
                    return Err(Error::invalid("nu must be finite"));
                }
                Ok(gen_sine(*nu, total))
            }
            TaskSpec::Pattern { pattern_len } => gen_pattern(*pattern_len, total, &mut rng),
            TaskSpec::MackeyGlass { params, offset } => {
                let transient = 1000;
                let jitter: T = rng.random_range(-T::of(0.05)..=T::of(0.05));
                let history = MgHistory::Constant(T::of(0.9) + jitter);
                let raw = integrate_mackey_glass(params, transient + total, &history)?;
                let values = raw.values[transient..]
                    .iter()
                    .map(|&v| v - *offset)
                    .collect();
                TimeSeries::new(values, raw.semantics, raw.dt)
            }
            TaskSpec::Lorenz { params } => {
                let slack = 5000usize;
                let jit = |rng: &mut ChaCha12Rng| rng.random_range(-T::of(0.1)..=T::of(0.1));
                let init = (
                    T::one() + jit(&mut rng),
                    T::one() + jit(&mut rng),
                    T::one() + jit(&mut rng),
                );
                let n_total = params.discard_prefix + total + slack;
                let traj = integrate_lorenz(params, n_total, init)?;
                let teacher = traj.teacher;
                let offset = balanced_window_offset(&teacher.values, train_len, slack);
                TimeSeries::new(
                    teacher.values[offset..offset + total].to_vec(),
                    teacher.semantics,
                    teacher.dt,
                )
            }
        }
    }
}

/// Picks the first window start (scanning in strides of 50) whose first
/// `train_len` samples spend nearly equal time positive and negative, so
/// the readout is not trained toward one wing of the attractor. Falls back
/// to the most balanced offset seen.
fn balanced_window_offset<T: Scalar>(values: &[T], train_len: usize, slack: usize) -> usize {
    let train_len = train_len.min(values.len());
    let max_offset = slack.min(values.len().saturating_sub(train_len));
    let mut best = (T::infinity(), 0usize);
    let mut offset = 0usize;
    while offset <= max_offset {
        let window = &values[offset..offset + train_len];
        let positive = window.iter().filter(|v| **v > T::zero()).count();
        let frac = T::from_usize_exact(positive) / T::from_usize_exact(train_len);
        let imbalance = (frac - T::of(0.5)).abs();
        if imbalance <= T::of(0.05) {
            return offset;
        }
        if imbalance < best.0 {
            best = (imbalance, offset);
        }
        offset += 50;
    }
    best.1
}

/// Seeds for the three independent random streams of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Seeds {
    pub mask_seed: u64,
    pub noise_seed: u64,
    pub task_seed: u64,
}

/// Complete description of one experiment; everything a run needs, and
/// everything the report must echo for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec<T: Scalar> {
    pub task: TaskSpec<T>,
    pub reservoir: ReservoirConfig<T>,
    pub train_len: usize,
    pub warmup_len: usize,
    pub autonomous_len: usize,
    pub mse_threshold: T,
    /// Trailing-average window for the horizon rule (1 = strict per step).
    pub horizon_window: usize,
    pub ridge: RidgeSelect<T>,
    /// State noise injected during the teacher-forced drive only. Makes
    /// the regression see how deviations propagate, which stabilizes the
    /// closed loop; the autonomous phase is untouched. Zero disables it.
    pub train_state_noise: T,
    /// Noise added to the teacher input during the training drive (the
    /// targets stay clean). Deviations fed back during the autonomous run
    /// enter through this same channel, so the readout learns to pull the
    /// loop back onto the taught orbit. Zero disables it.
    pub train_input_noise: T,
    pub seeds: Seeds,
}

impl<T: Scalar> ExperimentSpec<T> {
    pub fn validate(&self) -> Result<()> {
        self.reservoir.validate()?;
        if self.train_len < self.reservoir.n_nodes {
            return Err(Error::invalid("train_len must be at least n_nodes"));
        }
        if self.warmup_len == 0 {
            return Err(Error::invalid("warmup_len must be at least 1"));
        }
        if self.autonomous_len == 0 {
            return Err(Error::invalid("autonomous_len must be positive"));
        }
        if self.mse_threshold <= T::zero() || !self.mse_threshold.is_finite() {
            return Err(Error::invalid("mse_threshold must be positive"));
        }
        if self.horizon_window == 0 {
            return Err(Error::invalid("horizon_window must be at least 1"));
        }
        if !self.train_state_noise.is_finite() || self.train_state_noise < T::zero() {
            return Err(Error::invalid("train_state_noise must be non-negative"));
        }
        if !self.train_input_noise.is_finite() || self.train_input_noise < T::zero() {
            return Err(Error::invalid("train_input_noise must be non-negative"));
        }
        Ok(())
    }
}

/// Everything produced by one experiment.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport<T: Scalar> {
    pub spec: ExperimentSpec<T>,
    pub spec_digest: String,
    pub weights_digest: String,
    pub selected_regularization: T,
    pub train_rows: usize,
    pub train_mse: T,
    pub autonomous_mse: T,
    /// Mean squared error below threshold over the whole autonomous run.
    pub success: bool,
    /// Fig-6-style stability check: the 100-step-averaged error curve
    /// stays below threshold over the first 1000 autonomous steps. Less
    /// sensitive to the slow phase diffusion every noisy oscillator shows.
    pub success_window: bool,
    pub prediction_horizon: usize,
    pub diverged: bool,
    pub metrics: BTreeMap<String, T>,
    #[serde(skip)]
    pub weights: ReadoutWeights<T>,
    #[serde(skip)]
    pub output: TimeSeries<T>,
    #[serde(skip)]
    pub target: TimeSeries<T>,
    #[serde(skip)]
    pub warmup_out: Vec<T>,
    #[serde(skip)]
    pub mse_curve: Vec<T>,
}

/// Runs one experiment end to end: teacher generation, teacher-forced
/// drive, ridge training, warmup, autonomous run and metrics.
pub fn run_experiment<T: Scalar>(spec: &ExperimentSpec<T>) -> Result<RunReport<T>> {
    spec.validate()?;
    let total = spec.train_len + spec.warmup_len + spec.autonomous_len;
    let teacher = spec.task.generate(total, spec.train_len, spec.seeds.task_seed)?;

    let mut config = spec.reservoir.clone();
    config.fidelity.noise_seed = spec.seeds.noise_seed;
    let mut mask_rng = ChaCha12Rng::seed_from_u64(spec.seeds.mask_seed);
    config.mask = generate_mask(config.n_nodes, config.n_zeroed_leading, &mut mask_rng)?;
    config.validate()?;

    let mut runtime = config.runtime()?;

    // Teacher-forced phase. The final training sample is only a target,
    // never an input: row k is the state after consuming teacher[k] and
    // pairs with target teacher[k + 1]. Extra training-only state noise
    // rides on top of the tier's own noise level.
    let mut train_inputs = teacher.slice(0, spec.train_len - 1);
    if spec.train_input_noise > T::zero() {
        let mut input_rng = ChaCha12Rng::seed_from_u64(spec.seeds.noise_seed ^ 0x7e18_c0de);
        for v in &mut train_inputs.values {
            *v += spec.train_input_noise * T::standard_normal(&mut input_rng);
        }
    }
    let tier_noise = runtime.noise_std;
    runtime.noise_std = (tier_noise * tier_noise
        + spec.train_state_noise * spec.train_state_noise)
        .sqrt();
    let (trajectory, _) = drive(&config, &train_inputs, ReservoirState::zero(config.n_nodes), &mut runtime)?;
    runtime.noise_std = tier_noise;

    let washout = spec.task.washout().min(spec.train_len / 4);
    let rows_end = trajectory.n_rows();
    let reg_trajectory = StateTrajectory {
        states: trajectory.states[washout..].to_vec(),
        inputs: TimeSeries::steps(train_inputs.values[washout..].to_vec()),
    };
    let targets: Vec<T> = teacher.values[washout + 1..rows_end + 1].to_vec();

    let (raw_weights, selected_reg) = select_and_train(&reg_trajectory, &targets, spec.ridge)?;
    let weights = finalize_weights(
        raw_weights,
        config.fidelity.tier,
        config.fidelity.weight_bits,
    )?;

    let train_predictions: Vec<T> = reg_trajectory
        .states
        .iter()
        .map(|row| readout(row, &weights))
        .collect::<Result<_>>()?;
    let train_mse = mse_slices(&train_predictions, &targets)?;

    // Warmup then closed loop, continuing the same noise stream.
    let warmup = teacher.slice(spec.train_len, spec.train_len + spec.warmup_len);
    let run = autonomous_run(&config, &weights, &warmup, spec.autonomous_len, &mut runtime)?;

    let target_start = spec.train_len + spec.warmup_len;
    let target = teacher.slice(target_start, target_start + run.output.len());
    let autonomous_mse = if run.output.is_empty() {
        T::infinity()
    } else {
        mse(&run.output, &target)?
    };
    let success = !run.diverged
        && run.output.len() == spec.autonomous_len
        && autonomous_mse < spec.mse_threshold;

    let (horizon, mse_curve) = if run.output.is_empty() {
        (0, Vec::new())
    } else {
        prediction_horizon(&run.output, &target, spec.mse_threshold, spec.horizon_window)?
    };
    let success_window = if run.output.is_empty() || run.diverged {
        false
    } else {
        let span = run.output.len().min(1000);
        let (h100, _) = prediction_horizon(&run.output, &target, spec.mse_threshold, 100)?;
        h100 >= span
    };

    let mut metrics = BTreeMap::new();
    metrics.insert("selected_regularization".into(), selected_reg);
    metrics.insert("output_gain".into(), weights.output_gain);
    if let TaskSpec::Lorenz { .. } = spec.task {
        let band = T::of(0.02);
        let total_transitions = wing_transitions(&run.output.values, band);
        let matched = matched_wing_transitions(&run.output.values, &target.values, horizon, band, 15);
        metrics.insert("wing_transitions_total".into(), T::from_usize_exact(total_transitions));
        metrics.insert("wing_transitions_matched".into(), T::from_usize_exact(matched));
    }

    let spec_digest = digest_of(spec);
    let weights_digest = digest_of(&weights.weights);

    // The report embeds the fully resolved configuration (drawn mask,
    // effective noise seed) so a run can be reproduced from it alone.
    let mut resolved = spec.clone();
    resolved.reservoir = config;

    Ok(RunReport {
        spec: resolved,
        spec_digest,
        weights_digest,
        selected_regularization: selected_reg,
        train_rows: targets.len(),
        train_mse,
        autonomous_mse,
        success,
        success_window,
        prediction_horizon: horizon,
        diverged: run.diverged,
        metrics,
        weights,
        output: run.output,
        target,
        warmup_out: run.warmup_out,
        mse_curve,
    })
}

/// Counts sign flips of the trajectory with a hysteresis band: a new wing
/// is entered only when the value crosses beyond +/- band.
pub fn wing_transitions<T: Scalar>(values: &[T], band: T) -> usize {
    let mut count = 0usize;
    let mut wing: Option<bool> = None; // true = positive wing
    for &v in values {
        if v > band {
            if wing == Some(false) {
                count += 1;
            }
            wing = Some(true);
        } else if v < -band {
            if wing == Some(true) {
                count += 1;
            }
            wing = Some(false);
        }
    }
    count
}

/// Wing transitions of the output, inside the prediction horizon, that
/// also occur in the target within `slop` steps.
pub fn matched_wing_transitions<T: Scalar>(
    output: &[T],
    target: &[T],
    horizon: usize,
    band: T,
    slop: usize,
) -> usize {
    let upto = horizon.min(output.len()).min(target.len());
    let out_idx = transition_indices(&output[..upto], band);
    let tgt_idx = transition_indices(&target[..upto.min(target.len())], band);
    out_idx
        .iter()
        .filter(|&&o| tgt_idx.iter().any(|&t| o.abs_diff(t) <= slop))
        .count()
}

fn transition_indices<T: Scalar>(values: &[T], band: T) -> Vec<usize> {
    let mut idx = Vec::new();
    let mut wing: Option<bool> = None;
    for (k, &v) in values.iter().enumerate() {
        if v > band {
            if wing == Some(false) {
                idx.push(k);
            }
            wing = Some(true);
        } else if v < -band {
            if wing == Some(true) {
                idx.push(k);
            }
            wing = Some(false);
        }
    }
    idx
}

/// FNV-1a digest of the canonical JSON form, as a hex string.
pub fn digest_of<S: Serialize>(value: &S) -> String {
    let json = serde_json::to_vec(value).expect("serializable");
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in json {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fidelity::FidelityConfig;
    use crate::reservoir::default_roundtrip_s;

    fn tiny_config(n: usize) -> ReservoirConfig<f64> {
        ReservoirConfig {
            n_nodes: n,
            feedback_gain: 0.9,
            input_gain: 0.3,
            mask: vec![0.5; n],
            n_zeroed_leading: 0,
            fidelity: FidelityConfig::idealized(),
            roundtrip_time_s: default_roundtrip_s(n),
        }
    }

    #[test]
    fn readout_examples() {
        let w = ReadoutWeights {
            weights: vec![0.0, 0.0, 0.0],
            regularization: 0.0,
            quantized: false,
            output_gain: 1.0,
        };
        assert_eq!(readout(&[0.3, -0.4, 0.9], &w).unwrap(), 0.0);

        let one_hot = ReadoutWeights {
            weights: vec![0.0, 1.0, 0.0],
            ..w.clone()
        };
        assert_eq!(readout(&[0.3, -0.4, 0.9], &one_hot).unwrap(), -0.4);

        let two_term = ReadoutWeights {
            weights: vec![0.5f64, -0.25],
            regularization: 0.0,
            quantized: false,
            output_gain: 1.0,
        };
        assert!((readout(&[0.8, 0.4], &two_term).unwrap() - 0.3).abs() < 1e-15);

        assert!(readout(&[1.0], &two_term).is_err());
    }

    #[test]
    fn mse_examples() {
        let a = TimeSeries::steps(vec![0.0, 1.0]);
        let b = TimeSeries::steps(vec![1.0, 0.0]);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &b).unwrap(), 1.0);
        let shifted = TimeSeries::steps(vec![0.1f64, 1.1]);
        assert!((mse(&a, &shifted).unwrap() - 0.01).abs() < 1e-15);
        let short = TimeSeries::steps(vec![0.0]);
        assert!(mse(&a, &short).is_err());
    }

    /// Independent oracle: Gauss-Jordan solve of the regularized normal
    /// equations, built with naive loops.
    fn dense_ridge_oracle(states: &[Vec<f64>], targets: &[f64], reg: f64) -> Vec<f64> {
        let n = states[0].len();
        let mut a = vec![vec![0.0f64; n + 1]; n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for (row, _) in states.iter().zip(targets) {
                    s += row[i] * row[j];
                }
                a[i][j] = s + if i == j { reg } else { 0.0 };
            }
            let mut s = 0.0;
            for (row, &d) in states.iter().zip(targets) {
                s += row[i] * d;
            }
            a[i][n] = s;
        }
        // Gauss-Jordan with partial pivoting
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&p, &q| a[p][col].abs().partial_cmp(&a[q][col].abs()).unwrap())
                .unwrap();
            a.swap(col, pivot);
            let p = a[col][col];
            for j in col..=n {
                a[col][j] /= p;
            }
            for r in 0..n {
                if r != col {
                    let f = a[r][col];
                    for j in col..=n {
                        a[r][j] -= f * a[col][j];
                    }
                }
            }
        }
        (0..n).map(|i| a[i][n]).collect()
    }

    #[test]
    fn ridge_matches_dense_oracle_on_small_instance() {
        let states = vec![vec![1.0, 0.5], vec![0.2, -0.4], vec![-0.7, 0.9]];
        let targets = vec![0.3, -0.1, 0.8];
        let trajectory = StateTrajectory {
            states: states.clone(),
            inputs: TimeSeries::steps(vec![0.0; 3]),
        };
        let w = ridge_train(&trajectory, &targets, 0.1).unwrap();
        let oracle = dense_ridge_oracle(&states, &targets, 0.1);
        for (a, b) in w.weights.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn ridge_interpolates_invertible_square_system() {
        let states = vec![vec![1.0f64, 0.0], vec![0.3, 1.0]];
        let targets = vec![0.5f64, -0.25];
        let trajectory = StateTrajectory {
            states: states.clone(),
            inputs: TimeSeries::steps(vec![0.0; 2]),
        };
        let w = ridge_train(&trajectory, &targets, 0.0).unwrap();
        for (row, &d) in states.iter().zip(&targets) {
            let y = readout(row, &w).unwrap();
            assert!((y - d).abs() < 1e-12);
        }
    }

    #[test]
    fn ridge_shrinks_weights_monotonically() {
        let states: Vec<Vec<f64>> = (0..20)
            .map(|k| vec![(k as f64 * 0.37).sin(), (k as f64 * 0.73).cos()])
            .collect();
        let targets: Vec<f64> = (0..20).map(|k| (k as f64 * 0.21).sin()).collect();
        let trajectory = StateTrajectory {
            states,
            inputs: TimeSeries::steps(vec![0.0; 20]),
        };
        let mut previous = f64::INFINITY;
        for reg in [0.0, 0.1, 1.0, 10.0, 100.0] {
            let w = ridge_train(&trajectory, &targets, reg).unwrap();
            let norm: f64 = w.weights.iter().map(|v| v * v).sum();
            assert!(norm <= previous + 1e-12, "norm grew at reg={reg}");
            previous = norm;
        }
    }

    #[test]
    fn ridge_rejects_singular_unregularized_system() {
        // two identical columns make X^T X singular at reg = 0
        let states = vec![vec![1.0, 1.0], vec![0.5, 0.5], vec![-0.3, -0.3]];
        let trajectory = StateTrajectory {
            states,
            inputs: TimeSeries::steps(vec![0.0; 3]),
        };
        let err = ridge_train(&trajectory, &[0.1, 0.2, 0.3], 0.0);
        assert!(matches!(err, Err(Error::IllConditionedTraining)));
    }

    #[test]
    fn trained_weights_are_first_order_optimal() {
        use rand::Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        let states: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let targets: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
        let trajectory = StateTrajectory {
            states: states.clone(),
            inputs: TimeSeries::steps(vec![0.0; 40]),
        };
        let reg = 1e-3;
        let w = ridge_train(&trajectory, &targets, reg).unwrap();
        let loss = |weights: &[f64]| {
            let mut l = 0.0;
            for (row, &d) in states.iter().zip(&targets) {
                let y: f64 = row.iter().zip(weights).map(|(x, w)| x * w).sum();
                l += (y - d) * (y - d);
            }
            l + reg * weights.iter().map(|v| v * v).sum::<f64>()
        };
        let base = loss(&w.weights);
        for _ in 0..20 {
            let dir: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let eps = 1e-5;
            let probe: Vec<f64> = w
                .weights
                .iter()
                .zip(&dir)
                .map(|(w, d)| w + eps * d)
                .collect();
            assert!(loss(&probe) >= base - 1e-10, "descent direction found");
        }
    }

    #[test]
    fn finalize_rescales_out_of_range_weights() {
        let w = ReadoutWeights {
            weights: vec![1.6f64, -0.4],
            regularization: 0.0,
            quantized: false,
            output_gain: 1.0,
        };
        let f = finalize_weights(w, Tier::NoisyExperimental, 25).unwrap();
        assert!(f.quantized);
        assert!(f.weights.iter().all(|v| v.abs() < 1.0));
        // the fold-back gain restores the original readout scale
        let y = readout(&[1.0, 1.0], &f).unwrap();
        assert!((y - 1.2).abs() < 1e-6, "y={y}");
    }

    #[test]
    fn autonomous_zero_weights_emit_zero() {
        let config = tiny_config(6);
        let weights = ReadoutWeights {
            weights: vec![0.0; 6],
            regularization: 0.0,
            quantized: false,
            output_gain: 1.0,
        };
        let warmup = TimeSeries::steps((0..128).map(|k| (0.1 * k as f64).sin()).collect());
        let mut rt = config.runtime().unwrap();
        let run = autonomous_run(&config, &weights, &warmup, 50, &mut rt).unwrap();
        assert!(run.output.values.iter().all(|&y| y == 0.0));
        assert!(!run.diverged);
        assert_eq!(run.output.len(), 50);
    }

    #[test]
    fn experiment_is_deterministic() {
        let spec = ExperimentSpec {
            task: TaskSpec::Sine { nu: 0.1 },
            reservoir: tiny_config(30),
            train_len: 400,
            warmup_len: 128,
            autonomous_len: 300,
            mse_threshold: 1e-3,
            horizon_window: 1,
            ridge: RidgeSelect::Grid,
            train_state_noise: 0.0,
            train_input_noise: 0.0,
            seeds: Seeds {
                mask_seed: 5,
                noise_seed: 6,
                task_seed: 7,
            },
        };
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a.output.values, b.output.values);
        assert_eq!(a.weights_digest, b.weights_digest);
        assert_eq!(a.prediction_horizon, b.prediction_horizon);
    }

    #[test]
    fn open_loop_replay_reproduces_training_residuals() {
        // Replaying the teacher with trained weights must show exactly the
        // training residuals (idealized tier, deterministic).
        let spec = ExperimentSpec {
            task: TaskSpec::Sine { nu: 0.15 },
            reservoir: tiny_config(20),
            train_len: 300,
            warmup_len: 16,
            autonomous_len: 10,
            mse_threshold: 1e-3,
            horizon_window: 1,
            ridge: RidgeSelect::Fixed(1e-8),
            train_state_noise: 0.0,
            train_input_noise: 0.0,
            seeds: Seeds {
                mask_seed: 1,
                noise_seed: 2,
                task_seed: 3,
            },
        };
        let report = run_experiment(&spec).unwrap();

        let mut config = spec.reservoir.clone();
        config.fidelity.noise_seed = spec.seeds.noise_seed;
        let mut mask_rng = ChaCha12Rng::seed_from_u64(spec.seeds.mask_seed);
        config.mask = generate_mask(config.n_nodes, 0, &mut mask_rng).unwrap();
        let teacher = spec
            .task
            .generate(
                spec.train_len + spec.warmup_len + spec.autonomous_len,
                spec.train_len,
                spec.seeds.task_seed,
            )
            .unwrap();
        let inputs = teacher.slice(0, spec.train_len - 1);
        let mut rt = config.runtime().unwrap();
        let (traj, _) = drive(&config, &inputs, ReservoirState::zero(20), &mut rt).unwrap();
        let washout = spec.task.washout().min(spec.train_len / 4);
        let mut replay_sq = 0.0;
        let mut count = 0usize;
        for k in washout..traj.n_rows() {
            let y = readout(&traj.states[k], &report.weights).unwrap();
            let d = teacher.values[k + 1];
            replay_sq += (y - d) * (y - d);
            count += 1;
        }
        let replay_mse = replay_sq / count as f64;
        assert!(
            (replay_mse - report.train_mse).abs() < 1e-15,
            "{replay_mse} vs {}",
            report.train_mse
        );
    }

    #[test]
    fn wing_transition_counting() {
        let series = vec![0.1, 0.05, -0.1, -0.2, 0.15, 0.2, -0.3];
        assert_eq!(wing_transitions(&series, 0.02), 3);
        // hysteresis: wiggles inside the band do not count
        let wiggle = vec![0.1, 0.01, -0.01, 0.01, 0.1];
        assert_eq!(wing_transitions(&wiggle, 0.02), 0);
    }
}
