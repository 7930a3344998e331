//! Ring-topology sine reservoir.
//!
//! The update is
//!
//! ```text
//! x_0(n+1) = sin(alpha * x_{N-1}(n-1) + beta * M_0 * I(n))
//! x_i(n+1) = sin(alpha * x_{i-1}(n)   + beta * M_i * I(n)),  i >= 1
//! ```
//!
//! Node 0 reads the last node one extra step back: in the time-multiplexed
//! loop its neighbour value is still in flight when the new step starts.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fidelity::{quantize, FidelityConfig, FidelityRuntime};
use crate::scalar::Scalar;
use crate::series::TimeSeries;

/// Static description of one reservoir: size, gains, input mask and the
/// fidelity tier its updates run under.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReservoirConfig<T: Scalar> {
    pub n_nodes: usize,
    pub feedback_gain: T,
    pub input_gain: T,
    pub mask: Vec<T>,
    pub n_zeroed_leading: usize,
    pub fidelity: FidelityConfig<T>,
    /// Physical roundtrip time in seconds; metadata for frequency reports.
    pub roundtrip_time_s: T,
}

/// Default roundtrip times for the two fibre spools used with small and
/// large reservoirs.
pub fn default_roundtrip_s(n_nodes: usize) -> f64 {
    if n_nodes <= 300 {
        7.93e-6
    } else {
        49.2e-6
    }
}

impl<T: Scalar> ReservoirConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 {
            return Err(Error::invalid("n_nodes must be positive"));
        }
        if self.mask.len() != self.n_nodes {
            return Err(Error::LengthMismatch {
                left: self.mask.len(),
                right: self.n_nodes,
            });
        }
        if self.n_zeroed_leading >= self.n_nodes {
            return Err(Error::invalid("n_zeroed_leading must be smaller than n_nodes"));
        }
        if !self.feedback_gain.is_finite() || !self.input_gain.is_finite() {
            return Err(Error::invalid("gains must be finite"));
        }
        let one = T::one();
        for (i, &m) in self.mask.iter().enumerate() {
            if !m.is_finite() || m < -one || m > one {
                return Err(Error::invalid(format!("mask[{i}] outside [-1, 1]")));
            }
            if i < self.n_zeroed_leading && m != T::zero() {
                return Err(Error::invalid(format!("mask[{i}] must be zero (leading)")));
            }
        }
        if !self.roundtrip_time_s.is_finite() || self.roundtrip_time_s <= T::zero() {
            return Err(Error::invalid("roundtrip_time_s must be positive"));
        }
        self.fidelity.validate()
    }

    pub fn runtime(&self) -> Result<FidelityRuntime<T>> {
        FidelityRuntime::new(&self.fidelity, self.n_nodes)
    }
}

/// Dynamic state: current node values, the one-extra-step-delayed last
/// node, and the step counter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReservoirState<T: Scalar> {
    pub current: Vec<T>,
    pub previous_last: T,
    pub step_index: u64,
}

impl<T: Scalar> ReservoirState<T> {
    /// Quiescent start: all nodes and the delayed tap at zero.
    pub fn zero(n_nodes: usize) -> Self {
        Self {
            current: vec![T::zero(); n_nodes],
            previous_last: T::zero(),
            step_index: 0,
        }
    }
}

/// Teacher-driven record of states, one row per input sample. Rows hold
/// the states as the readout sees them (post-acquisition on experimental
/// tiers), which is what training consumes.
#[derive(Debug, Clone)]
pub struct StateTrajectory<T: Scalar> {
    pub states: Vec<Vec<T>>,
    pub inputs: TimeSeries<T>,
}

impl<T: Scalar> StateTrajectory<T> {
    pub fn n_rows(&self) -> usize {
        self.states.len()
    }
}

/// Draws the input mask: `n_zeroed_leading` zeros, then i.i.d. uniform
/// values on [-1, 1]. The leading zeros model the nodes the fed-back
/// output cannot reach in time within one step.
pub fn generate_mask<T: Scalar, R: Rng + ?Sized>(
    n_nodes: usize,
    n_zeroed_leading: usize,
    rng: &mut R,
) -> Result<Vec<T>> {
    if n_nodes == 0 {
        return Err(Error::invalid("n_nodes must be positive"));
    }
    if n_zeroed_leading >= n_nodes {
        return Err(Error::invalid("n_zeroed_leading must be smaller than n_nodes"));
    }
    let mut mask = vec![T::zero(); n_nodes];
    for slot in mask.iter_mut().skip(n_zeroed_leading) {
        *slot = rng.random_range(-T::one()..=T::one());
    }
    Ok(mask)
}

/// One reservoir update plus the acquired (readout-path) copy of the new
/// state. On the idealized tier the acquired state equals the raw state;
/// on experimental tiers it passes the ADC, the state register and the
/// digital post-gain.
pub struct StepOutcome<T: Scalar> {
    pub state: ReservoirState<T>,
    pub acquired: Vec<T>,
}

pub fn reservoir_step<T: Scalar>(
    state: &ReservoirState<T>,
    input: T,
    config: &ReservoirConfig<T>,
    runtime: &mut FidelityRuntime<T>,
) -> Result<StepOutcome<T>> {
    if !input.is_finite() {
        return Err(Error::invalid("reservoir input must be finite"));
    }
    if state.current.len() != config.n_nodes {
        return Err(Error::LengthMismatch {
            left: state.current.len(),
            right: config.n_nodes,
        });
    }
    let n = config.n_nodes;
    let alpha = config.feedback_gain;
    let beta = config.input_gain;
    let experimental = config.fidelity.is_experimental();
    let sigma = runtime.noise_std;

    let mut next = Vec::with_capacity(n);
    for i in 0..n {
        let neighbour = if i == 0 {
            state.previous_last
        } else {
            state.current[i - 1]
        };
        // The amplifier high-passes the serialized feedback stream.
        let feedback = runtime.feedback_filter.process(alpha * neighbour);
        let masked = config.mask[i] * input;
        let injected = if experimental {
            beta * quantize(masked, config.fidelity.dac_bits, config.fidelity.dac_bits - 1)?
        } else {
            beta * masked
        };
        let mut x = (feedback + injected).sin();
        if sigma > T::zero() {
            x += sigma * T::standard_normal(&mut runtime.rng);
        }
        next.push(x);
    }

    let acquired = acquire(&next, &config.fidelity)?;
    Ok(StepOutcome {
        state: ReservoirState {
            previous_last: state.current[n - 1],
            current: next,
            step_index: state.step_index + 1,
        },
        acquired,
    })
}

/// Readout-path view of a raw state vector: ADC quantization, the 16-bit
/// state register, then the digital post-gain. The register step is taken
/// before the gain; amplified values are stored with the radix point
/// shifted, so the grid is the same and saturation at full scale never
/// clips the dynamics.
pub fn acquire<T: Scalar>(raw: &[T], fidelity: &FidelityConfig<T>) -> Result<Vec<T>> {
    if !fidelity.is_experimental() {
        return Ok(raw.to_vec());
    }
    let gain = fidelity.digital_post_gain;
    raw.iter()
        .map(|&x| {
            let adc = quantize(x, fidelity.adc_bits, fidelity.adc_bits - 1)?;
            let stored = quantize(adc, fidelity.state_bits, fidelity.state_bits - 1)?;
            Ok(gain * stored)
        })
        .collect()
}

/// Applies `reservoir_step` once per input sample, recording the acquired
/// state after each update. Row `k` is the state after consuming
/// `inputs[k]`.
pub fn drive<T: Scalar>(
    config: &ReservoirConfig<T>,
    inputs: &TimeSeries<T>,
    initial_state: ReservoirState<T>,
    runtime: &mut FidelityRuntime<T>,
) -> Result<(StateTrajectory<T>, ReservoirState<T>)> {
    if inputs.is_empty() {
        return Err(Error::invalid("drive needs a non-empty input series"));
    }
    config.validate()?;
    let mut state = initial_state;
    let mut rows = Vec::with_capacity(inputs.len());
    for &u in &inputs.values {
        let outcome = reservoir_step(&state, u, config, runtime)?;
        state = outcome.state;
        rows.push(outcome.acquired);
    }
    Ok((
        StateTrajectory {
            states: rows,
            inputs: inputs.clone(),
        },
        state,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fidelity::Tier;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn idealized_config(n: usize, alpha: f64, beta: f64, mask: Vec<f64>) -> ReservoirConfig<f64> {
        ReservoirConfig {
            n_nodes: n,
            feedback_gain: alpha,
            input_gain: beta,
            mask,
            n_zeroed_leading: 0,
            fidelity: FidelityConfig::idealized(),
            roundtrip_time_s: default_roundtrip_s(n),
        }
    }

    #[test]
    fn mask_respects_zeroing_and_bounds() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let mask: Vec<f64> = generate_mask(100, 23, &mut rng).unwrap();
        assert_eq!(mask.len(), 100);
        assert!(mask[..23].iter().all(|&m| m == 0.0));
        assert!(mask[23..].iter().all(|&m| (-1.0..=1.0).contains(&m)));
        // at least one nonzero in the tail
        assert!(mask[23..].iter().any(|&m| m != 0.0));

        let small: Vec<f64> = generate_mask(4, 0, &mut rng).unwrap();
        assert!(small.iter().all(|&m| (-1.0..=1.0).contains(&m)));

        let nearly_all: Vec<f64> = generate_mask(5, 4, &mut rng).unwrap();
        assert!(nearly_all[..4].iter().all(|&m| m == 0.0));
        assert!((-1.0..=1.0).contains(&nearly_all[4]));

        assert!(generate_mask::<f64, _>(5, 5, &mut rng).is_err());
    }

    #[test]
    fn mask_is_deterministic_per_seed() {
        let a: Vec<f64> = generate_mask(50, 3, &mut ChaCha12Rng::seed_from_u64(9)).unwrap();
        let b: Vec<f64> = generate_mask(50, 3, &mut ChaCha12Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_gains_collapse_to_zero() {
        let config = idealized_config(4, 0.0, 0.0, vec![1.0; 4]);
        let mut rt = config.runtime().unwrap();
        let state = ReservoirState {
            current: vec![0.3, -0.8, 0.5, 0.1],
            previous_last: 0.9,
            step_index: 0,
        };
        let out = reservoir_step(&state, 0.7, &config, &mut rt).unwrap();
        assert!(out.state.current.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pure_input_drives_sine_of_masked_input() {
        let config = idealized_config(3, 0.0, 1.0, vec![1.0; 3]);
        let mut rt = config.runtime().unwrap();
        let state = ReservoirState::zero(3);
        let out = reservoir_step(&state, std::f64::consts::FRAC_PI_6, &config, &mut rt).unwrap();
        for &x in &out.state.current {
            assert!((x - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn ring_shift_uses_delayed_last_node() {
        // alpha=1, beta=0, N=3, current=(0.3, 0, 0), previous_last=0.2:
        // next = (sin(0.2), sin(0.3), sin(0)).
        let config = idealized_config(3, 1.0, 0.0, vec![0.0; 3]);
        let mut rt = config.runtime().unwrap();
        let state = ReservoirState {
            current: vec![0.3, 0.0, 0.0],
            previous_last: 0.2,
            step_index: 5,
        };
        let out = reservoir_step(&state, 0.0, &config, &mut rt).unwrap();
        assert_eq!(
            out.state.current,
            vec![0.2f64.sin(), 0.3f64.sin(), 0.0f64.sin()]
        );
        assert_eq!(out.state.previous_last, 0.0); // old current[2]
        assert_eq!(out.state.step_index, 6);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let config = idealized_config(2, 0.5, 0.5, vec![1.0, -1.0]);
        let mut rt = config.runtime().unwrap();
        let state = ReservoirState::zero(2);
        assert!(reservoir_step(&state, f64::NAN, &config, &mut rt).is_err());
    }

    #[test]
    fn drive_shape_and_zero_fixed_point() {
        let config = idealized_config(4, 0.9, 0.4, vec![0.5, -0.5, 1.0, -1.0]);
        let mut rt = config.runtime().unwrap();
        let inputs = TimeSeries::steps(vec![0.0; 17]);
        let (traj, _) = drive(&config, &inputs, ReservoirState::zero(4), &mut rt).unwrap();
        assert_eq!(traj.n_rows(), 17);
        assert!(traj.states.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn drive_is_deterministic_under_noise() {
        let mut config = idealized_config(8, 0.9, 0.3, vec![0.4; 8]);
        config.fidelity = FidelityConfig::noisy_experimental(2e-3, 77);
        let inputs = TimeSeries::steps((0..50).map(|k| (0.1 * k as f64).sin()).collect());
        let run = |cfg: &ReservoirConfig<f64>| {
            let mut rt = cfg.runtime().unwrap();
            drive(cfg, &inputs, ReservoirState::zero(8), &mut rt)
                .unwrap()
                .0
        };
        let a = run(&config);
        let b = run(&config);
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn idealized_states_stay_in_unit_interval() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mask = generate_mask(16, 0, &mut rng).unwrap();
        let config = idealized_config(16, 1.1, 0.8, mask);
        let mut rt = config.runtime().unwrap();
        let inputs = TimeSeries::steps((0..200).map(|k| (0.3 * k as f64).sin()).collect());
        let (traj, _) = drive(&config, &inputs, ReservoirState::zero(16), &mut rt).unwrap();
        assert!(traj.states.iter().flatten().all(|&x| (-1.0..=1.0).contains(&x)));
    }

    #[test]
    fn masked_zero_nodes_ignore_input_within_a_step() {
        let mask = vec![0.0, 0.0, 0.7, -0.3];
        let config = idealized_config(4, 0.8, 0.6, mask);
        let state = ReservoirState {
            current: vec![0.1, -0.2, 0.3, -0.4],
            previous_last: 0.25,
            step_index: 0,
        };
        let mut rt = config.runtime().unwrap();
        let a = reservoir_step(&state, 0.9, &config, &mut rt).unwrap();
        let mut rt = config.runtime().unwrap();
        let b = reservoir_step(&state, -0.4, &config, &mut rt).unwrap();
        assert_eq!(a.state.current[0], b.state.current[0]);
        assert_eq!(a.state.current[1], b.state.current[1]);
        assert_ne!(a.state.current[2], b.state.current[2]);
    }

    #[test]
    fn acquired_states_are_gain_scaled_and_quantized() {
        let fid = FidelityConfig::<f64> {
            tier: Tier::NoiselessExperimental,
            ..FidelityConfig::noiseless_experimental()
        };
        let acq = acquire(&[0.5, -0.123456789], &fid).unwrap();
        assert_eq!(acq[0], 4.0); // 8 * 0.5, exactly representable
        let grid = (1u64 << 13) as f64; // ADC grid dominates
        let expected = (-0.123456789f64 * grid).round() / grid * 8.0;
        assert!((acq[1] - expected).abs() < 1e-15);
    }

    #[test]
    fn config_validation_catches_bad_masks() {
        let mut config = idealized_config(3, 0.9, 0.1, vec![0.0, 0.5, 1.5]);
        assert!(config.validate().is_err());
        config.mask = vec![0.1, 0.5, 0.9];
        config.n_zeroed_leading = 1;
        assert!(config.validate().is_err()); // leading entry not zero
        config.mask[0] = 0.0;
        assert!(config.validate().is_ok());
    }

    #[test]
    fn works_at_f32_precision() {
        let config = ReservoirConfig::<f32> {
            n_nodes: 4,
            feedback_gain: 0.9,
            input_gain: 0.3,
            mask: vec![0.5, -0.5, 0.25, -0.25],
            n_zeroed_leading: 0,
            fidelity: FidelityConfig::idealized(),
            roundtrip_time_s: 7.93e-6,
        };
        let mut rt = config.runtime().unwrap();
        let inputs = TimeSeries {
            values: (0..20).map(|k| (0.1 * k as f32).sin()).collect(),
            semantics: crate::series::TimestepSemantics::ReservoirStep,
            dt: 1.0f32,
        };
        let (traj, _) = drive(&config, &inputs, ReservoirState::zero(4), &mut rt).unwrap();
        assert_eq!(traj.n_rows(), 20);
    }
}
