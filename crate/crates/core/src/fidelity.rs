//! Hardware-fidelity tiers: fixed-point quantization, state noise and the
//! amplifier's high-pass, matching the physical signal path of the
//! opto-electronic loop.
//!
//! Three tiers are modeled. `Idealized` is the pure sine-ring map with a
//! float readout. The experimental tiers add the DAC on the masked input,
//! Gaussian state noise (noisy tier only), the readout-path ADC plus
//! digital post-gain, and a near-DC high-pass on the feedback signal.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Idealized,
    NoiselessExperimental,
    NoisyExperimental,
}

/// Which imperfections the simulation applies, and at what resolution.
///
/// Bit widths follow the FPGA datapath: 14-bit ADC, 16-bit DAC, states
/// stored as 16-bit integers (1 sign + 15 fractional) and readout weights
/// as 25-bit (1 sign + 24 fractional). Acquired states are multiplied by
/// `digital_post_gain` before the readout so trained weights stay inside
/// ]-1, 1[.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FidelityConfig<T: Scalar> {
    pub tier: Tier,
    pub noise_std: T,
    pub adc_bits: u32,
    pub dac_bits: u32,
    pub state_bits: u32,
    pub weight_bits: u32,
    pub digital_post_gain: T,
    pub highpass_cutoff_relative: T,
    pub noise_seed: u64,
}

pub const DEFAULT_NOISE_STD: f64 = 2.0e-3;
pub const DEFAULT_HIGHPASS_CUTOFF: f64 = 1.0e-4;
pub const DEFAULT_DIGITAL_POST_GAIN: f64 = 8.0;

impl<T: Scalar> FidelityConfig<T> {
    pub fn idealized() -> Self {
        Self {
            tier: Tier::Idealized,
            noise_std: T::zero(),
            adc_bits: 14,
            dac_bits: 16,
            state_bits: 16,
            weight_bits: 25,
            digital_post_gain: T::of(DEFAULT_DIGITAL_POST_GAIN),
            highpass_cutoff_relative: T::zero(),
            noise_seed: 0,
        }
    }

    pub fn noiseless_experimental() -> Self {
        Self {
            tier: Tier::NoiselessExperimental,
            noise_std: T::zero(),
            highpass_cutoff_relative: T::of(DEFAULT_HIGHPASS_CUTOFF),
            ..Self::idealized()
        }
    }

    pub fn noisy_experimental(noise_std: T, noise_seed: u64) -> Self {
        Self {
            tier: Tier::NoisyExperimental,
            noise_std,
            noise_seed,
            ..Self::noiseless_experimental()
        }
    }

    pub fn is_experimental(&self) -> bool {
        self.tier != Tier::Idealized
    }

    /// Innovation injected per state per step. Zero except in the noisy
    /// tier, so the noiseless tier is exactly the noisy tier with zero
    /// sigma.
    ///
    /// `noise_std` is the noise level measured on the states themselves;
    /// recirculation through the loop builds the per-step innovation up by
    /// about a factor of two at the usual feedback gains, so half of it is
    /// injected each step.
    pub fn effective_noise_std(&self) -> T {
        match self.tier {
            Tier::NoisyExperimental => self.noise_std * T::of(0.5),
            _ => T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.noise_std.is_finite() || self.noise_std < T::zero() {
            return Err(Error::invalid("noise_std must be finite and non-negative"));
        }
        if self.tier == Tier::NoisyExperimental && self.noise_std <= T::zero() {
            return Err(Error::invalid("noisy_experimental tier requires noise_std > 0"));
        }
        for (name, bits) in [
            ("adc_bits", self.adc_bits),
            ("dac_bits", self.dac_bits),
            ("state_bits", self.state_bits),
            ("weight_bits", self.weight_bits),
        ] {
            if bits < 2 || bits > 52 {
                return Err(Error::invalid(format!("{name} must lie in [2, 52]")));
            }
        }
        let half = T::of(0.5);
        if self.highpass_cutoff_relative < T::zero() || self.highpass_cutoff_relative >= half {
            return Err(Error::invalid("highpass_cutoff_relative must lie in [0, 0.5)"));
        }
        Ok(())
    }
}

/// Rounds `value` to a signed fixed-point grid with `total_bits` bits of
/// which `fractional_bits` sit right of the radix point, saturating at the
/// two's-complement range.
pub fn quantize<T: Scalar>(value: T, total_bits: u32, fractional_bits: u32) -> Result<T> {
    if !value.is_finite() {
        return Err(Error::invalid("cannot quantize a non-finite value"));
    }
    if total_bits < fractional_bits + 1 {
        return Err(Error::invalid("total_bits must be at least fractional_bits + 1"));
    }
    let scale = T::of((1u64 << fractional_bits) as f64);
    let max_code = T::of(((1u64 << (total_bits - 1)) - 1) as f64);
    let min_code = -T::of((1u64 << (total_bits - 1)) as f64);
    let code = (value * scale).round().max(min_code).min(max_code);
    Ok(code / scale)
}

/// Adds i.i.d. zero-mean Gaussian noise of standard deviation `noise_std`
/// to every entry, drawing from the given stream.
pub fn apply_noise<T: Scalar, R: rand::Rng + ?Sized>(
    values: &[T],
    noise_std: T,
    rng: &mut R,
) -> Result<Vec<T>> {
    if !noise_std.is_finite() || noise_std < T::zero() {
        return Err(Error::invalid("noise_std must be finite and non-negative"));
    }
    if noise_std == T::zero() {
        return Ok(values.to_vec());
    }
    Ok(values
        .iter()
        .map(|&v| v + noise_std * T::standard_normal(rng))
        .collect())
}

/// First-order discrete high-pass section. A cutoff of zero disables it.
#[derive(Debug, Clone)]
pub struct HighPass<T: Scalar> {
    coeff: T,
    prev_in: T,
    prev_out: T,
    enabled: bool,
}

impl<T: Scalar> HighPass<T> {
    /// `cutoff_relative` is the -3 dB point as a fraction of the sample
    /// rate of the stream this section will process.
    pub fn new(cutoff_relative: T) -> Result<Self> {
        if cutoff_relative < T::zero() || cutoff_relative >= T::of(0.5) {
            return Err(Error::invalid("cutoff_relative must lie in [0, 0.5)"));
        }
        let two_pi = T::of(2.0) * T::PI();
        let coeff = T::one() / (T::one() + two_pi * cutoff_relative);
        Ok(Self {
            coeff,
            prev_in: T::zero(),
            prev_out: T::zero(),
            enabled: cutoff_relative > T::zero(),
        })
    }

    pub fn process(&mut self, x: T) -> T {
        if !self.enabled {
            return x;
        }
        let y = self.coeff * (self.prev_out + x - self.prev_in);
        self.prev_in = x;
        self.prev_out = y;
        y
    }

    /// Gain magnitude at `freq_relative` (cycles per sample); test oracle
    /// and reporting aid.
    pub fn gain_at(&self, freq_relative: T) -> T {
        if !self.enabled {
            return T::one();
        }
        let a = self.coeff;
        let omega = T::of(2.0) * T::PI() * freq_relative;
        let (sin, cos) = omega.sin_cos();
        let num = a * ((T::one() - cos) * (T::one() - cos) + sin * sin).sqrt();
        let den = ((T::one() - a * cos) * (T::one() - a * cos) + (a * sin) * (a * sin)).sqrt();
        num / den
    }
}

/// Applies the first-order high-pass across a whole series (1 sample per
/// reservoir step). `cutoff_relative == 0` returns the input unchanged.
pub fn high_pass<T: Scalar>(series: &TimeSeries<T>, cutoff_relative: T) -> Result<TimeSeries<T>> {
    let mut section = HighPass::new(cutoff_relative)?;
    let values = series.values.iter().map(|&v| section.process(v)).collect();
    Ok(TimeSeries {
        values,
        semantics: series.semantics,
        dt: series.dt,
    })
}

/// Signal-to-noise ratio in decibels: 10 log10(RMS_signal^2 / RMS_noise^2).
pub fn snr_db<T: Scalar>(signal: &[T], noise: &[T]) -> Result<T> {
    if signal.is_empty() || noise.is_empty() {
        return Err(Error::invalid("snr_db needs non-empty sequences"));
    }
    let rms = |xs: &[T]| {
        let sum: T = xs.iter().map(|&x| x * x).sum();
        (sum / T::from_usize_exact(xs.len())).sqrt()
    };
    let rms_noise = rms(noise);
    if rms_noise == T::zero() {
        return Err(Error::UndefinedSnr);
    }
    let ratio = rms(signal) / rms_noise;
    Ok(T::of(20.0) * ratio.log10())
}

/// Feedback strength expressed as attenuator decibels relative to
/// `alpha_ref`: A = -20 log10(alpha / alpha_ref). Reporting aid only; the
/// reference is a loop-calibration constant.
pub fn attenuation_db<T: Scalar>(alpha: T, alpha_ref: T) -> T {
    -T::of(20.0) * (alpha / alpha_ref).log10()
}

/// Default attenuator calibration: 4.25 dB maps to alpha = 0.95.
pub const DEFAULT_ALPHA_REF: f64 = 1.5560;

/// Per-run mutable fidelity state: the seeded noise stream plus the
/// high-pass section running over the serialized per-node feedback signal.
#[derive(Debug, Clone)]
pub struct FidelityRuntime<T: Scalar> {
    pub(crate) rng: ChaCha12Rng,
    pub(crate) feedback_filter: HighPass<T>,
    pub(crate) noise_std: T,
}

impl<T: Scalar> FidelityRuntime<T> {
    /// `n_nodes` converts the per-timestep cutoff into the per-node-sample
    /// cutoff of the serialized stream the amplifier actually sees.
    pub fn new(config: &FidelityConfig<T>, n_nodes: usize) -> Result<Self> {
        config.validate()?;
        let cutoff = if config.is_experimental() {
            config.highpass_cutoff_relative / T::from_usize_exact(n_nodes.max(1))
        } else {
            T::zero()
        };
        Ok(Self {
            rng: ChaCha12Rng::seed_from_u64(config.noise_seed),
            feedback_filter: HighPass::new(cutoff)?,
            noise_std: config.effective_noise_std(),
        })
    }

    /// Restarts the stream (new seed), keeping the filter configuration.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha12Rng::seed_from_u64(seed);
    }
}
