//! Teacher/target signal generators: sine waves, periodic random patterns,
//! and the Mackey-Glass and Lorenz chaotic systems.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::series::{TimeSeries, TimestepSemantics};

/// u(n) = sin(nu * n).
pub fn gen_sine<T: Scalar>(nu: T, length: usize) -> TimeSeries<T> {
    let values = (0..length)
        .map(|n| (nu * T::from_usize_exact(n)).sin())
        .collect();
    TimeSeries::steps(values)
}

/// Physical frequency of a relative frequency `nu` given the loop
/// roundtrip time T: f = nu / (2 pi T), in Hz.
pub fn physical_frequency<T: Scalar>(nu: T, roundtrip_time_s: T) -> T {
    nu / (T::of(2.0) * T::PI() * roundtrip_time_s)
}

/// A random pattern of `pattern_len` values drawn uniformly from
/// [-0.5, 0.5], tiled periodically to `length` samples.
pub fn gen_pattern<T: Scalar, R: Rng + ?Sized>(
    pattern_len: usize,
    length: usize,
    rng: &mut R,
) -> Result<TimeSeries<T>> {
    if pattern_len == 0 {
        return Err(Error::invalid("pattern_len must be positive"));
    }
    if length < pattern_len {
        return Err(Error::invalid("length must be at least pattern_len"));
    }
    let half = T::of(0.5);
    let pattern: Vec<T> = (0..pattern_len)
        .map(|_| rng.random_range(-half..=half))
        .collect();
    let values = (0..length).map(|n| pattern[n % pattern_len]).collect();
    Ok(TimeSeries::steps(values))
}

/// Mackey-Glass delay-differential parameters:
/// dx/dt = beta * x(t - tau) / (1 + x(t - tau)^n) - gamma * x(t).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MackeyGlassParams<T: Scalar> {
    pub mg_beta: T,
    pub mg_gamma: T,
    pub mg_tau: T,
    pub mg_n: T,
    /// RK4 step; one sample per step. `mg_tau` must be a multiple of it.
    pub step: T,
}

impl<T: Scalar> Default for MackeyGlassParams<T> {
    fn default() -> Self {
        Self {
            mg_beta: T::of(0.2),
            mg_gamma: T::of(0.1),
            mg_tau: T::of(17.0),
            mg_n: T::of(10.0),
            step: T::one(),
        }
    }
}

impl<T: Scalar> MackeyGlassParams<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mg_beta", self.mg_beta),
            ("mg_gamma", self.mg_gamma),
            ("mg_tau", self.mg_tau),
            ("mg_n", self.mg_n),
            ("step", self.step),
        ] {
            if !v.is_finite() || v <= T::zero() {
                return Err(Error::invalid(format!("{name} must be strictly positive")));
            }
        }
        let ratio = self.mg_tau / self.step;
        if (ratio - ratio.round()).abs() > T::of(1e-9) {
            return Err(Error::invalid("mg_tau must be an integer multiple of step"));
        }
        // the interpolation stencil needs two grid points inside the delay
        if ratio.round() < T::of(2.0) {
            return Err(Error::invalid("mg_tau must span at least two steps"));
        }
        Ok(())
    }

    fn delay_steps(&self) -> usize {
        (self.mg_tau / self.step)
            .round()
            .to_usize()
            .expect("delay fits usize")
    }
}

/// Initial history for the delay equation, covering [-tau - step, 0].
#[derive(Debug, Clone)]
pub enum MgHistory<T: Scalar> {
    Constant(T),
    /// Oldest sample first; must hold at least tau/step + 2 points.
    Samples(Vec<T>),
}

/// Integrates Mackey-Glass with fixed-step RK4. Delayed values at stage
/// midpoints come from 4-point Lagrange interpolation of the stored delay
/// buffer, matching RK4's local error order. Returns `n_samples` values
/// after time zero.
pub fn integrate_mackey_glass<T: Scalar>(
    params: &MackeyGlassParams<T>,
    n_samples: usize,
    history: &MgHistory<T>,
) -> Result<TimeSeries<T>> {
    params.validate()?;
    let d = params.delay_steps();
    // buffer[k] holds x at t = (k - d - 1) * step, so the newest entry is
    // the current value and the oldest is one step before -tau.
    let mut buffer: Vec<T> = match history {
        MgHistory::Constant(x0) => {
            if !x0.is_finite() {
                return Err(Error::invalid("history constant must be finite"));
            }
            vec![*x0; d + 2]
        }
        MgHistory::Samples(samples) => {
            if samples.len() < d + 2 {
                return Err(Error::invalid(format!(
                    "history must cover tau plus one step: need {} samples, got {}",
                    d + 2,
                    samples.len()
                )));
            }
            samples[samples.len() - (d + 2)..].to_vec()
        }
    };

    let h = params.step;
    let rhs = |x: T, x_delayed: T| {
        params.mg_beta * x_delayed / (T::one() + x_delayed.powf(params.mg_n)) - params.mg_gamma * x
    };
    // Lagrange interpolation at the midpoint of the central interval.
    let midpoint = |p0: T, p1: T, p2: T, p3: T| {
        (T::of(9.0) * (p1 + p2) - p0 - p3) / T::of(16.0)
    };

    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let len = buffer.len();
        let x = buffer[len - 1];
        // x(t - tau) sits d entries back from the newest.
        let xd0 = buffer[len - 1 - d];
        let xd_half = midpoint(
            buffer[len - 2 - d],
            buffer[len - 1 - d],
            buffer[len - d],
            buffer[len + 1 - d],
        );
        let xd1 = buffer[len - d];

        let k1 = rhs(x, xd0);
        let k2 = rhs(x + h * k1 / T::of(2.0), xd_half);
        let k3 = rhs(x + h * k2 / T::of(2.0), xd_half);
        let k4 = rhs(x + h * k3, xd1);
        let next = x + h * (k1 + T::of(2.0) * k2 + T::of(2.0) * k3 + k4) / T::of(6.0);
        if !next.is_finite() {
            return Err(Error::invalid("Mackey-Glass integration diverged"));
        }
        buffer.push(next);
        if buffer.len() > d + 2 {
            buffer.remove(0);
        }
        out.push(next);
    }
    TimeSeries::new(out, TimestepSemantics::MgTimeUnit, h)
}

/// Lorenz system parameters: dx/dt = sigma (y - x), dy/dt = -xz + rx - y,
/// dz/dt = xy - bz.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LorenzParams<T: Scalar> {
    pub sigma: T,
    pub r: T,
    pub b: T,
    pub dt: T,
    /// The x teacher series is x * x_scale.
    pub x_scale: T,
    /// Leading samples dropped as the transient onto the attractor.
    pub discard_prefix: usize,
}

impl<T: Scalar> Default for LorenzParams<T> {
    fn default() -> Self {
        Self {
            sigma: T::of(10.0),
            r: T::of(28.0),
            b: T::of(8.0 / 3.0),
            dt: T::of(0.02),
            x_scale: T::of(0.01),
            discard_prefix: 1000,
        }
    }
}

impl<T: Scalar> LorenzParams<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma", self.sigma),
            ("r", self.r),
            ("b", self.b),
            ("dt", self.dt),
            ("x_scale", self.x_scale),
        ] {
            if !v.is_finite() || v <= T::zero() {
                return Err(Error::invalid(format!("{name} must be strictly positive")));
            }
        }
        Ok(())
    }
}

/// Raw coordinate trajectories plus the scaled-x teacher series.
#[derive(Debug, Clone)]
pub struct LorenzTrajectory<T: Scalar> {
    pub x: TimeSeries<T>,
    pub y: TimeSeries<T>,
    pub z: TimeSeries<T>,
    pub teacher: TimeSeries<T>,
}

/// Integrates the Lorenz system with classical fixed-step RK4 and drops
/// the first `discard_prefix` samples. `n_samples` counts integration
/// steps before the discard.
pub fn integrate_lorenz<T: Scalar>(
    params: &LorenzParams<T>,
    n_samples: usize,
    init: (T, T, T),
) -> Result<LorenzTrajectory<T>> {
    params.validate()?;
    if n_samples <= params.discard_prefix {
        return Err(Error::invalid("n_samples must exceed discard_prefix"));
    }
    let rhs = |s: [T; 3]| {
        [
            params.sigma * (s[1] - s[0]),
            -s[0] * s[2] + params.r * s[0] - s[1],
            s[0] * s[1] - params.b * s[2],
        ]
    };
    let h = params.dt;
    let two = T::of(2.0);
    let six = T::of(6.0);
    let mut s = [init.0, init.1, init.2];
    let kept = n_samples - params.discard_prefix;
    let mut xs = Vec::with_capacity(kept);
    let mut ys = Vec::with_capacity(kept);
    let mut zs = Vec::with_capacity(kept);
    for step in 0..n_samples {
        let k1 = rhs(s);
        let k2 = rhs(add_scaled(s, k1, h / two));
        let k3 = rhs(add_scaled(s, k2, h / two));
        let k4 = rhs(add_scaled(s, k3, h));
        for i in 0..3 {
            s[i] = s[i] + h * (k1[i] + two * k2[i] + two * k3[i] + k4[i]) / six;
            if !s[i].is_finite() {
                return Err(Error::invalid("Lorenz integration diverged"));
            }
        }
        if step >= params.discard_prefix {
            xs.push(s[0]);
            ys.push(s[1]);
            zs.push(s[2]);
        }
    }
    let teacher_values: Vec<T> = xs.iter().map(|&x| x * params.x_scale).collect();
    Ok(LorenzTrajectory {
        x: TimeSeries::new(xs, TimestepSemantics::LorenzTimeUnit, h)?,
        y: TimeSeries::new(ys, TimestepSemantics::LorenzTimeUnit, h)?,
        z: TimeSeries::new(zs, TimestepSemantics::LorenzTimeUnit, h)?,
        teacher: TimeSeries::new(teacher_values, TimestepSemantics::LorenzTimeUnit, h)?,
    })
}

fn add_scaled<T: Scalar>(s: [T; 3], k: [T; 3], f: T) -> [T; 3] {
    [s[0] + f * k[0], s[1] + f * k[1], s[2] + f * k[2]]
}
