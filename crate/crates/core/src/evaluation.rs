//! Metrics for judging a (possibly noisy) emulator of a target signal:
//! prediction horizon, power spectra, largest-Lyapunov-exponent estimation,
//! Lorenz bitization and a small randomness battery.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::series::TimeSeries;

/// Number of autonomous steps before the windowed squared error first
/// exceeds `threshold`, plus the full averaged error curve. With
/// `window == 1` this is the strict per-step rule; larger windows
/// reproduce the smoothed curves used for plotting.
pub fn prediction_horizon<T: Scalar>(
    output: &TimeSeries<T>,
    target: &TimeSeries<T>,
    threshold: T,
    window: usize,
) -> Result<(usize, Vec<T>)> {
    if output.len() != target.len() {
        return Err(Error::LengthMismatch {
            left: output.len(),
            right: target.len(),
        });
    }
    if window == 0 {
        return Err(Error::invalid("window must be at least 1"));
    }
    if threshold <= T::zero() {
        return Err(Error::invalid("threshold must be positive"));
    }
    let sq: Vec<T> = output
        .values
        .iter()
        .zip(&target.values)
        .map(|(&y, &d)| (y - d) * (y - d))
        .collect();
    let curve = trailing_average(&sq, window);
    let horizon = curve
        .iter()
        .position(|&e| e > threshold)
        .unwrap_or(curve.len());
    Ok((horizon, curve))
}

/// Trailing moving average; the first window-1 entries average over the
/// available prefix.
fn trailing_average<T: Scalar>(values: &[T], window: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(values.len());
    let mut sum = T::zero();
    for (k, &v) in values.iter().enumerate() {
        sum += v;
        if k >= window {
            sum -= values[k - window];
        }
        let count = (k + 1).min(window);
        out.push(sum / T::from_usize_exact(count));
    }
    out
}

/// One-sided power spectrum on the grid k / n cycles per step,
/// k = 0 ..= n/2.
#[derive(Debug, Clone, Serialize)]
pub struct Spectrum<T: Scalar> {
    pub frequencies: Vec<T>,
    pub power: Vec<T>,
    pub smoothing_window: usize,
}

impl<T: Scalar> Spectrum<T> {
    /// Frequency of the strongest non-DC bin.
    pub fn peak(&self) -> (T, T) {
        let mut best = (T::zero(), T::zero());
        for (&f, &p) in self.frequencies.iter().zip(&self.power).skip(1) {
            if p > best.1 {
                best = (f, p);
            }
        }
        best
    }
}

/// Magnitude-squared spectrum of the mean-removed series, normalized to
/// unit total power, then moving-average smoothed.
pub fn power_spectrum<T: Scalar>(
    series: &TimeSeries<T>,
    smoothing_window: usize,
) -> Result<Spectrum<T>> {
    if smoothing_window == 0 {
        return Err(Error::invalid("smoothing_window must be at least 1"));
    }
    let n = series.len();
    if n < 2 * smoothing_window {
        return Err(Error::TooShort {
            needed: 2 * smoothing_window,
            got: n,
        });
    }
    let mean = series.values.iter().copied().sum::<T>() / T::from_usize_exact(n);
    let mut buffer: Vec<Complex<T>> = series
        .values
        .iter()
        .map(|&v| Complex::new(v - mean, T::zero()))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buffer);

    let bins = n / 2 + 1;
    let mut power: Vec<T> = buffer[..bins].iter().map(|c| c.norm_sqr()).collect();
    let total: T = power.iter().copied().sum();
    if total <= T::zero() {
        return Err(Error::invalid("series has zero spectral power"));
    }
    for p in &mut power {
        *p = *p / total;
    }
    let power = centered_average(&power, smoothing_window);
    let frequencies = (0..bins)
        .map(|k| T::from_usize_exact(k) / T::from_usize_exact(n))
        .collect();
    Ok(Spectrum {
        frequencies,
        power,
        smoothing_window,
    })
}

fn centered_average<T: Scalar>(values: &[T], window: usize) -> Vec<T> {
    if window <= 1 {
        return values.to_vec();
    }
    let n = values.len();
    let half = window / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + window - half).min(n);
            let sum: T = values[lo..hi].iter().copied().sum();
            sum / T::from_usize_exact(hi - lo)
        })
        .collect()
}

/// Cosine similarity of two spectra restricted to `band` (inclusive
/// frequency interval). Requires matching frequency grids.
pub fn spectrum_similarity<T: Scalar>(a: &Spectrum<T>, b: &Spectrum<T>, band: (T, T)) -> Result<T> {
    if a.frequencies.len() != b.frequencies.len() {
        return Err(Error::LengthMismatch {
            left: a.frequencies.len(),
            right: b.frequencies.len(),
        });
    }
    if a.frequencies
        .iter()
        .zip(&b.frequencies)
        .any(|(&fa, &fb)| (fa - fb).abs() > T::of(1e-12))
    {
        return Err(Error::invalid("spectra live on different frequency grids"));
    }
    let mut dot = T::zero();
    let mut na = T::zero();
    let mut nb = T::zero();
    for ((&f, &pa), &pb) in a.frequencies.iter().zip(&a.power).zip(&b.power) {
        if f < band.0 || f > band.1 {
            continue;
        }
        dot += pa * pb;
        na += pa * pa;
        nb += pb * pb;
    }
    if na == T::zero() || nb == T::zero() {
        return Err(Error::invalid("band carries no spectral power"));
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// Largest-Lyapunov estimate from nearest-neighbour log-divergence on a
/// delay embedding, with the average divergence curve it was fitted to.
#[derive(Debug, Clone, Serialize)]
pub struct LyapunovEstimate<T: Scalar> {
    pub per_step: T,
    pub per_native_unit: T,
    pub curve: Vec<T>,
}

/// Delay-embeds the series, pairs each reference point with its nearest
/// neighbour outside a temporal exclusion window, tracks the mean log
/// distance as both evolve, and fits a line over `fit_range` steps.
pub fn estimate_lyapunov<T: Scalar>(
    series: &TimeSeries<T>,
    embedding_dim: usize,
    embedding_lag: usize,
    fit_range: (usize, usize),
) -> Result<LyapunovEstimate<T>> {
    const MIN_LEN: usize = 5000;
    if series.len() < MIN_LEN {
        return Err(Error::TooShort {
            needed: MIN_LEN,
            got: series.len(),
        });
    }
    if embedding_dim < 2 || embedding_lag == 0 {
        return Err(Error::invalid("embedding_dim must be >= 2 and embedding_lag >= 1"));
    }
    let (fit_lo, fit_hi) = fit_range;
    if fit_lo >= fit_hi {
        return Err(Error::invalid("fit_range must be increasing"));
    }

    let values = &series.values;
    let span = (embedding_dim - 1) * embedding_lag;
    let follow = fit_hi + 1;
    let n_vectors = values.len() - span - follow;
    let dist2 = |i: usize, j: usize| {
        let mut s = T::zero();
        for d in 0..embedding_dim {
            let diff = values[i + d * embedding_lag] - values[j + d * embedding_lag];
            s += diff * diff;
        }
        s
    };

    // Temporal exclusion keeps trajectory-adjacent points from posing as
    // neighbours: at least the embedding span, or the dominant period.
    let theiler = span.max(dominant_period(values).unwrap_or(span)) + 1;

    // Subsample reference points to keep the search near-linear.
    let max_refs = 1500usize;
    let stride = (n_vectors / max_refs).max(1);

    let mut log_sums = vec![T::zero(); follow];
    let mut counts = vec![0usize; follow];
    let floor = T::of(1e-300);
    let mut i = 0;
    while i < n_vectors {
        let mut best = (T::infinity(), usize::MAX);
        let mut j = 0;
        while j < n_vectors {
            if i.abs_diff(j) >= theiler {
                let d2 = dist2(i, j);
                if d2 < best.0 {
                    best = (d2, j);
                }
            }
            j += 1;
        }
        if best.1 != usize::MAX && best.0 > T::zero() {
            let j = best.1;
            for t in 0..follow {
                let d2 = dist2(i + t, j + t);
                if d2 > T::zero() {
                    log_sums[t] += (d2.max(floor)).ln() * T::of(0.5);
                    counts[t] += 1;
                }
            }
        }
        i += stride;
    }

    let curve: Vec<T> = log_sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| {
            if c == 0 {
                T::zero()
            } else {
                s / T::from_usize_exact(c)
            }
        })
        .collect();

    // Least-squares slope of the mean log-distance over the fit window.
    let lo = fit_lo.min(curve.len() - 1);
    let hi = fit_hi.min(curve.len() - 1);
    let m = hi - lo + 1;
    let mf = T::from_usize_exact(m);
    let mut sx = T::zero();
    let mut sy = T::zero();
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (k, &y) in curve[lo..=hi].iter().enumerate() {
        let x = T::from_usize_exact(lo + k);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let denom = mf * sxx - sx * sx;
    if denom == T::zero() {
        return Err(Error::invalid("degenerate fit range"));
    }
    let per_step = (mf * sxy - sx * sy) / denom;
    Ok(LyapunovEstimate {
        per_step,
        per_native_unit: per_step / series.dt,
        curve,
    })
}

/// Dominant oscillation period in steps, from the autocorrelation's first
/// maximum after its first zero crossing. `None` for aperiodic-looking
/// series.
fn dominant_period<T: Scalar>(values: &[T]) -> Option<usize> {
    let n = values.len().min(4096);
    let xs = &values[..n];
    let mean = xs.iter().copied().sum::<T>() / T::from_usize_exact(n);
    let ac = |lag: usize| -> T {
        let mut s = T::zero();
        for k in 0..n - lag {
            s += (xs[k] - mean) * (xs[k + lag] - mean);
        }
        s
    };
    let c0 = ac(0);
    if c0 <= T::zero() {
        return None;
    }
    let max_lag = n / 4;
    let mut lag = 1;
    while lag < max_lag && ac(lag) > T::zero() {
        lag += 1;
    }
    if lag >= max_lag {
        return None;
    }
    let mut best = (T::neg_infinity(), lag);
    for l in lag..max_lag {
        let c = ac(l);
        if c > best.0 {
            best = (c, l);
        }
    }
    Some(best.1)
}

/// Bits extracted from a trajectory that hops between two attractor lobes.
#[derive(Debug, Clone, Serialize)]
pub struct BitSequence {
    pub bits: Vec<u8>,
    pub source_len: usize,
}

/// One bit per oscillation: at each local maximum of |x| above
/// `amplitude_threshold`, emit 1 on the positive lobe and 0 on the
/// negative one.
pub fn bitize_lorenz<T: Scalar>(
    x_series: &TimeSeries<T>,
    amplitude_threshold: T,
) -> Result<BitSequence> {
    if amplitude_threshold <= T::zero() {
        return Err(Error::invalid("amplitude_threshold must be positive"));
    }
    let v = &x_series.values;
    if v.is_empty() {
        return Err(Error::invalid("bitize needs a non-empty series"));
    }
    let mut bits = Vec::new();
    for k in 1..v.len().saturating_sub(1) {
        let (a, b, c) = (v[k - 1].abs(), v[k].abs(), v[k + 1].abs());
        if b > amplitude_threshold && b > a && b >= c {
            bits.push(if v[k] > T::zero() { 1u8 } else { 0u8 });
        }
    }
    if bits.is_empty() {
        return Err(Error::EmptyBitSequence);
    }
    Ok(BitSequence {
        bits,
        source_len: v.len(),
    })
}

/// ENT-style summary of a bit sequence, computed over whole bytes.
#[derive(Debug, Clone, Serialize)]
pub struct RandomnessReport<T: Scalar> {
    pub entropy_per_byte: T,
    pub compression_percent: T,
    pub mean_byte: T,
    pub monte_carlo_pi: Option<T>,
    pub serial_correlation: Option<T>,
    pub n_bytes: usize,
}

/// Packs bits into bytes (first bit is the most significant of the first
/// byte, leftover bits dropped) and runs the battery: Shannon entropy per
/// byte, the derived compressibility, mean byte, Monte Carlo pi from
/// consecutive 6-byte points, and the lag-1 Pearson correlation.
pub fn randomness_report<T: Scalar>(bits: &BitSequence) -> Result<RandomnessReport<T>> {
    if bits.bits.len() < 48 {
        return Err(Error::TooShort {
            needed: 48,
            got: bits.bits.len(),
        });
    }
    let bytes: Vec<u8> = bits
        .bits
        .chunks_exact(8)
        .map(|chunk| chunk.iter().fold(0u8, |acc, &b| (acc << 1) | (b & 1)))
        .collect();
    let n = bytes.len();
    let nf = T::from_usize_exact(n);

    let mut histogram = [0usize; 256];
    for &b in &bytes {
        histogram[b as usize] += 1;
    }
    let mut entropy = T::zero();
    for &count in histogram.iter().filter(|&&c| c > 0) {
        let p = T::from_usize_exact(count) / nf;
        entropy -= p * p.log2();
    }
    let compression = T::of(100.0) * (T::of(8.0) - entropy) / T::of(8.0);

    let mean_byte = bytes
        .iter()
        .map(|&b| T::of(b as f64))
        .sum::<T>()
        / nf;

    // Monte Carlo pi: (x, y) from 24-bit coordinates, inside the circle of
    // radius 2^24 - 1.
    let radius2: u64 = ((1u64 << 24) - 1).pow(2);
    let mut inside = 0u64;
    let mut points = 0u64;
    for chunk in bytes.chunks_exact(6) {
        let coord = |b: &[u8]| ((b[0] as u64) << 16) | ((b[1] as u64) << 8) | b[2] as u64;
        let x = coord(&chunk[0..3]);
        let y = coord(&chunk[3..6]);
        points += 1;
        if x * x + y * y <= radius2 {
            inside += 1;
        }
    }
    let monte_carlo_pi = if points > 0 {
        Some(T::of(4.0) * T::of(inside as f64) / T::of(points as f64))
    } else {
        None
    };

    let serial_correlation = pearson_lag1(&bytes);

    Ok(RandomnessReport {
        entropy_per_byte: entropy,
        compression_percent: compression,
        mean_byte,
        monte_carlo_pi,
        serial_correlation,
        n_bytes: n,
    })
}

/// Lag-1 Pearson correlation of the byte sequence; `None` when either
/// marginal is constant.
fn pearson_lag1<T: Scalar>(bytes: &[u8]) -> Option<T> {
    if bytes.len() < 3 {
        return None;
    }
    let xs: Vec<T> = bytes[..bytes.len() - 1].iter().map(|&b| T::of(b as f64)).collect();
    let ys: Vec<T> = bytes[1..].iter().map(|&b| T::of(b as f64)).collect();
    let n = T::from_usize_exact(xs.len());
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    let mut syy = T::zero();
    for (&x, &y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == T::zero() || syy == T::zero() {
        return None;
    }
    Some(sxy / (sxx.sqrt() * syy.sqrt()))
}
