//! Signal-level front end.
//!
//! Received baseband signals are modelled as `z_i = h_i * s(t - tau_i) + eta_i`
//! with a flat complex gain and circular complex Gaussian noise. Delays are
//! integer sample counts and shifting is zero-padded, never circular.
//!
//! Pairwise delays are estimated from the peak of the normalized
//! cross-correlation of the equalized signals, then scaled by the
//! propagation speed into range differences.
//!
//! Lag convention: a positive lag means the first signal leads the second,
//! i.e. the lag returned for `(a, b)` is `tau_b - tau_a` in samples. The
//! range difference for the pair `(i, j)` is therefore `-c * lag / fs`,
//! which equals `c * (tau_i - tau_j) = d_i - d_j`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaveformKind {
    /// Single unit sample at index 0.
    Impulse,
    /// Seeded white Gaussian burst smoothed by a short low-pass kernel.
    PseudoRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalParams {
    /// Samples per second.
    pub sample_rate: f64,
    pub num_samples: usize,
    /// Per-component standard deviation of the receiver noise.
    pub noise_stddev: f64,
    /// Propagation speed `c` in m/s.
    pub propagation_speed: f64,
    pub waveform: WaveformKind,
    /// Largest lag searched by the correlator. Defaults to half the record.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_lag: Option<usize>,
    /// Parabolic interpolation around the correlation peak.
    pub subsample: bool,
}

impl Default for SignalParams {
    fn default() -> Self {
        Self {
            // One sample is just under one meter of range.
            sample_rate: 3.0e8,
            num_samples: 1024,
            noise_stddev: 0.05,
            propagation_speed: SPEED_OF_LIGHT,
            waveform: WaveformKind::PseudoRandom,
            max_lag: None,
            subsample: false,
        }
    }
}

impl SignalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sample_rate must be positive, got {}",
                self.sample_rate
            )));
        }
        if self.num_samples == 0 {
            return Err(Error::InvalidArgument("num_samples must be positive".into()));
        }
        if !(self.noise_stddev >= 0.0 && self.noise_stddev.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise_stddev must be non-negative, got {}",
                self.noise_stddev
            )));
        }
        if !(self.propagation_speed > 0.0 && self.propagation_speed.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "propagation_speed must be positive, got {}",
                self.propagation_speed
            )));
        }
        if let Some(lag) = self.max_lag {
            if lag == 0 || lag >= self.num_samples {
                return Err(Error::InvalidArgument(format!(
                    "max_lag must lie in 1..{}, got {lag}",
                    self.num_samples
                )));
            }
        }
        Ok(())
    }

    pub fn effective_max_lag(&self) -> usize {
        self.max_lag
            .unwrap_or_else(|| (self.num_samples / 2).clamp(1, self.num_samples.saturating_sub(1).max(1)))
    }

    /// Range covered by one sample of delay, in meters.
    pub fn range_resolution(&self) -> f64 {
        self.propagation_speed / self.sample_rate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedSignal {
    pub samples: Vec<Complex64>,
    pub receiver_id: usize,
    pub gain: Complex64,
    /// Ground-truth delay, kept for test oracles.
    pub true_delay_samples: usize,
}

/// Builds a transmit waveform of `len` samples.
///
/// The pseudo-random burst occupies the first half of the record so that
/// delays up to `len / 2` never truncate it.
pub fn generate_waveform<R: Rng + ?Sized>(kind: WaveformKind, len: usize, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; len];
    match kind {
        WaveformKind::Impulse => {
            if let Some(first) = out.first_mut() {
                *first = 1.0;
            }
        }
        WaveformKind::PseudoRandom => {
            const KERNEL: [f64; 3] = [0.5, 1.0, 0.5];
            let burst = (len / 2).max(1);
            let white: Vec<f64> = (0..burst).map(|_| rng.sample(StandardNormal)).collect();
            for (n, slot) in out.iter_mut().take(burst).enumerate() {
                *slot = KERNEL
                    .iter()
                    .enumerate()
                    .filter(|(t, _)| *t <= n)
                    .map(|(t, w)| w * white[n - t])
                    .sum();
            }
        }
    }
    out
}

/// `gain * waveform(t - delay) + noise`, zero-padded at the front.
pub fn synthesize_received<R: Rng + ?Sized>(
    waveform: &[f64],
    delay_samples: usize,
    gain: Complex64,
    noise_stddev: f64,
    receiver_id: usize,
    rng: &mut R,
) -> Result<ReceivedSignal> {
    if delay_samples >= waveform.len() {
        return Err(Error::InvalidArgument(format!(
            "delay {delay_samples} outside waveform of length {}",
            waveform.len()
        )));
    }
    if !(noise_stddev >= 0.0 && noise_stddev.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise_stddev must be non-negative, got {noise_stddev}"
        )));
    }
    let noise = rand_distr::Normal::new(0.0, noise_stddev).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let samples = (0..waveform.len())
        .map(|n| {
            let clean = if n >= delay_samples {
                gain * waveform[n - delay_samples]
            } else {
                Complex64::new(0.0, 0.0)
            };
            if noise_stddev > 0.0 {
                clean + Complex64::new(noise.sample(rng), noise.sample(rng))
            } else {
                clean
            }
        })
        .collect();
    Ok(ReceivedSignal {
        samples,
        receiver_id,
        gain,
        true_delay_samples: delay_samples,
    })
}

/// Removes the channel gain: `conj(h) / |h|^2 * z`.
pub fn equalize(z: &ReceivedSignal) -> Result<Vec<Complex64>> {
    let power = z.gain.norm_sqr();
    if !(power > 0.0) {
        return Err(Error::DegenerateChannel {
            receiver: z.receiver_id,
        });
    }
    let scale = z.gain.conj() / power;
    Ok(z.samples.iter().map(|s| scale * s).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NccPeak {
    /// Positive when the first sequence leads the second.
    pub lag: isize,
    pub coefficient: f64,
}

fn energy(x: &[Complex64]) -> f64 {
    x.iter().map(|s| s.norm_sqr()).sum()
}

/// Normalized correlation scores for lags `-max_lag..=max_lag`.
fn ncc_scores(a: &[Complex64], b: &[Complex64], max_lag: usize) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "sequence lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if max_lag == 0 || max_lag >= a.len() {
        return Err(Error::InvalidArgument(format!(
            "max_lag must lie in 1..{}, got {max_lag}",
            a.len()
        )));
    }
    let norm = (energy(a) * energy(b)).sqrt();
    if !(norm > 0.0) {
        return Err(Error::DegenerateSignal { receiver: None });
    }
    let n = a.len() as isize;
    let max_lag = max_lag as isize;
    Ok((-max_lag..=max_lag)
        .map(|lag| {
            let lo = 0.max(-lag);
            let hi = n.min(n - lag);
            let acc: f64 = (lo..hi)
                .map(|u| (a[u as usize] * b[(u + lag) as usize].conj()).re)
                .sum();
            acc / norm
        })
        .collect())
}

/// Lag maximizing the normalized cross-correlation of `a` and `b`.
///
/// Ties resolve to the smallest lag in scan order.
pub fn ncc_peak(a: &[Complex64], b: &[Complex64], max_lag: usize) -> Result<NccPeak> {
    let scores = ncc_scores(a, b, max_lag)?;
    let (idx, coefficient) = argmax(&scores);
    Ok(NccPeak {
        lag: idx as isize - max_lag as isize,
        coefficient,
    })
}

/// Like [`ncc_peak`] but refines the lag by fitting a parabola through the
/// peak and its two neighbours.
pub fn ncc_peak_subsample(a: &[Complex64], b: &[Complex64], max_lag: usize) -> Result<f64> {
    let scores = ncc_scores(a, b, max_lag)?;
    let (idx, _) = argmax(&scores);
    let base = idx as f64 - max_lag as f64;
    if idx == 0 || idx + 1 == scores.len() {
        return Ok(base);
    }
    let (l, c, r) = (scores[idx - 1], scores[idx], scores[idx + 1]);
    let denom = l - 2.0 * c + r;
    if denom.abs() < f64::EPSILON {
        return Ok(base);
    }
    Ok(base + (0.5 * (l - r) / denom).clamp(-0.5, 0.5))
}

fn argmax(values: &[f64]) -> (usize, f64) {
    values.iter().copied().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |best, (i, v)| if v > best.1 { (i, v) } else { best },
    )
}

/// One estimated range difference `d_i - d_j` (meters), 0-based indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeDifference {
    pub i: usize,
    pub j: usize,
    pub meters: f64,
}

/// Correlates every pair `i < j` of equalized signals and converts the
/// peak lag to a range difference. Output is in lexicographic pair order.
pub fn estimate_range_differences(signals: &[ReceivedSignal], params: &SignalParams) -> Result<Vec<RangeDifference>> {
    params.validate()?;
    if signals.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two signals, got {}",
            signals.len()
        )));
    }
    let len = signals[0].samples.len();
    if let Some(bad) = signals.iter().find(|s| s.samples.len() != len) {
        return Err(Error::InvalidArgument(format!(
            "signal from receiver {} has {} samples, expected {len}",
            bad.receiver_id,
            bad.samples.len()
        )));
    }
    let equalized = signals
        .iter()
        .map(|s| {
            let eq = equalize(s)?;
            if !(energy(&eq) > 0.0) {
                return Err(Error::DegenerateSignal {
                    receiver: Some(s.receiver_id),
                });
            }
            Ok(eq)
        })
        .collect::<Result<Vec<_>>>()?;

    let max_lag = params.effective_max_lag().min(len.saturating_sub(1));
    let per_sample = params.range_resolution();
    let mut out = Vec::with_capacity(signals.len() * (signals.len() - 1) / 2);
    for i in 0..signals.len() {
        for j in i + 1..signals.len() {
            let lag = if params.subsample {
                ncc_peak_subsample(&equalized[i], &equalized[j], max_lag)?
            } else {
                ncc_peak(&equalized[i], &equalized[j], max_lag)?.lag as f64
            };
            out.push(RangeDifference {
                i,
                j,
                meters: -lag * per_sample,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn real(x: &[f64]) -> Vec<Complex64> {
        x.iter().map(|&v| Complex64::new(v, 0.0)).collect()
    }

    fn impulse_at(len: usize, at: usize) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); len];
        v[at] = Complex64::new(1.0, 0.0);
        v
    }

    #[test]
    fn impulse_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = generate_waveform(WaveformKind::Impulse, 32, &mut rng);
        let z = synthesize_received(&w, 5, Complex64::new(1.0, 0.0), 0.0, 0, &mut rng).unwrap();
        assert_eq!(z.samples, impulse_at(32, 5));
    }

    #[test]
    fn zero_delay_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = generate_waveform(WaveformKind::PseudoRandom, 64, &mut rng);
        let z = synthesize_received(&w, 0, Complex64::new(1.0, 0.0), 0.0, 0, &mut rng).unwrap();
        assert_eq!(z.samples, real(&w));
    }

    #[test]
    fn scaled_shift_matches_elementwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = generate_waveform(WaveformKind::PseudoRandom, 64, &mut rng);
        let z = synthesize_received(&w, 7, Complex64::new(2.0, 0.0), 0.0, 0, &mut rng).unwrap();
        for n in 0..64 {
            let expected = if n < 7 { 0.0 } else { 2.0 * w[n - 7] };
            assert_eq!(z.samples[n], Complex64::new(expected, 0.0), "sample {n}");
        }
    }

    #[test]
    fn delay_out_of_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = vec![1.0; 8];
        let err = synthesize_received(&w, 8, Complex64::new(1.0, 0.0), 0.0, 0, &mut rng);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn equalize_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = generate_waveform(WaveformKind::PseudoRandom, 32, &mut rng);
        let shifted = synthesize_received(&w, 3, Complex64::new(1.0, 0.0), 0.0, 0, &mut rng)
            .unwrap()
            .samples;

        let unit = synthesize_received(&w, 3, Complex64::new(1.0, 0.0), 0.0, 0, &mut rng).unwrap();
        assert_eq!(equalize(&unit).unwrap(), shifted);

        // conj(2) / 4 = 0.5
        let doubled = synthesize_received(&w, 3, Complex64::new(2.0, 0.0), 0.0, 0, &mut rng).unwrap();
        assert_eq!(equalize(&doubled).unwrap(), shifted);

        // conj(i) / 1 = -i, and -i * i = 1
        let rotated = synthesize_received(&w, 3, Complex64::new(0.0, 1.0), 0.0, 0, &mut rng).unwrap();
        for (got, want) in equalize(&rotated).unwrap().iter().zip(&shifted) {
            assert!((got - want).norm() < 1e-15);
        }

        let dead = ReceivedSignal {
            samples: shifted.clone(),
            receiver_id: 3,
            gain: Complex64::new(0.0, 0.0),
            true_delay_samples: 0,
        };
        assert_eq!(equalize(&dead), Err(Error::DegenerateChannel { receiver: 3 }));
    }

    #[test]
    fn self_correlation_peaks_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = real(&generate_waveform(WaveformKind::PseudoRandom, 128, &mut rng));
        let peak = ncc_peak(&s, &s, 10).unwrap();
        assert_eq!(peak.lag, 0);
        assert!((peak.coefficient - 1.0).abs() < 1e-12);
    }

    /// Exhaustive reference scan, written independently of `ncc_scores`.
    fn brute_force_peak(a: &[Complex64], b: &[Complex64], max_lag: isize) -> (isize, f64) {
        let ea: f64 = a.iter().map(|x| x.norm_sqr()).sum();
        let eb: f64 = b.iter().map(|x| x.norm_sqr()).sum();
        let mut best = (0, f64::NEG_INFINITY);
        for lag in -max_lag..=max_lag {
            let mut acc = 0.0;
            for u in 0..a.len() as isize {
                let v = u + lag;
                if v >= 0 && (v as usize) < b.len() {
                    acc += a[u as usize].re * b[v as usize].re + a[u as usize].im * b[v as usize].im;
                }
            }
            let c = acc / (ea.sqrt() * eb.sqrt());
            if c > best.1 {
                best = (lag, c);
            }
        }
        best
    }

    #[test]
    fn impulse_pair_lag_sign() {
        let a = impulse_at(32, 0);
        let b = impulse_at(32, 5);
        let peak = ncc_peak(&a, &b, 10).unwrap();
        let (lag, coef) = brute_force_peak(&a, &b, 10);
        assert_eq!(peak.lag, lag);
        assert_eq!(peak.lag, 5);
        assert!((peak.coefficient - coef).abs() < 1e-15);
        assert!((peak.coefficient - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gain_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = generate_waveform(WaveformKind::PseudoRandom, 128, &mut rng);
        let s = real(&w);
        let scaled = synthesize_received(&w, 2, Complex64::new(3.0, 0.0), 0.0, 0, &mut rng)
            .unwrap()
            .samples;
        let peak = ncc_peak(&s, &scaled, 10).unwrap();
        let (lag, coef) = brute_force_peak(&s, &scaled, 10);
        assert_eq!(peak.lag, lag);
        assert_eq!(peak.lag, 2);
        assert!((peak.coefficient - coef).abs() < 1e-12);
        // Only the two tail samples fall outside the overlap.
        let lost: f64 = w[126..].iter().map(|x| x * x).sum::<f64>();
        assert!((peak.coefficient - 1.0).abs() <= lost + 1e-12);
    }

    #[test]
    fn zero_energy_rejected() {
        let z = vec![Complex64::new(0.0, 0.0); 16];
        let s = impulse_at(16, 0);
        assert_eq!(ncc_peak(&z, &s, 4), Err(Error::DegenerateSignal { receiver: None }));
        assert!(matches!(ncc_peak(&s, &s, 16), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn subsample_refinement_is_exact_on_integer_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = generate_waveform(WaveformKind::PseudoRandom, 256, &mut rng);
        let a = real(&w);
        let b = synthesize_received(&w, 4, Complex64::new(1.0, 0.0), 0.0, 0, &mut rng)
            .unwrap()
            .samples;
        let lag = ncc_peak_subsample(&a, &b, 10).unwrap();
        assert!((lag - 4.0).abs() < 0.5);
    }

    #[test]
    fn range_differences_noise_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = SignalParams {
            sample_rate: 1.0,
            propagation_speed: 10.0,
            num_samples: 256,
            noise_stddev: 0.0,
            ..SignalParams::default()
        };
        let w = generate_waveform(WaveformKind::PseudoRandom, params.num_samples, &mut rng);
        let delays = [3usize, 11, 0, 20];
        let gains = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 2.0),
            Complex64::new(-0.5, 0.5),
            Complex64::new(3.0, -1.0),
        ];
        let signals: Vec<_> = delays
            .iter()
            .zip(gains)
            .enumerate()
            .map(|(id, (&d, g))| synthesize_received(&w, d, g, 0.0, id, &mut rng).unwrap())
            .collect();
        let est = estimate_range_differences(&signals, &params).unwrap();
        assert_eq!(est.len(), 6);
        let pairs: Vec<_> = est.iter().map(|r| (r.i, r.j)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        for r in &est {
            let truth = 10.0 * (delays[r.i] as f64 - delays[r.j] as f64);
            assert_eq!(r.meters, truth, "pair ({}, {})", r.i, r.j);
        }
    }

    #[test]
    fn identical_signals_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let params = SignalParams {
            num_samples: 128,
            noise_stddev: 0.0,
            ..SignalParams::default()
        };
        let w = generate_waveform(WaveformKind::PseudoRandom, 128, &mut rng);
        let a = synthesize_received(&w, 4, Complex64::new(1.0, 0.0), 0.0, 0, &mut rng).unwrap();
        let mut b = a.clone();
        b.receiver_id = 1;
        let est = estimate_range_differences(&[a, b], &params).unwrap();
        assert_eq!(est.len(), 1);
        assert_eq!(est[0].meters, 0.0);
    }

    #[test]
    fn degenerate_receiver_identified() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = SignalParams {
            num_samples: 64,
            ..SignalParams::default()
        };
        let w = generate_waveform(WaveformKind::PseudoRandom, 64, &mut rng);
        let a = synthesize_received(&w, 0, Complex64::new(1.0, 0.0), 0.0, 0, &mut rng).unwrap();
        let silent = ReceivedSignal {
            samples: vec![Complex64::new(0.0, 0.0); 64],
            receiver_id: 1,
            gain: Complex64::new(1.0, 0.0),
            true_delay_samples: 0,
        };
        assert_eq!(
            estimate_range_differences(&[a, silent], &params),
            Err(Error::DegenerateSignal { receiver: Some(1) })
        );
    }

    #[test]
    fn params_validation() {
        assert!(SignalParams::default().validate().is_ok());
        let bad = SignalParams {
            sample_rate: 0.0,
            ..SignalParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = SignalParams {
            noise_stddev: -1.0,
            ..SignalParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
