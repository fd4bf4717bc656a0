//! First-order update rules over a 2-D position.
//!
//! Every rule consumes the gradient at the current iterate and advances the
//! iteration counter exactly once. All vector operations are element-wise.
//!
//! RMSProp+AF keeps one FIFO buffer of recent squared gradients per axis.
//! Each step the spread of that buffer sets the decaying factor
//! `rho = max(rho0, (max - min) / (max + min + 1))`, so a burst of very
//! different gradient magnitudes holds the accumulator close to its old
//! value while a steady stream falls back to plain RMSProp at `rho0`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "SGD")]
    Sgd,
    #[serde(rename = "SGD+M")]
    SgdMomentum,
    #[serde(rename = "RMSProp")]
    RmsProp,
    #[serde(rename = "Adam")]
    Adam,
    #[serde(rename = "RMSProp+AF")]
    RmsPropAf,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Sgd,
        Algorithm::SgdMomentum,
        Algorithm::RmsProp,
        Algorithm::Adam,
        Algorithm::RmsPropAf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sgd => "SGD",
            Algorithm::SgdMomentum => "SGD+M",
            Algorithm::RmsProp => "RMSProp",
            Algorithm::Adam => "Adam",
            Algorithm::RmsPropAf => "RMSProp+AF",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, ' ' | '_' | '-'))
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "sgd" => Ok(Algorithm::Sgd),
            "sgd+m" | "sgdm" | "momentum" => Ok(Algorithm::SgdMomentum),
            "rmsprop" => Ok(Algorithm::RmsProp),
            "adam" => Ok(Algorithm::Adam),
            "rmsprop+af" | "rmspropaf" => Ok(Algorithm::RmsPropAf),
            _ => Err(Error::Config(format!("unknown algorithm '{s}'"))),
        }
    }
}

/// Hyperparameters for one update rule. Fields that a rule does not use are
/// carried but ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    /// Momentum coefficient (SGD+M).
    pub momentum: f64,
    /// Fixed decaying factor (RMSProp).
    pub decay: f64,
    /// First-moment decay (Adam).
    pub first_moment_decay: f64,
    /// Second-moment decay (Adam).
    pub second_moment_decay: f64,
    /// Lower bound on the adaptive decaying factor (RMSProp+AF).
    pub decay_threshold: f64,
    /// Added to the root-mean-square denominator.
    pub smoothing: f64,
    /// Squared-gradient history length per axis (RMSProp+AF).
    pub buffer_size: usize,
}

impl OptimizerConfig {
    pub const DEFAULT_BUFFER_SIZE: usize = 10;

    /// Reference hyperparameters shared by every experiment.
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            learning_rate: 0.01,
            momentum: 0.9,
            decay: 0.999,
            first_moment_decay: 0.9,
            second_moment_decay: 0.999,
            decay_threshold: 0.99,
            smoothing: 1e-6,
            buffer_size: Self::DEFAULT_BUFFER_SIZE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn open_unit(name: &str, v: f64) -> Result<()> {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")))
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.smoothing > 0.0 && self.smoothing.is_finite()) {
            return Err(Error::Config(format!(
                "smoothing must be positive, got {}",
                self.smoothing
            )));
        }
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        open_unit("decay", self.decay)?;
        open_unit("first_moment_decay", self.first_moment_decay)?;
        open_unit("second_moment_decay", self.second_moment_decay)?;
        open_unit("decay_threshold", self.decay_threshold)?;
        if self.buffer_size == 0 {
            return Err(Error::Config("buffer_size must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::new(Algorithm::RmsPropAf)
    }
}

/// Fixed-capacity squared-gradient history for one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredGradientBuffer {
    slots: Vec<f64>,
    capacity: usize,
}

impl SquaredGradientBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            slots: Vec::with_capacity(capacity),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Entries written so far, at most `capacity`.
    pub fn populated(&self) -> &[f64] {
        &self.slots
    }

    /// Writes at the 1-based slot for iteration `k`.
    pub fn store(&mut self, k: u64, value: f64) {
        let slot = buffer_index(k, self.capacity) - 1;
        if slot < self.slots.len() {
            self.slots[slot] = value;
        } else {
            debug_assert_eq!(slot, self.slots.len());
            self.slots.push(value);
        }
    }

    fn extremes(&self) -> Option<(f64, f64)> {
        let first = *self.slots.first()?;
        Some(
            self.slots
                .iter()
                .fold((first, first), |(hi, lo), &v| (hi.max(v), lo.min(v))),
        )
    }
}

/// 1-based circular slot for iteration `k >= 1`: `k - L * floor((k - 1) / L)`.
pub fn buffer_index(k: u64, len: usize) -> usize {
    assert!(k >= 1 && len >= 1, "buffer_index needs k >= 1 and L >= 1");
    let len = len as u64;
    (k - len * ((k - 1) / len)) as usize
}

/// Largest double below one.
const RHO_CEILING: f64 = 1.0 - f64::EPSILON / 2.0;

/// Spread ratio of one axis's history. Mathematically below one; the clamp
/// keeps it there once `max` exceeds the 53-bit mantissa.
pub fn spread(max: f64, min: f64) -> f64 {
    ((max - min) / (max + min + 1.0)).min(RHO_CEILING)
}

/// Per-axis decaying factor from the populated buffer entries.
pub fn adaptive_rho(buffers: &[SquaredGradientBuffer; 2], threshold: [f64; 2]) -> [f64; 2] {
    let mut rho = threshold;
    for (axis, buf) in buffers.iter().enumerate() {
        if let Some((hi, lo)) = buf.extremes() {
            rho[axis] = threshold[axis].max(spread(hi, lo));
        }
    }
    rho
}

/// Mutable per-run optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub position: Point,
    /// Steps taken so far.
    pub iteration: u64,
    pub velocity: Point,
    /// Running mean of squared gradients.
    pub accumulator: Point,
    pub first_moment: Point,
    pub buffers: [SquaredGradientBuffer; 2],
    pub current_rho: [f64; 2],
}

impl OptimizerState {
    pub fn new(position: Point, config: &OptimizerConfig) -> Self {
        Self {
            position,
            iteration: 0,
            velocity: Point::zeros(),
            accumulator: Point::zeros(),
            first_moment: Point::zeros(),
            buffers: [
                SquaredGradientBuffer::new(config.buffer_size),
                SquaredGradientBuffer::new(config.buffer_size),
            ],
            current_rho: [config.decay_threshold; 2],
        }
    }
}

fn check_finite(gradient: &Point) -> Result<()> {
    if gradient.iter().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("gradient [{}, {}]", gradient.x, gradient.y)))
    }
}

/// `p <- p - mu g`.
pub fn sgd_step(state: &mut OptimizerState, gradient: &Point, config: &OptimizerConfig) -> Result<()> {
    check_finite(gradient)?;
    state.position -= config.learning_rate * gradient;
    state.iteration += 1;
    Ok(())
}

/// `v <- alpha v - mu g; p <- p + v`.
pub fn sgd_momentum_step(state: &mut OptimizerState, gradient: &Point, config: &OptimizerConfig) -> Result<()> {
    check_finite(gradient)?;
    state.velocity = config.momentum * state.velocity - config.learning_rate * gradient;
    state.position += state.velocity;
    state.iteration += 1;
    Ok(())
}

/// Shared tail of the RMSProp family: accumulate with per-axis `rho`, then
/// take a normalized step.
fn rms_update(state: &mut OptimizerState, gradient: &Point, rho: [f64; 2], config: &OptimizerConfig) {
    for axis in 0..2 {
        let g = gradient[axis];
        let r = rho[axis] * state.accumulator[axis] + (1.0 - rho[axis]) * g * g;
        state.accumulator[axis] = r;
        state.position[axis] -= config.learning_rate / (config.smoothing + r.sqrt()) * g;
    }
}

pub fn rmsprop_step(state: &mut OptimizerState, gradient: &Point, config: &OptimizerConfig) -> Result<()> {
    check_finite(gradient)?;
    rms_update(state, gradient, [config.decay; 2], config);
    state.iteration += 1;
    Ok(())
}

pub fn adam_step(state: &mut OptimizerState, gradient: &Point, config: &OptimizerConfig) -> Result<()> {
    check_finite(gradient)?;
    let k = state.iteration + 1;
    let (b1, b2) = (config.first_moment_decay, config.second_moment_decay);
    // powi takes i32; beyond that the correction factor is 1 to machine precision.
    let exp = i32::try_from(k).unwrap_or(i32::MAX);
    let c1 = 1.0 - b1.powi(exp);
    let c2 = 1.0 - b2.powi(exp);
    for axis in 0..2 {
        let g = gradient[axis];
        state.first_moment[axis] = b1 * state.first_moment[axis] + (1.0 - b1) * g;
        state.accumulator[axis] = b2 * state.accumulator[axis] + (1.0 - b2) * g * g;
        let m_hat = state.first_moment[axis] / c1;
        let r_hat = state.accumulator[axis] / c2;
        state.position[axis] -= config.learning_rate * m_hat / (config.smoothing + r_hat.sqrt());
    }
    state.iteration = k;
    Ok(())
}

/// RMSProp with an adaptive decaying factor.
pub fn rmsprop_af_step(state: &mut OptimizerState, gradient: &Point, config: &OptimizerConfig) -> Result<()> {
    check_finite(gradient)?;
    let k = state.iteration + 1;
    for axis in 0..2 {
        if state.buffers[axis].capacity() != config.buffer_size {
            return Err(Error::Config(format!(
                "state buffer holds {} entries but config asks for {}",
                state.buffers[axis].capacity(),
                config.buffer_size
            )));
        }
        state.buffers[axis].store(k, gradient[axis] * gradient[axis]);
    }
    let rho = adaptive_rho(&state.buffers, [config.decay_threshold; 2]);
    state.current_rho = rho;
    rms_update(state, gradient, rho, config);
    state.iteration = k;
    Ok(())
}

/// Applies the rule selected by `config.algorithm`.
pub fn step(state: &mut OptimizerState, gradient: &Point, config: &OptimizerConfig) -> Result<()> {
    match config.algorithm {
        Algorithm::Sgd => sgd_step(state, gradient, config),
        Algorithm::SgdMomentum => sgd_momentum_step(state, gradient, config),
        Algorithm::RmsProp => rmsprop_step(state, gradient, config),
        Algorithm::Adam => adam_step(state, gradient, config),
        Algorithm::RmsPropAf => rmsprop_af_step(state, gradient, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(algorithm: Algorithm) -> OptimizerConfig {
        OptimizerConfig::new(algorithm)
    }

    fn fresh(algorithm: Algorithm) -> (OptimizerState, OptimizerConfig) {
        let c = cfg(algorithm);
        (OptimizerState::new(Point::zeros(), &c), c)
    }

    #[test]
    fn defaults() {
        let c = OptimizerConfig::default();
        assert_eq!(c.learning_rate, 0.01);
        assert_eq!(c.momentum, 0.9);
        assert_eq!(c.decay, 0.999);
        assert_eq!(c.first_moment_decay, 0.9);
        assert_eq!(c.second_moment_decay, 0.999);
        assert_eq!(c.decay_threshold, 0.99);
        assert_eq!(c.smoothing, 1e-6);
        assert_eq!(c.buffer_size, 10);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn validation_rejects_out_of_range() {
        let mut c = cfg(Algorithm::Sgd);
        c.learning_rate = -1.0;
        assert!(c.validate().is_err());
        let mut c = cfg(Algorithm::Sgd);
        c.momentum = 1.0;
        assert!(c.validate().is_err());
        let mut c = cfg(Algorithm::Sgd);
        c.decay_threshold = 1.0;
        assert!(c.validate().is_err());
        let mut c = cfg(Algorithm::Sgd);
        c.buffer_size = 0;
        assert!(c.validate().is_err());
        let mut c = cfg(Algorithm::Sgd);
        c.smoothing = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!(matches!("nesterov".parse::<Algorithm>(), Err(Error::Config(_))));
    }

    #[test]
    fn sgd_examples() {
        let (mut s, c) = fresh(Algorithm::Sgd);
        sgd_step(&mut s, &Point::new(1.0, 2.0), &c).unwrap();
        assert_eq!(s.position, Point::new(-0.01, -0.02));
        assert_eq!(s.iteration, 1);
        let before = s.position;
        sgd_step(&mut s, &Point::zeros(), &c).unwrap();
        assert_eq!(s.position, before);
        assert!(matches!(
            sgd_step(&mut s, &Point::new(f64::NAN, 0.0), &c),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn momentum_examples() {
        let (mut s, c) = fresh(Algorithm::SgdMomentum);
        sgd_momentum_step(&mut s, &Point::new(1.0, 1.0), &c).unwrap();
        assert_eq!(s.velocity, Point::new(-0.01, -0.01));
        assert_eq!(s.position, Point::new(-0.01, -0.01));

        // geometric-series limit -mu / (1 - alpha) * g
        for _ in 0..2000 {
            sgd_momentum_step(&mut s, &Point::new(1.0, 1.0), &c).unwrap();
        }
        assert!((s.velocity - Point::new(-0.1, -0.1)).amax() < 1e-12);
    }

    #[test]
    fn rmsprop_examples() {
        let (mut s, c) = fresh(Algorithm::RmsProp);
        rmsprop_step(&mut s, &Point::new(1.0, 0.0), &c).unwrap();
        assert!((s.accumulator.x - 0.001).abs() < 1e-15);
        assert_eq!(s.accumulator.y, 0.0);
        let expected = 0.01 / (1e-6 + 0.001f64.sqrt());
        assert!((-s.position.x - expected).abs() < 1e-15);
        assert!((expected - 0.316218).abs() < 1e-6);
        assert_eq!(s.position.y, 0.0);

        let r = s.accumulator;
        let p = s.position;
        rmsprop_step(&mut s, &Point::zeros(), &c).unwrap();
        assert_eq!(s.accumulator, r * 0.999);
        assert_eq!(s.position, p);
    }

    #[test]
    fn rmsprop_fixed_point() {
        let (mut s, c) = fresh(Algorithm::RmsProp);
        let g = Point::new(3.0, -3.0);
        for _ in 0..40_000 {
            rmsprop_step(&mut s, &g, &c).unwrap();
        }
        assert!((s.accumulator - Point::new(9.0, 9.0)).amax() < 1e-9);
        let before = s.position;
        rmsprop_step(&mut s, &g, &c).unwrap();
        let disp = s.position - before;
        assert!((disp.x + 0.01 * 3.0 / (1e-6 + 3.0)).abs() < 1e-12);
        assert!((disp.y - 0.01 * 3.0 / (1e-6 + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step() {
        let (mut s, c) = fresh(Algorithm::Adam);
        adam_step(&mut s, &Point::new(1.0, 1.0), &c).unwrap();
        let step = 0.01 / (1e-6 + 1.0);
        assert!((s.position.x + step).abs() < 1e-15);
        assert!((step - 0.00999999).abs() < 1e-8);

        let (mut s, c) = fresh(Algorithm::Adam);
        let g = Point::new(-2.5, 0.75);
        adam_step(&mut s, &g, &c).unwrap();
        let m_hat = s.first_moment / (1.0 - 0.9);
        let r_hat = s.accumulator / (1.0 - 0.999);
        assert!((m_hat - g).amax() < 1e-14);
        assert!((r_hat - g.component_mul(&g)).amax() < 1e-12);
    }

    #[test]
    fn adam_zero_gradient_decays() {
        let (mut s, c) = fresh(Algorithm::Adam);
        adam_step(&mut s, &Point::new(1.0, 1.0), &c).unwrap();
        let m = s.first_moment;
        let r = s.accumulator;
        adam_step(&mut s, &Point::zeros(), &c).unwrap();
        assert_eq!(s.first_moment, m * 0.9);
        assert_eq!(s.accumulator, r * 0.999);
        for _ in 0..2000 {
            adam_step(&mut s, &Point::zeros(), &c).unwrap();
        }
        let p = s.position;
        adam_step(&mut s, &Point::zeros(), &c).unwrap();
        assert!((s.position - p).amax() < 1e-40);
    }

    #[test]
    fn buffer_index_examples() {
        assert_eq!(buffer_index(1, 10), 1);
        assert_eq!(buffer_index(10, 10), 10);
        assert_eq!(buffer_index(11, 10), 1);
        assert_eq!(buffer_index(25, 10), 5);
        let cycle: Vec<_> = (1..=7).map(|k| buffer_index(k, 3)).collect();
        assert_eq!(cycle, vec![1, 2, 3, 1, 2, 3, 1]);
    }

    fn buffers_with(x: &[f64], y: &[f64]) -> [SquaredGradientBuffer; 2] {
        let mut b = [SquaredGradientBuffer::new(10), SquaredGradientBuffer::new(10)];
        for (k, v) in x.iter().enumerate() {
            b[0].store(k as u64 + 1, *v);
        }
        for (k, v) in y.iter().enumerate() {
            b[1].store(k as u64 + 1, *v);
        }
        b
    }

    #[test]
    fn adaptive_rho_examples() {
        let b = buffers_with(&[2.0, 2.0, 2.0], &[5.0]);
        assert_eq!(adaptive_rho(&b, [0.99; 2]), [0.99, 0.99]);

        assert_eq!(spread(4.0, 1.0), 0.5);
        let b = buffers_with(&[4.0, 1.0], &[1.0, 4.0, 2.0]);
        assert_eq!(adaptive_rho(&b, [0.99; 2]), [0.99, 0.99]);

        let b = buffers_with(&[1000.0, 0.0], &[0.0, 1000.0]);
        let rho = adaptive_rho(&b, [0.99; 2]);
        assert_eq!(rho, [1000.0 / 1001.0; 2]);
        assert!((rho[0] - 0.999).abs() < 1e-3);
    }

    #[test]
    fn partially_filled_buffer_ignores_empty_slots() {
        let mut b = SquaredGradientBuffer::new(10);
        b.store(1, 3.0);
        b.store(2, 5.0);
        assert_eq!(b.populated(), &[3.0, 5.0]);
        for k in 3..=12 {
            b.store(k, k as f64);
        }
        assert_eq!(b.populated().len(), 10);
        assert_eq!(b.populated()[0], 11.0);
        assert_eq!(b.populated()[1], 12.0);
    }

    #[test]
    fn rmsprop_af_first_step() {
        let (mut s, c) = fresh(Algorithm::RmsPropAf);
        rmsprop_af_step(&mut s, &Point::new(1.0, 1.0), &c).unwrap();
        assert_eq!(s.buffers[0].populated(), &[1.0]);
        assert_eq!(s.current_rho, [0.99, 0.99]);
        assert!((s.accumulator - Point::new(0.01, 0.01)).amax() < 1e-15);
        let step = 0.01 / (1e-6 + 0.1);
        assert!((s.position.x + step).abs() < 1e-12);
        assert!((step - 0.099999).abs() < 1e-6);
    }

    #[test]
    fn dispatch_matches_direct_calls() {
        let grads = [Point::new(1.0, -2.0), Point::new(0.5, 0.25), Point::new(-3.0, 1.0)];
        for algo in Algorithm::ALL {
            let c = cfg(algo);
            let mut a = OptimizerState::new(Point::new(1.0, 1.0), &c);
            let mut b = a.clone();
            for g in &grads {
                step(&mut a, g, &c).unwrap();
                match algo {
                    Algorithm::Sgd => sgd_step(&mut b, g, &c),
                    Algorithm::SgdMomentum => sgd_momentum_step(&mut b, g, &c),
                    Algorithm::RmsProp => rmsprop_step(&mut b, g, &c),
                    Algorithm::Adam => adam_step(&mut b, g, &c),
                    Algorithm::RmsPropAf => rmsprop_af_step(&mut b, g, &c),
                }
                .unwrap();
            }
            assert_eq!(a, b, "{algo}");
            assert_eq!(a.iteration, grads.len() as u64);
        }
    }

    #[test]
    fn dispatch_leaves_unused_fields_alone() {
        let c = cfg(Algorithm::Sgd);
        let mut s = OptimizerState::new(Point::zeros(), &c);
        let pristine = s.clone();
        step(&mut s, &Point::new(1.0, 1.0), &c).unwrap();
        assert_eq!(s.buffers, pristine.buffers);
        assert_eq!(s.accumulator, pristine.accumulator);
        assert_eq!(s.velocity, pristine.velocity);
        assert_eq!(s.first_moment, pristine.first_moment);
        assert_eq!(s.current_rho, pristine.current_rho);
    }
}
