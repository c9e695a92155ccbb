use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::canvas::{Canvas, CANVAS};
use super::Trajectory;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Simple harmonic oscillator with fixed amplitude and a random period and
/// phase per trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarmonicOscillatorSpec {
    pub amplitude: f64,
    /// Period range in frames.
    pub period_min: f64,
    pub period_max: f64,
    pub length: usize,
}

impl Default for HarmonicOscillatorSpec {
    fn default() -> Self {
        HarmonicOscillatorSpec {
            amplitude: 1.0,
            period_min: 10.0,
            period_max: 14.0,
            length: 5,
        }
    }
}

impl HarmonicOscillatorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0) {
            return Err(Error::Config("oscillator amplitude must be positive".into()));
        }
        if !(self.period_min > 0.0 && self.period_min <= self.period_max) {
            return Err(Error::Config(format!(
                "bad period range [{}, {}]",
                self.period_min, self.period_max
            )));
        }
        if self.length < 2 {
            return Err(Error::Config("trajectory length must be ≥ 2".into()));
        }
        Ok(())
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> OscillatorDraw {
        let period = self.period_min + (self.period_max - self.period_min) * rng.gen::<f64>();
        let phase = 2.0 * PI * rng.gen::<f64>();
        OscillatorDraw {
            amplitude: self.amplitude,
            period,
            phase,
        }
    }
}

/// One sampled oscillator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatorDraw {
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
}

impl OscillatorDraw {
    pub fn value(&self, t: usize) -> f64 {
        oscillator_value(self.amplitude, self.period, self.phase, t)
    }

    pub fn trajectory(&self, length: usize) -> Trajectory {
        Trajectory::new(1, (0..length).map(|t| self.value(t)).collect())
    }
}

/// `A·sin(2πt/T + φ)`.
pub fn oscillator_value(amplitude: f64, period: f64, phase: f64, t: usize) -> f64 {
    amplitude * (2.0 * PI * t as f64 / period + phase).sin()
}

pub fn sample_pendulum_trajectory<R: Rng + ?Sized>(
    spec: &HarmonicOscillatorSpec,
    rng: &mut R,
) -> Result<Trajectory> {
    spec.validate()?;
    Ok(spec.draw(rng).trajectory(spec.length))
}

const PIVOT_X: f64 = CANVAS as f64 / 2.0;
const PIVOT_Y: f64 = 3.0;
const ROD: f64 = 22.0;
const BALL_RADIUS: f64 = 2.5;

/// 32×32 frame of a pendulum swung `angle` radians from vertical (positive
/// to the right): a dim pivot mark at top-center and a unit-intensity ball
/// at the end of the rod.
pub fn render_pendulum_frame(angle: f64) -> Result<Tensor> {
    if !angle.is_finite() {
        return Err(Error::Argument(format!("pendulum angle {angle}")));
    }
    let mut canvas = Canvas::new();
    canvas.set(1, CANVAS / 2 - 1, 0.5);
    canvas.set(1, CANVAS / 2, 0.5);
    let (x, y) = pendulum_ball_center(angle);
    canvas.disk(x, y, BALL_RADIUS, 1.0);
    Ok(canvas.into_tensor())
}

pub(crate) fn pendulum_ball_center(angle: f64) -> (f64, f64) {
    (PIVOT_X + ROD * angle.sin(), PIVOT_Y + ROD * angle.cos())
}

/// Horizontal pixel position of the ball center at `angle`.
pub fn pendulum_ball_x(angle: f64) -> f64 {
    pendulum_ball_center(angle).0
}
