//! Label simulators that draw from `p(y)` without ever seeing inputs, and
//! renderers that turn ground-truth labels into synthetic input frames.

mod canvas;
mod pendulum;
mod skeleton;
mod timeseries;

pub use canvas::CANVAS;
pub use pendulum::{
    oscillator_value, pendulum_ball_x, render_pendulum_frame, sample_pendulum_trajectory, HarmonicOscillatorSpec,
    OscillatorDraw,
};
pub use skeleton::{
    render_skeleton_frame, sample_skeleton_trajectory, skeleton_pose, SkeletonDraw,
    TrapezoidSkeletonSpec, JOINTS, JOINT_NAMES,
};
pub use timeseries::{
    draw_timeseries_label, sample_timeseries_labels, LabelDraw, TimeSeriesGroup, CHANNELS,
    CHANNEL_NAMES,
};

/// A length-`n` sequence of label vectors, stored step-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    values: Vec<f64>,
}

impl Trajectory {
    pub fn new(dim: usize, values: Vec<f64>) -> Self {
        assert!(dim > 0 && values.len() % dim == 0, "ragged trajectory");
        Trajectory { dim, values }
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn steps(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.values
    }
}
