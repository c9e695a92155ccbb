//! Pendulum tracking from rendered frames with no labels.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::LabeledGroup;
use super::{FrameTask, ReportRow};
use crate::error::{Error, Result};
use crate::metrics::pearson_correlation;
use crate::nn::Parameters;
use crate::simulators::{pendulum_ball_x, render_pendulum_frame, HarmonicOscillatorSpec};
use crate::tensor::Tensor;
use crate::trainer::{Evaluator, LabelSimulator};

/// Synthetic footage: each clip follows one oscillator draw; a label `y`
/// is rendered as a swing of `swing · y` radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PendulumData {
    pub train_clips: usize,
    pub test_clips: usize,
    pub clip_len: usize,
    pub swing: f64,
    pub oscillator: HarmonicOscillatorSpec,
}

impl Default for PendulumData {
    fn default() -> Self {
        PendulumData {
            train_clips: 5,
            test_clips: 1,
            clip_len: 100,
            swing: 0.6,
            oscillator: HarmonicOscillatorSpec::default(),
        }
    }
}

impl PendulumData {
    pub fn validate(&self) -> Result<()> {
        self.oscillator.validate()?;
        if self.train_clips == 0 || self.test_clips == 0 || self.clip_len == 0 {
            return Err(Error::Config("pendulum clip counts must be positive".into()));
        }
        if !(self.swing > 0.0 && self.swing < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Config("pendulum swing must lie in (0, π/2)".into()));
        }
        Ok(())
    }

    fn clip<R: rand::Rng>(&self, rng: &mut R) -> Result<LabeledGroup> {
        let traj = self.oscillator.draw(rng).trajectory(self.clip_len);
        let mut frames = Vec::with_capacity(self.clip_len * 1024);
        for &y in traj.as_flat() {
            frames.extend_from_slice(render_pendulum_frame(self.swing * y)?.data());
        }
        let n = self.clip_len;
        LabeledGroup::new(
            Tensor::matrix(n, frames.len() / n, frames),
            Tensor::matrix(n, 1, traj.into_flat()),
        )
    }

    /// Clips are fixed by `data_seed`; train and test clips never overlap.
    pub fn build(&self, data_seed: u64) -> Result<FrameTask> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
        let train = (0..self.train_clips).map(|_| self.clip(&mut rng)).collect::<Result<_>>()?;
        let test = (0..self.test_clips).map(|_| self.clip(&mut rng)).collect::<Result<_>>()?;
        Ok(FrameTask { train, test })
    }

    pub fn simulator(&self, window: usize) -> impl LabelSimulator + '_ {
        move |batch: usize, rng: &mut dyn RngCore| -> Result<Tensor> {
            let mut data = Vec::with_capacity(batch * window);
            for _ in 0..batch {
                data.extend(self.oscillator.draw(rng).trajectory(window).into_flat());
            }
            Ok(Tensor::matrix(batch, window, data))
        }
    }
}

/// Correlation between the predicted label and the ball's horizontal
/// position over held-out frames.
pub struct PendulumEvaluator {
    inputs: Tensor,
    ball_x: Vec<f64>,
}

impl PendulumEvaluator {
    pub fn new(data: &PendulumData, groups: &[LabeledGroup]) -> Self {
        let inputs = Tensor::matrix(
            groups.iter().map(LabeledGroup::len).sum(),
            groups[0].inputs.cols(),
            groups.iter().flat_map(|g| g.inputs.data().iter().copied()).collect(),
        );
        let ball_x = groups
            .iter()
            .flat_map(|g| g.labels.data().iter().map(|&y| pendulum_ball_x(data.swing * y)))
            .collect();
        PendulumEvaluator { inputs, ball_x }
    }

    pub fn correlation(&self, predictor: &Parameters) -> Result<f64> {
        let pred = predictor.predict(&self.inputs)?;
        pearson_correlation(pred.data(), &self.ball_x)
    }

    pub fn report(&self, predictor: &Parameters, split: &str) -> Result<Vec<ReportRow>> {
        let value = self.correlation(predictor).unwrap_or(f64::NAN);
        Ok(vec![ReportRow::new(split, "correlation", value)])
    }
}

impl Evaluator for PendulumEvaluator {
    fn names(&self) -> Vec<String> {
        vec!["correlation".into()]
    }

    fn evaluate(&self, predictor: &Parameters) -> Result<Vec<f64>> {
        Ok(vec![self.correlation(predictor).unwrap_or(f64::NAN)])
    }
}

pub(crate) fn apply_preset(cfg: &mut super::ExperimentConfig) {
    cfg.train.steps = 1000;
    cfg.train.eval_interval = 100;
}

fn with_constraint(cfg: &super::ExperimentConfig) -> super::ExperimentConfig {
    let mut cfg = cfg.clone();
    if cfg.train.mode == crate::trainer::Mode::Ecl && cfg.train.constraint.is_none() {
        let osc = &cfg.pendulum.oscillator;
        cfg.train.constraint = Some(super::sinusoid_fit_for(osc.period_min, osc.period_max));
    }
    cfg
}

pub(crate) fn evaluate(cfg: &super::ExperimentConfig, predictor: &Parameters) -> Result<Vec<ReportRow>> {
    let data = &cfg.pendulum;
    let task = data.build(cfg.data_seed)?;
    let mut rows = PendulumEvaluator::new(data, &task.test).report(predictor, "test")?;
    rows.extend(PendulumEvaluator::new(data, &task.train).report(predictor, "train")?);
    Ok(rows)
}

pub(crate) fn train(cfg: &super::ExperimentConfig) -> Result<crate::trainer::TrainState> {
    let cfg = with_constraint(cfg);
    let data = &cfg.pendulum;
    let task = data.build(cfg.data_seed)?;
    let sim = data.simulator(cfg.train.window);
    let test_eval = PendulumEvaluator::new(data, &task.test);
    super::train_frames(&cfg, &task, &sim, &test_eval)
}
