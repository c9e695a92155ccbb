//! Leg-pose estimation from rendered frames with few labeled groups.
//!
//! Joint coordinates are learned in normalized units `(px − 16) / 16`;
//! PCK is computed back in pixels.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{split_groups, LabeledGroup};
use super::{ExperimentConfig, FrameTask, ReportRow};
use crate::error::{Error, Result};
use crate::metrics::{pck_hits, PckSpec};
use crate::nn::Parameters;
use crate::simulators::{
    render_skeleton_frame, sample_skeleton_trajectory, TrapezoidSkeletonSpec, CANVAS, JOINTS,
    JOINT_NAMES,
};
use crate::tensor::Tensor;
use crate::trainer::{Evaluator, LabelSimulator, TrainState};

const HALF: f64 = CANVAS as f64 / 2.0;

pub fn normalize(px: f64) -> f64 {
    (px - HALF) / HALF
}

pub fn denormalize(v: f64) -> f64 {
    v * HALF + HALF
}

/// Recorded motion: `groups` subjects drawn from `subjects`, each jumping
/// for `min_len..=max_len` frames, and the noisier prior the simulator draws
/// label sequences from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkeletonData {
    pub groups: usize,
    pub test_groups: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub beta: f64,
    pub subjects: TrapezoidSkeletonSpec,
    pub simulator: TrapezoidSkeletonSpec,
}

impl Default for SkeletonData {
    fn default() -> Self {
        SkeletonData {
            groups: 35,
            test_groups: 7,
            min_len: 14,
            max_len: 17,
            beta: 0.1,
            subjects: TrapezoidSkeletonSpec {
                expansion_rate: [0.07, 0.1],
                start_phase: [0.0, 0.1],
                center_jitter: 1.5,
                noise: 0.0,
                ..TrapezoidSkeletonSpec::default()
            },
            simulator: TrapezoidSkeletonSpec {
                center_jitter: 1.5,
                ..TrapezoidSkeletonSpec::default()
            },
        }
    }
}

impl SkeletonData {
    pub fn validate(&self) -> Result<()> {
        self.subjects.validate()?;
        self.simulator.validate()?;
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config("bad skeleton group length range".into()));
        }
        if self.test_groups == 0 || self.test_groups >= self.groups {
            return Err(Error::Config("need at least one training and one test group".into()));
        }
        if !(self.beta > 0.0) {
            return Err(Error::Config("PCK β must be positive".into()));
        }
        Ok(())
    }

    fn group<R: Rng>(&self, rng: &mut R) -> Result<LabeledGroup> {
        let draw = self.subjects.draw(rng);
        let len = rng.gen_range(self.min_len..=self.max_len);
        let mut frames = Vec::with_capacity(len * CANVAS * CANVAS);
        let mut labels = Vec::with_capacity(len * 2 * JOINTS);
        for t in 0..len {
            let pose = draw.pose(t);
            frames.extend_from_slice(render_skeleton_frame(&pose)?.0.data());
            labels.extend(pose.iter().map(|&p| normalize(p)));
        }
        LabeledGroup::new(
            Tensor::matrix(len, CANVAS * CANVAS, frames),
            Tensor::matrix(len, 2 * JOINTS, labels),
        )
    }

    /// All groups come from `data_seed`; `split_seed` picks the test groups.
    pub fn build(&self, data_seed: u64, split_seed: u64) -> Result<FrameTask> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
        let groups: Vec<LabeledGroup> = (0..self.groups).map(|_| self.group(&mut rng)).collect::<Result<_>>()?;
        let (train, test) = split_groups(&groups, self.test_groups, split_seed)?;
        Ok(FrameTask { train, test })
    }

    pub fn simulator(&self, window: usize) -> impl LabelSimulator + '_ {
        let spec = TrapezoidSkeletonSpec {
            frames: window,
            ..self.simulator.clone()
        };
        move |batch: usize, rng: &mut dyn RngCore| -> Result<Tensor> {
            let mut data = Vec::with_capacity(batch * window * 2 * JOINTS);
            for _ in 0..batch {
                let traj = sample_skeleton_trajectory(&spec, rng)?;
                data.extend(traj.as_flat().iter().map(|&p| normalize(p)));
            }
            Ok(Tensor::matrix(batch, window * 2 * JOINTS, data))
        }
    }
}

/// PCK@β over held-out groups, each group judged against its own bounding
/// box of true joints.
pub struct SkeletonEvaluator {
    groups: Vec<(Tensor, Tensor, PckSpec)>,
}

impl SkeletonEvaluator {
    pub fn new(beta: f64, groups: &[LabeledGroup]) -> Result<Self> {
        let groups = groups
            .iter()
            .map(|g| {
                let truth = g.labels.map(denormalize);
                let spec = PckSpec::from_bounding_box(beta, &truth)?;
                Ok((g.inputs.clone(), truth, spec))
            })
            .collect::<Result<_>>()?;
        Ok(SkeletonEvaluator { groups })
    }

    /// Per-joint PCK followed by the mean over joints.
    pub fn pck(&self, predictor: &Parameters) -> Result<Vec<f64>> {
        let mut hits = [0usize; JOINTS];
        let mut frames = 0;
        for (inputs, truth, spec) in &self.groups {
            let pred = predictor.predict(inputs)?.map(denormalize);
            for (h, n) in hits.iter_mut().zip(pck_hits(&pred, truth, spec)?) {
                *h += n;
            }
            frames += inputs.rows();
        }
        let mut out: Vec<f64> = hits.iter().map(|&h| h as f64 / frames as f64).collect();
        out.push(out.iter().sum::<f64>() / JOINTS as f64);
        Ok(out)
    }

    pub fn report(&self, predictor: &Parameters, split: &str) -> Result<Vec<ReportRow>> {
        let names = self.names();
        Ok(self
            .pck(predictor)?
            .into_iter()
            .zip(&names)
            .map(|(v, n)| ReportRow::new(split, n, v))
            .collect())
    }
}

impl Evaluator for SkeletonEvaluator {
    fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = JOINT_NAMES.iter().map(|j| format!("pck_{j}")).collect();
        names.push("pck_mean".into());
        names
    }

    fn evaluate(&self, predictor: &Parameters) -> Result<Vec<f64>> {
        self.pck(predictor)
    }
}

pub(crate) fn apply_preset(cfg: &mut ExperimentConfig) {
    cfg.labeled_groups = if cfg.train.mode.uses_labeled() { 1 } else { 0 };
    cfg.train.steps = 1500;
    cfg.train.eval_interval = 150;
}

pub(crate) fn evaluate(cfg: &ExperimentConfig, predictor: &Parameters) -> Result<Vec<ReportRow>> {
    let data = &cfg.skeleton;
    let task = data.build(cfg.data_seed, cfg.split_seed)?;
    let mut rows = SkeletonEvaluator::new(data.beta, &task.test)?.report(predictor, "test")?;
    rows.extend(SkeletonEvaluator::new(data.beta, &task.train)?.report(predictor, "train")?);
    Ok(rows)
}

pub(crate) fn train(cfg: &ExperimentConfig) -> Result<TrainState> {
    let data = &cfg.skeleton;
    let task = data.build(cfg.data_seed, cfg.split_seed)?;
    let sim = data.simulator(cfg.train.window);
    let test_eval = SkeletonEvaluator::new(data.beta, &task.test)?;
    super::train_frames(cfg, &task, &sim, &test_eval)
}
