//! Multi-step forecasting of indoor/outdoor temperature and humidity from
//! 4-hour readings, where some training groups lack humidity.
//!
//! Each group holds `history + horizon` steps; the first `history` steps are
//! the input and the rest the target. Supervised pairs need every channel, so
//! only complete groups supply them. Incomplete groups still shape the label
//! simulator through their temperature.

use std::f64::consts::TAU;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::data::{load_timeseries_csv, make_windows};
use super::{ExperimentConfig, ReportRow};
use crate::error::{Error, Result};
use crate::metrics::mae_columns;
use crate::nn::Parameters;
use crate::simulators::{sample_timeseries_labels, TimeSeriesGroup, CHANNELS};
use crate::tensor::Tensor;
use crate::trainer::{self, Evaluator, LabelSimulator, PairPool, SequencePool, Sources, TrainState};

const SAMPLES_PER_DAY: usize = 96;
const SAMPLES_PER_STEP: usize = 16;

/// Dataset settings. Without `csv` a synthetic 15-minute record of `days`
/// days is generated; the last `test_days` are held out and groups are
/// 28-hour spans starting at random offsets inside each part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSeriesData {
    /// Readings with header `timestamp,temp_in,temp_out,hum_in,hum_out`;
    /// its consecutive groups are split chronologically by `test_fraction`.
    pub csv: Option<PathBuf>,
    pub test_fraction: f64,
    pub days: usize,
    pub test_days: usize,
    pub train_groups: usize,
    pub test_groups: usize,
    /// Share of synthetic training groups whose humidity is discarded.
    pub incomplete_fraction: f64,
    pub history: usize,
    pub horizon: usize,
}

impl Default for TimeSeriesData {
    fn default() -> Self {
        TimeSeriesData {
            csv: None,
            test_fraction: 0.2,
            days: 40,
            test_days: 8,
            train_groups: 480,
            test_groups: 120,
            incomplete_fraction: 0.25,
            history: 5,
            horizon: 2,
        }
    }
}

/// Per-channel affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
}

impl Scaler {
    /// Temperature statistics over every group, humidity over complete ones.
    pub fn fit(groups: &[TimeSeriesGroup]) -> Result<Self> {
        let mut mean = [0.0; CHANNELS];
        let mut std = [0.0; CHANNELS];
        for c in 0..CHANNELS {
            let values: Vec<f64> = groups
                .iter()
                .filter_map(|g| match c {
                    0 | 1 => Some(g.temperature().iter().map(|s| s[c]).collect::<Vec<_>>()),
                    _ => g.humidity().map(|h| h.iter().map(|s| s[c - 2]).collect()),
                })
                .flatten()
                .collect();
            if values.len() < 2 {
                return Err(Error::Config("too few readings to normalize a channel".into()));
            }
            let n = values.len() as f64;
            mean[c] = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>() / n;
            std[c] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Ok(Scaler { mean, std })
    }

    /// Same means, unit scale: shifts values without rescaling them.
    pub fn centered(&self) -> Self {
        Scaler {
            mean: self.mean,
            std: [1.0; CHANNELS],
        }
    }

    pub fn groups(&self, groups: &[TimeSeriesGroup]) -> Result<Vec<TimeSeriesGroup>> {
        groups.iter().map(|g| self.group(g)).collect()
    }

    pub fn forward(&self, c: usize, v: f64) -> f64 {
        (v - self.mean[c]) / self.std[c]
    }

    pub fn inverse(&self, c: usize, v: f64) -> f64 {
        v * self.std[c] + self.mean[c]
    }

    pub fn group(&self, g: &TimeSeriesGroup) -> Result<TimeSeriesGroup> {
        let temp = g
            .temperature()
            .iter()
            .map(|s| [self.forward(0, s[0]), self.forward(1, s[1])])
            .collect();
        let hum = g.humidity().map(|h| {
            h.iter()
                .map(|s| [self.forward(2, s[0]), self.forward(3, s[1])])
                .collect()
        });
        TimeSeriesGroup::new(temp, hum)
    }
}

/// Training and held-out groups in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesTask {
    pub train: Vec<TimeSeriesGroup>,
    pub test: Vec<TimeSeriesGroup>,
}

/// One synthetic 15-minute reading per entry: daily cycles, a slow weather
/// drift shared by both sites, indoor channels lagging the outdoor ones and
/// humidity falling as temperature rises.
pub fn synthetic_readings<R: Rng>(days: usize, rng: &mut R) -> Vec<[f64; CHANNELS]> {
    let n = days * SAMPLES_PER_DAY;
    let noise = Normal::new(0.0, 1.0).unwrap();
    let (mut weather, mut damp) = (0.0, 0.0);
    let lag = 8;
    let mut out_temp = Vec::with_capacity(n);
    let mut readings = Vec::with_capacity(n);
    for i in 0..n {
        let day = i as f64 / SAMPLES_PER_DAY as f64;
        weather = 0.995 * weather + 0.15 * noise.sample(rng);
        damp = 0.99 * damp + 0.25 * noise.sample(rng);
        let t_out = 12.0 + weather + 5.0 * (TAU * (day - 0.375)).sin() + 0.2 * noise.sample(rng);
        out_temp.push(t_out);
        let lagged = out_temp[i.saturating_sub(lag)];
        let t_in = 20.0 + 0.35 * (lagged - 12.0) + 0.8 * (TAU * (day - 0.5)).sin() + 0.1 * noise.sample(rng);
        let h_out = 75.0 - 2.5 * (t_out - 12.0) + damp + 0.8 * noise.sample(rng);
        let h_in = 45.0 + 0.4 * (h_out - 75.0) - 1.5 * (t_in - 20.0) + 0.5 * noise.sample(rng);
        readings.push([t_in, t_out, h_in, h_out]);
    }
    readings
}

fn bucketed(readings: &[[f64; CHANNELS]], start: usize, steps: usize) -> Vec<[f64; CHANNELS]> {
    (0..steps)
        .map(|b| {
            let s = start + b * SAMPLES_PER_STEP;
            let mut acc = [0.0; CHANNELS];
            for r in &readings[s..s + SAMPLES_PER_STEP] {
                for c in 0..CHANNELS {
                    acc[c] += r[c];
                }
            }
            acc.map(|v| v / SAMPLES_PER_STEP as f64)
        })
        .collect()
}

impl TimeSeriesData {
    pub fn steps(&self) -> usize {
        self.history + self.horizon
    }

    pub fn validate(&self) -> Result<()> {
        if self.history == 0 || self.horizon == 0 {
            return Err(Error::Config("history and horizon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.incomplete_fraction) {
            return Err(Error::Config("incomplete_fraction must lie in [0, 1)".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config("test_fraction must lie in (0, 1)".into()));
        }
        if self.csv.is_none() {
            let span = self.steps() * SAMPLES_PER_STEP;
            let test_len = self.test_days * SAMPLES_PER_DAY;
            if test_len < span || self.days * SAMPLES_PER_DAY < test_len + span {
                return Err(Error::Config("too few days for train and test groups".into()));
            }
            if self.train_groups == 0 || self.test_groups == 0 {
                return Err(Error::Config("group counts must be positive".into()));
            }
        }
        Ok(())
    }

    /// Synthetic groups from `data_seed`, or the CSV split chronologically.
    pub fn build(&self, data_seed: u64) -> Result<TimeSeriesTask> {
        self.validate()?;
        let task = match &self.csv {
            Some(path) => self.from_groups(load_timeseries_csv(path)?)?,
            None => self.synthetic(data_seed)?,
        };
        if task.train.iter().chain(&task.test).any(|g| g.len() < self.steps()) {
            return Err(Error::Config(format!("groups need {} steps", self.steps())));
        }
        if !task.train.iter().any(TimeSeriesGroup::is_complete) {
            return Err(Error::Config("no complete training group".into()));
        }
        if !task.test.iter().any(TimeSeriesGroup::is_complete) {
            return Err(Error::Config("no complete test group".into()));
        }
        Ok(task)
    }

    fn from_groups(&self, groups: Vec<TimeSeriesGroup>) -> Result<TimeSeriesTask> {
        let n_test = ((groups.len() as f64) * self.test_fraction).round() as usize;
        if n_test == 0 || n_test >= groups.len() {
            return Err(Error::Config(format!(
                "cannot split {} groups with test_fraction {}",
                groups.len(),
                self.test_fraction
            )));
        }
        let mut train = groups;
        let test = train.split_off(train.len() - n_test);
        Ok(TimeSeriesTask { train, test })
    }

    fn synthetic(&self, data_seed: u64) -> Result<TimeSeriesTask> {
        let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
        let readings = synthetic_readings(self.days, &mut rng);
        let steps = self.steps();
        let span = steps * SAMPLES_PER_STEP;
        let boundary = (self.days - self.test_days) * SAMPLES_PER_DAY;
        let mut draw = |lo: usize, hi: usize, count: usize| -> Vec<Vec<[f64; CHANNELS]>> {
            (0..count)
                .map(|_| bucketed(&readings, rng.gen_range(lo..=hi - span), steps))
                .collect()
        };
        let train_steps = draw(0, boundary, self.train_groups);
        let test_steps = draw(boundary, readings.len(), self.test_groups);
        let n_incomplete = (self.train_groups as f64 * self.incomplete_fraction).round() as usize;
        let mut order: Vec<usize> = (0..self.train_groups).collect();
        order.shuffle(&mut rng);
        let mut complete = vec![true; self.train_groups];
        for &i in &order[..n_incomplete] {
            complete[i] = false;
        }
        let train = train_steps
            .iter()
            .zip(&complete)
            .map(|(s, &c)| TimeSeriesGroup::from_steps(s, c))
            .collect::<Result<_>>()?;
        let test = test_steps
            .iter()
            .map(|s| TimeSeriesGroup::from_steps(s, true))
            .collect::<Result<_>>()?;
        Ok(TimeSeriesTask { train, test })
    }

    /// Every `history → horizon` window of the complete groups, flattened
    /// step-major.
    pub fn windows(&self, groups: &[TimeSeriesGroup]) -> Result<(Tensor, Tensor)> {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for g in groups.iter().filter(|g| g.is_complete()) {
            let series: Vec<Vec<f64>> = (0..g.len()).map(|i| g.step(i).unwrap().to_vec()).collect();
            for (x, y) in make_windows(&series, self.history, self.horizon)? {
                xs.extend(x);
                ys.extend(y);
            }
        }
        let (d_in, d_out) = (self.history * CHANNELS, self.horizon * CHANNELS);
        if xs.is_empty() {
            return Err(Error::Config("no complete group to window".into()));
        }
        Ok((
            Tensor::matrix(xs.len() / d_in, d_in, xs),
            Tensor::matrix(ys.len() / d_out, d_out, ys),
        ))
    }

    pub fn supervised_pairs(&self, groups: &[TimeSeriesGroup]) -> Result<PairPool> {
        let (x, y) = self.windows(groups)?;
        PairPool::new(x, y)
    }

    pub fn simulator<'a>(&'a self, groups: &'a [TimeSeriesGroup]) -> impl LabelSimulator + 'a {
        move |batch: usize, rng: &mut dyn RngCore| -> Result<Tensor> {
            sample_timeseries_labels(groups, self.history, self.horizon, batch, rng)
        }
    }
}

/// Test MAE in original units for the temperature and humidity columns of
/// the target window.
pub struct TimeSeriesEvaluator {
    inputs: Tensor,
    truth: Tensor,
    scaler: Scaler,
}

impl TimeSeriesEvaluator {
    /// `inputs` as fed to the predictor, `truth` in original units and
    /// `scaler` mapping predictions back to them.
    pub fn new(inputs: Tensor, truth: Tensor, scaler: Scaler) -> Self {
        TimeSeriesEvaluator { inputs, truth, scaler }
    }

    fn columns(&self, humidity: bool) -> Vec<usize> {
        (0..self.truth.cols())
            .filter(|c| (c % CHANNELS >= 2) == humidity)
            .collect()
    }

    pub fn mae(&self, predictor: &Parameters) -> Result<[f64; 2]> {
        let pred = predictor.predict(&self.inputs)?;
        let cols = pred.cols();
        let data = pred
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| self.scaler.inverse(i % cols % CHANNELS, v))
            .collect();
        let pred = Tensor::matrix(pred.rows(), cols, data);
        Ok([
            mae_columns(&pred, &self.truth, &self.columns(false))?,
            mae_columns(&pred, &self.truth, &self.columns(true))?,
        ])
    }

    pub fn report(&self, predictor: &Parameters, split: &str) -> Result<Vec<ReportRow>> {
        let names = self.names();
        Ok(self
            .mae(predictor)?
            .iter()
            .zip(&names)
            .map(|(&v, n)| ReportRow::new(split, n, v))
            .collect())
    }
}

impl Evaluator for TimeSeriesEvaluator {
    fn names(&self) -> Vec<String> {
        vec!["mae_temperature".into(), "mae_humidity".into()]
    }

    fn evaluate(&self, predictor: &Parameters) -> Result<Vec<f64>> {
        Ok(self.mae(predictor)?.to_vec())
    }
}

pub(crate) fn apply_preset(cfg: &mut ExperimentConfig) {
    cfg.train.window = 1;
    cfg.train.steps = 5000;
    cfg.train.eval_interval = 500;
}

/// Inputs are standardized; targets and simulated labels are only centered
/// so that errors keep their physical units.
struct Scaling {
    input: Scaler,
    target: Scaler,
}

impl Scaling {
    fn pairs(&self, data: &TimeSeriesData, groups: &[TimeSeriesGroup]) -> Result<(Tensor, Tensor)> {
        let (x, _) = data.windows(&self.input.groups(groups)?)?;
        let (_, y) = data.windows(&self.target.groups(groups)?)?;
        Ok((x, y))
    }

    fn evaluator(&self, data: &TimeSeriesData, groups: &[TimeSeriesGroup]) -> Result<TimeSeriesEvaluator> {
        let (x, _) = data.windows(&self.input.groups(groups)?)?;
        let (_, y) = data.windows(groups)?;
        Ok(TimeSeriesEvaluator::new(x, y, self.target.clone()))
    }
}

fn prepare(cfg: &ExperimentConfig) -> Result<(TimeSeriesTask, Scaling)> {
    if cfg.train.window != 1 {
        return Err(Error::Config(
            "time-series predictions cover the whole target window; train.window must be 1".into(),
        ));
    }
    let task = cfg.timeseries.build(cfg.data_seed)?;
    let input = Scaler::fit(&task.train)?;
    let scaling = Scaling {
        target: input.centered(),
        input,
    };
    Ok((task, scaling))
}

pub(crate) fn evaluate(cfg: &ExperimentConfig, predictor: &Parameters) -> Result<Vec<ReportRow>> {
    let data = &cfg.timeseries;
    let (task, scaling) = prepare(cfg)?;
    let mut rows = scaling.evaluator(data, &task.test)?.report(predictor, "test")?;
    rows.extend(scaling.evaluator(data, &task.train)?.report(predictor, "train")?);
    Ok(rows)
}

pub(crate) fn train(cfg: &ExperimentConfig) -> Result<TrainState> {
    let data = &cfg.timeseries;
    let (task, scaling) = prepare(cfg)?;
    let (x, y) = scaling.pairs(data, &task.train)?;
    let labeled = PairPool::new(x, y)?;
    let unlabeled = SequencePool::singletons(labeled.inputs().clone())?;
    let label_groups = scaling.target.groups(&task.train)?;
    let sim = data.simulator(&label_groups);
    let test_eval = scaling.evaluator(data, &task.test)?;
    let mode = cfg.train.mode;
    let predictor = cfg.model.predictor(data.history * CHANNELS, data.horizon * CHANNELS)?;
    let critic = cfg.model.critic(data.horizon * CHANNELS)?;
    let sources = Sources {
        unlabeled: mode.uses_unlabeled().then_some(&unlabeled),
        labeled: mode.uses_labeled().then_some(&labeled),
        simulator: mode.uses_simulator().then_some(&sim as &dyn LabelSimulator),
    };
    trainer::run(&cfg.train, &predictor, Some(&critic), sources, Some(&test_eval))
}
