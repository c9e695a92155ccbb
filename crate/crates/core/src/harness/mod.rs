//! Experiment configuration, dataset construction, training runs and result
//! files for the pendulum, skeleton and time-series tasks.
//!
//! A run is described by one TOML file (see [`ExperimentConfig`]) and
//! produces `history.csv`, `report.csv` and `predictor.json` in the output
//! directory.

pub mod data;
pub mod pendulum;
pub mod skeleton;
pub mod timeseries;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{checkpoint, Activation, MlpConfig, Parameters};
use crate::objectives::SinusoidFit;
use crate::tensor::Tensor;
use crate::trainer::{self, Mode, PairPool, SequencePool, Sources, TrainConfig, TrainState};

pub use data::{load_timeseries_csv, make_windows, split_groups, split_indices, LabeledGroup};
pub use pendulum::{PendulumData, PendulumEvaluator};
pub use skeleton::{SkeletonData, SkeletonEvaluator};
pub use timeseries::{TimeSeriesData, TimeSeriesEvaluator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Pendulum,
    Skeleton,
    Timeseries,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Pendulum => "pendulum",
            Experiment::Skeleton => "skeleton",
            Experiment::Timeseries => "timeseries",
        }
    }
}

/// Predictor and critic shapes: `depth` weight layers, `width` units in each
/// hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub width: usize,
    pub depth: usize,
    pub critic_width: usize,
    pub critic_depth: usize,
    pub hidden: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            width: 64,
            depth: 4,
            critic_width: 64,
            critic_depth: 4,
            hidden: Activation::Relu,
        }
    }
}

impl ModelConfig {
    pub fn predictor(&self, input: usize, output: usize) -> Result<MlpConfig> {
        MlpConfig::uniform(input, self.width, self.depth, output, self.hidden)
    }

    pub fn critic(&self, input: usize) -> Result<MlpConfig> {
        MlpConfig::uniform(input, self.critic_width, self.critic_depth, 1, self.hidden)
    }
}

/// Everything needed to reproduce one run. Unset keys take the preset for
/// the file's `experiment` and `train.mode` (see [`ExperimentConfig::preset`]).
///
/// ```toml
/// experiment = "pendulum"     # pendulum | skeleton | timeseries
/// labeled_groups = 0          # i: training groups whose labels are used
/// data_seed = 0               # synthetic data generation
/// split_seed = 0              # train/test split and choice of labeled groups
/// out = "runs/pendulum"       # optional; the CLI --out flag overrides it
///
/// [train]                     # trainer settings
/// mode = "ACL"                # SL | ECL | ACL | SSACL
/// steps = 3000
///
/// [model]
/// width = 64
///
/// [pendulum]                  # per-experiment dataset settings
/// train_clips = 5
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub labeled_groups: usize,
    pub data_seed: u64,
    pub split_seed: u64,
    pub out: Option<PathBuf>,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub pendulum: PendulumData,
    pub skeleton: SkeletonData,
    pub timeseries: TimeSeriesData,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: Experiment::Pendulum,
            labeled_groups: 0,
            data_seed: 0,
            split_seed: 0,
            out: None,
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            pendulum: PendulumData::default(),
            skeleton: SkeletonData::default(),
            timeseries: TimeSeriesData::default(),
        }
    }
}

impl ExperimentConfig {
    /// Tuned defaults for one experiment and mode.
    pub fn preset(experiment: Experiment, mode: Mode) -> Self {
        let mut cfg = ExperimentConfig {
            experiment,
            ..Default::default()
        };
        cfg.train.mode = mode;
        match experiment {
            Experiment::Pendulum => pendulum::apply_preset(&mut cfg),
            Experiment::Skeleton => skeleton::apply_preset(&mut cfg),
            Experiment::Timeseries => timeseries::apply_preset(&mut cfg),
        }
        cfg
    }

    /// Parses a config whose unset keys take the preset of its experiment
    /// and mode.
    pub fn from_toml(text: &str) -> Result<Self> {
        let bad = |e: &dyn std::fmt::Display| Error::Config(e.to_string());
        let table: toml::Table = text.parse().map_err(|e| bad(&e))?;
        let experiment = match table.get("experiment") {
            Some(v) => v.clone().try_into().map_err(|e| bad(&e))?,
            None => Experiment::Pendulum,
        };
        let mode = match table.get("train").and_then(|t| t.get("mode")) {
            Some(v) => v.clone().try_into().map_err(|e| bad(&e))?,
            None => Mode::Acl,
        };
        let mut merged = toml::Value::try_from(Self::preset(experiment, mode)).map_err(|e| bad(&e))?;
        overlay(&mut merged, toml::Value::Table(table));
        merged.try_into().map_err(|e| bad(&e))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| e.context(format!("loading {}", path.display())))
    }
}

fn overlay(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Training and held-out groups of a frame-based task.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTask {
    pub train: Vec<LabeledGroup>,
    pub test: Vec<LabeledGroup>,
}

/// One metric value for a split.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub split: String,
    pub name: String,
    pub value: f64,
}

impl ReportRow {
    pub fn new(split: &str, name: &str, value: f64) -> Self {
        ReportRow {
            split: split.into(),
            name: name.into(),
            value,
        }
    }
}

/// Final metrics of one run, written as `split,mode,labeled,name,value`.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub mode: Mode,
    pub labeled: usize,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn get(&self, split: &str, name: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.split == split && r.name == name)
            .map(|r| r.value)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["split", "mode", "labeled", "name", "value"])?;
        for r in &self.rows {
            w.write_record([
                r.split.as_str(),
                self.mode.as_str(),
                &self.labeled.to_string(),
                &r.name,
                &r.value.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("report", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

pub struct Outcome {
    pub state: TrainState,
    pub report: Report,
}

impl Outcome {
    /// Writes `history.csv`, `report.csv` and `predictor.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, text: String| {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(path, e))
        };
        put("history.csv", self.state.history().to_csv_string()?)?;
        put("report.csv", self.report.to_csv_string()?)?;
        checkpoint::save(dir.join("predictor.json"), self.state.predictor())
    }
}

/// Builds the datasets, trains in the configured mode and evaluates.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let name = cfg.experiment.as_str();
    info!("{name}: mode {} with {} labeled groups", cfg.train.mode, cfg.labeled_groups);
    let result = match cfg.experiment {
        Experiment::Pendulum => pendulum::train(cfg),
        Experiment::Skeleton => skeleton::train(cfg),
        Experiment::Timeseries => timeseries::train(cfg),
    };
    let state = result.map_err(|e| e.context(format!("{name} experiment")))?;
    let report = evaluate(cfg, state.predictor())?;
    Ok(Outcome { state, report })
}

/// Rebuilds the datasets of `cfg` and scores `predictor` on both splits.
pub fn evaluate(cfg: &ExperimentConfig, predictor: &Parameters) -> Result<Report> {
    let rows = match cfg.experiment {
        Experiment::Pendulum => pendulum::evaluate(cfg, predictor),
        Experiment::Skeleton => skeleton::evaluate(cfg, predictor),
        Experiment::Timeseries => timeseries::evaluate(cfg, predictor),
    }
    .map_err(|e| e.context(format!("{} evaluation", cfg.experiment.as_str())))?;
    Ok(Report {
        mode: cfg.train.mode,
        labeled: cfg.labeled_groups,
        rows,
    })
}

/// `count` label sequences from the experiment's simulator in display
/// units (pixels for the skeleton, original units for the time series),
/// with one column name per entry.
pub fn simulate(cfg: &ExperimentConfig, count: usize, seed: u64) -> Result<(Vec<String>, Tensor)> {
    use crate::simulators::{CHANNEL_NAMES, JOINT_NAMES};
    use crate::trainer::LabelSimulator;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = cfg.train.window;
    match cfg.experiment {
        Experiment::Pendulum => {
            cfg.pendulum.validate()?;
            let names = (0..w).map(|j| format!("y_t{j}")).collect();
            Ok((names, cfg.pendulum.simulator(w).sample(count, &mut rng)?))
        }
        Experiment::Skeleton => {
            cfg.skeleton.validate()?;
            let names = (0..w)
                .flat_map(|j| JOINT_NAMES.iter().flat_map(move |n| ["x", "y"].map(|a| format!("t{j}_{n}_{a}"))))
                .collect();
            let labels = cfg.skeleton.simulator(w).sample(count, &mut rng)?;
            Ok((names, labels.map(skeleton::denormalize)))
        }
        Experiment::Timeseries => {
            let data = &cfg.timeseries;
            let task = data.build(cfg.data_seed)?;
            let names = (data.history..data.steps())
                .flat_map(|j| CHANNEL_NAMES.iter().map(move |n| format!("t{j}_{n}")))
                .collect();
            let labels = data.simulator(&task.train).sample(count, &mut rng)?;
            Ok((names, labels))
        }
    }
}

/// Mean, sample standard deviation and run count of every
/// `(split, mode, labeled, name)` found in the given `report.csv` files.
pub fn aggregate_reports(paths: &[PathBuf]) -> Result<String> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(String, String, usize, String), Vec<f64>> = BTreeMap::new();
    for path in paths {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
        if header != ["split", "mode", "labeled", "name", "value"] {
            return Err(Error::Parse {
                line: 1,
                message: format!("{} is not a report file", path.display()),
            });
        }
        for record in reader.records() {
            let r = record?;
            let line = r.position().map_or(0, |p| p.line() as usize);
            let bad = |what: &str| Error::Parse {
                line,
                message: format!("{}: bad {what}", path.display()),
            };
            let labeled = r[2].parse().map_err(|_| bad("labeled count"))?;
            let value: f64 = r[4].parse().map_err(|_| bad("value"))?;
            groups
                .entry((r[0].to_owned(), r[1].to_owned(), labeled, r[3].to_owned()))
                .or_default()
                .push(value);
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["split", "mode", "labeled", "name", "mean", "std", "runs"])?;
    for ((split, mode, labeled, name), values) in &groups {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        w.write_record([
            split.as_str(),
            mode,
            &labeled.to_string(),
            name,
            &mean.to_string(),
            &std.to_string(),
            &values.len().to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Checks the labeled-group budget and picks that many training groups with
/// the split seed.
pub(crate) fn choose_labeled(cfg: &ExperimentConfig, n_train: usize) -> Result<Vec<usize>> {
    let i = cfg.labeled_groups;
    if i > n_train {
        return Err(Error::Config(format!(
            "labeled_groups = {i} exceeds the {n_train} training groups"
        )));
    }
    if cfg.train.mode.uses_labeled() && i == 0 {
        return Err(Error::Config(format!(
            "mode {} needs labeled_groups ≥ 1",
            cfg.train.mode
        )));
    }
    let mut order: Vec<usize> = (0..n_train).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.split_seed ^ 0x5eed_1abe));
    let mut chosen = order[..i].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

fn stack(groups: &[&LabeledGroup], pick: impl Fn(&LabeledGroup) -> &Tensor) -> Tensor {
    let cols = pick(groups[0]).cols();
    let data: Vec<f64> = groups.iter().flat_map(|g| pick(g).data().iter().copied()).collect();
    Tensor::matrix(data.len() / cols, cols, data)
}

/// Every length-`window` run of consecutive frames inside each group.
pub fn sequence_pool(groups: &[LabeledGroup], window: usize) -> Result<SequencePool> {
    let refs: Vec<&LabeledGroup> = groups.iter().collect();
    let frames = stack(&refs, |g| &g.inputs);
    let mut sequences = Vec::new();
    let mut offset = 0;
    for g in groups {
        if g.len() >= window {
            sequences.extend((0..=g.len() - window).map(|s| (offset + s..offset + s + window).collect()));
        }
        offset += g.len();
    }
    if sequences.is_empty() {
        return Err(Error::Config(format!("no group holds {window} consecutive frames")));
    }
    SequencePool::new(frames, sequences)
}

/// Frames and labels of the chosen groups, or `None` when nothing is chosen.
pub fn pair_pool(groups: &[LabeledGroup], chosen: &[usize]) -> Result<Option<PairPool>> {
    if chosen.is_empty() {
        return Ok(None);
    }
    let refs: Vec<&LabeledGroup> = chosen.iter().map(|&i| &groups[i]).collect();
    PairPool::new(stack(&refs, |g| &g.inputs), stack(&refs, |g| &g.labels)).map(Some)
}

/// Shared flow of the pendulum and skeleton tasks: unlabeled sequences from
/// every training group, labeled frames from the chosen ones.
pub(crate) fn train_frames(
    cfg: &ExperimentConfig,
    task: &FrameTask,
    simulator: &dyn trainer::LabelSimulator,
    evaluator: &dyn trainer::Evaluator,
) -> Result<TrainState> {
    let mode = cfg.train.mode;
    let chosen = choose_labeled(cfg, task.train.len())?;
    let unlabeled = sequence_pool(&task.train, cfg.train.window)?;
    let labeled = pair_pool(&task.train, &chosen)?;
    let d_in = task.train[0].inputs.cols();
    let d_out = task.train[0].labels.cols();
    let predictor = cfg.model.predictor(d_in, d_out)?;
    let critic = cfg.model.critic(cfg.train.window * d_out)?;
    let sources = Sources {
        unlabeled: mode.uses_unlabeled().then_some(&unlabeled),
        labeled: labeled.as_ref().filter(|_| mode.uses_labeled()),
        simulator: mode.uses_simulator().then_some(simulator),
    };
    trainer::run(&cfg.train, &predictor, Some(&critic), sources, Some(evaluator))
}

/// Default constraint grid matching an oscillator's period range.
pub(crate) fn sinusoid_fit_for(period_min: f64, period_max: f64) -> SinusoidFit {
    SinusoidFit {
        period_min,
        period_max,
        ..SinusoidFit::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(experiment: Experiment, mode: Mode) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::preset(experiment, mode);
        cfg.train.steps = 4;
        cfg.train.eval_interval = 2;
        cfg.train.batch_size = 4;
        cfg.model.width = 8;
        cfg.model.critic_width = 8;
        cfg.pendulum.clip_len = 20;
        cfg.timeseries.days = 10;
        cfg.timeseries.test_days = 3;
        cfg.timeseries.train_groups = 24;
        cfg.timeseries.test_groups = 8;
        cfg
    }

    #[test]
    fn files_layer_over_presets() {
        let cfg = ExperimentConfig::from_toml(
            "experiment = \"timeseries\"\n[train]\nmode = \"SSACL\"\nseed = 9\n",
        )
        .unwrap();
        let mut want = ExperimentConfig::preset(Experiment::Timeseries, Mode::Ssacl);
        want.train.seed = 9;
        assert_eq!(cfg, want);
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::preset(Experiment::Pendulum, Mode::Acl));
        assert!(ExperimentConfig::from_toml("[train]\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("experiment = \"video\"").is_err());
    }

    #[test]
    fn toml_round_trip() {
        for exp in [Experiment::Pendulum, Experiment::Skeleton, Experiment::Timeseries] {
            let mut cfg = ExperimentConfig::preset(exp, Mode::Ssacl);
            cfg.out = Some("runs/x".into());
            cfg.train.predictor_lr = 3.3e-4;
            let text = cfg.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg, "{text}");
        }
    }

    #[test]
    fn pendulum_report_has_correlation() {
        let out = run_experiment(&quick(Experiment::Pendulum, Mode::Acl)).unwrap();
        let csv = out.report.to_csv_string().unwrap();
        assert!(csv.starts_with("split,mode,labeled,name,value\n"));
        assert!(csv.contains("test,ACL,0,correlation,"));
    }

    #[test]
    fn skeleton_modes_report_the_same_rows() {
        let names = |mode| {
            let mut cfg = quick(Experiment::Skeleton, mode);
            cfg.labeled_groups = 1;
            let out = run_experiment(&cfg).unwrap();
            out.report.rows.iter().map(|r| (r.split.clone(), r.name.clone())).collect::<Vec<_>>()
        };
        let sl = names(Mode::Sl);
        assert_eq!(sl, names(Mode::Ssacl));
        assert_eq!(sl.iter().filter(|(s, _)| s == "test").count(), 7);
    }

    #[test]
    fn labeled_budget_is_checked() {
        let mut cfg = quick(Experiment::Skeleton, Mode::Sl);
        cfg.labeled_groups = 0;
        assert!(matches!(choose_labeled(&cfg, 28), Err(Error::Config(_))));
        cfg.labeled_groups = 29;
        assert!(choose_labeled(&cfg, 28).is_err());
        cfg.labeled_groups = 5;
        let chosen = choose_labeled(&cfg, 28).unwrap();
        assert_eq!(chosen.len(), 5);
        assert_eq!(chosen, choose_labeled(&cfg, 28).unwrap());
    }

    #[test]
    fn only_training_groups_feed_the_objectives() {
        let mut cfg = quick(Experiment::Skeleton, Mode::Ssacl);
        cfg.labeled_groups = 3;
        let task = cfg.skeleton.build(cfg.data_seed, cfg.split_seed).unwrap();
        let pool = sequence_pool(&task.train, cfg.train.window).unwrap();
        let frames = pool.frames();
        assert_eq!(frames.rows(), task.train.iter().map(LabeledGroup::len).sum::<usize>());
        for test in &task.test {
            for i in 0..test.len() {
                assert!((0..frames.rows()).all(|r| frames.row(r) != test.inputs.row(i)));
            }
        }
        let chosen = choose_labeled(&cfg, task.train.len()).unwrap();
        let pairs = pair_pool(&task.train, &chosen).unwrap().unwrap();
        assert_eq!(pairs.len(), chosen.iter().map(|&i| task.train[i].len()).sum::<usize>());
    }

    #[test]
    fn simulated_columns_match_names() {
        for exp in [Experiment::Pendulum, Experiment::Skeleton, Experiment::Timeseries] {
            let cfg = quick(exp, Mode::Acl);
            let (names, labels) = simulate(&cfg, 6, 1).unwrap();
            assert_eq!(labels.rows(), 6);
            assert_eq!(labels.cols(), names.len());
            assert_eq!(simulate(&cfg, 6, 1).unwrap().1, labels);
        }
        let (names, _) = simulate(&quick(Experiment::Timeseries, Mode::Acl), 1, 0).unwrap();
        assert_eq!(names[0], "t5_temp_in");
        assert_eq!(names.len(), 8);
    }

    #[test]
    fn reports_aggregate_by_key() {
        let dir = tempfile::tempdir().unwrap();
        let mut paths = Vec::new();
        for (i, v) in [0.5, 0.7].iter().enumerate() {
            let report = Report {
                mode: Mode::Ssacl,
                labeled: 1,
                rows: vec![ReportRow::new("test", "pck_mean", *v)],
            };
            let p = dir.path().join(format!("r{i}.csv"));
            fs::write(&p, report.to_csv_string().unwrap()).unwrap();
            paths.push(p);
        }
        let text = aggregate_reports(&paths).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("split,mode,labeled,name,mean,std,runs"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(&row[..4], ["test", "SSACL", "1", "pck_mean"]);
        assert!((row[4].parse::<f64>().unwrap() - 0.6).abs() < 1e-12);
        assert!((row[5].parse::<f64>().unwrap() - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(row[6], "2");
        fs::write(&paths[0], "a,b\n1,2\n").unwrap();
        assert!(aggregate_reports(&paths).is_err());
    }

    #[test]
    fn outcome_files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&quick(Experiment::Timeseries, Mode::Ssacl)).unwrap();
        out.write(dir.path()).unwrap();
        for f in ["history.csv", "report.csv", "predictor.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let params = checkpoint::load(dir.path().join("predictor.json")).unwrap();
        let again = evaluate(&quick(Experiment::Timeseries, Mode::Ssacl), &params).unwrap();
        assert_eq!(again, out.report);
    }
}
