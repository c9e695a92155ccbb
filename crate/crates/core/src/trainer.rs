//! Alternating min-max training for the four learning paradigms: supervised
//! (SL), explicit constraint (ECL), adversarial constraint (ACL) and
//! semi-supervised adversarial (SSACL).
//!
//! The predictor maps one input row to one label row. Adversarial and
//! constraint terms act on sequences of `window` consecutive inputs whose
//! framewise predictions are concatenated step-major, so the critic sees
//! `window · label_dim` values per sequence.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use log::warn;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{init_params, mlp_forward, AdamConfig, AdamState, BoundParams, MlpConfig, Parameters};
use crate::objectives::{
    critic_objective, generator_objective, gradient_penalty, handcrafted_pendulum_constraint,
    semi_supervised_loss, supervised_loss, LossValue, SinusoidFit,
};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mode {
    Sl,
    Ecl,
    Acl,
    Ssacl,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Sl, Mode::Ecl, Mode::Acl, Mode::Ssacl];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Sl => "SL",
            Mode::Ecl => "ECL",
            Mode::Acl => "ACL",
            Mode::Ssacl => "SSACL",
        }
    }

    pub fn uses_labeled(self) -> bool {
        matches!(self, Mode::Sl | Mode::Ssacl)
    }

    pub fn uses_unlabeled(self) -> bool {
        !matches!(self, Mode::Sl)
    }

    pub fn uses_simulator(self) -> bool {
        matches!(self, Mode::Acl | Mode::Ssacl)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Argument(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Weight of the supervised term in SSACL.
    pub alpha: f64,
    pub critic_steps: usize,
    /// Gradient-penalty weight.
    pub lambda: f64,
    pub steps: u64,
    pub batch_size: usize,
    /// Decoupled decay on the predictor; the only form of `R(θ)` offered.
    pub weight_decay: f64,
    pub seed: u64,
    pub eval_interval: u64,
    pub predictor_lr: f64,
    pub critic_lr: f64,
    /// Frames per sequence fed to the critic or the constraint.
    pub window: usize,
    /// Sinusoid grid for the ECL constraint; required in ECL mode.
    pub constraint: Option<SinusoidFit>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Acl,
            alpha: 10.0,
            critic_steps: 5,
            lambda: 10.0,
            steps: 1000,
            batch_size: 32,
            weight_decay: 0.0,
            seed: 0,
            eval_interval: 100,
            predictor_lr: 1e-4,
            critic_lr: 1e-4,
            window: 5,
            constraint: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("invalid {what}")));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha (must be ≥ 0)");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda (must be ≥ 0)");
        }
        if self.critic_steps == 0 {
            return bad("critic_steps (must be ≥ 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size (must be ≥ 1)");
        }
        if self.window == 0 {
            return bad("window (must be ≥ 1)");
        }
        if self.eval_interval == 0 {
            return bad("eval_interval (must be ≥ 1)");
        }
        for (name, v) in [
            ("predictor_lr", self.predictor_lr),
            ("critic_lr", self.critic_lr),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(name);
            }
        }
        Ok(())
    }

    fn predictor_adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.predictor_lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    fn critic_adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.critic_lr,
            ..AdamConfig::default()
        }
    }
}

/// Inputs without labels, grouped into equal-length sequences of frame
/// indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SequencePool {
    frames: Tensor,
    sequences: Vec<Vec<usize>>,
}

impl SequencePool {
    pub fn new(frames: Tensor, sequences: Vec<Vec<usize>>) -> Result<Self> {
        if !frames.is_matrix() {
            return Err(Error::Rank {
                op: "SequencePool",
                shape: frames.shape().to_vec(),
            });
        }
        let len = sequences.first().map(Vec::len).unwrap_or(0);
        if len == 0 || sequences.iter().any(|s| s.len() != len) {
            return Err(Error::Argument("sequences must be non-empty and equal length".into()));
        }
        if sequences.iter().flatten().any(|&i| i >= frames.rows()) {
            return Err(Error::Argument("sequence index out of range".into()));
        }
        Ok(SequencePool { frames, sequences })
    }

    /// Every frame is its own length-1 sequence.
    pub fn singletons(frames: Tensor) -> Result<Self> {
        let n = frames.rows();
        Self::new(frames, (0..n).map(|i| vec![i]).collect())
    }

    pub fn frames(&self) -> &Tensor {
        &self.frames
    }

    pub fn sequences(&self) -> &[Vec<usize>] {
        &self.sequences
    }

    pub fn sequence_len(&self) -> usize {
        self.sequences[0].len()
    }

    /// `batch · len` frames, sequences drawn uniformly with replacement.
    pub fn sample(&self, batch: usize, rng: &mut dyn RngCore) -> Tensor {
        let mut idx = Vec::with_capacity(batch * self.sequence_len());
        for _ in 0..batch {
            idx.extend_from_slice(&self.sequences[rng.gen_range(0..self.sequences.len())]);
        }
        self.frames.select_rows(&idx)
    }
}

/// Labeled `(x, y)` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PairPool {
    inputs: Tensor,
    targets: Tensor,
}

impl PairPool {
    pub fn new(inputs: Tensor, targets: Tensor) -> Result<Self> {
        if !inputs.is_matrix() || !targets.is_matrix() || inputs.rows() != targets.rows() {
            return Err(Error::dimension("PairPool", inputs.shape(), targets.shape()));
        }
        Ok(PairPool { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn targets(&self) -> &Tensor {
        &self.targets
    }

    /// `batch` rows drawn uniformly with replacement.
    pub fn sample(&self, batch: usize, rng: &mut dyn RngCore) -> (Tensor, Tensor) {
        let idx: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..self.len())).collect();
        (self.inputs.select_rows(&idx), self.targets.select_rows(&idx))
    }
}

/// Source of label sequences drawn from the prior, `batch × (window·dim)`.
pub trait LabelSimulator {
    fn sample(&self, batch: usize, rng: &mut dyn RngCore) -> Result<Tensor>;
}

impl<F> LabelSimulator for F
where
    F: Fn(usize, &mut dyn RngCore) -> Result<Tensor>,
{
    fn sample(&self, batch: usize, rng: &mut dyn RngCore) -> Result<Tensor> {
        self(batch, rng)
    }
}

/// Data available to a run. Which fields are read depends on the mode.
#[derive(Default, Clone, Copy)]
pub struct Sources<'a> {
    pub unlabeled: Option<&'a SequencePool>,
    pub labeled: Option<&'a PairPool>,
    pub simulator: Option<&'a dyn LabelSimulator>,
}

/// Held-out evaluation of the current predictor.
pub trait Evaluator {
    fn names(&self) -> Vec<String>;
    fn evaluate(&self, predictor: &Parameters) -> Result<Vec<f64>>;
}

/// Loss terms observed during one step; absent terms were not computed.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepLosses {
    pub sup: Option<f64>,
    pub critic: Option<f64>,
    /// Generator objective, or the constraint value in ECL mode.
    pub gen: Option<f64>,
    pub gp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub step: u64,
    pub losses: StepLosses,
    pub metrics: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    metric_names: Vec<String>,
    rows: Vec<HistoryRow>,
}

impl History {
    pub fn new(metric_names: Vec<String>) -> Self {
        History {
            metric_names,
            rows: Vec::new(),
        }
    }

    pub fn metric_names(&self) -> &[String] {
        &self.metric_names
    }

    pub fn rows(&self) -> &[HistoryRow] {
        &self.rows
    }

    pub fn last(&self) -> Option<&HistoryRow> {
        self.rows.last()
    }

    pub fn push(&mut self, row: HistoryRow) -> Result<()> {
        if row.metrics.len() != self.metric_names.len() {
            return Err(Error::dimension(
                "history row",
                &[row.metrics.len()],
                &[self.metric_names.len()],
            ));
        }
        if self.rows.last().is_some_and(|r| r.step >= row.step) {
            return Err(Error::State(format!("history step {} out of order", row.step)));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Header `step,loss_sup,loss_critic,loss_gen,loss_gp,<metrics>`; absent
    /// losses are empty cells, floats use shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["step", "loss_sup", "loss_critic", "loss_gen", "loss_gp"];
        header.extend(self.metric_names.iter().map(String::as_str));
        w.write_record(&header)?;
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let l = r.losses;
            let mut rec = vec![r.step.to_string(), cell(l.sup), cell(l.critic), cell(l.gen), cell(l.gp)];
            rec.extend(r.metrics.iter().map(|m| m.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("history", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Critic {
    params: Parameters,
    opt: AdamState,
}

/// Everything that evolves during training. Cloning snapshots it exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    config: TrainConfig,
    predictor: Parameters,
    predictor_opt: AdamState,
    critic: Option<Critic>,
    step: u64,
    history: History,
    rng: ChaCha8Rng,
}

impl TrainState {
    /// Initializes both networks from `config.seed`. A critic is required in
    /// ACL and SSACL; its input must be `window · label_dim` wide with a
    /// scalar output.
    pub fn new(
        config: TrainConfig,
        predictor: &MlpConfig,
        critic: Option<&MlpConfig>,
        metric_names: Vec<String>,
    ) -> Result<Self> {
        config.validate()?;
        predictor.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let predictor_params = init_params(predictor, &mut rng);
        let critic = match critic {
            Some(c) => {
                c.validate()?;
                let want = config.window * predictor.output_width();
                if c.input_width() != want || c.output_width() != 1 {
                    return Err(Error::dimension(
                        "critic widths",
                        &[c.input_width(), c.output_width()],
                        &[want, 1],
                    ));
                }
                let params = init_params(c, &mut rng);
                let opt = AdamState::new(config.critic_adam(), &params);
                Some(Critic { params, opt })
            }
            None if config.mode.uses_simulator() => {
                return Err(Error::Config(format!("mode {} needs a critic", config.mode)));
            }
            None => None,
        };
        let predictor_opt = AdamState::new(config.predictor_adam(), &predictor_params);
        Ok(TrainState {
            config,
            predictor: predictor_params,
            predictor_opt,
            critic,
            step: 0,
            history: History::new(metric_names),
            rng,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn predictor(&self) -> &Parameters {
        &self.predictor
    }

    pub fn predictor_mut(&mut self) -> &mut Parameters {
        &mut self.predictor
    }

    pub fn critic(&self) -> Option<&Parameters> {
        self.critic.as_ref().map(|c| &c.params)
    }

    pub fn critic_mut(&mut self) -> Option<&mut Parameters> {
        self.critic.as_mut().map(|c| &mut c.params)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn require_mode(&self, op: &str, allowed: &[Mode]) -> Result<()> {
        if allowed.contains(&self.config.mode) {
            Ok(())
        } else {
            Err(Error::Config(format!("{op} is not used in mode {}", self.config.mode)))
        }
    }

    fn label_dim(&self) -> usize {
        self.predictor.config().output_width()
    }

    /// Framewise predictions on `window`-frame sequences, reshaped to one
    /// row per sequence.
    fn framewise(&self, g: &mut Graph, bound: &BoundParams, inputs: &Tensor) -> Result<Var> {
        let n = self.config.window;
        if !inputs.is_matrix() || inputs.rows() % n != 0 {
            return Err(Error::dimension("sequence batch", inputs.shape(), &[n, 0]));
        }
        let x = g.constant(inputs.clone());
        let out = mlp_forward(g, bound, x)?;
        g.reshape(out, &[inputs.rows() / n, n * self.label_dim()])
    }

    /// Predicted sequences without gradient tracking.
    pub fn predict_sequences(&self, inputs: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.predictor.bind_frozen(&mut g);
        let out = self.framewise(&mut g, &bound, inputs)?;
        Ok(g.value(out).clone())
    }

    /// One critic update ascending `critic_objective − gradient_penalty` on
    /// fixed sequences. Returns the objective and penalty before the update.
    pub fn critic_update(&mut self, real: &Tensor, fake: &Tensor) -> Result<(f64, f64)> {
        let critic = self
            .critic
            .as_mut()
            .ok_or_else(|| Error::Config("no critic configured".into()))?;
        if real.shape() != fake.shape() {
            return Err(Error::dimension("critic batch", real.shape(), fake.shape()));
        }
        let mut g = Graph::new();
        let bound = critic.params.bind(&mut g);
        let rv = g.constant(real.clone());
        let fv = g.constant(fake.clone());
        let rs = mlp_forward(&mut g, &bound, rv)?;
        let fs = mlp_forward(&mut g, &bound, fv)?;
        let obj = critic_objective(&mut g, rs, fs)?;
        let gp = gradient_penalty(&mut g, &bound, real, fake, self.config.lambda, &mut self.rng)?;
        let loss = g.sub(gp.var, obj.var)?;
        let grads = g.backward(loss)?;
        let grads = bound.gradients(&g, &grads);
        critic.opt.step(&mut critic.params, &grads)?;
        Ok((obj.value, gp.value))
    }

    fn critic_phase(&mut self, unlabeled: &Tensor, simulated: &Tensor) -> Result<(f64, f64)> {
        let fake = self.predict_sequences(unlabeled)?;
        if fake.shape() != simulated.shape() {
            return Err(Error::dimension("simulator batch", simulated.shape(), fake.shape()));
        }
        let mut last = (0.0, 0.0);
        for _ in 0..self.config.critic_steps {
            last = self.critic_update(simulated, &fake)?;
        }
        Ok(last)
    }

    /// Predictor gradients of `gen + α·sup`, or of whichever term is given
    /// alone (unweighted). Also returns the term values.
    pub fn predictor_gradients(
        &self,
        unlabeled: Option<&Tensor>,
        labeled: Option<(&Tensor, &Tensor)>,
        alpha: f64,
    ) -> Result<(Vec<Tensor>, StepLosses)> {
        let mut g = Graph::new();
        let bound = self.predictor.bind(&mut g);
        let gen = match unlabeled {
            Some(u) => {
                let critic = self
                    .critic
                    .as_ref()
                    .ok_or_else(|| Error::Config("no critic configured".into()))?;
                let fake = self.framewise(&mut g, &bound, u)?;
                let frozen = critic.params.bind_frozen(&mut g);
                let scores = mlp_forward(&mut g, &frozen, fake)?;
                Some(generator_objective(&mut g, scores)?)
            }
            None => None,
        };
        let sup = match labeled {
            Some((x, y)) => {
                let xv = g.constant(x.clone());
                let pred = mlp_forward(&mut g, &bound, xv)?;
                let yv = g.constant(y.clone());
                Some(supervised_loss(&mut g, pred, yv)?)
            }
            None => None,
        };
        let total: LossValue = match (gen, sup) {
            (Some(a), Some(s)) => semi_supervised_loss(&mut g, a, s, alpha)?,
            (Some(a), None) => a,
            (None, Some(s)) => s,
            (None, None) => return Err(Error::Argument("no predictor objective".into())),
        };
        let grads = g.backward(total.var)?;
        let losses = StepLosses {
            sup: sup.map(|s| s.value),
            gen: gen.map(|a| a.value),
            ..StepLosses::default()
        };
        Ok((bound.gradients(&g, &grads), losses))
    }

    fn finish(&mut self, grads: &[Tensor]) -> Result<()> {
        self.predictor_opt.step(&mut self.predictor, grads)?;
        self.step += 1;
        Ok(())
    }

    /// One Adam update on the supervised loss.
    pub fn supervised_step(&mut self, inputs: &Tensor, targets: &Tensor) -> Result<StepLosses> {
        self.require_mode("supervised_step", &[Mode::Sl, Mode::Ssacl])?;
        let (grads, losses) = self.predictor_gradients(None, Some((inputs, targets)), 1.0)?;
        self.finish(&grads)?;
        Ok(losses)
    }

    /// `critic_steps` critic updates, then one predictor update on the
    /// generator objective.
    pub fn acl_step(&mut self, unlabeled: &Tensor, simulated: &Tensor) -> Result<StepLosses> {
        self.require_mode("acl_step", &[Mode::Acl, Mode::Ssacl])?;
        let (critic, gp) = self.critic_phase(unlabeled, simulated)?;
        let (grads, losses) = self.predictor_gradients(Some(unlabeled), None, 0.0)?;
        self.finish(&grads)?;
        Ok(StepLosses {
            critic: Some(critic),
            gp: Some(gp),
            ..losses
        })
    }

    /// As [`TrainState::acl_step`] with `α·supervised_loss` added to the
    /// predictor objective.
    pub fn ssacl_step(
        &mut self,
        unlabeled: &Tensor,
        simulated: &Tensor,
        labeled: Option<(&Tensor, &Tensor)>,
    ) -> Result<StepLosses> {
        self.require_mode("ssacl_step", &[Mode::Ssacl])?;
        if labeled.is_none() && self.config.alpha > 0.0 {
            return Err(Error::Config("SSACL with α > 0 needs labeled pairs".into()));
        }
        let (critic, gp) = self.critic_phase(unlabeled, simulated)?;
        let (grads, losses) =
            self.predictor_gradients(Some(unlabeled), labeled, self.config.alpha)?;
        self.finish(&grads)?;
        Ok(StepLosses {
            critic: Some(critic),
            gp: Some(gp),
            ..losses
        })
    }

    /// One predictor update on the mean sinusoid-fit residual of the
    /// predicted sequences. Requires scalar labels.
    pub fn ecl_step(&mut self, unlabeled: &Tensor) -> Result<StepLosses> {
        self.require_mode("ecl_step", &[Mode::Ecl])?;
        let fit = self
            .config
            .constraint
            .clone()
            .ok_or_else(|| Error::Config("ECL needs a constraint".into()))?;
        if self.label_dim() != 1 {
            return Err(Error::Config("the pendulum constraint needs scalar labels".into()));
        }
        let mut g = Graph::new();
        let bound = self.predictor.bind(&mut g);
        let traj = self.framewise(&mut g, &bound, unlabeled)?;
        let h = handcrafted_pendulum_constraint(&mut g, traj, &fit)?;
        let grads = g.backward(h.var)?;
        let grads = bound.gradients(&g, &grads);
        self.finish(&grads)?;
        Ok(StepLosses {
            gen: Some(h.value),
            ..StepLosses::default()
        })
    }

    fn record(&mut self, losses: StepLosses, evaluator: Option<&dyn Evaluator>) -> Result<()> {
        let metrics = match evaluator {
            Some(e) => e.evaluate(&self.predictor)?,
            None => Vec::new(),
        };
        self.history.push(HistoryRow {
            step: self.step,
            losses,
            metrics,
        })
    }
}

fn check_sources(mode: Mode, sources: &Sources<'_>) -> Result<()> {
    let missing = |what: &str| Err(Error::Config(format!("mode {mode} needs {what}")));
    if mode.uses_labeled() && sources.labeled.is_none_or(PairPool::is_empty) {
        return missing("labeled pairs (x, y)");
    }
    if mode.uses_unlabeled() && sources.unlabeled.is_none() {
        return missing("unlabeled inputs (x,)");
    }
    if mode.uses_simulator() && sources.simulator.is_none() {
        return missing("simulated labels (,y)");
    }
    if !mode.uses_labeled() && sources.labeled.is_some() {
        warn!("mode {mode} ignores the supplied labeled pairs");
    }
    if !mode.uses_unlabeled() && sources.unlabeled.is_some() {
        warn!("mode {mode} ignores the supplied unlabeled inputs");
    }
    if !mode.uses_simulator() && sources.simulator.is_some() {
        warn!("mode {mode} ignores the supplied simulator");
    }
    Ok(())
}

/// Runs `config.steps` steps, recording a history row every
/// `eval_interval` steps and after the last one.
pub fn run(
    config: &TrainConfig,
    predictor: &MlpConfig,
    critic: Option<&MlpConfig>,
    sources: Sources<'_>,
    evaluator: Option<&dyn Evaluator>,
) -> Result<TrainState> {
    config.validate()?;
    let mode = config.mode;
    check_sources(mode, &sources)?;
    if mode == Mode::Ecl && config.constraint.is_none() {
        return Err(Error::Config("mode ECL needs a constraint".into()));
    }
    if let Some(u) = sources.unlabeled.filter(|_| mode.uses_unlabeled()) {
        if u.sequence_len() != config.window {
            return Err(Error::Config(format!(
                "unlabeled sequences have length {}, window is {}",
                u.sequence_len(),
                config.window
            )));
        }
    }
    let critic = critic.filter(|_| mode.uses_simulator());
    let names = evaluator.map(|e| e.names()).unwrap_or_default();
    let mut state = TrainState::new(config.clone(), predictor, critic, names)?;
    let batch = config.batch_size;
    while state.step < config.steps {
        let losses = match mode {
            Mode::Sl => {
                let (x, y) = sources.labeled.unwrap().sample(batch, &mut state.rng);
                state.supervised_step(&x, &y)?
            }
            Mode::Ecl => {
                let u = sources.unlabeled.unwrap().sample(batch, &mut state.rng);
                state.ecl_step(&u)?
            }
            Mode::Acl => {
                let u = sources.unlabeled.unwrap().sample(batch, &mut state.rng);
                let s = sources.simulator.unwrap().sample(batch, &mut state.rng)?;
                state.acl_step(&u, &s)?
            }
            Mode::Ssacl => {
                let u = sources.unlabeled.unwrap().sample(batch, &mut state.rng);
                let s = sources.simulator.unwrap().sample(batch, &mut state.rng)?;
                let (x, y) = sources.labeled.unwrap().sample(batch, &mut state.rng);
                state.ssacl_step(&u, &s, Some((&x, &y)))?
            }
        };
        if state.step % config.eval_interval == 0 || state.step == config.steps {
            state.record(losses, evaluator)?;
        }
    }
    Ok(state)
}
