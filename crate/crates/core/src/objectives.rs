//! Training objectives: supervised regression, the hand-written pendulum
//! constraint, the critic/generator pair with gradient penalty, and their
//! semi-supervised combination.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{mlp_input_gradient, BoundParams};
use crate::tensor::Tensor;

/// A differentiable scalar loss together with its plain value for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub var: Var,
    pub value: f64,
}

impl LossValue {
    fn of(g: &Graph, var: Var) -> Result<Self> {
        let value = g.value(var).item()?;
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "loss" });
        }
        Ok(LossValue { var, value })
    }
}

/// Mean squared error over every entry.
pub fn supervised_loss(g: &mut Graph, pred: Var, target: Var) -> Result<LossValue> {
    if g.shape(pred) != g.shape(target) {
        return Err(Error::dimension("supervised_loss", g.shape(pred), g.shape(target)));
    }
    let diff = g.sub(pred, target)?;
    let sq = g.square(diff)?;
    let loss = g.mean(sq)?;
    LossValue::of(g, loss)
}

/// `mean(real) − mean(fake)`: the quantity the critic maximizes.
pub fn critic_objective(g: &mut Graph, real_scores: Var, fake_scores: Var) -> Result<LossValue> {
    let real = g.mean(real_scores)?;
    let fake = g.mean(fake_scores)?;
    let obj = g.sub(real, fake)?;
    LossValue::of(g, obj)
}

/// `−mean(fake)`: the predictor's side of the adversarial game.
pub fn generator_objective(g: &mut Graph, fake_scores: Var) -> Result<LossValue> {
    let fake = g.mean(fake_scores)?;
    let loss = g.neg(fake)?;
    LossValue::of(g, loss)
}

/// `λ·mean((‖∇D(ŷ)‖₂ − 1)²)` over interpolates `ŷ = ε·real + (1−ε)·fake`,
/// one uniform `ε` per row. Differentiable in the critic parameters.
pub fn gradient_penalty<R: Rng + ?Sized>(
    g: &mut Graph,
    critic: &BoundParams,
    real: &Tensor,
    fake: &Tensor,
    lambda: f64,
    rng: &mut R,
) -> Result<LossValue> {
    if real.shape() != fake.shape() || !real.is_matrix() {
        return Err(Error::dimension("gradient_penalty", real.shape(), fake.shape()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Argument(format!("penalty weight must be ≥ 0, got {lambda}")));
    }
    let cols = real.cols();
    let mut mixed = Vec::with_capacity(real.numel());
    for i in 0..real.rows() {
        let eps: f64 = rng.gen();
        mixed.extend(
            real.row(i)
                .iter()
                .zip(fake.row(i))
                .map(|(r, f)| eps * r + (1.0 - eps) * f),
        );
    }
    let interpolates = Tensor::matrix(real.rows(), cols, mixed);
    penalty_at(g, critic, &interpolates, lambda)
}

/// Penalty evaluated at explicit points, no sampling.
pub fn penalty_at(
    g: &mut Graph,
    critic: &BoundParams,
    points: &Tensor,
    lambda: f64,
) -> Result<LossValue> {
    let grad = mlp_input_gradient(g, critic, points)?;
    let norms = g.row_norm(grad)?;
    let dev = g.add_scalar(norms, -1.0)?;
    let sq = g.square(dev)?;
    let mean = g.mean(sq)?;
    let loss = g.scale(mean, lambda)?;
    LossValue::of(g, loss)
}

/// `adv + α·sup`.
pub fn semi_supervised_loss(
    g: &mut Graph,
    adv: LossValue,
    sup: LossValue,
    alpha: f64,
) -> Result<LossValue> {
    if !(alpha >= 0.0) {
        return Err(Error::Argument(format!("α must be ≥ 0, got {alpha}")));
    }
    let weighted = g.scale(sup.var, alpha)?;
    let total = g.add(adv.var, weighted)?;
    LossValue::of(g, total)
}

/// Grid used to fit `a·sin(2πt/T + φ)` to a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinusoidFit {
    pub period_min: f64,
    pub period_max: f64,
    pub period_steps: usize,
    pub phase_steps: usize,
}

impl Default for SinusoidFit {
    fn default() -> Self {
        SinusoidFit {
            period_min: 10.0,
            period_max: 14.0,
            period_steps: 41,
            phase_steps: 72,
        }
    }
}

impl SinusoidFit {
    pub fn periods(&self) -> impl Iterator<Item = f64> + '_ {
        let steps = self.period_steps.max(1);
        (0..steps).map(move |i| {
            if steps == 1 {
                self.period_min
            } else {
                self.period_min + (self.period_max - self.period_min) * i as f64 / (steps - 1) as f64
            }
        })
    }

    /// Best-fitting sinusoid over the grid and its mean squared residual.
    /// The amplitude is the least-squares optimum for each grid point.
    pub fn fit(&self, traj: &[f64]) -> (Vec<f64>, f64) {
        let n = traj.len();
        let mut best = (vec![0.0; n], traj.iter().map(|y| y * y).sum::<f64>() / n as f64);
        let mut basis = vec![0.0; n];
        for period in self.periods() {
            for k in 0..self.phase_steps {
                let phase = 2.0 * PI * k as f64 / self.phase_steps as f64;
                for (t, b) in basis.iter_mut().enumerate() {
                    *b = (2.0 * PI * t as f64 / period + phase).sin();
                }
                let energy: f64 = basis.iter().map(|b| b * b).sum();
                if energy == 0.0 {
                    continue;
                }
                let amp = basis.iter().zip(traj).map(|(b, y)| b * y).sum::<f64>() / energy;
                let residual = basis
                    .iter()
                    .zip(traj)
                    .map(|(b, y)| (y - amp * b).powi(2))
                    .sum::<f64>()
                    / n as f64;
                if residual < best.1 {
                    best = (basis.iter().map(|b| amp * b).collect(), residual);
                }
            }
        }
        best
    }
}

/// Mean over the batch of each trajectory's squared residual against its
/// best-fit sinusoid. `traj` is `batch × n`; the fitted curves are held
/// constant, so the gradient is `2(y − fit)/(batch·n)`.
pub fn handcrafted_pendulum_constraint(
    g: &mut Graph,
    traj: Var,
    fit: &SinusoidFit,
) -> Result<LossValue> {
    let shape = g.shape(traj).to_vec();
    if shape.len() != 2 {
        return Err(Error::dimension("pendulum constraint", &shape, &[0, 0]));
    }
    let (rows, n) = (shape[0], shape[1]);
    if n < 4 {
        return Err(Error::Argument(format!(
            "pendulum constraint needs trajectories of length ≥ 4, got {n}"
        )));
    }
    let values = g.value(traj).clone();
    let mut fitted = Vec::with_capacity(rows * n);
    for i in 0..rows {
        fitted.extend(fit.fit(values.row(i)).0);
    }
    let fitted = g.constant(Tensor::matrix(rows, n, fitted));
    let resid = g.sub(traj, fitted)?;
    let sq = g.square(resid)?;
    let loss = g.mean(sq)?;
    LossValue::of(g, loss)
}
