//! Central finite-difference checks of analytic parameter gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::nn::{init_params, mlp_forward, Activation, MlpConfig, Parameters};
use crate::objectives::{critic_objective, generator_objective, gradient_penalty, supervised_loss};
use crate::tensor::Tensor;

pub const STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;

/// `|analytic − numeric| / max(1, |numeric|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1.0)
}

/// Largest relative error between `analytic` and central differences of
/// `loss` over every entry of `params`.
pub fn max_error<F>(params: &Parameters, analytic: &[Tensor], h: f64, loss: F) -> Result<f64>
where
    F: Fn(&Parameters) -> Result<f64>,
{
    let flat = params.to_flat();
    let grads: Vec<f64> = analytic.iter().flat_map(|t| t.data().iter().copied()).collect();
    if grads.len() != flat.len() {
        return Err(Error::dimension("analytic gradient", &[grads.len()], &[flat.len()]));
    }
    let mut probe = params.clone();
    let mut shifted = flat.clone();
    let mut worst: f64 = 0.0;
    for i in 0..flat.len() {
        shifted[i] = flat[i] + h;
        probe.set_flat(&shifted)?;
        let up = loss(&probe)?;
        shifted[i] = flat[i] - h;
        probe.set_flat(&shifted)?;
        let down = loss(&probe)?;
        shifted[i] = flat[i];
        worst = worst.max(relative_error(grads[i], (up - down) / (2.0 * h)));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub name: &'static str,
    pub params: usize,
    pub max_error: f64,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.max_error < TOLERANCE
    }
}

/// Shapes of the networks exercised by [`mlp_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub input: usize,
    pub output: usize,
    pub width: usize,
    pub depth: usize,
    pub batch: usize,
    pub hidden: Activation,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            input: 6,
            output: 3,
            width: 64,
            depth: 4,
            batch: 3,
            hidden: Activation::Tanh,
        }
    }
}

/// Gradient of the summed output with respect to each input row, by plain
/// backpropagation outside any graph.
pub fn plain_input_gradient(params: &Parameters, x: &Tensor) -> Result<Tensor> {
    let cfg = params.config();
    let last = params.layers().len() - 1;
    let mut slopes = Vec::with_capacity(last + 1);
    let mut h = x.clone();
    for (l, layer) in params.layers().iter().enumerate() {
        let act = if l == last { cfg.output } else { cfg.hidden };
        let z = h.matmul(&layer.weight)?;
        let n = z.cols();
        let z = Tensor::matrix(
            z.rows(),
            n,
            z.data().iter().enumerate().map(|(i, v)| v + layer.bias.data()[i % n]).collect(),
        );
        slopes.push(z.map(|v| match act {
            Activation::Identity => 1.0,
            Activation::Relu => f64::from(u8::from(v > 0.0)),
            Activation::Tanh => 1.0 - v.tanh().powi(2),
        }));
        h = z.map(|v| act.eval(v));
    }
    let mut delta = h.map(|_| 1.0);
    for (l, layer) in params.layers().iter().enumerate().rev() {
        delta = delta.zip_map(&slopes[l], |d, s| d * s);
        delta = delta.matmul_nt(&layer.weight)?;
    }
    Ok(delta)
}

fn analytic<F>(params: &Parameters, build: F) -> Result<Vec<Tensor>>
where
    F: FnOnce(&mut Graph, &crate::nn::BoundParams) -> Result<crate::autodiff::Var>,
{
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let out = build(&mut g, &bound)?;
    let grads = g.backward(out)?;
    Ok(bound.gradients(&g, &grads))
}

/// Checks predictor gradients of `supervised_loss` and `generator_objective`
/// and critic gradients of `critic_objective + gradient_penalty` on random
/// networks and data drawn from `seed`. The first two are differenced on a
/// graph-free forward pass.
pub fn mlp_suite(cfg: &SuiteConfig, seed: u64) -> Result<Vec<CaseResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let predictor_cfg = MlpConfig::uniform(cfg.input, cfg.width, cfg.depth, cfg.output, cfg.hidden)?;
    let critic_cfg = MlpConfig::uniform(cfg.output, cfg.width, cfg.depth, 1, cfg.hidden)?;
    let predictor = init_params(&predictor_cfg, &mut rng);
    let critic = init_params(&critic_cfg, &mut rng);
    let mut random = |rows: usize, cols: usize| {
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
    };
    let x = random(cfg.batch, cfg.input);
    let y = random(cfg.batch, cfg.output);
    let real = random(cfg.batch, cfg.output);
    let fake = random(cfg.batch, cfg.output);
    let penalty_seed: u64 = rng.gen();
    let mut out = Vec::with_capacity(3);

    let sup = |g: &mut Graph, p: &crate::nn::BoundParams| {
        let xv = g.constant(x.clone());
        let pred = mlp_forward(g, p, xv)?;
        let yv = g.constant(y.clone());
        Ok(supervised_loss(g, pred, yv)?.var)
    };
    out.push(CaseResult {
        name: "supervised_loss",
        params: predictor.num_params(),
        max_error: max_error(&predictor, &analytic(&predictor, sup)?, STEP, |p| {
            let pred = p.predict(&x)?;
            Ok(pred.data().iter().zip(y.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.numel() as f64)
        })?,
    });

    let adversarial = |g: &mut Graph, p: &crate::nn::BoundParams| {
        let rv = g.constant(real.clone());
        let fv = g.constant(fake.clone());
        let rs = mlp_forward(g, p, rv)?;
        let fs = mlp_forward(g, p, fv)?;
        let obj = critic_objective(g, rs, fs)?;
        let mut eps = ChaCha8Rng::seed_from_u64(penalty_seed);
        let gp = gradient_penalty(g, p, &real, &fake, 10.0, &mut eps)?;
        g.add(obj.var, gp.var)
    };
    let mut eps = ChaCha8Rng::seed_from_u64(penalty_seed);
    let mixed: Vec<f64> = (0..cfg.batch)
        .flat_map(|i| {
            let e: f64 = eps.gen();
            real.row(i).iter().zip(fake.row(i)).map(move |(r, f)| e * r + (1.0 - e) * f).collect::<Vec<_>>()
        })
        .collect();
    let mixed = Tensor::matrix(cfg.batch, cfg.output, mixed);
    out.push(CaseResult {
        name: "critic_objective + gradient_penalty",
        params: critic.num_params(),
        max_error: max_error(&critic, &analytic(&critic, adversarial)?, STEP, |p| {
            let mean = |t: Tensor| t.data().iter().sum::<f64>() / t.numel() as f64;
            let obj = mean(p.predict(&real)?) - mean(p.predict(&fake)?);
            let grad = plain_input_gradient(p, &mixed)?;
            let gp = (0..grad.rows())
                .map(|i| (grad.row(i).iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).powi(2))
                .sum::<f64>()
                / grad.rows() as f64;
            Ok(obj + 10.0 * gp)
        })?,
    });

    let gen = |g: &mut Graph, p: &crate::nn::BoundParams| {
        let xv = g.constant(x.clone());
        let pred = mlp_forward(g, p, xv)?;
        let frozen = critic.bind_frozen(g);
        let scores = mlp_forward(g, &frozen, pred)?;
        Ok(generator_objective(g, scores)?.var)
    };
    out.push(CaseResult {
        name: "generator_objective",
        params: predictor.num_params(),
        max_error: max_error(&predictor, &analytic(&predictor, gen)?, STEP, |p| {
            let scores = critic.predict(&p.predict(&x)?)?;
            Ok(-scores.data().iter().sum::<f64>() / scores.numel() as f64)
        })?,
    });
    Ok(out)
}
