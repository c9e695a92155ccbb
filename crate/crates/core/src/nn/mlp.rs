use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    fn apply(self, g: &mut Graph, z: Var) -> Result<Var> {
        match self {
            Activation::Identity => Ok(z),
            Activation::Relu => g.relu(z),
            Activation::Tanh => g.tanh(z),
        }
    }

    /// `delta ⊙ σ'(z)`, given the pre-activation `z` and activation `a = σ(z)`.
    /// The relu mask is a constant; the tanh factor stays differentiable.
    fn backprop(self, g: &mut Graph, z: Var, a: Var, delta: Var) -> Result<Var> {
        match self {
            Activation::Identity => Ok(delta),
            Activation::Relu => {
                let mask = g.value(z).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                let mask = g.constant(mask);
                g.mul(delta, mask)
            }
            Activation::Tanh => {
                let sq = g.square(a)?;
                let neg = g.neg(sq)?;
                let slope = g.add_scalar(neg, 1.0)?;
                g.mul(delta, slope)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Input width, hidden widths, output width.
    pub widths: Vec<usize>,
    pub hidden: Activation,
    #[serde(default = "identity")]
    pub output: Activation,
}

fn identity() -> Activation {
    Activation::Identity
}

impl MlpConfig {
    pub fn new(widths: Vec<usize>, hidden: Activation) -> Result<Self> {
        let config = MlpConfig {
            widths,
            hidden,
            output: Activation::Identity,
        };
        config.validate()?;
        Ok(config)
    }

    /// `depth` layers of affine maps with `width` units in every hidden layer.
    pub fn uniform(input: usize, width: usize, depth: usize, output: usize, hidden: Activation) -> Result<Self> {
        if depth < 2 {
            return Err(Error::Config("an MLP needs at least two layers".into()));
        }
        let mut widths = vec![input];
        widths.extend(std::iter::repeat(width).take(depth - 1));
        widths.push(output);
        MlpConfig::new(widths, hidden)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 3 {
            return Err(Error::Config(format!(
                "MLP needs at least one hidden layer, got widths {:?}",
                self.widths
            )));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!(
                "MLP widths must be positive, got {:?}",
                self.widths
            )));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `fan_in × fan_out`.
    pub weight: Tensor,
    /// `1 × fan_out`.
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    config: MlpConfig,
    layers: Vec<Layer>,
}

/// He-normal weights, zero biases.
pub fn init_params<R: Rng + ?Sized>(config: &MlpConfig, rng: &mut R) -> Parameters {
    let layers = config
        .widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
            let weight = (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect();
            Layer {
                weight: Tensor::matrix(fan_in, fan_out, weight),
                bias: Tensor::zeros(&[1, fan_out]),
            }
        })
        .collect();
    Parameters {
        config: config.clone(),
        layers,
    }
}

impl Parameters {
    pub fn zeros(config: &MlpConfig) -> Self {
        let layers = config
            .widths
            .windows(2)
            .map(|w| Layer {
                weight: Tensor::zeros(&[w[0], w[1]]),
                bias: Tensor::zeros(&[1, w[1]]),
            })
            .collect();
        Parameters {
            config: config.clone(),
            layers,
        }
    }

    pub fn from_layers(config: MlpConfig, layers: Vec<Layer>) -> Result<Self> {
        config.validate()?;
        if layers.len() != config.widths.len() - 1 {
            return Err(Error::Config(format!(
                "{} layers given for widths {:?}",
                layers.len(),
                config.widths
            )));
        }
        for (layer, w) in layers.iter().zip(config.widths.windows(2)) {
            if layer.weight.shape() != [w[0], w[1]] {
                return Err(Error::dimension("layer weight", layer.weight.shape(), &[w[0], w[1]]));
            }
            if layer.bias.shape() != [1, w[1]] {
                return Err(Error::dimension("layer bias", layer.bias.shape(), &[1, w[1]]));
            }
        }
        Ok(Parameters { config, layers })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Weight and bias tensors in layer order.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn num_params(&self) -> usize {
        self.tensors().map(Tensor::numel).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::dimension("set_flat", &[flat.len()], &[self.num_params()]));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.numel();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Records the parameters as gradient-carrying leaves.
    pub fn bind(&self, g: &mut Graph) -> BoundParams {
        self.bind_with(g, true)
    }

    /// Records the parameters as constants.
    pub fn bind_frozen(&self, g: &mut Graph) -> BoundParams {
        self.bind_with(g, false)
    }

    fn bind_with(&self, g: &mut Graph, trainable: bool) -> BoundParams {
        let mut leaf = |t: &Tensor| {
            if trainable {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        let layers = self
            .layers
            .iter()
            .map(|l| (leaf(&l.weight), leaf(&l.bias)))
            .collect();
        BoundParams {
            layers,
            hidden: self.config.hidden,
            output: self.config.output,
            input_width: self.config.input_width(),
        }
    }

    /// Forward pass without gradient tracking.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        if !x.is_matrix() || x.cols() != self.config.input_width() {
            return Err(Error::dimension("mlp input", x.shape(), &[0, self.config.input_width()]));
        }
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = h.matmul(&layer.weight)?;
            let n = z.cols();
            let act = if l == last { self.config.output } else { self.config.hidden };
            for row in z.data_mut().chunks_mut(n) {
                for (v, b) in row.iter_mut().zip(layer.bias.data()) {
                    *v = act.eval(*v + b);
                }
            }
            h = z;
        }
        Ok(h)
    }
}

/// Parameter leaves of one MLP inside a particular [`Graph`].
#[derive(Debug, Clone)]
pub struct BoundParams {
    layers: Vec<(Var, Var)>,
    hidden: Activation,
    output: Activation,
    input_width: usize,
}

impl BoundParams {
    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }

    /// Gradients in [`Parameters::tensors`] order; absent entries are zero.
    pub fn gradients(&self, g: &Graph, grads: &Gradients) -> Vec<Tensor> {
        self.vars()
            .map(|v| {
                grads
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(g.shape(v)))
            })
            .collect()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    fn check_input(&self, g: &Graph, x: Var) -> Result<()> {
        let shape = g.shape(x);
        if shape.len() != 2 || shape[1] != self.input_width {
            return Err(Error::dimension("mlp input", shape, &[0, self.input_width]));
        }
        Ok(())
    }
}

/// Affine/activation stack applied to each row of `x` (`batch × d_in`).
pub fn mlp_forward(g: &mut Graph, params: &BoundParams, x: Var) -> Result<Var> {
    params.check_input(g, x)?;
    let mut h = x;
    for (l, &(w, b)) in params.layers.iter().enumerate() {
        let z = g.matmul(h, w)?;
        let z = g.add_bias(z, b)?;
        h = params.activation(l).apply(g, z)?;
    }
    Ok(h)
}

/// Gradient of the summed MLP output with respect to each input row, built
/// from ordinary graph operations so it stays differentiable in the
/// parameters. Returns a `batch × d_in` node.
pub fn mlp_input_gradient(g: &mut Graph, params: &BoundParams, x: &Tensor) -> Result<Var> {
    let xv = g.constant(x.clone());
    params.check_input(g, xv)?;
    let mut cache = Vec::with_capacity(params.layers.len());
    let mut h = xv;
    for (l, &(w, b)) in params.layers.iter().enumerate() {
        let z = g.matmul(h, w)?;
        let z = g.add_bias(z, b)?;
        h = params.activation(l).apply(g, z)?;
        cache.push((z, h));
    }
    let out_width = g.shape(h)[1];
    let mut delta = g.constant(Tensor::full(&[x.rows(), out_width], 1.0));
    for (l, &(w, _)) in params.layers.iter().enumerate().rev() {
        let (z, a) = cache[l];
        delta = params.activation(l).backprop(g, z, a, delta)?;
        let wt = g.transpose(w)?;
        delta = g.matmul(delta, wt)?;
    }
    Ok(delta)
}
