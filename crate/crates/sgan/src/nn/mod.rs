//! Network constructors and forward passes for the generator and the
//! discriminator, in the all-fully-connected realization: the squeeze (S)
//! and unsqueeze (U) positions degenerate to 512→512 maps, the concatenate
//! (CL) position is a (512+l)→512 map fed by the noise vector, and the
//! output (L) position of the discriminator is a plain linear 512→1 map.
//! Every fully connected layer uses LeakyReLU with negative slope 0.001;
//! only the L layer is activation-free.

mod adam;
pub mod checkpoint;

pub use adam::{AdamState, ADAM_ALPHA, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};

use rand::Rng;

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

pub const HIDDEN_WIDTH: usize = 512;
pub const DEFAULT_NOISE_DIM: usize = 128;
pub const LEAKY_SLOPE: f64 = 0.001;

/// One fully connected map: `y = x·w + b` with `w: [fan_in × fan_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    /// Weights uniform in ±1/√fan_in, biases zero.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
        Linear {
            w: Tensor::matrix(fan_in, fan_out, data).expect("init shape"),
            b: Tensor::zeros(vec![fan_out]),
        }
    }

    /// Weights and biases uniform in ±1/√fan_in. A purely input-gradient
    /// loss gives biases exactly zero gradient (the activation masks are
    /// constants to the second backward pass), so zero-initialized biases
    /// would pin every activation breakpoint at the origin forever; nets
    /// trained on such losses need their breakpoints scattered at init.
    pub fn init_with_bias_spread(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
        let bias = (0..fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
        Linear {
            w: Tensor::matrix(fan_in, fan_out, data).expect("init shape"),
            b: Tensor::vector(bias),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.matrix_dims().0
    }

    pub fn fan_out(&self) -> usize {
        self.w.matrix_dims().1
    }
}

/// Graph handles of one network's parameters, in `w, b` layer order.
#[derive(Debug, Clone)]
pub struct NetHandles {
    pub pairs: Vec<(NodeId, NodeId)>,
}

impl NetHandles {
    pub fn all(&self) -> Vec<NodeId> {
        self.pairs.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

fn insert_layers(layers: &[Linear], g: &mut Graph) -> NetHandles {
    let pairs = layers.iter().map(|l| (g.leaf(l.w.clone()), g.leaf(l.b.clone()))).collect();
    NetHandles { pairs }
}

/// `leaky_relu(x·w + b)` or the linear part alone.
fn fc(g: &mut Graph, x: NodeId, (w, b): (NodeId, NodeId), activate: bool) -> Result<NodeId> {
    let xw = g.matmul(x, w)?;
    let y = g.add_row_broadcast(xw, b)?;
    if activate {
        g.leaky_relu(y, LEAKY_SLOPE)
    } else {
        Ok(y)
    }
}

/// A plain stack of fully connected layers with LeakyReLU everywhere except
/// an optionally linear last layer. The discriminator and the 1-D theory
/// probe are both instances.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub linear_output: bool,
}

impl Mlp {
    pub fn init(dims: &[usize], linear_output: bool, rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least one layer");
        let layers = dims.windows(2).map(|w| Linear::init(w[0], w[1], rng)).collect();
        Mlp { layers, linear_output }
    }

    /// Like [`Mlp::init`] but with biases spread uniformly; see
    /// [`Linear::init_with_bias_spread`].
    pub fn init_with_bias_spread(dims: &[usize], linear_output: bool, rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least one layer");
        let layers =
            dims.windows(2).map(|w| Linear::init_with_bias_spread(w[0], w[1], rng)).collect();
        Mlp { layers, linear_output }
    }

    pub fn insert_params(&self, g: &mut Graph) -> NetHandles {
        insert_layers(&self.layers, g)
    }

    pub fn forward_with(&self, g: &mut Graph, h: &NetHandles, x: NodeId) -> Result<NodeId> {
        if h.pairs.len() != self.layers.len() {
            return Err(Error::contract("handles do not match network".to_string()));
        }
        let mut cur = x;
        let last = self.layers.len() - 1;
        for (i, &pair) in h.pairs.iter().enumerate() {
            let activate = !(self.linear_output && i == last);
            cur = fc(g, cur, pair, activate)?;
        }
        Ok(cur)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.w, &mut l.b]).collect()
    }
}

/// Generator G(x̄, n): layer positions
/// `[F V→512][F 512→512][S: 512→512][CL: (512+l)→512][U: 512→512][F 512→512][F 512→V]`,
/// noise entering exactly once at the CL concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorNet {
    pub layers: Vec<Linear>,
    pub input_dim: usize,
    pub noise_dim: usize,
}

/// Index of the CL layer inside [`GeneratorNet::layers`].
const CL_INDEX: usize = 3;

pub fn build_generator(v: usize, l: usize, rng: &mut impl Rng) -> GeneratorNet {
    assert!(v >= 1, "state dimension must be positive");
    let h = HIDDEN_WIDTH;
    let layers = vec![
        Linear::init(v, h, rng),
        Linear::init(h, h, rng),
        Linear::init(h, h, rng),     // S
        Linear::init(h + l, h, rng), // CL
        Linear::init(h, h, rng),     // U
        Linear::init(h, h, rng),
        Linear::init(h, v, rng),
    ];
    GeneratorNet { layers, input_dim: v, noise_dim: l }
}

impl GeneratorNet {
    pub fn insert_params(&self, g: &mut Graph) -> NetHandles {
        insert_layers(&self.layers, g)
    }

    /// Both inputs are `[B × ·]` batches; noise components are the caller's
    /// responsibility (U[0,1] draws, or zeros in deterministic mode).
    pub fn forward_with(
        &self,
        g: &mut Graph,
        h: &NetHandles,
        xbar: NodeId,
        noise: NodeId,
    ) -> Result<NodeId> {
        let (_, xc) = g.value(xbar).matrix_dims();
        let (_, nc) = g.value(noise).matrix_dims();
        if xc != self.input_dim || nc != self.noise_dim {
            return Err(Error::shape(format!(
                "generator wants [B×{}] and [B×{}], got [·×{xc}] and [·×{nc}]",
                self.input_dim, self.noise_dim
            )));
        }
        let mut cur = xbar;
        for (i, &pair) in h.pairs.iter().enumerate() {
            if i == CL_INDEX {
                cur = g.concat(cur, noise)?;
            }
            cur = fc(g, cur, pair, true)?;
        }
        Ok(cur)
    }

    pub fn forward(&self, g: &mut Graph, xbar: NodeId, noise: NodeId) -> Result<(NodeId, NetHandles)> {
        let h = self.insert_params(g);
        let out = self.forward_with(g, &h, xbar, noise)?;
        Ok((out, h))
    }

    /// Plain value-level forward for sampling: no gradients, fresh graph.
    pub fn sample(&self, xbar: &Tensor, noise: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.leaf(xbar.clone());
        let n = g.leaf(noise.clone());
        let (out, _) = self.forward(&mut g, x, n)?;
        Ok(g.value(out).clone())
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.w, &mut l.b]).collect()
    }
}

/// Discriminator D(x̄, x′) → unbounded scalar score per pair:
/// `[F 2V→512][F 512→512][S: 512→512][L: 512→1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorNet {
    pub mlp: Mlp,
    pub state_dim: usize,
}

pub fn build_discriminator(v: usize, rng: &mut impl Rng) -> DiscriminatorNet {
    assert!(v >= 1, "state dimension must be positive");
    let h = HIDDEN_WIDTH;
    DiscriminatorNet { mlp: Mlp::init(&[2 * v, h, h, h, 1], true, rng), state_dim: v }
}

impl DiscriminatorNet {
    pub fn insert_params(&self, g: &mut Graph) -> NetHandles {
        self.mlp.insert_params(g)
    }

    /// Scores a batch: `(x̄: [B×V], x′: [B×V]) → [B×1]`. Input order matters;
    /// the pair is concatenated as (x̄, x′).
    pub fn forward_with(
        &self,
        g: &mut Graph,
        h: &NetHandles,
        xbar: NodeId,
        xprime: NodeId,
    ) -> Result<NodeId> {
        let (_, xc) = g.value(xbar).matrix_dims();
        let (_, pc) = g.value(xprime).matrix_dims();
        if xc != self.state_dim || pc != self.state_dim {
            return Err(Error::shape(format!(
                "discriminator wants two [B×{}] inputs, got [·×{xc}] and [·×{pc}]",
                self.state_dim
            )));
        }
        let pair = g.concat(xbar, xprime)?;
        self.mlp.forward_with(g, h, pair)
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        xbar: NodeId,
        xprime: NodeId,
    ) -> Result<(NodeId, NetHandles)> {
        let h = self.insert_params(g);
        let out = self.forward_with(g, &h, xbar, xprime)?;
        Ok((out, h))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.mlp.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.mlp.params_mut()
    }
}
