//! Fully-connected networks evaluated over jets.
//!
//! Two architectures share one flat parameter layout convention (weights
//! row-major with shape `(fan_in, fan_out)`, biases as `(1, fan_out)` rows):
//!
//! * **plain**: `L` tanh hidden layers of width `M` and an affine output;
//! * **improved**: two input encoders `U = tanh(XW¹+b¹)`, `V = tanh(XW²+b²)`,
//!   an input embedding `H¹ = tanh(XWᵉ+bᵉ)`, and `L` gates
//!   `Zᵏ = tanh(HᵏWᶻᵏ+bᶻᵏ)`, `Hᵏ⁺¹ = (1−Zᵏ)⊙U + Zᵏ⊙V`, followed by an affine output.
//!
//! [`forward`] evaluates one point over generic scalars (the reference path,
//! also used with taped scalars); [`batched`] evaluates a whole batch with
//! dense matrix products and has a hand-written reverse sweep.

pub mod batched;
mod checkpoint;

pub use batched::{backward_batch, forward_batch, forward_batch_mapped, predict, BatchForward, InputMap, JetBatch};
pub use checkpoint::Checkpoint;

use crate::autodiff::{BlockKind, Jet, ParamBlock, ParameterVector, Scalar};
use crate::rng::{streams, Stream};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Architecture {
    Plain,
    Improved,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Plain => "plain",
            Architecture::Improved => "improved",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Architecture::Plain),
            "improved" => Ok(Architecture::Improved),
            other => Err(Error::Parse(format!("unknown architecture '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetworkConfig {
    pub architecture: Architecture,
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: usize,
    pub width: usize,
    /// Highest input-derivative order the network will be evaluated at.
    pub jet_order: usize,
}

/// Offsets of one affine map inside the flat parameter array.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Dense {
    pub w: usize,
    pub b: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

#[derive(Clone, Debug)]
pub(crate) enum Shape {
    Plain(Vec<Dense>),
    Improved { u: Dense, v: Dense, embed: Dense, gates: Vec<Dense>, out: Dense },
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.input_dim) {
            return Err(Error::Config(format!("input_dim must be 1 or 2, got {}", self.input_dim)));
        }
        if self.output_dim == 0 || self.hidden_layers == 0 || self.width == 0 {
            return Err(Error::Config("output_dim, hidden_layers and width must be positive".into()));
        }
        if self.jet_order > 3 {
            return Err(Error::Config(format!("jet order {} exceeds 3", self.jet_order)));
        }
        Ok(())
    }

    /// Exact number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.partition().iter().map(ParamBlock::len).sum()
    }

    /// Named blocks tiling the flat parameter array, in storage order.
    pub fn partition(&self) -> Vec<ParamBlock> {
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut layer = 0;
        let mut push = |name: String, fan_in: usize, fan_out: usize| {
            blocks.push(ParamBlock {
                name: format!("{name}.W"),
                layer,
                offset,
                shape: (fan_in, fan_out),
                kind: BlockKind::Weight,
            });
            offset += fan_in * fan_out;
            blocks.push(ParamBlock { name: format!("{name}.b"), layer, offset, shape: (1, fan_out), kind: BlockKind::Bias });
            offset += fan_out;
            layer += 1;
        };
        let (d, m, l, o) = (self.input_dim, self.width, self.hidden_layers, self.output_dim);
        match self.architecture {
            Architecture::Plain => {
                for k in 0..=l {
                    let fan_in = if k == 0 { d } else { m };
                    let fan_out = if k == l { o } else { m };
                    push(format!("dense{k}"), fan_in, fan_out);
                }
            }
            Architecture::Improved => {
                push("enc_u".into(), d, m);
                push("enc_v".into(), d, m);
                push("embed".into(), d, m);
                for k in 1..=l {
                    push(format!("gate{k}"), m, m);
                }
                push("out".into(), m, o);
            }
        }
        blocks
    }

    pub(crate) fn shape(&self) -> Shape {
        let dense: Vec<Dense> = self
            .partition()
            .chunks(2)
            .map(|pair| Dense { w: pair[0].offset, b: pair[1].offset, fan_in: pair[0].shape.0, fan_out: pair[0].shape.1 })
            .collect();
        match self.architecture {
            Architecture::Plain => Shape::Plain(dense),
            Architecture::Improved => {
                let l = self.hidden_layers;
                Shape::Improved { u: dense[0], v: dense[1], embed: dense[2], gates: dense[3..3 + l].to_vec(), out: dense[3 + l] }
            }
        }
    }
}

/// Glorot-uniform weights (`±√(6/(fan_in+fan_out))`) and zero biases.
///
/// Weights are drawn block by block in storage order, row-major within a block,
/// from the `init` stream of `seed` (see [`crate::rng`]).
pub fn glorot_init(seed: u64, config: &NetworkConfig) -> Result<ParameterVector> {
    config.validate()?;
    let partition = config.partition();
    let mut rng = Stream::new(seed, streams::INIT);
    let mut values = Vec::with_capacity(config.param_count());
    for block in &partition {
        match block.kind {
            BlockKind::Weight => {
                let limit = glorot_limit(block.shape.0, block.shape.1);
                values.extend((0..block.len()).map(|_| limit * (2.0 * rng.uniform() - 1.0)));
            }
            BlockKind::Bias => values.extend(std::iter::repeat_n(0.0, block.len())),
        }
    }
    ParameterVector::new(values, partition)
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn check_inputs<S: Scalar>(config: &NetworkConfig, params: &[S], input: &[Jet<S>]) -> Result<()> {
    config.validate()?;
    if params.len() != config.param_count() {
        return Err(Error::Shape(format!("expected {} parameters, got {}", config.param_count(), params.len())));
    }
    if input.len() != config.input_dim {
        return Err(Error::Shape(format!("expected {} input jets, got {}", config.input_dim, input.len())));
    }
    if input.iter().any(|j| !j.same_layout(&input[0])) {
        return Err(Error::Shape("input jets must share order and dims".into()));
    }
    Ok(())
}

fn dense<S: Scalar>(params: &[S], d: &Dense, input: &[Jet<S>]) -> Vec<Jet<S>> {
    (0..d.fan_out)
        .map(|j| {
            let mut acc = input[0].scale_by(params[d.w + j]);
            for (i, x) in input.iter().enumerate().skip(1) {
                acc = acc + x.scale_by(params[d.w + i * d.fan_out + j]);
            }
            acc.add_value(params[d.b + j])
        })
        .collect()
}

fn tanh_all<S: Scalar>(v: Vec<Jet<S>>) -> Vec<Jet<S>> {
    v.iter().map(Jet::tanh).collect()
}

/// Network output jets at one point, dispatching on the architecture.
pub fn forward<S: Scalar>(config: &NetworkConfig, params: &[S], input: &[Jet<S>]) -> Result<Vec<Jet<S>>> {
    match config.architecture {
        Architecture::Plain => forward_plain(config, params, input),
        Architecture::Improved => forward_improved(config, params, input),
    }
}

pub fn forward_plain<S: Scalar>(config: &NetworkConfig, params: &[S], input: &[Jet<S>]) -> Result<Vec<Jet<S>>> {
    check_inputs(config, params, input)?;
    let Shape::Plain(layers) = config.shape() else {
        return Err(Error::Config("forward_plain called with a non-plain configuration".into()));
    };
    let (last, hidden) = layers.split_last().expect("at least one layer");
    let mut h = input.to_vec();
    for d in hidden {
        h = tanh_all(dense(params, d, &h));
    }
    Ok(dense(params, last, &h))
}

pub fn forward_improved<S: Scalar>(config: &NetworkConfig, params: &[S], input: &[Jet<S>]) -> Result<Vec<Jet<S>>> {
    check_inputs(config, params, input)?;
    let Shape::Improved { u, v, embed, gates, out } = config.shape() else {
        return Err(Error::Config("forward_improved called with a non-improved configuration".into()));
    };
    let u = tanh_all(dense(params, &u, input));
    let v = tanh_all(dense(params, &v, input));
    let diff: Vec<Jet<S>> = u.iter().zip(&v).map(|(a, b)| *b - *a).collect();
    let mut h = tanh_all(dense(params, &embed, input));
    for g in &gates {
        let z = tanh_all(dense(params, g, &h));
        h = z.iter().zip(&u).zip(&diff).map(|((z, u), d)| *u + *z * *d).collect();
    }
    Ok(dense(params, &out, &h))
}
