use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelError, TokenizerConfig};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    Zeros,
    Ones,
    /// Uniform Glorot initialization.
    Xavier {
        fan_in: usize,
        fan_out: usize,
    },
    /// Fixed sine/cosine position table.
    SinCos,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Linear {
    pub weight: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Norm {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EncoderBlock {
    pub norm1: Norm,
    pub qkv: Linear,
    pub attn_out: Linear,
    pub norm2: Norm,
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DecoderBlock {
    /// Produces (shift, scale, gate) for the attention and MLP sublayers.
    pub modulation: Linear,
    pub qkv: Linear,
    pub attn_out: Linear,
    pub fc1: Linear,
    pub fc2: Linear,
}

/// Parameter order, names, shapes and initializers, derived from a config.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub specs: Vec<ParamSpec>,
    pub enc_input: Linear,
    pub enc_queries: usize,
    pub enc_pos: usize,
    pub enc_blocks: Vec<EncoderBlock>,
    pub enc_norm: Norm,
    pub enc_head: Linear,
    pub dec_input: Linear,
    pub code_embed: Linear,
    pub dec_pos: usize,
    pub time_fc1: Linear,
    pub time_fc2: Linear,
    pub dec_blocks: Vec<DecoderBlock>,
    pub dec_norm: Norm,
    pub dec_head: Linear,
}

struct Builder {
    specs: Vec<ParamSpec>,
}

impl Builder {
    fn add(&mut self, name: String, shape: &[usize], init: Init) -> usize {
        self.specs.push(ParamSpec {
            name,
            shape: shape.to_vec(),
            init,
        });
        self.specs.len() - 1
    }

    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize, zero: bool) -> Linear {
        let init = if zero {
            Init::Zeros
        } else {
            Init::Xavier { fan_in, fan_out }
        };
        Linear {
            weight: self.add(format!("{prefix}.weight"), &[fan_in, fan_out], init),
            bias: self.add(format!("{prefix}.bias"), &[fan_out], Init::Zeros),
        }
    }

    fn norm(&mut self, prefix: &str, width: usize) -> Norm {
        Norm {
            gain: self.add(format!("{prefix}.gain"), &[width], Init::Ones),
            bias: self.add(format!("{prefix}.bias"), &[width], Init::Zeros),
        }
    }
}

impl Layout {
    pub fn new(c: &TokenizerConfig) -> Self {
        let w = c.width;
        let hidden = w * c.mlp_ratio;
        let seq = c.horizon + c.code_length;
        let mut b = Builder { specs: Vec::new() };

        let enc_input = b.linear("encoder.input", c.action_dims, w, false);
        let enc_queries = b.add("encoder.queries".into(), &[c.code_length, w], Init::Zeros);
        let enc_pos = b.add("encoder.pos".into(), &[seq, w], Init::SinCos);
        let enc_blocks = (0..c.encoder_depth)
            .map(|i| {
                let p = format!("encoder.blocks.{i}");
                EncoderBlock {
                    norm1: b.norm(&format!("{p}.norm1"), w),
                    qkv: b.linear(&format!("{p}.attn.qkv"), w, 3 * w, false),
                    attn_out: b.linear(&format!("{p}.attn.out"), w, w, false),
                    norm2: b.norm(&format!("{p}.norm2"), w),
                    fc1: b.linear(&format!("{p}.mlp.fc1"), w, hidden, false),
                    fc2: b.linear(&format!("{p}.mlp.fc2"), hidden, w, false),
                }
            })
            .collect();
        let enc_norm = b.norm("encoder.norm", w);
        let enc_head = b.linear("encoder.head", w, c.bits, false);

        let dec_input = b.linear("decoder.input", c.action_dims, w, false);
        let code_embed = b.linear("decoder.code_embed", c.bits, w, false);
        let dec_pos = b.add("decoder.pos".into(), &[seq, w], Init::SinCos);
        let time_fc1 = b.linear("decoder.time.fc1", w, w, false);
        let time_fc2 = b.linear("decoder.time.fc2", w, w, false);
        let dec_blocks = (0..c.decoder_depth)
            .map(|i| {
                let p = format!("decoder.blocks.{i}");
                DecoderBlock {
                    modulation: b.linear(&format!("{p}.modulation"), w, 6 * w, true),
                    qkv: b.linear(&format!("{p}.attn.qkv"), w, 3 * w, false),
                    attn_out: b.linear(&format!("{p}.attn.out"), w, w, false),
                    fc1: b.linear(&format!("{p}.mlp.fc1"), w, hidden, false),
                    fc2: b.linear(&format!("{p}.mlp.fc2"), hidden, w, false),
                }
            })
            .collect();
        let dec_norm = b.norm("decoder.norm", w);
        let dec_head = b.linear("decoder.head", w, c.action_dims, false);

        Self {
            specs: b.specs,
            enc_input,
            enc_queries,
            enc_pos,
            enc_blocks,
            enc_norm,
            enc_head,
            dec_input,
            code_embed,
            dec_pos,
            time_fc1,
            time_fc2,
            dec_blocks,
            dec_norm,
            dec_head,
        }
    }
}

/// Named learnable tensors of the encoder and decoder, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<R> {
    names: Vec<String>,
    tensors: Vec<Tensor<R>>,
}

fn sincos_table<R: Real>(rows: usize, width: usize) -> Tensor<R> {
    let half = width / 2;
    Tensor::from_fn(&[rows, width], |i| {
        let (pos, col) = (i / width, i % width);
        let freq = Float::powf(10_000.0f64, -((col % half) as f64) / half as f64);
        let angle = pos as f64 * freq;
        R::from_f64(if col < half {
            Float::sin(angle)
        } else {
            Float::cos(angle)
        })
    })
}

impl<R: Real> ModelParams<R> {
    pub(crate) fn init(layout: &Layout, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::with_capacity(layout.specs.len());
        let mut tensors = Vec::with_capacity(layout.specs.len());
        for spec in &layout.specs {
            let t = match spec.init {
                Init::Zeros => Tensor::zeros(&spec.shape),
                Init::Ones => Tensor::full(&spec.shape, R::one()),
                Init::Xavier { fan_in, fan_out } => {
                    let a = Float::sqrt(6.0 / (fan_in + fan_out) as f64);
                    Tensor::from_fn(&spec.shape, |_| R::from_f64(rng.random_range(-a..a)))
                }
                Init::SinCos => sincos_table(spec.shape[0], spec.shape[1]),
            };
            names.push(spec.name.clone());
            tensors.push(t);
        }
        Self { names, tensors }
    }

    /// Builds from an ordered list, checking names and shapes against `layout`.
    pub(crate) fn from_named(layout: &Layout, named: Vec<(String, Tensor<R>)>) -> Result<Self, ModelError> {
        if named.len() != layout.specs.len() {
            return Err(ModelError::ParamMismatch(format!(
                "expected {} tensors, got {}",
                layout.specs.len(),
                named.len()
            )));
        }
        let mut names = Vec::with_capacity(named.len());
        let mut tensors = Vec::with_capacity(named.len());
        for (spec, (name, t)) in layout.specs.iter().zip(named) {
            if spec.name != name || spec.shape != t.shape() {
                return Err(ModelError::ParamMismatch(format!(
                    "expected {} {:?}, got {name} {:?}",
                    spec.name,
                    spec.shape,
                    t.shape()
                )));
            }
            names.push(name);
            tensors.push(t);
        }
        Ok(Self { names, tensors })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<R>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<R>] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<R>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<R>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<R>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(move |i| &mut self.tensors[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn cast<S: Real>(&self) -> ModelParams<S> {
        ModelParams {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }
}
