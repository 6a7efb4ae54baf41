//! Model configuration and the flat parameter store.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Block, LayerNorm, Linear};

/// How the numerals inside ID markers are embedded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdEmbedding {
    /// Numerals share the word-embedding table.
    Shared,
    /// Numerals on the input side come from a dedicated table.
    Dedicated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub fuse_layers: usize,
    pub ffn_ratio: usize,
    pub max_len: usize,
    pub d_feat: usize,
    pub angle_freqs: usize,
    pub tie_embeddings: bool,
    pub id_embedding: IdEmbedding,
    pub init_std: f64,
    /// Multiplies viewpoint coordinates (meters) before the position map.
    pub position_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: crate::vocab::Vocab::standard().len(),
            d_model: 64,
            n_heads: 4,
            n_layers: 4,
            fuse_layers: 2,
            ffn_ratio: 4,
            max_len: 512,
            d_feat: 16,
            angle_freqs: 4,
            tie_embeddings: true,
            id_embedding: IdEmbedding::Shared,
            init_std: 0.02,
            position_scale: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.vocab_size == 0 || self.d_model == 0 || self.max_len == 0 || self.d_feat == 0 {
            return bad("model sizes must be positive");
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad("d_model must be divisible by n_heads");
        }
        if self.ffn_ratio == 0 {
            return bad("ffn_ratio must be positive");
        }
        if !(self.position_scale >= 0.0) || !self.position_scale.is_finite() {
            return bad("position_scale must be finite and non-negative");
        }
        if !(self.init_std > 0.0) {
            return bad("init_std must be positive");
        }
        Ok(())
    }

    /// Width of the sinusoidal heading/elevation features.
    pub fn angle_dim(&self) -> usize {
        4 * self.angle_freqs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    init: Init,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of every named tensor in the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tensors: Vec<TensorSpec>,
    pub tok_emb: usize,
    pub pos_emb: usize,
    pub id_emb: Option<usize>,
    pub out_proj: Option<usize>,
    pub decoder: Vec<Block>,
    pub final_ln: LayerNorm,
    pub view_proj: Linear,
    pub angle_proj: Linear,
    pub pos_proj: Linear,
    pub fusion: Vec<Block>,
    pub stop: usize,
    pub not_exist: usize,
    pub obj_proj: Linear,
    pub total: usize,
}

struct Builder {
    tensors: Vec<TensorSpec>,
    total: usize,
}

impl Builder {
    fn add(&mut self, name: &str, shape: &[usize], init: Init) -> usize {
        let offset = self.total;
        let spec = TensorSpec {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset,
            init,
        };
        self.total += spec.len();
        self.tensors.push(spec);
        offset
    }

    fn linear(&mut self, name: &str, n_in: usize, n_out: usize, bias: bool) -> Linear {
        let w = self.add(&format!("{name}.w"), &[n_in, n_out], Init::Normal);
        let b = bias.then(|| self.add(&format!("{name}.b"), &[n_out], Init::Zeros));
        Linear { w, b, n_in, n_out }
    }

    fn norm(&mut self, name: &str, dim: usize) -> LayerNorm {
        LayerNorm {
            gamma: self.add(&format!("{name}.g"), &[dim], Init::Ones),
            beta: self.add(&format!("{name}.b"), &[dim], Init::Zeros),
            dim,
        }
    }

    fn block(&mut self, name: &str, d: usize, ffn: usize, n_heads: usize) -> Block {
        Block {
            ln1: self.norm(&format!("{name}.ln1"), d),
            qkv: self.linear(&format!("{name}.qkv"), d, 3 * d, true),
            proj: self.linear(&format!("{name}.proj"), d, d, true),
            ln2: self.norm(&format!("{name}.ln2"), d),
            ff1: self.linear(&format!("{name}.ff1"), d, ffn * d, true),
            ff2: self.linear(&format!("{name}.ff2"), ffn * d, d, true),
            n_heads,
        }
    }
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Layout {
        let d = cfg.d_model;
        let mut b = Builder {
            tensors: Vec::new(),
            total: 0,
        };
        let tok_emb = b.add("tok_emb", &[cfg.vocab_size, d], Init::Normal);
        let pos_emb = b.add("pos_emb", &[cfg.max_len, d], Init::Normal);
        let id_emb = (cfg.id_embedding == IdEmbedding::Dedicated)
            .then(|| b.add("id_emb", &[crate::vocab::MAX_NUMERAL + 1, d], Init::Normal));
        let out_proj =
            (!cfg.tie_embeddings).then(|| b.add("out_proj", &[d, cfg.vocab_size], Init::Normal));
        let decoder = (0..cfg.n_layers)
            .map(|i| b.block(&format!("dec{i}"), d, cfg.ffn_ratio, cfg.n_heads))
            .collect();
        let final_ln = b.norm("dec.ln_f", d);
        let view_proj = b.linear("scene.view", cfg.d_feat, d, true);
        let angle_proj = b.linear("scene.angle", cfg.angle_dim(), d, false);
        let pos_proj = b.linear("scene.pos", 3, d, false);
        let fusion = (0..cfg.fuse_layers)
            .map(|i| b.block(&format!("fuse{i}"), d, cfg.ffn_ratio, cfg.n_heads))
            .collect();
        let stop = b.add("scene.stop", &[d], Init::Normal);
        let not_exist = b.add("scene.not_exist", &[d], Init::Normal);
        let obj_proj = b.linear("scene.object", cfg.d_feat, d, true);
        Layout {
            tensors: b.tensors,
            tok_emb,
            pos_emb,
            id_emb,
            out_proj,
            decoder,
            final_ln,
            view_proj,
            angle_proj,
            pos_proj,
            fusion,
            stop,
            not_exist,
            obj_proj,
            total: b.total,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub cfg: ModelConfig,
    pub layout: Layout,
    pub values: Vec<f64>,
}

impl ModelParams {
    /// Linear maps and embeddings ~ N(0, init_std²); norms at 1/0.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<ModelParams> {
        cfg.validate()?;
        let layout = Layout::new(cfg);
        let mut values = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, cfg.init_std).expect("validated std");
        for t in &layout.tensors {
            let slot = &mut values[t.range()];
            match t.init {
                Init::Normal => slot.iter_mut().for_each(|v| *v = normal.sample(&mut rng)),
                Init::Zeros => slot.fill(0.0),
                Init::Ones => slot.fill(1.0),
            }
        }
        Ok(ModelParams {
            cfg: cfg.clone(),
            layout,
            values,
        })
    }

    pub fn from_values(cfg: &ModelConfig, values: Vec<f64>) -> Result<ModelParams> {
        cfg.validate()?;
        let layout = Layout::new(cfg);
        if values.len() != layout.total {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                layout.total,
                values.len()
            )));
        }
        Ok(ModelParams {
            cfg: cfg.clone(),
            layout,
            values,
        })
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.layout.total]
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| &self.values[t.range()])
    }
}
