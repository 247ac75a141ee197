//! Minimal pre-norm decoder: RMSNorm → causal multi-head attention with
//! rotary positions → residual → RMSNorm → GLU MLP → residual.
//!
//! One code path serves full-sequence scoring, prefill and cached decoding:
//! every linear map works row-by-row and attention for a position reads
//! cached keys/values in ascending order, so a token's logits are identical
//! whether it is scored in a full pass, decoded step by step, or batched with
//! other sequences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::glu::{glu_forward, rmsnorm_rows, GluLayer};
use crate::model_io::ModelConfig;
use crate::tensor::{add, matmul_t, Matrix};

pub const INIT_STD: f32 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub q_proj: Matrix,
    pub k_proj: Matrix,
    pub v_proj: Matrix,
    pub o_proj: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub input_norm: Vec<f32>,
    pub attn: Attention,
    pub post_attention_norm: Vec<f32>,
    pub mlp: GluLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTransformer {
    pub config: ModelConfig,
    /// `[vocab, d_model]`
    pub embed: Matrix,
    pub blocks: Vec<Block>,
    pub final_norm: Vec<f32>,
    /// `[vocab, d_model]`
    pub lm_head: Matrix,
}

/// Per-layer key/value rows (post-rotary) for one sequence.
#[derive(Debug, Clone, Default)]
pub struct LayerCache {
    keys: Vec<f32>,
    values: Vec<f32>,
    len: usize,
}

/// Decoding state of one sequence.
#[derive(Debug, Clone)]
pub struct DecodeState {
    layers: Vec<LayerCache>,
}

impl DecodeState {
    pub fn new(num_layers: usize) -> Self {
        Self {
            layers: vec![LayerCache::default(); num_layers],
        }
    }

    /// Number of positions already consumed.
    pub fn position(&self) -> usize {
        self.layers.first().map_or(0, |l| l.len)
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Result<Matrix> {
    let dist = Normal::new(0.0f32, INIT_STD).expect("valid std");
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Matrix::new(rows, cols, data)
}

/// Seeded N(0, 0.02²) weights, unit norm gains.
pub fn init_toy_model(seed: u64, config: &ModelConfig) -> Result<ToyTransformer> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, f, v) = (config.hidden_size, config.intermediate_size, config.vocab_size);
    let embed = normal_matrix(&mut rng, v, d)?;
    let mut blocks = Vec::with_capacity(config.num_layers);
    for _ in 0..config.num_layers {
        let attn = Attention {
            q_proj: normal_matrix(&mut rng, d, d)?,
            k_proj: normal_matrix(&mut rng, d, d)?,
            v_proj: normal_matrix(&mut rng, d, d)?,
            o_proj: normal_matrix(&mut rng, d, d)?,
        };
        let mlp = GluLayer::new(
            normal_matrix(&mut rng, f, d)?,
            normal_matrix(&mut rng, f, d)?,
            normal_matrix(&mut rng, d, f)?,
        )?;
        blocks.push(Block {
            input_norm: vec![1.0; d],
            attn,
            post_attention_norm: vec![1.0; d],
            mlp,
        });
    }
    let lm_head = normal_matrix(&mut rng, v, d)?;
    Ok(ToyTransformer {
        config: config.clone(),
        embed,
        blocks,
        final_norm: vec![1.0; d],
        lm_head,
    })
}

/// Rotates each head's `(i, i + hd/2)` pairs by `pos · θ^(-2i/hd)`.
pub fn apply_rope(row: &mut [f32], pos: usize, num_heads: usize, theta: f64) {
    let hd = row.len() / num_heads;
    let half = hd / 2;
    for h in 0..num_heads {
        let head = &mut row[h * hd..(h + 1) * hd];
        for i in 0..half {
            let freq = theta.powf(-2.0 * i as f64 / hd as f64);
            let angle = pos as f64 * freq;
            let (sin, cos) = (angle.sin() as f32, angle.cos() as f32);
            let (a, b) = (head[i], head[i + half]);
            head[i] = a * cos - b * sin;
            head[i + half] = b * cos + a * sin;
        }
    }
}

/// Causal attention for `q_rows.len()` new positions of one sequence whose
/// keys/values (including the new ones) are already in `cache`.
fn attend(
    q: &[f32],
    cache: &LayerCache,
    first_pos: usize,
    num_heads: usize,
    d: usize,
    out: &mut [f32],
) {
    let hd = d / num_heads;
    let scale = 1.0 / (hd as f32).sqrt();
    let n_new = q.len() / d;
    let mut scores = Vec::new();
    for r in 0..n_new {
        let pos = first_pos + r;
        let q_row = &q[r * d..(r + 1) * d];
        let out_row = &mut out[r * d..(r + 1) * d];
        for h in 0..num_heads {
            let qh = &q_row[h * hd..(h + 1) * hd];
            scores.clear();
            let mut max = f32::NEG_INFINITY;
            for s in 0..=pos {
                let kh = &cache.keys[s * d + h * hd..s * d + (h + 1) * hd];
                let sc = crate::tensor::dot(qh, kh) * scale;
                max = max.max(sc);
                scores.push(sc);
            }
            let mut sum = 0.0f32;
            for sc in scores.iter_mut() {
                *sc = (*sc - max).exp();
                sum += *sc;
            }
            let oh = &mut out_row[h * hd..(h + 1) * hd];
            oh.fill(0.0);
            for (s, &p) in scores.iter().enumerate() {
                let w = p / sum;
                let vh = &cache.values[s * d + h * hd..s * d + (h + 1) * hd];
                for (o, &vv) in oh.iter_mut().zip(vh) {
                    *o += w * vv;
                }
            }
        }
    }
}

/// Runs one block over the concatenated new rows of several sequences.
/// `spans[i]` is the number of rows belonging to sequence `i`.
fn block_step(
    x: &Matrix,
    block: &Block,
    config: &ModelConfig,
    caches: &mut [&mut LayerCache],
    spans: &[usize],
) -> Result<Matrix> {
    let d = config.hidden_size;
    let eps = config.rms_eps as f32;
    let h = rmsnorm_rows(x, &block.input_norm, eps)?;
    let mut q = matmul_t(&h, &block.attn.q_proj)?;
    let mut k = matmul_t(&h, &block.attn.k_proj)?;
    let v = matmul_t(&h, &block.attn.v_proj)?;

    let mut attn_out = Matrix::zeros(x.rows(), d)?;
    let mut row0 = 0;
    for (cache, &n) in caches.iter_mut().zip(spans) {
        let first_pos = cache.len;
        for r in 0..n {
            let pos = first_pos + r;
            apply_rope(q.row_mut(row0 + r), pos, config.num_heads, config.rope_theta);
            apply_rope(k.row_mut(row0 + r), pos, config.num_heads, config.rope_theta);
            cache.keys.extend_from_slice(k.row(row0 + r));
            cache.values.extend_from_slice(v.row(row0 + r));
        }
        cache.len += n;
        let q_rows = &q.data()[row0 * d..(row0 + n) * d];
        let out = &mut attn_out.data_mut()[row0 * d..(row0 + n) * d];
        attend(q_rows, cache, first_pos, config.num_heads, d, out);
        row0 += n;
    }
    let o = matmul_t(&attn_out, &block.attn.o_proj)?;
    let x1 = add(x, &o)?;
    let h2 = rmsnorm_rows(&x1, &block.post_attention_norm, eps)?;
    let m = glu_forward(&h2, &block.mlp)?;
    add(&x1, &m)
}

/// One decoder block over a whole sequence starting at position 0.
pub fn block_forward(x: &Matrix, block: &Block, config: &ModelConfig) -> Result<Matrix> {
    if x.cols() != config.hidden_size {
        return Err(Error::Shape {
            op: "block_forward",
            left: x.shape(),
            right: (x.rows(), config.hidden_size),
        });
    }
    let mut cache = LayerCache::default();
    block_step(x, block, config, &mut [&mut cache], &[x.rows()])
}

impl ToyTransformer {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn expansion_ratio(&self) -> f64 {
        self.config.expansion_ratio()
    }

    pub fn new_state(&self) -> DecodeState {
        DecodeState::new(self.blocks.len())
    }

    pub fn embed_tokens(&self, ids: &[u32]) -> Result<Matrix> {
        let d = self.config.hidden_size;
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id as usize >= self.config.vocab_size {
                return Err(Error::InvalidArgument(format!(
                    "token id {id} out of range for vocabulary of {}",
                    self.config.vocab_size
                )));
            }
            data.extend_from_slice(self.embed.row(id as usize));
        }
        if ids.is_empty() {
            return Err(Error::InvalidArgument("empty token sequence".into()));
        }
        Matrix::new(ids.len(), d, data)
    }

    /// Final norm and output head applied to hidden rows.
    pub fn head(&self, hidden: &Matrix) -> Result<Matrix> {
        let h = rmsnorm_rows(hidden, &self.final_norm, self.config.rms_eps as f32)?;
        matmul_t(&h, &self.lm_head)
    }

    /// Feeds `tokens[i]` to sequence `states[i]` and returns the logits of all
    /// new positions, sequences concatenated in order.
    pub fn forward_batch(&self, states: &mut [DecodeState], tokens: &[&[u32]]) -> Result<Matrix> {
        if states.len() != tokens.len() || tokens.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{} states for {} token slices",
                states.len(),
                tokens.len()
            )));
        }
        if tokens.iter().any(|t| t.is_empty()) {
            return Err(Error::InvalidArgument("empty token sequence".into()));
        }
        let all: Vec<u32> = tokens.concat();
        let spans: Vec<usize> = tokens.iter().map(|t| t.len()).collect();
        let mut x = self.embed_tokens(&all)?;
        for (li, block) in self.blocks.iter().enumerate() {
            let mut caches: Vec<&mut LayerCache> =
                states.iter_mut().map(|s| &mut s.layers[li]).collect();
            x = block_step(&x, block, &self.config, &mut caches, &spans)?;
        }
        self.head(&x)
    }

    /// `[seq_len, vocab]` logits for a full sequence.
    pub fn logits(&self, ids: &[u32]) -> Result<Matrix> {
        let mut state = self.new_state();
        self.forward_batch(std::slice::from_mut(&mut state), &[ids])
    }

    /// Greedy decoding of `gen_tokens` tokens for every prompt, processed as
    /// one batch with a per-sequence key/value cache.
    pub fn generate_greedy(&self, prompts: &[Vec<u32>], gen_tokens: usize) -> Result<Vec<Vec<u32>>> {
        let mut states: Vec<DecodeState> = prompts.iter().map(|_| self.new_state()).collect();
        let mut outputs = vec![Vec::with_capacity(gen_tokens); prompts.len()];
        if gen_tokens == 0 || prompts.is_empty() {
            return Ok(outputs);
        }
        let slices: Vec<&[u32]> = prompts.iter().map(Vec::as_slice).collect();
        let logits = self.forward_batch(&mut states, &slices)?;
        let mut row = 0;
        let mut next = Vec::with_capacity(prompts.len());
        for p in prompts {
            row += p.len();
            next.push(argmax(logits.row(row - 1)) as u32);
        }
        for (out, &t) in outputs.iter_mut().zip(&next) {
            out.push(t);
        }
        for _ in 1..gen_tokens {
            let step: Vec<[u32; 1]> = next.iter().map(|&t| [t]).collect();
            let slices: Vec<&[u32]> = step.iter().map(|s| s.as_slice()).collect();
            let logits = self.forward_batch(&mut states, &slices)?;
            next.clear();
            for (i, out) in outputs.iter_mut().enumerate() {
                let t = argmax(logits.row(i)) as u32;
                out.push(t);
                next.push(t);
            }
        }
        Ok(outputs)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn model_logits(model: &ToyTransformer, ids: &[u32]) -> Result<Matrix> {
    model.logits(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ToyTransformer {
        let cfg = ModelConfig {
            hidden_size: 8,
            intermediate_size: 16,
            num_layers: 2,
            num_heads: 2,
            vocab_size: 11,
            rope_theta: 10_000.0,
            rms_eps: 1e-5,
        };
        init_toy_model(7, &cfg).unwrap()
    }

    #[test]
    fn seeds_are_deterministic() {
        let cfg = ModelConfig::default();
        assert_eq!(init_toy_model(1, &cfg).unwrap(), init_toy_model(1, &cfg).unwrap());
        assert_ne!(init_toy_model(1, &cfg).unwrap(), init_toy_model(2, &cfg).unwrap());
    }

    #[test]
    fn logits_shape_and_determinism() {
        let m = tiny();
        let a = m.logits(&[3]).unwrap();
        assert_eq!(a.shape(), (1, 11));
        let ids = [1, 5, 2, 9, 0];
        assert_eq!(m.logits(&ids).unwrap(), m.logits(&ids).unwrap());
        assert!(m.logits(&[11]).is_err());
    }

    #[test]
    fn cached_decoding_matches_full_pass() {
        let m = tiny();
        let ids = [1u32, 5, 2, 9, 0, 4];
        let full = m.logits(&ids).unwrap();
        let mut state = m.new_state();
        let pre = m.forward_batch(std::slice::from_mut(&mut state), &[&ids[..3]]).unwrap();
        for r in 0..3 {
            assert_eq!(pre.row(r), full.row(r));
        }
        for (t, &id) in ids.iter().enumerate().skip(3) {
            let step = m.forward_batch(std::slice::from_mut(&mut state), &[&[id]]).unwrap();
            assert_eq!(step.row(0), full.row(t));
        }
        assert_eq!(state.position(), ids.len());
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn rope_position_zero_is_identity() {
        let mut row = vec![0.5, -1.0, 2.0, 3.0];
        let orig = row.clone();
        apply_rope(&mut row, 0, 1, 10_000.0);
        assert_eq!(row, orig);
        apply_rope(&mut row, 3, 1, 10_000.0);
        let n0: f32 = orig.iter().map(|v| v * v).sum();
        let n1: f32 = row.iter().map(|v| v * v).sum();
        assert!((n0 - n1).abs() < 1e-5);
    }
}
