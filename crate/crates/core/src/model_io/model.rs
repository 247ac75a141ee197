//! Mapping between [`ToyTransformer`] and named archive tensors.
//!
//! Names follow the Llama checkpoint convention:
//! `model.layers.{i}.mlp.{gate_proj|up_proj|down_proj}.weight` and friends.

use std::path::Path;

use super::archive::{read_archive, write_archive, TensorArchive, TensorEntry};
use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::glu::GluLayer;
use crate::tensor::{DataKind, Matrix};
use crate::transformer::{Attention, Block, ToyTransformer};

pub const CONFIG_FILE: &str = "config.json";
pub const WEIGHTS_FILE: &str = "model.safetensors";
pub const EMBED_NAME: &str = "model.embed_tokens.weight";
pub const FINAL_NORM_NAME: &str = "model.norm.weight";
pub const LM_HEAD_NAME: &str = "lm_head.weight";

pub fn mlp_name(layer: usize, proj: &str) -> String {
    format!("model.layers.{layer}.mlp.{proj}.weight")
}

fn attn_name(layer: usize, proj: &str) -> String {
    format!("model.layers.{layer}.self_attn.{proj}.weight")
}

fn norm_name(layer: usize, which: &str) -> String {
    format!("model.layers.{layer}.{which}.weight")
}

fn take_matrix(archive: &TensorArchive, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
    let entry = archive
        .get(name)
        .ok_or_else(|| Error::Model(format!("missing tensor {name}")))?;
    if entry.shape != [rows, cols] {
        return Err(Error::Model(format!(
            "tensor {name} has shape {:?}, config expects [{rows}, {cols}]",
            entry.shape
        )));
    }
    Matrix::new(rows, cols, entry.to_f32())
}

fn take_vector(archive: &TensorArchive, name: &str, len: usize) -> Result<Vec<f32>> {
    let entry = archive
        .get(name)
        .ok_or_else(|| Error::Model(format!("missing tensor {name}")))?;
    if entry.shape != [len] {
        return Err(Error::Model(format!(
            "tensor {name} has shape {:?}, config expects [{len}]",
            entry.shape
        )));
    }
    Ok(entry.to_f32())
}

/// Builds the in-memory model; BF16 tensors are widened to F32.
pub fn load_model(archive: &TensorArchive, config: &ModelConfig) -> Result<ToyTransformer> {
    config.validate()?;
    let (d, f, v) = (config.hidden_size, config.intermediate_size, config.vocab_size);
    let mut blocks = Vec::with_capacity(config.num_layers);
    for i in 0..config.num_layers {
        let attn = Attention {
            q_proj: take_matrix(archive, &attn_name(i, "q_proj"), d, d)?,
            k_proj: take_matrix(archive, &attn_name(i, "k_proj"), d, d)?,
            v_proj: take_matrix(archive, &attn_name(i, "v_proj"), d, d)?,
            o_proj: take_matrix(archive, &attn_name(i, "o_proj"), d, d)?,
        };
        let mlp = GluLayer::new(
            take_matrix(archive, &mlp_name(i, "gate_proj"), f, d)?,
            take_matrix(archive, &mlp_name(i, "up_proj"), f, d)?,
            take_matrix(archive, &mlp_name(i, "down_proj"), d, f)?,
        )?;
        blocks.push(Block {
            input_norm: take_vector(archive, &norm_name(i, "input_layernorm"), d)?,
            attn,
            post_attention_norm: take_vector(archive, &norm_name(i, "post_attention_layernorm"), d)?,
            mlp,
        });
    }
    Ok(ToyTransformer {
        config: config.clone(),
        embed: take_matrix(archive, EMBED_NAME, v, d)?,
        blocks,
        final_norm: take_vector(archive, FINAL_NORM_NAME, d)?,
        lm_head: take_matrix(archive, LM_HEAD_NAME, v, d)?,
    })
}

fn put_matrix(a: &mut TensorArchive, name: String, m: &Matrix, kind: DataKind) -> Result<()> {
    a.insert(name, TensorEntry::from_f32(kind, vec![m.rows(), m.cols()], m.data())?)
}

fn put_vector(a: &mut TensorArchive, name: String, v: &[f32], kind: DataKind) -> Result<()> {
    a.insert(name, TensorEntry::from_f32(kind, vec![v.len()], v)?)
}

/// Inverse of [`load_model`].
pub fn save_model(model: &ToyTransformer, kind: DataKind) -> Result<TensorArchive> {
    let mut a = TensorArchive::new();
    put_matrix(&mut a, EMBED_NAME.into(), &model.embed, kind)?;
    for (i, b) in model.blocks.iter().enumerate() {
        put_vector(&mut a, norm_name(i, "input_layernorm"), &b.input_norm, kind)?;
        put_vector(&mut a, norm_name(i, "post_attention_layernorm"), &b.post_attention_norm, kind)?;
        put_matrix(&mut a, attn_name(i, "q_proj"), &b.attn.q_proj, kind)?;
        put_matrix(&mut a, attn_name(i, "k_proj"), &b.attn.k_proj, kind)?;
        put_matrix(&mut a, attn_name(i, "v_proj"), &b.attn.v_proj, kind)?;
        put_matrix(&mut a, attn_name(i, "o_proj"), &b.attn.o_proj, kind)?;
        put_matrix(&mut a, mlp_name(i, "gate_proj"), &b.mlp.w_gate, kind)?;
        put_matrix(&mut a, mlp_name(i, "up_proj"), &b.mlp.w_up, kind)?;
        put_matrix(&mut a, mlp_name(i, "down_proj"), &b.mlp.w_down, kind)?;
    }
    put_vector(&mut a, FINAL_NORM_NAME.into(), &model.final_norm, kind)?;
    put_matrix(&mut a, LM_HEAD_NAME.into(), &model.lm_head, kind)?;
    Ok(a)
}

/// Reads `config.json` + `model.safetensors` from a model directory.
pub fn load_model_dir(dir: &Path) -> Result<ToyTransformer> {
    let config = ModelConfig::read(&dir.join(CONFIG_FILE))?;
    let archive = read_archive(&dir.join(WEIGHTS_FILE))?;
    load_model(&archive, &config)
}

pub fn save_model_dir(model: &ToyTransformer, dir: &Path, kind: DataKind) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    model.config.write(&dir.join(CONFIG_FILE))?;
    write_archive(&save_model(model, kind)?, &dir.join(WEIGHTS_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transformer::init_toy_model;

    #[test]
    fn round_trip_in_memory() {
        let cfg = ModelConfig::default();
        let m = init_toy_model(3, &cfg).unwrap();
        let a = save_model(&m, DataKind::F32).unwrap();
        assert_eq!(load_model(&a, &cfg).unwrap(), m);
    }

    #[test]
    fn mismatch_and_missing_rejected() {
        let cfg = ModelConfig::default();
        let m = init_toy_model(3, &cfg).unwrap();
        let mut a = save_model(&m, DataKind::F32).unwrap();
        let mut wrong = cfg.clone();
        wrong.intermediate_size = 128;
        assert!(load_model(&a, &wrong).unwrap_err().to_string().contains("gate_proj"));
        a.remove(&mlp_name(1, "up_proj"));
        assert!(load_model(&a, &cfg).unwrap_err().to_string().contains("missing"));
        let mut zero = cfg;
        zero.num_layers = 0;
        assert!(load_model(&save_model(&m, DataKind::F32).unwrap(), &zero).is_err());
    }

    #[test]
    fn bf16_storage_widens() {
        let cfg = ModelConfig::default();
        let m = init_toy_model(3, &cfg).unwrap();
        let a = save_model(&m, DataKind::BF16).unwrap();
        let back = load_model(&a, &cfg).unwrap();
        let orig = m.blocks[0].mlp.w_gate.data()[5];
        assert_eq!(back.blocks[0].mlp.w_gate.data()[5], super::super::bf16::round_trip(orig));
    }
}
