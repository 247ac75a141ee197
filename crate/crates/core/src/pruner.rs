//! Pruning plans and paired neuron-removal surgery.
//!
//! The same number of neurons is removed from every layer, each layer
//! choosing its own lowest-scoring set, so the pruned model keeps a uniform
//! intermediate size.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glu::GluLayer;
use crate::importance::{score_layer, select_prune_set, Criterion};
use crate::transformer::{Block, ToyTransformer};

/// Pruning fractions evaluated per model, baseline through 60%.
pub const CANONICAL_FRACTIONS: [f64; 7] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRemoval {
    pub layer: usize,
    pub removed: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningPlan {
    pub criterion: Criterion,
    pub fraction: f64,
    pub original_d_ff: usize,
    pub retained_d_ff: usize,
    pub hidden_size: usize,
    pub target_ratio: f64,
    pub per_layer_removals: Vec<LayerRemoval>,
}

impl PruningPlan {
    pub fn removed_per_layer(&self) -> usize {
        self.original_d_ff - self.retained_d_ff
    }

    pub fn is_noop(&self) -> bool {
        self.retained_d_ff == self.original_d_ff
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// `ceil(d_ff · (1 − fraction))`, never below one neuron.
///
/// Products within 1e-9 of an integer are snapped first so that binary
/// rounding of the fraction cannot push an exact result up by one.
pub fn retained_dim(d_ff: usize, fraction: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "pruning fraction must be in [0, 1), got {fraction}"
        )));
    }
    let x = d_ff as f64 * (1.0 - fraction);
    let nearest = x.round();
    let retained = if (x - nearest).abs() <= 1e-9 * x.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    Ok((retained as usize).clamp(1, d_ff))
}

fn plan_for_retained(
    layers: &[&GluLayer],
    hidden_size: usize,
    criterion: Criterion,
    retained: usize,
) -> Result<PruningPlan> {
    let first = layers
        .first()
        .ok_or_else(|| Error::InvalidArgument("model has no layers".into()))?;
    let d_ff = first.d_ff();
    if layers.iter().any(|l| l.d_ff() != d_ff) {
        return Err(Error::Model("layers disagree on intermediate size".into()));
    }
    let k = d_ff - retained;
    let per_layer_removals = layers
        .par_iter()
        .enumerate()
        .map(|(i, layer)| {
            let scores = score_layer(layer, i, criterion);
            Ok(LayerRemoval {
                layer: i,
                removed: select_prune_set(&scores, k)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PruningPlan {
        criterion,
        fraction: 1.0 - retained as f64 / d_ff as f64,
        original_d_ff: d_ff,
        retained_d_ff: retained,
        hidden_size,
        target_ratio: retained as f64 / hidden_size as f64,
        per_layer_removals,
    })
}

/// Plans removal of `fraction` of every layer's neurons.
pub fn plan_layers_from_fraction(
    layers: &[&GluLayer],
    hidden_size: usize,
    criterion: Criterion,
    fraction: f64,
) -> Result<PruningPlan> {
    let d_ff = layers.first().map_or(0, |l| l.d_ff());
    let retained = retained_dim(d_ff, fraction)?;
    let mut plan = plan_for_retained(layers, hidden_size, criterion, retained)?;
    plan.fraction = fraction;
    Ok(plan)
}

fn mlps(model: &ToyTransformer) -> Vec<&GluLayer> {
    model.blocks.iter().map(|b| &b.mlp).collect()
}

pub fn plan_from_fraction(
    model: &ToyTransformer,
    criterion: Criterion,
    fraction: f64,
) -> Result<PruningPlan> {
    plan_layers_from_fraction(&mlps(model), model.config.hidden_size, criterion, fraction)
}

/// Maps a requested expansion ratio onto the canonical fraction grid when it
/// names one of its rows, either exactly or as the two-decimal label the
/// result tables print (e.g. 2.13 for 8192·0.8/3072).
pub fn snap_ratio_to_grid(d_ff: usize, hidden_size: usize, ratio: f64) -> Option<f64> {
    let baseline = d_ff as f64 / hidden_size as f64;
    CANONICAL_FRACTIONS.iter().copied().find(|&p| {
        let nominal = baseline * (1.0 - p);
        let label = (nominal * 100.0).round() / 100.0;
        (ratio - nominal).abs() < 1e-6 || (ratio - label).abs() < 1e-6
    })
}

pub fn plan_layers_from_ratio(
    layers: &[&GluLayer],
    hidden_size: usize,
    criterion: Criterion,
    ratio: f64,
) -> Result<PruningPlan> {
    let d_ff = layers
        .first()
        .map(|l| l.d_ff())
        .ok_or_else(|| Error::InvalidArgument("model has no layers".into()))?;
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "expansion ratio must be positive, got {ratio}"
        )));
    }
    if let Some(p) = snap_ratio_to_grid(d_ff, hidden_size, ratio) {
        return plan_layers_from_fraction(layers, hidden_size, criterion, p);
    }
    let baseline = d_ff as f64 / hidden_size as f64;
    if ratio > baseline + 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "expansion ratio {ratio} exceeds the model's baseline {baseline:.4}"
        )));
    }
    let retained = ((ratio * hidden_size as f64).round() as usize).clamp(1, d_ff);
    plan_for_retained(layers, hidden_size, criterion, retained)
}

pub fn plan_from_ratio(model: &ToyTransformer, criterion: Criterion, ratio: f64) -> Result<PruningPlan> {
    plan_layers_from_ratio(&mlps(model), model.config.hidden_size, criterion, ratio)
}

/// Removes rows of gate/up and the matching columns of down.
pub fn prune_layer(layer: &GluLayer, removals: &[usize]) -> Result<GluLayer> {
    let d_ff = layer.d_ff();
    for w in removals.windows(2) {
        if w[1] == w[0] {
            return Err(Error::Index(format!("duplicate removal index {}", w[0])));
        }
        if w[1] < w[0] {
            return Err(Error::Index(format!(
                "removal indices must be ascending, found {} then {}",
                w[0], w[1]
            )));
        }
    }
    if let Some(&last) = removals.last() {
        if last >= d_ff {
            return Err(Error::Index(format!(
                "removal index {last} out of range for d_ff {d_ff}"
            )));
        }
    }
    if removals.is_empty() {
        return Ok(layer.clone());
    }
    let mut removed = removals.iter().peekable();
    let keep: Vec<usize> = (0..d_ff)
        .filter(|n| {
            if removed.peek() == Some(&n) {
                removed.next();
                false
            } else {
                true
            }
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::Index("cannot remove every neuron".into()));
    }
    GluLayer::new(
        layer.w_gate.gather_rows(&keep)?,
        layer.w_up.gather_rows(&keep)?,
        layer.w_down.gather_cols(&keep)?,
    )
}

pub fn prune_model(model: &ToyTransformer, plan: &PruningPlan) -> Result<ToyTransformer> {
    let cfg = &model.config;
    if plan.original_d_ff != cfg.intermediate_size || plan.hidden_size != cfg.hidden_size {
        return Err(Error::Model(format!(
            "plan built for d_ff={} hidden={}, model has d_ff={} hidden={}",
            plan.original_d_ff, plan.hidden_size, cfg.intermediate_size, cfg.hidden_size
        )));
    }
    if plan.per_layer_removals.len() != model.blocks.len() {
        return Err(Error::Model(format!(
            "plan covers {} layers, model has {}",
            plan.per_layer_removals.len(),
            model.blocks.len()
        )));
    }
    let k = plan.removed_per_layer();
    for (i, lr) in plan.per_layer_removals.iter().enumerate() {
        if lr.layer != i || lr.removed.len() != k {
            return Err(Error::Model(format!(
                "plan entry {i} (layer {}) removes {} neurons, expected {k}",
                lr.layer,
                lr.removed.len()
            )));
        }
    }
    let blocks = model
        .blocks
        .par_iter()
        .zip(&plan.per_layer_removals)
        .map(|(b, lr)| {
            Ok(Block {
                input_norm: b.input_norm.clone(),
                attn: b.attn.clone(),
                post_attention_norm: b.post_attention_norm.clone(),
                mlp: prune_layer(&b.mlp, &lr.removed)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut config = cfg.clone();
    config.intermediate_size = plan.retained_d_ff;
    Ok(ToyTransformer {
        config,
        embed: model.embed.clone(),
        blocks,
        final_norm: model.final_norm.clone(),
        lm_head: model.lm_head.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub passed: bool,
    pub checks: usize,
    pub violation: Option<String>,
}

/// Structural audit of a (possibly pruned) model. Never errors; the first
/// violation found is reported.
pub fn verify_consistency(model: &ToyTransformer) -> ConsistencyReport {
    let cfg = &model.config;
    let d = cfg.hidden_size;
    let mut checks = 0usize;
    let mut check = |ok: bool, msg: &dyn Fn() -> String| -> Option<String> {
        checks += 1;
        (!ok).then(msg)
    };
    let violation = (|| {
        if let Some(v) = check(cfg.validate().is_ok(), &|| {
            format!("config invalid: {}", cfg.validate().unwrap_err())
        }) {
            return Some(v);
        }
        if let Some(v) = check(model.blocks.len() == cfg.num_layers, &|| {
            format!("config lists {} layers, model has {}", cfg.num_layers, model.blocks.len())
        }) {
            return Some(v);
        }
        let first_d_ff = model.blocks.first().map(|b| b.mlp.d_ff());
        for (i, b) in model.blocks.iter().enumerate() {
            let m = &b.mlp;
            let items: [(bool, Box<dyn Fn() -> String>); 7] = [
                (m.w_gate.shape() == m.w_up.shape(), Box::new(|| format!(
                    "layer {i}: gate_proj shape {:?} != up_proj shape {:?}", m.w_gate.shape(), m.w_up.shape()))),
                (m.w_gate.cols() == d, Box::new(|| format!(
                    "layer {i}: gate_proj input dimension {} != hidden_size {d}", m.w_gate.cols()))),
                (m.w_down.rows() == d, Box::new(|| format!(
                    "layer {i}: down_proj output dimension {} != hidden_size {d}", m.w_down.rows()))),
                (m.w_down.cols() == m.w_gate.rows(), Box::new(|| format!(
                    "layer {i}: down_proj input dimension {} != gate_proj rows {}", m.w_down.cols(), m.w_gate.rows()))),
                (Some(m.d_ff()) == first_d_ff, Box::new(|| format!(
                    "layer {i}: intermediate dimension {} breaks uniformity (layer 0 has {})", m.d_ff(), first_d_ff.unwrap_or(0)))),
                (m.d_ff() == cfg.intermediate_size, Box::new(|| format!(
                    "layer {i}: intermediate dimension {} != config intermediate_size {}", m.d_ff(), cfg.intermediate_size))),
                ([&b.attn.q_proj, &b.attn.k_proj, &b.attn.v_proj, &b.attn.o_proj]
                    .iter()
                    .all(|w| w.shape() == (d, d))
                    && b.input_norm.len() == d
                    && b.post_attention_norm.len() == d,
                 Box::new(|| format!("layer {i}: attention or norm weights do not match hidden_size {d}"))),
            ];
            for (ok, msg) in items.iter() {
                if let Some(v) = check(*ok, &**msg) {
                    return Some(v);
                }
            }
        }
        let head_ok = model.embed.shape() == (cfg.vocab_size, d)
            && model.lm_head.shape() == (cfg.vocab_size, d)
            && model.final_norm.len() == d;
        check(head_ok, &|| "embedding, final norm or lm_head shape mismatch".to_string())
    })();
    ConsistencyReport {
        passed: violation.is_none(),
        checks,
        violation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_io::ModelConfig;
    use crate::tensor::Matrix;
    use crate::transformer::init_toy_model;

    #[test]
    fn table_one_dims() {
        let want = [8192, 7373, 6554, 5735, 4916, 4096, 3277];
        for (p, w) in CANONICAL_FRACTIONS.iter().zip(want) {
            assert_eq!(retained_dim(8192, *p).unwrap(), w, "fraction {p}");
        }
        assert!(retained_dim(8192, 1.0).is_err());
        assert!(retained_dim(8192, -0.1).is_err());
        assert_eq!(retained_dim(10, 0.1).unwrap(), 9);
        assert_eq!(retained_dim(256, 0.5).unwrap(), 128);
    }

    #[test]
    fn ratio_snapping() {
        assert_eq!(snap_ratio_to_grid(8192, 2048, 2.4), Some(0.4));
        assert_eq!(snap_ratio_to_grid(8192, 2048, 1.6), Some(0.6));
        assert_eq!(snap_ratio_to_grid(8192, 3072, 2.13), Some(0.2));
        assert_eq!(snap_ratio_to_grid(8192, 3072, 2.67), Some(0.0));
        assert_eq!(snap_ratio_to_grid(8192, 2048, 2.5), None);
    }

    #[test]
    fn shapes_after_removal() {
        let layer = GluLayer::new(
            Matrix::new(8, 3, (0..24).map(|v| v as f32).collect()).unwrap(),
            Matrix::new(8, 3, (0..24).map(|v| -(v as f32)).collect()).unwrap(),
            Matrix::new(3, 8, (0..24).map(|v| v as f32 * 0.5).collect()).unwrap(),
        )
        .unwrap();
        let p = prune_layer(&layer, &[1, 4, 7]).unwrap();
        assert_eq!(p.w_gate.shape(), (5, 3));
        assert_eq!(p.w_up.shape(), (5, 3));
        assert_eq!(p.w_down.shape(), (3, 5));
        assert_eq!(p.w_gate.row(1), layer.w_gate.row(2));
        assert_eq!(p.w_down.get(0, 3), layer.w_down.get(0, 5));
        assert_eq!(prune_layer(&layer, &[]).unwrap(), layer);
        assert!(prune_layer(&layer, &[2, 2]).is_err());
        assert!(prune_layer(&layer, &[3, 1]).is_err());
        assert!(prune_layer(&layer, &[8]).is_err());
        assert!(prune_layer(&layer, &(0..8).collect::<Vec<_>>()).is_err());
    }

    #[test]
    fn toy_plans() {
        let model = init_toy_model(42, &ModelConfig::default()).unwrap();
        let noop = plan_from_fraction(&model, Criterion::Maw, 0.0).unwrap();
        assert!(noop.is_noop());
        assert!(noop.per_layer_removals.iter().all(|l| l.removed.is_empty()));
        assert_eq!(noop.target_ratio, 4.0);

        let half = plan_from_fraction(&model, Criterion::Maw, 0.5).unwrap();
        assert!(half.per_layer_removals.iter().all(|l| l.removed.len() == 256 - 128));
        let pruned = prune_model(&model, &half).unwrap();
        assert_eq!(pruned.config.intermediate_size, 128);
        assert!(verify_consistency(&pruned).passed);
        assert_eq!(pruned.blocks[0].attn, model.blocks[0].attn);

        let by_ratio = plan_from_ratio(&model, Criterion::Maw, 4.0).unwrap();
        assert!(by_ratio.is_noop());
        let off_grid = plan_from_ratio(&model, Criterion::Pon, 2.5).unwrap();
        assert_eq!(off_grid.retained_d_ff, 160);
        assert!(plan_from_ratio(&model, Criterion::Maw, 4.5).is_err());
    }

    #[test]
    fn plan_model_mismatch() {
        let model = init_toy_model(42, &ModelConfig::default()).unwrap();
        let mut plan = plan_from_fraction(&model, Criterion::Maw, 0.25).unwrap();
        plan.per_layer_removals.pop();
        assert!(prune_model(&model, &plan).is_err());
        let mut plan = plan_from_fraction(&model, Criterion::Maw, 0.25).unwrap();
        plan.original_d_ff = 512;
        assert!(prune_model(&model, &plan).is_err());
    }

    #[test]
    fn verify_reports_violations() {
        let model = init_toy_model(42, &ModelConfig::default()).unwrap();
        let r = verify_consistency(&model);
        assert!(r.passed && r.violation.is_none() && r.checks > 10);

        let mut corrupt = model.clone();
        corrupt.blocks[1].mlp.w_gate = Matrix::zeros(255, 64).unwrap();
        let r = verify_consistency(&corrupt);
        assert!(!r.passed);
        let msg = r.violation.unwrap();
        assert!(msg.contains("layer 1") && msg.contains("gate_proj"), "{msg}");

        let mut mixed = model.clone();
        mixed.blocks[1].mlp = prune_layer(&mixed.blocks[1].mlp, &[0, 1]).unwrap();
        let msg = verify_consistency(&mixed).violation.unwrap();
        assert!(msg.contains("uniformity"), "{msg}");
    }
}
