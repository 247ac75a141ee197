use glu_shears_core::analytics::{self, stats, Direction, Series};
use glu_shears_core::eval::{self, Corpus, BYTE_VOCAB};
use glu_shears_core::glu::{glu_forward, GluLayer};
use glu_shears_core::importance::{self, Criterion, ImportanceVector};
use glu_shears_core::model_io::{bf16_to_f32, f32_to_bf16, TensorArchive, TensorEntry};
use glu_shears_core::profiler::{self, ConstantPower, EnergySource};
use glu_shears_core::pruner;
use glu_shears_core::tensor::{self, DataKind, Matrix};
use glu_shears_core::transformer::init_toy_model;
use glu_shears_core::ModelConfig;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-4.0f32..4.0, rows * cols).prop_map(move |d| Matrix::new(rows, cols, d).unwrap())
}

fn any_matrix() -> impl Strategy<Value = Matrix> {
    (1usize..7, 1usize..7).prop_flat_map(|(r, c)| matrix(r, c))
}

fn layer(d_model: usize, d_ff: usize) -> impl Strategy<Value = GluLayer> {
    (matrix(d_ff, d_model), matrix(d_ff, d_model), matrix(d_model, d_ff))
        .prop_map(|(g, u, d)| GluLayer::new(g, u, d).unwrap())
}

fn any_layer() -> impl Strategy<Value = GluLayer> {
    (1usize..6, 2usize..12).prop_flat_map(|(m, f)| layer(m, f))
}

fn permute_rows(m: &Matrix, perm: &[usize]) -> Matrix {
    Matrix::from_rows(&perm.iter().map(|&p| m.row(p).to_vec()).collect::<Vec<_>>()).unwrap()
}

fn permute_cols(m: &Matrix, perm: &[usize]) -> Matrix {
    let rows: Vec<Vec<f32>> = (0..m.rows()).map(|r| perm.iter().map(|&p| m.get(r, p)).collect()).collect();
    Matrix::from_rows(&rows).unwrap()
}

fn small_config() -> ModelConfig {
    ModelConfig {
        hidden_size: 8,
        intermediate_size: 16,
        num_layers: 1,
        num_heads: 2,
        vocab_size: BYTE_VOCAB,
        rope_theta: 10_000.0,
        rms_eps: 1e-5,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identity_is_neutral(m in any_matrix()) {
        let left = Matrix::identity(m.rows()).unwrap();
        let right = Matrix::identity(m.cols()).unwrap();
        prop_assert_eq!(&tensor::matmul(&left, &m).unwrap(), &m);
        prop_assert_eq!(&tensor::matmul(&m, &right).unwrap(), &m);
    }

    #[test]
    fn gathering_every_row_is_identity(m in any_matrix()) {
        let all: Vec<usize> = (0..m.rows()).collect();
        prop_assert_eq!(&m.gather_rows(&all).unwrap(), &m);
    }

    #[test]
    fn silu_monotone_on_nonnegatives(a in 0.0f32..50.0, b in 0.0f32..50.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(tensor::silu(lo) <= tensor::silu(hi));
    }

    #[test]
    fn bf16_round_trip_is_idempotent(bits in any::<u32>()) {
        let x = f32::from_bits(bits);
        let once = bf16_to_f32(f32_to_bf16(x));
        let twice = bf16_to_f32(f32_to_bf16(once));
        if x.is_nan() {
            prop_assert!(once.is_nan() && twice.is_nan());
        } else {
            prop_assert_eq!(once.to_bits(), twice.to_bits());
        }
    }

    #[test]
    fn archive_round_trip(tensors in prop::collection::btree_map("[a-z.]{1,12}", (any_matrix(), any::<bool>()), 0..5)) {
        let mut a = TensorArchive::default();
        for (name, (m, bf)) in &tensors {
            let kind = if *bf { DataKind::BF16 } else { DataKind::F32 };
            a.insert(name.clone(), TensorEntry::from_f32(kind, vec![m.rows(), m.cols()], m.data()).unwrap()).unwrap();
        }
        let back = TensorArchive::from_bytes(&a.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn scores_are_permutation_equivariant(l in any_layer(), seed in any::<u64>()) {
        let d_ff = l.d_ff();
        let mut perm: Vec<usize> = (0..d_ff).collect();
        let mut s = seed;
        for i in (1..d_ff).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let permuted = GluLayer::new(
            permute_rows(&l.w_gate, &perm),
            permute_rows(&l.w_up, &perm),
            permute_cols(&l.w_down, &perm),
        ).unwrap();
        for c in Criterion::ALL {
            let a = importance::score_layer(&l, 0, c);
            let b = importance::score_layer(&permuted, 0, c);
            for (j, &p) in perm.iter().enumerate() {
                prop_assert_eq!(b.scores[j], a.scores[p]);
            }
        }
    }

    #[test]
    fn maw_scales_with_weights(l in any_layer(), k in -3i32..4, c in 0.1f32..10.0) {
        let scaled = |f: f32| GluLayer::new(
            l.w_gate.map(|v| v * f), l.w_up.map(|v| v * f), l.w_down.clone(),
        ).unwrap();
        let base = importance::maw_scores(&l, 0);
        // Power-of-two scaling is exact, so the selected set cannot move.
        let two = 2f32.powi(k);
        let exact = importance::maw_scores(&scaled(two), 0);
        for (a, b) in base.scores.iter().zip(&exact.scores) {
            prop_assert_eq!(*b, a * two as f64);
        }
        let kk = l.d_ff() / 2;
        prop_assert_eq!(
            importance::select_prune_set(&base, kk).unwrap(),
            importance::select_prune_set(&exact, kk).unwrap()
        );
        let general = importance::maw_scores(&scaled(c), 0);
        for (a, b) in base.scores.iter().zip(&general.scores) {
            prop_assert!((b - a * c as f64).abs() <= 1e-6 * a * c as f64);
        }
    }

    #[test]
    fn zero_neurons_are_pruned_first_by_pon(l in any_layer(), zero_mask in any::<u16>()) {
        let mut l = l;
        let zeros: Vec<usize> = (0..l.d_ff()).filter(|i| zero_mask >> i & 1 == 1).collect();
        for &n in &zeros {
            l.w_gate.row_mut(n).fill(0.0);
        }
        let v = importance::pon_scores(&l, 0);
        prop_assert_eq!(importance::select_prune_set(&v, zeros.len()).unwrap(), zeros);
    }

    #[test]
    fn selection_is_sorted_unique_and_minimal(scores in prop::collection::vec(0u8..6, 1..40), k_frac in 0.0f64..=1.0) {
        let v = ImportanceVector {
            criterion: Criterion::Vow,
            layer_index: 0,
            scores: scores.iter().map(|&s| s as f64).collect(),
        };
        let k = (k_frac * scores.len() as f64) as usize;
        let sel = importance::select_prune_set(&v, k).unwrap();
        prop_assert_eq!(sel.len(), k);
        prop_assert!(sel.windows(2).all(|w| w[0] < w[1]));
        let worst_kept = (0..scores.len()).filter(|i| !sel.contains(i)).map(|i| scores[i]).min();
        let best_removed = sel.iter().map(|&i| scores[i]).max();
        if let (Some(kept), Some(removed)) = (worst_kept, best_removed) {
            prop_assert!(removed <= kept);
        }
    }

    #[test]
    fn retained_dim_bounds(d_ff in 1usize..20000, p in 0.0f64..0.99) {
        let r = pruner::retained_dim(d_ff, p).unwrap();
        prop_assert!(r >= 1 && r <= d_ff);
        prop_assert!(r as f64 >= d_ff as f64 * (1.0 - p) - 1e-6);
    }

    #[test]
    fn pruning_composes(l in layer(4, 12), a in prop::collection::btree_set(0usize..12, 0..5), b_mask in any::<u16>()) {
        let a: Vec<usize> = a.into_iter().collect();
        let after_a = pruner::prune_layer(&l, &a).unwrap();
        let survivors: Vec<usize> = (0..12).filter(|i| !a.contains(i)).collect();
        // B is expressed in the pruned layer's indexing.
        let b: Vec<usize> = (0..survivors.len()).filter(|i| b_mask >> i & 1 == 1).take(survivors.len() - 1).collect();
        let twice = pruner::prune_layer(&after_a, &b).unwrap();
        let mut union: Vec<usize> = a.clone();
        union.extend(b.iter().map(|&i| survivors[i]));
        union.sort();
        let once = pruner::prune_layer(&l, &union).unwrap();
        prop_assert_eq!(twice, once);
    }

    #[test]
    fn paired_removal_preserves_shapes(l in any_layer(), mask in any::<u16>()) {
        let removed: Vec<usize> = (0..l.d_ff()).filter(|i| mask >> i & 1 == 1).take(l.d_ff() - 1).collect();
        let p = pruner::prune_layer(&l, &removed).unwrap();
        let r = l.d_ff() - removed.len();
        prop_assert_eq!(p.w_gate.shape(), (r, l.d_model()));
        prop_assert_eq!(p.w_up.shape(), (r, l.d_model()));
        prop_assert_eq!(p.w_down.shape(), (l.d_model(), r));
        p.validate().unwrap();
    }

    #[test]
    fn zero_gate_pruning_is_exact(l in layer(5, 10), x in matrix(3, 5), mask in any::<u16>()) {
        let mut l = l;
        let removed: Vec<usize> = (0..10).filter(|i| mask >> i & 1 == 1).take(9).collect();
        for &n in &removed {
            l.w_gate.row_mut(n).fill(0.0);
        }
        let p = pruner::prune_layer(&l, &removed).unwrap();
        prop_assert_eq!(glu_forward(&x, &l).unwrap(), glu_forward(&x, &p).unwrap());
    }

    #[test]
    fn pearson_symmetric_and_affine_invariant(
        xy in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..30),
        a in 0.1f64..10.0, b in -50.0f64..50.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        let Ok(r) = stats::pearson_r(&x, &y) else { return Ok(()) };
        prop_assert_eq!(r, stats::pearson_r(&y, &x).unwrap());
        let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        prop_assert!((stats::pearson_r(&ax, &y).unwrap() - r).abs() <= 1e-12);
        prop_assert!((-1.0..=1.0).contains(&r));
    }

    #[test]
    fn pvalue_decreases_with_strength(r1 in 0.0f64..0.999, r2 in 0.0f64..0.999, n in 3usize..100) {
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let p_lo = stats::t_pvalue(lo, n).unwrap();
        let p_hi = stats::t_pvalue(hi, n).unwrap();
        prop_assert!(p_hi <= p_lo + 1e-12);
        prop_assert_eq!(stats::t_pvalue(-hi, n).unwrap(), p_hi);
        prop_assert!((0.0..=1.0).contains(&p_hi));
    }

    #[test]
    fn baseline_normalizes_to_hundred(vals in prop::collection::vec(0.01f64..100.0, 1..8), lower in any::<bool>()) {
        let s = Series {
            benchmark: "x".into(),
            direction: if lower { Direction::Lower } else { Direction::Higher },
            points: vals.iter().enumerate().map(|(i, &v)| (4.0 - i as f64 * 0.4, v)).collect(),
        };
        let n = analytics::normalize_to_baseline(&s).unwrap();
        prop_assert_eq!(n[0].1, 100.0);
        for ((_, pct), &v) in n.iter().zip(&vals) {
            let better = if lower { v <= vals[0] } else { v >= vals[0] };
            prop_assert_eq!(*pct >= 100.0, better);
        }
    }

    #[test]
    fn joules_monotone_in_duration(w in 1.0f64..500.0, s1 in 0.0f64..10.0, s2 in 0.0f64..10.0, tokens in 1usize..1000) {
        let mut p = ConstantPower::new(w).unwrap();
        let j1 = { p.begin(); p.end(s1) };
        let j2 = { p.begin(); p.end(s2) };
        let (a, b) = (profiler::joules_per_token(j1, tokens).unwrap(), profiler::joules_per_token(j2, tokens).unwrap());
        prop_assert_eq!(s1 <= s2, a <= b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn perplexity_bounded_and_order_free(seed in any::<u64>(), docs in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..12), 1..4)) {
        let model = init_toy_model(seed, &small_config()).unwrap();
        let c = Corpus::new("p", docs.clone()).unwrap();
        let r = eval::perplexity(&model, &c).unwrap();
        prop_assert!(r.perplexity >= 1.0);
        prop_assert!(r.perplexity.is_finite());
        let rev = Corpus::new("p", docs.into_iter().rev().collect()).unwrap();
        let r2 = eval::perplexity(&model, &rev).unwrap();
        prop_assert!((r.perplexity - r2.perplexity).abs() <= 1e-12 * r.perplexity);
        prop_assert_eq!(r.token_count, r2.token_count);
    }

    #[test]
    fn batching_never_changes_generated_ids(seed in any::<u64>(), count in 1usize..6, batch in 1usize..6) {
        let model = init_toy_model(seed, &small_config()).unwrap();
        let prompts = profiler::synthetic_prompts(seed, count, 4);
        let one = model.generate_greedy(&prompts, 3).unwrap();
        let mut batched = Vec::new();
        for chunk in prompts.chunks(batch) {
            batched.extend(model.generate_greedy(chunk, 3).unwrap());
        }
        prop_assert_eq!(one, batched);
    }
}
