use super::*;
use crate::ctc::Vocab;
use crate::numerics::kernels::{self, layer_norm, matmul};
use crate::numerics::nn::LAYER_NORM_EPS;

fn tiny_config(seed: u64) -> ModelConfig {
    ModelConfig {
        num_layers: 3,
        d_model: 8,
        num_heads: 2,
        ffn_dim: 12,
        feature_dim: 5,
        vocab: Vocab::new("ab|").unwrap(),
        branch_layers: vec![1, 2],
        d_ee: 4,
        branch_heads: 2,
        seed,
    }
}

fn features(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    Tensor::new(&[rows, cols], (0..rows * cols).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap()
}

#[test]
fn parameter_count_matches_allocation() {
    let mut rng = Rng::new(99);
    for seed in 0..5 {
        let heads = 1 + rng.below(3);
        let branch_heads = 1 + rng.below(3);
        let num_layers = 2 + rng.below(4);
        let mut layers: Vec<usize> = (1..num_layers).filter(|_| rng.below(2) == 0).collect();
        layers.dedup();
        let cfg = ModelConfig {
            num_layers,
            d_model: heads * (1 + rng.below(4)),
            num_heads: heads,
            ffn_dim: 1 + rng.below(10),
            feature_dim: 1 + rng.below(6),
            vocab: Vocab::new("xyz|").unwrap(),
            branch_layers: layers,
            d_ee: branch_heads * (1 + rng.below(3)),
            branch_heads,
            seed,
        };
        let m = build_model(&cfg).unwrap();
        assert_eq!(m.params().scalar_count(), cfg.parameter_count(), "{cfg:?}");
        assert_eq!(m.branches().len(), cfg.branch_layers.len());
    }
}

#[test]
fn desk_preset_size() {
    let cfg = ModelConfig::desk();
    let m = build_model(&cfg).unwrap();
    assert_eq!(m.params().scalar_count(), cfg.parameter_count());
    assert_eq!(m.branches().iter().map(|b| b.attach_layer).collect::<Vec<_>>(), vec![2, 4, 6]);
}

#[test]
fn same_seed_same_parameters() {
    let a = build_model(&tiny_config(3)).unwrap();
    let b = build_model(&tiny_config(3)).unwrap();
    let c = build_model(&tiny_config(4)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.checksum(), b.checksum());
    assert_ne!(a.checksum(), c.checksum());
}

#[test]
fn invalid_config_is_rejected() {
    let mut cfg = tiny_config(1);
    cfg.branch_layers = vec![3];
    assert!(matches!(build_model(&cfg), Err(Error::Config(_))));
}

#[test]
fn encoder_prefix_is_bit_identical() {
    let m = build_model(&tiny_config(5)).unwrap();
    let x = features(7, 5, 1);
    let full = encoder_forward(&m, &x, None).unwrap();
    let part = encoder_forward(&m, &x, Some(1)).unwrap();
    assert_eq!(full.states.len(), 3);
    assert_eq!(part.states.len(), 1);
    assert_eq!(part.states[0], full.states[0]);
    assert!(part.macs < full.macs);
    let again = encoder_forward(&m, &x, None).unwrap();
    assert_eq!(again.states, full.states);
}

#[test]
fn encoder_rejects_bad_inputs() {
    let m = build_model(&tiny_config(5)).unwrap();
    let x = features(4, 5, 1);
    assert!(matches!(encoder_forward(&m, &x, Some(0)), Err(Error::Contract(_))));
    assert!(matches!(encoder_forward(&m, &x, Some(4)), Err(Error::Contract(_))));
    assert!(encoder_forward(&m, &features(4, 6, 1), None).is_err());
}

#[test]
fn zero_head_gives_uniform_rows() {
    let mut m = build_model(&tiny_config(2)).unwrap();
    let head = m.head().clone();
    m.params_mut().get_mut(head.weight).data_mut().fill(0.0);
    m.params_mut().get_mut(head.bias).data_mut().fill(0.0);
    let p = head_forward(&m, &features(3, 8, 4)).unwrap();
    for t in 0..3 {
        for &v in p.row(t) {
            assert_eq!(v, 0.25);
        }
    }
}

#[test]
fn head_rows_sum_to_one() {
    let m = build_model(&tiny_config(2)).unwrap();
    let p = head_forward(&m, &features(6, 8, 5)).unwrap();
    for t in 0..6 {
        assert!((p.row(t).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn head_hand_evaluation() {
    // C = 3 (blank, a, b), d_model = 2
    let cfg = ModelConfig {
        num_layers: 2,
        d_model: 2,
        num_heads: 1,
        ffn_dim: 2,
        feature_dim: 2,
        vocab: Vocab::new("ab").unwrap(),
        branch_layers: vec![1],
        d_ee: 2,
        branch_heads: 1,
        seed: 0,
    };
    let mut m = build_model(&cfg).unwrap();
    let head = m.head().clone();
    m.params_mut()
        .get_mut(head.weight)
        .data_mut()
        .copy_from_slice(&[1.0, 0.0, -1.0, 0.0, 2.0, 1.0]);
    m.params_mut().get_mut(head.bias).data_mut().copy_from_slice(&[0.5, 0.0, 0.0]);
    let hidden = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let p = head_forward(&m, &hidden).unwrap();
    // frame 0 logits: [1.5, 0, -1]; frame 1 logits: [0.5, 2, 1]
    let soft = |z: [f64; 3]| {
        let s: f64 = z.iter().map(|v| v.exp()).sum();
        z.map(|v| v.exp() / s)
    };
    let want = [soft([1.5, 0.0, -1.0]), soft([0.5, 2.0, 1.0])];
    for (t, row) in want.iter().enumerate() {
        for (got, w) in p.row(t).iter().zip(row) {
            assert!((got - w).abs() < 1e-15);
        }
    }
}

#[test]
fn branch_outputs_are_valid_and_pure() {
    let m = build_model(&tiny_config(8)).unwrap();
    let h = features(5, 8, 9);
    for i in 0..2 {
        let p = branch_forward(&m, i, &h).unwrap();
        assert_eq!(p.frames(), 5);
        assert_eq!(branch_forward(&m, i, &h).unwrap(), p);
    }
    assert!(matches!(branch_forward(&m, 2, &h), Err(Error::Contract(_))));
}

#[test]
fn identical_branch_parameters_give_identical_outputs() {
    let mut m = build_model(&tiny_config(8)).unwrap();
    let ids: Vec<ParamId> = m.params().ids().collect();
    let first: Vec<ParamId> = ids
        .iter()
        .copied()
        .filter(|&id| m.params().entry(id).group == ParamGroup::Branch(0))
        .collect();
    let second: Vec<ParamId> = ids
        .iter()
        .copied()
        .filter(|&id| m.params().entry(id).group == ParamGroup::Branch(1))
        .collect();
    for (a, b) in first.iter().zip(&second) {
        let t = m.params().get(*a).clone();
        *m.params_mut().get_mut(*b) = t;
    }
    let h = features(4, 8, 2);
    assert_eq!(branch_forward(&m, 0, &h).unwrap(), branch_forward(&m, 1, &h).unwrap());
}

#[test]
fn single_frame_branch_skips_attention_mixing() {
    let m = build_model(&tiny_config(12)).unwrap();
    let h = features(1, 8, 3);
    let got = branch_forward(&m, 0, &h).unwrap();

    // Same weights, attention replaced by its T = 1 limit: output = projected value.
    let b = &m.branches()[0];
    let s = m.params();
    let lin = |x: &Tensor, l: &Linear<ParamId>| kernels::add_row(&matmul(x, s.get(l.weight)).unwrap(), s.get(l.bias)).unwrap();
    let ln = |x: &Tensor, n: &Norm<ParamId>| layer_norm(x, s.get(n.gain), s.get(n.bias), LAYER_NORM_EPS).unwrap();
    let a = lin(&h, &b.adapter_in);
    let v = lin(&ln(&a, &b.block.norm1), &b.block.attn.value);
    let a = kernels::add(&a, &lin(&v, &b.block.attn.output)).unwrap();
    let up = lin(&ln(&a, &b.block.norm2), &b.block.ffn.up).map(kernels::gelu);
    let a = kernels::add(&a, &lin(&up, &b.block.ffn.down)).unwrap();
    let logits = lin(&lin(&a, &b.adapter_out), &b.proj);
    let want = kernels::softmax_rows(&logits);
    assert!(got.tensor().max_abs_diff(&want) < 1e-14);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let m = build_model(&tiny_config(21)).unwrap();
    save_checkpoint(&m, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, m);
    let expected = load_checkpoint_expecting(&path, &tiny_config(21)).unwrap();
    assert_eq!(expected.checksum(), m.checksum());
}

#[test]
fn truncated_or_flipped_checkpoint_is_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&build_model(&tiny_config(1)).unwrap(), &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    std::fs::write(&path, &bytes[..bytes.len() - 20]).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::CorruptCheckpoint { .. })));

    let mut flipped = bytes.clone();
    let n = flipped.len();
    flipped[n - 30] ^= 0x01;
    std::fs::write(&path, &flipped).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::CorruptCheckpoint { .. })));

    let text = String::from_utf8_lossy(&bytes).replacen("earlyexit-checkpoint v1", "earlyexit-checkpoint v9", 1);
    std::fs::write(&path, text.as_bytes()).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::CorruptCheckpoint { .. })));
}

#[test]
fn full_scale_checkpoint_under_desk_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("full.ckpt");
    // Header only: a full-scale body would be gigabytes.
    let mut bytes = checkpoint::header(&ModelConfig::full_scale()).into_bytes();
    bytes.extend_from_slice(b"end-header\n");
    bytes.extend_from_slice(&[0u8; 64]);
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(
        load_checkpoint_expecting(&path, &ModelConfig::desk()),
        Err(Error::CheckpointMismatch { .. })
    ));
}

#[test]
fn desk_checkpoint_under_other_seed_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&build_model(&tiny_config(1)).unwrap(), &path).unwrap();
    assert!(matches!(
        load_checkpoint_expecting(&path, &tiny_config(2)),
        Err(Error::CheckpointMismatch { .. })
    ));
}
