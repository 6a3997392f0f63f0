use earlyexit::ctc::{collapse, ctc_brute_force, ctc_loss, edit_distance, greedy_decode, ProbMatrix, Vocab, BLANK};
use earlyexit::exit::{confidence_score, entropy_score, should_exit, ExitCriterion};
use earlyexit::numerics::kernels::{layer_norm, log_softmax_rows, matmul, softmax_rows};
use earlyexit::Tensor;
use proptest::prelude::*;

fn tensor(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-4.0f64..4.0, rows * cols).prop_map(move |d| Tensor::new(&[rows, cols], d).unwrap())
}

fn probs(max_t: usize, max_c: usize) -> impl Strategy<Value = ProbMatrix> {
    (1..=max_t, 2..=max_c)
        .prop_flat_map(|(t, c)| tensor(t, c))
        .prop_map(|logits| ProbMatrix::new(softmax_rows(&logits)).unwrap())
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one_and_ignore_shifts(x in (1usize..6, 1usize..7).prop_flat_map(|(r, c)| tensor(r, c)), shift in -50.0f64..50.0) {
        let p = softmax_rows(&x);
        let q = softmax_rows(&x.map(|v| v + shift));
        for r in 0..p.rows() {
            prop_assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.row(r).iter().all(|&v| v > 0.0));
        }
        prop_assert!(p.max_abs_diff(&q) < 1e-12);
        let lp = log_softmax_rows(&x);
        prop_assert!(lp.max_abs_diff(&p.map(f64::ln)) < 1e-12);
    }

    #[test]
    fn matmul_is_associative(
        (a, b, c) in (1usize..5, 1usize..5, 1usize..5, 1usize..5)
            .prop_flat_map(|(m, k, n, p)| (tensor(m, k), tensor(k, n), tensor(n, p)))
    ) {
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) < 1e-9);
    }

    #[test]
    fn layer_norm_rows_are_standardized(x in (1usize..4, 2usize..9).prop_flat_map(|(r, c)| tensor(r, c))) {
        let c = x.cols();
        let y = layer_norm(&x, &Tensor::full(&[c], 1.0), &Tensor::zeros(&[c]), 1e-5).unwrap();
        for r in 0..y.rows() {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
            let out = y.row(r);
            prop_assert!(out.iter().sum::<f64>().abs() < 1e-9);
            let ss = out.iter().map(|v| v * v).sum::<f64>() / c as f64;
            prop_assert!((ss - var / (var + 1e-5)).abs() < 1e-9);
        }
    }

    #[test]
    fn ctc_matches_path_enumeration(p in probs(6, 4), raw in prop::collection::vec(1usize..4, 0..=3)) {
        let target: Vec<usize> = raw.into_iter().map(|l| 1 + (l - 1) % (p.classes() - 1)).collect();
        let brute = ctc_brute_force(&p, &target).unwrap();
        match ctc_loss(&p.log(), &target) {
            Ok(out) => {
                prop_assert!(brute > 0.0);
                let rel = ((-out.loss).exp() - brute).abs() / brute;
                prop_assert!(rel < 1e-10, "rel {rel}");
                prop_assert!(out.loss >= 0.0);
            }
            Err(_) => prop_assert_eq!(brute, 0.0),
        }
    }

    #[test]
    fn ctc_gradient_rows_are_posteriors_minus_one(p in probs(5, 4), raw in prop::collection::vec(1usize..4, 1..=2)) {
        // d loss / d log p[t][c] = -(occupancy of c at t); occupancies sum to one per frame
        let target: Vec<usize> = raw.into_iter().map(|l| 1 + (l - 1) % (p.classes() - 1)).collect();
        if let Ok(out) = ctc_loss(&p.log(), &target) {
            for t in 0..p.frames() {
                let s: f64 = out.grad.row(t).iter().sum();
                prop_assert!((s + 1.0).abs() < 1e-9, "row {t} sums to {s}");
                prop_assert!(out.grad.row(t).iter().all(|&g| g <= 1e-12));
            }
        }
    }

    #[test]
    fn decoding_is_stable_under_reexpansion(path in prop::collection::vec(0usize..5, 0..12)) {
        let once = collapse(&path);
        let expanded: Vec<usize> = once.iter().flat_map(|&l| [BLANK, l]).collect();
        prop_assert_eq!(collapse(&expanded), once.clone());
        prop_assert!(!once.contains(&BLANK));
        if !path.is_empty() {
            let p = ProbMatrix::one_hot(&path, 5).unwrap();
            let decoded = greedy_decode(&p);
            prop_assert_eq!(decoded.labels(), &once[..]);
        }
    }

    #[test]
    fn edit_distance_is_a_metric(a in prop::collection::vec(0u8..4, 0..8), b in prop::collection::vec(0u8..4, 0..8), c in prop::collection::vec(0u8..4, 0..8)) {
        prop_assert_eq!(edit_distance(&a, &a), 0);
        prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
        prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
        prop_assert!(edit_distance(&a, &b) <= a.len().max(b.len()));
        prop_assert!(edit_distance(&a, &b) >= a.len().abs_diff(b.len()));
        if a != b {
            prop_assert!(edit_distance(&a, &b) > 0);
        }
    }

    #[test]
    fn scores_stay_within_closed_form_bounds(p in probs(8, 6)) {
        let c = p.classes() as f64;
        let conf = confidence_score(&p);
        let ent = entropy_score(&p);
        prop_assert!(conf >= 1.0 / c - 1e-12 && conf <= 1.0 + 1e-12);
        prop_assert!(ent >= 0.0 && ent <= c.ln() / c + 1e-12);
    }

    #[test]
    fn exit_decisions_are_monotone_in_threshold(score in 0.0f64..1.0, t1 in 0.001f64..1.0, t2 in 0.001f64..1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        // confidence: passing a high bar implies passing a lower one
        if should_exit(score, &ExitCriterion::confidence(hi).unwrap()) {
            prop_assert!(should_exit(score, &ExitCriterion::confidence(lo).unwrap()));
        }
        // entropy: passing a low ceiling implies passing a higher one
        if should_exit(score, &ExitCriterion::entropy(lo).unwrap()) {
            prop_assert!(should_exit(score, &ExitCriterion::entropy(hi).unwrap()));
        }
    }

    #[test]
    fn vocab_round_trips_words(words in prop::collection::vec("[a-h]{1,4}", 1..4)) {
        let v = Vocab::new("abcdefgh|").unwrap();
        let text = words.join(" ");
        prop_assert_eq!(v.decode(&v.encode(&text).unwrap()), text);
    }
}
