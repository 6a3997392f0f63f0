use super::{collapse, ProbMatrix, Transcript};
use crate::numerics::Tensor;

/// Per-frame argmax, ties to the lowest class index.
pub fn argmax_path(scores: &Tensor) -> Vec<usize> {
    (0..scores.rows())
        .map(|t| {
            let row = scores.row(t);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Greedy CTC decoding: argmax path, merge repeats, drop blanks.
pub fn greedy_decode(probs: &ProbMatrix) -> Transcript {
    greedy_decode_scores(probs.tensor())
}

/// Greedy decoding of any per-frame score matrix that is monotone in the
/// posterior (probabilities, log-probabilities or logits).
pub fn greedy_decode_scores(scores: &Tensor) -> Transcript {
    Transcript::new(collapse(&argmax_path(scores))).expect("collapse removes blanks")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decode_path(path: &[usize]) -> Vec<usize> {
        greedy_decode(&ProbMatrix::one_hot(path, 3).unwrap()).labels().to_vec()
    }

    #[test]
    fn collapse_examples() {
        assert_eq!(decode_path(&[1, 1, 0, 2]), vec![1, 2]);
        assert_eq!(decode_path(&[0, 0, 0]), Vec::<usize>::new());
        assert_eq!(decode_path(&[1, 0, 1]), vec![1, 1]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let p = ProbMatrix::from_rows(&[vec![0.25, 0.375, 0.375], vec![0.5, 0.5, 0.0]]).unwrap();
        assert_eq!(argmax_path(p.tensor()), vec![1, 0]);
    }
}
