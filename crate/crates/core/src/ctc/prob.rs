use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Tolerance on row sums.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// `T × C` matrix of per-frame posteriors.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMatrix {
    probs: Tensor,
}

impl ProbMatrix {
    pub fn new(probs: Tensor) -> Result<Self> {
        if probs.shape().len() != 2 || probs.numel() == 0 {
            return Err(Error::dim("prob_matrix", format!("{:?}", probs.shape())));
        }
        for t in 0..probs.rows() {
            let row = probs.row(t);
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Contract(format!("frame {t} has an entry outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Contract(format!("frame {t} sums to {s}")));
            }
        }
        Ok(Self { probs })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Tensor::from_rows(rows)?)
    }

    /// `frames` identical rows, uniform over `classes`.
    pub fn uniform(frames: usize, classes: usize) -> Self {
        assert!(frames > 0 && classes > 0, "uniform: empty {frames}x{classes} matrix");
        Self {
            probs: Tensor::full(&[frames, classes], 1.0 / classes as f64),
        }
    }

    /// One-hot rows selecting `path[t]` at frame `t`.
    pub fn one_hot(path: &[usize], classes: usize) -> Result<Self> {
        let mut t = Tensor::zeros(&[path.len(), classes]);
        for (i, &c) in path.iter().enumerate() {
            if c >= classes {
                return Err(Error::dim("one_hot", format!("class {c} of {classes}")));
            }
            t.row_mut(i)[c] = 1.0;
        }
        Self::new(t)
    }

    pub fn frames(&self) -> usize {
        self.probs.rows()
    }

    pub fn classes(&self) -> usize {
        self.probs.cols()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.probs.row(t)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.probs
    }

    /// Elementwise natural log, the input format of [`super::ctc_loss`].
    pub fn log(&self) -> Tensor {
        self.probs.map(f64::ln)
    }
}
