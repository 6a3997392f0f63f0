use crate::ctc::Vocab;
use crate::error::{Error, Result};

/// Encoder and exit-branch hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub feature_dim: usize,
    pub vocab: Vocab,
    /// 1-based backbone layers that carry an exit branch.
    pub branch_layers: Vec<usize>,
    /// Attention width inside each branch.
    pub d_ee: usize,
    pub branch_heads: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Small configuration that trains in minutes on one CPU core.
    pub fn desk() -> Self {
        Self {
            num_layers: 8,
            d_model: 64,
            num_heads: 4,
            ffn_dim: 128,
            feature_dim: 16,
            vocab: Vocab::new("abcdefgh|").expect("static vocabulary"),
            branch_layers: vec![2, 4, 6],
            d_ee: 64,
            branch_heads: 4,
            seed: 1,
        }
    }

    /// The large reference layout: 24 layers of width 1024 with four exit
    /// branches at layers 5, 10, 15 and 20, each of attention width 512 with
    /// four heads, over a character vocabulary.
    pub fn full_scale() -> Self {
        Self {
            num_layers: 24,
            d_model: 1024,
            num_heads: 16,
            ffn_dim: 4096,
            feature_dim: 512,
            vocab: Vocab::new("abcdefghijklmnopqrstuvwxyz'|").expect("static vocabulary"),
            branch_layers: vec![5, 10, 15, 20],
            d_ee: 512,
            branch_heads: 4,
            seed: 1,
        }
    }

    /// Width of the feed-forward sublayer inside a branch.
    pub fn branch_ffn_dim(&self) -> usize {
        2 * self.d_ee
    }

    pub fn classes(&self) -> usize {
        self.vocab.classes()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_layers < 1 {
            return fail("num_layers must be at least 1".into());
        }
        for (name, v) in [
            ("d_model", self.d_model),
            ("num_heads", self.num_heads),
            ("ffn_dim", self.ffn_dim),
            ("feature_dim", self.feature_dim),
            ("d_ee", self.d_ee),
            ("branch_heads", self.branch_heads),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if !self.d_model.is_multiple_of(self.num_heads) {
            return fail(format!(
                "d_model {} is not divisible by num_heads {}",
                self.d_model, self.num_heads
            ));
        }
        if !self.d_ee.is_multiple_of(self.branch_heads) {
            return fail(format!(
                "d_ee {} is not divisible by branch_heads {}",
                self.d_ee, self.branch_heads
            ));
        }
        if self.branch_layers.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!("branch_layers {:?} must be strictly increasing", self.branch_layers));
        }
        if let Some(&bad) = self
            .branch_layers
            .iter()
            .find(|&&l| l < 1 || l >= self.num_layers)
        {
            return fail(format!(
                "branch layer {bad} outside [1, {}]",
                self.num_layers - 1
            ));
        }
        Ok(())
    }

    /// Closed-form scalar parameter count.
    pub fn parameter_count(&self) -> usize {
        let d = self.d_model;
        let c = self.classes();
        let linear = |i: usize, o: usize| i * o + o;
        let block = |w: usize, h: usize| 4 * w + 4 * linear(w, w) + linear(w, h) + linear(h, w);
        let frontend = linear(self.feature_dim, d);
        let layers = self.num_layers * block(d, self.ffn_dim);
        let head = linear(d, c);
        let e = self.d_ee;
        let branch = linear(d, e) + block(e, self.branch_ffn_dim()) + linear(e, d) + linear(d, c);
        frontend + layers + head + self.branch_layers.len() * branch
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        ModelConfig::desk().validate().unwrap();
        let p = ModelConfig::full_scale();
        p.validate().unwrap();
        assert_eq!(p.num_layers, 24);
        assert_eq!(p.branch_layers, vec![5, 10, 15, 20]);
        assert_eq!((p.d_ee, p.branch_heads), (512, 4));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = ModelConfig::desk();
        c.branch_layers = vec![4, 2];
        assert!(c.validate().is_err());
        c.branch_layers = vec![2, 8];
        assert!(c.validate().is_err());
        c.branch_layers = vec![0];
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk();
        c.num_heads = 3;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk();
        c.d_ee = 30;
        assert!(c.validate().is_err());
    }
}
