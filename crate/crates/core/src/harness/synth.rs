//! Synthetic "speech": every character owns a random prototype frame and an
//! utterance is its characters rendered as runs of noisy copies of those
//! prototypes.

use std::path::Path;

use super::corpus::{write_corpus, Corpus, Split, Utterance};
use crate::ctc::WORD_SEPARATOR;
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    /// Characters words are spelled with (the word separator is added on top).
    pub alphabet: String,
    pub lexicon_size: usize,
    pub word_len: (usize, usize),
    pub words_per_utterance: (usize, usize),
    /// Frames per rendered character, inclusive range.
    pub frames_per_char: (usize, usize),
    pub feature_dim: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            alphabet: "abcdefgh".into(),
            lexicon_size: 20,
            word_len: (2, 4),
            words_per_utterance: (1, 3),
            frames_per_char: (3, 6),
            feature_dim: 16,
            noise_std: 0.1,
            seed: 7,
            train_size: 500,
            dev_size: 100,
            test_size: 100,
        }
    }
}

impl SynthSpec {
    /// Symbols of the matching model vocabulary: the alphabet plus the word
    /// separator.
    pub fn vocab_symbols(&self) -> String {
        format!("{}{WORD_SEPARATOR}", self.alphabet)
    }

    pub fn size_of(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_size,
            Split::Dev => self.dev_size,
            Split::Test => self.test_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("synth: {m}")));
        let chars: Vec<char> = self.alphabet.chars().collect();
        if chars.len() < 2 {
            return fail("alphabet needs at least two characters");
        }
        let mut sorted = chars.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != chars.len() || chars.contains(&WORD_SEPARATOR) || chars.iter().any(|c| c.is_whitespace()) {
            return fail("alphabet characters must be distinct, non-space and not the word separator");
        }
        for (name, (lo, hi)) in [
            ("word_len", self.word_len),
            ("words_per_utterance", self.words_per_utterance),
            ("frames_per_char", self.frames_per_char),
        ] {
            if lo == 0 || lo > hi {
                return fail(&format!("{name} range ({lo}, {hi}) is empty or starts at 0"));
            }
        }
        if self.lexicon_size == 0 || self.feature_dim == 0 {
            return fail("lexicon_size and feature_dim must be positive");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return fail("noise_std must be a finite non-negative number");
        }
        // words are spelled without adjacent repeats, so the number of
        // distinct words of each length is n·(n-1)^(len-1)
        let n = chars.len() as f64;
        let capacity: f64 = (self.word_len.0..=self.word_len.1)
            .map(|l| n * (n - 1.0).powi(l as i32 - 1))
            .sum();
        if capacity < self.lexicon_size as f64 {
            return fail("lexicon_size exceeds the number of spellable words");
        }
        Ok(())
    }
}

/// The fixed world a corpus is drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthWorld {
    pub lexicon: Vec<String>,
    /// Prototype frame per vocabulary character, separator included.
    pub prototypes: Vec<(char, Vec<f64>)>,
}

impl SynthWorld {
    pub fn new(spec: &SynthSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = Rng::derive(spec.seed, 0);
        let chars: Vec<char> = spec.alphabet.chars().collect();
        let prototypes = spec
            .vocab_symbols()
            .chars()
            .map(|c| (c, (0..spec.feature_dim).map(|_| rng.normal(0.0, 1.0)).collect()))
            .collect();
        let mut lexicon: Vec<String> = Vec::with_capacity(spec.lexicon_size);
        while lexicon.len() < spec.lexicon_size {
            let len = rng.range_inclusive(spec.word_len.0, spec.word_len.1);
            let mut word = String::new();
            let mut prev = None;
            while word.chars().count() < len {
                let c = chars[rng.below(chars.len())];
                if Some(c) != prev {
                    word.push(c);
                    prev = Some(c);
                }
            }
            if !lexicon.contains(&word) {
                lexicon.push(word);
            }
        }
        Ok(Self { lexicon, prototypes })
    }

    pub fn prototype(&self, c: char) -> Option<&[f64]> {
        self.prototypes.iter().find(|(p, _)| *p == c).map(|(_, v)| v.as_slice())
    }

    /// Smallest Euclidean distance between two prototypes.
    pub fn prototype_spacing(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, (_, a)) in self.prototypes.iter().enumerate() {
            for (_, b) in &self.prototypes[i + 1..] {
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                best = best.min(d);
            }
        }
        best
    }

    /// Nearest-prototype label per frame, repeats merged: the lookup
    /// classifier that is exact on noiseless corpora.
    pub fn lookup_decode(&self, features: &Tensor) -> String {
        let mut out = String::new();
        let mut prev = None;
        for t in 0..features.rows() {
            let frame = features.row(t);
            let (c, _) = self
                .prototypes
                .iter()
                .map(|(c, p)| (*c, p.iter().zip(frame).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()))
                .fold((' ', f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
            if Some(c) != prev {
                out.push(if c == WORD_SEPARATOR { ' ' } else { c });
            }
            prev = Some(c);
        }
        out
    }

    /// Draws `count` utterances for `split`.
    pub fn sample(&self, spec: &SynthSpec, split: Split, count: usize) -> Vec<Utterance> {
        let stream = match split {
            Split::Train => 1,
            Split::Dev => 2,
            Split::Test => 3,
        };
        let mut rng = Rng::derive(spec.seed, stream);
        (0..count)
            .map(|i| {
                let n = rng.range_inclusive(spec.words_per_utterance.0, spec.words_per_utterance.1);
                let words: Vec<&str> = (0..n).map(|_| self.lexicon[rng.below(self.lexicon.len())].as_str()).collect();
                let text = words.join(" ");
                let mut values = Vec::new();
                let mut frames = 0;
                for c in text.chars() {
                    let c = if c == ' ' { WORD_SEPARATOR } else { c };
                    let proto = self.prototype(c).expect("every rendered char has a prototype");
                    let k = rng.range_inclusive(spec.frames_per_char.0, spec.frames_per_char.1);
                    for _ in 0..k {
                        values.extend(proto.iter().map(|&p| p + rng.normal(0.0, spec.noise_std)));
                        frames += 1;
                    }
                }
                Utterance {
                    id: format!("{split}-{i:05}"),
                    features: Tensor::new(&[frames, spec.feature_dim], values).expect("rendered shape"),
                    text,
                }
            })
            .collect()
    }
}

/// Generated corpus: all three splits plus the world that produced them.
#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub world: SynthWorld,
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
}

impl SynthCorpus {
    pub fn split(&self, split: Split) -> &Corpus {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

/// Generates every split under `out_dir/<split>/`.
pub fn gen_corpus(spec: &SynthSpec, out_dir: &Path) -> Result<SynthCorpus> {
    let world = SynthWorld::new(spec)?;
    let mut splits = Split::ALL.iter().map(|&split| {
        let utts = world.sample(spec, split, spec.size_of(split));
        write_corpus(&out_dir.join(split.as_str()), split, utts)
    });
    let (train, dev, test) = (
        splits.next().expect("train")?,
        splits.next().expect("dev")?,
        splits.next().expect("test")?,
    );
    Ok(SynthCorpus { world, train, dev, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctc::wer;

    fn small(seed: u64) -> SynthSpec {
        SynthSpec {
            seed,
            train_size: 20,
            dev_size: 5,
            test_size: 5,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn lexicon_has_distinct_words_without_adjacent_repeats() {
        let w = SynthWorld::new(&SynthSpec::default()).unwrap();
        assert_eq!(w.lexicon.len(), 20);
        let mut sorted = w.lexicon.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 20);
        for word in &w.lexicon {
            let chars: Vec<char> = word.chars().collect();
            assert!((2..=4).contains(&chars.len()));
            assert!(chars.windows(2).all(|p| p[0] != p[1]), "{word}");
        }
        assert_eq!(w.prototypes.len(), 9);
    }

    #[test]
    fn frames_follow_the_rendering_rule() {
        let spec = SynthSpec {
            noise_std: 0.0,
            frames_per_char: (4, 4),
            ..small(3)
        };
        let w = SynthWorld::new(&spec).unwrap();
        for u in w.sample(&spec, Split::Train, 10) {
            assert_eq!(u.features.rows(), 4 * u.text.chars().count());
            let first = u.text.chars().next().unwrap();
            assert_eq!(u.features.row(0), w.prototype(first).unwrap());
        }
    }

    #[test]
    fn noiseless_corpus_is_separable_by_table_lookup() {
        let spec = SynthSpec {
            noise_std: 0.0,
            frames_per_char: (3, 3),
            ..small(5)
        };
        let w = SynthWorld::new(&spec).unwrap();
        let utts = w.sample(&spec, Split::Test, 50);
        let refs: Vec<&str> = utts.iter().map(|u| u.text.as_str()).collect();
        let hyps: Vec<String> = utts.iter().map(|u| w.lookup_decode(&u.features)).collect();
        assert_eq!(wer(&refs, &hyps.iter().map(String::as_str).collect::<Vec<_>>()).unwrap(), 0.0);
    }

    #[test]
    fn same_seed_gives_byte_identical_files() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        gen_corpus(&small(9), a.path()).unwrap();
        gen_corpus(&small(9), b.path()).unwrap();
        for split in Split::ALL {
            let rel = |d: &Path| d.join(split.as_str()).join("manifest.tsv");
            assert_eq!(std::fs::read(rel(a.path())).unwrap(), std::fs::read(rel(b.path())).unwrap());
            let id = format!("{split}-00000.f64");
            let f = |d: &Path| std::fs::read(d.join(split.as_str()).join("feats").join(&id)).unwrap();
            assert_eq!(f(a.path()), f(b.path()));
        }
    }

    #[test]
    fn splits_and_seeds_differ() {
        let w = SynthWorld::new(&small(1)).unwrap();
        let tr = w.sample(&small(1), Split::Train, 3);
        let te = w.sample(&small(1), Split::Test, 3);
        assert_ne!(tr[0].features, te[0].features);
        assert_ne!(SynthWorld::new(&small(2)).unwrap(), w);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let base = SynthSpec::default();
        let bad = [
            SynthSpec { noise_std: -0.1, ..base.clone() },
            SynthSpec { noise_std: f64::NAN, ..base.clone() },
            SynthSpec { frames_per_char: (4, 3), ..base.clone() },
            SynthSpec { words_per_utterance: (0, 2), ..base.clone() },
            SynthSpec { alphabet: "ab|".into(), ..base.clone() },
            SynthSpec { alphabet: "aab".into(), ..base.clone() },
            SynthSpec { alphabet: "ab".into(), word_len: (2, 2), lexicon_size: 3, ..base.clone() },
        ];
        for s in bad {
            assert!(matches!(s.validate(), Err(Error::Config(_))), "{s:?}");
        }
        // "ab" spells exactly two words of length 2
        SynthSpec { alphabet: "ab".into(), word_len: (2, 2), lexicon_size: 2, ..base }.validate().unwrap();
    }

    #[test]
    fn spacing_matches_pairwise_minimum() {
        let w = SynthWorld {
            lexicon: vec![],
            prototypes: vec![('a', vec![0.0, 0.0]), ('b', vec![3.0, 4.0]), ('|', vec![0.0, 1.5])],
        };
        assert_eq!(w.prototype_spacing(), 1.5);
    }
}
