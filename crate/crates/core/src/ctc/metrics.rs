use crate::error::{Error, Result};

/// Levenshtein distance with unit substitution, insertion and deletion costs.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    let n = hypothesis.len();
    let mut prev: Vec<usize> = (0..=n).collect();
    let mut cur = vec![0; n + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r != h);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[n]
}

pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Corpus word error rate: summed word edit distance over summed reference
/// length.
pub fn wer<S: AsRef<str>>(refs: &[S], hyps: &[S]) -> Result<f64> {
    let (edits, total) = wer_counts(refs, hyps)?;
    Ok(edits as f64 / total as f64)
}

/// `(edits, reference words)` for a corpus.
pub fn wer_counts<S: AsRef<str>>(refs: &[S], hyps: &[S]) -> Result<(usize, usize)> {
    if refs.len() != hyps.len() {
        return Err(Error::Contract(format!(
            "{} references but {} hypotheses",
            refs.len(),
            hyps.len()
        )));
    }
    let mut edits = 0;
    let mut total = 0;
    for (r, h) in refs.iter().zip(hyps) {
        let rw = words(r.as_ref());
        edits += edit_distance(&rw, &words(h.as_ref()));
        total += rw.len();
    }
    if total == 0 {
        return Err(Error::Contract("reference corpus has no words".into()));
    }
    Ok((edits, total))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Full (m+1)×(n+1) table, kept separate from the rolling-row version.
    fn table_distance(a: &[char], b: &[char]) -> usize {
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for (j, cell) in d[0].iter_mut().enumerate() {
            *cell = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
                d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
            }
        }
        d[a.len()][b.len()]
    }

    #[test]
    fn distance_examples() {
        assert_eq!(edit_distance(&words("a b c"), &words("a b c")), 0);
        assert_eq!(edit_distance(&words("a b c"), &words("")), 3);
        let k: Vec<char> = "kitten".chars().collect();
        let s: Vec<char> = "sitting".chars().collect();
        assert_eq!(table_distance(&k, &s), 3);
        assert_eq!(edit_distance(&k, &s), 3);
    }

    #[test]
    fn wer_examples() {
        assert_eq!(wer(&["a b", "c"], &["a b", "c"]).unwrap(), 0.0);
        let r = "w0 w1 w2 w3 w4 w5 w6 w7 w8 w9";
        let h = "w0 w1 w2 w3 wx w5 w6 w7 w8 w9";
        assert!((wer(&[r], &[h]).unwrap() - 0.10).abs() < 1e-15);
        assert!(wer::<&str>(&[""], &["a"]).is_err());
        assert!(wer(&["a"], &["a", "b"]).is_err());
    }

    #[test]
    fn corpus_wer_matches_per_utterance_tables() {
        let refs = ["the cat sat", "on the mat", "a b c d", "x"];
        let hyps = ["the cat sat down", "on mat", "a c b d", ""];
        let mut edits = 0;
        let mut total = 0;
        for (r, h) in refs.iter().zip(hyps) {
            let rw: Vec<String> = words(r).iter().map(|s| s.to_string()).collect();
            let hw: Vec<String> = words(h).iter().map(|s| s.to_string()).collect();
            // map each distinct word to a char so the char-table oracle applies
            let mut dict: Vec<String> = Vec::new();
            let mut enc = |ws: &[String]| -> Vec<char> {
                ws.iter()
                    .map(|w| {
                        let i = dict.iter().position(|d| d == w).unwrap_or_else(|| {
                            dict.push(w.clone());
                            dict.len() - 1
                        });
                        char::from(b'A' + i as u8)
                    })
                    .collect()
            };
            let (rc, hc) = (enc(&rw), enc(&hw));
            edits += table_distance(&rc, &hc);
            total += rw.len();
        }
        assert_eq!(edits, 1 + 1 + 2 + 1);
        let got = wer(&refs, &hyps).unwrap();
        assert!((got - edits as f64 / total as f64).abs() < 1e-15);
    }
}
