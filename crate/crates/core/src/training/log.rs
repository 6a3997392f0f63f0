//! Training logs as line-delimited `key=value` records.
//!
//! ```text
//! kind=step stage=ft2 epoch=1 step=1 L_1=41.2 L_2=39.9 L_3=38.0 L_FT2=119.1
//! kind=epoch stage=ft2 epoch=1 L_1=30.5 L_2=28.7 L_3=27.3 L_FT2=86.5 wer_1=0.91 wer_2=0.88 wer_3=0.85 wall=4.2
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so parsing a log
//! reproduces the recorded values bit for bit.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Ft1,
    Ft2,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ft1 => "ft1",
            Stage::Ft2 => "ft2",
        }
    }

    /// Name of the total objective.
    pub fn total_name(self) -> &'static str {
        match self {
            Stage::Ft1 => "L_FT1",
            Stage::Ft2 => "L_FT2",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ft1" => Ok(Stage::Ft1),
            "ft2" => Ok(Stage::Ft2),
            _ => Err(Error::Config(format!("unknown stage {s:?}"))),
        }
    }
}

/// Loss values of one optimizer step, averaged over the batch.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    /// Per-branch `L_i` in branch order; empty for FT1.
    pub parts: Vec<f64>,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Epoch-mean `L_i` per branch; empty for FT1.
    pub parts: Vec<f64>,
    pub total: f64,
    /// Dev WER of the final head (FT1) or of each branch (FT2); empty when no
    /// dev corpus was given.
    pub dev_wer: Vec<f64>,
    /// Seconds.
    pub wall_clock: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainLog {
    pub stage: Stage,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn new(stage: Stage) -> Self {
        Self {
            stage,
            steps: Vec::new(),
            epochs: Vec::new(),
        }
    }

    pub fn final_dev_wer(&self) -> Option<&[f64]> {
        self.epochs.last().map(|e| e.dev_wer.as_slice())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let total = self.stage.total_name();
        let mut epochs = self.epochs.iter().peekable();
        for s in &self.steps {
            // epoch summaries follow that epoch's steps
            while let Some(e) = epochs.next_if(|e| e.epoch < s.epoch) {
                out.push_str(&self.epoch_line(e));
            }
            out.push_str(&format!("kind=step stage={} epoch={} step={}", self.stage, s.epoch, s.step));
            for (i, p) in s.parts.iter().enumerate() {
                out.push_str(&format!(" L_{}={p}", i + 1));
            }
            out.push_str(&format!(" {total}={}\n", s.total));
        }
        for e in epochs {
            out.push_str(&self.epoch_line(e));
        }
        out
    }

    fn epoch_line(&self, e: &EpochRecord) -> String {
        let mut line = format!("kind=epoch stage={} epoch={}", self.stage, e.epoch);
        for (i, p) in e.parts.iter().enumerate() {
            line.push_str(&format!(" L_{}={p}", i + 1));
        }
        line.push_str(&format!(" {}={}", self.stage.total_name(), e.total));
        match self.stage {
            Stage::Ft1 => {
                if let Some(w) = e.dev_wer.first() {
                    line.push_str(&format!(" wer={w}"));
                }
            }
            Stage::Ft2 => {
                for (i, w) in e.dev_wer.iter().enumerate() {
                    line.push_str(&format!(" wer_{}={w}", i + 1));
                }
            }
        }
        line.push_str(&format!(" wall={}\n", e.wall_clock));
        line
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |n: usize, m: String| Error::Config(format!("train log line {n}: {m}"));
        let mut stage = None;
        let mut log = TrainLog::new(Stage::Ft1);
        for (n, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
            if line.trim().is_empty() {
                continue;
            }
            let mut kind = None;
            let mut epoch = None;
            let mut step = None;
            let mut parts = Vec::new();
            let mut total = None;
            let mut wers = Vec::new();
            let mut wall = None;
            for field in line.split_whitespace() {
                let (k, v) = field
                    .split_once('=')
                    .ok_or_else(|| bad(n, format!("field {field:?} is not key=value")))?;
                let num = || v.parse::<f64>().map_err(|_| bad(n, format!("{k}: bad number {v:?}")));
                let int = || v.parse::<usize>().map_err(|_| bad(n, format!("{k}: bad integer {v:?}")));
                match k {
                    "kind" => kind = Some(v.to_string()),
                    "stage" => {
                        let s: Stage = v.parse()?;
                        if stage.is_some_and(|prev| prev != s) {
                            return Err(bad(n, "mixed stages".into()));
                        }
                        stage = Some(s);
                    }
                    "epoch" => epoch = Some(int()?),
                    "step" => step = Some(int()?),
                    "L_FT1" | "L_FT2" => total = Some(num()?),
                    "wer" => wers.push(num()?),
                    "wall" => wall = Some(num()?),
                    _ => {
                        if let Some(i) = k.strip_prefix("L_") {
                            check_index(i, parts.len()).map_err(|m| bad(n, m))?;
                            parts.push(num()?);
                        } else if let Some(i) = k.strip_prefix("wer_") {
                            check_index(i, wers.len()).map_err(|m| bad(n, m))?;
                            wers.push(num()?);
                        } else {
                            return Err(bad(n, format!("unknown field {k:?}")));
                        }
                    }
                }
            }
            let epoch = epoch.ok_or_else(|| bad(n, "missing epoch".into()))?;
            let total = total.ok_or_else(|| bad(n, "missing total loss".into()))?;
            match kind.as_deref() {
                Some("step") => log.steps.push(StepRecord {
                    epoch,
                    step: step.ok_or_else(|| bad(n, "missing step".into()))?,
                    parts,
                    total,
                }),
                Some("epoch") => log.epochs.push(EpochRecord {
                    epoch,
                    parts,
                    total,
                    dev_wer: wers,
                    wall_clock: wall.ok_or_else(|| bad(n, "missing wall".into()))?,
                }),
                other => return Err(bad(n, format!("unknown record kind {other:?}"))),
            }
        }
        log.stage = stage.ok_or_else(|| Error::Config("train log has no records".into()))?;
        Ok(log)
    }
}

fn check_index(text: &str, seen: usize) -> std::result::Result<(), String> {
    match text.parse::<usize>() {
        Ok(i) if i == seen + 1 => Ok(()),
        _ => Err(format!("expected index {} but found {text:?}", seen + 1)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(stage: Stage, parts: usize) -> TrainLog {
        let mut log = TrainLog::new(stage);
        for epoch in 1..=2 {
            for step in 1..=3 {
                let p: Vec<f64> = (0..parts).map(|i| 0.1 * (i + step) as f64 / 3.0).collect();
                log.steps.push(StepRecord {
                    epoch,
                    step,
                    total: p.iter().sum::<f64>() + if parts == 0 { 1.0 / 7.0 } else { 0.0 },
                    parts: p,
                });
            }
            log.epochs.push(EpochRecord {
                epoch,
                parts: vec![1e-17; parts],
                total: std::f64::consts::PI / epoch as f64,
                dev_wer: vec![0.25; parts.max(1)],
                wall_clock: 1.5,
            });
        }
        log
    }

    #[test]
    fn text_round_trips_exactly() {
        for (stage, parts) in [(Stage::Ft1, 0), (Stage::Ft2, 3)] {
            let log = sample(stage, parts);
            let text = log.to_text();
            assert_eq!(TrainLog::parse(&text).unwrap(), log);
            assert_eq!(text.lines().count(), 8);
        }
    }

    #[test]
    fn fixed_field_order() {
        let text = sample(Stage::Ft2, 2).to_text();
        let first = text.lines().next().unwrap();
        let keys: Vec<&str> = first.split(' ').map(|f| f.split('=').next().unwrap()).collect();
        assert_eq!(keys, ["kind", "stage", "epoch", "step", "L_1", "L_2", "L_FT2"]);
        let epoch = text.lines().nth(3).unwrap();
        let keys: Vec<&str> = epoch.split(' ').map(|f| f.split('=').next().unwrap()).collect();
        assert_eq!(keys, ["kind", "stage", "epoch", "L_1", "L_2", "L_FT2", "wer_1", "wer_2", "wall"]);
    }

    #[test]
    fn malformed_lines_are_rejected() {
        for bad in [
            "kind=step stage=ft1 epoch=1 L_FT1=1",
            "kind=epoch stage=ft1 epoch=1 L_FT1=1",
            "kind=step stage=ft3 epoch=1 step=1 L_FT1=1",
            "kind=step stage=ft2 epoch=1 step=1 L_2=1 L_FT2=1",
            "kind=step stage=ft1 epoch=x step=1 L_FT1=1",
            "kind=step stage=ft1 epoch=1 step=1 L_FT1=1 extra",
            "",
        ] {
            assert!(TrainLog::parse(bad).is_err(), "{bad:?}");
        }
    }
}
