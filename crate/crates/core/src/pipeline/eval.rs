use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::run::{list_frames, run_pipeline};
use crate::error::{Error, Result};
use crate::synth::read_truth;

/// Largest bottom-row distance at which a detection matches a true lane.
pub const MATCH_TOLERANCE: f64 = 5.0;

pub const TABLE_HEADER: &str = "Sequence,Lanes,Incorrect detection,Misdetection";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LaneScore {
    /// True lanes.
    pub lanes: usize,
    pub correct: usize,
    pub incorrect: usize,
    pub missed: usize,
}

impl LaneScore {
    pub fn success_rate(&self) -> f64 {
        if self.lanes == 0 {
            return 1.0;
        }
        1.0 - (self.incorrect + self.missed) as f64 / self.lanes as f64
    }
}

impl std::ops::AddAssign for LaneScore {
    fn add_assign(&mut self, o: Self) {
        self.lanes += o.lanes;
        self.correct += o.correct;
        self.incorrect += o.incorrect;
        self.missed += o.missed;
    }
}

/// One-to-one matching of detected to true offsets, closest pairs first.
pub fn score_lanes(detected: &[f64], truth: &[f64], tol: f64) -> LaneScore {
    let mut pairs: Vec<(f64, usize, usize)> = detected
        .iter()
        .enumerate()
        .flat_map(|(i, d)| truth.iter().enumerate().map(move |(j, t)| ((d - t).abs(), i, j)))
        .filter(|p| p.0 <= tol)
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_d = vec![false; detected.len()];
    let mut used_t = vec![false; truth.len()];
    let mut correct = 0;
    for (_, i, j) in pairs {
        if !used_d[i] && !used_t[j] {
            used_d[i] = true;
            used_t[j] = true;
            correct += 1;
        }
    }
    LaneScore {
        lanes: truth.len(),
        correct,
        incorrect: detected.len() - correct,
        missed: truth.len() - correct,
    }
}

/// Detection counts per sequence in the layout of a lane-detection table.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionTable {
    pub rows: BTreeMap<String, LaneScore>,
}

impl DetectionTable {
    pub fn add(&mut self, sequence: &str, score: LaneScore) {
        *self.rows.entry(sequence.to_string()).or_default() += score;
    }

    pub fn total(&self) -> LaneScore {
        let mut t = LaneScore::default();
        for s in self.rows.values() {
            t += *s;
        }
        t
    }

    pub fn success_rate(&self) -> f64 {
        self.total().success_rate()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{TABLE_HEADER}\n");
        for (name, r) in &self.rows {
            s.push_str(&format!("{name},{},{},{}\n", r.lanes, r.incorrect, r.missed));
        }
        let t = self.total();
        s.push_str(&format!("Total,{},{},{}\n", t.lanes, t.incorrect, t.missed));
        s
    }

    /// Parses a table; a `Total` row, if present, must equal the sum of the
    /// other rows. A table holding only a `Total` row is taken as is.
    pub fn from_csv(s: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidParameter(format!("detection table: {m}"));
        let mut lines = s.lines().map(str::trim).filter(|l| !l.is_empty());
        match lines.next() {
            Some(h) if h == TABLE_HEADER => {}
            other => return Err(bad(format!("expected header {TABLE_HEADER:?}, got {other:?}"))),
        }
        let mut table = Self::default();
        let mut total = None;
        for line in lines {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(bad(format!("expected 4 fields in {line:?}")));
            }
            let num = |x: &str| x.parse::<usize>().map_err(|e| bad(format!("{x:?}: {e}")));
            let (lanes, incorrect, missed) = (num(f[1])?, num(f[2])?, num(f[3])?);
            let score = LaneScore {
                lanes,
                correct: lanes.saturating_sub(missed),
                incorrect,
                missed,
            };
            if f[0] == "Total" {
                total = Some(score);
            } else {
                table.add(f[0], score);
            }
        }
        match total {
            Some(t) if table.rows.is_empty() => table.add("Total", t),
            Some(t) => {
                let sum = table.total();
                if (sum.lanes, sum.incorrect, sum.missed) != (t.lanes, t.incorrect, t.missed) {
                    return Err(bad("Total row disagrees with the sequence rows".into()));
                }
            }
            None => {}
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub frame: usize,
    pub detected: Vec<f64>,
    pub truth: Vec<f64>,
    pub score: LaneScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sequence: String,
    pub frames: Vec<FrameScore>,
    pub total: LaneScore,
    pub success_rate: f64,
}

/// Runs the pipeline on `seq_dir` and scores its lanes against the
/// `NNNNNN_truth.json` files of `truth_dir`. With `out_dir` set, also writes
/// `table1.csv` and `eval.json` next to the pipeline artifacts.
pub fn run_eval(
    seq_dir: impl AsRef<Path>,
    truth_dir: impl AsRef<Path>,
    out_dir: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<(EvalReport, DetectionTable)> {
    let (seq_dir, truth_dir) = (seq_dir.as_ref(), truth_dir.as_ref());
    let pairs = list_frames(seq_dir)?;
    let mut truths = Vec::with_capacity(pairs.len());
    for p in &pairs {
        let path = truth_dir.join(format!("{:06}_truth.json", p.index));
        if !path.exists() {
            return Err(Error::TruthMismatch(format!(
                "no truth for frame {:06} in {}",
                p.index,
                truth_dir.display()
            )));
        }
        truths.push(read_truth(&path)?);
    }
    let run = run_pipeline(seq_dir, out_dir, cfg)?;
    let name = seq_dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("sequence")
        .to_string();

    let mut frames = Vec::with_capacity(truths.len());
    let mut total = LaneScore::default();
    for ((pair, truth), report) in pairs.iter().zip(&truths).zip(&run.reports) {
        let left = crate::imagery::load_gray(&pair.left)?;
        if left.dims() != (truth.config.width, truth.config.height) {
            return Err(Error::TruthMismatch(format!(
                "frame {:06} is {:?}, its truth describes {}x{}",
                pair.index,
                left.dims(),
                truth.config.width,
                truth.config.height
            )));
        }
        let truth_offsets: Vec<f64> = truth.lanes.iter().map(|l| l.offset).collect();
        let score = score_lanes(&report.lane_offsets, &truth_offsets, MATCH_TOLERANCE);
        total += score;
        frames.push(FrameScore {
            frame: pair.index,
            detected: report.lane_offsets.clone(),
            truth: truth_offsets,
            score,
        });
    }
    let mut table = DetectionTable::default();
    table.add(&name, total);
    let report = EvalReport {
        sequence: name,
        frames,
        total,
        success_rate: total.success_rate(),
    };
    if let Some(dir) = out_dir {
        std::fs::write(dir.join("table1.csv"), table.to_csv())?;
        std::fs::write(dir.join("eval.json"), serde_json::to_string_pretty(&report)?)?;
    }
    Ok((report, table))
}
