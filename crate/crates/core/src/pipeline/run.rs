use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::PipelineConfig;
use super::frame::{bootstrap_seed, process_frame, FrameOutput, Seed, SeedSource};
use super::report::{FrameReport, SequenceMetrics};
use crate::error::{Error, Result};
use crate::imagery::{load_gray, GrayImage};

/// Paths of one stereo pair in a sequence directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePair {
    pub index: usize,
    pub left: PathBuf,
    pub right: PathBuf,
}

fn frame_index(name: &str, suffix: &str) -> Option<usize> {
    let digits = name.strip_suffix(suffix)?;
    (digits.len() == 6 && digits.bytes().all(|b| b.is_ascii_digit())).then(|| digits.parse().ok())?
}

/// Lists the `NNNNNN_left.png` / `NNNNNN_right.png` pairs of a directory.
/// Indices must run from 0 without gaps and every frame needs both views.
pub fn list_frames(dir: impl AsRef<Path>) -> Result<Vec<FramePair>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::FileNotFound(dir.to_path_buf()));
    }
    let mut found: BTreeMap<usize, (Option<PathBuf>, Option<PathBuf>)> = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(i) = frame_index(name, "_left.png") {
            found.entry(i).or_default().0 = Some(path);
        } else if let Some(i) = frame_index(name, "_right.png") {
            found.entry(i).or_default().1 = Some(path);
        }
    }
    if found.is_empty() {
        return Err(Error::MissingFrame(format!(
            "no NNNNNN_left.png frames in {}",
            dir.display()
        )));
    }
    let mut pairs = Vec::with_capacity(found.len());
    for (expected, (index, (left, right))) in found.into_iter().enumerate() {
        if index != expected {
            return Err(Error::MissingFrame(format!("frame {expected:06} is missing")));
        }
        match (left, right) {
            (Some(left), Some(right)) => pairs.push(FramePair { index, left, right }),
            (None, _) => return Err(Error::MissingFrame(format!("{index:06}_left.png is missing"))),
            (_, None) => return Err(Error::MissingFrame(format!("{index:06}_right.png is missing"))),
        }
    }
    Ok(pairs)
}

/// Loads both views and checks that they agree in size.
pub fn load_pair(pair: &FramePair) -> Result<(GrayImage, GrayImage)> {
    let left = load_gray(&pair.left)?;
    let right = load_gray(&pair.right)?;
    if left.dims() != right.dims() {
        return Err(Error::PairMismatch(format!(
            "frame {:06}: left is {:?}, right is {:?}",
            pair.index,
            left.dims(),
            right.dims()
        )));
    }
    Ok((left, right))
}

/// The temporal loop: frame 0 is seeded from sparse features, every later
/// frame from the profile fitted on the frame before it.
pub struct SequenceRunner {
    cfg: PipelineConfig,
    frame: usize,
    dims: Option<(usize, usize)>,
    carry: Option<Seed>,
}

impl SequenceRunner {
    pub fn new(cfg: PipelineConfig) -> Self {
        Self {
            cfg,
            frame: 0,
            dims: None,
            carry: None,
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Index the next processed pair will get.
    pub fn frame(&self) -> usize {
        self.frame
    }

    pub fn process(&mut self, left: &GrayImage, right: &GrayImage) -> Result<(FrameReport, FrameOutput)> {
        if left.dims() != right.dims() {
            return Err(Error::PairMismatch(format!(
                "frame {:06}: left is {:?}, right is {:?}",
                self.frame,
                left.dims(),
                right.dims()
            )));
        }
        if let Some(d) = self.dims {
            if d != left.dims() {
                return Err(Error::PairMismatch(format!(
                    "frame {:06} is {:?}, the sequence started at {d:?}",
                    self.frame,
                    left.dims()
                )));
            }
        }
        let t = Instant::now();
        let seed = match self.carry.take() {
            Some(seed) => seed,
            None if self.frame == 0 => bootstrap_seed(left, right, &self.cfg),
            None => Seed::full_search(),
        };
        let bootstrap = if self.frame == 0 {
            t.elapsed().as_secs_f64()
        } else {
            0.0
        };
        match seed.source {
            SeedSource::PreviousFrame { frame } if frame + 1 != self.frame => {
                return Err(Error::Invariant(format!(
                    "frame {} seeded from frame {frame}",
                    self.frame
                )))
            }
            SeedSource::Bootstrap if self.frame != 0 => {
                return Err(Error::Invariant(format!("frame {} seeded by bootstrap", self.frame)))
            }
            _ => {}
        }

        let mut out = process_frame(left, right, seed, &self.cfg)?;
        out.timings.bootstrap = bootstrap;
        out.timings.total += bootstrap;
        let report = FrameReport::new(self.frame, &out);
        self.carry = Some(out.next_seed(self.frame));
        self.dims = Some(left.dims());
        self.frame += 1;
        Ok((report, out))
    }
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub reports: Vec<FrameReport>,
    pub metrics: SequenceMetrics,
}

/// Runs the pipeline over a sequence directory. With `out_dir` set, writes
/// the per-frame artifacts selected in `cfg.output` and `metrics.json`.
pub fn run_pipeline(seq_dir: impl AsRef<Path>, out_dir: Option<&Path>, cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    let pairs = list_frames(seq_dir)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut runner = SequenceRunner::new(cfg.clone());
    let mut reports = Vec::with_capacity(pairs.len());
    for pair in &pairs {
        let (left, right) = load_pair(pair)?;
        let (report, out) = runner.process(&left, &right)?;
        if let Some(dir) = out_dir {
            let i = pair.index;
            if cfg.output.disparity {
                out.disparity.save_png16(dir.join(format!("{i:06}_disp.png")))?;
            }
            if cfg.output.overlay {
                out.overlay(&left).save(dir.join(format!("{i:06}_overlay.png")))?;
            }
            if cfg.output.report {
                std::fs::write(dir.join(format!("{i:06}_report.json")), report.to_json())?;
            }
        }
        reports.push(report);
    }
    let metrics = SequenceMetrics::from_reports(&reports);
    if let Some(dir) = out_dir {
        std::fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&metrics)?)?;
    }
    Ok(PipelineRun { reports, metrics })
}
