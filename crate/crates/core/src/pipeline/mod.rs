//! Frame-sequence orchestration, benchmarking and evaluation.

mod bench;
mod config;
mod eval;
mod frame;
mod report;
mod run;

pub use bench::{
    band_agreement, bench_frames, disparity_agreement, input_hash, run_bench, BenchFrame, BenchReport, AGREEMENT_TOL,
    REFERENCE_REDUCTION,
};
pub use config::{BilateralParams, LaneParams, OutputParams, PipelineConfig};
pub use eval::{
    run_eval, score_lanes, DetectionTable, EvalReport, FrameScore, LaneScore, MATCH_TOLERANCE, TABLE_HEADER,
};
pub use frame::{
    bootstrap_model, bootstrap_seed, fit_road_profile, process_frame, FrameOutput, Seed, SeedSource, StageTimings,
};
pub use report::{FrameReport, MatchSummary, SequenceMetrics};
pub use run::{list_frames, load_pair, run_pipeline, FramePair, PipelineRun, SequenceRunner};
