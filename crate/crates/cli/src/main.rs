use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stereolane::imagery::load_gray;
use stereolane::pipeline::{bootstrap_seed, run_bench, run_eval, run_pipeline, MatchSummary, PipelineConfig};
use stereolane::stereo::{compute_disparity, compute_disparity_full};
use stereolane::synth::{generate_scene, sample_drift, sample_scene, sequence_configs, SceneConfig, SceneKind};
use stereolane::{Error, Result, RoadProfileModel};

/// Stereo lane detection with temporally seeded disparity search.
#[derive(Parser, Debug)]
#[command(name = "stereolane", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the full pipeline over a sequence of stereo pairs.
    Pipeline {
        /// Directory of NNNNNN_left.png / NNNNNN_right.png pairs.
        #[arg(long)]
        seq: PathBuf,
        /// Where per-frame artifacts and metrics.json go.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Compare seeded and full-search matching on every frame.
    Bench {
        #[arg(long)]
        seq: PathBuf,
        /// Write the report as JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score detected lanes against generator truth.
    Eval {
        #[arg(long)]
        seq: PathBuf,
        /// Directory of NNNNNN_truth.json files.
        #[arg(long)]
        truth: PathBuf,
        /// Pipeline artifacts, table1.csv and eval.json go here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate a synthetic sequence with ground truth.
    Synth {
        /// Writes seq/ and truth/ below this directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long, value_enum, default_value_t = Kind::Straight)]
        kind: Kind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1242)]
        width: usize,
        #[arg(long, default_value_t = 375)]
        height: usize,
        /// Largest per-frame shift of the road profile, in disparities.
        #[arg(long, default_value_t = 0.3)]
        drift: f64,
        /// First-frame scene as JSON; replaces the sampled one.
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Dense disparity for a single stereo pair.
    Disparity {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        /// 16-bit PNG, disparity × 256, 0 for invalid.
        #[arg(long)]
        out: PathBuf,
        /// Seed profile `a0,a1,a2`; bootstrapped from the pair when absent.
        #[arg(long, conflicts_with = "full", allow_hyphen_values = true)]
        model: Option<String>,
        /// Search every disparity.
        #[arg(long)]
        full: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Kind {
    Straight,
    Curved,
    Obstacle,
}

impl From<Kind> for SceneKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Straight => SceneKind::Straight,
            Kind::Curved => SceneKind::Curved,
            Kind::Obstacle => SceneKind::Obstacle,
        }
    }
}

/// Pipeline settings: a JSON file, then individual flags on top.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tau: Option<u32>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    d_max: Option<u32>,
    #[arg(long)]
    block_radius: Option<usize>,
    #[arg(long)]
    uniqueness: Option<f64>,
    #[arg(long)]
    lambda_v: Option<f64>,
    #[arg(long)]
    lambda_u: Option<f64>,
    #[arg(long)]
    no_disparity: bool,
    #[arg(long)]
    no_overlay: bool,
    #[arg(long)]
    no_report: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        // validated once the flags are applied, so a flag can fix a file value
        let mut cfg: PipelineConfig = match &self.config {
            Some(path) => {
                if !path.exists() {
                    return Err(Error::FileNotFound(path.clone()));
                }
                serde_json::from_str(&std::fs::read_to_string(path)?)
                    .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?
            }
            None => PipelineConfig::default(),
        };
        if let Some(x) = self.tau {
            cfg.tau = x;
        }
        if let Some(x) = self.mu {
            cfg.mu = x;
        }
        if let Some(x) = self.d_max {
            cfg.d_max = x;
        }
        if let Some(x) = self.block_radius {
            cfg.block_radius = x;
        }
        if let Some(x) = self.uniqueness {
            cfg.uniqueness = x;
        }
        if let Some(x) = self.lambda_v {
            cfg.lambda_v = x;
        }
        if let Some(x) = self.lambda_u {
            cfg.lambda_u = x;
        }
        cfg.output.disparity &= !self.no_disparity;
        cfg.output.overlay &= !self.no_overlay;
        cfg.output.report &= !self.no_report;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_model(s: &str) -> Result<RoadProfileModel> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidParameter(format!("model {s:?}: {e}")))?;
    match parts[..] {
        [a0, a1, a2] => Ok(RoadProfileModel::new(a0, a1, a2)),
        _ => Err(Error::InvalidParameter(format!("model {s:?} needs three coefficients"))),
    }
}

fn pipeline(seq: &Path, out: &Path, cfg: &PipelineConfig) -> Result<()> {
    let run = run_pipeline(seq, Some(out), cfg)?;
    for r in &run.reports {
        println!(
            "frame {:06}  seed {:?}  lanes {}  horizon {}  {:.3}s",
            r.frame,
            r.seed.source,
            r.lane_count,
            r.horizon.map_or("-".to_string(), |h| format!("{h:.1}")),
            r.timings.total
        );
    }
    println!("{}", serde_json::to_string_pretty(&run.metrics)?);
    Ok(())
}

fn bench(seq: &Path, out: Option<&Path>, cfg: &PipelineConfig) -> Result<()> {
    let report = run_bench(seq, cfg)?;
    let json = report.to_json();
    match out {
        Some(path) => {
            std::fs::write(path, json)?;
            println!(
                "evaluations {:.1}% of full search, wall clock -{:.1}% (reference -{:.0}%), agreement {:.4}",
                100.0 * report.evaluation_ratio,
                100.0 * report.wall_clock_reduction,
                100.0 * report.reference_reduction,
                report.band_agreement
            );
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn eval(seq: &Path, truth: &Path, out: Option<&Path>, cfg: &PipelineConfig) -> Result<()> {
    let (report, table) = run_eval(seq, truth, out, cfg)?;
    print!("{}", table.to_csv());
    println!("success rate {:.4}", report.success_rate);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn synth(
    out: &Path,
    frames: usize,
    kind: Kind,
    seed: u64,
    width: usize,
    height: usize,
    drift: f64,
    scene: Option<&Path>,
) -> Result<()> {
    if frames == 0 {
        return Err(Error::InvalidParameter("frames must be at least 1".into()));
    }
    let first = match scene {
        Some(path) => {
            if !path.exists() {
                return Err(Error::FileNotFound(path.to_path_buf()));
            }
            serde_json::from_str::<SceneConfig>(&std::fs::read_to_string(path)?)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
        }
        None => sample_scene(kind.into(), seed, width, height),
    };
    let drift = sample_drift(&first, seed, drift);
    let (seq, truth) = (out.join("seq"), out.join("truth"));
    for (i, cfg) in sequence_configs(&first, &drift, frames)?.iter().enumerate() {
        generate_scene(cfg)?.write_frame(&seq, &truth, i)?;
    }
    println!("{frames} frames in {} and {}", seq.display(), truth.display());
    Ok(())
}

fn disparity(
    left: &Path,
    right: &Path,
    out: &Path,
    model: Option<&str>,
    full: bool,
    cfg: &PipelineConfig,
) -> Result<()> {
    let (l, r) = (load_gray(left)?, load_gray(right)?);
    if l.dims() != r.dims() {
        return Err(Error::PairMismatch(format!(
            "left is {:?}, right is {:?}",
            l.dims(),
            r.dims()
        )));
    }
    let params = cfg.matcher();
    let (map, stats) = if full {
        compute_disparity_full(&l, &r, &params)?
    } else {
        let seed = match model {
            Some(m) => parse_model(m)?,
            None => bootstrap_seed(&l, &r, cfg).model,
        };
        compute_disparity(&l, &r, &seed, &params)?
    };
    map.save_png16(out)?;
    println!("{}", serde_json::to_string_pretty(&MatchSummary::from(&stats))?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pipeline { seq, out, config } => pipeline(&seq, &out, &config.resolve()?),
        Command::Bench { seq, out, config } => bench(&seq, out.as_deref(), &config.resolve()?),
        Command::Eval {
            seq,
            truth,
            out,
            config,
        } => eval(&seq, &truth, out.as_deref(), &config.resolve()?),
        Command::Synth {
            out,
            frames,
            kind,
            seed,
            width,
            height,
            drift,
            scene,
        } => synth(&out, frames, kind, seed, width, height, drift, scene.as_deref()),
        Command::Disparity {
            left,
            right,
            out,
            model,
            full,
            config,
        } => disparity(&left, &right, &out, model.as_deref(), full, &config.resolve()?),
    }
}

/// 1 for bad inputs, 2 for a broken internal invariant.
fn exit_code(e: &Error) -> u8 {
    if e.is_input_error() {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::MissingFrame("x".into())), 1);
        assert_eq!(exit_code(&Error::FileNotFound("x".into())), 1);
        assert_eq!(exit_code(&Error::Invariant("x".into())), 2);
    }

    #[test]
    fn model_parsing() {
        assert_eq!(
            parse_model("-10, 0.25,0").unwrap(),
            RoadProfileModel::new(-10.0, 0.25, 0.0)
        );
        assert!(parse_model("1,2").is_err());
        assert!(parse_model("a,b,c").is_err());
    }

    #[test]
    fn flags_override_defaults() {
        let args = ConfigArgs {
            tau: Some(5),
            lambda_u: Some(1.0),
            no_overlay: true,
            ..Default::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!((cfg.tau, cfg.lambda_u, cfg.output.overlay), (5, 1.0, false));
        assert_eq!(cfg.d_max, PipelineConfig::default().d_max);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
