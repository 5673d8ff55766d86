use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use scot_core::io::{self, FilterPolicy, LoadOptions, SynthSpec, DEFAULT_ID_PROPERTY};
use scot_core::matching::DEFAULT_IOU_THRESHOLD;
use scot_core::tracker::TrackerConfig;
use scot_core::ScotConfig;

/// Score, track and simulate building footprint time series.
#[derive(Parser)]
#[command(name = "scot", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score proposals against ground truth and write a JSON report.
    Score(ScoreArgs),
    /// Assign persistent ids to per-frame masks or footprints.
    Track(TrackArgs),
    /// Generate a synthetic ground-truth (and proposal) dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
struct ScoreArgs {
    /// Ground-truth directory: monthly files of one AOI, or one subdirectory per AOI.
    #[arg(long)]
    ground_truth: PathBuf,
    /// Proposal directory with the same layout as the ground truth.
    #[arg(long)]
    proposals: PathBuf,
    /// Weight of the tracking term relative to the change term.
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    iou_threshold: f64,
    /// Footprints smaller than this (px²) are not scored.
    #[arg(long, default_value_t = 4.0)]
    min_area: f64,
    /// Footprints with more than this fraction of their area under UDM are not scored.
    #[arg(long, default_value_t = 0.5)]
    udm_fraction: f64,
    /// Feature property holding the building id.
    #[arg(long, default_value = DEFAULT_ID_PROPERTY)]
    id_property: String,
    /// Report path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[group(id = "input", required = true, multiple = false)]
struct TrackInput {
    /// Directory of 8-bit mask rasters (png or tif), one per month.
    #[arg(long, group = "input")]
    masks: Option<PathBuf>,
    /// Directory of footprint files, one per month; existing ids are ignored.
    #[arg(long, group = "input")]
    footprints: Option<PathBuf>,
}

#[derive(Args)]
struct TrackArgs {
    #[command(flatten)]
    input: TrackInput,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    iou_threshold: f64,
    /// Footprints smaller than this (px²) are discarded before tracking.
    #[arg(long, default_value_t = 4.0)]
    min_area: f64,
    /// Frames a track may go unseen and still be matched.
    #[arg(long, default_value_t = 1)]
    max_gap: usize,
    /// Feature property used for ids on output (and read from --footprints).
    #[arg(long, default_value = DEFAULT_ID_PROPERTY)]
    id_property: String,
    /// Output directory for the tracked footprint files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// JSON file with `scenario`, optional `perturbation` and `n_aoi`.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Output directory; receives ground_truth/, proposals/ and trace.json.
    #[arg(long)]
    out: PathBuf,
}

fn score(args: ScoreArgs) -> Result<()> {
    let cfg = ScotConfig {
        beta: args.beta,
        iou_threshold: args.iou_threshold,
        min_area: args.min_area,
    };
    cfg.check()?;
    if !(0.0..=1.0).contains(&args.udm_fraction) {
        anyhow::bail!("--udm-fraction must lie in [0, 1], got {}", args.udm_fraction);
    }
    let policy = FilterPolicy {
        min_area: args.min_area,
        udm_overlap_fraction: args.udm_fraction,
    };
    let opts = LoadOptions {
        id_property: args.id_property,
        require_ids: true,
    };
    let report = io::score_directories(&args.ground_truth, &args.proposals, &cfg, &policy, &opts)?;
    io::write_report(&report, &args.out)?;
    info!(
        "scored {} AOI(s), report written to {}",
        report.dataset.n_aoi,
        args.out.display()
    );
    println!("{}", serde_json::to_string_pretty(&report.dataset)?);
    Ok(())
}

fn track(args: TrackArgs) -> Result<()> {
    if !(args.iou_threshold > 0.0 && args.iou_threshold < 1.0) {
        anyhow::bail!("--iou-threshold must lie in (0, 1), got {}", args.iou_threshold);
    }
    let cfg = TrackerConfig {
        iou_threshold: args.iou_threshold,
        max_gap: args.max_gap,
    };
    let series = match (&args.input.masks, &args.input.footprints) {
        (Some(dir), _) => io::track_masks(dir, &cfg, args.min_area)?,
        (None, Some(dir)) => {
            let opts = LoadOptions {
                id_property: args.id_property.clone(),
                require_ids: false,
            };
            io::track_footprints(dir, &cfg, args.min_area, &opts)?
        }
        (None, None) => unreachable!("clap requires one input"),
    };
    io::write_series(&series, &args.out, &args.id_property)?;
    let tracks = series
        .frames
        .iter()
        .flat_map(|f| f.ids())
        .collect::<std::collections::HashSet<_>>()
        .len();
    println!(
        "tracked {} frames, {} footprints, {tracks} ids -> {}",
        series.frames.len(),
        series.footprint_count(),
        args.out.display()
    );
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let spec: SynthSpec = io::read_synth_spec(&args.spec)?;
    let traces = io::write_synth(&spec, args.seed, &args.out)
        .with_context(|| format!("generating into {}", args.out.display()))?;
    for t in &traces {
        info!(
            "{}: {} new footprints, {} swaps",
            t.aoi_id,
            t.scenario.new_footprints(),
            t.perturbation.as_ref().map_or(0, |p| p.swaps.len())
        );
    }
    println!("wrote {} AOI(s) to {}", traces.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Score(a) => score(a),
        Command::Track(a) => track(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
