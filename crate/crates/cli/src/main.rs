//! `fmdt`: meteor detection, synthetic scene rendering and scoring.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fmdt::ccl::Connectivity;
use fmdt::eval::{compute_metrics, evaluate, GroundTruth};
use fmdt::ingest::{load_sequence, write_pgm, PipelineConfig};
use fmdt::output::{self, write_atomic, RunManifest};
use fmdt::pipeline::{self, PipelineOptions};
use fmdt::synth::{self, SceneFile};

#[derive(Parser)]
#[command(name = "fmdt", version, about = "Fast meteor detection toolbox")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect and track meteors in a frame sequence.
    Detect(Box<DetectArgs>),
    /// Render a synthetic scene to PGM frames plus ground truth.
    Synth(SynthArgs),
    /// Score a tracks file against ground truth.
    Eval(EvalArgs),
}

/// Detection parameters. Unset flags fall back to `--config`, then to the
/// built-in defaults.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// Parameter file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Low hysteresis threshold (component extent).
    #[arg(long)]
    thr_low: Option<u8>,
    /// High hysteresis threshold (seed).
    #[arg(long)]
    thr_high: Option<u8>,
    /// Smallest kept component, in pixels.
    #[arg(long)]
    surface_min: Option<u64>,
    /// Largest kept component, in pixels.
    #[arg(long)]
    surface_max: Option<u64>,
    /// Nearest neighbours considered per component.
    #[arg(long)]
    knn_k: Option<usize>,
    /// Largest surface ratio between associated components.
    #[arg(long)]
    knn_ratio: Option<f64>,
    /// Outlier threshold, in standard deviations of the registration error.
    #[arg(long)]
    sigma_factor: Option<f64>,
    /// Largest direction change between steps, in degrees.
    #[arg(long)]
    angle_max: Option<f64>,
    /// Frames a meteor may be extrapolated without a detection.
    #[arg(long)]
    extrap_max: Option<usize>,
    /// Consecutive moving frames that confirm a meteor.
    #[arg(long)]
    track_min: Option<usize>,
    /// Consecutive stationary frames that confirm a star.
    #[arg(long)]
    star_min: Option<usize>,
    /// Largest line-fit residual (pixels) for a meteor.
    #[arg(long)]
    residual_max: Option<f64>,
    /// Smallest compensated step (pixels) counted as motion.
    #[arg(long)]
    move_min: Option<f64>,
    /// Search radius (pixels) around an extrapolated position.
    #[arg(long)]
    reacquire_dist: Option<f64>,
    /// 4 or 8.
    #[arg(long, value_parser = parse_connectivity)]
    connectivity: Option<Connectivity>,
    /// Run the max-reduction / ellipse chain.
    #[arg(long)]
    ellipse: bool,
    /// Half-width of the max-reduction window, in frames.
    #[arg(long)]
    maxred_radius: Option<usize>,
    /// Bin width of the flatness histogram.
    #[arg(long)]
    rho_bin_width: Option<f64>,
}

fn parse_connectivity(s: &str) -> Result<Connectivity, String> {
    let n: u8 = s.parse().map_err(|_| format!("`{s}` is not 4 or 8"))?;
    Connectivity::try_from(n).map_err(|e| e.to_string())
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::from_file(p)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag { c.$field = v; })*
            };
        }
        set!(
            thr_low => tau_low,
            thr_high => tau_high,
            surface_min => s_min,
            surface_max => s_max,
            knn_k => knn_k,
            knn_ratio => knn_ratio_max,
            sigma_factor => sigma_factor,
            angle_max => angle_max_deg,
            extrap_max => extrap_max,
            track_min => track_min_consecutive,
            star_min => star_min_frames,
            residual_max => residual_max,
            move_min => move_min,
            reacquire_dist => reacquire_dist,
            connectivity => connectivity,
            maxred_radius => maxred_radius,
            rho_bin_width => rho_bin_width,
        );
        c.ellipse |= self.ellipse;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Debug)]
struct DetectArgs {
    /// Directory holding the frames.
    #[arg(long = "in")]
    input: PathBuf,
    /// Glob matched against file names; frames are read in name order.
    #[arg(long, default_value = "*.pgm")]
    pattern: String,
    /// Tracks TSV (stdout when omitted).
    #[arg(long)]
    out_tracks: Option<PathBuf>,
    /// Per-frame bounding boxes of reported tracks.
    #[arg(long)]
    out_bb: Option<PathBuf>,
    /// Per-frame camera motion log (CSV).
    #[arg(long)]
    out_motion: Option<PathBuf>,
    /// Per-frame detections (CSV).
    #[arg(long)]
    out_detections: Option<PathBuf>,
    /// Per-frame associations with registration errors (CSV).
    #[arg(long)]
    out_associations: Option<PathBuf>,
    /// Flatness histogram CSV; an SVG is written next to it.
    #[arg(long)]
    out_hist: Option<PathBuf>,
    /// Ellipse measurements of the composite components (CSV).
    #[arg(long)]
    out_ellipses: Option<PathBuf>,
    /// Directory for label images of every frame.
    #[arg(long)]
    dump_labels: Option<PathBuf>,
    /// Directory for max-reduced composites.
    #[arg(long)]
    dump_composites: Option<PathBuf>,
    /// Run manifest (JSON).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Ground truth to score the run against.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Largest distance (pixels) to the truth position in a shared frame.
    #[arg(long, default_value_t = 5.0)]
    gt_max_dist: f64,
    /// Worker threads (1 = single-threaded).
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Scene description file.
    #[arg(long)]
    spec: PathBuf,
    /// Output directory (created if needed).
    #[arg(long)]
    out: PathBuf,
    /// Override the scene seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the frame count.
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Tracks TSV written by `detect`.
    #[arg(long, required_unless_present = "counts")]
    tracks: Option<PathBuf>,
    /// Bounding-box TSV; gives per-frame positions for matching.
    #[arg(long)]
    bb: Option<PathBuf>,
    /// Ground truth written by `synth`.
    #[arg(long, required_unless_present = "counts")]
    gt: Option<PathBuf>,
    /// Largest distance (pixels) to the truth position in a shared frame.
    #[arg(long, default_value_t = 5.0)]
    gt_max_dist: f64,
    /// Score raw counts `tp,fp,fn` instead of files.
    #[arg(long, value_parser = parse_list::<3>, conflicts_with_all = ["tracks", "gt", "bb"])]
    counts: Option<[usize; 3]>,
    /// With `--counts`: `frames_detected,frames_total`.
    #[arg(long, value_parser = parse_list::<2>, requires = "counts")]
    frames: Option<[usize; 2]>,
    /// Also write the report as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_list<const N: usize>(s: &str) -> Result<[usize; N], String> {
    let values = s
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| format!("`{v}` is not a count"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    values
        .try_into()
        .map_err(|v: Vec<usize>| format!("expected {N} comma-separated counts, got {}", v.len()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run_detect(args: &DetectArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    if args.threads == 0 {
        bail!("--threads must be >= 1");
    }
    let truth = args.gt.as_deref().map(GroundTruth::from_file).transpose()?;
    for dir in [&args.dump_labels, &args.dump_composites]
        .into_iter()
        .flatten()
    {
        create_dir(dir)?;
    }
    let seq = load_sequence(&args.input, &args.pattern)?;
    log::info!("{} frames in {}", seq.len(), args.input.display());
    let opts = PipelineOptions {
        threads: args.threads,
        keep_debug: args.out_detections.is_some() || args.out_associations.is_some(),
        dump_labels: args.dump_labels.clone(),
        dump_composites: args.dump_composites.clone(),
    };
    let out = pipeline::run(seq, &cfg, &opts)?;

    let mut outputs = std::collections::BTreeMap::new();
    let mut emit = |key: &str, path: &Option<PathBuf>, text: String| -> Result<()> {
        if let Some(p) = path {
            write_text(p, &text)?;
            outputs.insert(key.to_string(), p.clone());
        }
        Ok(())
    };
    let tracks = output::tracks_tsv(&out.tracks);
    match &args.out_tracks {
        Some(_) => emit("tracks", &args.out_tracks, tracks)?,
        None => print!("{tracks}"),
    }
    emit("bb", &args.out_bb, output::bbox_tsv(&out.tracks))?;
    emit("motion", &args.out_motion, output::motion_csv(&out.motions))?;
    emit(
        "detections",
        &args.out_detections,
        output::detections_csv(&out.detections),
    )?;
    emit(
        "associations",
        &args.out_associations,
        output::associations_csv(&out.associations),
    )?;
    emit(
        "ellipses",
        &args.out_ellipses,
        output::ellipses_csv(&out.ellipses),
    )?;
    if let Some(p) = &args.out_hist {
        let Some(hist) = &out.histogram else {
            bail!("--out-hist needs --ellipse");
        };
        emit("histogram", &args.out_hist, hist.to_csv())?;
        emit(
            "histogram_svg",
            &Some(p.with_extension("svg")),
            hist.to_svg(),
        )?;
    }

    let reported = output::reported(&out.tracks);
    let (meteors, stars) = reported.fold((0, 0), |(m, s), t| match t.state {
        fmdt::track::TrackState::Meteor => (m + 1, s),
        _ => (m, s + 1),
    });
    log::info!(
        "{} frames, {meteors} meteor and {stars} star tracks, {:.2} ms/frame",
        out.frames,
        out.timings.total.as_secs_f64() * 1e3 / out.frames.max(1) as f64
    );

    if let Some(truth) = &truth {
        let report = evaluate(
            &output::eval_tracks_from(&out.tracks),
            truth,
            args.gt_max_dist,
        );
        eprint!("{}", report.to_table());
    }
    if let Some(p) = &args.manifest {
        RunManifest {
            config: cfg,
            input: args.input.clone(),
            pattern: args.pattern.clone(),
            threads: args.threads,
            outputs,
            frame_count: out.frames,
            ms_per_frame: RunManifest::timings(&out.timings, out.frames),
        }
        .write(p)?;
    }
    Ok(())
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    let mut file = SceneFile::from_file(&args.spec)?;
    if let Some(seed) = args.seed {
        file.scene.seed = seed;
    }
    let n = args.frames.unwrap_or(file.frames);
    let (frames, truth) = synth::generate(&file.scene, &file.camera, n)?;
    create_dir(&args.out)?;
    for f in &frames {
        write_pgm(args.out.join(format!("frame_{:05}.pgm", f.index)), f)?;
    }
    write_text(&args.out.join("truth.txt"), &truth.meteors.to_text())?;
    let mut camera = String::from("#frame,theta,tx,ty\n");
    for (i, p) in truth.poses.iter().enumerate() {
        camera.push_str(&format!("{i},{:.9},{:.6},{:.6}\n", p.theta, p.tx, p.ty));
    }
    write_text(&args.out.join("camera.csv"), &camera)?;
    log::info!(
        "{} frames, {} meteors written to {}",
        frames.len(),
        truth.meteors.entries.len(),
        args.out.display()
    );
    Ok(())
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    let report = if let Some([tp, fp, fn_]) = args.counts {
        let [frames_detected, frames_total] = args.frames.unwrap_or([0, 0]);
        compute_metrics::<f64>(tp, fp, fn_, frames_detected, frames_total, tp + fn_)
    } else {
        let (Some(tracks_path), Some(gt)) = (&args.tracks, &args.gt) else {
            bail!("--tracks and --gt are required");
        };
        let truth = GroundTruth::from_file(gt)?;
        let read =
            |p: &Path| fs::read_to_string(p).with_context(|| format!("reading {}", p.display()));
        let rows = output::parse_tracks_tsv(&read(tracks_path)?, tracks_path)?;
        let boxes = match &args.bb {
            Some(p) => Some(output::parse_bbox_tsv(&read(p)?, p)?),
            None => None,
        };
        evaluate(
            &output::eval_tracks(&rows, boxes.as_ref()),
            &truth,
            args.gt_max_dist,
        )
    };
    print!("{}", report.to_table());
    if let Some(p) = &args.out {
        write_text(p, &report.to_csv())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FMDT_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Detect(a) => run_detect(a),
        Command::Synth(a) => run_synth(a),
        Command::Eval(a) => run_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
