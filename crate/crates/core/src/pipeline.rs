//! Frame-by-frame orchestration of the detection chain.
//!
//! Detection, association and registration are pure per frame (pair) and
//! run on a bounded batch of frames in parallel; tracking and the ellipse
//! chain consume the results strictly in frame order, so the output does
//! not depend on the worker count.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ccl::{self, LabeledRuns};
use crate::detect::{self, Detection};
use crate::ellipse::{self, EllipseStats, FlatnessHistogram};
use crate::error::{Error, Result};
use crate::ingest::{write_pgm, GrayFrame, PipelineConfig};
use crate::matching::{knn_match, Association};
use crate::motion::{
    estimate_rigid, geometric_mean, registration_errors, two_pass_motion, RigidMotion,
};
use crate::track::{Track, Tracker, TrackerConfig};

#[derive(Clone, Debug, Default)]
pub struct PipelineOptions {
    /// Worker threads; 1 runs everything on the calling thread.
    pub threads: usize,
    /// Keep per-frame detections and associations in the output.
    pub keep_debug: bool,
    /// Write label images (label mod 255) of the low threshold here.
    pub dump_labels: Option<PathBuf>,
    /// Write max-reduced composites here (ellipse chain only).
    pub dump_composites: Option<PathBuf>,
}

/// Registration outcome for the frame pair `(frame - 1, frame)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionRecord {
    pub frame: usize,
    pub first: RigidMotion<f64>,
    pub motion: RigidMotion<f64>,
    pub n_assocs: usize,
    pub n_moving: usize,
    pub geometric_mean_first: f64,
    pub geometric_mean: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipseRecord {
    pub frame: usize,
    pub detection: Detection,
    pub stats: EllipseStats<f64>,
    pub track_id: Option<u64>,
}

/// Accumulated wall time per stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub read: Duration,
    pub detect: Duration,
    pub register: Duration,
    pub track: Duration,
    pub ellipse: Duration,
    pub total: Duration,
}

impl StageTimings {
    pub fn stages_sum(&self) -> Duration {
        self.read + self.detect + self.register + self.track + self.ellipse
    }
}

#[derive(Clone, Debug, Default)]
pub struct PipelineOutput {
    pub frames: usize,
    pub dims: Option<(usize, usize)>,
    /// All tracks, ordered by id, including noise.
    pub tracks: Vec<Track>,
    pub motions: Vec<MotionRecord>,
    pub detections: Vec<Vec<Detection>>,
    pub associations: Vec<Vec<Association>>,
    pub ellipses: Vec<EllipseRecord>,
    pub histogram: Option<FlatnessHistogram<f64>>,
    pub timings: StageTimings,
    /// Largest number of frames held at once.
    pub peak_frames_held: usize,
}

/// Hysteresis detection followed by the surface filter.
pub fn detect_frame(frame: &GrayFrame, cfg: &PipelineConfig) -> (Vec<Detection>, LabeledRuns) {
    let hl = detect::hysteresis_label(frame, cfg.tau_low, cfg.tau_high, cfg.connectivity);
    let dets = detect::surface_filter(
        detect::detections_from(&hl, frame.index),
        cfg.s_min,
        cfg.s_max,
    );
    (dets, hl.labeled)
}

/// Associations with errors and moving flags, and the camera motion.
#[derive(Clone, Debug)]
pub struct Registration {
    pub assocs: Vec<Association>,
    pub first: RigidMotion<f64>,
    pub motion: RigidMotion<f64>,
    pub geometric_mean_first: f64,
    pub geometric_mean: f64,
}

pub fn register_pair(prev: &[Detection], cur: &[Detection], cfg: &PipelineConfig) -> Registration {
    let mut assocs = knn_match(prev, cur, cfg.knn_k, cfg.knn_ratio_max);
    let pairs: Vec<_> = assocs.iter().map(|a| (a.src(), a.dst())).collect();
    if pairs.len() >= 2 {
        let r = two_pass_motion(&pairs, cfg.sigma_factor);
        for ((a, &e), &m) in assocs.iter_mut().zip(&r.errors).zip(&r.moving) {
            a.error = e;
            a.moving = m;
        }
        let (first_errors, _, _) = registration_errors(&pairs, &r.first);
        Registration {
            geometric_mean_first: geometric_mean(&first_errors),
            geometric_mean: geometric_mean(&r.errors),
            assocs,
            first: r.first,
            motion: r.motion,
        }
    } else {
        let motion = estimate_rigid(&pairs);
        Registration {
            assocs,
            first: motion,
            motion,
            geometric_mean_first: 0.0,
            geometric_mean: 0.0,
        }
    }
}

struct EllipseChain {
    radius: usize,
    window: VecDeque<GrayFrame>,
    stats: Vec<EllipseStats<f64>>,
}

impl EllipseChain {
    fn push(
        &mut self,
        frame: GrayFrame,
        cfg: &PipelineConfig,
        tracker: &mut Tracker,
        records: &mut Vec<EllipseRecord>,
        dump: Option<&PathBuf>,
    ) -> Result<()> {
        self.window.push_back(frame);
        if self.window.len() < 2 * self.radius + 1 {
            return Ok(());
        }
        let composite = ellipse::max_reduce(self.window.make_contiguous(), self.radius)?;
        self.window.pop_front();
        if let Some(dir) = dump {
            write_pgm(
                dir.join(format!("composite_{:05}.pgm", composite.index)),
                &composite,
            )?;
        }
        let (dets, _) = detect_frame(&composite, cfg);
        for d in dets {
            let stats: EllipseStats<f64> = ellipse::ellipse_axes(&d.cc);
            let track_id = annotate(tracker, &d, composite.index, stats.rho);
            self.stats.push(stats);
            records.push(EllipseRecord {
                frame: composite.index,
                detection: d,
                stats,
                track_id,
            });
        }
        Ok(())
    }
}

/// Attach `rho` to the first track observed inside the composite component.
fn annotate(tracker: &mut Tracker, d: &Detection, frame: usize, rho: f64) -> Option<u64> {
    let cc = &d.cc;
    let inside = |t: &Track| {
        t.real_observations().any(|o| {
            o.frame == frame
                && o.position.x >= f64::from(cc.x_min)
                && o.position.x <= f64::from(cc.x_max)
                && o.position.y >= f64::from(cc.y_min)
                && o.position.y <= f64::from(cc.y_max)
        })
    };
    let track = tracker
        .tracks_mut()
        .filter(|t| inside(t))
        .min_by_key(|t| t.id)?;
    track.rho = Some(rho);
    Some(track.id)
}

/// Run the full chain over an ordered frame stream.
pub fn run<I>(frames: I, cfg: &PipelineConfig, opts: &PipelineOptions) -> Result<PipelineOutput>
where
    I: IntoIterator<Item = Result<GrayFrame>>,
{
    cfg.validate()?;
    let start = Instant::now();
    let threads = opts.threads.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut frames = frames.into_iter();
    let mut out = PipelineOutput::default();
    let mut tracker = Tracker::new(TrackerConfig::from(cfg));
    let mut chain = cfg.ellipse.then(|| EllipseChain {
        radius: cfg.maxred_radius,
        window: VecDeque::new(),
        stats: Vec::new(),
    });
    let mut prev: Option<Vec<Detection>> = None;
    let mut expected_index = 0usize;

    loop {
        let t0 = Instant::now();
        let mut batch = Vec::with_capacity(threads);
        for f in frames.by_ref().take(threads) {
            let f = f?;
            if f.index != expected_index {
                return Err(Error::FrameOrder {
                    expected: expected_index,
                    got: f.index,
                });
            }
            match out.dims {
                Some(d) if d != f.dims() => {
                    return Err(Error::DimensionMismatch {
                        index: f.index,
                        expected: d,
                        got: f.dims(),
                    })
                }
                _ => out.dims = Some(f.dims()),
            }
            expected_index += 1;
            batch.push(f);
        }
        out.timings.read += t0.elapsed();
        if batch.is_empty() {
            break;
        }
        let held = batch.len() + chain.as_ref().map_or(0, |c| c.window.len());
        out.peak_frames_held = out.peak_frames_held.max(held);

        let t0 = Instant::now();
        let detected: Vec<(Vec<Detection>, LabeledRuns)> =
            pool.install(|| batch.par_iter().map(|f| detect_frame(f, cfg)).collect());
        out.timings.detect += t0.elapsed();
        if let Some(dir) = &opts.dump_labels {
            for (f, (_, labeled)) in batch.iter().zip(&detected) {
                let img = ccl::label_dump(labeled, f.width, f.height, f.index);
                write_pgm(dir.join(format!("labels_{:05}.pgm", f.index)), &img)?;
            }
        }
        let mut dets: Vec<Vec<Detection>> = detected.into_iter().map(|d| d.0).collect();

        let t0 = Instant::now();
        let firsts: Vec<&[Detection]> = prev
            .iter()
            .map(Vec::as_slice)
            .chain(dets.iter().map(Vec::as_slice))
            .collect();
        let offset = usize::from(prev.is_none());
        let registrations: Vec<Registration> = pool.install(|| {
            (offset..dets.len())
                .into_par_iter()
                .map(|i| register_pair(firsts[i - offset], &dets[i], cfg))
                .collect()
        });
        out.timings.register += t0.elapsed();

        let t0 = Instant::now();
        for (reg, i) in registrations.iter().zip(offset..) {
            let frame = batch[i].index;
            tracker.update(frame, &reg.assocs, &reg.motion, &dets[i])?;
            let m = &reg.motion;
            log::debug!(
                "frame {frame}: {} assocs, theta={:.5} t=({:.3},{:.3}) e={:.3}±{:.3} gm1={:.3} gm2={:.3}",
                reg.assocs.len(),
                m.theta,
                m.tx,
                m.ty,
                m.mean_err,
                m.std_err,
                reg.geometric_mean_first,
                reg.geometric_mean
            );
            out.motions.push(MotionRecord {
                frame,
                first: reg.first,
                motion: reg.motion,
                n_assocs: reg.assocs.len(),
                n_moving: reg.assocs.iter().filter(|a| a.moving).count(),
                geometric_mean_first: reg.geometric_mean_first,
                geometric_mean: reg.geometric_mean,
            });
        }
        out.timings.track += t0.elapsed();

        if opts.keep_debug {
            out.detections.extend(dets.iter().cloned());
            out.associations
                .extend(registrations.into_iter().map(|r| r.assocs));
        }

        let t0 = Instant::now();
        for f in batch {
            if let Some(chain) = chain.as_mut() {
                chain.push(
                    f,
                    cfg,
                    &mut tracker,
                    &mut out.ellipses,
                    opts.dump_composites.as_ref(),
                )?;
            }
        }
        out.timings.ellipse += t0.elapsed();

        out.frames += dets.len();
        prev = dets.pop();
    }

    out.tracks = tracker.finish();
    if let Some(chain) = chain {
        out.histogram = Some(ellipse::flatness_histogram(&chain.stats, cfg.rho_bin_width));
    }
    out.timings.total = start.elapsed();
    Ok(out)
}
