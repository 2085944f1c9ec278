//! Hysteresis detection on run-length encoded thresholds.

use serde::{Deserialize, Serialize};

use crate::ccl::{self, CCStats, Connectivity, LabeledRuns, RunSegment};
use crate::ingest::{GrayFrame, PipelineConfig};

/// A low-threshold component seeded by at least one high-threshold pixel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub cc: CCStats,
    pub frame_index: usize,
    pub has_high_pixel: bool,
}

impl Detection {
    pub fn centroid(&self) -> (f64, f64) {
        self.cc.centroid()
    }

    pub fn surface(&self) -> u64 {
        self.cc.surface
    }
}

/// Low-threshold labeling plus, per label, whether a high run falls inside it.
#[derive(Clone, Debug)]
pub struct HysteresisLabels {
    pub labeled: LabeledRuns,
    /// `seeded[l - 1]` for label `l`.
    pub seeded: Vec<bool>,
}

/// Label the `tau_low` foreground and mark components that contain a
/// `tau_high` run.
///
/// High foreground is a subset of low foreground, so every high run lies
/// inside exactly one low run of the same row; a per-row merge finds it.
pub fn hysteresis_label(
    frame: &GrayFrame,
    tau_low: u8,
    tau_high: u8,
    connectivity: Connectivity,
) -> HysteresisLabels {
    let low = ccl::threshold_runs(frame, tau_low);
    let high = ccl::threshold_runs(frame, tau_high);
    let labeled = ccl::label(&low, connectivity);
    let mut seeded = vec![false; labeled.n_labels as usize];
    mark_seeded(&labeled, &high, &mut seeded);
    HysteresisLabels { labeled, seeded }
}

fn mark_seeded(labeled: &LabeledRuns, high: &[RunSegment], seeded: &mut [bool]) {
    let low = &labeled.runs;
    let mut i = 0usize;
    for h in high {
        while i < low.len() && (low[i].row, low[i].x_end) < (h.row, h.x_begin) {
            i += 1;
        }
        if let Some(run) = low.get(i) {
            if run.row == h.row && run.x_begin <= h.x_begin {
                seeded[labeled.label_of[i] as usize - 1] = true;
            }
        }
    }
}

/// Components of the `tau_low` foreground that intersect the `tau_high`
/// foreground, with geometry measured on the low-threshold pixels. No
/// surface filtering is applied here.
pub fn hysteresis_detect(frame: &GrayFrame, cfg: &PipelineConfig) -> Vec<Detection> {
    let hl = hysteresis_label(frame, cfg.tau_low, cfg.tau_high, cfg.connectivity);
    detections_from(&hl, frame.index)
}

pub fn detections_from(hl: &HysteresisLabels, frame_index: usize) -> Vec<Detection> {
    ccl::analyze(&hl.labeled)
        .into_iter()
        .zip(&hl.seeded)
        .filter(|(_, &seeded)| seeded)
        .map(|(cc, _)| Detection {
            cc,
            frame_index,
            has_high_pixel: true,
        })
        .collect()
}

pub fn surface_filter(dets: Vec<Detection>, s_min: u64, s_max: u64) -> Vec<Detection> {
    dets.into_iter()
        .filter(|d| (s_min..=s_max).contains(&d.cc.surface))
        .collect()
}
