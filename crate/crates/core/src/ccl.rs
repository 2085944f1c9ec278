//! Run-based connected-component labeling and analysis.
//!
//! Foreground pixels are compressed into maximal horizontal runs; labeling
//! unions overlapping runs of consecutive rows and feature accumulation sums
//! closed-form per-run moments, so both stages cost O(#runs) rather than
//! O(#pixels).

use serde::{Deserialize, Serialize};

use crate::ingest::GrayFrame;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(format!("connectivity must be 4 or 8, got {other}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

/// Row-major boolean image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }
}

/// Maximal interval `[x_begin, x_end]` of foreground pixels on one row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RunSegment {
    pub row: u32,
    pub x_begin: u32,
    pub x_end: u32,
}

impl RunSegment {
    #[inline]
    pub fn len(&self) -> u64 {
        u64::from(self.x_end - self.x_begin + 1)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Foreground iff intensity is strictly greater than `tau`.
pub fn binarize(frame: &GrayFrame, tau: u8) -> BinaryMask {
    BinaryMask {
        width: frame.width,
        height: frame.height,
        data: frame.pixels.iter().map(|&p| p > tau).collect(),
    }
}

pub fn encode_runs(mask: &BinaryMask) -> Vec<RunSegment> {
    let mut runs = Vec::new();
    for y in 0..mask.height {
        let row = &mask.data[y * mask.width..(y + 1) * mask.width];
        push_row_runs(&mut runs, y as u32, row.iter().copied());
    }
    runs
}

/// `encode_runs(&binarize(frame, tau))` without materializing the mask.
pub fn threshold_runs(frame: &GrayFrame, tau: u8) -> Vec<RunSegment> {
    let mut runs = Vec::new();
    for y in 0..frame.height {
        push_row_runs(&mut runs, y as u32, frame.row(y).iter().map(|&p| p > tau));
    }
    runs
}

#[inline]
fn push_row_runs(runs: &mut Vec<RunSegment>, y: u32, row: impl Iterator<Item = bool>) {
    let mut start: Option<u32> = None;
    let mut x = 0u32;
    for fg in row {
        match (fg, start) {
            (true, None) => start = Some(x),
            (false, Some(b)) => {
                runs.push(RunSegment {
                    row: y,
                    x_begin: b,
                    x_end: x - 1,
                });
                start = None;
            }
            _ => {}
        }
        x += 1;
    }
    if let Some(b) = start {
        runs.push(RunSegment {
            row: y,
            x_begin: b,
            x_end: x - 1,
        });
    }
}

/// Runs with their resolved component labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledRuns {
    pub runs: Vec<RunSegment>,
    /// `label_of[i]` is the 1-based label of `runs[i]`.
    pub label_of: Vec<u32>,
    pub n_labels: u32,
}

impl LabeledRuns {
    /// Rasterize into a label image (0 = background).
    pub fn to_label_image(&self, width: usize, height: usize) -> Vec<u32> {
        let mut img = vec![0u32; width * height];
        for (run, &label) in self.runs.iter().zip(&self.label_of) {
            let base = run.row as usize * width;
            img[base + run.x_begin as usize..=base + run.x_end as usize].fill(label);
        }
        img
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut i: u32) -> u32 {
        while self.parent[i as usize] != i {
            let grand = self.parent[self.parent[i as usize] as usize];
            self.parent[i as usize] = grand;
            i = grand;
        }
        i
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        // keep the smaller index as root so roots are raster-first runs
        match ra.cmp(&rb) {
            std::cmp::Ordering::Less => self.parent[rb as usize] = ra,
            std::cmp::Ordering::Greater => self.parent[ra as usize] = rb,
            std::cmp::Ordering::Equal => {}
        }
    }
}

/// Label runs sorted by `(row, x_begin)`.
///
/// Runs on consecutive rows are adjacent when their column intervals
/// overlap (4-connectivity) or overlap once widened by one column on each
/// side (8-connectivity). Labels are dense, numbered in raster order of
/// each component's first run.
pub fn label(runs: &[RunSegment], connectivity: Connectivity) -> LabeledRuns {
    let slack = match connectivity {
        Connectivity::Four => 0i64,
        Connectivity::Eight => 1,
    };
    let mut sets = DisjointSet::new(runs.len());

    // [prev_begin, prev_end) indexes the runs of row `cur_row - 1`
    let (mut prev_begin, mut prev_end) = (0usize, 0usize);
    let mut i = 0usize;
    while i < runs.len() {
        let row = runs[i].row;
        let row_begin = i;
        while i < runs.len() && runs[i].row == row {
            i += 1;
        }
        let row_end = i;
        let has_prev = row_begin > 0 && runs[row_begin - 1].row + 1 == row;
        if has_prev {
            let mut j = prev_begin;
            for k in row_begin..row_end {
                let (b, e) = (
                    i64::from(runs[k].x_begin) - slack,
                    i64::from(runs[k].x_end) + slack,
                );
                // skip previous-row runs that end before this run starts
                while j < prev_end && i64::from(runs[j].x_end) < b {
                    j += 1;
                }
                let mut m = j;
                while m < prev_end && i64::from(runs[m].x_begin) <= e {
                    sets.union(k as u32, m as u32);
                    m += 1;
                }
            }
        }
        prev_begin = row_begin;
        prev_end = row_end;
    }

    let mut dense = vec![0u32; runs.len()];
    let mut label_of = Vec::with_capacity(runs.len());
    let mut n_labels = 0u32;
    for k in 0..runs.len() {
        let root = sets.find(k as u32) as usize;
        if dense[root] == 0 {
            n_labels += 1;
            dense[root] = n_labels;
        }
        label_of.push(dense[root]);
    }
    LabeledRuns {
        runs: runs.to_vec(),
        label_of,
        n_labels,
    }
}

/// Per-component accumulators with exact integer moments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CCStats {
    pub label: u32,
    /// Pixel count.
    pub surface: u64,
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
    pub sx: u64,
    pub sy: u64,
    pub sx2: u64,
    pub sy2: u64,
    pub sxy: u64,
}

impl CCStats {
    fn empty(label: u32) -> Self {
        Self {
            label,
            surface: 0,
            x_min: u32::MAX,
            y_min: u32::MAX,
            x_max: 0,
            y_max: 0,
            sx: 0,
            sy: 0,
            sx2: 0,
            sy2: 0,
            sxy: 0,
        }
    }

    #[inline]
    fn add_run(&mut self, run: &RunSegment) {
        let (a, b, y) = (
            u64::from(run.x_begin),
            u64::from(run.x_end),
            u64::from(run.row),
        );
        let n = b - a + 1;
        let sum_x = (a + b) * n / 2;
        let sum_x2 = square_sum(b) - if a == 0 { 0 } else { square_sum(a - 1) };
        self.surface += n;
        self.sx += sum_x;
        self.sx2 += sum_x2;
        self.sy += y * n;
        self.sy2 += y * y * n;
        self.sxy += y * sum_x;
        self.x_min = self.x_min.min(run.x_begin);
        self.x_max = self.x_max.max(run.x_end);
        self.y_min = self.y_min.min(run.row);
        self.y_max = self.y_max.max(run.row);
    }

    pub fn centroid(&self) -> (f64, f64) {
        let s = self.surface as f64;
        (self.sx as f64 / s, self.sy as f64 / s)
    }

    pub fn bbox(&self) -> (u32, u32, u32, u32) {
        (self.x_min, self.y_min, self.x_max, self.y_max)
    }

    /// `S*Sx2 - Sx^2`, `S*Sy2 - Sy^2` and `S*Sxy - Sx*Sy`: the central second
    /// moments scaled by `S^2`, exact.
    pub fn scaled_central_moments(&self) -> (i128, i128, i128) {
        let s = i128::from(self.surface);
        let (sx, sy) = (i128::from(self.sx), i128::from(self.sy));
        (
            s * i128::from(self.sx2) - sx * sx,
            s * i128::from(self.sy2) - sy * sy,
            s * i128::from(self.sxy) - sx * sy,
        )
    }
}

/// Sum of k^2 for k in 0..=n.
#[inline]
fn square_sum(n: u64) -> u64 {
    n * (n + 1) * (2 * n + 1) / 6
}

/// Accumulate per-label statistics; `result[l - 1]` describes label `l`.
pub fn analyze(labeled: &LabeledRuns) -> Vec<CCStats> {
    let mut stats: Vec<CCStats> = (1..=labeled.n_labels).map(CCStats::empty).collect();
    for (run, &l) in labeled.runs.iter().zip(&labeled.label_of) {
        stats[l as usize - 1].add_run(run);
    }
    stats
}

/// Label image folded into 8 bits for viewing: background stays 0, labels
/// cycle through 1..=255.
pub fn label_dump(labeled: &LabeledRuns, width: usize, height: usize, index: usize) -> GrayFrame {
    let pixels = labeled
        .to_label_image(width, height)
        .into_iter()
        .map(|l| if l == 0 { 0 } else { ((l - 1) % 255 + 1) as u8 })
        .collect();
    GrayFrame::new(index, width, height, pixels).expect("dimensions come from the frame")
}
