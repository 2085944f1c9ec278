//! Scoring detected meteor tracks against ground truth.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthMeteor {
    pub id: u64,
    pub frame_begin: usize,
    pub begin: Point<f64>,
    pub frame_end: usize,
    pub end: Point<f64>,
}

impl TruthMeteor {
    pub fn frames(&self) -> usize {
        self.frame_end - self.frame_begin + 1
    }

    /// Position interpolated linearly between the endpoints.
    pub fn position_at(&self, frame: usize) -> Option<Point<f64>> {
        if frame < self.frame_begin || frame > self.frame_end {
            return None;
        }
        if self.frame_end == self.frame_begin {
            return Some(self.begin);
        }
        let t = (frame - self.frame_begin) as f64 / (self.frame_end - self.frame_begin) as f64;
        Some(self.begin + (self.end - self.begin) * t)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub entries: Vec<TruthMeteor>,
}

impl GroundTruth {
    pub fn frames_total(&self) -> usize {
        self.entries.iter().map(TruthMeteor::frames).sum()
    }

    /// Parse `id frame_begin x_begin y_begin frame_end x_end y_end` lines.
    /// Blank lines and `#` comments are skipped.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        let mut ids = BTreeSet::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                reason,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 7 {
                return Err(err(format!("expected 7 fields, found {}", fields.len())));
            }
            let int = |i: usize| {
                fields[i]
                    .parse::<u64>()
                    .map_err(|_| err(format!("field {} is not an integer: {}", i + 1, fields[i])))
            };
            let float = |i: usize| {
                fields[i]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("field {} is not a number: {}", i + 1, fields[i])))
            };
            let m = TruthMeteor {
                id: int(0)?,
                frame_begin: int(1)? as usize,
                begin: Point::new(float(2)?, float(3)?),
                frame_end: int(4)? as usize,
                end: Point::new(float(5)?, float(6)?),
            };
            if m.frame_begin > m.frame_end {
                return Err(err("frame_begin > frame_end".into()));
            }
            if !ids.insert(m.id) {
                return Err(err(format!("duplicate meteor id {}", m.id)));
            }
            entries.push(m);
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for m in &self.entries {
            writeln!(
                out,
                "{} {} {:.3} {:.3} {} {:.3} {:.3}",
                m.id, m.frame_begin, m.begin.x, m.begin.y, m.frame_end, m.end.x, m.end.y
            )
            .unwrap();
        }
        out
    }
}

/// A detected track reduced to its observed positions.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalTrack {
    pub id: u64,
    pub observations: Vec<(usize, Point<f64>)>,
}

impl EvalTrack {
    fn frame_range(&self) -> (usize, usize) {
        let first = self.observations.iter().map(|o| o.0).min().unwrap_or(0);
        let last = self.observations.iter().map(|o| o.0).max().unwrap_or(0);
        (first, last)
    }
}

/// Whether a track matches a truth meteor: overlapping frame ranges and at
/// least one shared frame where the track lies within `max_dist` of the
/// interpolated truth position.
pub fn track_matches(track: &EvalTrack, meteor: &TruthMeteor, max_dist: f64) -> bool {
    track.observations.iter().any(|&(f, p)| {
        meteor
            .position_at(f)
            .is_some_and(|q| q.distance(p) <= max_dist)
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// Per truth meteor, the number of its frames covered by matched tracks.
    pub frames_detected: Vec<usize>,
    /// Per track, the truth meteors it matches.
    pub track_matches: Vec<Vec<u64>>,
}

/// Count true positives (truth meteors matched by at least one track),
/// false positives (tracks matching nothing) and false negatives.
pub fn match_tracks(tracks: &[EvalTrack], truth: &GroundTruth, max_dist: f64) -> MatchCounts {
    assert!(max_dist > 0.0, "max_dist must be positive");
    let mut matched_truth = vec![false; truth.entries.len()];
    let mut covered: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); truth.entries.len()];
    let mut per_track = Vec::with_capacity(tracks.len());
    for t in tracks {
        let (tb, te) = t.frame_range();
        let mut hits = Vec::new();
        for (j, m) in truth.entries.iter().enumerate() {
            if te < m.frame_begin || tb > m.frame_end || !track_matches(t, m, max_dist) {
                continue;
            }
            matched_truth[j] = true;
            hits.push(m.id);
            covered[j].extend(
                t.observations
                    .iter()
                    .map(|o| o.0)
                    .filter(|&f| (m.frame_begin..=m.frame_end).contains(&f)),
            );
        }
        per_track.push(hits);
    }
    let tp = matched_truth.iter().filter(|&&m| m).count();
    MatchCounts {
        tp,
        fp: per_track.iter().filter(|h| h.is_empty()).count(),
        fn_: truth.entries.len() - tp,
        frames_detected: covered.iter().map(BTreeSet::len).collect(),
        track_matches: per_track,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<T> {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub meteors_detected: usize,
    pub meteors_total: usize,
    pub frames_detected: usize,
    pub frames_total: usize,
    pub precision: T,
    pub recall: T,
    pub meteor_rate: T,
    pub frame_rate: T,
    pub f_score: T,
    /// No detections or no truth: the F-score is reported as 0.
    pub degraded: bool,
}

fn ratio<T: Real>(num: usize, den: usize) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::from_usize(num).unwrap() / T::from_usize(den).unwrap()
    }
}

/// Precision `tp/(tp+fp)`, recall `tp/(tp+fn)` and their harmonic mean.
pub fn compute_metrics<T: Real>(
    tp: usize,
    fp: usize,
    fn_: usize,
    frames_detected: usize,
    frames_total: usize,
    meteors_total: usize,
) -> EvalReport<T> {
    let precision: T = ratio(tp, tp + fp);
    let recall: T = ratio(tp, tp + fn_);
    let degraded = tp + fp == 0 || tp + fn_ == 0;
    let f_score = if degraded || precision + recall == T::zero() {
        T::zero()
    } else {
        T::lit(2.0) * precision * recall / (precision + recall)
    };
    EvalReport {
        tp,
        fp,
        fn_,
        meteors_detected: tp,
        meteors_total,
        frames_detected,
        frames_total,
        precision,
        recall,
        meteor_rate: ratio(tp, meteors_total),
        frame_rate: ratio(frames_detected, frames_total),
        f_score,
        degraded,
    }
}

/// Score tracks against truth end to end.
pub fn evaluate(tracks: &[EvalTrack], truth: &GroundTruth, max_dist: f64) -> EvalReport<f64> {
    let counts = match_tracks(tracks, truth, max_dist);
    compute_metrics(
        counts.tp,
        counts.fp,
        counts.fn_,
        counts.frames_detected.iter().sum(),
        truth.frames_total(),
        truth.entries.len(),
    )
}

impl<T: Real> EvalReport<T> {
    fn pct(v: T) -> f64 {
        v.to_f64().unwrap() * 100.0
    }

    /// Aligned human-readable table.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let rows: [(&str, String); 9] = [
            (
                "meteors detected",
                format!("{} / {}", self.meteors_detected, self.meteors_total),
            ),
            (
                "frames detected",
                format!("{} / {}", self.frames_detected, self.frames_total),
            ),
            (
                "meteor rate",
                format!(
                    "{:.0}% ({:.4})",
                    Self::pct(self.meteor_rate),
                    self.meteor_rate
                ),
            ),
            (
                "frame rate",
                format!(
                    "{:.0}% ({:.4})",
                    Self::pct(self.frame_rate),
                    self.frame_rate
                ),
            ),
            ("true positives", self.tp.to_string()),
            ("false positives", self.fp.to_string()),
            ("false negatives", self.fn_.to_string()),
            (
                "precision / recall",
                format!("{:.4} / {:.4}", self.precision, self.recall),
            ),
            (
                "F-score",
                format!(
                    "{:.2}{}",
                    self.f_score,
                    if self.degraded { " (degraded)" } else { "" }
                ),
            ),
        ];
        for (k, v) in rows {
            writeln!(s, "{k:<20} {v}").unwrap();
        }
        s
    }

    pub fn to_csv(&self) -> String {
        format!(
            "tp,fp,fn,meteors_detected,meteors_total,frames_detected,frames_total,precision,recall,meteor_rate,frame_rate,f_score,degraded\n\
             {},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            self.tp,
            self.fp,
            self.fn_,
            self.meteors_detected,
            self.meteors_total,
            self.frames_detected,
            self.frames_total,
            self.precision,
            self.recall,
            self.meteor_rate,
            self.frame_rate,
            self.f_score,
            self.degraded
        )
    }
}
