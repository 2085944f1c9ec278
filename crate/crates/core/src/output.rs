//! Text formats written and read by the command line tools.
//!
//! - tracks (TSV): `track_id class frame_begin x_begin y_begin frame_end
//!   x_end y_end n_frames fit_residual`
//! - bounding boxes (TSV): `frame track_id cx cy rx ry class`, one row per
//!   observation
//! - motion log (CSV): `frame,theta,tx,ty,mean_err,std_err,n_inliers,pass`
//!
//! Every file starts with a `#` header line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detect::Detection;
use crate::error::{Error, Result};
use crate::eval::EvalTrack;
use crate::geometry::Point;
use crate::ingest::PipelineConfig;
use crate::matching::Association;
use crate::pipeline::{EllipseRecord, MotionRecord, StageTimings};
use crate::track::{Track, TrackState};

pub const TRACKS_HEADER: &str =
    "#track_id\tclass\tframe_begin\tx_begin\ty_begin\tframe_end\tx_end\ty_end\tn_frames\tfit_residual";
pub const BBOX_HEADER: &str = "#frame\ttrack_id\tcx\tcy\trx\try\tclass";
pub const MOTION_HEADER: &str = "#frame,theta,tx,ty,mean_err,std_err,n_inliers,pass";

/// Tracks that are written out: meteors and stars.
pub fn reported(tracks: &[Track]) -> impl Iterator<Item = &Track> {
    tracks
        .iter()
        .filter(|t| matches!(t.state, TrackState::Meteor | TrackState::Star))
}

pub fn tracks_tsv(tracks: &[Track]) -> String {
    let mut out = format!("{TRACKS_HEADER}\n");
    for t in reported(tracks) {
        let (a, b) = (t.first(), t.last());
        writeln!(
            out,
            "{}\t{}\t{}\t{:.3}\t{:.3}\t{}\t{:.3}\t{:.3}\t{}\t{:.4}",
            t.id,
            t.state,
            a.frame,
            a.position.x,
            a.position.y,
            b.frame,
            b.position.x,
            b.position.y,
            t.observations.len(),
            t.fit_residual.unwrap_or(0.0)
        )
        .unwrap();
    }
    out
}

pub fn bbox_tsv(tracks: &[Track]) -> String {
    let mut rows: Vec<(usize, u64, String)> = Vec::new();
    for t in reported(tracks) {
        for o in &t.observations {
            rows.push((
                o.frame,
                t.id,
                format!(
                    "{}\t{}\t{:.3}\t{:.3}\t{:.1}\t{:.1}\t{}",
                    o.frame, t.id, o.position.x, o.position.y, o.rx, o.ry, t.state
                ),
            ));
        }
    }
    rows.sort_by_key(|r| (r.0, r.1));
    let mut out = format!("{BBOX_HEADER}\n");
    for (_, _, line) in rows {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn motion_csv(records: &[MotionRecord]) -> String {
    let mut out = format!("{MOTION_HEADER}\n");
    for r in records {
        let m = &r.motion;
        writeln!(
            out,
            "{},{:.8},{:.5},{:.5},{:.5},{:.5},{},{}",
            r.frame, m.theta, m.tx, m.ty, m.mean_err, m.std_err, m.n_inliers, m.pass
        )
        .unwrap();
    }
    out
}

pub fn detections_csv(frames: &[Vec<Detection>]) -> String {
    let mut out = String::from("#frame,label,cx,cy,S,x_min,y_min,x_max,y_max\n");
    for d in frames.iter().flatten() {
        let (cx, cy) = d.centroid();
        let (x0, y0, x1, y1) = d.cc.bbox();
        writeln!(
            out,
            "{},{},{:.3},{:.3},{},{x0},{y0},{x1},{y1}",
            d.frame_index, d.cc.label, cx, cy, d.cc.surface
        )
        .unwrap();
    }
    out
}

pub fn associations_csv(pairs: &[Vec<Association>]) -> String {
    let mut out = String::from("#frame,label_from,label_to,distance,error,moving\n");
    for a in pairs.iter().flatten() {
        writeln!(
            out,
            "{},{},{},{:.4},{:.4},{}",
            a.to.frame_index,
            a.from.cc.label,
            a.to.cc.label,
            a.distance,
            a.error,
            u8::from(a.moving)
        )
        .unwrap();
    }
    out
}

pub fn ellipses_csv(records: &[EllipseRecord]) -> String {
    let mut out = String::from("#frame,cx,cy,S,a,b,rho,track_id\n");
    for r in records {
        let (cx, cy) = r.detection.centroid();
        writeln!(
            out,
            "{},{:.3},{:.3},{},{:.4},{:.4},{},{}",
            r.frame,
            cx,
            cy,
            r.detection.cc.surface,
            r.stats.a,
            r.stats.b,
            if r.stats.rho.is_finite() {
                format!("{:.4}", r.stats.rho)
            } else {
                "inf".into()
            },
            r.track_id.map(|i| i.to_string()).unwrap_or_default()
        )
        .unwrap();
    }
    out
}

/// One parsed row of a tracks file.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackRow {
    pub id: u64,
    pub class: TrackState,
    pub frame_begin: usize,
    pub begin: Point<f64>,
    pub frame_end: usize,
    pub end: Point<f64>,
    pub n_frames: usize,
    pub fit_residual: f64,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn field<T: std::str::FromStr>(fields: &[&str], i: usize, path: &Path, line: usize) -> Result<T> {
    fields
        .get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason: format!("bad or missing field {}", i + 1),
        })
}

pub fn parse_tracks_tsv(text: &str, path: &Path) -> Result<Vec<TrackRow>> {
    data_lines(text)
        .map(|(n, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 10 {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: n,
                    reason: format!("expected 10 fields, found {}", f.len()),
                });
            }
            Ok(TrackRow {
                id: field(&f, 0, path, n)?,
                class: field(&f, 1, path, n)?,
                frame_begin: field(&f, 2, path, n)?,
                begin: Point::new(field(&f, 3, path, n)?, field(&f, 4, path, n)?),
                frame_end: field(&f, 5, path, n)?,
                end: Point::new(field(&f, 6, path, n)?, field(&f, 7, path, n)?),
                n_frames: field(&f, 8, path, n)?,
                fit_residual: field(&f, 9, path, n)?,
            })
        })
        .collect()
}

/// `track_id -> [(frame, centre)]`.
pub type TrackBoxes = BTreeMap<u64, Vec<(usize, Point<f64>)>>;

/// Per-track centres from a bounding-box file.
pub fn parse_bbox_tsv(text: &str, path: &Path) -> Result<TrackBoxes> {
    let mut map = TrackBoxes::new();
    for (n, line) in data_lines(text) {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: n,
                reason: format!("expected 7 fields, found {}", f.len()),
            });
        }
        let frame: usize = field(&f, 0, path, n)?;
        let id: u64 = field(&f, 1, path, n)?;
        let p = Point::new(field(&f, 2, path, n)?, field(&f, 3, path, n)?);
        map.entry(id).or_default().push((frame, p));
    }
    Ok(map)
}

/// Meteor tracks prepared for scoring. Observations come from the
/// bounding-box rows when available, otherwise from a linear interpolation
/// between the track endpoints.
pub fn eval_tracks(rows: &[TrackRow], boxes: Option<&TrackBoxes>) -> Vec<EvalTrack> {
    rows.iter()
        .filter(|r| r.class == TrackState::Meteor)
        .map(|r| {
            let observations = match boxes.and_then(|b| b.get(&r.id)) {
                Some(obs) => obs.clone(),
                None => (r.frame_begin..=r.frame_end)
                    .map(|f| {
                        let span = (r.frame_end - r.frame_begin).max(1) as f64;
                        let t = (f - r.frame_begin) as f64 / span;
                        (f, r.begin + (r.end - r.begin) * t)
                    })
                    .collect(),
            };
            EvalTrack {
                id: r.id,
                observations,
            }
        })
        .collect()
}

/// Meteor tracks of a pipeline run, real observations only.
pub fn eval_tracks_from(tracks: &[Track]) -> Vec<EvalTrack> {
    tracks
        .iter()
        .filter(|t| t.state == TrackState::Meteor)
        .map(|t| EvalTrack {
            id: t.id,
            observations: t
                .real_observations()
                .map(|o| (o.frame, o.position))
                .collect(),
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageMs {
    pub read: f64,
    pub detect: f64,
    pub register: f64,
    pub track: f64,
    pub ellipse: f64,
    pub total: f64,
}

/// Record of one detection run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    pub input: PathBuf,
    pub pattern: String,
    pub threads: usize,
    pub outputs: BTreeMap<String, PathBuf>,
    pub frame_count: usize,
    /// Milliseconds per frame.
    pub ms_per_frame: StageMs,
}

impl RunManifest {
    pub fn timings(t: &StageTimings, frames: usize) -> StageMs {
        let per = |d: std::time::Duration| d.as_secs_f64() * 1e3 / frames.max(1) as f64;
        StageMs {
            read: per(t.read),
            detect: per(t.detect),
            register: per(t.register),
            track: per(t.track),
            ellipse: per(t.ellipse),
            total: per(t.total),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(path, json.as_bytes())
    }
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
