//! Frame-to-frame association of detections.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::detect::Detection;
use crate::geometry::Point;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Association {
    /// Detection in the earlier frame.
    pub from: Detection,
    /// Detection in the later frame.
    pub to: Detection,
    /// Centroid distance in pixels.
    pub distance: f64,
    /// Registration error e_k, set once the global motion is known.
    pub error: f64,
    /// Set by the outlier rule of the registration stage.
    pub moving: bool,
}

impl Association {
    pub fn src(&self) -> Point<f64> {
        let (x, y) = self.from.centroid();
        Point::new(x, y)
    }

    pub fn dst(&self) -> Point<f64> {
        let (x, y) = self.to.centroid();
        Point::new(x, y)
    }
}

pub fn surface_ratio(a: u64, b: u64) -> f64 {
    a.max(b) as f64 / a.min(b) as f64
}

#[derive(Clone, Copy)]
struct Candidate {
    distance: f64,
    from_label: u32,
    to_label: u32,
    from: usize,
    to: usize,
}

fn by_distance_then_labels(a: &Candidate, b: &Candidate) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.from_label.cmp(&b.from_label))
        .then(a.to_label.cmp(&b.to_label))
}

fn point_of(d: &Detection) -> Point<f64> {
    let (x, y) = d.centroid();
    Point::new(x, y)
}

/// Greedy k-nearest-neighbour association with a surface-ratio constraint.
///
/// A pair `(a, b)` is a candidate when `b` is among the `k` nearest
/// detections of `a` in the later frame and the larger of the two surfaces
/// is at most `ratio_max` times the smaller. Candidates are accepted in
/// ascending distance (ties broken by labels) whenever both ends are still
/// free. The result is sorted by source label.
pub fn knn_match(
    dets_t: &[Detection],
    dets_t1: &[Detection],
    k: usize,
    ratio_max: f64,
) -> Vec<Association> {
    let targets: Vec<Point<f64>> = dets_t1.iter().map(point_of).collect();
    let mut candidates = Vec::new();
    let mut neighbours: Vec<Candidate> = Vec::with_capacity(dets_t1.len());
    for (i, a) in dets_t.iter().enumerate() {
        let pa = point_of(a);
        neighbours.clear();
        neighbours.extend(dets_t1.iter().enumerate().map(|(j, b)| Candidate {
            distance: pa.distance(targets[j]),
            from_label: a.cc.label,
            to_label: b.cc.label,
            from: i,
            to: j,
        }));
        let k = k.min(neighbours.len());
        if k == 0 {
            continue;
        }
        if k < neighbours.len() {
            neighbours.select_nth_unstable_by(k - 1, by_distance_then_labels);
            neighbours.truncate(k);
        }
        candidates.extend(
            neighbours
                .iter()
                .filter(|c| surface_ratio(a.cc.surface, dets_t1[c.to].cc.surface) <= ratio_max),
        );
    }
    candidates.sort_by(by_distance_then_labels);

    let mut from_used = vec![false; dets_t.len()];
    let mut to_used = vec![false; dets_t1.len()];
    let mut out = Vec::new();
    for c in candidates {
        if from_used[c.from] || to_used[c.to] {
            continue;
        }
        from_used[c.from] = true;
        to_used[c.to] = true;
        out.push(Association {
            from: dets_t[c.from],
            to: dets_t1[c.to],
            distance: c.distance,
            error: 0.0,
            moving: false,
        });
    }
    out.sort_by_key(|a| a.from.cc.label);
    out
}
