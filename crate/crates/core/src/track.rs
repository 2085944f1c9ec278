//! Piecewise tracking, extrapolation through gaps, and track classification.
//!
//! Tracks are extended by frame-to-frame associations. Displacements are
//! measured after removing the global camera motion: for an association
//! `p -> p'` under motion `M`, the compensated step is `p' - M(p)`. The
//! running sum of compensated steps gives each observation a position in a
//! stabilised frame, which the angle rule and the line fit use.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::detect::Detection;
use crate::error::{Error, Result};
use crate::geometry::{centroid, Point};
use crate::ingest::PipelineConfig;
use crate::matching::Association;
use crate::motion::{flag_outliers, RigidMotion};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackState {
    Candidate,
    Meteor,
    Star,
    Noise,
}

impl TrackState {
    pub fn as_str(self) -> &'static str {
        match self {
            TrackState::Candidate => "candidate",
            TrackState::Meteor => "meteor",
            TrackState::Star => "star",
            TrackState::Noise => "noise",
        }
    }
}

impl fmt::Display for TrackState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TrackState {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "candidate" => Ok(TrackState::Candidate),
            "meteor" => Ok(TrackState::Meteor),
            "star" => Ok(TrackState::Star),
            "noise" => Ok(TrackState::Noise),
            other => Err(format!("unknown track class `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub frame: usize,
    pub position: Point<f64>,
    /// Component label in its frame; 0 for extrapolated observations.
    pub label: u32,
    pub surface: u64,
    /// Half extents of the bounding box.
    pub rx: f64,
    pub ry: f64,
    /// Outlier flag from the registration stage.
    pub flagged_moving: bool,
    /// `flagged_moving` with a compensated step of at least `move_min`.
    pub moving: bool,
    pub extrapolated: bool,
    /// Compensated displacement from the previous observation.
    pub step: Option<Point<f64>>,
    /// Position in the stabilised frame.
    pub stable: Point<f64>,
}

impl Observation {
    fn real(det: &Detection) -> Self {
        let (x, y) = det.centroid();
        let cc = &det.cc;
        Self {
            frame: det.frame_index,
            position: Point::new(x, y),
            label: cc.label,
            surface: cc.surface,
            rx: f64::from(cc.x_max - cc.x_min + 1) / 2.0,
            ry: f64::from(cc.y_max - cc.y_min + 1) / 2.0,
            flagged_moving: false,
            moving: false,
            extrapolated: false,
            step: None,
            stable: Point::new(x, y),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    pub observations: Vec<Observation>,
    pub state: TrackState,
    /// Consecutive extrapolated observations at the end of the track.
    pub extrap_count: usize,
    /// Mean distance of the stabilised positions to their fitted line.
    pub fit_residual: Option<f64>,
    pub finished: bool,
    /// Flatness of the max-reduced component covering the track, if any.
    pub rho: Option<f64>,
}

impl Track {
    fn open(id: u64, first: Observation, second: Observation) -> Self {
        Self {
            id,
            observations: vec![first, second],
            state: TrackState::Candidate,
            extrap_count: 0,
            fit_residual: None,
            finished: false,
            rho: None,
        }
    }

    pub fn last(&self) -> &Observation {
        self.observations.last().expect("tracks are never empty")
    }

    pub fn first(&self) -> &Observation {
        &self.observations[0]
    }

    pub fn real_observations(&self) -> impl Iterator<Item = &Observation> {
        self.observations.iter().filter(|o| !o.extrapolated)
    }

    fn push(&mut self, obs: Observation) {
        debug_assert_eq!(obs.frame, self.last().frame + 1);
        self.observations.push(obs);
    }

    fn trailing(&self, pred: impl Fn(&Observation) -> bool) -> usize {
        self.observations
            .iter()
            .rev()
            .take_while(|o| pred(o))
            .count()
    }

    fn promote(&mut self, cfg: &TrackerConfig) {
        if self.state != TrackState::Candidate {
            return;
        }
        if self.trailing(|o| !o.extrapolated && o.moving) >= cfg.track_min_consecutive {
            self.state = TrackState::Meteor;
        } else if self.trailing(|o| !o.extrapolated && !o.moving) >= cfg.star_min_frames {
            self.state = TrackState::Star;
        }
    }

    /// Drop trailing extrapolations, fit the line and settle the class.
    fn close(&mut self, cfg: &TrackerConfig) {
        self.finished = true;
        while self.last().extrapolated {
            self.observations.pop();
        }
        self.extrap_count = 0;
        let stable: Vec<_> = self.real_observations().map(|o| o.stable).collect();
        self.fit_residual = line_fit_residual(&stable).ok();
        match self.state {
            TrackState::Candidate => self.state = TrackState::Noise,
            TrackState::Meteor if self.fit_residual.is_none_or(|r| r > cfg.residual_max) => {
                self.state = TrackState::Noise
            }
            _ => {}
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub angle_max_deg: f64,
    pub extrap_max: usize,
    pub track_min_consecutive: usize,
    pub star_min_frames: usize,
    pub residual_max: f64,
    pub move_min: f64,
    pub reacquire_dist: f64,
    pub sigma_factor: f64,
}

impl From<&PipelineConfig> for TrackerConfig {
    fn from(c: &PipelineConfig) -> Self {
        Self {
            angle_max_deg: c.angle_max_deg,
            extrap_max: c.extrap_max,
            track_min_consecutive: c.track_min_consecutive,
            star_min_frames: c.star_min_frames,
            residual_max: c.residual_max,
            move_min: c.move_min,
            reacquire_dist: c.reacquire_dist,
            sigma_factor: c.sigma_factor,
        }
    }
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self::from(&PipelineConfig::default())
    }
}

/// Append a predicted observation: the last position advanced by the last
/// compensated step, then carried by the current camera motion.
///
/// Returns `true` when the track had already used its `extrap_max`
/// extrapolations; it is then marked finished and left unchanged.
pub fn extrapolate(track: &mut Track, motion: &RigidMotion<f64>, cfg: &TrackerConfig) -> bool {
    if track.extrap_count >= cfg.extrap_max {
        track.finished = true;
        return true;
    }
    let last = *track.last();
    let step = last.step.unwrap_or_default();
    track.push(Observation {
        frame: last.frame + 1,
        position: motion.apply(last.position + step),
        label: 0,
        flagged_moving: false,
        moving: false,
        extrapolated: true,
        step: Some(step),
        stable: last.stable + step,
        ..last
    });
    track.extrap_count += 1;
    false
}

/// Mean orthogonal distance of `points` to their total-least-squares line.
pub fn line_fit_residual<T: Real>(points: &[Point<T>]) -> Result<T> {
    if points.len() < 2 {
        return Err(Error::DegenerateFit);
    }
    let c = centroid(points.iter().copied()).unwrap();
    let (mut sxx, mut syy, mut sxy) = (T::zero(), T::zero(), T::zero());
    for &p in points {
        let d = p - c;
        sxx = sxx + d.x * d.x;
        syy = syy + d.y * d.y;
        sxy = sxy + d.x * d.y;
    }
    if sxx + syy == T::zero() {
        return Err(Error::DegenerateFit);
    }
    let phi = (sxy + sxy).atan2(sxx - syy) / T::lit(2.0);
    let normal = Point::new(-phi.sin(), phi.cos());
    let total = points
        .iter()
        .fold(T::zero(), |acc, &p| acc + (p - c).dot(normal).abs());
    Ok(total / T::from_usize(points.len()).unwrap())
}

/// Frame-ordered track store.
#[derive(Debug, Default)]
pub struct Tracker {
    cfg: TrackerConfig,
    active: Vec<Track>,
    done: Vec<Track>,
    next_id: u64,
    last_frame: Option<usize>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Self {
            cfg,
            active: Vec::new(),
            done: Vec::new(),
            next_id: 1,
            last_frame: None,
        }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn active(&self) -> &[Track] {
        &self.active
    }

    pub fn finished(&self) -> &[Track] {
        &self.done
    }

    /// Active and finished tracks.
    pub fn tracks_mut(&mut self) -> impl Iterator<Item = &mut Track> {
        self.active.iter_mut().chain(self.done.iter_mut())
    }

    /// Consume the associations from frame `frame - 1` to `frame`.
    ///
    /// `detections` are all detections of `frame`, used for reacquisition.
    /// `assocs` carry the moving flags of the registration stage and `motion`
    /// is the camera motion from `frame - 1` to `frame`.
    pub fn update(
        &mut self,
        frame: usize,
        assocs: &[Association],
        motion: &RigidMotion<f64>,
        detections: &[Detection],
    ) -> Result<()> {
        if frame == 0 {
            return Err(Error::FrameOrder {
                expected: 1,
                got: 0,
            });
        }
        if let Some(last) = self.last_frame {
            if frame != last + 1 {
                return Err(Error::FrameOrder {
                    expected: last + 1,
                    got: frame,
                });
            }
        }
        self.last_frame = Some(frame);
        let prev = frame - 1;
        let cfg = self.cfg.clone();

        let mut end_of: HashMap<u32, usize> = HashMap::new();
        for (i, t) in self.active.iter().enumerate() {
            let last = t.last();
            if last.frame == prev && !last.extrapolated {
                end_of.insert(last.label, i);
            }
        }

        let mut ordered: Vec<&Association> = assocs.iter().collect();
        ordered.sort_by_key(|a| (a.from.cc.label, a.to.cc.label));

        let mut extended = vec![false; self.active.len()];
        let mut refused: HashMap<usize, u32> = HashMap::new();
        let mut claimed: HashSet<u32> = HashSet::new();
        let mut pending: Vec<(&Association, Point<f64>)> = Vec::new();

        for a in ordered {
            let step = a.dst() - motion.apply(a.src());
            match end_of.get(&a.from.cc.label) {
                Some(&i) if !extended[i] => {
                    let track = &mut self.active[i];
                    let turn_ok = match track.last().step {
                        Some(prev_step) if prev_step.norm() >= 1.0 => {
                            prev_step.angle_deg(step) <= cfg.angle_max_deg
                        }
                        _ => true,
                    };
                    if turn_ok {
                        let stable = track.last().stable + step;
                        track.push(Observation {
                            flagged_moving: a.moving,
                            moving: a.moving && step.norm() >= cfg.move_min,
                            step: Some(step),
                            stable,
                            ..Observation::real(&a.to)
                        });
                        track.extrap_count = 0;
                        extended[i] = true;
                        claimed.insert(a.to.cc.label);
                    } else {
                        refused.insert(i, a.to.cc.label);
                        pending.push((a, step));
                    }
                }
                _ => pending.push((a, step)),
            }
        }

        // reacquire free detections near the predicted positions of tracks
        // that were not extended
        let mut reacq = Vec::new();
        for (i, t) in self.active.iter().enumerate() {
            if extended[i] {
                continue;
            }
            let last = t.last();
            let predicted = motion.apply(last.position + last.step.unwrap_or_default());
            for d in detections {
                if claimed.contains(&d.cc.label) || refused.get(&i) == Some(&d.cc.label) {
                    continue;
                }
                let (x, y) = d.centroid();
                let dist = predicted.distance(Point::new(x, y));
                if dist <= cfg.reacquire_dist {
                    reacq.push((dist, t.id, d.cc.label, i, d));
                }
            }
        }
        reacq.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for (_, _, label, i, d) in reacq {
            if extended[i] || claimed.contains(&label) {
                continue;
            }
            let track = &mut self.active[i];
            let last = *track.last();
            let mut obs = Observation::real(d);
            let step = obs.position - motion.apply(last.position);
            let flagged = flag_outliers(
                &[step.norm()],
                motion.mean_err,
                motion.std_err,
                cfg.sigma_factor,
            )[0];
            obs.flagged_moving = flagged;
            obs.moving = flagged && step.norm() >= cfg.move_min;
            obs.step = Some(step);
            obs.stable = last.stable + step;
            track.push(obs);
            track.extrap_count = 0;
            extended[i] = true;
            claimed.insert(label);
        }

        let mut still_active = Vec::with_capacity(self.active.len());
        for (i, mut track) in std::mem::take(&mut self.active).into_iter().enumerate() {
            if !extended[i] && extrapolate(&mut track, motion, &cfg) {
                track.close(&cfg);
                self.done.push(track);
                continue;
            }
            track.promote(&cfg);
            still_active.push(track);
        }
        self.active = still_active;

        for (a, step) in pending {
            if claimed.contains(&a.to.cc.label) {
                continue;
            }
            claimed.insert(a.to.cc.label);
            let moving = a.moving && step.norm() >= cfg.move_min;
            let first = Observation {
                flagged_moving: a.moving,
                moving,
                ..Observation::real(&a.from)
            };
            let second = Observation {
                flagged_moving: a.moving,
                moving,
                step: Some(step),
                stable: first.stable + step,
                ..Observation::real(&a.to)
            };
            let mut track = Track::open(self.next_id, first, second);
            self.next_id += 1;
            track.promote(&cfg);
            self.active.push(track);
        }
        Ok(())
    }

    /// Close every remaining track and return all tracks ordered by id.
    pub fn finish(mut self) -> Vec<Track> {
        let cfg = self.cfg.clone();
        for mut t in self.active.drain(..) {
            t.close(&cfg);
            self.done.push(t);
        }
        self.done.sort_by_key(|t| t.id);
        self.done
    }
}
