//! Synthetic night-sky sequences with known ground truth.
//!
//! Stars and meteors live in a fixed sky frame. Each image is the sky seen
//! through a per-frame camera pose (rotation about the image centre followed
//! by a translation), plus background and Gaussian noise.
//!
//! Camera modes:
//! - `fixed`: identity pose.
//! - `gimbal`: residual sinusoidal rotation and vertical translation.
//! - `balloon`: as `gimbal` plus a linear horizontal drift (yaw).

use std::f64::consts::{PI, SQRT_2};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{GroundTruth, TruthMeteor};
use crate::geometry::Point;
use crate::ingest::GrayFrame;
use crate::motion::RigidMotion;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeteorSpec {
    pub start_frame: usize,
    pub duration: usize,
    /// Image position at `start_frame`.
    pub start: [f64; 2],
    /// Sky-frame velocity in pixels per frame.
    pub velocity: [f64; 2],
    pub peak: f64,
    /// Frames where the meteor is not rendered (occlusion).
    #[serde(default)]
    pub hidden: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Expected number of stars inside the image area.
    pub n_stars: usize,
    pub star_intensity: [f64; 2],
    pub star_sigma: f64,
    #[serde(default, rename = "meteor")]
    pub meteors: Vec<MeteorSpec>,
    pub background: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraMode {
    #[default]
    Fixed,
    Gimbal,
    Balloon,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraMotionSpec {
    pub mode: CameraMode,
    /// Vertical oscillation amplitude (pixels) and period (frames).
    pub translation_amplitude: f64,
    pub translation_period: f64,
    /// Roll oscillation amplitude (degrees) and period (frames).
    pub rotation_amplitude_deg: f64,
    pub rotation_period: f64,
    /// Horizontal drift in pixels per frame (balloon only).
    pub yaw_drift: f64,
}

/// Sky-to-image transform of one frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

impl CameraPose {
    pub fn apply(&self, sky: Point<f64>, centre: Point<f64>) -> Point<f64> {
        (sky - centre).rotate(self.theta) + centre + Point::new(self.tx, self.ty)
    }

    pub fn invert(&self, image: Point<f64>, centre: Point<f64>) -> Point<f64> {
        (image - centre - Point::new(self.tx, self.ty)).rotate(-self.theta) + centre
    }

    /// Image-to-image motion from this frame to `next`.
    pub fn relative(&self, next: &CameraPose, centre: Point<f64>) -> RigidMotion<f64> {
        let theta = next.theta - self.theta;
        let shifted = centre + Point::new(self.tx, self.ty);
        let t = centre + Point::new(next.tx, next.ty) - shifted.rotate(theta);
        RigidMotion::from_params(theta, t.x, t.y)
    }
}

impl CameraMotionSpec {
    pub fn pose(&self, frame: usize) -> CameraPose {
        let f = frame as f64;
        let wave = |amp: f64, period: f64| {
            if amp == 0.0 || period <= 0.0 {
                0.0
            } else {
                amp * (2.0 * PI * f / period).sin()
            }
        };
        match self.mode {
            CameraMode::Fixed => CameraPose {
                theta: 0.0,
                tx: 0.0,
                ty: 0.0,
            },
            CameraMode::Gimbal | CameraMode::Balloon => CameraPose {
                theta: wave(self.rotation_amplitude_deg, self.rotation_period).to_radians(),
                tx: if self.mode == CameraMode::Balloon {
                    self.yaw_drift * f
                } else {
                    0.0
                },
                ty: wave(self.translation_amplitude, self.translation_period),
            },
        }
    }
}

/// Everything the generator knows about a rendered sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthTruth {
    pub meteors: GroundTruth,
    /// Per meteor, the true image centroid of every frame it is in view.
    pub centroids: Vec<Vec<(usize, Point<f64>)>>,
    pub poses: Vec<CameraPose>,
    /// Sky positions of the stars.
    pub stars: Vec<Point<f64>>,
}

impl SynthTruth {
    /// True camera motion from `frame` to `frame + 1`.
    pub fn motion(&self, frame: usize, width: usize, height: usize) -> RigidMotion<f64> {
        self.poses[frame].relative(&self.poses[frame + 1], image_centre(width, height))
    }
}

fn image_centre(width: usize, height: usize) -> Point<f64> {
    Point::new((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0)
}

/// Scene description as read from a `.cfg` file (TOML syntax): scene keys
/// at the top level, `frames`, a `[camera]` table and `[[meteor]]` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneFile {
    pub frames: usize,
    pub scene: SceneSpec,
    pub camera: CameraMotionSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSceneFile {
    frames: usize,
    #[serde(default)]
    camera: CameraMotionSpec,
    width: usize,
    height: usize,
    n_stars: usize,
    star_intensity: [f64; 2],
    star_sigma: f64,
    #[serde(default)]
    meteor: Vec<MeteorSpec>,
    background: f64,
    noise_sigma: f64,
    seed: u64,
}

impl SceneFile {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawSceneFile =
            toml::from_str(text).map_err(|e| Error::Scene(e.message().to_string()))?;
        Ok(Self {
            frames: raw.frames,
            camera: raw.camera,
            scene: SceneSpec {
                width: raw.width,
                height: raw.height,
                n_stars: raw.n_stars,
                star_intensity: raw.star_intensity,
                star_sigma: raw.star_sigma,
                meteors: raw.meteor,
                background: raw.background,
                noise_sigma: raw.noise_sigma,
                seed: raw.seed,
            },
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

/// Φ((b - mu)/sigma) - Φ((a - mu)/sigma), the Gaussian mass over `[a, b]`.
fn cell_mass(a: f64, b: f64, mu: f64, sigma: f64) -> f64 {
    let k = 1.0 / (sigma * SQRT_2);
    0.5 * (libm::erf((b - mu) * k) - libm::erf((a - mu) * k))
}

/// Pixel-integrated Gaussian spot scaled so a spot centred on a pixel of a
/// wide PSF peaks near `amplitude`.
struct Spot {
    x0: usize,
    y0: usize,
    wx: Vec<f64>,
    wy: Vec<f64>,
}

impl Spot {
    fn new(c: Point<f64>, sigma: f64, amplitude: f64, width: usize, height: usize) -> Option<Self> {
        let reach = (4.0 * sigma).ceil().max(1.0);
        let x0 = (c.x - reach).floor().max(0.0);
        let x1 = (c.x + reach).ceil().min(width as f64 - 1.0);
        let y0 = (c.y - reach).floor().max(0.0);
        let y1 = (c.y + reach).ceil().min(height as f64 - 1.0);
        if x0 > x1 || y0 > y1 {
            return None;
        }
        let scale = amplitude * 2.0 * PI * sigma * sigma;
        let wx = (x0 as usize..=x1 as usize)
            .map(|x| scale * cell_mass(x as f64 - 0.5, x as f64 + 0.5, c.x, sigma))
            .collect();
        let wy = (y0 as usize..=y1 as usize)
            .map(|y| cell_mass(y as f64 - 0.5, y as f64 + 0.5, c.y, sigma))
            .collect();
        Some(Self {
            x0: x0 as usize,
            y0: y0 as usize,
            wx,
            wy,
        })
    }

    fn for_each(&self, mut f: impl FnMut(usize, usize, f64)) {
        for (j, wy) in self.wy.iter().enumerate() {
            for (i, wx) in self.wx.iter().enumerate() {
                f(self.x0 + i, self.y0 + j, wx * wy);
            }
        }
    }
}

fn validate(scene: &SceneSpec, cam: &CameraMotionSpec, n_frames: usize) -> Result<()> {
    let fail = |m: String| Err(Error::Scene(m));
    if scene.width == 0 || scene.height == 0 {
        return fail("width and height must be positive".into());
    }
    if n_frames == 0 {
        return fail("at least one frame is required".into());
    }
    if !positive(scene.star_sigma) {
        return fail("star_sigma must be positive".into());
    }
    if !at_least(scene.noise_sigma, 0.0) {
        return fail("noise_sigma must be >= 0".into());
    }
    if scene.star_intensity[0] > scene.star_intensity[1] {
        return fail("star_intensity must be [min, max]".into());
    }
    for (p, name) in [
        (cam.translation_period, "translation_period"),
        (cam.rotation_period, "rotation_period"),
    ] {
        if p < 0.0 {
            return fail(format!("{name} must be >= 0"));
        }
    }
    for (i, m) in scene.meteors.iter().enumerate() {
        if m.duration == 0 {
            return fail(format!("meteor {}: duration must be >= 1", i + 1));
        }
    }
    Ok(())
}

/// Render `n_frames` frames and their ground truth.
pub fn generate(
    scene: &SceneSpec,
    cam: &CameraMotionSpec,
    n_frames: usize,
) -> Result<(Vec<GrayFrame>, SynthTruth)> {
    validate(scene, cam, n_frames)?;
    let (w, h) = (scene.width, scene.height);
    let centre = image_centre(w, h);
    let poses: Vec<CameraPose> = (0..n_frames).map(|f| cam.pose(f)).collect();

    // sky region covering every frame's field of view
    let max_shift = poses
        .iter()
        .map(|p| p.tx.abs().max(p.ty.abs()))
        .fold(0.0, f64::max);
    let max_theta = poses.iter().map(|p| p.theta.abs()).fold(0.0, f64::max);
    let margin = max_shift + max_theta.sin() * centre.norm() * 2.0 + 8.0 * scene.star_sigma;
    let (sky_w, sky_h) = (w as f64 + 2.0 * margin, h as f64 + 2.0 * margin);
    let n_stars = (scene.n_stars as f64 * sky_w * sky_h / (w * h) as f64).round() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    let stars: Vec<(Point<f64>, f64)> = (0..n_stars)
        .map(|_| {
            let p = Point::new(
                rng.random::<f64>() * sky_w - margin,
                rng.random::<f64>() * sky_h - margin,
            );
            let [lo, hi] = scene.star_intensity;
            (p, lo + (hi - lo) * rng.random::<f64>())
        })
        .collect();

    // meteors: sky trajectory anchored at the image start position
    let mut truth_entries = Vec::new();
    let mut centroids = Vec::new();
    let mut sky_meteors = Vec::new();
    for (i, m) in scene.meteors.iter().enumerate() {
        let start_pose = cam.pose(m.start_frame);
        let origin = start_pose.invert(Point::new(m.start[0], m.start[1]), centre);
        let v = Point::new(m.velocity[0], m.velocity[1]);
        let track: Vec<(usize, Point<f64>)> = (m.start_frame..m.start_frame + m.duration)
            .filter(|&f| f < n_frames)
            .map(|f| {
                let sky = origin + v * (f - m.start_frame) as f64;
                (f, poses[f].apply(sky, centre))
            })
            .filter(|(_, p)| {
                p.x >= 0.0 && p.y >= 0.0 && p.x <= (w - 1) as f64 && p.y <= (h - 1) as f64
            })
            .collect();
        sky_meteors.push((origin, v));
        if m.start_frame >= n_frames {
            // scheduled after the last rendered frame: not part of the truth
            continue;
        }
        let (Some(first), Some(last)) = (track.first(), track.last()) else {
            return Err(Error::Scene(format!(
                "meteor {} never enters the {w}x{h} frame",
                i + 1
            )));
        };
        truth_entries.push(TruthMeteor {
            id: i as u64 + 1,
            frame_begin: first.0,
            begin: first.1,
            frame_end: last.0,
            end: last.1,
        });
        centroids.push(track);
    }

    let frames: Vec<GrayFrame> = (0..n_frames)
        .into_par_iter()
        .map(|f| {
            let pose = poses[f];
            let mut canvas = vec![scene.background; w * h];
            for &(sky, amp) in &stars {
                if let Some(spot) = Spot::new(pose.apply(sky, centre), scene.star_sigma, amp, w, h)
                {
                    spot.for_each(|x, y, v| canvas[y * w + x] += v);
                }
            }
            for (m, &(origin, v)) in scene.meteors.iter().zip(&sky_meteors) {
                if f < m.start_frame || f >= m.start_frame + m.duration || m.hidden.contains(&f) {
                    continue;
                }
                let mid = origin + v * (f - m.start_frame) as f64;
                render_streak(
                    &mut canvas,
                    w,
                    h,
                    &pose,
                    centre,
                    mid,
                    v,
                    m.peak,
                    scene.star_sigma,
                );
            }
            let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
            rng.set_stream(f as u64 + 1);
            let noise = Normal::new(0.0, scene.noise_sigma.max(0.0)).expect("sigma >= 0");
            let pixels = canvas
                .into_iter()
                .map(|v| {
                    let n = if scene.noise_sigma > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    };
                    (v + n).round().clamp(0.0, 255.0) as u8
                })
                .collect();
            GrayFrame::new(f, w, h, pixels).expect("dimensions validated")
        })
        .collect();

    Ok((
        frames,
        SynthTruth {
            meteors: GroundTruth {
                entries: truth_entries,
            },
            centroids,
            poses,
            stars: stars.into_iter().map(|s| s.0).collect(),
        },
    ))
}

/// Motion-blurred streak: the maximum of spots sampled densely along the
/// exposure segment `mid ± v/2`.
#[allow(clippy::too_many_arguments)]
fn render_streak(
    canvas: &mut [f64],
    w: usize,
    h: usize,
    pose: &CameraPose,
    centre: Point<f64>,
    mid: Point<f64>,
    v: Point<f64>,
    peak: f64,
    sigma: f64,
) {
    let samples = (v.norm() * 4.0).ceil() as usize + 1;
    let mut streak: std::collections::HashMap<usize, f64> = std::collections::HashMap::new();
    for s in 0..samples {
        let t = if samples == 1 {
            0.0
        } else {
            s as f64 / (samples - 1) as f64 - 0.5
        };
        let c = pose.apply(mid + v * t, centre);
        if let Some(spot) = Spot::new(c, sigma, peak, w, h) {
            spot.for_each(|x, y, val| {
                let e = streak.entry(y * w + x).or_insert(0.0);
                *e = e.max(val);
            });
        }
    }
    for (i, v) in streak {
        canvas[i] += v;
    }
}

/// `v >= min`, false for NaN.
fn at_least(v: f64, min: f64) -> bool {
    v >= min
}

/// `v > 0`, false for NaN.
fn positive(v: f64) -> bool {
    v > 0.0
}
