use fmdt::geometry::Point;
use fmdt::motion::estimate_rigid;
use fmdt::synth::{generate, CameraMode, CameraMotionSpec, SceneSpec};
use proptest::prelude::*;

fn scene(seed: u64, noise: f64) -> SceneSpec {
    SceneSpec {
        width: 200,
        height: 150,
        n_stars: 30,
        star_intensity: [100.0, 220.0],
        star_sigma: 1.2,
        meteors: vec![],
        background: 20.0,
        noise_sigma: noise,
        seed,
    }
}

/// Intensity-weighted centroid of the background-subtracted window around
/// `p`.
fn weighted_centroid(f: &fmdt::ingest::GrayFrame, p: Point<f64>, bg: f64) -> Option<Point<f64>> {
    let r = 5i64;
    let (cx, cy) = (p.x.round() as i64, p.y.round() as i64);
    if cx - r < 0 || cy - r < 0 || cx + r >= f.width as i64 || cy + r >= f.height as i64 {
        return None;
    }
    let (mut s, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for y in cy - r..=cy + r {
        for x in cx - r..=cx + r {
            let v = f64::from(f.get(x as usize, y as usize)) - bg;
            s += v;
            sx += v * x as f64;
            sy += v * y as f64;
        }
    }
    Some(Point::new(sx / s, sy / s))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn same_seed_same_frames(seed in any::<u64>()) {
        let cam = CameraMotionSpec { mode: CameraMode::Balloon, translation_amplitude: 2.0, translation_period: 20.0, rotation_amplitude_deg: 0.4, rotation_period: 30.0, yaw_drift: 1.0 };
        let (a, ta) = generate(&scene(seed, 2.0), &cam, 4).unwrap();
        let (b, tb) = generate(&scene(seed, 2.0), &cam, 4).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(ta, tb);
    }

    #[test]
    fn gimbal_without_amplitude_is_fixed(seed in any::<u64>()) {
        let gimbal = CameraMotionSpec { mode: CameraMode::Gimbal, translation_period: 25.0, rotation_period: 25.0, ..Default::default() };
        let (a, _) = generate(&scene(seed, 2.0), &gimbal, 3).unwrap();
        let (b, _) = generate(&scene(seed, 2.0), &CameraMotionSpec::default(), 3).unwrap();
        prop_assert_eq!(a, b);
    }

    /// Rendered star centroids recover the recorded camera motion.
    #[test]
    fn camera_motion_is_recoverable(seed in any::<u64>(), frame in 0usize..40) {
        let cam = CameraMotionSpec { mode: CameraMode::Balloon, translation_amplitude: 3.0, translation_period: 37.0, rotation_amplitude_deg: 0.5, rotation_period: 53.0, yaw_drift: 1.5 };
        let s = scene(seed, 0.0);
        let (frames, truth) = generate(&s, &cam, frame + 2).unwrap();
        let centre = Point::new((s.width as f64 - 1.0) / 2.0, (s.height as f64 - 1.0) / 2.0);
        let (p0, p1) = (truth.poses[frame], truth.poses[frame + 1]);
        // isolated stars only, so windows do not overlap a neighbour
        let pairs: Vec<_> = truth.stars.iter().enumerate()
            .filter(|(i, a)| truth.stars.iter().enumerate().all(|(j, b)| *i == j || a.distance(*b) > 12.0))
            .filter_map(|(_, &sky)| {
                let a = weighted_centroid(&frames[frame], p0.apply(sky, centre), s.background)?;
                let b = weighted_centroid(&frames[frame + 1], p1.apply(sky, centre), s.background)?;
                Some((a, b))
            })
            .collect();
        prop_assume!(pairs.len() >= 20);
        let est = estimate_rigid(&pairs);
        let t = truth.motion(frame, s.width, s.height);
        prop_assert!((est.theta - t.theta).abs().to_degrees() <= 0.1);
        // compare where each transform sends the image centre
        prop_assert!(est.apply(centre).distance(t.apply(centre)) <= 0.1);
    }
}
