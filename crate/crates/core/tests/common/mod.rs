//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};
use std::path::PathBuf;

use fmdt::ccl::{BinaryMask, CCStats, Connectivity};
use fmdt::detect::Detection;
use fmdt::geometry::Point;
use fmdt::ingest::GrayFrame;
use rand::Rng;

pub fn specs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../specs")
}

pub fn random_mask(rng: &mut impl Rng, w: usize, h: usize, density: f64) -> BinaryMask {
    let mut m = BinaryMask::new(w, h);
    for v in &mut m.data {
        *v = rng.random::<f64>() < density;
    }
    m
}

pub fn random_frame(rng: &mut impl Rng, w: usize, h: usize) -> GrayFrame {
    let pixels = (0..w * h).map(|_| rng.random::<u8>()).collect();
    GrayFrame::new(0, w, h, pixels).unwrap()
}

/// Smooth-ish frame: random bright blobs over a noisy floor, so that
/// hysteresis has non-trivial components.
pub fn blobby_frame(rng: &mut impl Rng, w: usize, h: usize) -> GrayFrame {
    let mut px: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.0..60.0)).collect();
    for _ in 0..rng.random_range(1..12) {
        let (cx, cy) = (
            rng.random_range(0.0..w as f64),
            rng.random_range(0.0..h as f64),
        );
        let (amp, s) = (rng.random_range(20.0..200.0), rng.random_range(0.6..4.0));
        for y in 0..h {
            for x in 0..w {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                px[y * w + x] += amp * (-d2 / (2.0 * s * s)).exp();
            }
        }
    }
    let pixels = px
        .into_iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    GrayFrame::new(0, w, h, pixels).unwrap()
}

fn neighbours(conn: Connectivity) -> &'static [(i64, i64)] {
    match conn {
        Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
        Connectivity::Eight => &[
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ],
    }
}

/// Breadth-first flood fill over pixels where `inside` holds, starting at
/// each seed not yet visited. Returns the pixel sets in seed order.
fn flood(
    w: usize,
    h: usize,
    conn: Connectivity,
    inside: impl Fn(usize, usize) -> bool,
    seeds: impl Iterator<Item = (usize, usize)>,
) -> Vec<Vec<(usize, usize)>> {
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for (sx, sy) in seeds {
        if seen[sy * w + sx] || !inside(sx, sy) {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([(sx, sy)]);
        seen[sy * w + sx] = true;
        while let Some((x, y)) = queue.pop_front() {
            comp.push((x, y));
            for &(dx, dy) in neighbours(conn) {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                if !seen[ny * w + nx] && inside(nx, ny) {
                    seen[ny * w + nx] = true;
                    queue.push_back((nx, ny));
                }
            }
        }
        out.push(comp);
    }
    out
}

fn raster(w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..h).flat_map(move |y| (0..w).map(move |x| (x, y)))
}

/// Label image by flood fill, labels numbered in raster order of each
/// component's first pixel.
pub fn flood_fill_labels(mask: &BinaryMask, conn: Connectivity) -> (Vec<u32>, u32) {
    let (w, h) = (mask.width, mask.height);
    let comps = flood(w, h, conn, |x, y| mask.get(x, y), raster(w, h));
    let mut img = vec![0u32; w * h];
    for (i, c) in comps.iter().enumerate() {
        for &(x, y) in c {
            img[y * w + x] = i as u32 + 1;
        }
    }
    (img, comps.len() as u32)
}

/// Per-pixel moment accumulation over a label image.
pub fn pixel_moments(labels: &[u32], w: usize, n: u32) -> Vec<CCStats> {
    let mut out: Vec<CCStats> = (1..=n)
        .map(|label| CCStats {
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
        })
        .collect();
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let (x, y) = ((i % w) as u64, (i / w) as u64);
        let s = &mut out[l as usize - 1];
        s.surface += 1;
        s.sx += x;
        s.sy += y;
        s.sx2 += x * x;
        s.sy2 += y * y;
        s.sxy += x * y;
        s.x_min = s.x_min.min(x as u32);
        s.y_min = s.y_min.min(y as u32);
        s.x_max = s.x_max.max(x as u32);
        s.y_max = s.y_max.max(y as u32);
    }
    out
}

/// Seeded region growing: grow from every pixel above `hi` through pixels
/// above `lo`.
pub fn region_grow(
    frame: &GrayFrame,
    lo: u8,
    hi: u8,
    conn: Connectivity,
) -> BTreeSet<Vec<(usize, usize)>> {
    let (w, h) = frame.dims();
    let seeds: Vec<_> = raster(w, h)
        .filter(|&(x, y)| frame.get(x, y) > hi)
        .collect();
    flood(w, h, conn, |x, y| frame.get(x, y) > lo, seeds.into_iter())
        .into_iter()
        .map(|mut c| {
            c.sort_unstable();
            c
        })
        .collect()
}

/// Pixel sets of the seeded low-threshold components, from a label image.
pub fn seeded_pixel_sets(labels: &[u32], w: usize, keep: &[u32]) -> BTreeSet<Vec<(usize, usize)>> {
    let keep: BTreeSet<u32> = keep.iter().copied().collect();
    let mut sets: std::collections::BTreeMap<u32, Vec<(usize, usize)>> = Default::default();
    for (i, &l) in labels.iter().enumerate() {
        if keep.contains(&l) {
            sets.entry(l).or_default().push((i % w, i / w));
        }
    }
    sets.into_values()
        .map(|mut c| {
            c.sort_unstable();
            c
        })
        .collect()
}

/// Detection with a single-pixel footprint of the given surface at (x, y).
pub fn det_at(label: u32, x: f64, y: f64, surface: u64) -> Detection {
    // scale to integer sums: centroid = sx / surface
    let sx = (x * surface as f64).round() as u64;
    let sy = (y * surface as f64).round() as u64;
    Detection {
        cc: CCStats {
            label,
            surface,
            x_min: x as u32,
            y_min: y as u32,
            x_max: x as u32,
            y_max: y as u32,
            sx,
            sy,
            sx2: 0,
            sy2: 0,
            sxy: 0,
        },
        frame_index: 0,
        has_high_pixel: true,
    }
}

/// Every constrained matching of maximum cardinality with the smallest
/// total distance, as `(total, pairs)`. Exhaustive over injective partial
/// assignments; use only with a handful of detections.
pub fn best_matchings(
    src: &[Detection],
    dst: &[Detection],
    allowed: &dyn Fn(usize, usize) -> bool,
) -> Vec<(f64, Vec<(usize, usize)>)> {
    fn rec(
        i: usize,
        src: &[Detection],
        dst: &[Detection],
        allowed: &dyn Fn(usize, usize) -> bool,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        out: &mut Vec<(f64, Vec<(usize, usize)>)>,
    ) {
        if i == src.len() {
            let total = cur
                .iter()
                .map(|&(a, b)| {
                    let (ax, ay) = src[a].centroid();
                    let (bx, by) = dst[b].centroid();
                    (ax - bx).hypot(ay - by)
                })
                .sum();
            out.push((total, cur.clone()));
            return;
        }
        rec(i + 1, src, dst, allowed, used, cur, out);
        for j in 0..dst.len() {
            if !used[j] && allowed(i, j) {
                used[j] = true;
                cur.push((i, j));
                rec(i + 1, src, dst, allowed, used, cur, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut all = Vec::new();
    rec(
        0,
        src,
        dst,
        allowed,
        &mut vec![false; dst.len()],
        &mut Vec::new(),
        &mut all,
    );
    let max_len = all.iter().map(|m| m.1.len()).max().unwrap_or(0);
    all.retain(|m| m.1.len() == max_len);
    let best = all.iter().map(|m| m.0).fold(f64::INFINITY, f64::min);
    all.retain(|m| m.0 <= best + 1e-9);
    all
}

/// Apply `theta`, `t` to a point: R·p + t.
pub fn rigid(p: Point<f64>, theta: f64, t: Point<f64>) -> Point<f64> {
    p.rotate(theta) + t
}

pub fn rms(pairs: &[(Point<f64>, Point<f64>)]) -> f64 {
    (pairs
        .iter()
        .map(|(a, b)| (*a - *b).norm().powi(2))
        .sum::<f64>()
        / pairs.len() as f64)
        .sqrt()
}
