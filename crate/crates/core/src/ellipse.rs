//! Temporal max-reduction and moment-based ellipse statistics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ccl::CCStats;
use crate::error::{Error, Result};
use crate::ingest::GrayFrame;
use crate::scalar::Real;

/// Per-pixel maximum over a window of `2r + 1` frames, indexed like the
/// centre frame.
pub fn max_reduce(frames: &[GrayFrame], r: usize) -> Result<GrayFrame> {
    if frames.len() != 2 * r + 1 {
        return Err(Error::Window(format!(
            "expected {} frames for radius {r}, got {}",
            2 * r + 1,
            frames.len()
        )));
    }
    let centre = &frames[r];
    let mut out = centre.clone();
    for f in frames {
        if f.dims() != centre.dims() {
            return Err(Error::Window(format!(
                "frame {} is {:?}, window is {:?}",
                f.index,
                f.dims(),
                centre.dims()
            )));
        }
        for (o, &p) in out.pixels.iter_mut().zip(&f.pixels) {
            *o = (*o).max(p);
        }
    }
    Ok(out)
}

/// Semi-axes of the moment ellipse and their ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipseStats<T> {
    pub a: T,
    pub b: T,
    /// `a / b`; infinite when `b == 0`, 1 for a single pixel.
    pub rho: T,
}

/// Ellipse from the second-order central moments of a component.
///
/// Radii are two standard deviations along the principal axes:
/// `a = 2√λ1`, `b = 2√λ2` with `λ1 ≥ λ2` the eigenvalues of the covariance.
pub fn ellipse_axes<T: Real>(cc: &CCStats) -> EllipseStats<T> {
    if cc.surface <= 1 {
        return EllipseStats {
            a: T::zero(),
            b: T::zero(),
            rho: T::one(),
        };
    }
    // moments scaled by S^2 stay exact; determinant zero <=> collinear pixels
    let (cxx, cyy, cxy) = cc.scaled_central_moments();
    let det_zero = cxx * cyy == cxy * cxy;
    let s2 = T::from_int(i128::from(cc.surface) * i128::from(cc.surface));
    let (m20, m02, m11) = (
        T::from_int(cxx) / s2,
        T::from_int(cyy) / s2,
        T::from_int(cxy) / s2,
    );
    let two = T::lit(2.0);
    let half_trace = (m20 + m02) / two;
    let radius = ((m20 - m02) / two).hypot(m11);
    let l1 = half_trace + radius;
    let l2 = if det_zero {
        T::zero()
    } else {
        (half_trace - radius).max(T::zero())
    };
    let a = two * l1.sqrt();
    let b = two * l2.sqrt();
    let rho = if b == T::zero() { T::infinity() } else { a / b };
    EllipseStats { a, b, rho }
}

/// Counts of finite flatness ratios in bins `[1 + i·w, 1 + (i+1)·w)`;
/// infinite ratios land in `overflow`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatnessHistogram<T> {
    pub bin_width: T,
    pub counts: Vec<u64>,
    pub overflow: u64,
}

impl<T: Real> FlatnessHistogram<T> {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.overflow
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// `(lower, upper, count)` for every non-empty bin.
    pub fn bins(&self) -> impl Iterator<Item = (T, T, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(move |(i, &c)| {
                let lo = T::one() + T::from_usize(i).unwrap() * self.bin_width;
                (lo, lo + self.bin_width, c)
            })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("rho_lo,rho_hi,count\n");
        for (lo, hi, c) in self.bins() {
            writeln!(out, "{lo},{hi},{c}").unwrap();
        }
        if self.overflow > 0 {
            writeln!(out, "inf,inf,{}", self.overflow).unwrap();
        }
        out
    }

    /// Minimal bar chart of the non-empty bins plus the overflow bin.
    pub fn to_svg(&self) -> String {
        let mut bars: Vec<(String, u64)> = self
            .bins()
            .map(|(lo, hi, c)| (format!("[{lo},{hi})"), c))
            .collect();
        if self.overflow > 0 {
            bars.push(("inf".into(), self.overflow));
        }
        let (bar_w, plot_h) = (40usize, 200usize);
        let width = bar_w * bars.len().max(1) + 20;
        let peak = bars.iter().map(|b| b.1).max().unwrap_or(1).max(1);
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{}\">\n",
            plot_h + 40
        );
        for (i, (name, count)) in bars.iter().enumerate() {
            let h = (*count as f64 / peak as f64 * plot_h as f64).round() as usize;
            let x = 10 + i * bar_w;
            writeln!(
                svg,
                "  <rect x=\"{x}\" y=\"{}\" width=\"{}\" height=\"{h}\" fill=\"steelblue\"><title>{name}: {count}</title></rect>",
                10 + plot_h - h,
                bar_w - 4
            )
            .unwrap();
            writeln!(
                svg,
                "  <text x=\"{}\" y=\"{}\" font-size=\"9\" text-anchor=\"middle\">{name}</text>",
                x + bar_w / 2 - 2,
                plot_h + 25
            )
            .unwrap();
        }
        svg.push_str("</svg>\n");
        svg
    }
}

pub fn flatness_histogram<T: Real>(
    stats: &[EllipseStats<T>],
    bin_width: T,
) -> FlatnessHistogram<T> {
    assert!(bin_width > T::zero(), "bin width must be positive");
    let mut hist = FlatnessHistogram {
        bin_width,
        counts: Vec::new(),
        overflow: 0,
    };
    for s in stats {
        if !s.rho.is_finite() {
            hist.overflow += 1;
            continue;
        }
        let i = ((s.rho - T::one()) / bin_width)
            .floor()
            .max(T::zero())
            .to_usize()
            .unwrap_or(0);
        if hist.counts.len() <= i {
            hist.counts.resize(i + 1, 0);
        }
        hist.counts[i] += 1;
    }
    hist
}
