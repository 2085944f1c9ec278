//! Frame loading and pipeline configuration.
//!
//! Frames are 8-bit grayscale images exchanged as binary PGM (`P5`,
//! maxval 255). A sequence is a directory of such files, ordered by
//! filename.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ccl::Connectivity;
use crate::error::{Error, Result};

/// One 8-bit grayscale image of a sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayFrame {
    pub index: usize,
    pub width: usize,
    pub height: usize,
    /// Row-major intensities, `width * height` long.
    pub pixels: Vec<u8>,
}

impl GrayFrame {
    pub fn new(index: usize, width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Config(format!(
                "frame {index}: {} pixels for a {width}x{height} frame",
                pixels.len()
            )));
        }
        Ok(Self {
            index,
            width,
            height,
            pixels,
        })
    }

    pub fn filled(index: usize, width: usize, height: usize, value: u8) -> Self {
        Self::new(index, width, height, vec![value; width * height]).expect("valid dimensions")
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[u8] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Serialize as binary PGM (`P5`, maxval 255).
pub fn encode_pgm(frame: &GrayFrame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.pixels);
    out
}

pub fn write_pgm(path: impl AsRef<Path>, frame: &GrayFrame) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_pgm(frame))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Parse a binary PGM. `index` becomes the frame index.
pub fn decode_pgm(bytes: &[u8], index: usize, path: &Path) -> Result<GrayFrame> {
    let bad = |reason: &str| Error::BadImage {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad("not a binary PGM (missing P5 magic)"));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // whitespace and `#` comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("malformed header field"))?;
    }
    // exactly one whitespace byte separates header and raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("malformed header terminator"));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedBitDepth {
            path: path.to_path_buf(),
            maxval,
        });
    }
    let (width, height) = (width as usize, height as usize);
    if width == 0 || height == 0 {
        return Err(bad("zero dimension"));
    }
    let raster = &bytes[pos..];
    if raster.len() < width * height {
        return Err(bad("truncated raster"));
    }
    GrayFrame::new(index, width, height, raster[..width * height].to_vec())
}

pub fn read_pgm(path: impl AsRef<Path>, index: usize) -> Result<GrayFrame> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, index, path)
}

/// Read an 8-bit grayscale PNG. Colour and 16-bit images are rejected
/// rather than converted.
pub fn read_png(path: impl AsRef<Path>, index: usize) -> Result<GrayFrame> {
    let path = path.as_ref();
    let bad = |reason: String| Error::BadImage {
        path: path.to_path_buf(),
        reason,
    };
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| bad(e.to_string()))?;
    match img {
        image::DynamicImage::ImageLuma8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            GrayFrame::new(index, w, h, buf.into_raw())
        }
        image::DynamicImage::ImageLuma16(_) => Err(Error::UnsupportedBitDepth {
            path: path.to_path_buf(),
            maxval: 65535,
        }),
        other => Err(bad(format!(
            "not an 8-bit grayscale image ({:?})",
            other.color()
        ))),
    }
}

/// Read a frame, choosing the decoder from the file extension: `.png`
/// (any case) is PNG, everything else PGM.
pub fn read_frame(path: impl AsRef<Path>, index: usize) -> Result<GrayFrame> {
    let path = path.as_ref();
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        read_png(path, index)
    } else {
        read_pgm(path, index)
    }
}

/// Ordered, lazily decoded frame sequence.
///
/// Yields frames with contiguous indices from 0. The first frame fixes the
/// dimensions; a later mismatch yields an error and ends the stream.
#[derive(Debug)]
pub struct FrameSequence {
    paths: Vec<PathBuf>,
    next: usize,
    dims: Option<(usize, usize)>,
    failed: bool,
}

impl FrameSequence {
    pub fn paths(&self) -> &[PathBuf] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

impl Iterator for FrameSequence {
    type Item = Result<GrayFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.next >= self.paths.len() {
            return None;
        }
        let index = self.next;
        self.next += 1;
        let frame = read_frame(&self.paths[index], index).and_then(|f| match self.dims {
            Some(expected) if expected != f.dims() => Err(Error::DimensionMismatch {
                index,
                expected,
                got: f.dims(),
            }),
            _ => {
                self.dims = Some(f.dims());
                Ok(f)
            }
        });
        if frame.is_err() {
            self.failed = true;
        }
        Some(frame)
    }
}

/// Open the frames in `dir` whose filenames match the glob `pattern`,
/// sorted lexicographically by filename.
pub fn load_sequence(dir: impl AsRef<Path>, pattern: &str) -> Result<FrameSequence> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::MissingDirectory(dir.to_path_buf()));
    }
    let matcher = glob::Pattern::new(pattern).map_err(|_| Error::BadPattern(pattern.into()))?;
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok())
        .filter(|entry| entry.file_type().map(|t| t.is_file()).unwrap_or(false))
        .filter_map(|entry| entry.file_name().into_string().ok())
        .filter(|name| matcher.matches(name))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::NoFramesMatched {
            dir: dir.to_path_buf(),
            pattern: pattern.to_string(),
        });
    }
    Ok(FrameSequence {
        paths: names.into_iter().map(|n| dir.join(n)).collect(),
        next: 0,
        dims: None,
        failed: false,
    })
}

/// Tunable parameters of the detection chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Low hysteresis threshold: pixels strictly above it are candidates.
    pub tau_low: u8,
    /// High hysteresis threshold: a kept component needs a pixel above it.
    pub tau_high: u8,
    pub s_min: u64,
    pub s_max: u64,
    pub knn_k: usize,
    /// Largest accepted max(S_a, S_b) / min(S_a, S_b) for an association.
    pub knn_ratio_max: f64,
    /// Outlier rule multiplier: moving iff |e_k - mean| > sigma_factor * std.
    pub sigma_factor: f64,
    pub angle_max_deg: f64,
    pub extrap_max: usize,
    pub maxred_radius: usize,
    pub connectivity: Connectivity,
    /// Consecutive moving observations that promote a candidate to meteor.
    pub track_min_consecutive: usize,
    /// Consecutive stationary observations that promote a candidate to star.
    pub star_min_frames: usize,
    /// Largest mean distance to the fitted line for a meteor track (pixels).
    pub residual_max: f64,
    /// Smallest motion-compensated step (pixels/frame) that counts as moving.
    pub move_min: f64,
    /// Largest distance (pixels) between an extrapolated position and a
    /// detection for the track to reacquire it.
    pub reacquire_dist: f64,
    pub ellipse: bool,
    pub rho_bin_width: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        default_config()
    }
}

pub fn default_config() -> PipelineConfig {
    PipelineConfig {
        tau_low: 55,
        tau_high: 70,
        s_min: 3,
        s_max: 1000,
        knn_k: 3,
        knn_ratio_max: 3.0,
        sigma_factor: 1.0,
        angle_max_deg: 20.0,
        extrap_max: 3,
        maxred_radius: 2,
        connectivity: Connectivity::Eight,
        track_min_consecutive: 3,
        star_min_frames: 15,
        residual_max: 1.0,
        move_min: 1.0,
        reacquire_dist: 5.0,
        ellipse: false,
        rho_bin_width: 0.5,
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.tau_low >= self.tau_high {
            return fail("thr-low must be < thr-high");
        }
        if self.s_min > self.s_max {
            return fail("surface-min must be <= surface-max");
        }
        if self.knn_k < 1 {
            return fail("knn-k must be >= 1");
        }
        if !at_least(self.knn_ratio_max, 1.0) {
            return fail("knn-ratio must be >= 1");
        }
        if !positive(self.sigma_factor) || !self.sigma_factor.is_finite() {
            return fail("sigma-factor must be > 0");
        }
        if !at_least(self.angle_max_deg, 0.0) {
            return fail("angle-max must be >= 0");
        }
        if self.track_min_consecutive < 1 {
            return fail("track-min must be >= 1");
        }
        if self.star_min_frames < 1 {
            return fail("star-min must be >= 1");
        }
        if !at_least(self.residual_max, 0.0) {
            return fail("residual-max must be >= 0");
        }
        if !at_least(self.move_min, 0.0) || !at_least(self.reacquire_dist, 0.0) {
            return fail("move-min and reacquire-dist must be >= 0");
        }
        if !positive(self.rho_bin_width) {
            return fail("rho-bin-width must be > 0");
        }
        Ok(())
    }

    /// Parse `key = value` lines (TOML syntax); missing keys keep defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
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
