//! Full-reference image quality: PSNR and single-scale SSIM.
//!
//! SSIM uses the usual reference convention: an 11x11 Gaussian window with
//! standard deviation 1.5, `C1 = (0.01 R)^2`, `C2 = (0.03 R)^2`. Windows are
//! evaluated only where they fit entirely inside the image (no padding), and
//! the per-channel means are averaged.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::io::read_raw;

pub const DEFAULT_RANGE: f64 = 255.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

/// Pixels stored as `height x width x channels`, each in `[0, range]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pixels: Array3<f64>,
    range: f64,
}

impl ImageBuffer {
    pub fn new(pixels: Array3<f64>, range: f64) -> Result<Self> {
        let (h, w, c) = pixels.dim();
        if h == 0 || w == 0 {
            return Err(Error::ShapeMismatch(format!("image must be at least 1x1, got {w}x{h}")));
        }
        if c != 1 && c != 3 {
            return Err(Error::ShapeMismatch(format!("image needs 1 or 3 channels, got {c}")));
        }
        if !(range > 0.0 && range.is_finite()) {
            return Err(Error::InvalidParameter(format!("dynamic range must be positive, got {range}")));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=range).contains(*v)) {
            return Err(Error::InvalidParameter(format!("pixel value {v} outside [0, {range}]")));
        }
        Ok(Self { pixels, range })
    }

    /// Single-channel image from row-major values.
    pub fn gray(width: usize, height: usize, values: Vec<f64>, range: f64) -> Result<Self> {
        Self::from_interleaved(width, height, 1, values, range)
    }

    /// Row-major pixels with channels interleaved (`RGBRGB...`).
    pub fn from_interleaved(width: usize, height: usize, channels: usize, values: Vec<f64>, range: f64) -> Result<Self> {
        let len = values.len();
        let pixels = Array3::from_shape_vec((height, width, channels), values).map_err(|_| {
            Error::ShapeMismatch(format!("{len} values do not fill a {width}x{height}x{channels} image"))
        })?;
        Self::new(pixels, range)
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn channels(&self) -> usize {
        self.pixels.dim().2
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn pixels(&self) -> &Array3<f64> {
        &self.pixels
    }

    fn channel(&self, c: usize) -> ArrayView2<'_, f64> {
        self.pixels.index_axis(Axis(2), c)
    }
}

fn check_pair(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if a.pixels.dim() != b.pixels.dim() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    if a.range != b.range {
        return Err(Error::RangeMismatch(a.range, b.range));
    }
    Ok(())
}

/// `10 log10(R^2 / MSE)` over all pixels and channels; `f64::INFINITY` when
/// the images are identical.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_pair(a, b)?;
    let mse = a
        .pixels
        .iter()
        .zip(b.pixels.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.pixels.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (a.range * a.range / mse).log10())
}

/// Normalized 2D Gaussian window.
fn gaussian_window() -> Array2<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|k| (-((k as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = g.iter().sum();
    Array2::from_shape_fn((SSIM_WINDOW, SSIM_WINDOW), |(i, j)| g[i] * g[j] / (total * total))
}

/// Mean SSIM over all valid window positions, averaged across channels.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_pair(a, b)?;
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(Error::TooSmall(format!(
            "{}x{} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window",
            a.width(),
            a.height()
        )));
    }
    let c1 = (0.01 * a.range).powi(2);
    let c2 = (0.03 * a.range).powi(2);
    let win = gaussian_window();
    let total: f64 = (0..a.channels())
        .map(|c| ssim_channel(a.channel(c), b.channel(c), &win, c1, c2))
        .sum();
    Ok(total / a.channels() as f64)
}

fn ssim_channel(a: ArrayView2<f64>, b: ArrayView2<f64>, win: &Array2<f64>, c1: f64, c2: f64) -> f64 {
    let (h, w) = a.dim();
    let k = SSIM_WINDOW;
    let mut sum = 0.0;
    for top in 0..=h - k {
        for left in 0..=w - k {
            let pa = a.slice(ndarray::s![top..top + k, left..left + k]);
            let pb = b.slice(ndarray::s![top..top + k, left..left + k]);
            let mu_a = (&pa * win).sum();
            let mu_b = (&pb * win).sum();
            // Centered second moments; exact zeros on flat patches.
            let mut var_a = 0.0;
            let mut var_b = 0.0;
            let mut cov = 0.0;
            for ((x, y), wt) in pa.iter().zip(pb.iter()).zip(win.iter()) {
                let (dx, dy) = (x - mu_a, y - mu_b);
                var_a += wt * dx * dx;
                var_b += wt * dy * dy;
                cov += wt * dx * dy;
            }
            sum += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        }
    }
    sum / ((h - k + 1) * (w - k + 1)) as f64
}

/// Reads a plain-text PGM (`P2`) or PPM (`P3`) file. The declared maximum
/// value becomes the dynamic range.
pub fn read_pnm(path: &Path) -> Result<ImageBuffer> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pnm(&text, path)
}

pub fn parse_pnm(text: &str, path: &Path) -> Result<ImageBuffer> {
    let bad = |line: usize, msg: String| Error::MalformedFile {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut tokens = text.lines().enumerate().flat_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("");
        l.split_whitespace().map(move |t| (i + 1, t))
    });
    let channels = match tokens.next() {
        Some((_, "P2")) => 1,
        Some((_, "P3")) => 3,
        Some((line, t)) => return Err(bad(line, format!("expected P2 or P3, found {t:?}"))),
        None => return Err(Error::EmptyFile(path.to_path_buf())),
    };
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        let (line, t) = tokens.next().ok_or_else(|| bad(1, format!("missing {name}")))?;
        *slot = t.parse().map_err(|_| bad(line, format!("invalid {name} {t:?}")))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 || maxval == 0 {
        return Err(bad(1, "width, height and maxval must be positive".into()));
    }
    let expected = width * height * channels;
    let mut values = Vec::with_capacity(expected);
    let mut last_line = 1;
    for (line, t) in tokens {
        last_line = line;
        let v: usize = t.parse().map_err(|_| bad(line, format!("invalid sample {t:?}")))?;
        if v > maxval {
            return Err(bad(line, format!("sample {v} exceeds maxval {maxval}")));
        }
        values.push(v as f64);
    }
    if values.len() != expected {
        return Err(bad(last_line, format!("expected {expected} samples, found {}", values.len())));
    }
    ImageBuffer::from_interleaved(width, height, channels, values, maxval as f64)
}

/// Writes a plain-text PGM or PPM; pixel values are rounded to integers.
pub fn write_pnm<W: Write>(img: &ImageBuffer, w: &mut W) -> std::io::Result<()> {
    let magic = if img.channels() == 1 { "P2" } else { "P3" };
    writeln!(w, "{magic}\n{} {}\n{}", img.width(), img.height(), img.range().round() as u64)?;
    for row in img.pixels.outer_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{}", v.round() as u64)).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Reads an image stored in the raw-f64 embedding container: one row per
/// image row, `width * channels` interleaved values per row.
pub fn read_raw_image<R: Read>(r: &mut R, path: &Path, channels: usize, range: f64) -> Result<ImageBuffer> {
    let (values, _) = read_raw(r, path)?;
    let (height, cols) = values.dim();
    if channels == 0 || cols % channels != 0 {
        return Err(Error::ShapeMismatch(format!(
            "{path:?}: row length {cols} is not a multiple of {channels} channels"
        )));
    }
    let flat: Vec<f64> = values.iter().copied().collect();
    ImageBuffer::from_interleaved(cols / channels, height, channels, flat, range)
}

/// Loads a `.pgm`/`.ppm` text image, or otherwise a raw-f64 container.
pub fn load_image(path: &Path, channels: usize, range: f64) -> Result<ImageBuffer> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("pgm") | Some("ppm") | Some("pnm") => read_pnm(path),
        _ => {
            let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
            read_raw_image(&mut std::io::BufReader::new(file), path, channels, range)
        }
    }
}
