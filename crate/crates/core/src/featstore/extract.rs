use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::Path;

use image::codecs::pnm::{PnmDecoder, PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageDecoder, ImageEncoder};

use super::{FeatureError, FeatureMap};

/// Channels produced by [`extract_features`]: intensity, |Sobel-x|,
/// |Sobel-y|, |Laplacian|, 3×3 variance, 3×3 max, 3×3 min, high-pass
/// residual.
pub const FILTER_BANK_SIZE: usize = 8;

/// 8-bit grayscale image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self, FeatureError> {
        if height < 3 || width < 3 {
            return Err(FeatureError::Image(format!(
                "image must be at least 3×3, got {height}×{width}"
            )));
        }
        if pixels.len() != height * width {
            return Err(FeatureError::Image(format!(
                "{height}×{width} image needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        Ok(Self { height, width, pixels })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self, FeatureError> {
        let pixels = (0..height).flat_map(|y| (0..width).map(move |x| (y, x))).map(|(y, x)| f(y, x)).collect();
        Self::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// 3×3 box blur with clamped borders, rounded to nearest.
    pub fn box_blur(&self) -> GrayImage {
        let px = |y: isize, x: isize| -> u32 {
            let yy = y.clamp(0, self.height as isize - 1) as usize;
            let xx = x.clamp(0, self.width as isize - 1) as usize;
            self.get(yy, xx) as u32
        };
        let pixels = (0..self.height as isize)
            .flat_map(|y| (0..self.width as isize).map(move |x| (y, x)))
            .map(|(y, x)| {
                let mut s = 0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        s += px(y + dy, x + dx);
                    }
                }
                ((s + 4) / 9) as u8
            })
            .collect();
        GrayImage {
            height: self.height,
            width: self.width,
            pixels,
        }
    }
}

/// Cell index of every source coordinate: equal cells of `len / cells`
/// pixels, the remainder going to the last cell.
fn cell_index(len: usize, cells: usize) -> Vec<usize> {
    let size = len / cells;
    (0..len).map(|i| (i / size).min(cells - 1)).collect()
}

/// Runs the fixed 8-filter bank over `img` and average-pools each response
/// to `height×width`.
pub fn extract_features(img: &GrayImage, target: (usize, usize, usize)) -> Result<FeatureMap, FeatureError> {
    let (c, th, tw) = target;
    if c != FILTER_BANK_SIZE {
        return Err(FeatureError::Invalid(format!(
            "filter bank has {FILTER_BANK_SIZE} channels, target asked for {c}"
        )));
    }
    let (h, w) = (img.height, img.width);
    if th == 0 || tw == 0 || th > h || tw > w {
        return Err(FeatureError::Invalid(format!(
            "target {th}×{tw} must be within image {h}×{w}"
        )));
    }

    let rows = cell_index(h, th);
    let cols = cell_index(w, tw);
    let mut counts = vec![0u32; th * tw];
    for &r in &rows {
        for &cc in &cols {
            counts[r * tw + cc] += 1;
        }
    }

    let plane = th * tw;
    let mut acc = vec![0.0f64; FILTER_BANK_SIZE * plane];
    let norm = |v: u8| v as f64 / 255.0;

    #[allow(clippy::needless_range_loop)]
    for y in 0..h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        let row_prev = &img.pixels[ym * w..(ym + 1) * w];
        let row = &img.pixels[y * w..(y + 1) * w];
        let row_next = &img.pixels[yp * w..(yp + 1) * w];
        let cell_row = rows[y] * tw;
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            let n = [
                norm(row_prev[xm]),
                norm(row_prev[x]),
                norm(row_prev[xp]),
                norm(row[xm]),
                norm(row[x]),
                norm(row[xp]),
                norm(row_next[xm]),
                norm(row_next[x]),
                norm(row_next[xp]),
            ];
            let center = n[4];
            let sobel_x = (n[2] + 2.0 * n[5] + n[8]) - (n[0] + 2.0 * n[3] + n[6]);
            let sobel_y = (n[6] + 2.0 * n[7] + n[8]) - (n[0] + 2.0 * n[1] + n[2]);
            let laplacian = n[1] + n[3] + n[5] + n[7] - 4.0 * center;
            let mean = n.iter().sum::<f64>() / 9.0;
            let mean_sq = n.iter().map(|v| v * v).sum::<f64>() / 9.0;
            let variance = (mean_sq - mean * mean).max(0.0);
            let max = n.iter().copied().fold(f64::MIN, f64::max);
            let min = n.iter().copied().fold(f64::MAX, f64::min);
            let responses = [
                center,
                sobel_x.abs(),
                sobel_y.abs(),
                laplacian.abs(),
                variance,
                max,
                min,
                center - mean,
            ];
            let cell = cell_row + cols[x];
            for (ch, r) in responses.iter().enumerate() {
                acc[ch * plane + cell] += r;
            }
        }
    }

    for ch in 0..FILTER_BANK_SIZE {
        for (cell, &count) in counts.iter().enumerate() {
            acc[ch * plane + cell] /= count as f64;
        }
    }
    FeatureMap::from_f64(FILTER_BANK_SIZE, th, tw, &acc)
}

/// Reads a binary (P5) 8-bit PGM.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage, FeatureError> {
    let path = path.as_ref();
    let io_err = |source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut magic = [0u8; 2];
    reader.read_exact(&mut magic).map_err(io_err)?;
    if &magic != b"P5" {
        return Err(FeatureError::Image(format!("{}: not a binary PGM (P5)", path.display())));
    }
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let decoder = PnmDecoder::new(reader).map_err(|e| FeatureError::Image(e.to_string()))?;
    if decoder.color_type() != image::ColorType::L8 {
        return Err(FeatureError::Image(format!(
            "{}: expected 8-bit grayscale, got {:?}",
            path.display(),
            decoder.color_type()
        )));
    }
    let (w, h) = decoder.dimensions();
    let mut pixels = vec![0u8; decoder.total_bytes() as usize];
    decoder.read_image(&mut pixels).map_err(|e| FeatureError::Image(e.to_string()))?;
    GrayImage::new(h as usize, w as usize, pixels)
}

pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), FeatureError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    PnmEncoder::new(BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&img.pixels, img.width as u32, img.height as u32, ExtendedColorType::L8)
        .map_err(|e| FeatureError::Image(e.to_string()))
}
