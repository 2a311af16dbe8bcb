use std::sync::OnceLock;

use super::{FeatureError, FeatureVector};
use crate::image::Image;

pub const LBP_RADIUS: usize = 1;
pub const LBP_NEIGHBORS: usize = 8;

/// Neighbour offsets in bit order: clockwise in image coordinates
/// (y pointing down), starting east.
const OFFSETS: [(isize, isize); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HistogramKind {
    /// One bin per 8-bit code.
    #[default]
    Raw,
    /// 58 uniform patterns (at most two circular 0/1 transitions) plus one
    /// bin shared by all other codes.
    Uniform,
}

impl HistogramKind {
    pub fn bins(self) -> usize {
        match self {
            HistogramKind::Raw => 256,
            HistogramKind::Uniform => 59,
        }
    }
}

fn uniform_table() -> &'static [u8; 256] {
    static TABLE: OnceLock<[u8; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [58u8; 256];
        let mut next = 0u8;
        for code in 0..=255u8 {
            if (code ^ code.rotate_right(1)).count_ones() <= 2 {
                table[code as usize] = next;
                next += 1;
            }
        }
        debug_assert_eq!(next, 58);
        table
    })
}

/// Bin index of `code` in the uniform-pattern histogram.
pub fn uniform_bin(code: u8) -> usize {
    uniform_table()[code as usize] as usize
}

/// Parameters of the patch LBP histogram extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorConfig {
    keypoints: Vec<[f64; 2]>,
    patch_size: usize,
    histogram: HistogramKind,
}

impl ExtractorConfig {
    pub fn new(
        keypoints: Vec<[f64; 2]>,
        patch_size: usize,
        histogram: HistogramKind,
    ) -> Result<Self, FeatureError> {
        if patch_size < 3 || patch_size.is_multiple_of(2) {
            return Err(FeatureError::InvalidConfig(format!(
                "patch size must be odd and >= 3, got {patch_size}"
            )));
        }
        if let Some(i) = keypoints
            .iter()
            .position(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(FeatureError::InvalidConfig(format!(
                "key point {i} is not finite"
            )));
        }
        Ok(Self {
            keypoints,
            patch_size,
            histogram,
        })
    }

    /// `cols x rows` key points spread evenly over a `width x height` crop,
    /// inset by half a patch from every edge.
    pub fn grid(
        cols: usize,
        rows: usize,
        width: usize,
        height: usize,
        patch_size: usize,
        histogram: HistogramKind,
    ) -> Result<Self, FeatureError> {
        let margin = (patch_size / 2 + LBP_RADIUS) as f64;
        let axis = |n: usize, extent: usize| -> Vec<f64> {
            let lo = margin;
            let hi = extent as f64 - 1.0 - margin;
            match n {
                0 => vec![],
                1 => vec![((lo + hi) / 2.0).round()],
                _ => (0..n)
                    .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).round())
                    .collect(),
            }
        };
        let xs = axis(cols, width);
        let ys = axis(rows, height);
        let keypoints = ys
            .iter()
            .flat_map(|&y| xs.iter().map(move |&x| [x, y]))
            .collect();
        Self::new(keypoints, patch_size, histogram)
    }

    pub fn keypoints(&self) -> &[[f64; 2]] {
        &self.keypoints
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn histogram(&self) -> HistogramKind {
        self.histogram
    }

    pub fn bins(&self) -> usize {
        self.histogram.bins()
    }

    pub fn dim(&self) -> usize {
        self.keypoints.len() * self.bins()
    }

    /// Checks that every key point lies inside a `width x height` frame.
    pub fn validate_frame(&self, width: usize, height: usize) -> Result<(), FeatureError> {
        let (w, h) = (width as f64, height as f64);
        match self
            .keypoints
            .iter()
            .position(|p| p[0] < 0.0 || p[1] < 0.0 || p[0] > w - 1.0 || p[1] > h - 1.0)
        {
            Some(i) => Err(FeatureError::InvalidConfig(format!(
                "key point {i} at {:?} lies outside the {width}x{height} frame",
                self.keypoints[i]
            ))),
            None => Ok(()),
        }
    }
}

impl Default for ExtractorConfig {
    /// 8x10 key-point grid over the 128x160 crop, 15 pixel patches.
    fn default() -> Self {
        Self::grid(8, 10, 128, 160, 15, HistogramKind::Raw).expect("valid default")
    }
}

#[inline]
fn code_unchecked(pixels: &[f32], width: usize, x: usize, y: usize) -> u8 {
    let center = pixels[y * width + x];
    let mut code = 0u8;
    for (bit, (dx, dy)) in OFFSETS.iter().enumerate() {
        let nx = (x as isize + dx) as usize;
        let ny = (y as isize + dy) as usize;
        if pixels[ny * width + nx] >= center {
            code |= 1 << bit;
        }
    }
    code
}

/// 8-neighbour LBP code at `(x, y)` of a grayscale image. Bit `i` is set
/// when neighbour `i` is greater than or equal to the centre.
pub fn lbp_code(image: &Image, x: usize, y: usize) -> Result<u8, FeatureError> {
    let (w, h) = (image.width(), image.height());
    if x < LBP_RADIUS || y < LBP_RADIUS || x + LBP_RADIUS >= w || y + LBP_RADIUS >= h {
        return Err(FeatureError::OutOfBounds {
            x,
            y,
            radius: LBP_RADIUS,
            width: w,
            height: h,
        });
    }
    let gray;
    let img = if image.channels() == 1 {
        image
    } else {
        gray = image.to_gray();
        &gray
    };
    Ok(code_unchecked(img.pixels(), w, x, y))
}

/// Interior window of `patch_size` centred on `center`, or `None` when it
/// does not intersect the image interior.
fn window(
    width: usize,
    height: usize,
    center: [f64; 2],
    patch_size: usize,
) -> Option<(usize, usize, usize, usize)> {
    if width < 2 * LBP_RADIUS + 1 || height < 2 * LBP_RADIUS + 1 {
        return None;
    }
    let half = (patch_size / 2) as i64;
    let cx = center[0].round() as i64;
    let cy = center[1].round() as i64;
    let r = LBP_RADIUS as i64;
    let x0 = (cx - half).max(r);
    let x1 = (cx + half).min(width as i64 - 1 - r);
    let y0 = (cy - half).max(r);
    let y1 = (cy + half).min(height as i64 - 1 - r);
    if x0 > x1 || y0 > y1 {
        None
    } else {
        Some((x0 as usize, x1 as usize, y0 as usize, y1 as usize))
    }
}

fn histogram_into(
    out: &mut [f64],
    codes: impl Iterator<Item = u8>,
    kind: HistogramKind,
) {
    let mut total = 0usize;
    for code in codes {
        let bin = match kind {
            HistogramKind::Raw => code as usize,
            HistogramKind::Uniform => uniform_bin(code),
        };
        out[bin] += 1.0;
        total += 1;
    }
    if total > 0 {
        let inv = total as f64;
        out.iter_mut().for_each(|v| *v /= inv);
    }
}

/// L1-normalized LBP histogram over the patch centred on `center`
/// (rounded to the nearest pixel). The window is clamped to pixels that
/// have a full neighbourhood; an empty window yields an all-zero histogram.
pub fn extract_patch_histogram(
    image: &Image,
    center: [f64; 2],
    config: &ExtractorConfig,
) -> FeatureVector {
    let gray = image.to_gray();
    let mut hist = vec![0.0; config.bins()];
    if let Some((x0, x1, y0, y1)) =
        window(gray.width(), gray.height(), center, config.patch_size)
    {
        let px = gray.pixels();
        let w = gray.width();
        let codes = (y0..=y1).flat_map(|y| (x0..=x1).map(move |x| code_unchecked(px, w, x, y)));
        histogram_into(&mut hist, codes, config.histogram);
    }
    FeatureVector {
        pipeline_id: "HLBP".to_string(),
        values: hist,
    }
}

/// Concatenated patch histograms at every configured key point.
pub fn extract_hdlbp(
    image: &Image,
    config: &ExtractorConfig,
    pipeline_id: &str,
) -> Result<FeatureVector, FeatureError> {
    if config.keypoints.is_empty() {
        return Err(FeatureError::EmptyKeypoints);
    }
    let gray = image.to_gray();
    let (w, h) = (gray.width(), gray.height());
    // code map over the interior, computed once and shared by all patches
    let mut codes = vec![0u8; w * h];
    if w > 2 * LBP_RADIUS && h > 2 * LBP_RADIUS {
        let px = gray.pixels();
        for y in LBP_RADIUS..h - LBP_RADIUS {
            for x in LBP_RADIUS..w - LBP_RADIUS {
                codes[y * w + x] = code_unchecked(px, w, x, y);
            }
        }
    }
    let bins = config.bins();
    let mut values = vec![0.0; config.keypoints.len() * bins];
    for (block, &kp) in values.chunks_exact_mut(bins).zip(&config.keypoints) {
        if let Some((x0, x1, y0, y1)) = window(w, h, kp, config.patch_size) {
            let it = (y0..=y1).flat_map(|y| codes[y * w + x0..=y * w + x1].iter().copied());
            histogram_into(block, it, config.histogram);
        }
    }
    Ok(FeatureVector {
        pipeline_id: pipeline_id.to_string(),
        values,
    })
}
