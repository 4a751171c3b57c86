//! Endpoint error, Otsu-based sparsity analysis and flow colorization.

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::error::{FlowError, Result};
use crate::grid::{FlowField, ScalarGrid};
use crate::regularizer::{DiagonalConvention, HvdOperator};
use crate::scalar::{to_f64, Scalar};

/// Ground-truth components above this magnitude mark unknown flow.
pub const UNKNOWN_FLOW_THRESHOLD: f64 = 1e9;

/// Whether a flow vector is a valid (known) measurement.
#[inline]
pub fn is_valid_flow(u: f64, v: f64) -> bool {
    u.is_finite() && v.is_finite() && u.abs() <= UNKNOWN_FLOW_THRESHOLD && v.abs() <= UNKNOWN_FLOW_THRESHOLD
}

/// Mean endpoint error over the pixels where `gt` is known.
pub fn mepe<T: Scalar>(v: &FlowField<T>, gt: &FlowField<T>) -> Result<f64> {
    if v.dims() != gt.dims() {
        return Err(FlowError::DimensionMismatch(format!(
            "estimate {:?} vs ground truth {:?}",
            v.dims(),
            gt.dims()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for k in 0..v.vx.len() {
        let (gu, gv) = (to_f64(gt.vx.as_slice()[k]), to_f64(gt.vy.as_slice()[k]));
        if !is_valid_flow(gu, gv) {
            continue;
        }
        let du = to_f64(v.vx.as_slice()[k]) - gu;
        let dv = to_f64(v.vy.as_slice()[k]) - gv;
        total += du.hypot(dv);
        count += 1;
    }
    if count == 0 {
        return Err(FlowError::InvalidParameter("ground truth has no valid pixels".into()));
    }
    Ok(total / count as f64)
}

const OTSU_BINS: usize = 256;

/// Result of Otsu binarization over a set of values.
#[derive(Clone, Debug, PartialEq)]
pub struct OtsuSplit {
    /// Upper edge of the last background bin, in the input units.
    pub threshold: f64,
    /// Foreground flags, one per input value.
    pub foreground: Vec<bool>,
}

impl OtsuSplit {
    pub fn fraction(&self) -> f64 {
        if self.foreground.is_empty() {
            return 0.0;
        }
        self.foreground.iter().filter(|&&f| f).count() as f64 / self.foreground.len() as f64
    }
}

fn bin_of(v: f64, lo: f64, range: f64) -> usize {
    (((v - lo) / range * OTSU_BINS as f64).floor() as usize).min(OTSU_BINS - 1)
}

/// Otsu split of raw values: 256 bins over `[min, max]`, maximizing the
/// between-class variance, ties resolved to the lower threshold.
///
/// A constant input yields its value as threshold and no foreground.
pub fn otsu_split(values: &[f64]) -> OtsuSplit {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if values.is_empty() || !(hi > lo) {
        return OtsuSplit {
            threshold: if values.is_empty() { 0.0 } else { lo },
            foreground: vec![false; values.len()],
        };
    }
    let range = hi - lo;
    let mut hist = [0usize; OTSU_BINS];
    for &v in values {
        hist[bin_of(v, lo, range)] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(b, &c)| b as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best_t, mut best_var) = (0usize, f64::NEG_INFINITY);
    for (t, &c) in hist.iter().enumerate().take(OTSU_BINS - 1) {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let (m0, m1) = (sum0 / w0, (sum_all - sum0) / w1);
        let var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if var > best_var {
            best_var = var;
            best_t = t;
        }
    }
    OtsuSplit {
        threshold: lo + (best_t + 1) as f64 * range / OTSU_BINS as f64,
        foreground: values.iter().map(|&v| bin_of(v, lo, range) > best_t).collect(),
    }
}

/// Otsu threshold of a grid.
pub fn otsu_threshold<T: Scalar>(g: &ScalarGrid<T>) -> f64 {
    let values: Vec<f64> = g.as_slice().iter().map(|&v| to_f64(v)).collect();
    otsu_split(&values).threshold
}

/// Nonzero fraction of one binarized magnitude map.
#[derive(Clone, Debug, PartialEq)]
pub struct MapSparsity {
    pub name: &'static str,
    /// Channel-coupled magnitude `√(|· vx|² + |· vy|²)`.
    pub fraction: f64,
    pub threshold: f64,
    pub fraction_vx: f64,
    pub fraction_vy: f64,
    pub threshold_vx: f64,
    pub threshold_vy: f64,
}

/// Binarized sparsity of the four partial-derivative maps and the gradient magnitude.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsityReport {
    pub width: usize,
    pub height: usize,
    /// `dx`, `dy`, `dxy`, `dyx`, then `grad`.
    pub maps: Vec<MapSparsity>,
    /// Pixels counted in every map.
    pub counted: Vec<bool>,
    /// Coupled binarized maps in the same order as `maps`.
    pub binarized: Vec<Vec<bool>>,
}

impl SparsityReport {
    pub fn gradient(&self) -> &MapSparsity {
        self.maps.last().expect("gradient map present")
    }

    pub fn partials(&self) -> &[MapSparsity] {
        &self.maps[..self.maps.len() - 1]
    }

    /// Each partial map is at most as dense as the gradient map (coupled and per channel).
    pub fn partials_sparser_than_gradient(&self) -> bool {
        let g = self.gradient();
        self.partials().iter().all(|m| {
            m.fraction <= g.fraction && m.fraction_vx <= g.fraction_vx && m.fraction_vy <= g.fraction_vy
        })
    }

    /// Binarized coupled map `index` as an 8-bit image (foreground white).
    pub fn map_image(&self, index: usize) -> GrayImage {
        let map = &self.binarized[index];
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let k = y as usize * self.width + x as usize;
            Luma([if map[k] { 255 } else { 0 }])
        })
    }
}

const MAP_NAMES: [&str; 5] = ["dx", "dy", "dxy", "dyx", "grad"];

/// Builds magnitude maps of `gt`, binarizes each with its own Otsu threshold
/// and reports nonzero fractions over the known pixels.
pub fn sparsity_report<T: Scalar>(gt: &FlowField<T>) -> SparsityReport {
    let (w, h) = gt.dims();
    let n = w * h;
    let valid: Vec<bool> = (0..n)
        .map(|k| is_valid_flow(to_f64(gt.vx.as_slice()[k]), to_f64(gt.vy.as_slice()[k])))
        .collect();
    let clean = |c: &ScalarGrid<T>| {
        ScalarGrid::from_fn(w, h, |i, j| {
            let k = j * w + i;
            if valid[k] {
                to_f64(c.as_slice()[k])
            } else {
                0.0
            }
        })
    };
    let (vx, vy) = (clean(&gt.vx), clean(&gt.vy));
    // a pixel counts when its whole 2x2 forward footprint is known
    let counted: Vec<bool> = (0..n)
        .map(|k| {
            let (i, j) = ((k % w) as isize, (k / w) as isize);
            [(0, 0), (1, 0), (0, 1), (1, 1)].iter().all(|&(di, dj)| {
                let ci = (i + di).min(w as isize - 1) as usize;
                let cj = (j + dj).min(h as isize - 1) as usize;
                valid[cj * w + ci]
            })
        })
        .collect();

    let responses: Vec<(ScalarGrid<f64>, ScalarGrid<f64>)> = HvdOperator::ALL
        .iter()
        .map(|op| {
            let s = op.stencil(DiagonalConvention::Mirrored);
            (s.apply(&vx), s.apply(&vy))
        })
        .collect();
    let channel_grad = |dx: &ScalarGrid<f64>, dy: &ScalarGrid<f64>| dx.zip_map(dy, |a, b| a.hypot(b));
    let gx = channel_grad(&responses[0].0, &responses[1].0);
    let gy = channel_grad(&responses[0].1, &responses[1].1);

    let mut per_map: Vec<(ScalarGrid<f64>, ScalarGrid<f64>)> =
        responses.iter().map(|(a, b)| (a.map(f64::abs), b.map(f64::abs))).collect();
    per_map.push((gx, gy));

    let gather = |g: &ScalarGrid<f64>| -> Vec<f64> {
        g.as_slice()
            .iter()
            .zip(&counted)
            .filter(|(_, &c)| c)
            .map(|(&v, _)| v)
            .collect()
    };
    let scatter = |split: &OtsuSplit| -> Vec<bool> {
        let mut it = split.foreground.iter();
        counted.iter().map(|&c| c && *it.next().unwrap()).collect()
    };

    let mut maps = Vec::with_capacity(5);
    let mut binarized = Vec::with_capacity(5);
    for (name, (mx, my)) in MAP_NAMES.iter().zip(&per_map) {
        let coupled = mx.zip_map(my, |a, b| a.hypot(b));
        let sc = otsu_split(&gather(&coupled));
        let sx = otsu_split(&gather(mx));
        let sy = otsu_split(&gather(my));
        maps.push(MapSparsity {
            name,
            fraction: sc.fraction(),
            threshold: sc.threshold,
            fraction_vx: sx.fraction(),
            fraction_vy: sy.fraction(),
            threshold_vx: sx.threshold,
            threshold_vy: sy.threshold,
        });
        binarized.push(scatter(&sc));
    }
    SparsityReport {
        width: w,
        height: h,
        maps,
        counted,
        binarized,
    }
}

const WHEEL_SEGMENTS: [usize; 6] = [15, 6, 4, 11, 13, 6];

/// The 55-entry flow color wheel (red, yellow, green, cyan, blue, magenta sectors).
pub fn color_wheel() -> Vec<[u8; 3]> {
    let [ry, yg, gc, cb, bm, mr] = WHEEL_SEGMENTS;
    let ramp = |i: usize, n: usize| (255 * i / n) as u8;
    let mut wheel = Vec::with_capacity(55);
    wheel.extend((0..ry).map(|i| [255, ramp(i, ry), 0]));
    wheel.extend((0..yg).map(|i| [255 - ramp(i, yg), 255, 0]));
    wheel.extend((0..gc).map(|i| [0, 255, ramp(i, gc)]));
    wheel.extend((0..cb).map(|i| [0, 255 - ramp(i, cb), 255]));
    wheel.extend((0..bm).map(|i| [ramp(i, bm), 0, 255]));
    wheel.extend((0..mr).map(|i| [255, 0, 255 - ramp(i, mr)]));
    wheel
}

/// Continuous wheel position of the direction of `(u, v)`, in `[0, 54)`.
pub fn hue_position(u: f64, v: f64) -> f64 {
    let span = (color_wheel().len() - 1) as f64;
    let a = (-v).atan2(-u) / std::f64::consts::PI;
    ((a + 1.0) / 2.0 * span).rem_euclid(span)
}

fn flow_color(wheel: &[[u8; 3]], u: f64, v: f64) -> [u8; 3] {
    let rad = u.hypot(v);
    let fk = hue_position(u, v);
    let k0 = fk.floor() as usize;
    let k1 = (k0 + 1) % wheel.len();
    let f = fk - k0 as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        let c0 = wheel[k0][c] as f64 / 255.0;
        let c1 = wheel[k1][c] as f64 / 255.0;
        let mut col = (1.0 - f) * c0 + f * c1;
        if rad <= 1.0 {
            col = 1.0 - rad * (1.0 - col);
        } else {
            col *= 0.75;
        }
        out[c] = (255.0 * col).floor() as u8;
    }
    out
}

/// Magnitude normalization for [`colorize_flow`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MaxMagnitude {
    Fixed(f64),
    /// 99th percentile of the known flow magnitudes.
    Auto,
}

fn percentile_99(mut mags: Vec<f64>) -> f64 {
    if mags.is_empty() {
        return 0.0;
    }
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((mags.len() - 1) as f64 * 0.99).round() as usize;
    mags[idx]
}

/// Hue encodes direction and saturation encodes `|v| / max_mag`; zero flow is
/// white and unknown flow is black.
pub fn colorize_flow<T: Scalar>(v: &FlowField<T>, max_mag: MaxMagnitude) -> RgbImage {
    let (w, h) = v.dims();
    let pairs: Vec<(f64, f64)> = v
        .vx
        .as_slice()
        .iter()
        .zip(v.vy.as_slice())
        .map(|(&a, &b)| (to_f64(a), to_f64(b)))
        .collect();
    let scale = match max_mag {
        MaxMagnitude::Fixed(m) => m,
        MaxMagnitude::Auto => percentile_99(
            pairs
                .iter()
                .filter(|(a, b)| is_valid_flow(*a, *b))
                .map(|(a, b)| a.hypot(*b))
                .collect(),
        ),
    };
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let wheel = color_wheel();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (a, b) = pairs[y as usize * w + x as usize];
        if !is_valid_flow(a, b) {
            return Rgb([0, 0, 0]);
        }
        Rgb(flow_color(&wheel, a / scale, b / scale))
    })
}
