//! Synthetic image pairs with known flow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FlowError, Result};
use crate::grid::{gaussian_smooth, sample_bilinear, FlowField, ImagePair, ScalarGrid};
use crate::scalar::{lit, Scalar};

/// Parameters of the smoothed-noise texture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TextureSpec {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Standard deviation of the smoothing kernel, in pixels.
    pub sigma: f64,
    /// Output intensities are rescaled to `[low, high]`.
    pub low: f64,
    pub high: f64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            seed: 7,
            sigma: 1.5,
            low: 0.05,
            high: 0.85,
        }
    }
}

/// A pair of frames together with the flow that maps frame 0 onto frame 1.
#[derive(Clone, Debug)]
pub struct SyntheticCase<T> {
    pub pair: ImagePair<T>,
    pub ground_truth: FlowField<T>,
}

/// Uniform noise smoothed by a Gaussian and rescaled to the requested range.
pub fn texture<T: Scalar>(spec: &TextureSpec) -> Result<ScalarGrid<T>> {
    if !(0.0..=1.0).contains(&spec.low) || !(spec.low < spec.high && spec.high <= 1.0) {
        return Err(FlowError::InvalidParameter(format!(
            "texture range [{}, {}] must be an increasing sub-interval of [0, 1]",
            spec.low, spec.high
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = ScalarGrid::from_fn(spec.width, spec.height, |_, _| rng.gen::<f64>());
    let size = 2 * (3.0 * spec.sigma).ceil() as usize + 1;
    let smooth = gaussian_smooth(&noise, spec.sigma, size)?;
    let (lo, hi) = smooth.min_max();
    let span = if hi > lo { hi - lo } else { 1.0 };
    Ok(smooth
        .map(|v| spec.low + (v - lo) / span * (spec.high - spec.low))
        .cast())
}

/// Renders frame 1 as `frame1(q) = frame0(q - v(q))` with bilinear sampling.
pub fn render_moved<T: Scalar>(frame0: &ScalarGrid<T>, flow: &FlowField<T>) -> ScalarGrid<T> {
    ScalarGrid::from_fn(frame0.width(), frame0.height(), |i, j| {
        let x = lit::<T>(i as f64) - flow.vx.get(i, j);
        let y = lit::<T>(j as f64) - flow.vy.get(i, j);
        sample_bilinear(frame0, x, y)
    })
}

/// Whole-image translation by `(dx, dy)` pixels.
pub fn translation<T: Scalar>(spec: &TextureSpec, dx: f64, dy: f64) -> Result<SyntheticCase<T>> {
    let frame0 = texture::<T>(spec)?;
    let gt = FlowField::constant(spec.width, spec.height, lit(dx), lit(dy));
    let frame1 = render_moved(&frame0, &gt);
    Ok(SyntheticCase {
        pair: ImagePair::new(frame0, frame1)?,
        ground_truth: gt,
    })
}

/// Two-region flow field: the left half moves by `(+1, 0)`, the right half by `(-1, 0)`.
pub fn two_region_flow<T: Scalar>(width: usize, height: usize) -> FlowField<T> {
    let half = width / 2;
    FlowField {
        vx: ScalarGrid::from_fn(width, height, |i, _| if i < half { T::one() } else { -T::one() }),
        vy: ScalarGrid::zeros(width, height),
    }
}

/// Texture moved by [`two_region_flow`].
pub fn two_region<T: Scalar>(spec: &TextureSpec) -> Result<SyntheticCase<T>> {
    let frame0 = texture::<T>(spec)?;
    let gt = two_region_flow(spec.width, spec.height);
    let frame1 = render_moved(&frame0, &gt);
    Ok(SyntheticCase {
        pair: ImagePair::new(frame0, frame1)?,
        ground_truth: gt,
    })
}

/// Adds a constant to frame 1, clamping to `[0, 1]`.
pub fn with_brightness_offset<T: Scalar>(case: &SyntheticCase<T>, offset: f64) -> Result<SyntheticCase<T>> {
    let off = lit::<T>(offset);
    let frame1 = case.pair.frame1.map(|v| (v + off).max(T::zero()).min(T::one()));
    Ok(SyntheticCase {
        pair: ImagePair::new(case.pair.frame0.clone(), frame1)?,
        ground_truth: case.ground_truth.clone(),
    })
}
