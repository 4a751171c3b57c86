//! 2-D grids, flow fields and the image-processing primitives built on them.
//!
//! Index convention: `i` runs along the horizontal axis (columns) and `j`
//! along the vertical axis (rows). Storage is row-major, so pixel `(i, j)`
//! lives at `j * width + i`.

mod diff;
mod filter;
mod interp;
mod pyramid;

pub use diff::{
    adjoint_diff_x, adjoint_diff_y, central_diff_x, central_diff_y, forward_diff_x,
    forward_diff_y, Stencil,
};
pub use filter::{gaussian_kernel, gaussian_smooth, high_pass};
pub use interp::{resample_bilinear, sample_bilinear, upsample_flow, warp_backward, Warped};
pub use pyramid::{build_pyramid, Pyramid};

use crate::error::{FlowError, Result};
use crate::scalar::{lit, Scalar};

/// Single-channel 2-D field stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarGrid<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
}

impl<T: Scalar> ScalarGrid<T> {
    /// Builds a grid, checking the length and finiteness invariants.
    pub fn new(width: usize, height: usize, values: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(FlowError::EmptyGrid { width, height });
        }
        if values.len() != width * height {
            return Err(FlowError::LengthMismatch {
                width,
                height,
                expected: width * height,
                actual: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(FlowError::NonFinite { index });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Builds a grid from a per-pixel function of `(i, j)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be positive");
        let mut values = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                values.push(f(i, j));
            }
        }
        Self {
            width,
            height,
            values,
        }
    }

    pub fn constant(width: usize, height: usize, value: T) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, T::zero())
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.width, self.height)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn same_dims(&self, other: &Self) -> bool {
        self.dims() == other.dims()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[j * self.width + i]
    }

    /// Value at `(i, j)` with both coordinates clamped into the grid.
    #[inline]
    pub fn get_clamped(&self, i: isize, j: isize) -> T {
        let ci = i.clamp(0, self.width as isize - 1) as usize;
        let cj = j.clamp(0, self.height as isize - 1) as usize;
        self.values[cj * self.width + ci]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        let w = self.width;
        self.values[j * w + i] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-wise combination of two grids of equal size.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert!(self.same_dims(other), "zip_map on grids of different size");
        Self {
            width: self.width,
            height: self.height,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.values.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / lit(self.len() as f64)
    }

    pub fn dot(&self, other: &Self) -> T {
        assert!(self.same_dims(other), "dot on grids of different size");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn min_max(&self) -> (T, T) {
        self.values
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ScalarGrid<U> {
        ScalarGrid {
            width: self.width,
            height: self.height,
            values: self
                .values
                .iter()
                .map(|&v| U::from(v).expect("scalar cast"))
                .collect(),
        }
    }
}

/// Dense flow field: horizontal and vertical displacement in pixels/frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField<T> {
    pub vx: ScalarGrid<T>,
    pub vy: ScalarGrid<T>,
}

impl<T: Scalar> FlowField<T> {
    pub fn new(vx: ScalarGrid<T>, vy: ScalarGrid<T>) -> Result<Self> {
        if !vx.same_dims(&vy) {
            return Err(FlowError::DimensionMismatch(format!(
                "flow components {:?} and {:?}",
                vx.dims(),
                vy.dims()
            )));
        }
        Ok(Self { vx, vy })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            vx: ScalarGrid::zeros(width, height),
            vy: ScalarGrid::zeros(width, height),
        }
    }

    pub fn constant(width: usize, height: usize, vx: T, vy: T) -> Self {
        Self {
            vx: ScalarGrid::constant(width, height, vx),
            vy: ScalarGrid::constant(width, height, vy),
        }
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.vx.dims()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.vx.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.vx.height()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            vx: self.vx.zip_map(&other.vx, |a, b| a + b),
            vy: self.vy.zip_map(&other.vy, |a, b| a + b),
        }
    }

    pub fn cast<U: Scalar>(&self) -> FlowField<U> {
        FlowField {
            vx: self.vx.cast(),
            vy: self.vy.cast(),
        }
    }
}

/// Two consecutive frames with intensities normalized to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePair<T> {
    pub frame0: ScalarGrid<T>,
    pub frame1: ScalarGrid<T>,
}

impl<T: Scalar> ImagePair<T> {
    pub fn new(frame0: ScalarGrid<T>, frame1: ScalarGrid<T>) -> Result<Self> {
        if !frame0.same_dims(&frame1) {
            return Err(FlowError::DimensionMismatch(format!(
                "frames {:?} and {:?}",
                frame0.dims(),
                frame1.dims()
            )));
        }
        for frame in [&frame0, &frame1] {
            if let Some((index, &value)) = frame
                .as_slice()
                .iter()
                .enumerate()
                .find(|(_, &v)| v < T::zero() || v > T::one())
            {
                return Err(FlowError::IntensityRange {
                    index,
                    value: value.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(Self { frame0, frame1 })
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.frame0.dims()
    }
}
