//! The horizontal-vertical-diagonal (HVD) flow regularizer, its TV baselines,
//! and the Huber smoothing that makes them differentiable.
//!
//! Every operator here is a clamped-boundary [`Stencil`], so its transpose is
//! exact. The two flow channels are coupled under one magnitude per operator:
//! `Σ_D Σ_p w(p) · H(√((D vx)² + (D vy)²))`.

use crate::error::{FlowError, Result};
use crate::grid::{FlowField, ScalarGrid, Stencil};
use crate::scalar::{lit, Scalar};

/// Huber smoothing threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HuberParams {
    epsilon: f64,
}

impl HuberParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(FlowError::InvalidParameter(format!(
                "Huber epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl Default for HuberParams {
    fn default() -> Self {
        Self { epsilon: 0.01 }
    }
}

/// Huber norm: `x²/2ε` inside `[-ε, ε]`, `|x| - ε/2` outside.
#[inline]
pub fn huber_value<T: Scalar>(x: T, eps: T) -> T {
    let a = x.abs();
    if a <= eps {
        x * x / (eps + eps)
    } else {
        a - eps / lit(2.0)
    }
}

/// Derivative of [`huber_value`]: `x / max(|x|, ε)`.
#[inline]
pub fn huber_deriv<T: Scalar>(x: T, eps: T) -> T {
    x / x.abs().max(eps)
}

/// Per-pixel regularization weights in `(0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub enum RegularizerWeights<T> {
    Uniform,
    PerPixel(ScalarGrid<T>),
}

impl<T: Scalar> RegularizerWeights<T> {
    pub fn per_pixel(w: ScalarGrid<T>) -> Result<Self> {
        if let Some(i) = w
            .as_slice()
            .iter()
            .position(|&v| !(v > T::zero() && v <= T::one()))
        {
            return Err(FlowError::InvalidParameter(format!(
                "regularizer weight at index {i} is outside (0, 1]"
            )));
        }
        Ok(Self::PerPixel(w))
    }

    #[inline]
    fn at(&self, k: usize) -> T {
        match self {
            Self::Uniform => T::one(),
            Self::PerPixel(w) => w.as_slice()[k],
        }
    }

    fn check(&self, dims: (usize, usize)) -> Result<()> {
        match self {
            Self::PerPixel(w) if w.dims() != dims => Err(FlowError::DimensionMismatch(format!(
                "weights {:?} vs flow {:?}",
                w.dims(),
                dims
            ))),
            _ => Ok(()),
        }
    }
}

/// Stencil used for the 135° diagonal continuity term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DiagonalConvention {
    /// `∇y g(i, j) - ∇x g(i, j+1)`, the mirror image of the 45° term.
    #[default]
    Mirrored,
    /// `∇y g(i, j) - ∇x g(i, j)`, both derivatives taken at the same pixel.
    SamePixel,
}

/// One of the four operators in the HVD energy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HvdOperator {
    X,
    Y,
    Xy,
    Yx,
}

impl HvdOperator {
    pub const ALL: [HvdOperator; 4] = [Self::X, Self::Y, Self::Xy, Self::Yx];

    pub fn stencil(self, convention: DiagonalConvention) -> Stencil {
        match self {
            Self::X => Stencil::forward_x(),
            Self::Y => Stencil::forward_y(),
            Self::Xy => diagonal_45(),
            Self::Yx => match convention {
                DiagonalConvention::Mirrored => diagonal_135(),
                DiagonalConvention::SamePixel => Stencil::new(&[(0, 1, 1.0), (1, 0, -1.0)]),
            },
        }
    }
}

// ∇x g(i, j) - ∇y g(i+1, j)
fn diagonal_45() -> Stencil {
    Stencil::new(&[(1, 0, 1.0), (0, 0, -1.0), (1, 1, -1.0), (1, 0, 1.0)])
}

// ∇y g(i, j) - ∇x g(i, j+1)
fn diagonal_135() -> Stencil {
    Stencil::new(&[(0, 1, 1.0), (0, 0, -1.0), (1, 1, -1.0), (0, 1, 1.0)])
}

fn second_xx_stencil() -> Stencil {
    // ∇x g(i, j+1) - ∇x g(i, j)
    Stencil::new(&[(1, 1, 1.0), (0, 1, -1.0), (1, 0, -1.0), (0, 0, 1.0)])
}

fn second_yy_stencil() -> Stencil {
    // ∇y g(i+1, j) - ∇y g(i, j)
    Stencil::new(&[(1, 1, 1.0), (1, 0, -1.0), (0, 1, -1.0), (0, 0, 1.0)])
}

/// 45° diagonal continuity difference.
pub fn diff_xy<T: Scalar>(g: &ScalarGrid<T>) -> ScalarGrid<T> {
    diagonal_45().apply(g)
}

/// 135° diagonal continuity difference (mirrored convention).
pub fn diff_yx<T: Scalar>(g: &ScalarGrid<T>) -> ScalarGrid<T> {
    diagonal_135().apply(g)
}

/// Vertical-boundary continuity `∇x g(i, j+1) - ∇x g(i, j)`.
///
/// Not part of the HVD energy; it coincides with [`second_diff_yy`].
pub fn second_diff_xx<T: Scalar>(g: &ScalarGrid<T>) -> ScalarGrid<T> {
    second_xx_stencil().apply(g)
}

/// Horizontal-boundary continuity `∇y g(i+1, j) - ∇y g(i, j)`.
pub fn second_diff_yy<T: Scalar>(g: &ScalarGrid<T>) -> ScalarGrid<T> {
    second_yy_stencil().apply(g)
}

/// Configured HVD regularizer.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Hvd {
    pub huber: HuberParams,
    pub convention: DiagonalConvention,
}

impl Hvd {
    pub fn new(huber: HuberParams) -> Self {
        Self {
            huber,
            convention: DiagonalConvention::default(),
        }
    }

    pub fn with_convention(mut self, convention: DiagonalConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn energy<T: Scalar>(&self, v: &FlowField<T>, weights: &RegularizerWeights<T>) -> Result<T> {
        weights.check(v.dims())?;
        let eps: T = lit(self.huber.epsilon());
        let mut total = T::zero();
        for op in HvdOperator::ALL {
            let s = op.stencil(self.convention);
            let rx = s.apply(&v.vx);
            let ry = s.apply(&v.vy);
            for (k, (&a, &b)) in rx.as_slice().iter().zip(ry.as_slice()).enumerate() {
                total = total + weights.at(k) * huber_value(a.hypot(b), eps);
            }
        }
        Ok(total)
    }

    pub fn gradient<T: Scalar>(
        &self,
        v: &FlowField<T>,
        weights: &RegularizerWeights<T>,
    ) -> Result<FlowField<T>> {
        weights.check(v.dims())?;
        let eps: T = lit(self.huber.epsilon());
        let (w, h) = v.dims();
        let mut gx = ScalarGrid::zeros(w, h);
        let mut gy = ScalarGrid::zeros(w, h);
        for op in HvdOperator::ALL {
            let s = op.stencil(self.convention);
            let mut rx = s.apply(&v.vx);
            let mut ry = s.apply(&v.vy);
            for (k, (a, b)) in rx
                .as_mut_slice()
                .iter_mut()
                .zip(ry.as_mut_slice().iter_mut())
                .enumerate()
            {
                let scale = weights.at(k) / a.hypot(*b).max(eps);
                *a = *a * scale;
                *b = *b * scale;
            }
            accumulate(&mut gx, &s.apply_adjoint(&rx));
            accumulate(&mut gy, &s.apply_adjoint(&ry));
        }
        Ok(FlowField { vx: gx, vy: gy })
    }
}

fn accumulate<T: Scalar>(acc: &mut ScalarGrid<T>, add: &ScalarGrid<T>) {
    for (a, &b) in acc.as_mut_slice().iter_mut().zip(add.as_slice()) {
        *a = *a + b;
    }
}

/// Huber-smoothed HVD energy with the default diagonal convention.
pub fn hvd_energy<T: Scalar>(
    v: &FlowField<T>,
    params: HuberParams,
    weights: &RegularizerWeights<T>,
) -> Result<T> {
    Hvd::new(params).energy(v, weights)
}

/// Exact gradient of [`hvd_energy`].
pub fn hvd_gradient<T: Scalar>(
    v: &FlowField<T>,
    params: HuberParams,
    weights: &RegularizerWeights<T>,
) -> Result<FlowField<T>> {
    Hvd::new(params).gradient(v, weights)
}

/// Total-variation baselines, applied to each flow channel separately.
#[derive(Clone, Debug, PartialEq)]
pub enum TvVariant<T> {
    /// `H(√(∇x² + ∇y²))`
    Isotropic,
    /// `H(|∇x|) + H(|∇y|)`
    Anisotropic,
    /// Anisotropic with per-pixel weights.
    WeightedAnisotropic(RegularizerWeights<T>),
}

pub fn tv_energy<T: Scalar>(v: &FlowField<T>, params: HuberParams, variant: &TvVariant<T>) -> Result<T> {
    let eps: T = lit(params.epsilon());
    let mut total = T::zero();
    for c in [&v.vx, &v.vy] {
        let dx = Stencil::forward_x().apply(c);
        let dy = Stencil::forward_y().apply(c);
        for (k, (&a, &b)) in dx.as_slice().iter().zip(dy.as_slice()).enumerate() {
            total = total
                + match variant {
                    TvVariant::Isotropic => huber_value(a.hypot(b), eps),
                    TvVariant::Anisotropic => huber_value(a, eps) + huber_value(b, eps),
                    TvVariant::WeightedAnisotropic(w) => {
                        w.at(k) * (huber_value(a, eps) + huber_value(b, eps))
                    }
                };
        }
    }
    Ok(total)
}

pub fn tv_gradient<T: Scalar>(
    v: &FlowField<T>,
    params: HuberParams,
    variant: &TvVariant<T>,
) -> Result<FlowField<T>> {
    if let TvVariant::WeightedAnisotropic(w) = variant {
        w.check(v.dims())?;
    }
    let eps: T = lit(params.epsilon());
    let sx = Stencil::forward_x();
    let sy = Stencil::forward_y();
    let channel = |c: &ScalarGrid<T>| {
        let mut dx = sx.apply(c);
        let mut dy = sy.apply(c);
        for (k, (a, b)) in dx
            .as_mut_slice()
            .iter_mut()
            .zip(dy.as_mut_slice().iter_mut())
            .enumerate()
        {
            match variant {
                TvVariant::Isotropic => {
                    let s = T::one() / a.hypot(*b).max(eps);
                    *a = *a * s;
                    *b = *b * s;
                }
                TvVariant::Anisotropic => {
                    *a = huber_deriv(*a, eps);
                    *b = huber_deriv(*b, eps);
                }
                TvVariant::WeightedAnisotropic(w) => {
                    *a = w.at(k) * huber_deriv(*a, eps);
                    *b = w.at(k) * huber_deriv(*b, eps);
                }
            }
        }
        let mut g = sx.apply_adjoint(&dx);
        accumulate(&mut g, &sy.apply_adjoint(&dy));
        g
    };
    Ok(FlowField {
        vx: channel(&v.vx),
        vy: channel(&v.vy),
    })
}

/// Edge-stopping weights `exp(-α |∇I|^β)` from forward-difference gradients of `frame`.
pub fn adaptive_weights<T: Scalar>(frame: &ScalarGrid<T>, alpha: f64, beta: f64) -> Result<RegularizerWeights<T>> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(FlowError::InvalidParameter(format!(
            "adaptive weight parameters must be positive, got alpha={alpha}, beta={beta}"
        )));
    }
    let dx = Stencil::forward_x().apply(frame);
    let dy = Stencil::forward_y().apply(frame);
    let (a, b): (T, T) = (lit(alpha), lit(beta));
    let w = dx.zip_map(&dy, |gx, gy| {
        (-a * gx.hypot(gy).powf(b)).exp().max(T::min_positive_value())
    });
    RegularizerWeights::per_pixel(w)
}
