//! Linearized data terms: brightness constancy (OFC), gradient constancy
//! (GCA) and the generalized dynamic image model (GDIM).
//!
//! Every system is a stack of per-pixel rows `a · u(p) = y`, where `u(p)`
//! collects the unknown blocks at pixel `p` (`vx, vy` and, for GDIM, the
//! contrast multiplier `d` and brightness offset `c`). The residual is always
//! `r = a · u - y` and the penalty is `Σ H(r)`.

use crate::error::{FlowError, Result};
use crate::grid::{central_diff_x, central_diff_y, warp_backward, FlowField, ImagePair, ScalarGrid};
use crate::regularizer::{huber_deriv, huber_value};
use crate::scalar::{lit, Scalar};
use crate::selection::MeasurementMask;

/// Which data term to assemble.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DataKind {
    #[default]
    Ofc,
    Gca,
    Gdim,
}

impl DataKind {
    /// Number of per-pixel unknown blocks.
    pub fn n_blocks(self) -> usize {
        match self {
            Self::Ofc | Self::Gca => 2,
            Self::Gdim => 4,
        }
    }
}

impl std::str::FromStr for DataKind {
    type Err = FlowError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ofc" => Ok(Self::Ofc),
            "gca" => Ok(Self::Gca),
            "gdim" => Ok(Self::Gdim),
            other => Err(FlowError::InvalidParameter(format!("unknown data term '{other}'"))),
        }
    }
}

impl std::fmt::Display for DataKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ofc => "ofc",
            Self::Gca => "gca",
            Self::Gdim => "gdim",
        })
    }
}

/// Second-order spatial and spatiotemporal derivatives used by GCA.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondOrder<T> {
    pub ixx: ScalarGrid<T>,
    pub ixy: ScalarGrid<T>,
    pub iyx: ScalarGrid<T>,
    pub iyy: ScalarGrid<T>,
    pub ixt: ScalarGrid<T>,
    pub iyt: ScalarGrid<T>,
}

/// Intensity derivatives of one image pair, linearized around a flow estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeStack<T> {
    pub ix: ScalarGrid<T>,
    pub iy: ScalarGrid<T>,
    pub it: ScalarGrid<T>,
    pub second: Option<SecondOrder<T>>,
    /// Reference intensity (frame 0).
    pub intensity: ScalarGrid<T>,
    /// Pixels whose warped sample fell outside frame 1.
    pub oob: Vec<bool>,
}

impl<T: Scalar> DerivativeStack<T> {
    pub fn dims(&self) -> (usize, usize) {
        self.ix.dims()
    }

    pub fn len(&self) -> usize {
        self.ix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ix.is_empty()
    }

    /// Per-pixel derivative strength used to rank measurements.
    ///
    /// First-order gradient magnitude; when second-order grids are present the
    /// larger of the two gradient-constancy row magnitudes.
    pub fn significance(&self) -> Vec<T> {
        match &self.second {
            None => self
                .ix
                .as_slice()
                .iter()
                .zip(self.iy.as_slice())
                .map(|(&a, &b)| a.hypot(b))
                .collect(),
            Some(s) => (0..self.len())
                .map(|k| {
                    let r1 = s.ixx.as_slice()[k].hypot(s.ixy.as_slice()[k]);
                    let r2 = s.iyx.as_slice()[k].hypot(s.iyy.as_slice()[k]);
                    r1.max(r2)
                })
                .collect(),
        }
    }
}

/// Warps frame 1 by `flow` and estimates the derivatives a data term needs.
///
/// Spatial derivatives are central differences of the average of frame 0
/// and the warped frame 1; the temporal derivative is their difference.
/// Second-order grids are central differences of the first-order ones and
/// are only filled for [`DataKind::Gca`].
pub fn compute_derivatives<T: Scalar>(
    pair: &ImagePair<T>,
    flow: &FlowField<T>,
    kind: DataKind,
) -> Result<DerivativeStack<T>> {
    if pair.dims() != flow.dims() {
        return Err(FlowError::DimensionMismatch(format!(
            "image pair {:?} vs flow {:?}",
            pair.dims(),
            flow.dims()
        )));
    }
    let warped = warp_backward(&pair.frame1, flow);
    let half: T = lit(0.5);
    let avg = pair.frame0.zip_map(&warped.image, |a, b| (a + b) * half);
    let ix = central_diff_x(&avg);
    let iy = central_diff_y(&avg);
    let it = warped.image.zip_map(&pair.frame0, |a, b| a - b);
    let second = (kind == DataKind::Gca).then(|| SecondOrder {
        ixx: central_diff_x(&ix),
        ixy: central_diff_y(&ix),
        iyx: central_diff_x(&iy),
        iyy: central_diff_y(&iy),
        ixt: central_diff_x(&it),
        iyt: central_diff_y(&it),
    });
    Ok(DerivativeStack {
        ix,
        iy,
        it,
        second,
        intensity: pair.frame0.clone(),
        oob: warped.out_of_bounds,
    })
}

/// One equation of a data system: `Σ_b coef[b] · u_b(pixel) = rhs`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataRow<T> {
    pub pixel: usize,
    pub coef: [T; 4],
    pub rhs: T,
}

/// Masked linear data system with per-pixel diagonal blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct DataTermSystem<T> {
    pub kind: DataKind,
    width: usize,
    height: usize,
    rows: Vec<DataRow<T>>,
}

impl<T: Scalar> DataTermSystem<T> {
    pub fn new(kind: DataKind, width: usize, height: usize, rows: Vec<DataRow<T>>) -> Self {
        Self {
            kind,
            width,
            height,
            rows,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn n_blocks(&self) -> usize {
        self.kind.n_blocks()
    }

    pub fn rows(&self) -> &[DataRow<T>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Re-expresses the system in terms of `base + du`: rows keep their
    /// coefficients and the right-hand side absorbs `a · base`.
    ///
    /// A system linearized around `base` for an increment then takes the
    /// total flow as its unknown.
    pub fn anchor_at(&mut self, base: &FlowField<T>) {
        assert_eq!(base.dims(), self.dims(), "anchor flow must match system size");
        for row in &mut self.rows {
            row.rhs = row.rhs
                + row.coef[0] * base.vx.as_slice()[row.pixel]
                + row.coef[1] * base.vy.as_slice()[row.pixel];
        }
    }

    fn check(&self, u: &Unknowns<T>) -> Result<()> {
        if u.dims() != self.dims() || u.n_blocks() != self.n_blocks() {
            return Err(FlowError::DimensionMismatch(format!(
                "{} system {:?} with {} blocks vs unknowns {:?} with {} blocks",
                self.kind,
                self.dims(),
                self.n_blocks(),
                u.dims(),
                u.n_blocks()
            )));
        }
        Ok(())
    }

    #[inline]
    fn row_dot(&self, row: &DataRow<T>, u: &Unknowns<T>) -> T {
        let n = self.width * self.height;
        let values = u.as_slice();
        (0..self.n_blocks()).fold(T::zero(), |acc, b| acc + row.coef[b] * values[b * n + row.pixel])
    }

    /// `A u`, one entry per row.
    pub fn apply(&self, u: &Unknowns<T>) -> Result<Vec<T>> {
        self.check(u)?;
        Ok(self.rows.iter().map(|r| self.row_dot(r, u)).collect())
    }

    /// `Aᵀ s` for a per-row vector `s`.
    pub fn apply_transpose(&self, s: &[T]) -> Unknowns<T> {
        assert_eq!(s.len(), self.rows.len(), "one value per row expected");
        let n = self.width * self.height;
        let mut out = Unknowns::zeros(self.width, self.height, self.n_blocks());
        let values = out.as_mut_slice();
        for (row, &v) in self.rows.iter().zip(s) {
            for b in 0..self.n_blocks() {
                values[b * n + row.pixel] = values[b * n + row.pixel] + row.coef[b] * v;
            }
        }
        out
    }

    /// Residuals `A u - y`.
    pub fn residuals(&self, u: &Unknowns<T>) -> Result<Vec<T>> {
        self.check(u)?;
        Ok(self.rows.iter().map(|r| self.row_dot(r, u) - r.rhs).collect())
    }
}

fn keep(mask: &MeasurementMask, oob: &[bool], k: usize) -> bool {
    mask.is_selected(k) && !oob[k]
}

fn check_mask<T: Scalar>(stack: &DerivativeStack<T>, mask: &MeasurementMask) -> Result<()> {
    if mask.len() != stack.len() {
        return Err(FlowError::DimensionMismatch(format!(
            "mask of {} pixels vs {} derivative pixels",
            mask.len(),
            stack.len()
        )));
    }
    Ok(())
}

/// Brightness constancy rows `Ix vx + Iy vy = -It`.
pub fn build_ofc<T: Scalar>(stack: &DerivativeStack<T>, mask: &MeasurementMask) -> Result<DataTermSystem<T>> {
    check_mask(stack, mask)?;
    let (w, h) = stack.dims();
    let z = T::zero();
    let rows = (0..stack.len())
        .filter(|&k| keep(mask, &stack.oob, k))
        .map(|k| DataRow {
            pixel: k,
            coef: [stack.ix.as_slice()[k], stack.iy.as_slice()[k], z, z],
            rhs: -stack.it.as_slice()[k],
        })
        .collect();
    Ok(DataTermSystem::new(DataKind::Ofc, w, h, rows))
}

/// Gradient constancy rows: all `(Ixx, Ixy | -Ixt)` rows, then all `(Iyx, Iyy | -Iyt)` rows.
pub fn build_gca<T: Scalar>(stack: &DerivativeStack<T>, mask: &MeasurementMask) -> Result<DataTermSystem<T>> {
    check_mask(stack, mask)?;
    let s = stack
        .second
        .as_ref()
        .ok_or(FlowError::MissingDerivatives("second-order derivatives"))?;
    let (w, h) = stack.dims();
    let z = T::zero();
    let kept: Vec<usize> = (0..stack.len()).filter(|&k| keep(mask, &stack.oob, k)).collect();
    let mut rows = Vec::with_capacity(2 * kept.len());
    rows.extend(kept.iter().map(|&k| DataRow {
        pixel: k,
        coef: [s.ixx.as_slice()[k], s.ixy.as_slice()[k], z, z],
        rhs: -s.ixt.as_slice()[k],
    }));
    rows.extend(kept.iter().map(|&k| DataRow {
        pixel: k,
        coef: [s.iyx.as_slice()[k], s.iyy.as_slice()[k], z, z],
        rhs: -s.iyt.as_slice()[k],
    }));
    Ok(DataTermSystem::new(DataKind::Gca, w, h, rows))
}

/// Dynamic image model rows `Ix vx + Iy vy - I d - c = -It`.
pub fn build_gdim<T: Scalar>(stack: &DerivativeStack<T>, mask: &MeasurementMask) -> Result<DataTermSystem<T>> {
    check_mask(stack, mask)?;
    let (w, h) = stack.dims();
    let rows = (0..stack.len())
        .filter(|&k| keep(mask, &stack.oob, k))
        .map(|k| DataRow {
            pixel: k,
            coef: [
                stack.ix.as_slice()[k],
                stack.iy.as_slice()[k],
                -stack.intensity.as_slice()[k],
                -T::one(),
            ],
            rhs: -stack.it.as_slice()[k],
        })
        .collect();
    Ok(DataTermSystem::new(DataKind::Gdim, w, h, rows))
}

/// Builds the system matching `kind`.
pub fn build_system<T: Scalar>(
    kind: DataKind,
    stack: &DerivativeStack<T>,
    mask: &MeasurementMask,
) -> Result<DataTermSystem<T>> {
    match kind {
        DataKind::Ofc => build_ofc(stack, mask),
        DataKind::Gca => build_gca(stack, mask),
        DataKind::Gdim => build_gdim(stack, mask),
    }
}

/// `Σ_rows H(a · u - y)`.
pub fn data_energy<T: Scalar>(sys: &DataTermSystem<T>, u: &Unknowns<T>, eps: T) -> Result<T> {
    Ok(sys.residuals(u)?.into_iter().map(|r| huber_value(r, eps)).sum())
}

/// `Aᵀ H'(A u - y)`.
pub fn data_gradient<T: Scalar>(sys: &DataTermSystem<T>, u: &Unknowns<T>, eps: T) -> Result<Unknowns<T>> {
    let s: Vec<T> = sys.residuals(u)?.into_iter().map(|r| huber_deriv(r, eps)).collect();
    Ok(sys.apply_transpose(&s))
}

/// Per-pixel unknowns: the flow field and, for GDIM, contrast `d` and offset `c`.
///
/// Blocks are stored back to back: `vx`, `vy`, then `d`, `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct Unknowns<T> {
    width: usize,
    height: usize,
    n_blocks: usize,
    values: Vec<T>,
}

impl<T: Scalar> Unknowns<T> {
    pub fn zeros(width: usize, height: usize, n_blocks: usize) -> Self {
        assert!(n_blocks == 2 || n_blocks == 4, "unknowns carry 2 or 4 blocks");
        Self {
            width,
            height,
            n_blocks,
            values: vec![T::zero(); n_blocks * width * height],
        }
    }

    pub fn from_flow(flow: &FlowField<T>) -> Self {
        let (w, h) = flow.dims();
        let mut values = Vec::with_capacity(2 * w * h);
        values.extend_from_slice(flow.vx.as_slice());
        values.extend_from_slice(flow.vy.as_slice());
        Self {
            width: w,
            height: h,
            n_blocks: 2,
            values,
        }
    }

    /// Flow plus contrast and offset grids.
    pub fn augmented(flow: &FlowField<T>, d: &ScalarGrid<T>, c: &ScalarGrid<T>) -> Result<Self> {
        if d.dims() != flow.dims() || c.dims() != flow.dims() {
            return Err(FlowError::DimensionMismatch("augmented unknown blocks differ in size".into()));
        }
        let mut u = Self::from_flow(flow);
        u.n_blocks = 4;
        u.values.extend_from_slice(d.as_slice());
        u.values.extend_from_slice(c.as_slice());
        Ok(u)
    }

    /// Same flow, with zero contrast and offset blocks appended or dropped to match `n_blocks`.
    pub fn with_blocks(flow: &FlowField<T>, n_blocks: usize) -> Self {
        let mut u = Self::from_flow(flow);
        if n_blocks == 4 {
            u.n_blocks = 4;
            u.values.resize(4 * flow.vx.len(), T::zero());
        }
        u
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn block(&self, b: usize) -> &[T] {
        let n = self.pixels();
        &self.values[b * n..(b + 1) * n]
    }

    pub fn block_mut(&mut self, b: usize) -> &mut [T] {
        let n = self.pixels();
        &mut self.values[b * n..(b + 1) * n]
    }

    fn block_grid(&self, b: usize) -> ScalarGrid<T> {
        ScalarGrid::from_fn(self.width, self.height, |i, j| self.block(b)[j * self.width + i])
    }

    pub fn flow(&self) -> FlowField<T> {
        FlowField {
            vx: self.block_grid(0),
            vy: self.block_grid(1),
        }
    }

    pub fn contrast(&self) -> Option<ScalarGrid<T>> {
        (self.n_blocks == 4).then(|| self.block_grid(2))
    }

    pub fn offset(&self) -> Option<ScalarGrid<T>> {
        (self.n_blocks == 4).then(|| self.block_grid(3))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
