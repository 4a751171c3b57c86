//! Discrete derivative operators with replicate (clamped) boundaries.

use super::ScalarGrid;
use crate::scalar::{lit, Scalar};

/// Linear finite-difference stencil evaluated with clamped indexing.
///
/// `apply` computes `out(i, j) = Σ c · g(clamp(i + di), clamp(j + dj))`;
/// `apply_adjoint` scatters through the same clamped indices, so it is the
/// exact transpose of `apply` for every grid size. Taps are kept merged and
/// sorted, so two stencils describing the same operator produce bit-identical
/// output.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil {
    taps: Vec<(isize, isize, f64)>,
}

impl Stencil {
    pub fn new(taps: &[(isize, isize, f64)]) -> Self {
        let mut merged: Vec<(isize, isize, f64)> = Vec::with_capacity(taps.len());
        for &(di, dj, c) in taps {
            match merged.iter_mut().find(|t| t.0 == di && t.1 == dj) {
                Some(t) => t.2 += c,
                None => merged.push((di, dj, c)),
            }
        }
        merged.retain(|t| t.2 != 0.0);
        merged.sort_by_key(|t| (t.1, t.0));
        Self { taps: merged }
    }

    pub fn taps(&self) -> &[(isize, isize, f64)] {
        &self.taps
    }

    pub fn apply<T: Scalar>(&self, g: &ScalarGrid<T>) -> ScalarGrid<T> {
        let (w, h) = g.dims();
        let taps: Vec<(isize, isize, T)> =
            self.taps.iter().map(|&(di, dj, c)| (di, dj, lit(c))).collect();
        let mut out = Vec::with_capacity(w * h);
        for j in 0..h as isize {
            for i in 0..w as isize {
                let mut acc = T::zero();
                for &(di, dj, c) in &taps {
                    acc = acc + c * g.get_clamped(i + di, j + dj);
                }
                out.push(acc);
            }
        }
        ScalarGrid {
            width: w,
            height: h,
            values: out,
        }
    }

    pub fn apply_adjoint<T: Scalar>(&self, g: &ScalarGrid<T>) -> ScalarGrid<T> {
        let (w, h) = g.dims();
        let taps: Vec<(isize, isize, T)> =
            self.taps.iter().map(|&(di, dj, c)| (di, dj, lit(c))).collect();
        let mut out = vec![T::zero(); w * h];
        let (wi, hi) = (w as isize, h as isize);
        for j in 0..hi {
            for i in 0..wi {
                let b = g.values[(j * wi + i) as usize];
                if b == T::zero() {
                    continue;
                }
                for &(di, dj, c) in &taps {
                    let si = (i + di).clamp(0, wi - 1);
                    let sj = (j + dj).clamp(0, hi - 1);
                    let k = (sj * wi + si) as usize;
                    out[k] = out[k] + c * b;
                }
            }
        }
        ScalarGrid {
            width: w,
            height: h,
            values: out,
        }
    }

    /// Forward difference along the horizontal axis.
    pub fn forward_x() -> Self {
        Self::new(&[(1, 0, 1.0), (0, 0, -1.0)])
    }

    /// Forward difference along the vertical axis.
    pub fn forward_y() -> Self {
        Self::new(&[(0, 1, 1.0), (0, 0, -1.0)])
    }
}

/// `g(i+1, j) - g(i, j)`; zero in the last column.
pub fn forward_diff_x<T: Scalar>(g: &ScalarGrid<T>) -> ScalarGrid<T> {
    let (w, h) = g.dims();
    ScalarGrid::from_fn(w, h, |i, j| {
        if i + 1 < w {
            g.get(i + 1, j) - g.get(i, j)
        } else {
            T::zero()
        }
    })
}

/// `g(i, j+1) - g(i, j)`; zero in the last row.
pub fn forward_diff_y<T: Scalar>(g: &ScalarGrid<T>) -> ScalarGrid<T> {
    let (w, h) = g.dims();
    ScalarGrid::from_fn(w, h, |i, j| {
        if j + 1 < h {
            g.get(i, j + 1) - g.get(i, j)
        } else {
            T::zero()
        }
    })
}

/// Transpose of [`forward_diff_x`]: a negated backward difference.
pub fn adjoint_diff_x<T: Scalar>(g: &ScalarGrid<T>) -> ScalarGrid<T> {
    let (w, h) = g.dims();
    ScalarGrid::from_fn(w, h, |i, j| {
        let incoming = if i >= 1 { g.get(i - 1, j) } else { T::zero() };
        let outgoing = if i + 1 < w { g.get(i, j) } else { T::zero() };
        incoming - outgoing
    })
}

/// Transpose of [`forward_diff_y`].
pub fn adjoint_diff_y<T: Scalar>(g: &ScalarGrid<T>) -> ScalarGrid<T> {
    let (w, h) = g.dims();
    ScalarGrid::from_fn(w, h, |i, j| {
        let incoming = if j >= 1 { g.get(i, j - 1) } else { T::zero() };
        let outgoing = if j + 1 < h { g.get(i, j) } else { T::zero() };
        incoming - outgoing
    })
}

/// Three-point central difference `(g(i+1) - g(i-1)) / 2` with clamped indices.
pub fn central_diff_x<T: Scalar>(g: &ScalarGrid<T>) -> ScalarGrid<T> {
    let half: T = lit(0.5);
    let (w, h) = g.dims();
    ScalarGrid::from_fn(w, h, |i, j| {
        let (i, j) = (i as isize, j as isize);
        (g.get_clamped(i + 1, j) - g.get_clamped(i - 1, j)) * half
    })
}

pub fn central_diff_y<T: Scalar>(g: &ScalarGrid<T>) -> ScalarGrid<T> {
    let half: T = lit(0.5);
    let (w, h) = g.dims();
    ScalarGrid::from_fn(w, h, |i, j| {
        let (i, j) = (i as isize, j as isize);
        (g.get_clamped(i, j + 1) - g.get_clamped(i, j - 1)) * half
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(w: usize, h: usize, seed: u64) -> ScalarGrid<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScalarGrid::from_fn(w, h, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn dense(op: impl Fn(&ScalarGrid<f64>) -> ScalarGrid<f64>, w: usize, h: usize) -> Vec<Vec<f64>> {
        // column k of the matrix is op(e_k)
        let n = w * h;
        let mut m = vec![vec![0.0; n]; n];
        #[allow(clippy::needless_range_loop)]
        for k in 0..n {
            let mut e = ScalarGrid::zeros(w, h);
            e.as_mut_slice()[k] = 1.0;
            let col = op(&e);
            for (r, v) in col.as_slice().iter().enumerate() {
                m[r][k] = *v;
            }
        }
        m
    }

    #[test]
    fn constant_grid_has_zero_derivatives() {
        let g = ScalarGrid::constant(3, 3, 5.0);
        assert!(forward_diff_x(&g).as_slice().iter().all(|&v| v == 0.0));
        assert!(forward_diff_y(&g).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn row_and_column_examples() {
        let row = ScalarGrid::new(3, 1, vec![1.0, 3.0, 6.0]).unwrap();
        assert_eq!(forward_diff_x(&row).as_slice(), &[2.0, 3.0, 0.0]);
        let col = ScalarGrid::new(1, 3, vec![1.0, 4.0, 9.0]).unwrap();
        assert_eq!(forward_diff_y(&col).as_slice(), &[3.0, 5.0, 0.0]);
    }

    #[test]
    fn forward_diffs_match_loop_oracle() {
        let g = random_grid(5, 5, 7);
        let dx = forward_diff_x(&g);
        let dy = forward_diff_y(&g);
        for j in 0..5 {
            for i in 0..5 {
                let ex = if i < 4 { g.get(i + 1, j) - g.get(i, j) } else { 0.0 };
                let ey = if j < 4 { g.get(i, j + 1) - g.get(i, j) } else { 0.0 };
                assert_eq!(dx.get(i, j), ex);
                assert_eq!(dy.get(i, j), ey);
            }
        }
    }

    #[test]
    fn stencil_matches_direct_forward_diffs() {
        let g = random_grid(6, 4, 3);
        assert_eq!(Stencil::forward_x().apply(&g), forward_diff_x(&g));
        assert_eq!(Stencil::forward_y().apply(&g), forward_diff_y(&g));
    }

    #[test]
    fn adjoint_is_dense_transpose() {
        let (w, h) = (4, 4);
        let fx = dense(forward_diff_x, w, h);
        let ax = dense(adjoint_diff_x, w, h);
        let fy = dense(forward_diff_y, w, h);
        let ay = dense(adjoint_diff_y, w, h);
        let sx = dense(|g| Stencil::forward_x().apply_adjoint(g), w, h);
        for r in 0..16 {
            for c in 0..16 {
                assert_eq!(ax[r][c], fx[c][r]);
                assert_eq!(ay[r][c], fy[c][r]);
                assert_eq!(sx[r][c], fx[c][r]);
            }
        }
    }

    #[test]
    fn impulse_adjoint_is_negative_backward_difference() {
        let mut e = ScalarGrid::<f64>::zeros(4, 4);
        e.set(1, 2, 1.0);
        let a = adjoint_diff_x(&e);
        assert_eq!(a.get(1, 2), -1.0);
        assert_eq!(a.get(2, 2), 1.0);
        assert_eq!(a.sum(), 0.0);
    }

    #[test]
    fn zero_adjoint() {
        let z = ScalarGrid::<f64>::zeros(3, 5);
        assert_eq!(adjoint_diff_x(&z), z);
        assert_eq!(adjoint_diff_y(&z), z);
    }

    #[test]
    fn adjoint_identity_random() {
        for seed in 0..10 {
            let a = random_grid(4, 4, seed);
            let b = random_grid(4, 4, seed + 100);
            let lhs = forward_diff_x(&a).dot(&b);
            let rhs = a.dot(&adjoint_diff_x(&b));
            assert!((lhs - rhs).abs() < 1e-12);
            let lhs = forward_diff_y(&a).dot(&b);
            let rhs = a.dot(&adjoint_diff_y(&b));
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn stencil_merges_duplicate_taps() {
        let s = Stencil::new(&[(1, 0, 1.0), (0, 0, -1.0), (1, 0, 1.0), (0, 1, 0.0)]);
        assert_eq!(s.taps(), &[(0, 0, -1.0), (1, 0, 2.0)]);
    }

    #[test]
    fn central_diff_on_ramp() {
        let g = ScalarGrid::from_fn(6, 5, |i, j| 2.0 * i as f64 + 3.0 * j as f64);
        let cx = central_diff_x(&g);
        let cy = central_diff_y(&g);
        for j in 1..4 {
            for i in 1..5 {
                assert!((cx.get(i, j) - 2.0).abs() < 1e-12);
                assert!((cy.get(i, j) - 3.0).abs() < 1e-12);
            }
        }
    }
}
