use super::ScalarGrid;
use crate::error::{FlowError, Result};
use crate::scalar::{lit, Scalar};

/// Normalized 1-D Gaussian taps of odd length `size`.
pub fn gaussian_kernel(sigma: f64, size: usize) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(FlowError::InvalidParameter(format!(
            "gaussian sigma must be positive, got {sigma}"
        )));
    }
    if size.is_multiple_of(2) {
        return Err(FlowError::InvalidParameter(format!(
            "gaussian kernel size must be odd, got {size}"
        )));
    }
    let r = (size / 2) as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    Ok(k)
}

/// Convolution with a normalized `size x size` Gaussian, replicate boundary.
///
/// The 2-D kernel is separable, so it is applied as a horizontal then a
/// vertical pass.
pub fn gaussian_smooth<T: Scalar>(g: &ScalarGrid<T>, sigma: f64, size: usize) -> Result<ScalarGrid<T>> {
    let taps: Vec<T> = gaussian_kernel(sigma, size)?.into_iter().map(lit).collect();
    let r = (size / 2) as isize;
    let (w, h) = g.dims();
    let horizontal = ScalarGrid::from_fn(w, h, |i, j| {
        taps.iter().enumerate().fold(T::zero(), |acc, (k, &t)| {
            acc + t * g.get_clamped(i as isize + k as isize - r, j as isize)
        })
    });
    Ok(ScalarGrid::from_fn(w, h, |i, j| {
        taps.iter().enumerate().fold(T::zero(), |acc, (k, &t)| {
            acc + t * horizontal.get_clamped(i as isize, j as isize + k as isize - r)
        })
    }))
}

/// Residual after removing a `9 x 9`, `sigma = 1` Gaussian blur, re-centered at 0.5.
///
/// The residual is shifted by one half and clamped so the result stays a
/// valid `[0, 1]` intensity image.
pub fn high_pass<T: Scalar>(g: &ScalarGrid<T>) -> Result<ScalarGrid<T>> {
    let blurred = gaussian_smooth(g, 1.0, 9)?;
    let half = lit::<T>(0.5);
    Ok(g.zip_map(&blurred, |a, b| (a - b + half).max(T::zero()).min(T::one())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_even_size_and_bad_sigma() {
        let g = ScalarGrid::<f64>::zeros(4, 4);
        assert!(gaussian_smooth(&g, 1.0, 4).is_err());
        assert!(gaussian_smooth(&g, 0.0, 3).is_err());
        assert!(gaussian_smooth(&g, 1.0, 1).is_ok());
    }

    #[test]
    fn constant_is_preserved() {
        let g = ScalarGrid::constant(7, 5, 0.3f64);
        let s = gaussian_smooth(&g, 1.0, 9).unwrap();
        for &v in s.as_slice() {
            assert!((v - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn impulse_response_sums_to_one() {
        let mut g = ScalarGrid::<f64>::zeros(9, 9);
        g.set(4, 4, 1.0);
        let s = gaussian_smooth(&g, 1.0, 9).unwrap();
        assert!((s.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_naive_2d_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = ScalarGrid::from_fn(16, 16, |_, _| rng.gen_range(0.0..1.0));
        let sigma = 1.3;
        let size = 7usize;
        let r = 3isize;
        let s = gaussian_smooth(&g, sigma, size).unwrap();
        // unnormalized 2-D kernel, normalized by its own total
        let mut norm = 0.0;
        for dj in -r..=r {
            for di in -r..=r {
                norm += (-((di * di + dj * dj) as f64) / (2.0 * sigma * sigma)).exp();
            }
        }
        for j in 0..16 {
            for i in 0..16 {
                let mut acc = 0.0;
                for dj in -r..=r {
                    for di in -r..=r {
                        let wgt = (-((di * di + dj * dj) as f64) / (2.0 * sigma * sigma)).exp() / norm;
                        acc += wgt * g.get_clamped(i as isize + di, j as isize + dj);
                    }
                }
                assert!((acc - s.get(i, j)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn preserves_mean_of_interior_dominated_grid() {
        let mut g = ScalarGrid::<f64>::constant(32, 32, 0.5);
        for j in 12..20 {
            for i in 12..20 {
                g.set(i, j, 0.9);
            }
        }
        let s = gaussian_smooth(&g, 1.0, 9).unwrap();
        assert!((s.mean() - g.mean()).abs() < 1e-10);
    }

    #[test]
    fn high_pass_of_constant_is_half() {
        let g = ScalarGrid::constant(12, 10, 0.3f64);
        let hp = high_pass(&g).unwrap();
        assert!(hp.as_slice().iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }
}
