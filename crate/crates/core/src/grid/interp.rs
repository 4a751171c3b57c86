use super::{FlowField, ScalarGrid};
use crate::scalar::{lit, Scalar};

/// Bilinear sample at continuous position `(x, y)`, coordinates clamped to the grid.
pub fn sample_bilinear<T: Scalar>(g: &ScalarGrid<T>, x: T, y: T) -> T {
    let (w, h) = g.dims();
    let x = x.max(T::zero()).min(lit((w - 1) as f64));
    let y = y.max(T::zero()).min(lit((h - 1) as f64));
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let i0 = x0.to_usize().unwrap_or(0).min(w - 1);
    let j0 = y0.to_usize().unwrap_or(0).min(h - 1);
    let i1 = (i0 + 1).min(w - 1);
    let j1 = (j0 + 1).min(h - 1);
    let one = T::one();
    let top = g.get(i0, j0) * (one - fx) + g.get(i1, j0) * fx;
    let bottom = g.get(i0, j1) * (one - fx) + g.get(i1, j1) * fx;
    top * (one - fy) + bottom * fy
}

/// Resizes `g` to `new_w x new_h` by bilinear interpolation.
///
/// Target pixel centers map onto source pixel centers, so a same-size
/// resample is the identity.
pub fn resample_bilinear<T: Scalar>(g: &ScalarGrid<T>, new_w: usize, new_h: usize) -> ScalarGrid<T> {
    assert!(new_w >= 1 && new_h >= 1, "resample target must be non-empty");
    let (w, h) = g.dims();
    let sx: T = lit(w as f64 / new_w as f64);
    let sy: T = lit(h as f64 / new_h as f64);
    let half: T = lit(0.5);
    ScalarGrid::from_fn(new_w, new_h, |i, j| {
        let x = (lit::<T>(i as f64) + half) * sx - half;
        let y = (lit::<T>(j as f64) + half) * sy - half;
        sample_bilinear(g, x, y)
    })
}

/// Resizes a flow field and rescales its components into the new pixel units.
pub fn upsample_flow<T: Scalar>(flow: &FlowField<T>, new_w: usize, new_h: usize) -> FlowField<T> {
    let (w, h) = flow.dims();
    let rx: T = lit(new_w as f64 / w as f64);
    let ry: T = lit(new_h as f64 / h as f64);
    FlowField {
        vx: resample_bilinear(&flow.vx, new_w, new_h).map(|v| v * rx),
        vy: resample_bilinear(&flow.vy, new_w, new_h).map(|v| v * ry),
    }
}

/// Backward-warped image plus per-pixel flags for samples taken outside the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Warped<T> {
    pub image: ScalarGrid<T>,
    pub out_of_bounds: Vec<bool>,
}

/// `out(i, j) = g(i + vx(i, j), j + vy(i, j))`, bilinear.
///
/// Sample positions outside the grid are clamped and flagged.
pub fn warp_backward<T: Scalar>(g: &ScalarGrid<T>, flow: &FlowField<T>) -> Warped<T> {
    assert_eq!(g.dims(), flow.dims(), "warp flow must match image size");
    let (w, h) = g.dims();
    let max_x: T = lit((w - 1) as f64);
    let max_y: T = lit((h - 1) as f64);
    let mut out_of_bounds = Vec::with_capacity(w * h);
    let image = ScalarGrid::from_fn(w, h, |i, j| {
        let x = lit::<T>(i as f64) + flow.vx.get(i, j);
        let y = lit::<T>(j as f64) + flow.vy.get(i, j);
        out_of_bounds.push(x < T::zero() || y < T::zero() || x > max_x || y > max_y);
        sample_bilinear(g, x, y)
    });
    Warped {
        image,
        out_of_bounds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(w: usize, h: usize, seed: u64) -> ScalarGrid<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScalarGrid::from_fn(w, h, |_, _| rng.gen_range(0.0..1.0))
    }

    fn bilinear_oracle(g: &ScalarGrid<f64>, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (g.width() - 1) as f64);
        let y = y.clamp(0.0, (g.height() - 1) as f64);
        let (i0, j0) = (x.floor() as usize, y.floor() as usize);
        let (i1, j1) = ((i0 + 1).min(g.width() - 1), (j0 + 1).min(g.height() - 1));
        let (a, b) = (x - i0 as f64, y - j0 as f64);
        g.get(i0, j0) * (1.0 - a) * (1.0 - b)
            + g.get(i1, j0) * a * (1.0 - b)
            + g.get(i0, j1) * (1.0 - a) * b
            + g.get(i1, j1) * a * b
    }

    #[test]
    fn identity_resize() {
        let g = random_grid(7, 5, 1);
        assert_eq!(resample_bilinear(&g, 7, 5), g);
    }

    #[test]
    fn stretched_rows_are_monotone() {
        let g = ScalarGrid::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let r = resample_bilinear(&g, 4, 2);
        for j in 0..2 {
            for i in 1..4 {
                assert!(r.get(i, j) >= r.get(i - 1, j));
            }
            assert_eq!(r.get(0, j), 0.0);
            assert_eq!(r.get(3, j), 1.0);
        }
        assert_eq!(r.get(1, 0), r.get(1, 1));
    }

    #[test]
    fn downsample_matches_bilinear_formula() {
        let g = random_grid(8, 8, 2);
        let r = resample_bilinear(&g, 5, 5);
        for j in 0..5 {
            for i in 0..5 {
                let x = (i as f64 + 0.5) * 8.0 / 5.0 - 0.5;
                let y = (j as f64 + 0.5) * 8.0 / 5.0 - 0.5;
                assert!((r.get(i, j) - bilinear_oracle(&g, x, y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_flow_warp_is_identity() {
        let g = random_grid(6, 6, 3);
        let w = warp_backward(&g, &FlowField::zeros(6, 6));
        assert_eq!(w.image, g);
        assert!(w.out_of_bounds.iter().all(|&f| !f));
    }

    #[test]
    fn integer_shift() {
        let g = random_grid(6, 4, 4);
        let w = warp_backward(&g, &FlowField::constant(6, 4, 1.0, 0.0));
        for j in 0..4 {
            for i in 0..5 {
                assert_eq!(w.image.get(i, j), g.get(i + 1, j));
                assert!(!w.out_of_bounds[j * 6 + i]);
            }
            assert!(w.out_of_bounds[j * 6 + 5]);
        }
    }

    #[test]
    fn random_warp_matches_oracle() {
        let g = random_grid(8, 8, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let vx = ScalarGrid::from_fn(8, 8, |_, _| rng.gen_range(-1.5..1.5));
        let vy = ScalarGrid::from_fn(8, 8, |_, _| rng.gen_range(-1.5..1.5));
        let flow = FlowField::new(vx, vy).unwrap();
        let w = warp_backward(&g, &flow);
        for j in 0..8 {
            for i in 0..8 {
                let x = i as f64 + flow.vx.get(i, j);
                let y = j as f64 + flow.vy.get(i, j);
                assert!((w.image.get(i, j) - bilinear_oracle(&g, x, y)).abs() < 1e-12);
                let oob = x < 0.0 || y < 0.0 || x > 7.0 || y > 7.0;
                assert_eq!(w.out_of_bounds[j * 8 + i], oob);
            }
        }
    }

    #[test]
    fn upsampled_flow_is_rescaled() {
        let f = FlowField::constant(10, 10, 1.0f64, -2.0);
        let u = upsample_flow(&f, 20, 15);
        assert_eq!(u.dims(), (20, 15));
        assert!(u.vx.as_slice().iter().all(|&v| (v - 2.0).abs() < 1e-12));
        assert!(u.vy.as_slice().iter().all(|&v| (v + 3.0).abs() < 1e-12));
    }
}
