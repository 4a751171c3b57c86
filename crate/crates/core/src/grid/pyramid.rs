use super::{gaussian_smooth, resample_bilinear, ImagePair, ScalarGrid};
use crate::error::{FlowError, Result};
use crate::scalar::Scalar;

/// Multi-resolution stack of image pairs, ordered coarsest to finest.
#[derive(Clone, Debug)]
pub struct Pyramid<T> {
    pub levels: Vec<ImagePair<T>>,
    pub scale_factor: f64,
}

impl<T: Scalar> Pyramid<T> {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn finest(&self) -> &ImagePair<T> {
        self.levels.last().expect("pyramid has at least one level")
    }

    pub fn coarsest(&self) -> &ImagePair<T> {
        &self.levels[0]
    }
}

/// Side length of the next coarser level.
///
/// The small bias keeps products such as `70 * 0.7` from flooring to 48.
pub fn scaled_side(side: usize, scale: f64) -> usize {
    (side as f64 * scale + 1e-9).floor() as usize
}

fn downsample<T: Scalar>(g: &ScalarGrid<T>, scale: f64, w: usize, h: usize) -> Result<ScalarGrid<T>> {
    // anti-alias before decimation
    let sigma = 1.0 / (2.0 * scale).sqrt();
    let size = 2 * (3.0 * sigma).ceil() as usize + 1;
    Ok(resample_bilinear(&gaussian_smooth(g, sigma, size)?, w, h))
}

/// Builds a smoothing-and-decimation pyramid from `pair`.
///
/// Each coarser level has sides `floor(side * scale)`; construction stops
/// before any side would fall below `min_side`.
pub fn build_pyramid<T: Scalar>(pair: &ImagePair<T>, scale: f64, min_side: usize) -> Result<Pyramid<T>> {
    if !(scale > 0.0 && scale < 1.0) {
        return Err(FlowError::InvalidParameter(format!(
            "pyramid scale must lie in (0, 1), got {scale}"
        )));
    }
    let (w, h) = pair.dims();
    if w < min_side || h < min_side {
        return Err(FlowError::ImageTooSmall {
            width: w,
            height: h,
            min_side,
        });
    }
    let mut levels = vec![pair.clone()];
    loop {
        let current = levels.last().unwrap();
        let (cw, ch) = current.dims();
        let (nw, nh) = (scaled_side(cw, scale), scaled_side(ch, scale));
        if nw < min_side.max(1) || nh < min_side.max(1) || (nw, nh) == (cw, ch) {
            break;
        }
        let next = ImagePair {
            frame0: downsample(&current.frame0, scale, nw, nh)?,
            frame1: downsample(&current.frame1, scale, nw, nh)?,
        };
        levels.push(next);
    }
    levels.reverse();
    Ok(Pyramid {
        levels,
        scale_factor: scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(w: usize, h: usize) -> ImagePair<f64> {
        let f = ScalarGrid::from_fn(w, h, |i, j| ((i * 7 + j * 3) % 11) as f64 / 10.0);
        ImagePair::new(f.clone(), f).unwrap()
    }

    #[test]
    fn level_sizes_for_100_square() {
        let p = build_pyramid(&pair(100, 100), 0.70, 16).unwrap();
        let widths: Vec<usize> = p.levels.iter().map(|l| l.dims().0).collect();
        assert_eq!(widths, vec![16, 23, 34, 49, 70, 100]);
        for k in 0..p.len() - 1 {
            let (fw, fh) = p.levels[k + 1].dims();
            assert_eq!(p.levels[k].dims(), (scaled_side(fw, 0.7), scaled_side(fh, 0.7)));
        }
    }

    #[test]
    fn min_side_input_gives_single_level() {
        let p = build_pyramid(&pair(16, 20), 0.70, 16).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.finest().dims(), (16, 20));
    }

    #[test]
    fn rejects_small_input_and_bad_scale() {
        assert!(matches!(
            build_pyramid(&pair(10, 30), 0.7, 16),
            Err(FlowError::ImageTooSmall { .. })
        ));
        assert!(build_pyramid(&pair(30, 30), 1.0, 16).is_err());
        assert!(build_pyramid(&pair(30, 30), 0.0, 16).is_err());
    }

    #[test]
    fn sizes_strictly_decrease() {
        let p = build_pyramid(&pair(64, 48), 0.7, 8).unwrap();
        for k in 1..p.len() {
            let (a, b) = (p.levels[k - 1].dims(), p.levels[k].dims());
            assert!(a.0 < b.0 && a.1 < b.1);
            assert!(a.0 >= 8 && a.1 >= 8);
        }
    }
}
