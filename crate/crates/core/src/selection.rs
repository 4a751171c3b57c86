//! Measurement masks: which pixels keep their data-term rows.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data_terms::DerivativeStack;
use crate::error::{FlowError, Result};
use crate::scalar::Scalar;

/// Per-pixel selection of retained measurements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeasurementMask {
    selected: Vec<bool>,
    m: usize,
}

impl MeasurementMask {
    pub fn full(n: usize) -> Self {
        Self {
            selected: vec![true; n],
            m: n,
        }
    }

    pub fn from_selection(selected: Vec<bool>) -> Self {
        let m = selected.iter().filter(|&&s| s).count();
        Self { selected, m }
    }

    fn from_indices(n: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut selected = vec![false; n];
        for k in indices {
            selected[k] = true;
        }
        Self::from_selection(selected)
    }

    #[inline]
    pub fn is_selected(&self, k: usize) -> bool {
        self.selected[k]
    }

    pub fn selected(&self) -> &[bool] {
        &self.selected
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    /// Number of selected pixels.
    pub fn count(&self) -> usize {
        self.m
    }

    pub fn ratio(&self) -> f64 {
        self.m as f64 / self.selected.len() as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    /// Every pixel, regardless of ratio.
    #[default]
    Full,
    Random,
    Significant,
    Combined,
}

impl SchemeKind {
    /// Whether repeated runs with different seeds can differ.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Self::Random | Self::Combined)
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = FlowError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Self::Full),
            "random" => Ok(Self::Random),
            "significant" => Ok(Self::Significant),
            "combined" => Ok(Self::Combined),
            other => Err(FlowError::InvalidParameter(format!("unknown selection scheme '{other}'"))),
        }
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Random => "random",
            Self::Significant => "significant",
            Self::Combined => "combined",
        })
    }
}

/// How many measurements to keep and how to pick them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectionScheme {
    pub kind: SchemeKind,
    pub ratio: f64,
    /// Share of `n` taken by magnitude before random filling (combined only).
    pub significant_fraction: f64,
    pub seed: u64,
}

impl Default for SelectionScheme {
    fn default() -> Self {
        Self {
            kind: SchemeKind::Full,
            ratio: 1.0,
            significant_fraction: 0.05,
            seed: 0,
        }
    }
}

impl SelectionScheme {
    pub fn new(kind: SchemeKind, ratio: f64) -> Self {
        Self {
            kind,
            ratio,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_significant_fraction(mut self, fraction: f64) -> Self {
        self.significant_fraction = fraction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(FlowError::InvalidParameter(format!(
                "measurement ratio must lie in (0, 1], got {}",
                self.ratio
            )));
        }
        if self.kind == SchemeKind::Combined
            && !(self.significant_fraction >= 0.0 && self.significant_fraction <= self.ratio)
        {
            return Err(FlowError::InvalidParameter(format!(
                "significant fraction {} must lie in [0, ratio = {}]",
                self.significant_fraction, self.ratio
            )));
        }
        Ok(())
    }

    /// `round(ratio * n)`, at least one.
    pub fn target_count(&self, n: usize) -> usize {
        ((self.ratio * n as f64).round() as usize).clamp(1, n)
    }
}

/// Pixel indices ordered by decreasing magnitude, ties by ascending index.
fn rank_by_magnitude<T: Scalar>(magnitudes: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..magnitudes.len()).collect();
    order.sort_by(|&a, &b| {
        magnitudes[b]
            .partial_cmp(&magnitudes[a])
            .expect("finite magnitudes")
            .then(a.cmp(&b))
    });
    order
}

/// Selects measurements from per-pixel significance values.
pub fn select_by_magnitude<T: Scalar>(scheme: &SelectionScheme, magnitudes: &[T]) -> Result<MeasurementMask> {
    scheme.validate()?;
    let n = magnitudes.len();
    if n == 0 {
        return Err(FlowError::InvalidParameter("cannot select from zero pixels".into()));
    }
    let m = scheme.target_count(n);
    let mut rng = ChaCha8Rng::seed_from_u64(scheme.seed);
    Ok(match scheme.kind {
        SchemeKind::Full => MeasurementMask::full(n),
        _ if m == n => MeasurementMask::full(n),
        SchemeKind::Random => MeasurementMask::from_indices(n, sample(&mut rng, n, m)),
        SchemeKind::Significant => {
            MeasurementMask::from_indices(n, rank_by_magnitude(magnitudes).into_iter().take(m))
        }
        SchemeKind::Combined => {
            let k = ((scheme.significant_fraction * n as f64).round() as usize).min(m);
            let order = rank_by_magnitude(magnitudes);
            let mut mask = MeasurementMask::from_indices(n, order.into_iter().take(k));
            let rest: Vec<usize> = (0..n).filter(|&p| !mask.is_selected(p)).collect();
            for r in sample(&mut rng, rest.len(), m - k) {
                mask.selected[rest[r]] = true;
            }
            mask.m = m;
            mask
        }
    })
}

/// Selects measurements for a derivative stack using its significance map.
pub fn select<T: Scalar>(scheme: &SelectionScheme, stack: &DerivativeStack<T>) -> Result<MeasurementMask> {
    select_by_magnitude(scheme, &stack.significance())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn edge_magnitudes(w: usize, h: usize) -> Vec<f64> {
        // one strong vertical edge plus weak texture
        (0..w * h)
            .map(|k| {
                let i = k % w;
                if i == w / 2 {
                    1.0 + 0.01 * (k % 7) as f64
                } else {
                    0.001 * ((k * 31) % 17) as f64
                }
            })
            .collect()
    }

    #[test]
    fn full_ratio_selects_everything() {
        let mags = edge_magnitudes(10, 10);
        for kind in [SchemeKind::Full, SchemeKind::Random, SchemeKind::Significant, SchemeKind::Combined] {
            let mask = select_by_magnitude(&SelectionScheme::new(kind, 1.0), &mags).unwrap();
            assert_eq!(mask.count(), 100);
            assert_eq!(mask.ratio(), 1.0);
        }
    }

    #[test]
    fn combined_counts() {
        let mags = edge_magnitudes(10, 10);
        let scheme = SelectionScheme::new(SchemeKind::Combined, 0.2).with_seed(3);
        let mask = select_by_magnitude(&scheme, &mags).unwrap();
        assert_eq!(mask.count(), 20);
        let top = rank_by_magnitude(&mags);
        assert!(top[..5].iter().all(|&k| mask.is_selected(k)));
    }

    #[test]
    fn significant_equals_full_sort() {
        let mags = edge_magnitudes(12, 9);
        let scheme = SelectionScheme::new(SchemeKind::Significant, 0.15);
        let mask = select_by_magnitude(&scheme, &mags).unwrap();
        let m = scheme.target_count(mags.len());
        let mut pairs: Vec<(f64, usize)> = mags.iter().copied().zip(0..).collect();
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let expect: Vec<usize> = {
            let mut v: Vec<usize> = pairs[..m].iter().map(|p| p.1).collect();
            v.sort();
            v
        };
        let got: Vec<usize> = (0..mags.len()).filter(|&k| mask.is_selected(k)).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn ratio_validation() {
        let mags = vec![1.0; 10];
        assert!(select_by_magnitude(&SelectionScheme::new(SchemeKind::Random, 0.0), &mags).is_err());
        assert!(select_by_magnitude(&SelectionScheme::new(SchemeKind::Random, 1.5), &mags).is_err());
        let bad = SelectionScheme::new(SchemeKind::Combined, 0.1).with_significant_fraction(0.2);
        assert!(select_by_magnitude(&bad, &mags).is_err());
    }

    #[test]
    fn combined_degenerate_cases() {
        let mags = edge_magnitudes(10, 10);
        let sig = select_by_magnitude(&SelectionScheme::new(SchemeKind::Significant, 0.3), &mags).unwrap();
        let comb = SelectionScheme::new(SchemeKind::Combined, 0.3).with_significant_fraction(0.3);
        assert_eq!(select_by_magnitude(&comb, &mags).unwrap(), sig);
        let rnd = SelectionScheme::new(SchemeKind::Random, 0.3).with_seed(9);
        let comb0 = SelectionScheme::new(SchemeKind::Combined, 0.3).with_significant_fraction(0.0).with_seed(9);
        assert_eq!(
            select_by_magnitude(&comb0, &mags).unwrap(),
            select_by_magnitude(&rnd, &mags).unwrap()
        );
    }

    proptest! {
        #[test]
        fn counts_are_exact(ratio in 0.01f64..=1.0, seed in 0u64..1000, n in 1usize..400) {
            let mags: Vec<f64> = (0..n).map(|k| ((k * 7919) % 101) as f64).collect();
            for kind in [SchemeKind::Random, SchemeKind::Significant, SchemeKind::Combined] {
                let s = SelectionScheme::new(kind, ratio).with_seed(seed).with_significant_fraction(ratio.min(0.05));
                let mask = select_by_magnitude(&s, &mags).unwrap();
                prop_assert_eq!(mask.count(), s.target_count(n));
                prop_assert_eq!(mask.count(), mask.selected().iter().filter(|&&b| b).count());
            }
        }

        #[test]
        fn seeded_selection_is_reproducible(seed in 0u64..10_000) {
            let mags: Vec<f64> = (0..200).map(|k| (k as f64 * 0.7).sin().abs()).collect();
            let s = SelectionScheme::new(SchemeKind::Combined, 0.4).with_seed(seed);
            prop_assert_eq!(select_by_magnitude(&s, &mags).unwrap(), select_by_magnitude(&s, &mags).unwrap());
        }

        #[test]
        fn equal_magnitude_relabeling_keeps_multiset(perm_seed in 0u64..500) {
            // magnitudes drawn from few distinct levels; permuting pixels keeps the selected multiset
            let mags: Vec<f64> = (0..60).map(|k| (k % 4) as f64).collect();
            let mut shuffled = mags.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
            rand::seq::SliceRandom::shuffle(&mut shuffled[..], &mut rng);
            let s = SelectionScheme::new(SchemeKind::Significant, 0.35);
            let pick = |m: &[f64]| {
                let mask = select_by_magnitude(&s, m).unwrap();
                let mut v: Vec<f64> = (0..m.len()).filter(|&k| mask.is_selected(k)).map(|k| m[k]).collect();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                v
            };
            prop_assert_eq!(pick(&mags), pick(&shuffled));
        }
    }
}
