//! Measurement-ratio sweeps: MEPE as a function of `m / n` per selection scheme.

use std::time::Instant;

use crate::error::{FlowError, Result};
use crate::evaluation::mepe;
use crate::grid::{FlowField, ImagePair};
use crate::scalar::Scalar;
use crate::selection::{SchemeKind, SelectionScheme};
use crate::solver::{solve_coarse_to_fine, SolverConfig};

pub const DEFAULT_REPETITIONS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRun {
    pub scheme: SchemeKind,
    pub ratio: f64,
    pub repetition: usize,
    pub seed: u64,
    pub mepe: f64,
    pub wall_ms: f64,
}

/// Mean over the runs of one `(scheme, ratio)` cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepAggregate {
    pub scheme: SchemeKind,
    pub ratio: f64,
    pub runs: usize,
    pub mepe: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepTable {
    pub runs: Vec<SweepRun>,
    pub aggregates: Vec<SweepAggregate>,
}

impl SweepTable {
    pub fn aggregate(&self, scheme: SchemeKind, ratio: f64) -> Option<&SweepAggregate> {
        self.aggregates.iter().find(|a| a.scheme == scheme && a.ratio == ratio)
    }

    /// CSV with header `scheme,ratio,repetition,mepe,wall_ms,aggregate`.
    ///
    /// Aggregate rows carry `aggregate = 1` and the number of runs in the
    /// `repetition` column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scheme,ratio,repetition,mepe,wall_ms,aggregate\n");
        for a in &self.aggregates {
            for r in self.runs.iter().filter(|r| r.scheme == a.scheme && r.ratio == a.ratio) {
                out.push_str(&format!(
                    "{},{},{},{:.6},{:.3},0\n",
                    r.scheme, r.ratio, r.repetition, r.mepe, r.wall_ms
                ));
            }
            out.push_str(&format!(
                "{},{},{},{:.6},{:.3},1\n",
                a.scheme, a.ratio, a.runs, a.mepe, a.wall_ms
            ));
        }
        out
    }
}

/// Number of runs actually performed for one cell.
///
/// Deterministic schemes, and any scheme at ratio 1, collapse to one run.
pub fn effective_repetitions(scheme: SchemeKind, ratio: f64, repetitions: usize) -> usize {
    if scheme.is_stochastic() && ratio < 1.0 {
        repetitions.max(1)
    } else {
        1
    }
}

/// Runs the estimator for every `(scheme, ratio)` pair and averages MEPE.
///
/// Repetition `r` uses seed `config.scheme.seed + r`. Repetitions of one
/// cell run on separate threads; results are collected in repetition order.
pub fn sweep_ratios<T: Scalar>(
    pair: &ImagePair<T>,
    ground_truth: &FlowField<T>,
    config: &SolverConfig,
    ratios: &[f64],
    schemes: &[SchemeKind],
    repetitions: usize,
) -> Result<SweepTable> {
    if ground_truth.dims() != pair.dims() {
        return Err(FlowError::DimensionMismatch(format!(
            "ground truth {:?} vs frames {:?}",
            ground_truth.dims(),
            pair.dims()
        )));
    }
    let mut table = SweepTable::default();
    for &scheme in schemes {
        for &ratio in ratios {
            let reps = effective_repetitions(scheme, ratio, repetitions);
            let configs: Vec<SolverConfig> = (0..reps)
                .map(|r| SolverConfig {
                    scheme: SelectionScheme {
                        kind: scheme,
                        ratio,
                        seed: config.scheme.seed.wrapping_add(r as u64),
                        ..config.scheme
                    },
                    ..config.clone()
                })
                .collect();
            for c in &configs {
                c.validate()?;
            }
            let results: Vec<Result<(f64, f64)>> = std::thread::scope(|s| {
                let handles: Vec<_> = configs
                    .iter()
                    .map(|c| {
                        s.spawn(move || {
                            let start = Instant::now();
                            let est = solve_coarse_to_fine(pair, c)?;
                            let ms = start.elapsed().as_secs_f64() * 1e3;
                            Ok((mepe(&est.flow, ground_truth)?, ms))
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
            });
            let mut sum = (0.0, 0.0);
            for (r, res) in results.into_iter().enumerate() {
                let (e, ms) = res?;
                sum.0 += e;
                sum.1 += ms;
                table.runs.push(SweepRun {
                    scheme,
                    ratio,
                    repetition: r,
                    seed: configs[r].scheme.seed,
                    mepe: e,
                    wall_ms: ms,
                });
            }
            table.aggregates.push(SweepAggregate {
                scheme,
                ratio,
                runs: reps,
                mepe: sum.0 / reps as f64,
                wall_ms: sum.1 / reps as f64,
            });
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{translation, TextureSpec};

    fn case() -> (ImagePair<f64>, FlowField<f64>) {
        let spec = TextureSpec { width: 20, height: 20, ..Default::default() };
        let c = translation(&spec, 0.5, 0.25).unwrap();
        (c.pair, c.ground_truth)
    }

    fn quick() -> SolverConfig {
        SolverConfig { max_iter: 40, min_side: 10, ..Default::default() }
    }

    #[test]
    fn collapse_rules() {
        assert_eq!(effective_repetitions(SchemeKind::Random, 0.5, 5), 5);
        assert_eq!(effective_repetitions(SchemeKind::Combined, 0.5, 3), 3);
        assert_eq!(effective_repetitions(SchemeKind::Random, 1.0, 5), 1);
        assert_eq!(effective_repetitions(SchemeKind::Significant, 0.5, 5), 1);
        assert_eq!(effective_repetitions(SchemeKind::Full, 1.0, 5), 1);
    }

    #[test]
    fn aggregate_is_mean_of_runs() {
        let (pair, gt) = case();
        let t = sweep_ratios(&pair, &gt, &quick(), &[0.5], &[SchemeKind::Random], 5).unwrap();
        assert_eq!(t.runs.len(), 5);
        let mean = t.runs.iter().map(|r| r.mepe).sum::<f64>() / 5.0;
        assert!((t.aggregates[0].mepe - mean).abs() < 1e-15);
        let seeds: Vec<u64> = t.runs.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn full_ratio_is_single_run() {
        let (pair, gt) = case();
        let t = sweep_ratios(&pair, &gt, &quick(), &[1.0], &[SchemeKind::Random], 5).unwrap();
        assert_eq!(t.runs.len(), 1);
        assert_eq!(t.aggregates.len(), 1);
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().all(|l| l.split(',').count() == 6));
    }

    #[test]
    fn mismatched_ground_truth() {
        let (pair, _) = case();
        let gt = FlowField::zeros(3, 3);
        assert!(sweep_ratios(&pair, &gt, &quick(), &[1.0], &[SchemeKind::Full], 1).is_err());
    }
}
