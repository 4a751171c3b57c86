//! Huber-smoothed accelerated first-order solver and the coarse-to-fine driver.
//!
//! Each level minimizes
//! `E(u) = Σ H(A u - y) + λ · HVD(v) + μ (‖d‖² + ‖c‖²)`
//! with a Nesterov-type scheme: at step `k` the gradient feeds both a plain
//! gradient step `p` and an anchored aggregate `q` of all past gradients,
//! weighted `(k + 1) / 2`, and the next iterate mixes the two with
//! `τ = 2 / (k + 3)` (see [`Blend`]). The step size is `1 / L` with
//! `L = 16 λ / ε`.

use crate::data_terms::{
    build_system, compute_derivatives, data_energy, data_gradient, DataKind, DataTermSystem, Unknowns,
};
use crate::error::{FlowError, Result};
use crate::grid::{build_pyramid, upsample_flow, FlowField, ImagePair, ScalarGrid};
use crate::regularizer::{adaptive_weights, DiagonalConvention, HuberParams, Hvd, RegularizerWeights};
use crate::scalar::{lit, to_f64, Scalar};
use crate::selection::{select, SelectionScheme};

/// Lower and upper edge of the default regularization weight range.
pub const LAMBDA_RANGE: (f64, f64) = (1e-3, 1e-1);

/// Restarts allowed per level before falling back to the level's initialization.
const MAX_RESTARTS: usize = 12;

/// Energy growth factor between consecutive iterates that triggers a restart.
const BLOWUP_FACTOR: f64 = 10.0;

/// How the plain gradient step `p` and the aggregated step `q` are mixed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Blend {
    /// `v = τ q + (1 - τ) p`: the gradient step dominates as `τ` shrinks.
    #[default]
    Standard,
    /// `v = τ p + (1 - τ) q`: the aggregate dominates. Its effective step
    /// grows with `k`, so iterates drift once the gradient settles.
    Swapped,
}

impl std::str::FromStr for Blend {
    type Err = FlowError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "swapped" => Ok(Self::Swapped),
            other => Err(FlowError::InvalidParameter(format!("unknown blend '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Regularization weight.
    pub lambda: f64,
    /// Huber threshold shared by the data term and the regularizer.
    pub epsilon: f64,
    /// Iteration cap per level (and per warp).
    pub max_iter: usize,
    /// Stop once the mean absolute flow update drops below this (pixels).
    pub conv_tol: f64,
    pub pyramid_scale: f64,
    pub min_side: usize,
    pub data_kind: DataKind,
    /// Edge-stopping weights on the regularizer.
    pub adaptive: bool,
    pub adaptive_alpha: f64,
    pub adaptive_beta: f64,
    pub scheme: SelectionScheme,
    /// Re-linearizations per pyramid level.
    pub warps_per_level: usize,
    /// Quadratic penalty on the GDIM contrast and offset fields.
    pub gdim_penalty: f64,
    pub diagonal: DiagonalConvention,
    pub blend: Blend,
    /// Accept `lambda` outside [`LAMBDA_RANGE`].
    pub allow_any_lambda: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            epsilon: 0.01,
            max_iter: 500,
            conv_tol: 1e-4,
            pyramid_scale: 0.70,
            min_side: 16,
            data_kind: DataKind::Ofc,
            adaptive: false,
            adaptive_alpha: 10.0,
            adaptive_beta: 1.0,
            scheme: SelectionScheme::default(),
            warps_per_level: 1,
            gdim_penalty: 1e-2,
            diagonal: DiagonalConvention::Mirrored,
            blend: Blend::Standard,
            allow_any_lambda: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(FlowError::InvalidParameter(msg));
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !self.allow_any_lambda && !(LAMBDA_RANGE.0..=LAMBDA_RANGE.1).contains(&self.lambda) {
            return bad(format!(
                "lambda {} outside [{}, {}]; set allow_any_lambda to override",
                self.lambda, LAMBDA_RANGE.0, LAMBDA_RANGE.1
            ));
        }
        HuberParams::new(self.epsilon)?;
        if self.max_iter < 1 {
            return bad("max_iter must be at least 1".into());
        }
        if !(self.conv_tol >= 0.0) {
            return bad(format!("conv_tol must be non-negative, got {}", self.conv_tol));
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return bad(format!("pyramid scale must lie in (0, 1), got {}", self.pyramid_scale));
        }
        if self.min_side < 2 {
            return bad("min_side must be at least 2".into());
        }
        if self.warps_per_level < 1 {
            return bad("warps_per_level must be at least 1".into());
        }
        if !(self.gdim_penalty >= 0.0) {
            return bad("gdim_penalty must be non-negative".into());
        }
        if self.adaptive && !(self.adaptive_alpha > 0.0 && self.adaptive_beta > 0.0) {
            return bad("adaptive weight parameters must be positive".into());
        }
        self.scheme.validate()
    }

    pub fn huber(&self) -> HuberParams {
        HuberParams::new(self.epsilon).expect("validated epsilon")
    }

    pub fn regularizer(&self) -> Hvd {
        Hvd::new(self.huber()).with_convention(self.diagonal)
    }
}

/// Complete per-level objective: Huber data term, weighted HVD, GDIM penalty.
#[derive(Clone, Debug)]
pub struct Objective<'a, T> {
    pub system: &'a DataTermSystem<T>,
    pub regularizer: Hvd,
    pub weights: &'a RegularizerWeights<T>,
    pub lambda: f64,
    pub nuisance_penalty: f64,
}

impl<'a, T: Scalar> Objective<'a, T> {
    pub fn new(system: &'a DataTermSystem<T>, config: &SolverConfig, weights: &'a RegularizerWeights<T>) -> Self {
        Self {
            system,
            regularizer: config.regularizer(),
            weights,
            lambda: config.lambda,
            nuisance_penalty: config.gdim_penalty,
        }
    }

    fn eps(&self) -> T {
        lit(self.regularizer.huber.epsilon())
    }

    pub fn energy(&self, u: &Unknowns<T>) -> Result<T> {
        let mut e = data_energy(self.system, u, self.eps())?;
        if self.lambda != 0.0 {
            e = e + lit::<T>(self.lambda) * self.regularizer.energy(&u.flow(), self.weights)?;
        }
        if u.n_blocks() == 4 && self.nuisance_penalty != 0.0 {
            let sq: T = u.as_slice()[2 * u.pixels()..].iter().map(|&v| v * v).sum();
            e = e + lit::<T>(self.nuisance_penalty) * sq;
        }
        Ok(e)
    }

    pub fn gradient(&self, u: &Unknowns<T>) -> Result<Unknowns<T>> {
        let mut g = data_gradient(self.system, u, self.eps())?;
        if self.lambda != 0.0 {
            let lam: T = lit(self.lambda);
            let r = self.regularizer.gradient(&u.flow(), self.weights)?;
            for (a, &b) in g.block_mut(0).iter_mut().zip(r.vx.as_slice()) {
                *a = *a + lam * b;
            }
            for (a, &b) in g.block_mut(1).iter_mut().zip(r.vy.as_slice()) {
                *a = *a + lam * b;
            }
        }
        if u.n_blocks() == 4 && self.nuisance_penalty != 0.0 {
            let two_mu: T = lit(2.0 * self.nuisance_penalty);
            let n = u.pixels();
            for (a, &v) in g.as_mut_slice()[2 * n..].iter_mut().zip(&u.as_slice()[2 * n..]) {
                *a = *a + two_mu * v;
            }
        }
        Ok(g)
    }

    /// Step-size constant: `16 λ / ε`, or a data-term bound when `λ = 0`.
    pub fn lipschitz(&self) -> f64 {
        let eps = self.regularizer.huber.epsilon();
        if self.lambda > 0.0 {
            return 16.0 * self.lambda / eps;
        }
        let (w, h) = self.system.dims();
        let mut per_pixel = vec![0.0f64; w * h];
        for row in self.system.rows() {
            per_pixel[row.pixel] += row.coef.iter().map(|&c| to_f64(c * c)).sum::<f64>();
        }
        let data = per_pixel.into_iter().fold(0.0, f64::max) / eps;
        (data + 2.0 * self.nuisance_penalty).max(f64::MIN_POSITIVE)
    }
}

/// Total energy at `u`.
pub fn total_energy<T: Scalar>(
    u: &Unknowns<T>,
    system: &DataTermSystem<T>,
    config: &SolverConfig,
    weights: &RegularizerWeights<T>,
) -> Result<T> {
    Objective::new(system, config, weights).energy(u)
}

/// Data gradient plus `λ` times the HVD gradient on the flow blocks.
pub fn total_gradient<T: Scalar>(
    u: &Unknowns<T>,
    system: &DataTermSystem<T>,
    config: &SolverConfig,
    weights: &RegularizerWeights<T>,
) -> Result<Unknowns<T>> {
    Objective::new(system, config, weights).gradient(u)
}

/// Step weights `(γ, τ)` at iteration `k ≥ 1`.
pub fn step_weights(k: usize) -> (f64, f64) {
    let k = k as f64;
    (0.5 * (k + 1.0), 2.0 / (k + 3.0))
}

/// Running state of the accelerated scheme on one level.
#[derive(Clone, Debug)]
pub struct IterationState<T> {
    /// Index of the next iteration, starting at 1.
    pub k: usize,
    pub v: Unknowns<T>,
    pub v0: Unknowns<T>,
    /// `Σ γⁱ ∂E(vⁱ)`.
    pub grad_history_sum: Vec<T>,
    pub lipschitz: f64,
    pub blend: Blend,
}

impl<T: Scalar> IterationState<T> {
    pub fn new(v0: Unknowns<T>, lipschitz: f64) -> Self {
        let len = v0.as_slice().len();
        Self {
            k: 1,
            v: v0.clone(),
            v0,
            grad_history_sum: vec![T::zero(); len],
            lipschitz,
            blend: Blend::Standard,
        }
    }

    pub fn with_blend(mut self, blend: Blend) -> Self {
        self.blend = blend;
        self
    }

    /// Advances one iteration given `∂E(v)`; returns the mean absolute flow update.
    pub fn step(&mut self, gradient: &Unknowns<T>) -> T {
        let (gamma, tau) = step_weights(self.k);
        let (gamma, tau): (T, T) = (lit(gamma), lit(tau));
        let (wp, wq) = match self.blend {
            Blend::Standard => (T::one() - tau, tau),
            Blend::Swapped => (tau, T::one() - tau),
        };
        let inv_l: T = lit(1.0 / self.lipschitz);
        let flow_len = 2 * self.v.pixels();
        let mut change = T::zero();
        let v0 = self.v0.as_slice();
        for (idx, ((x, &g), acc)) in self
            .v
            .as_mut_slice()
            .iter_mut()
            .zip(gradient.as_slice())
            .zip(self.grad_history_sum.iter_mut())
            .enumerate()
        {
            let p = *x - inv_l * g;
            *acc = *acc + gamma * g;
            let q = v0[idx] - inv_l * *acc;
            let next = wp * p + wq * q;
            if idx < flow_len {
                change = change + (next - *x).abs();
            }
            *x = next;
        }
        self.k += 1;
        change / lit(flow_len as f64)
    }
}

/// Outcome of one level solve.
#[derive(Clone, Debug)]
pub struct LevelSolution<T> {
    pub u: Unknowns<T>,
    pub energy_start: f64,
    pub energy_end: f64,
    pub iterations: usize,
    pub lipschitz: f64,
    pub restarts: usize,
}

enum Attempt<T> {
    Done(Unknowns<T>, f64, usize),
    Restart,
}

fn run_attempt<T: Scalar>(
    objective: &Objective<'_, T>,
    v0: &Unknowns<T>,
    lipschitz: f64,
    config: &SolverConfig,
    energy_start: f64,
) -> Result<Attempt<T>> {
    let mut state = IterationState::new(v0.clone(), lipschitz).with_blend(config.blend);
    let tol: T = lit(config.conv_tol);
    let mut previous = energy_start;
    let mut iterations = 0;
    while state.k <= config.max_iter {
        let g = objective.gradient(&state.v)?;
        if !g.is_finite() {
            return Err(FlowError::NonFiniteGradient {
                iteration: state.k,
                lipschitz,
            });
        }
        let change = state.step(&g);
        iterations += 1;
        let e = to_f64(objective.energy(&state.v)?);
        // Relative to the start as well, so oscillation around a near-zero
        // minimum does not count as growth.
        if !e.is_finite() || e > BLOWUP_FACTOR * previous.max(energy_start).max(f64::MIN_POSITIVE) {
            return Ok(Attempt::Restart);
        }
        previous = e;
        if change < tol {
            break;
        }
    }
    if previous > energy_start {
        return Ok(Attempt::Restart);
    }
    Ok(Attempt::Done(state.v, previous, iterations))
}

/// Minimizes the objective starting from (and anchored at) `v0`.
///
/// If an iterate's energy exceeds 10x the larger of the previous and the
/// starting energy, or the final energy exceeds the starting energy, `L` is
/// doubled and the level restarts.
/// The returned energy never exceeds the starting energy.
pub fn solve_level<T: Scalar>(
    v0: &Unknowns<T>,
    objective: &Objective<'_, T>,
    config: &SolverConfig,
) -> Result<LevelSolution<T>> {
    if !v0.is_finite() {
        return Err(FlowError::InvalidParameter("initial unknowns are not finite".into()));
    }
    let energy_start = to_f64(objective.energy(v0)?);
    let mut lipschitz = objective.lipschitz();
    for restarts in 0..=MAX_RESTARTS {
        if let Attempt::Done(u, energy_end, iterations) =
            run_attempt(objective, v0, lipschitz, config, energy_start)?
        {
            return Ok(LevelSolution {
                u,
                energy_start,
                energy_end,
                iterations,
                lipschitz,
                restarts,
            });
        }
        lipschitz *= 2.0;
    }
    Ok(LevelSolution {
        u: v0.clone(),
        energy_start,
        energy_end: energy_start,
        iterations: 0,
        lipschitz,
        restarts: MAX_RESTARTS + 1,
    })
}

/// Diagnostics for one solve on one pyramid level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelReport {
    pub level: usize,
    pub warp: usize,
    pub width: usize,
    pub height: usize,
    pub rows: usize,
    pub energy_start: f64,
    pub energy_end: f64,
    pub iterations: usize,
    pub lipschitz: f64,
    pub restarts: usize,
}

/// Final flow plus the GDIM nuisance fields and per-level diagnostics.
#[derive(Clone, Debug)]
pub struct FlowEstimate<T> {
    pub flow: FlowField<T>,
    pub contrast: Option<ScalarGrid<T>>,
    pub offset: Option<ScalarGrid<T>>,
    pub levels: Vec<LevelReport>,
}

fn level_seed(seed: u64, level: usize, warp: usize) -> u64 {
    let salt = ((level as u64) << 32 | warp as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    seed ^ salt
}

/// Coarse-to-fine estimation on a pyramid built from `pair`.
///
/// The flow starts at zero on the coarsest level. On every finer level the
/// accumulated flow is up-sampled, frame 1 is warped by it, derivatives and
/// the measurement mask are recomputed, and the level objective is solved in
/// the total flow (the data rows are anchored at the up-sampled estimate, so
/// the solved increment is `u - v⁰`).
pub fn solve_coarse_to_fine<T: Scalar>(pair: &ImagePair<T>, config: &SolverConfig) -> Result<FlowEstimate<T>> {
    config.validate()?;
    let pyramid = build_pyramid(pair, config.pyramid_scale, config.min_side)?;
    let (cw, ch) = pyramid.coarsest().dims();
    let mut flow = FlowField::zeros(cw, ch);
    let mut nuisance = None;
    let mut levels = Vec::new();
    for (index, level) in pyramid.levels.iter().enumerate() {
        let (w, h) = level.dims();
        if flow.dims() != (w, h) {
            flow = upsample_flow(&flow, w, h);
        }
        let weights = if config.adaptive {
            adaptive_weights(&level.frame0, config.adaptive_alpha, config.adaptive_beta)?
        } else {
            RegularizerWeights::Uniform
        };
        for warp in 0..config.warps_per_level {
            let stack = compute_derivatives(level, &flow, config.data_kind)?;
            let scheme = SelectionScheme {
                seed: level_seed(config.scheme.seed, index, warp),
                ..config.scheme
            };
            let mask = select(&scheme, &stack)?;
            let mut system = build_system(config.data_kind, &stack, &mask)?;
            system.anchor_at(&flow);
            let objective = Objective::new(&system, config, &weights);
            let v0 = Unknowns::with_blocks(&flow, config.data_kind.n_blocks());
            let solution = solve_level(&v0, &objective, config)?;
            levels.push(LevelReport {
                level: index,
                warp,
                width: w,
                height: h,
                rows: system.n_rows(),
                energy_start: solution.energy_start,
                energy_end: solution.energy_end,
                iterations: solution.iterations,
                lipschitz: solution.lipschitz,
                restarts: solution.restarts,
            });
            flow = solution.u.flow();
            nuisance = solution.u.contrast().zip(solution.u.offset());
        }
    }
    let (contrast, offset) = match nuisance {
        Some((d, c)) => (Some(d), Some(c)),
        None => (None, None),
    };
    Ok(FlowEstimate {
        flow,
        contrast,
        offset,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_terms::{DataRow, DerivativeStack, SecondOrder};
    use crate::selection::MeasurementMask;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_system(kind: DataKind, w: usize, h: usize, seed: u64) -> DataTermSystem<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = || ScalarGrid::from_fn(w, h, |_, _| rng.gen_range(-0.3..0.3));
        let stack = DerivativeStack {
            ix: g(),
            iy: g(),
            it: g(),
            second: Some(SecondOrder {
                ixx: g(),
                ixy: g(),
                iyx: g(),
                iyy: g(),
                ixt: g(),
                iyt: g(),
            }),
            intensity: g().map(|v| v + 0.5),
            oob: vec![false; w * h],
        };
        build_system(kind, &stack, &MeasurementMask::full(w * h)).unwrap()
    }

    fn random_unknowns(w: usize, h: usize, blocks: usize, seed: u64) -> Unknowns<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = Unknowns::zeros(w, h, blocks);
        u.as_mut_slice().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        u
    }

    #[test]
    fn step_weights_at_first_iteration() {
        assert_eq!(step_weights(1), (1.0, 0.5));
        let mut prev = step_weights(1);
        for k in 2..50 {
            let cur = step_weights(k);
            assert!(cur.0 > prev.0);
            assert!(cur.1 < prev.1 && cur.1 > 0.0);
            prev = cur;
        }
    }

    #[test]
    fn default_config_matches_reference_settings() {
        let c = SolverConfig::default();
        assert_eq!(
            (c.lambda, c.epsilon, c.max_iter, c.pyramid_scale, c.scheme.significant_fraction),
            (0.01, 0.01, 500, 0.70, 0.05)
        );
        c.validate().unwrap();
        let sys = random_system(DataKind::Ofc, 2, 2, 0);
        let w = RegularizerWeights::Uniform;
        assert!((Objective::new(&sys, &c, &w).lipschitz() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_range_validation() {
        let mut c = SolverConfig {
            lambda: 0.5,
            ..SolverConfig::default()
        };
        assert!(c.validate().is_err());
        c.allow_any_lambda = true;
        assert!(c.validate().is_ok());
        c.max_iter = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_data_zero_flow_zero_gradient() {
        let sys = DataTermSystem::<f64>::new(DataKind::Ofc, 4, 4, vec![]);
        let g = total_gradient(&Unknowns::zeros(4, 4, 2), &sys, &SolverConfig::default(), &RegularizerWeights::Uniform)
            .unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lambda_zero_is_pure_data_gradient() {
        let sys = random_system(DataKind::Gdim, 5, 5, 2);
        let u = random_unknowns(5, 5, 4, 3);
        let config = SolverConfig {
            lambda: 0.0,
            gdim_penalty: 0.0,
            allow_any_lambda: true,
            ..SolverConfig::default()
        };
        let g = total_gradient(&u, &sys, &config, &RegularizerWeights::Uniform).unwrap();
        assert_eq!(g, data_gradient(&sys, &u, 0.01).unwrap());
    }

    #[test]
    fn total_gradient_matches_finite_differences() {
        let config = SolverConfig {
            lambda: 0.05,
            ..SolverConfig::default()
        };
        for kind in [DataKind::Ofc, DataKind::Gca, DataKind::Gdim] {
            let sys = random_system(kind, 8, 8, 7);
            let u = random_unknowns(8, 8, kind.n_blocks(), 8);
            let w = RegularizerWeights::Uniform;
            let obj = Objective::new(&sys, &config, &w);
            let g = obj.gradient(&u).unwrap();
            let scale = g.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for k in 0..u.as_slice().len() {
                let (mut p, mut m) = (u.clone(), u.clone());
                p.as_mut_slice()[k] += 1e-6;
                m.as_mut_slice()[k] -= 1e-6;
                let fd = (obj.energy(&p).unwrap() - obj.energy(&m).unwrap()) / 2e-6;
                assert!((fd - g.as_slice()[k]).abs() / scale < 1e-4);
            }
        }
    }

    #[test]
    fn single_pixel_without_regularization_fits_exactly() {
        let sys = DataTermSystem::new(
            DataKind::Ofc,
            1,
            1,
            vec![DataRow { pixel: 0, coef: [0.3f64, -0.2, 0.0, 0.0], rhs: 0.5 }],
        );
        let config = SolverConfig {
            lambda: 0.0,
            allow_any_lambda: true,
            conv_tol: 1e-14,
            max_iter: 5000,
            ..SolverConfig::default()
        };
        let w = RegularizerWeights::Uniform;
        let obj = Objective::new(&sys, &config, &w);
        let sol = solve_level(&Unknowns::zeros(1, 1, 2), &obj, &config).unwrap();
        let r = sys.residuals(&sol.u).unwrap()[0];
        assert!(r.abs() < 1e-6, "residual {r}");
        // minimum-norm direction: the update is parallel to the row
        let (a, b) = (sol.u.as_slice()[0], sol.u.as_slice()[1]);
        assert!((a * -0.2 - b * 0.3).abs() < 1e-9);
    }

    #[test]
    fn optimal_start_is_returned_unchanged() {
        let sys = DataTermSystem::<f64>::new(DataKind::Ofc, 3, 3, vec![]);
        let config = SolverConfig::default();
        let w = RegularizerWeights::Uniform;
        let obj = Objective::new(&sys, &config, &w);
        let v0 = Unknowns::from_flow(&FlowField::constant(3, 3, 0.4, -0.1));
        let sol = solve_level(&v0, &obj, &config).unwrap();
        assert_eq!(sol.u, v0);
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn level_energy_never_increases() {
        for kind in [DataKind::Ofc, DataKind::Gca, DataKind::Gdim] {
            let sys = random_system(kind, 8, 8, 40);
            let config = SolverConfig {
                max_iter: 200,
                ..SolverConfig::default()
            };
            let w = RegularizerWeights::Uniform;
            let obj = Objective::new(&sys, &config, &w);
            let v0 = random_unknowns(8, 8, kind.n_blocks(), 41);
            let sol = solve_level(&v0, &obj, &config).unwrap();
            assert!(sol.energy_end <= sol.energy_start);
            assert!((to_f64(obj.energy(&sol.u).unwrap()) - sol.energy_end).abs() < 1e-9);
        }
    }

    #[test]
    fn intensity_doubling_scales_gradient() {
        // all data residuals and regularizer magnitudes stay on the linear Huber branch
        let (w, h) = (6, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let flow = FlowField {
            vx: ScalarGrid::from_fn(w, h, |i, j| (i * 3 + j * 5) as f64 * 0.7 + rng.gen_range(0.0..0.1)),
            vy: ScalarGrid::from_fn(w, h, |i, j| (i * 2 + j * 7) as f64 * 0.9),
        };
        let rows: Vec<DataRow<f64>> = (0..w * h)
            .map(|p| DataRow { pixel: p, coef: [0.2, 0.1, 0.0, 0.0], rhs: -3.0 - p as f64 })
            .collect();
        let doubled: Vec<DataRow<f64>> =
            rows.iter().map(|r| DataRow { coef: [0.4, 0.2, 0.0, 0.0], rhs: 2.0 * r.rhs, ..*r }).collect();
        let sys1 = DataTermSystem::new(DataKind::Ofc, w, h, rows);
        let sys2 = DataTermSystem::new(DataKind::Ofc, w, h, doubled);
        let u = Unknowns::from_flow(&flow);
        assert!(sys1.residuals(&u).unwrap().iter().all(|r| r.abs() > 0.01));
        let c1 = SolverConfig { lambda: 0.01, ..SolverConfig::default() };
        let c2 = SolverConfig { lambda: 0.02, ..SolverConfig::default() };
        let wts = RegularizerWeights::Uniform;
        let g1 = total_gradient(&u, &sys1, &c1, &wts).unwrap();
        let g2 = total_gradient(&u, &sys2, &c2, &wts).unwrap();
        for (a, b) in g1.as_slice().iter().zip(g2.as_slice()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    fn textured_pair(w: usize, h: usize) -> ImagePair<f64> {
        let f = ScalarGrid::from_fn(w, h, |i, j| {
            let (x, y) = (i as f64, j as f64);
            0.5 + 0.25 * (0.5 * x).sin() * (0.4 * y).cos() + 0.1 * (0.3 * (x - y)).sin()
        });
        ImagePair::new(f.clone(), f).unwrap()
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let est = solve_coarse_to_fine(&textured_pair(32, 32), &SolverConfig::default()).unwrap();
        assert!(est.flow.vx.as_slice().iter().chain(est.flow.vy.as_slice()).all(|&v| v.abs() < 1e-4));
        assert!(est.contrast.is_none());
        for l in &est.levels {
            assert!(l.energy_end <= l.energy_start);
        }
    }

    #[test]
    fn single_level_pyramid_equals_solve_level() {
        let mut pair = textured_pair(16, 16);
        pair.frame1 = pair.frame1.map(|v| (v * 0.98 + 0.01).min(1.0));
        let config = SolverConfig { max_iter: 60, ..SolverConfig::default() };
        let est = solve_coarse_to_fine(&pair, &config).unwrap();
        assert_eq!(est.levels.len(), 1);
        let zero = FlowField::zeros(16, 16);
        let stack = compute_derivatives(&pair, &zero, DataKind::Ofc).unwrap();
        let sys = build_system(DataKind::Ofc, &stack, &MeasurementMask::full(256)).unwrap();
        let w = RegularizerWeights::Uniform;
        let sol = solve_level(&Unknowns::from_flow(&zero), &Objective::new(&sys, &config, &w), &config).unwrap();
        assert_eq!(sol.u.flow(), est.flow);
    }

    #[test]
    fn gdim_returns_nuisance_fields() {
        let mut pair = textured_pair(20, 20);
        pair.frame1 = pair.frame0.map(|v| 1.02 * v * 0.9 + 0.02);
        pair.frame0 = pair.frame0.map(|v| v * 0.9);
        let config = SolverConfig { data_kind: DataKind::Gdim, max_iter: 100, ..SolverConfig::default() };
        let est = solve_coarse_to_fine(&pair, &config).unwrap();
        assert!(est.contrast.is_some() && est.offset.is_some());
        for l in &est.levels {
            assert!(l.energy_end <= l.energy_start);
        }
    }

    #[test]
    fn swapped_blend_still_never_raises_energy() {
        let sys = random_system(DataKind::Ofc, 8, 8, 41);
        let w = RegularizerWeights::Uniform;
        let config = SolverConfig { blend: Blend::Swapped, max_iter: 300, ..Default::default() };
        let obj = Objective::new(&sys, &config, &w);
        let sol = solve_level(&Unknowns::zeros(8, 8, 2), &obj, &config).unwrap();
        assert!(sol.energy_end <= sol.energy_start);
        assert!(obj.energy(&sol.u).unwrap() <= sol.energy_start);
    }

    #[test]
    fn blend_weights_at_first_step() {
        // with a unit gradient and L = 1 the two steps coincide at k = 1
        let v0 = Unknowns::<f64>::zeros(1, 1, 2);
        let mut g = Unknowns::zeros(1, 1, 2);
        g.as_mut_slice()[0] = 1.0;
        for blend in [Blend::Standard, Blend::Swapped] {
            let mut st = IterationState::new(v0.clone(), 1.0).with_blend(blend);
            st.step(&g);
            assert_eq!(st.v.as_slice()[0], -1.0);
        }
        // second step: p = v - g, q = v0 - (1 + 1.5) g, τ = 0.4
        let mut a = IterationState::new(v0.clone(), 1.0);
        let mut b = IterationState::new(v0, 1.0).with_blend(Blend::Swapped);
        a.step(&g);
        b.step(&g);
        a.step(&g);
        b.step(&g);
        assert!((a.v.as_slice()[0] - (0.6 * -2.0 + 0.4 * -2.5)).abs() < 1e-12);
        assert!((b.v.as_slice()[0] - (0.4 * -2.0 + 0.6 * -2.5)).abs() < 1e-12);
        assert_eq!("swapped".parse::<Blend>().unwrap(), Blend::Swapped);
        assert!("x".parse::<Blend>().is_err());
    }
}
