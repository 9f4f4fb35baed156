//! Exhaustive gain search against a reference Bode magnitude.
//!
//! Every cell of a Kp × Kd grid is scored by the band-limited MSE between its
//! magnitude curve and the reference. Cells are independent, so the search
//! can be spread over a worker pool; the reduction to the best cell walks the
//! surface in row-major order and is therefore independent of evaluation
//! order and worker count.

mod ranges;

pub use ranges::{
    check_coverage, derive_ranges, CoverageReport, GainRange, RandomizationConfig, RandomizationRange, RangeOptions,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuator::{simulate_sweep, ActuatorParams, PDGains, SimConfig, SimError};
use crate::excitation::ChirpSpec;
use crate::freq::{analytic_bode, band_points, mse_on_grid, AnalysisError, BodeMagnitude, FrequencyBand, WelchConfig};
use crate::num::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("invalid gain grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("every grid cell diverged or was singular")]
    NoFiniteCell,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid range options: {0}")]
    InvalidOptions(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Rectangular, evenly spaced Kp × Kd search grid (endpoints included).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainGrid<T> {
    /// (min, max) N·m/rad
    pub kp_range: (T, T),
    /// (min, max) N·m·s/rad
    pub kd_range: (T, T),
    pub kp_count: usize,
    pub kd_count: usize,
}

impl<T: Real> GainGrid<T> {
    pub fn validate(&self) -> Result<(), MatchError> {
        let axis = |name: &str, (lo, hi): (T, T), n: usize| {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(MatchError::InvalidGrid(format!("{name} range needs min < max, got ({lo}, {hi})")));
            }
            if n < 2 {
                return Err(MatchError::InvalidGrid(format!("{name} count must be >= 2, got {n}")));
            }
            Ok(())
        };
        axis("kp", self.kp_range, self.kp_count)?;
        axis("kd", self.kd_range, self.kd_count)?;
        if self.kp_range.0 <= T::zero() {
            return Err(MatchError::InvalidGrid("kp values must be > 0".into()));
        }
        if self.kd_range.0 < T::zero() {
            return Err(MatchError::InvalidGrid("kd values must be >= 0".into()));
        }
        Ok(())
    }

    fn axis_value((lo, hi): (T, T), n: usize, i: usize) -> T {
        if i + 1 == n {
            hi
        } else {
            lo + (hi - lo) * T::from_index(i) / T::from_index(n - 1)
        }
    }

    pub fn kp_at(&self, i: usize) -> T {
        Self::axis_value(self.kp_range, self.kp_count, i)
    }

    pub fn kd_at(&self, j: usize) -> T {
        Self::axis_value(self.kd_range, self.kd_count, j)
    }

    pub fn gains_at(&self, i: usize, j: usize) -> PDGains<T> {
        PDGains::new(self.kp_at(i), self.kd_at(j))
    }

    pub fn kp_values(&self) -> Vec<T> {
        (0..self.kp_count).map(|i| self.kp_at(i)).collect()
    }

    pub fn kd_values(&self) -> Vec<T> {
        (0..self.kd_count).map(|j| self.kd_at(j)).collect()
    }

    /// Grid spacing (ΔKp, ΔKd).
    pub fn cell_size(&self) -> (T, T) {
        (
            (self.kp_range.1 - self.kp_range.0) / T::from_index(self.kp_count - 1),
            (self.kd_range.1 - self.kd_range.0) / T::from_index(self.kd_count - 1),
        )
    }

    pub fn len(&self) -> usize {
        self.kp_count * self.kd_count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Halves the spacing on both axes; every original node stays a node.
    pub fn refined(&self) -> Self {
        Self {
            kp_count: 2 * self.kp_count - 1,
            kd_count: 2 * self.kd_count - 1,
            ..*self
        }
    }
}

/// Settings for scoring cells through the time-domain simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
pub struct SimulatedMatch<T> {
    pub chirp: ChirpSpec<T>,
    pub sim: SimConfig<T>,
    pub welch: WelchConfig<T>,
    pub seed: u64,
}

/// How each cell's magnitude curve is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatchMode<T> {
    /// Closed-form response of the linear model.
    Analytic,
    /// Chirp sweep through the simulator, then Welch estimation. Captures
    /// torque, voltage and friction nonlinearities.
    Simulated(SimulatedMatch<T>),
}

impl<T> MatchMode<T> {
    pub fn name(&self) -> &'static str {
        match self {
            MatchMode::Analytic => "analytic",
            MatchMode::Simulated(_) => "simulated",
        }
    }
}

/// Error surface and the best cell of a grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult<T> {
    pub grid: GainGrid<T>,
    pub band: FrequencyBand<T>,
    /// Row-major `kp_count × kd_count` band MSE (dB²); `+∞` marks diverged cells.
    pub error_surface: Vec<T>,
    pub best_index: (usize, usize),
    pub best_gains: PDGains<T>,
    pub best_error: T,
}

impl<T: Real> MatchResult<T> {
    pub fn error_at(&self, kp_index: usize, kd_index: usize) -> T {
        self.error_surface[kp_index * self.grid.kd_count + kd_index]
    }
}

/// A prepared grid search. Cells can be scored individually, in any order.
#[derive(Debug, Clone)]
pub struct GridMatcher<T> {
    reference: BodeMagnitude<T>,
    params: ActuatorParams<T>,
    grid: GainGrid<T>,
    band: FrequencyBand<T>,
    mode: MatchMode<T>,
}

impl<T: Real> GridMatcher<T> {
    pub fn new(
        reference: &BodeMagnitude<T>,
        params: &ActuatorParams<T>,
        grid: &GainGrid<T>,
        band: &FrequencyBand<T>,
        mode: MatchMode<T>,
    ) -> Result<Self, MatchError> {
        params.validate()?;
        grid.validate()?;
        if let MatchMode::Simulated(s) = &mode {
            s.chirp.validate().map_err(SimError::from)?;
            s.sim.validate()?;
            s.welch.validate()?;
        }
        Ok(Self {
            reference: band_points(reference, band)?,
            params: *params,
            grid: *grid,
            band: *band,
            mode,
        })
    }

    pub fn grid(&self) -> &GainGrid<T> {
        &self.grid
    }

    /// Reference points the error is averaged over.
    pub fn reference_in_band(&self) -> &BodeMagnitude<T> {
        &self.reference
    }

    /// Magnitude curve the search sees for `gains`.
    pub fn candidate_curve(&self, gains: &PDGains<T>) -> Result<BodeMagnitude<T>, MatchError> {
        match &self.mode {
            MatchMode::Analytic => Ok(analytic_bode(&self.params, gains, &self.reference.frequencies)?),
            MatchMode::Simulated(s) => {
                let ts = simulate_sweep(&self.params, gains, &s.chirp, &s.sim, s.seed)?;
                Ok(s.welch.estimate(&ts)?)
            }
        }
    }

    /// Band MSE of one cell; `+∞` when the cell diverges or is singular.
    pub fn evaluate_cell(&self, kp_index: usize, kd_index: usize) -> Result<T, MatchError> {
        let gains = self.grid.gains_at(kp_index, kd_index);
        let curve = match self.candidate_curve(&gains) {
            Ok(c) => c,
            Err(MatchError::Sim(SimError::Divergence { .. }))
            | Err(MatchError::Analysis(AnalysisError::Singularity { .. })) => return Ok(T::infinity()),
            Err(e) => return Err(e),
        };
        let mse = mse_on_grid(&self.reference, &curve, &self.band)?;
        Ok(if mse.is_nan() { T::infinity() } else { mse })
    }

    /// Scores every cell. `workers = Some(1)` runs inline; `None` uses the
    /// global rayon pool.
    pub fn run(&self, workers: Option<usize>) -> Result<MatchResult<T>, MatchError> {
        let cells: Vec<(usize, usize)> = (0..self.grid.kp_count)
            .flat_map(|i| (0..self.grid.kd_count).map(move |j| (i, j)))
            .collect();
        let eval = |&(i, j): &(usize, usize)| self.evaluate_cell(i, j);
        let scored: Vec<Result<T, MatchError>> = match workers {
            Some(1) => cells.iter().map(eval).collect(),
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| MatchError::Pool(e.to_string()))?
                .install(|| cells.par_iter().map(eval).collect()),
            None => cells.par_iter().map(eval).collect(),
        };
        let surface = scored.into_iter().collect::<Result<Vec<_>, _>>()?;
        self.assemble(surface)
    }

    /// Reduces a row-major surface to a result. Ties go to the smaller Kp,
    /// then the smaller Kd.
    pub fn assemble(&self, error_surface: Vec<T>) -> Result<MatchResult<T>, MatchError> {
        if error_surface.len() != self.grid.len() {
            return Err(MatchError::InvalidGrid(format!(
                "surface has {} cells, grid has {}",
                error_surface.len(),
                self.grid.len()
            )));
        }
        let mut best: Option<(usize, T)> = None;
        for (idx, &e) in error_surface.iter().enumerate() {
            if !e.is_finite() {
                continue;
            }
            if best.is_none_or(|(_, b)| e < b) {
                best = Some((idx, e));
            }
        }
        let (idx, best_error) = best.ok_or(MatchError::NoFiniteCell)?;
        let best_index = (idx / self.grid.kd_count, idx % self.grid.kd_count);
        Ok(MatchResult {
            grid: self.grid,
            band: self.band,
            best_gains: self.grid.gains_at(best_index.0, best_index.1),
            best_index,
            best_error,
            error_surface,
        })
    }
}

/// Scores every cell of `grid` against `reference` over `band` and returns the
/// full error surface with its minimum.
pub fn grid_match<T: Real>(
    reference: &BodeMagnitude<T>,
    params: &ActuatorParams<T>,
    grid: &GainGrid<T>,
    band: &FrequencyBand<T>,
    mode: MatchMode<T>,
) -> Result<MatchResult<T>, MatchError> {
    GridMatcher::new(reference, params, grid, band, mode)?.run(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freq::log_space;
    use crate::presets;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn knee_band() -> FrequencyBand<f64> {
        FrequencyBand::new(0.1, 15.0).unwrap()
    }

    #[test]
    fn grid_axes_hit_endpoints_and_hardware_gain() {
        let g = presets::search_grid::<f64>();
        assert_eq!(g.kp_at(0), 13.0);
        assert_eq!(g.kp_at(49), 27.0);
        assert_eq!(g.kd_at(49), 0.7);
        assert_eq!(g.kp_at(14), 17.0);
        let (dkp, dkd) = g.cell_size();
        assert!((dkp - 14.0 / 49.0).abs() < 1e-15);
        assert!((dkd - 0.6 / 49.0).abs() < 1e-15);
    }

    #[test]
    fn grid_validation() {
        let mut g = presets::search_grid::<f64>();
        g.kp_count = 1;
        assert!(g.validate().is_err());
        let mut g = presets::search_grid::<f64>();
        g.kd_range = (0.7, 0.1);
        assert!(g.validate().is_err());
        let mut g = presets::search_grid::<f64>();
        g.kp_range = (0.0, 10.0);
        assert!(g.validate().is_err());
    }

    #[test]
    fn refined_grid_contains_original_nodes() {
        let g: GainGrid<f64> = GainGrid { kp_range: (13.0, 27.0), kd_range: (0.1, 0.7), kp_count: 8, kd_count: 6 };
        let r = g.refined();
        for i in 0..g.kp_count {
            assert!((r.kp_at(2 * i) - g.kp_at(i)).abs() < 1e-12);
        }
        for j in 0..g.kd_count {
            assert!((r.kd_at(2 * j) - g.kd_at(j)).abs() < 1e-12);
        }
    }

    #[test]
    fn self_match_is_exact() {
        let p = presets::knee_params::<f64>();
        let grid = presets::search_grid::<f64>();
        let truth = grid.gains_at(14, 24);
        let reference = analytic_bode(&p, &truth, &log_space(0.05, 50.0, 300)).unwrap();
        let r = grid_match(&reference, &p, &grid, &knee_band(), MatchMode::Analytic).unwrap();
        assert_eq!(r.best_gains, truth);
        assert_eq!(r.best_index, (14, 24));
        assert_eq!(r.best_error, 0.0);
    }

    #[test]
    fn ties_prefer_smaller_gains() {
        let p = presets::knee_params::<f64>();
        let grid = GainGrid { kp_range: (13.0, 27.0), kd_range: (0.1, 0.7), kp_count: 3, kd_count: 3 };
        let reference = analytic_bode(&p, &PDGains::new(17.0, 0.4), &log_space(0.05, 50.0, 100)).unwrap();
        let m = GridMatcher::new(&reference, &p, &grid, &knee_band(), MatchMode::Analytic).unwrap();
        let r = m.assemble(vec![5.0, 1.0, 1.0, 1.0, 2.0, f64::INFINITY, 3.0, 1.0, 9.0]).unwrap();
        assert_eq!(r.best_index, (0, 1));
        assert!(matches!(m.assemble(vec![f64::INFINITY; 9]), Err(MatchError::NoFiniteCell)));
        assert!(m.assemble(vec![0.0; 4]).is_err());
    }

    #[test]
    fn shuffled_evaluation_order_gives_identical_result() {
        let p = presets::knee_params::<f64>();
        let grid = GainGrid { kp_range: (13.0, 27.0), kd_range: (0.1, 0.7), kp_count: 12, kd_count: 9 };
        let reference = analytic_bode(&p, &PDGains::new(18.3, 0.37), &log_space(0.05, 50.0, 200)).unwrap();
        let m = GridMatcher::new(&reference, &p, &grid, &knee_band(), MatchMode::Analytic).unwrap();
        let baseline = m.run(Some(1)).unwrap();

        let mut order: Vec<(usize, usize)> =
            (0..grid.kp_count).flat_map(|i| (0..grid.kd_count).map(move |j| (i, j))).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(3));
        let mut surface = vec![f64::NAN; grid.len()];
        for (i, j) in order {
            surface[i * grid.kd_count + j] = m.evaluate_cell(i, j).unwrap();
        }
        assert_eq!(m.assemble(surface).unwrap(), baseline);
        assert_eq!(m.run(Some(4)).unwrap(), baseline);
        assert_eq!(m.run(None).unwrap(), baseline);
    }

    #[test]
    fn reference_must_cover_band() {
        let p = presets::knee_params::<f64>();
        let reference = analytic_bode(&p, &PDGains::new(17.0, 0.4), &log_space(1.0, 50.0, 100)).unwrap();
        let err = grid_match(&reference, &p, &presets::search_grid(), &knee_band(), MatchMode::Analytic).unwrap_err();
        assert!(matches!(err, MatchError::Analysis(AnalysisError::Coverage { .. })));
    }

    #[test]
    fn simulated_mode_scores_divergent_cells_as_infinite() {
        let p = presets::knee_params::<f64>();
        let chirp = ChirpSpec { duration: 600.0, ..ChirpSpec::default() };
        let sim = SimConfig::default();
        let reference = analytic_bode(&p, &PDGains::new(17.0, 0.4), &log_space(0.05, 50.0, 200)).unwrap();
        let grid = GainGrid { kp_range: (27.0, 27.5), kd_range: (0.0, 0.4), kp_count: 2, kd_count: 2 };
        let mode = MatchMode::Simulated(SimulatedMatch { chirp, sim, welch: WelchConfig::default(), seed: 0 });
        let m = GridMatcher::new(&reference, &p, &grid, &knee_band(), mode).unwrap();
        assert_eq!(m.evaluate_cell(0, 0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn simulated_mode_recovers_generating_gains_on_coarse_grid() {
        let p = presets::knee_params::<f64>();
        let chirp = ChirpSpec { duration: 40.0, ..ChirpSpec::default() };
        let sim = SimConfig { inner_loop_rate: 10_000, ..SimConfig::default() };
        let welch = WelchConfig { window_seconds: 10.0, overlap_fraction: 0.5 };
        let truth = PDGains::new(20.0, 0.4);
        let ts = simulate_sweep(&p, &truth, &chirp, &sim, 0).unwrap();
        let reference = welch.estimate(&ts).unwrap();
        let grid = GainGrid { kp_range: (16.0, 24.0), kd_range: (0.2, 0.6), kp_count: 3, kd_count: 3 };
        let mode = MatchMode::Simulated(SimulatedMatch { chirp, sim, welch, seed: 0 });
        let r = grid_match(&reference, &p, &grid, &knee_band(), mode).unwrap();
        assert_eq!(r.best_gains, truth);
        assert_eq!(r.best_error, 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn best_error_is_surface_minimum(kp in 13.0f64..27.0, kd in 0.1f64..0.7) {
            let p = presets::knee_params::<f64>();
            let grid = GainGrid { kp_range: (13.0, 27.0), kd_range: (0.1, 0.7), kp_count: 15, kd_count: 11 };
            let reference = analytic_bode(&p, &PDGains::new(kp, kd), &log_space(0.05, 50.0, 200)).unwrap();
            let r = grid_match(&reference, &p, &grid, &knee_band(), MatchMode::Analytic).unwrap();
            prop_assert!(r.error_surface.iter().all(|&e| e >= r.best_error));
            prop_assert_eq!(r.error_at(r.best_index.0, r.best_index.1), r.best_error);
        }

        #[test]
        fn refinement_never_worsens_best_error(kp in 13.0f64..27.0, kd in 0.1f64..0.7) {
            let p = presets::knee_params::<f64>();
            let grid = GainGrid { kp_range: (13.0, 27.0), kd_range: (0.1, 0.7), kp_count: 8, kd_count: 6 };
            let reference = analytic_bode(&p, &PDGains::new(kp, kd), &log_space(0.05, 50.0, 200)).unwrap();
            let coarse = grid_match(&reference, &p, &grid, &knee_band(), MatchMode::Analytic).unwrap();
            let fine = grid_match(&reference, &p, &grid.refined(), &knee_band(), MatchMode::Analytic).unwrap();
            prop_assert!(fine.best_error <= coarse.best_error);
        }
    }
}
