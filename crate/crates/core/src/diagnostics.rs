//! Coverage-rate quality check and fit summaries.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{confidence_bands, run_filter};
use crate::mathcore::{Matrix, RandomStream};
use crate::model::ModelParams;
use crate::simulator::{simulate, SimConfig};
use crate::ss_model::MeasurementErrorSpec;

pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub n_traj: usize,
    pub seed: u64,
    pub per_traj_coverage: Vec<f64>,
    pub coverage_rate: f64,
    pub pass: bool,
    pub level: f64,
    pub threshold: f64,
}

impl CoverageReport {
    /// A trajectory counts when its coverage is strictly above `level`; the
    /// report passes when the rate is strictly above `threshold`.
    pub fn from_coverages(
        per_traj_coverage: Vec<f64>,
        seed: u64,
        level: f64,
        threshold: f64,
    ) -> Self {
        let n_traj = per_traj_coverage.len();
        let hits = per_traj_coverage.iter().filter(|&&c| c > level).count();
        let coverage_rate = hits as f64 / n_traj as f64;
        CoverageReport {
            n_traj,
            seed,
            per_traj_coverage,
            coverage_rate,
            pass: coverage_rate > threshold,
            level,
            threshold,
        }
    }
}

/// Seed of trajectory `index` (1-based) under the base seed.
pub fn trajectory_seed(seed: u64, index: usize) -> u64 {
    RandomStream::derive_seed(seed, index as u64)
}

/// Fraction of observed prices inside the filter's `level` bands for one
/// simulated trajectory.
pub fn trajectory_coverage(
    params: &ModelParams,
    errs: &MeasurementErrorSpec,
    config: &SimConfig,
    level: f64,
) -> Result<f64> {
    let panel = simulate(params, errs, config)?;
    let out = run_filter(params, config.filter_kind, &panel.observation_panel(config.dt)?, errs)?;
    let bands = confidence_bands(&out, level)?;
    let inside = panel
        .prices
        .iter()
        .zip(bands.lower.iter().zip(bands.upper.iter()))
        .filter(|(p, (lo, hi))| *lo <= *p && *p <= *hi)
        .count();
    Ok(inside as f64 / panel.prices.len() as f64)
}

pub fn coverage_rate(
    params: &ModelParams,
    errs: &MeasurementErrorSpec,
    config: &SimConfig,
    n_traj: usize,
    level: f64,
    threshold: f64,
) -> Result<CoverageReport> {
    coverage_rate_with_progress(params, errs, config, n_traj, level, threshold, &|_| {})
}

/// As [`coverage_rate`], calling `progress` with the number of completed
/// trajectories after each one finishes. Trajectories may run in parallel;
/// the report does not depend on scheduling.
pub fn coverage_rate_with_progress(
    params: &ModelParams,
    errs: &MeasurementErrorSpec,
    config: &SimConfig,
    n_traj: usize,
    level: f64,
    threshold: f64,
    progress: &(dyn Fn(usize) + Sync),
) -> Result<CoverageReport> {
    if n_traj == 0 {
        return Err(Error::invalid("n_traj", "need at least one trajectory"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("level", "must lie strictly between 0 and 1"));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid("threshold", "must lie in [0, 1]"));
    }
    params.validate()?;
    errs.validate()?;
    config.validate()?;

    let done = AtomicUsize::new(0);
    let results: Vec<Result<f64>> = (1..=n_traj)
        .into_par_iter()
        .map(|i| {
            let cfg = SimConfig {
                seed: trajectory_seed(config.seed, i),
                ..*config
            };
            let r = trajectory_coverage(params, errs, &cfg, level).map_err(|e| Error::Trajectory {
                trajectory: i,
                source: Box::new(e),
            });
            progress(done.fetch_add(1, Ordering::SeqCst) + 1);
            r
        })
        .collect();
    let per_traj = results.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(CoverageReport::from_coverages(per_traj, config.seed, level, threshold))
}

/// Per-column root-mean-square error.
pub fn rmse(estimated: &Matrix, truth: &Matrix) -> Result<Vec<f64>> {
    if estimated.shape() != truth.shape() {
        return Err(Error::invalid("estimated", "shape does not match truth"));
    }
    if estimated.nrows() == 0 {
        return Err(Error::invalid("estimated", "no rows"));
    }
    let n = estimated.nrows() as f64;
    Ok((0..estimated.ncols())
        .map(|j| {
            let sq: f64 = estimated
                .column(j)
                .iter()
                .zip(truth.column(j).iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            (sq / n).sqrt()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;
    use crate::ss_model::SSParams;

    fn ss() -> ModelParams {
        SSParams {
            kappa: 0.5,
            gamma: 0.3,
            mu_xi: 1.0,
            sigma_chi: 0.4,
            sigma_xi: 0.2,
            rho: 0.3,
            lambda_chi: 0.0,
            lambda_xi: 0.0,
        }
        .into()
    }

    #[test]
    fn strict_rules_at_the_boundary() {
        let r = CoverageReport::from_coverages(vec![0.95, 0.96], 0, 0.95, 0.95);
        assert_eq!(r.coverage_rate, 0.5);
        let r = CoverageReport::from_coverages(vec![0.99; 20], 0, 0.95, 0.95);
        assert!(r.pass);
        // 19 of 20 = 0.95 exactly: not "exceeds"
        let mut v = vec![0.99; 19];
        v.push(0.5);
        let r = CoverageReport::from_coverages(v, 0, 0.95, 0.95);
        assert_eq!(r.coverage_rate, 0.95);
        assert!(!r.pass);
    }

    #[test]
    fn huge_measurement_noise_passes() {
        let cfg = SimConfig::new(ModelKind::Ss, 100, 3, 4);
        let errs = MeasurementErrorSpec::new(3, 1e3, 1e3);
        let r = coverage_rate(&ss(), &errs, &cfg, 5, 0.95, 0.95).unwrap();
        assert!(r.per_traj_coverage.iter().all(|&c| c == 1.0));
        assert!(r.pass);
    }

    #[test]
    fn single_trajectory_is_bernoulli() {
        let cfg = SimConfig::new(ModelKind::Ss, 100, 3, 4);
        let errs = MeasurementErrorSpec::new(3, 0.02, 0.01);
        let r = coverage_rate(&ss(), &errs, &cfg, 1, 0.95, 0.95).unwrap();
        assert_eq!(r.per_traj_coverage.len(), 1);
        assert!(r.coverage_rate == 0.0 || r.coverage_rate == 1.0);
    }

    #[test]
    fn deterministic_and_monotone_in_level() {
        let cfg = SimConfig::new(ModelKind::Ss, 200, 3, 8);
        let errs = MeasurementErrorSpec::new(3, 0.02, 0.01);
        let a = coverage_rate(&ss(), &errs, &cfg, 6, 0.9, 0.95).unwrap();
        let b = coverage_rate(&ss(), &errs, &cfg, 6, 0.9, 0.95).unwrap();
        assert_eq!(a, b);
        let wide = coverage_rate(&ss(), &errs, &cfg, 6, 0.99, 0.95).unwrap();
        for (lo, hi) in a.per_traj_coverage.iter().zip(&wide.per_traj_coverage) {
            assert!(hi >= lo);
        }
    }

    #[test]
    fn progress_reaches_total() {
        let cfg = SimConfig::new(ModelKind::Ss, 50, 2, 8);
        let errs = MeasurementErrorSpec::new(2, 0.02, 0.01);
        let seen = AtomicUsize::new(0);
        coverage_rate_with_progress(&ss(), &errs, &cfg, 4, 0.95, 0.95, &|k| {
            seen.fetch_max(k, Ordering::SeqCst);
        })
        .unwrap();
        assert_eq!(seen.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn rejects_bad_arguments() {
        let cfg = SimConfig::new(ModelKind::Ss, 50, 2, 8);
        let errs = MeasurementErrorSpec::new(2, 0.02, 0.01);
        assert!(coverage_rate(&ss(), &errs, &cfg, 0, 0.95, 0.95).is_err());
        assert!(coverage_rate(&ss(), &errs, &cfg, 2, 1.0, 0.95).is_err());
    }

    #[test]
    fn rmse_examples() {
        let a = Matrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(rmse(&a, &a).unwrap(), vec![0.0, 0.0]);
        let shifted = a.map(|v| v - 0.25);
        for r in rmse(&shifted, &a).unwrap() {
            assert!((r - 0.25).abs() < 1e-15);
        }
        let b = Matrix::from_row_slice(3, 2, &[0.5, 2.5, 3.0, 3.0, 6.0, 6.5]);
        let r = rmse(&a, &b).unwrap();
        // column 0: (0.5² + 0 + 1²)/3 ; column 1: (0.5² + 1² + 0.5²)/3
        assert!((r[0] - (1.25f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((r[1] - (1.5f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(rmse(&a, &Matrix::zeros(2, 2)).is_err());
    }
}
