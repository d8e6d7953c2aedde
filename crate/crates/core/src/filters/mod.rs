//! Kalman-type state estimation for the two-factor models.
//!
//! All filters share the recursion layout
//!
//! ```text
//! a_{t|t-1} = c + E a_{t-1}          P_{t|t-1} = E P_{t-1} Eᵀ + Σ_w
//! ν_t = y_t − ŷ_{t|t-1}              S_t = Cov(ν_t)
//! a_t = a_{t|t-1} + K_t ν_t          P_t = Cov(x_t | y_1..y_t)
//! ```
//!
//! and differ only in how `ŷ_{t|t-1}`, `S_t` and the gain are formed: the
//! linear filter uses an affine measurement, the extended filter linearizes
//! the measurement at `a_{t|t-1}`, and the unscented filter propagates sigma
//! points. The log-likelihood is the Gaussian prediction-error decomposition.

mod linear;
mod unscented;


use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::mathcore::{cholesky, Matrix, Vector};
use crate::model::ModelKind;
use crate::pd_model::PdPricer;
use crate::ss_model::{build_measurement, build_transition, MeasurementErrorSpec, SSParams};

pub use linear::{extended_kalman_filter, kalman_filter, linearized_filter};
pub use unscented::{
    sigma_points, unscented_filter, unscented_kalman_filter, UKF_ALPHA, UKF_BETA, UKF_KAPPA,
};

/// Observed measurements and their times to maturity, one row per date.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPanel {
    /// Log futures prices for the Schwartz–Smith model, raw prices otherwise.
    pub y: Matrix,
    pub maturities: Matrix,
    pub dt: f64,
    pub model_kind: ModelKind,
}

impl ObservationPanel {
    pub fn new(y: Matrix, maturities: Matrix, dt: f64, model_kind: ModelKind) -> Result<Self> {
        if y.nrows() == 0 || y.ncols() == 0 {
            return Err(Error::invalid("y", "panel needs at least one row and one column"));
        }
        if y.shape() != maturities.shape() {
            return Err(Error::invalid(
                "maturities",
                "maturities and observations must have the same shape",
            ));
        }
        if maturities.iter().any(|&t| !t.is_finite() || t < 0.0) {
            return Err(Error::invalid("maturities", "times to maturity must be >= 0"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("y", "observations must be finite"));
        }
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::invalid("dt", "must be finite and > 0"));
        }
        Ok(Self {
            y,
            maturities,
            dt,
            model_kind,
        })
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn m(&self) -> usize {
        self.y.ncols()
    }

    pub fn taus(&self, t: usize) -> Vec<f64> {
        self.maturities.row(t).iter().copied().collect()
    }

    pub fn observation(&self, t: usize) -> Vector {
        self.y.row(t).transpose()
    }
}

/// Prior mean and covariance of the state before the first observation.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterInit {
    pub a0: Vector,
    pub p0: Matrix,
}

impl FilterInit {
    pub fn new(a0: Vector, p0: Matrix) -> Result<Self> {
        if a0.len() != 2 || p0.shape() != (2, 2) {
            return Err(Error::invalid("init", "expected a 2-vector and a 2x2 covariance"));
        }
        if a0.iter().chain(p0.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("init", "entries must be finite"));
        }
        if (p0[(0, 1)] - p0[(1, 0)]).abs() > 1e-12 * p0.amax().max(1.0) {
            return Err(Error::invalid("init", "P0 must be symmetric"));
        }
        let det = p0[(0, 0)] * p0[(1, 1)] - p0[(0, 1)] * p0[(1, 0)];
        if p0[(0, 0)] < 0.0 || p0[(1, 1)] < 0.0 || det < -1e-12 * p0.amax().powi(2) {
            return Err(Error::invalid("init", "P0 must be positive semi-definite"));
        }
        Ok(Self { a0, p0 })
    }

    /// Stationary law of the real-measure factors.
    pub fn stationary(params: &SSParams) -> Self {
        Self {
            a0: params.stationary_mean(),
            p0: params.stationary_cov(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub model_kind: ModelKind,
    /// `a_{t|t-1}` per date.
    pub a_pred: Vec<Vector>,
    pub p_pred: Vec<Matrix>,
    /// `a_t` per date.
    pub a_filt: Vec<Vector>,
    pub p_filt: Vec<Matrix>,
    /// Measurement implied by the filtered state, in the panel's units.
    pub y_fit: Matrix,
    pub innovation: Matrix,
    pub innovation_cov: Vec<Matrix>,
    pub loglik: f64,
}

impl FilterOutput {
    pub fn n(&self) -> usize {
        self.y_fit.nrows()
    }

    pub fn m(&self) -> usize {
        self.y_fit.ncols()
    }

    /// Fitted values in price units (exponentiated for the log-linear model).
    pub fn fitted_prices(&self) -> Matrix {
        match self.model_kind {
            ModelKind::Ss => self.y_fit.map(f64::exp),
            ModelKind::Pd => self.y_fit.clone(),
        }
    }

    /// Filtered means as an n×2 matrix.
    pub fn filtered_states(&self) -> Matrix {
        Matrix::from_fn(self.a_filt.len(), 2, |t, k| self.a_filt[t][k])
    }
}

/// Measurement map `x ↦ y` for one date's contracts.
pub trait MeasurementModel {
    fn observe(&self, x: &Vector, taus: &[f64]) -> Result<Vector>;
    fn jacobian(&self, x: &Vector, taus: &[f64]) -> Result<Matrix>;
}

/// Affine log-price measurement `d(τ) + F(τ) x` of the Schwartz–Smith model.
#[derive(Debug, Clone, Copy)]
pub struct SsMeasurement<'a>(pub &'a SSParams);

impl MeasurementModel for SsMeasurement<'_> {
    fn observe(&self, x: &Vector, taus: &[f64]) -> Result<Vector> {
        let (d, f) = build_measurement(self.0, taus)?;
        Ok(d + f * x)
    }

    fn jacobian(&self, _x: &Vector, taus: &[f64]) -> Result<Matrix> {
        Ok(build_measurement(self.0, taus)?.1)
    }
}

impl MeasurementModel for PdPricer {
    fn observe(&self, x: &Vector, taus: &[f64]) -> Result<Vector> {
        self.measurement(x, taus)
    }

    fn jacobian(&self, x: &Vector, taus: &[f64]) -> Result<Matrix> {
        self.measurement_jacobian(x, taus)
    }
}

/// Lower and upper band per date and contract, in price units.
#[derive(Debug, Clone, PartialEq)]
pub struct Bands {
    pub level: f64,
    pub lower: Matrix,
    pub upper: Matrix,
}

/// Two-sided standard normal quantile for coverage `level`.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("level", "must lie strictly between 0 and 1"));
    }
    Ok(Normal::standard().inverse_cdf(0.5 + 0.5 * level))
}

/// `ŷ ± z·√diag(S_t)` around the fitted measurements. For the log-linear
/// model the band is formed on log prices and then exponentiated.
pub fn confidence_bands(out: &FilterOutput, level: f64) -> Result<Bands> {
    let z = normal_quantile(level)?;
    let (n, m) = (out.n(), out.m());
    let mut lower = Matrix::zeros(n, m);
    let mut upper = Matrix::zeros(n, m);
    for t in 0..n {
        for j in 0..m {
            let half = z * out.innovation_cov[t][(j, j)].max(0.0).sqrt();
            let centre = out.y_fit[(t, j)];
            lower[(t, j)] = centre - half;
            upper[(t, j)] = centre + half;
        }
    }
    if out.model_kind == ModelKind::Ss {
        lower.apply(|v| *v = v.exp());
        upper.apply(|v| *v = v.exp());
    }
    Ok(Bands {
        level,
        lower,
        upper,
    })
}

pub(crate) fn symmetrize(p: &mut Matrix) {
    let n = p.nrows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = avg;
            p[(j, i)] = avg;
        }
    }
}

/// Cholesky-factored innovation covariance.
pub(crate) struct FactoredCov {
    l: Matrix,
}

impl FactoredCov {
    pub(crate) fn new(s: &Matrix, time_index: usize) -> Result<Self> {
        cholesky(s)
            .map(|l| FactoredCov { l })
            .map_err(|e| Error::numerical(time_index, format!("innovation covariance: {e}")))
    }

    /// Solves `S X = B`.
    pub(crate) fn solve(&self, b: &Matrix) -> Matrix {
        let y = self
            .l
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal");
        self.l
            .transpose()
            .solve_upper_triangular(&y)
            .expect("cholesky factor has a positive diagonal")
    }

    pub(crate) fn solve_vec(&self, b: &Vector) -> Vector {
        let b = Matrix::from_column_slice(b.len(), 1, b.as_slice());
        Vector::from_column_slice(self.solve(&b).as_slice())
    }

    pub(crate) fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Gaussian log-density contribution of one innovation.
pub(crate) fn loglik_term(innovation: &Vector, factored: &FactoredCov) -> f64 {
    let m = innovation.len() as f64;
    let quad = innovation.dot(&factored.solve_vec(innovation));
    -0.5 * (m * (2.0 * std::f64::consts::PI).ln() + factored.log_det() + quad)
}

pub(crate) fn check_dims(panel: &ObservationPanel, sigma_v: &Matrix, init: &FilterInit) -> Result<()> {
    if sigma_v.shape() != (panel.m(), panel.m()) {
        return Err(Error::invalid(
            "m",
            format!(
                "measurement error spec has {} contracts but the panel has {}",
                sigma_v.nrows(),
                panel.m()
            ),
        ));
    }
    if init.a0.len() != 2 || init.p0.shape() != (2, 2) {
        return Err(Error::invalid("init", "expected a 2-vector and a 2x2 covariance"));
    }
    Ok(())
}

pub(crate) fn check_kind(panel: &ObservationPanel, expected: ModelKind) -> Result<()> {
    if panel.model_kind != expected {
        return Err(Error::invalid(
            "model",
            format!("filter expects a {expected} panel, got {}", panel.model_kind),
        ));
    }
    Ok(())
}

pub(crate) fn unique_maturities(panel: &ObservationPanel) -> Vec<f64> {
    let mut taus: Vec<f64> = panel.maturities.iter().copied().collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    taus
}

/// Runs `filter` for `params` from the stationary prior.
pub fn run_filter(
    params: &crate::model::ModelParams,
    filter: crate::model::FilterKind,
    panel: &ObservationPanel,
    errs: &MeasurementErrorSpec,
) -> Result<FilterOutput> {
    use crate::model::{FilterKind, ModelParams};
    params.kind().check_filter(filter)?;
    let factors = params.factors();
    let trans = build_transition(factors, panel.dt)?;
    let init = FilterInit::stationary(factors);
    match (params, filter) {
        (ModelParams::Ss(p), _) => kalman_filter(&trans, p, panel, errs, &init),
        (ModelParams::Pd(p), FilterKind::Ukf) => unscented_kalman_filter(&trans, p, panel, errs, &init),
        (ModelParams::Pd(p), _) => extended_kalman_filter(&trans, p, panel, errs, &init),
    }
}
