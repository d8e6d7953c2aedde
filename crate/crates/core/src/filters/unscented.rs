use super::{
    check_dims, check_kind, loglik_term, symmetrize, unique_maturities, FactoredCov, FilterInit,
    FilterOutput, MeasurementModel, ObservationPanel,
};
use crate::error::{Error, Result};
use crate::mathcore::{cholesky, cholesky_semidefinite, Matrix, Vector};
use crate::model::ModelKind;
use crate::pd_model::{PDParams, PdPricer};
use crate::ss_model::{MeasurementErrorSpec, StateTransition};

pub const UKF_ALPHA: f64 = 1.0;
pub const UKF_BETA: f64 = 2.0;
/// `3 − n` for the two-factor state.
pub const UKF_KAPPA: f64 = 1.0;

const STATE_DIM: usize = 2;

struct Weights {
    spread: f64,
    mean: Vec<f64>,
    cov: Vec<f64>,
}

impl Weights {
    fn new() -> Self {
        let n = STATE_DIM as f64;
        let lambda = UKF_ALPHA * UKF_ALPHA * (n + UKF_KAPPA) - n;
        let outer = 1.0 / (2.0 * (n + lambda));
        let count = 2 * STATE_DIM + 1;
        let mut mean = vec![outer; count];
        let mut cov = vec![outer; count];
        mean[0] = lambda / (n + lambda);
        cov[0] = mean[0] + (1.0 - UKF_ALPHA * UKF_ALPHA + UKF_BETA);
        Weights {
            spread: (n + lambda).sqrt(),
            mean,
            cov,
        }
    }
}

/// Square-root factor for sigma-point generation: a plain Cholesky, then one
/// retry with `1e-9·trace` jitter, then the exact-zero-row semidefinite
/// factor (covers a fully degenerate prior).
fn sigma_factor(p: &Matrix, time_index: usize) -> Result<Matrix> {
    if let Ok(l) = cholesky(p) {
        return Ok(l);
    }
    let jitter = 1e-9 * p.trace();
    if jitter > 0.0 {
        if let Ok(l) = cholesky(&(p + Matrix::identity(STATE_DIM, STATE_DIM) * jitter)) {
            log::debug!("t={time_index}: sigma-point covariance needed jitter {jitter:e}");
            return Ok(l);
        }
    }
    log::debug!("t={time_index}: falling back to semidefinite sigma-point factor");
    cholesky_semidefinite(p)
        .map_err(|e| Error::numerical(time_index, format!("sigma-point covariance: {e}")))
}

fn points_from_factor(mean: &Vector, l: &Matrix, spread: f64) -> Vec<Vector> {
    let mut pts = Vec::with_capacity(2 * STATE_DIM + 1);
    pts.push(mean.clone());
    for k in 0..STATE_DIM {
        pts.push(mean + l.column(k) * spread);
    }
    for k in 0..STATE_DIM {
        pts.push(mean - l.column(k) * spread);
    }
    pts
}

/// The five sigma points `a, a ± √(n+λ)·L e_k` for a Gaussian `(a, P)`.
pub fn sigma_points(mean: &Vector, cov: &Matrix) -> Result<Vec<Vector>> {
    let w = Weights::new();
    Ok(points_from_factor(mean, &sigma_factor(cov, 0)?, w.spread))
}

fn weighted_mean(points: &[Vector], weights: &[f64]) -> Vector {
    let mut acc = Vector::zeros(points[0].len());
    for (p, &w) in points.iter().zip(weights) {
        acc += p * w;
    }
    acc
}

fn cross_cov(xs: &[Vector], x_mean: &Vector, ys: &[Vector], y_mean: &Vector, w: &[f64]) -> Matrix {
    let mut acc = Matrix::zeros(x_mean.len(), y_mean.len());
    for ((x, y), &wk) in xs.iter().zip(ys).zip(w) {
        acc += (x - x_mean) * (y - y_mean).transpose() * wk;
    }
    acc
}

/// Additive-noise unscented Kalman filter.
///
/// Sigma points are drawn from the filtered law, pushed through the state
/// map, and redrawn from the predicted law before the measurement map. The
/// covariance update uses the Joseph form on the statistically linearized
/// measurement `H = P_xyᵀ P⁻¹` with effective noise `S − H P Hᵀ`, which is
/// algebraically `P − K S Kᵀ`.
pub fn unscented_filter(
    trans: &StateTransition,
    model: &dyn MeasurementModel,
    panel: &ObservationPanel,
    sigma_v: &Matrix,
    init: &FilterInit,
) -> Result<FilterOutput> {
    check_dims(panel, sigma_v, init)?;
    let (n, m) = (panel.n(), panel.m());
    let w = Weights::new();
    let ident = Matrix::identity(STATE_DIM, STATE_DIM);

    let mut out = FilterOutput {
        model_kind: panel.model_kind,
        a_pred: Vec::with_capacity(n),
        p_pred: Vec::with_capacity(n),
        a_filt: Vec::with_capacity(n),
        p_filt: Vec::with_capacity(n),
        y_fit: Matrix::zeros(n, m),
        innovation: Matrix::zeros(n, m),
        innovation_cov: Vec::with_capacity(n),
        loglik: 0.0,
    };

    let mut a = init.a0.clone();
    let mut p = init.p0.clone();
    for t in 0..n {
        let taus = panel.taus(t);

        let prior_pts = points_from_factor(&a, &sigma_factor(&p, t)?, w.spread);
        let moved: Vec<Vector> = prior_pts.iter().map(|x| trans.mean_step(x)).collect();
        let a_pred = weighted_mean(&moved, &w.mean);
        let mut p_pred = cross_cov(&moved, &a_pred, &moved, &a_pred, &w.cov) + &trans.sigma_w;
        symmetrize(&mut p_pred);

        let pts = points_from_factor(&a_pred, &sigma_factor(&p_pred, t)?, w.spread);
        let ys = pts
            .iter()
            .map(|x| model.observe(x, &taus))
            .collect::<Result<Vec<_>>>()?;
        let y_pred = weighted_mean(&ys, &w.mean);
        let mut s = cross_cov(&ys, &y_pred, &ys, &y_pred, &w.cov) + sigma_v;
        symmetrize(&mut s);
        let p_xy = cross_cov(&pts, &a_pred, &ys, &y_pred, &w.cov);
        let factored = FactoredCov::new(&s, t)?;

        let innovation = panel.observation(t) - &y_pred;
        let gain = factored.solve(&p_xy.transpose()).transpose();
        let a_filt = &a_pred + &gain * &innovation;

        let mut p_filt = match cholesky(&p_pred) {
            Ok(_) => {
                let pf = FactoredCov::new(&p_pred, t)?;
                let h = pf.solve(&p_xy).transpose();
                let mut r_eff = &s - &h * &p_pred * h.transpose();
                symmetrize(&mut r_eff);
                let i_kh = &ident - &gain * &h;
                &i_kh * &p_pred * i_kh.transpose() + &gain * r_eff * gain.transpose()
            }
            Err(_) => &p_pred - &gain * &s * gain.transpose(),
        };
        symmetrize(&mut p_filt);

        out.loglik += loglik_term(&innovation, &factored);
        out.y_fit.set_row(t, &model.observe(&a_filt, &taus)?.transpose());
        out.innovation.set_row(t, &innovation.transpose());
        out.innovation_cov.push(s);
        out.a_pred.push(a_pred);
        out.p_pred.push(p_pred);
        out.a_filt.push(a_filt.clone());
        out.p_filt.push(p_filt.clone());
        a = a_filt;
        p = p_filt;
    }
    Ok(out)
}

/// Unscented Kalman filter for the polynomial diffusion model on raw prices.
pub fn unscented_kalman_filter(
    trans: &StateTransition,
    params: &PDParams,
    panel: &ObservationPanel,
    errs: &MeasurementErrorSpec,
    init: &FilterInit,
) -> Result<FilterOutput> {
    check_kind(panel, ModelKind::Pd)?;
    let pricer = PdPricer::with_grid(params, unique_maturities(panel))?;
    unscented_filter(trans, &pricer, panel, &errs.covariance(), init)
}
