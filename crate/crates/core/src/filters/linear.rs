use super::{
    check_dims, check_kind, loglik_term, symmetrize, unique_maturities, FactoredCov, FilterInit,
    FilterOutput, MeasurementModel, ObservationPanel, SsMeasurement,
};
use crate::error::Result;
use crate::mathcore::Matrix;
use crate::model::ModelKind;
use crate::pd_model::{PDParams, PdPricer};
use crate::ss_model::{MeasurementErrorSpec, SSParams, StateTransition};

/// Kalman recursion with the measurement linearized at `a_{t|t-1}`.
///
/// For an affine measurement this is the exact Kalman filter. The covariance
/// update uses the Joseph form and is symmetrized after every step.
pub fn linearized_filter(
    trans: &StateTransition,
    model: &dyn MeasurementModel,
    panel: &ObservationPanel,
    sigma_v: &Matrix,
    init: &FilterInit,
) -> Result<FilterOutput> {
    check_dims(panel, sigma_v, init)?;
    let (n, m) = (panel.n(), panel.m());
    let ident = Matrix::identity(2, 2);

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
        let a_pred = trans.mean_step(&a);
        let mut p_pred = &trans.e * &p * trans.e.transpose() + &trans.sigma_w;
        symmetrize(&mut p_pred);

        let y_pred = model.observe(&a_pred, &taus)?;
        let h = model.jacobian(&a_pred, &taus)?;
        let innovation = panel.observation(t) - y_pred;
        let mut s = &h * &p_pred * h.transpose() + sigma_v;
        symmetrize(&mut s);
        let factored = FactoredCov::new(&s, t)?;

        // K = P Hᵀ S⁻¹, obtained from S Kᵀ = H P.
        let gain = factored.solve(&(&h * &p_pred)).transpose();
        let a_filt = &a_pred + &gain * &innovation;
        let i_kh = &ident - &gain * &h;
        let mut p_filt =
            &i_kh * &p_pred * i_kh.transpose() + &gain * sigma_v * gain.transpose();
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

/// Kalman filter for the Schwartz–Smith model on log futures prices.
pub fn kalman_filter(
    trans: &StateTransition,
    params: &SSParams,
    panel: &ObservationPanel,
    errs: &MeasurementErrorSpec,
    init: &FilterInit,
) -> Result<FilterOutput> {
    check_kind(panel, ModelKind::Ss)?;
    linearized_filter(trans, &SsMeasurement(params), panel, &errs.covariance(), init)
}

/// Extended Kalman filter for the polynomial diffusion model on raw prices.
///
/// The state equation is already linear, so only the measurement is
/// linearized.
pub fn extended_kalman_filter(
    trans: &StateTransition,
    params: &PDParams,
    panel: &ObservationPanel,
    errs: &MeasurementErrorSpec,
    init: &FilterInit,
) -> Result<FilterOutput> {
    check_kind(panel, ModelKind::Pd)?;
    let pricer = PdPricer::with_grid(params, unique_maturities(panel))?;
    linearized_filter(trans, &pricer, panel, &errs.covariance(), init)
}

