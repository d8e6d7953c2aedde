//! State and contract estimation at known parameters.

use serde::{Deserialize, Serialize};

use crate::diagnostics::rmse;
use crate::error::{Error, Result};
use crate::filters::{confidence_bands, run_filter, Bands, FilterOutput, ObservationPanel};
use crate::mathcore::Matrix;
use crate::model::{FilterKind, ModelKind, ModelParams};
use crate::ss_model::MeasurementErrorSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub filter: FilterKind,
    pub output: FilterOutput,
    pub bands: Bands,
    /// Fitted prices in price units.
    pub fitted_prices: Matrix,
    /// Per-contract RMSE of fitted against observed prices.
    pub rmse: Vec<f64>,
}

/// Compact, serializable view of an [`Estimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub model: ModelKind,
    pub filter: FilterKind,
    pub n_obs: usize,
    pub m: usize,
    pub level: f64,
    pub loglik: f64,
    pub rmse: Vec<f64>,
    pub filtered_states: Vec<[f64; 2]>,
}

/// Summary plus the fitted prices and bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    #[serde(flatten)]
    pub summary: EstimateSummary,
    pub fitted_prices: Vec<Vec<f64>>,
    pub band_lower: Vec<Vec<f64>>,
    pub band_upper: Vec<Vec<f64>>,
}

pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Runs `filter` on `panel` and summarizes the fit against the panel's
/// observed prices.
pub fn estimate(
    params: &ModelParams,
    errs: &MeasurementErrorSpec,
    filter: FilterKind,
    panel: &ObservationPanel,
    level: f64,
) -> Result<Estimate> {
    let output = run_filter(params, filter, panel, errs)?;
    if !output.loglik.is_finite() {
        return Err(Error::numerical(panel.n() - 1, "log-likelihood is not finite"));
    }
    let bands = confidence_bands(&output, level)?;
    let fitted_prices = output.fitted_prices();
    let observed = match panel.model_kind {
        ModelKind::Ss => panel.y.map(f64::exp),
        ModelKind::Pd => panel.y.clone(),
    };
    let rmse = rmse(&fitted_prices, &observed)?;
    Ok(Estimate {
        filter,
        output,
        bands,
        fitted_prices,
        rmse,
    })
}

impl Estimate {
    pub fn summary(&self) -> EstimateSummary {
        EstimateSummary {
            model: self.output.model_kind,
            filter: self.filter,
            n_obs: self.output.n(),
            m: self.output.m(),
            level: self.bands.level,
            loglik: self.output.loglik,
            rmse: self.rmse.clone(),
            filtered_states: self.output.a_filt.iter().map(|a| [a[0], a[1]]).collect(),
        }
    }

    pub fn report(&self) -> EstimateReport {
        EstimateReport {
            summary: self.summary(),
            fitted_prices: rows(&self.fitted_prices),
            band_lower: rows(&self.bands.lower),
            band_upper: rows(&self.bands.upper),
        }
    }
}
