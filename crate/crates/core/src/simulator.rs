//! Synthetic futures panels from either model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::ObservationPanel;
use crate::mathcore::{mvn_sample, Matrix, RandomStream, Vector};
use crate::model::{FilterKind, ModelKind, ModelParams};
use crate::pd_model::PdPricer;
use crate::ss_model::{build_measurement, build_transition, MeasurementErrorSpec, DEFAULT_DT};

/// Trading days per contract month.
pub const DAYS_PER_MONTH: usize = 30;
/// Day-count base for maturities.
pub const DAYS_PER_YEAR: f64 = 360.0;

/// Sub-stream indices of the simulation seed.
const PROCESS_NOISE_STREAM: u64 = 0;
const MEASUREMENT_NOISE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_obs: usize,
    pub m: usize,
    pub dt: f64,
    pub seed: u64,
    pub model_kind: ModelKind,
    pub filter_kind: FilterKind,
}

impl SimConfig {
    pub fn new(model_kind: ModelKind, n_obs: usize, m: usize, seed: u64) -> Self {
        Self {
            n_obs,
            m,
            dt: DEFAULT_DT,
            seed,
            model_kind,
            filter_kind: model_kind.default_filter(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_obs < 2 {
            return Err(Error::invalid("n_obs", "need at least two observations"));
        }
        if self.m < 1 {
            return Err(Error::invalid("m", "need at least one contract"));
        }
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::invalid("dt", "must be finite and > 0"));
        }
        self.model_kind.check_filter(self.filter_kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPanel {
    pub model_kind: ModelKind,
    /// True `(χ, ξ)` per date.
    pub states: Matrix,
    /// Futures prices in price units.
    pub prices: Matrix,
    pub maturities: Matrix,
    /// Log prices; present for the Schwartz–Smith model only.
    pub log_prices: Option<Matrix>,
    pub seed: u64,
}

impl SimulatedPanel {
    pub fn n(&self) -> usize {
        self.prices.nrows()
    }

    pub fn m(&self) -> usize {
        self.prices.ncols()
    }

    /// Measurements in the units the matching filter consumes.
    pub fn observations(&self) -> Matrix {
        match &self.log_prices {
            Some(logs) => logs.clone(),
            None => self.prices.clone(),
        }
    }

    pub fn observation_panel(&self, dt: f64) -> Result<ObservationPanel> {
        ObservationPanel::new(self.observations(), self.maturities.clone(), dt, self.model_kind)
    }
}

/// Rolling monthly contracts: contract `j` (1-based) at day `t` has
/// `(30 j − t mod 30) / 360` years left, rolling over every 30 days.
pub fn maturity_grid(config: &SimConfig) -> Matrix {
    Matrix::from_fn(config.n_obs, config.m, |t, j| {
        let days = (j + 1) * DAYS_PER_MONTH - t % DAYS_PER_MONTH;
        days as f64 / DAYS_PER_YEAR
    })
}

/// Simulates states from the stationary mean and prices with additive
/// Gaussian measurement noise. Deterministic in `config.seed`.
pub fn simulate(
    params: &ModelParams,
    errs: &MeasurementErrorSpec,
    config: &SimConfig,
) -> Result<SimulatedPanel> {
    params.validate()?;
    errs.validate()?;
    config.validate()?;
    if params.kind() != config.model_kind {
        return Err(Error::invalid(
            "model",
            format!("config is for {} but parameters are {}", config.model_kind, params.kind()),
        ));
    }
    if errs.m != config.m {
        return Err(Error::invalid(
            "m",
            format!("error spec has {} contracts, config has {}", errs.m, config.m),
        ));
    }

    let factors = params.factors();
    let trans = build_transition(factors, config.dt)?;
    let maturities = maturity_grid(config);
    let sigma_v = errs.covariance();
    let zero_state = Vector::zeros(2);
    let zero_obs = Vector::zeros(config.m);

    let root = RandomStream::new(config.seed);
    let mut process_noise = root.substream(PROCESS_NOISE_STREAM);
    let mut measurement_noise = root.substream(MEASUREMENT_NOISE_STREAM);

    let pricer = match params {
        ModelParams::Pd(p) => {
            let mut grid: Vec<f64> = maturities.iter().copied().collect();
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            Some(PdPricer::with_grid(p, grid)?)
        }
        ModelParams::Ss(_) => None,
    };

    let mut states = Matrix::zeros(config.n_obs, 2);
    let mut y = Matrix::zeros(config.n_obs, config.m);
    let mut x = factors.stationary_mean();
    for t in 0..config.n_obs {
        x = trans.mean_step(&x) + mvn_sample(&zero_state, &trans.sigma_w, &mut process_noise)?;
        states.set_row(t, &x.transpose());

        let taus: Vec<f64> = maturities.row(t).iter().copied().collect();
        let clean = match (&pricer, params) {
            (Some(pricer), _) => pricer.measurement(&x, &taus)?,
            (None, ModelParams::Ss(p)) => {
                let (d, f) = build_measurement(p, &taus)?;
                d + f * &x
            }
            (None, ModelParams::Pd(_)) => unreachable!("pricer is built for PD"),
        };
        let noisy = clean + mvn_sample(&zero_obs, &sigma_v, &mut measurement_noise)?;
        y.set_row(t, &noisy.transpose());
    }

    let (prices, log_prices) = match params {
        ModelParams::Ss(_) => (y.map(f64::exp), Some(y)),
        ModelParams::Pd(_) => (y, None),
    };
    Ok(SimulatedPanel {
        model_kind: config.model_kind,
        states,
        prices,
        maturities,
        log_prices,
        seed: config.seed,
    })
}

/// Same parameters, fresh noise.
pub fn regenerate(
    params: &ModelParams,
    errs: &MeasurementErrorSpec,
    config: &SimConfig,
    new_seed: u64,
) -> Result<SimulatedPanel> {
    simulate(params, errs, &SimConfig { seed: new_seed, ..*config })
}
