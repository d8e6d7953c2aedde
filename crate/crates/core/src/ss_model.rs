//! Schwartz–Smith two-factor model.
//!
//! `log S_t = χ_t + ξ_t` where both factors are Ornstein–Uhlenbeck processes.
//! States evolve under the real measure; futures prices use the risk-neutral
//! drifts, which differ by the premiums `lambda_chi` and `lambda_xi`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};
use crate::mathcore::{Matrix, Vector};

/// Below this rate the `(1 - e^{-r t}) / r` factors switch to their series limit.
pub const SMALL_RATE: f64 = 1e-8;

/// Default time step: one trading day on a 360-day year.
pub const DEFAULT_DT: f64 = 1.0 / 360.0;

/// `(1 - e^{-rate·t}) / rate`, continuous through `rate = 0`.
pub fn decay_integral(rate: f64, t: f64) -> f64 {
    if rate.abs() < SMALL_RATE {
        t * (1.0 - 0.5 * rate * t)
    } else {
        -(-rate * t).exp_m1() / rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SSParams {
    pub kappa: f64,
    pub gamma: f64,
    pub mu_xi: f64,
    pub sigma_chi: f64,
    pub sigma_xi: f64,
    pub rho: f64,
    #[serde(default)]
    pub lambda_chi: f64,
    #[serde(default)]
    pub lambda_xi: f64,
}

impl SSParams {
    /// Checks hard invariants and returns the soft-range warnings.
    pub fn validate(&self) -> Result<Vec<Warning>> {
        let fields = [
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("mu_xi", self.mu_xi),
            ("sigma_chi", self.sigma_chi),
            ("sigma_xi", self.sigma_xi),
            ("rho", self.rho),
            ("lambda_chi", self.lambda_chi),
            ("lambda_xi", self.lambda_xi),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        for (name, value) in [
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("sigma_chi", self.sigma_chi),
            ("sigma_xi", self.sigma_xi),
        ] {
            if value <= 0.0 {
                return Err(Error::invalid(name, "must be > 0"));
            }
        }
        if self.rho <= -1.0 || self.rho >= 1.0 {
            return Err(Error::invalid("rho", "must lie strictly between -1 and 1"));
        }

        let mut warnings = Vec::new();
        for (name, value) in [("kappa", self.kappa), ("gamma", self.gamma)] {
            if value > 3.0 {
                warnings.push(Warning::new(
                    name,
                    format!("{name} = {value} is outside the typical range (0, 3]"),
                ));
            }
        }
        if self.kappa <= self.gamma {
            warnings.push(Warning::new(
                "kappa",
                "kappa should exceed gamma so the short-term factor reverts faster; \
                 otherwise the two factors are hard to identify",
            ));
        }
        Ok(warnings)
    }

    /// Long-run mean of `(χ, ξ)` under the real measure.
    pub fn stationary_mean(&self) -> Vector {
        Vector::from_row_slice(&[0.0, self.mu_xi / self.gamma])
    }

    /// Stationary covariance of `(χ, ξ)`.
    pub fn stationary_cov(&self) -> Matrix {
        let cross = self.sigma_chi * self.sigma_xi * self.rho / (self.kappa + self.gamma);
        Matrix::from_row_slice(
            2,
            2,
            &[
                self.sigma_chi.powi(2) / (2.0 * self.kappa),
                cross,
                cross,
                self.sigma_xi.powi(2) / (2.0 * self.gamma),
            ],
        )
    }
}

/// Measurement standard errors, evenly spaced from `sigma_first` to `sigma_last`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementErrorSpec {
    pub m: usize,
    pub sigma_first: f64,
    pub sigma_last: f64,
}

impl MeasurementErrorSpec {
    pub fn new(m: usize, sigma_first: f64, sigma_last: f64) -> Self {
        Self {
            m,
            sigma_first,
            sigma_last,
        }
    }

    pub fn validate(&self) -> Result<Vec<Warning>> {
        if self.m == 0 {
            return Err(Error::invalid("m", "need at least one contract"));
        }
        for (name, value) in [("sigma_first", self.sigma_first), ("sigma_last", self.sigma_last)] {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::invalid(name, "must be finite and > 0"));
            }
        }
        let mut warnings = Vec::new();
        if self.m == 1 && self.sigma_last != self.sigma_first {
            warnings.push(Warning::new(
                "sigma_last",
                "ignored with a single contract; sigma_first is used",
            ));
        }
        Ok(warnings)
    }

    /// σ₁..σ_m in arithmetic progression.
    pub fn sigmas(&self) -> Vec<f64> {
        if self.m == 1 {
            return vec![self.sigma_first];
        }
        let step = (self.sigma_last - self.sigma_first) / (self.m - 1) as f64;
        (0..self.m)
            .map(|i| {
                if i + 1 == self.m {
                    self.sigma_last
                } else {
                    self.sigma_first + step * i as f64
                }
            })
            .collect()
    }

    /// Diagonal measurement covariance Σ_v.
    pub fn covariance(&self) -> Matrix {
        let var: Vec<f64> = self.sigmas().iter().map(|s| s * s).collect();
        Matrix::from_diagonal(&Vector::from_vec(var))
    }
}

/// Exact one-step transition `x_t = c + E x_{t-1} + w_t`, `w_t ~ N(0, Σ_w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTransition {
    pub c: Vector,
    pub e: Matrix,
    pub sigma_w: Matrix,
    pub dt: f64,
}

impl StateTransition {
    pub fn mean_step(&self, x: &Vector) -> Vector {
        &self.c + &self.e * x
    }
}

/// Exact discretization of the real-measure OU dynamics over `dt`.
pub fn build_transition(params: &SSParams, dt: f64) -> Result<StateTransition> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::invalid("dt", "must be finite and > 0"));
    }
    let SSParams {
        kappa,
        gamma,
        mu_xi,
        sigma_chi,
        sigma_xi,
        rho,
        ..
    } = *params;

    let c = Vector::from_row_slice(&[0.0, mu_xi * decay_integral(gamma, dt)]);
    let e = Matrix::from_row_slice(2, 2, &[(-kappa * dt).exp(), 0.0, 0.0, (-gamma * dt).exp()]);
    let var_chi = decay_integral(2.0 * kappa, dt) * sigma_chi * sigma_chi;
    let var_xi = decay_integral(2.0 * gamma, dt) * sigma_xi * sigma_xi;
    let cov = decay_integral(kappa + gamma, dt) * sigma_chi * sigma_xi * rho;
    let sigma_w = Matrix::from_row_slice(2, 2, &[var_chi, cov, cov, var_xi]);

    Ok(StateTransition { c, e, sigma_w, dt })
}

/// Deterministic part of the log futures price at time to maturity `tau`.
pub fn a_function(params: &SSParams, tau: f64) -> Result<f64> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::invalid("tau", "time to maturity must be >= 0"));
    }
    let SSParams {
        kappa,
        gamma,
        mu_xi,
        sigma_chi,
        sigma_xi,
        rho,
        lambda_chi,
        lambda_xi,
    } = *params;

    let drift = -lambda_chi * decay_integral(kappa, tau)
        + (mu_xi - lambda_xi) * decay_integral(gamma, tau);
    let variance = decay_integral(2.0 * kappa, tau) * sigma_chi * sigma_chi
        + decay_integral(2.0 * gamma, tau) * sigma_xi * sigma_xi
        + 2.0 * decay_integral(kappa + gamma, tau) * sigma_chi * sigma_xi * rho;
    Ok(drift + 0.5 * variance)
}

/// Linear measurement system `y = d + F x` for log futures prices.
pub fn build_measurement(params: &SSParams, taus: &[f64]) -> Result<(Vector, Matrix)> {
    let m = taus.len();
    let mut d = Vector::zeros(m);
    let mut f = Matrix::zeros(m, 2);
    for (i, &tau) in taus.iter().enumerate() {
        d[i] = a_function(params, tau)?;
        f[(i, 0)] = (-params.kappa * tau).exp();
        f[(i, 1)] = (-params.gamma * tau).exp();
    }
    Ok((d, f))
}
