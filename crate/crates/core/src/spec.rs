//! JSON run specification shared by the HTTP service and the CLI.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};
use crate::model::{FilterKind, ModelKind, ModelParams};
use crate::pd_model::{PDParams, PolyCoeffs};
use crate::simulator::SimConfig;
use crate::ss_model::{MeasurementErrorSpec, SSParams, DEFAULT_DT};

fn default_dt() -> f64 {
    DEFAULT_DT
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorsSpec {
    pub sigma_first: f64,
    pub sigma_last: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSpec {
    pub n_obs: usize,
    pub m: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub model: ModelKind,
    pub params: SSParams,
    /// Polynomial coefficients in the order (1, χ, ξ, χ², χξ, ξ²); PD only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<[f64; 6]>,
    pub errors: ErrorsSpec,
    pub config: ConfigSpec,
}

/// A spec that passed every hard check.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedSpec {
    pub params: ModelParams,
    pub errs: MeasurementErrorSpec,
    pub config: SimConfig,
    pub warnings: Vec<Warning>,
}

impl SimulationSpec {
    pub fn filter(&self) -> FilterKind {
        self.config.filter.unwrap_or(self.model.default_filter())
    }

    /// Copy with defaults made explicit, as echoed back to users.
    pub fn effective(&self) -> SimulationSpec {
        let mut spec = self.clone();
        spec.config.filter = Some(self.filter());
        spec
    }

    pub fn validate(&self, max_obs: Option<usize>) -> Result<ValidatedSpec> {
        let mut warnings = Vec::new();
        let params = match self.model {
            ModelKind::Ss => {
                if self.alpha.is_some() {
                    warnings.push(Warning::new("alpha", "ignored for the ss model"));
                }
                ModelParams::Ss(self.params)
            }
            ModelKind::Pd => {
                let alpha = self
                    .alpha
                    .ok_or_else(|| Error::invalid("alpha", "required for the pd model"))?;
                ModelParams::Pd(PDParams {
                    base: self.params,
                    coeffs: PolyCoeffs(alpha),
                })
            }
        };
        warnings.extend(params.validate()?);

        if let Some(max) = max_obs {
            if self.config.n_obs > max {
                return Err(Error::invalid("n_obs", format!("at most {max} observations allowed")));
            }
        }
        let config = SimConfig {
            n_obs: self.config.n_obs,
            m: self.config.m,
            dt: self.config.dt,
            seed: self.config.seed,
            model_kind: self.model,
            filter_kind: self.filter(),
        };
        config.validate()?;

        let errs = MeasurementErrorSpec::new(self.config.m, self.errors.sigma_first, self.errors.sigma_last);
        warnings.extend(errs.validate()?);

        Ok(ValidatedSpec {
            params,
            errs,
            config,
            warnings,
        })
    }
}

/// JSON Schema describing [`SimulationSpec`].
pub fn schema() -> serde_json::Value {
    let number = serde_json::json!({ "type": "number" });
    serde_json::json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "SimulationSpec",
        "type": "object",
        "additionalProperties": false,
        "required": ["model", "params", "errors", "config"],
        "properties": {
            "model": { "enum": ["ss", "pd"] },
            "params": {
                "type": "object",
                "additionalProperties": false,
                "required": ["kappa", "gamma", "mu_xi", "sigma_chi", "sigma_xi", "rho"],
                "properties": {
                    "kappa": { "type": "number", "exclusiveMinimum": 0 },
                    "gamma": { "type": "number", "exclusiveMinimum": 0 },
                    "mu_xi": number,
                    "sigma_chi": { "type": "number", "exclusiveMinimum": 0 },
                    "sigma_xi": { "type": "number", "exclusiveMinimum": 0 },
                    "rho": { "type": "number", "exclusiveMinimum": -1, "exclusiveMaximum": 1 },
                    "lambda_chi": { "type": "number", "default": 0 },
                    "lambda_xi": { "type": "number", "default": 0 }
                }
            },
            "alpha": {
                "description": "coefficients of (1, chi, xi, chi^2, chi*xi, xi^2); required for pd",
                "type": "array",
                "items": number,
                "minItems": 6,
                "maxItems": 6
            },
            "errors": {
                "type": "object",
                "additionalProperties": false,
                "required": ["sigma_first", "sigma_last"],
                "properties": {
                    "sigma_first": { "type": "number", "exclusiveMinimum": 0 },
                    "sigma_last": { "type": "number", "exclusiveMinimum": 0 }
                }
            },
            "config": {
                "type": "object",
                "additionalProperties": false,
                "required": ["n_obs", "m"],
                "properties": {
                    "n_obs": { "type": "integer", "minimum": 2 },
                    "m": { "type": "integer", "minimum": 1 },
                    "dt": { "type": "number", "exclusiveMinimum": 0, "default": DEFAULT_DT },
                    "seed": { "type": "integer", "minimum": 0, "default": 0 },
                    "filter": { "enum": ["kf", "ekf", "ukf"] }
                }
            }
        }
    })
}
