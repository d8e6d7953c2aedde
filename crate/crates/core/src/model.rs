use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};
use crate::pd_model::PDParams;
use crate::ss_model::SSParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ss,
    Pd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Kf,
    Ekf,
    Ukf,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Ss => "ss",
            ModelKind::Pd => "pd",
        })
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::Kf => "kf",
            FilterKind::Ekf => "ekf",
            FilterKind::Ukf => "ukf",
        })
    }
}

impl ModelKind {
    pub fn default_filter(self) -> FilterKind {
        match self {
            ModelKind::Ss => FilterKind::Kf,
            ModelKind::Pd => FilterKind::Ekf,
        }
    }

    /// KF pairs with the log-linear model; EKF and UKF with the polynomial one.
    pub fn check_filter(self, filter: FilterKind) -> Result<()> {
        let ok = matches!(
            (self, filter),
            (ModelKind::Ss, FilterKind::Kf) | (ModelKind::Pd, FilterKind::Ekf | FilterKind::Ukf)
        );
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(
                "filter",
                format!("filter {filter} cannot be used with model {self}"),
            ))
        }
    }
}

/// Parameters of either supported model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelParams {
    Ss(SSParams),
    Pd(PDParams),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Ss(_) => ModelKind::Ss,
            ModelParams::Pd(_) => ModelKind::Pd,
        }
    }

    /// Factor dynamics shared by both models.
    pub fn factors(&self) -> &SSParams {
        match self {
            ModelParams::Ss(p) => p,
            ModelParams::Pd(p) => &p.base,
        }
    }

    pub fn validate(&self) -> Result<Vec<Warning>> {
        match self {
            ModelParams::Ss(p) => p.validate(),
            ModelParams::Pd(p) => p.validate(),
        }
    }
}

impl From<SSParams> for ModelParams {
    fn from(p: SSParams) -> Self {
        ModelParams::Ss(p)
    }
}

impl From<PDParams> for ModelParams {
    fn from(p: PDParams) -> Self {
        ModelParams::Pd(p)
    }
}
