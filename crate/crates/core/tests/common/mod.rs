#![allow(dead_code)]

use pdsim_core::mathcore::{Matrix, Vector};
use pdsim_core::pd_model::{PDParams, PolyCoeffs};
use pdsim_core::ss_model::SSParams;

pub fn ss_params() -> SSParams {
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
}

pub fn pd_params() -> PDParams {
    PDParams {
        base: SSParams {
            kappa: 0.5,
            gamma: 0.3,
            mu_xi: 0.2,
            sigma_chi: 0.4,
            sigma_xi: 0.2,
            rho: 0.0,
            lambda_chi: 0.05,
            lambda_xi: 0.02,
        },
        coeffs: PolyCoeffs([1.0, 1.0, 1.0, 0.5, 0.3, 0.2]),
    }
}

pub fn linear_pd_params() -> PDParams {
    PDParams {
        coeffs: PolyCoeffs([1.0, 1.0, 1.0, 0.0, 0.0, 0.0]),
        ..pd_params()
    }
}

pub fn v2(a: f64, b: f64) -> Vector {
    Vector::from_row_slice(&[a, b])
}

/// Smallest eigenvalue of a symmetric 2×2 matrix.
pub fn min_eig2(p: &Matrix) -> f64 {
    let (a, b, d) = (p[(0, 0)], p[(0, 1)], p[(1, 1)]);
    let mid = 0.5 * (a + d);
    let rad = (0.25 * (a - d).powi(2) + b * b).sqrt();
    mid - rad
}
