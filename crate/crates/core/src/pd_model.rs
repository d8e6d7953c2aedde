//! Polynomial diffusion model with a degree-≤2 spot polynomial in `(χ, ξ)`.
//!
//! The spot price is `p(x) = H(x)ᵀ α` on the monomial basis
//! `H(x) = (1, χ, ξ, χ², χξ, ξ²)`. Because the factor dynamics are OU, the
//! generator maps this basis into itself, so conditional expectations of
//! `p(X_T)` are `H(x_t)ᵀ e^{τG} α` with `G` the 6×6 generator matrix.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};
use crate::mathcore::{expm, Matrix, Vector};
use crate::ss_model::SSParams;

pub const BASIS_DIM: usize = 6;

/// Coefficients of `p(x)` in the order `(1, χ, ξ, χ², χξ, ξ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolyCoeffs(pub [f64; BASIS_DIM]);

impl PolyCoeffs {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("alpha", "coefficients must be finite"));
        }
        if self.0.iter().all(|&v| v == 0.0) {
            return Err(Error::invalid("alpha", "at least one coefficient must be non-zero"));
        }
        Ok(())
    }

    pub fn degree(&self) -> u32 {
        if self.0[3..].iter().all(|&v| v == 0.0) {
            1
        } else {
            2
        }
    }

    pub fn as_vector(&self) -> Vector {
        Vector::from_row_slice(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PDParams {
    pub base: SSParams,
    pub coeffs: PolyCoeffs,
}

impl PDParams {
    pub fn validate(&self) -> Result<Vec<Warning>> {
        let mut warnings = self.base.validate()?;
        self.coeffs.validate()?;
        if self.base.rho != 0.0 {
            warnings.push(Warning::new(
                "rho",
                "the generator matrix treats the factors as independent; \
                 rho only affects simulated state paths",
            ));
        }
        Ok(warnings)
    }
}

fn check_state(x: &Vector) -> Result<(f64, f64)> {
    if x.len() != 2 {
        return Err(Error::invalid("x", "state must have two components"));
    }
    if !x[0].is_finite() || !x[1].is_finite() {
        return Err(Error::invalid("x", "state must be finite"));
    }
    Ok((x[0], x[1]))
}

fn check_tau(tau: f64) -> Result<()> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::invalid("tau", "time to maturity must be >= 0"));
    }
    Ok(())
}

/// `H(x) = (1, χ, ξ, χ², χξ, ξ²)`.
pub fn basis(x: &Vector) -> Result<Vector> {
    let (chi, xi) = check_state(x)?;
    Ok(Vector::from_row_slice(&[1.0, chi, xi, chi * chi, chi * xi, xi * xi]))
}

/// Gradient of each monomial, one row per basis element.
pub fn basis_jacobian(x: &Vector) -> Result<Matrix> {
    let (chi, xi) = check_state(x)?;
    Ok(Matrix::from_row_slice(
        BASIS_DIM,
        2,
        &[
            0.0, 0.0, //
            1.0, 0.0, //
            0.0, 1.0, //
            2.0 * chi, 0.0, //
            xi, chi, //
            0.0, 2.0 * xi,
        ],
    ))
}

/// Matrix of the risk-neutral generator on the monomial basis. Column `j`
/// holds the coordinates of the generator applied to basis element `j`.
pub fn generator_matrix(params: &PDParams) -> Matrix {
    let SSParams {
        kappa,
        gamma,
        mu_xi,
        sigma_chi,
        sigma_xi,
        lambda_chi,
        lambda_xi,
        ..
    } = params.base;
    let drift_xi = mu_xi - lambda_xi;

    let mut g = Matrix::zeros(BASIS_DIM, BASIS_DIM);
    g[(0, 1)] = -lambda_chi;
    g[(0, 2)] = drift_xi;
    g[(0, 3)] = sigma_chi * sigma_chi;
    g[(0, 5)] = sigma_xi * sigma_xi;
    g[(1, 1)] = -kappa;
    g[(1, 3)] = -2.0 * lambda_chi;
    g[(1, 4)] = drift_xi;
    g[(2, 2)] = -gamma;
    g[(2, 4)] = -lambda_chi;
    g[(2, 5)] = 2.0 * drift_xi;
    g[(3, 3)] = -2.0 * kappa;
    g[(4, 4)] = -kappa - gamma;
    g[(5, 5)] = -2.0 * gamma;
    g
}

/// Evaluates `e^{τG} α`, optionally memoized over a fixed maturity grid.
///
/// The cache is filled at construction and only read afterwards, so a
/// pricer can be shared across threads.
#[derive(Debug, Clone)]
pub struct PdPricer {
    generator: Matrix,
    alpha: Vector,
    cache: HashMap<u64, Vector>,
}

impl PdPricer {
    pub fn new(params: &PDParams) -> Self {
        Self {
            generator: generator_matrix(params),
            alpha: params.coeffs.as_vector(),
            cache: HashMap::new(),
        }
    }

    /// Pricer with `e^{τG} α` precomputed for every `tau` in `grid`.
    pub fn with_grid(params: &PDParams, grid: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut pricer = Self::new(params);
        let mut cache = HashMap::new();
        for tau in grid {
            if let std::collections::hash_map::Entry::Vacant(slot) = cache.entry(tau.to_bits()) {
                slot.insert(pricer.compute(tau)?);
            }
        }
        pricer.cache = cache;
        Ok(pricer)
    }

    fn compute(&self, tau: f64) -> Result<Vector> {
        check_tau(tau)?;
        if tau == 0.0 {
            return Ok(self.alpha.clone());
        }
        Ok(expm(&(&self.generator * tau))? * &self.alpha)
    }

    /// Coordinates of `x ↦ E*[p(X_{t+τ}) | X_t = x]` on the monomial basis.
    pub fn coordinates(&self, tau: f64) -> Result<Vector> {
        match self.cache.get(&tau.to_bits()) {
            Some(v) => Ok(v.clone()),
            None => self.compute(tau),
        }
    }

    pub fn price(&self, x: &Vector, tau: f64) -> Result<f64> {
        Ok(basis(x)?.dot(&self.coordinates(tau)?))
    }

    pub fn measurement(&self, x: &Vector, taus: &[f64]) -> Result<Vector> {
        let h = basis(x)?;
        let mut y = Vector::zeros(taus.len());
        for (i, &tau) in taus.iter().enumerate() {
            y[i] = h.dot(&self.coordinates(tau)?);
        }
        Ok(y)
    }

    pub fn measurement_jacobian(&self, x: &Vector, taus: &[f64]) -> Result<Matrix> {
        let jb = basis_jacobian(x)?;
        let mut jac = Matrix::zeros(taus.len(), 2);
        for (i, &tau) in taus.iter().enumerate() {
            let coords = self.coordinates(tau)?;
            jac.set_row(i, &(coords.transpose() * &jb));
        }
        Ok(jac)
    }
}

/// Futures price `H(x)ᵀ e^{τG} α`.
pub fn futures_price(params: &PDParams, x: &Vector, tau: f64) -> Result<f64> {
    PdPricer::new(params).price(x, tau)
}

/// Prices of contracts with times to maturity `taus`, in raw price units.
pub fn measurement(params: &PDParams, x: &Vector, taus: &[f64]) -> Result<Vector> {
    PdPricer::new(params).measurement(x, taus)
}

/// Jacobian of [`measurement`] with respect to the state.
pub fn measurement_jacobian(params: &PDParams, x: &Vector, taus: &[f64]) -> Result<Matrix> {
    PdPricer::new(params).measurement_jacobian(x, taus)
}

/// For a degree-1 polynomial the measurement is affine, `y = d + F x`; this
/// returns that `(d, F)` read off the coordinate vectors.
pub fn induced_linear_system(params: &PDParams, taus: &[f64]) -> Result<(Vector, Matrix)> {
    if params.coeffs.degree() != 1 {
        return Err(Error::invalid("alpha", "measurement is only affine for degree 1"));
    }
    let pricer = PdPricer::new(params);
    let mut d = Vector::zeros(taus.len());
    let mut f = Matrix::zeros(taus.len(), 2);
    for (i, &tau) in taus.iter().enumerate() {
        let c = pricer.coordinates(tau)?;
        d[i] = c[0];
        f[(i, 0)] = c[1];
        f[(i, 1)] = c[2];
    }
    Ok((d, f))
}
