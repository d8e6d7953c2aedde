//! Dense linear-algebra and random-number primitives shared by the models.
//!
//! Matrices here are small (state dimension 2, the monomial basis has 6
//! entries, and contract panels rarely exceed 20 columns), so everything is
//! plain dense `nalgebra` storage.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest matrix `expm` accepts.
pub const MAX_EXPM_DIM: usize = 12;

/// Relative pivot tolerance for [`cholesky`].
pub const PIVOT_TOLERANCE: f64 = 1e-14;

// Padé(13, 13) numerator coefficients; the denominator uses the same values
// with alternating signs.
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

// Largest 1-norm for which Padé(13) is accurate to unit roundoff without scaling.
const THETA13: f64 = 5.371_920_351_148_152;

fn one_norm(a: &Matrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a fixed Padé(13) approximant.
pub fn expm(a: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::invalid("matrix", "expm requires a square matrix"));
    }
    if n == 0 || n > MAX_EXPM_DIM {
        return Err(Error::invalid(
            "matrix",
            format!("dimension {n} outside 1..={MAX_EXPM_DIM}"),
        ));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix", "entries must be finite"));
    }

    let norm = one_norm(a);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * 2f64.powi(-squarings);

    let b = &PADE13;
    let ident = Matrix::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &ident * b[1];
    let u = &scaled * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &ident * b[0];

    let numer = &v + &u;
    let denom = v - u;
    let mut result = denom
        .lu()
        .solve(&numer)
        .ok_or_else(|| Error::invalid("matrix", "Padé denominator is singular"))?;

    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

fn check_symmetric(s: &Matrix) -> Result<()> {
    if s.nrows() != s.ncols() {
        return Err(Error::invalid("matrix", "expected a square matrix"));
    }
    let scale = s.amax().max(f64::MIN_POSITIVE);
    for i in 0..s.nrows() {
        for j in 0..i {
            if (s[(i, j)] - s[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::invalid("matrix", "expected a symmetric matrix"));
            }
        }
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix", "entries must be finite"));
    }
    Ok(())
}

/// Lower-triangular `L` with `L Lᵀ = s`.
///
/// A pivot at or below `1e-14 · max(diag(s))` is rejected with the 0-based
/// index of the failing pivot.
pub fn cholesky(s: &Matrix) -> Result<Matrix> {
    check_symmetric(s)?;
    let n = s.nrows();
    let max_diag = (0..n).map(|i| s[(i, i)]).fold(0.0, f64::max);
    let tol = PIVOT_TOLERANCE * max_diag;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = s[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if pivot.is_nan() || pivot <= tol {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut acc = s[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = acc / d;
        }
    }
    Ok(l)
}

/// Cholesky factor of a semidefinite matrix whose singular directions are
/// exactly zero rows/columns. Those coordinates get zero rows in the factor.
pub fn cholesky_semidefinite(s: &Matrix) -> Result<Matrix> {
    check_symmetric(s)?;
    let n = s.nrows();
    let active: Vec<usize> = (0..n).filter(|&i| s[(i, i)] != 0.0).collect();
    for i in (0..n).filter(|i| !active.contains(i)) {
        if (0..n).any(|j| s[(i, j)] != 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: i });
        }
    }
    let mut l = Matrix::zeros(n, n);
    if active.is_empty() {
        return Ok(l);
    }
    let reduced = Matrix::from_fn(active.len(), active.len(), |i, j| {
        s[(active[i], active[j])]
    });
    let lr = cholesky(&reduced).map_err(|e| match e {
        Error::NotPositiveDefinite { pivot } => Error::NotPositiveDefinite {
            pivot: active[pivot],
        },
        other => other,
    })?;
    for (ri, &i) in active.iter().enumerate() {
        for (rj, &j) in active.iter().enumerate() {
            l[(i, j)] = lr[(ri, rj)];
        }
    }
    Ok(l)
}

/// One draw from `N(mean, cov)`.
///
/// Always consumes exactly `mean.len()` standard normals from the stream, so
/// stream positions stay aligned regardless of the covariance.
pub fn mvn_sample(mean: &Vector, cov: &Matrix, stream: &mut RandomStream) -> Result<Vector> {
    if cov.nrows() != mean.len() {
        return Err(Error::invalid("cov", "covariance dimension does not match mean"));
    }
    let l = cholesky_semidefinite(cov)?;
    let z = Vector::from_fn(mean.len(), |_, _| stream.standard_normal());
    Ok(mean + l * z)
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded normal-variate source backed by ChaCha8.
///
/// Output for a given seed is fixed by the `rand_chacha` stream definition
/// and the `rand_distr` ziggurat sampler, so it is reproducible across
/// platforms for a given build.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    position: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            position: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Seed of the `index`-th sub-stream of `seed`.
    pub fn derive_seed(seed: u64, index: u64) -> u64 {
        mix64(seed ^ mix64(index.wrapping_add(0x5EED)))
    }

    /// Independent stream derived from this stream's seed (not its position).
    pub fn substream(&self, index: u64) -> RandomStream {
        RandomStream::new(Self::derive_seed(self.seed, index))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of normals drawn so far.
    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.position += 1;
        StandardNormal.sample(&mut self.rng)
    }
}
