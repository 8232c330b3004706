//! Score-equipped probability densities and seeded samplers.
//!
//! A [`Density`] exposes everything the Stein-operator machinery needs:
//! the log-density up to an additive constant, the score ∇log π (invariant
//! to the normalizing constant), optionally the second-order derivative
//! ratios ∂ᵢ∂ⱼπ/π, and a seeded sampler. No normalizing constants are
//! stored anywhere.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal, Uniform};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng::chacha;

/// Numerical lower guard for densities supported on (0, ∞); evaluation
/// below this is rejected as outside the numerical support.
pub const POSITIVE_SUPPORT_EPS: f64 = 1e-12;

/// Per-coordinate support interval; endpoints may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };
    pub const POSITIVE: Interval = Interval {
        lo: 0.0,
        hi: f64::INFINITY,
    };

    /// Open-interval membership with the numerical guard at finite
    /// endpoints: points closer than [`POSITIVE_SUPPORT_EPS`] to a finite
    /// endpoint count as outside.
    pub fn contains(&self, x: f64) -> bool {
        let lo_ok = if self.lo.is_finite() { x >= self.lo + POSITIVE_SUPPORT_EPS } else { true };
        let hi_ok = if self.hi.is_finite() { x <= self.hi - POSITIVE_SUPPORT_EPS } else { true };
        lo_ok && hi_ok && x.is_finite()
    }
}

/// An n×d matrix of i.i.d. sample points with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    data: Vec<f64>, // row-major
    n: usize,
    dim: usize,
    pub seed: u64,
    pub density_id: String,
}

impl Dataset {
    pub fn from_rows(data: Vec<f64>, n: usize, dim: usize, seed: u64, density_id: &str) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("dataset needs n >= 2, got {n}")));
        }
        if data.len() != n * dim {
            return Err(Error::DimensionMismatch { expected: n * dim, got: data.len() });
        }
        Ok(Dataset { data, n, dim, seed, density_id: density_id.to_string() })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Sample covariance matrix of the rows.
    pub fn sample_covariance(&self) -> DMatrix<f64> {
        let (n, d) = (self.n, self.dim);
        let mut mean = vec![0.0; d];
        for row in self.rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut cov = DMatrix::zeros(d, d);
        for row in self.rows() {
            for i in 0..d {
                let di = row[i] - mean[i];
                for j in 0..d {
                    cov[(i, j)] += di * (row[j] - mean[j]);
                }
            }
        }
        cov / (n as f64 - 1.0)
    }
}

/// A d×d symmetric positive-definite covariance matrix together with the
/// eigenvalues established at construction time.
///
/// Serializes to/from a JSON/TOML array-of-arrays (row per row).
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSpec {
    matrix: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl CovarianceSpec {
    /// Validates symmetry (to 1e-12 relative to the largest entry) and
    /// positive definiteness.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::NotPositiveDefinite(format!(
                "expected square non-empty matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let scale = matrix.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        for i in 0..matrix.nrows() {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::NotPositiveDefinite(format!(
                        "asymmetric at ({i},{j}): {} vs {}",
                        matrix[(i, j)],
                        matrix[(j, i)]
                    )));
                }
            }
        }
        let eig = matrix.clone().symmetric_eigen();
        let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if eigenvalues[0] <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "smallest eigenvalue {} <= 0",
                eigenvalues[0]
            )));
        }
        Ok(CovarianceSpec { matrix, eigenvalues })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
}

impl Serialize for CovarianceSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..self.matrix.nrows())
            .map(|i| self.matrix.row(i).iter().copied().collect())
            .collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CovarianceSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(deserializer)?;
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(D::Error::custom("covariance rows must form a square matrix"));
        }
        let matrix = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
        CovarianceSpec::new(matrix).map_err(D::Error::custom)
    }
}

/// Multivariate normal N(0, Σ) with precomputed factorizations.
#[derive(Debug, Clone)]
pub struct MvnDensity {
    spec: CovarianceSpec,
    inverse: DMatrix<f64>,
    chol_l: DMatrix<f64>,
}

impl MvnDensity {
    pub fn covariance(&self) -> &CovarianceSpec {
        &self.spec
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// Σ⁻¹x.
    pub fn inverse_times(&self, x: &[f64]) -> Vec<f64> {
        let v = self.inverse.clone() * DVector::from_column_slice(x);
        v.iter().copied().collect()
    }
}

/// Log-normal law of a geometric Brownian motion at a fixed time.
#[derive(Debug, Clone)]
pub struct GbmDensity {
    pub x0: f64,
    pub mu: f64,
    pub sigma: f64,
    pub t: f64,
    /// Mean of ln X(t): ln x0 + (μ − σ²/2)t.
    pub log_mean: f64,
    /// Variance of ln X(t): σ²t.
    pub log_var: f64,
}

/// A d-dimensional probability model exposing the log-density up to an
/// additive constant, the score, optional second-order derivative ratios,
/// and a seeded sampler. Immutable after construction.
#[derive(Debug, Clone)]
pub enum Density {
    StdNormal { dim: usize },
    Exp1,
    Mvn(MvnDensity),
    LognormalGbm(GbmDensity),
    Product(Vec<Density>),
}

/// Standard normal N(0, I_d).
pub fn std_normal(dim: usize) -> Result<Density> {
    if dim == 0 {
        return Err(Error::InvalidArgument("std_normal needs dim >= 1".into()));
    }
    Ok(Density::StdNormal { dim })
}

/// Exponential Exp(1) on (0, ∞).
pub fn exponential_unit() -> Density {
    Density::Exp1
}

/// Zero-mean multivariate normal with the given covariance.
pub fn mvn(spec: CovarianceSpec) -> Result<Density> {
    let chol = spec
        .matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
    let inverse = chol.inverse();
    let chol_l = chol.unpack();
    Ok(Density::Mvn(MvnDensity { spec, inverse, chol_l }))
}

/// Log-normal law of X(t) under dX = X(μ dt + σ dW), X(0) = x0.
pub fn lognormal_gbm(x0: f64, mu: f64, sigma: f64, t: f64) -> Result<Density> {
    if !(x0 > 0.0 && sigma > 0.0 && t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lognormal_gbm needs x0, sigma, t > 0; got x0={x0}, sigma={sigma}, t={t}"
        )));
    }
    let log_var = sigma * sigma * t;
    let log_mean = x0.ln() + (mu - 0.5 * sigma * sigma) * t;
    Ok(Density::LognormalGbm(GbmDensity { x0, mu, sigma, t, log_mean, log_var }))
}

/// Product of independent 1-D densities.
pub fn product_density(components: Vec<Density>) -> Result<Density> {
    if components.is_empty() {
        return Err(Error::InvalidArgument("product_density needs at least one component".into()));
    }
    if let Some(c) = components.iter().find(|c| c.dim() != 1) {
        return Err(Error::InvalidArgument(format!(
            "product_density components must be 1-D, got `{}` with dim {}",
            c.id(),
            c.dim()
        )));
    }
    Ok(Density::Product(components))
}

/// Covariance QΛQᵀ with Q from the QR decomposition of a matrix with
/// i.i.d. Uniform[−1, 1] entries and Λ holding `dim` evenly spaced values
/// from 0.2 to 2.0 (so Λ = diag{0.2, 0.4, …, 2} at dim = 10).
pub fn random_covariance(dim: usize, seed: u64) -> Result<CovarianceSpec> {
    if dim == 0 {
        return Err(Error::InvalidArgument("random_covariance needs dim >= 1".into()));
    }
    let mut rng = chacha(seed);
    let unif = Uniform::new_inclusive(-1.0, 1.0);
    let m = DMatrix::from_fn(dim, dim, |_, _| rng.sample(unif));
    let q = m.qr().q();
    let lambda: Vec<f64> = (0..dim)
        .map(|k| {
            if dim == 1 {
                0.2
            } else {
                0.2 + 1.8 * k as f64 / (dim as f64 - 1.0)
            }
        })
        .collect();
    let mut sigma = &q * DMatrix::from_diagonal(&DVector::from_vec(lambda)) * q.transpose();
    // exact symmetry despite rounding in the triple product
    for i in 0..dim {
        for j in 0..i {
            let s = 0.5 * (sigma[(i, j)] + sigma[(j, i)]);
            sigma[(i, j)] = s;
            sigma[(j, i)] = s;
        }
    }
    CovarianceSpec::new(sigma)
}

impl Density {
    pub fn dim(&self) -> usize {
        match self {
            Density::StdNormal { dim } => *dim,
            Density::Exp1 => 1,
            Density::Mvn(m) => m.spec.dim(),
            Density::LognormalGbm(_) => 1,
            Density::Product(cs) => cs.len(),
        }
    }

    /// Identifier used in config files.
    pub fn id(&self) -> &'static str {
        match self {
            Density::StdNormal { .. } => "std_normal",
            Density::Exp1 => "exp1",
            Density::Mvn(_) => "mvn",
            Density::LognormalGbm(_) => "lognormal_gbm",
            Density::Product(_) => "product",
        }
    }

    pub fn support(&self, coord: usize) -> Interval {
        match self {
            Density::StdNormal { .. } | Density::Mvn(_) => Interval::REAL_LINE,
            Density::Exp1 | Density::LognormalGbm(_) => Interval::POSITIVE,
            Density::Product(cs) => cs[coord].support(0),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(i, &v)| self.support(i).contains(v))
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        for (i, &v) in x.iter().enumerate() {
            if !self.support(i).contains(v) {
                return Err(Error::OutsideSupport {
                    density: self.id().to_string(),
                    coord: i,
                    value: v,
                });
            }
        }
        Ok(())
    }

    /// Log-density up to an additive constant.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.log_density_unchecked(x))
    }

    fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            Density::StdNormal { .. } => -0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            Density::Exp1 => -x[0],
            Density::Mvn(m) => {
                let y = m.inverse_times(x);
                -0.5 * x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>()
            }
            Density::LognormalGbm(g) => {
                let lx = x[0].ln();
                let z = lx - g.log_mean;
                -lx - z * z / (2.0 * g.log_var)
            }
            Density::Product(cs) => cs
                .iter()
                .zip(x)
                .map(|(c, &v)| c.log_density_unchecked(&[v]))
                .sum(),
        }
    }

    /// Score ∇log π at x.
    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut out = vec![0.0; self.dim()];
        self.score_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn score_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Density::StdNormal { .. } => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = -v;
                }
            }
            Density::Exp1 => out[0] = -1.0,
            Density::Mvn(m) => {
                let y = m.inverse_times(x);
                for (o, v) in out.iter_mut().zip(y) {
                    *o = -v;
                }
            }
            Density::LognormalGbm(g) => {
                out[0] = -1.0 / x[0] - (x[0].ln() - g.log_mean) / (x[0] * g.log_var);
            }
            Density::Product(cs) => {
                for (i, c) in cs.iter().enumerate() {
                    let mut s = [0.0];
                    c.score_into(&x[i..=i], &mut s);
                    out[i] = s[0];
                }
            }
        }
    }

    /// Whether ∂ᵢ∂ⱼπ/π is available.
    pub fn has_second_ratio(&self) -> bool {
        matches!(self, Density::StdNormal { .. } | Density::Mvn(_))
    }

    /// ∂ᵢ∂ⱼπ(x)/π(x); symmetric in (i, j).
    pub fn second_ratio(&self, i: usize, j: usize, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let d = self.dim();
        if i >= d || j >= d {
            return Err(Error::DimensionMismatch { expected: d, got: i.max(j) + 1 });
        }
        match self {
            Density::StdNormal { .. } => {
                Ok(x[i] * x[j] - if i == j { 1.0 } else { 0.0 })
            }
            Density::Mvn(m) => {
                let y = m.inverse_times(x);
                Ok(y[i] * y[j] - m.inverse[(i, j)])
            }
            _ => Err(Error::InvalidArgument(format!(
                "density `{}` does not expose second-order derivative ratios",
                self.id()
            ))),
        }
    }

    /// Draws `count` i.i.d. points. Identical (count, seed) pairs produce
    /// bit-identical datasets.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Dataset> {
        if count < 2 {
            return Err(Error::InvalidArgument(format!("sampler needs count >= 2, got {count}")));
        }
        let d = self.dim();
        let mut rng = chacha(seed);
        let mut data = Vec::with_capacity(count * d);
        let mut scratch = vec![0.0; d];
        for _ in 0..count {
            self.sample_point(&mut rng, &mut scratch);
            data.extend_from_slice(&scratch);
        }
        Dataset::from_rows(data, count, d, seed, self.id())
    }

    fn sample_point<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Density::StdNormal { .. } => {
                for o in out.iter_mut() {
                    *o = rng.sample(StandardNormal);
                }
            }
            Density::Exp1 => out[0] = rng.sample(Exp1),
            Density::Mvn(m) => {
                let d = out.len();
                let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                for i in 0..d {
                    let mut acc = 0.0;
                    for j in 0..=i {
                        acc += m.chol_l[(i, j)] * z[j];
                    }
                    out[i] = acc;
                }
            }
            Density::LognormalGbm(g) => {
                let z: f64 = rng.sample(StandardNormal);
                out[0] = (g.log_mean + g.log_var.sqrt() * z).exp();
            }
            Density::Product(cs) => {
                for (i, c) in cs.iter().enumerate() {
                    c.sample_point(rng, &mut out[i..=i]);
                }
            }
        }
    }
}
