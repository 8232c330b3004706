//! Parametric zero-mean control-variate families built from Stein-type
//! operators.
//!
//! Every family evaluates
//!
//! ```text
//! ζ_a(x) = Σᵢ (1/π) ∂ᵢ(φᵢ(x) π(x)) = Σᵢ ∂ᵢφᵢ(x) + φᵢ(x)·∂ᵢ log π(x)
//! ```
//!
//! (or its second-order Gaussian analogue) in the expanded product-rule
//! form on the right, so the normalizing constant of π never enters and
//! nothing is ever divided by π. Under the boundary conditions
//! φᵢ·π → 0 at the support endpoints, E_π[ζ_a] = 0 for every admissible
//! parameter vector.

use rand::Rng;

use crate::distributions::{Density, GbmDensity};
use crate::error::{Error, Result};

/// Index of the (i, j) upper-triangle pair (i ≤ j) in row-major order.
fn tri_index(d: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < d);
    i * (2 * d - i - 1) / 2 + j
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasketVariant {
    /// φᵢ(x) = aᵢ₀ exp(aᵢ₁ ln x), two parameters per asset.
    Exp1,
    /// φᵢ(x) = aᵢ₀ exp(aᵢ₁ ln x + aᵢ₂ ln²x), three parameters per asset.
    Exp2,
}

impl BasketVariant {
    pub fn params_per_asset(self) -> usize {
        match self {
            BasketVariant::Exp1 => 2,
            BasketVariant::Exp2 => 3,
        }
    }

    pub fn family_id(self) -> &'static str {
        match self {
            BasketVariant::Exp1 => "basket_exp1",
            BasketVariant::Exp2 => "basket_exp2",
        }
    }
}

#[derive(Debug, Clone)]
enum FamilyKind {
    /// Cubic φ, 1-D density; parameters (a₀, a₁, a₂, a₃).
    Poly1d,
    /// Sum of per-coordinate cubics over an i.i.d.-coordinate density;
    /// parameters row-major, 4 per coordinate.
    AdditivePoly,
    /// First- and second-order Gaussian derivative ratios:
    /// ζ_a = Σᵢ aᵢ ∂ᵢπ/π + Σ_{i≤j} aᵢⱼ ∂ᵢ∂ⱼπ/π.
    GaussHermite,
    /// Per-coordinate cubics composed with a linear map:
    /// ζ = Σᵢ Bᵢᵢ φᵢ′((Bx)ᵢ) + φᵢ((Bx)ᵢ)·∂ᵢ log π(x); nonlinear in B.
    RotatedPoly,
    /// Exponential-of-log φ per asset over independent log-normals.
    BasketExp(BasketVariant),
}

/// A parametric control-variate family ζ_a over a fixed density.
///
/// Immutable after construction; `eval` is pure and safe to call
/// concurrently. Parameters at positions where [`CvFamily::constraint_mask`]
/// is true are pinned to zero before evaluation and have no effect.
#[derive(Debug, Clone)]
pub struct CvFamily {
    kind: FamilyKind,
    density: Density,
    param_dim: usize,
    constraint_mask: Vec<bool>,
    linear: bool,
    cost_units: u32,
}

/// Whether the boundary condition φ·π → 0 forces the constant coefficient
/// of a polynomial φ to vanish for this 1-D component. The exponential
/// density is positive at its left endpoint, so it does.
fn pins_constant_term(component: &Density) -> bool {
    matches!(component, Density::Exp1)
}

/// Cubic-φ control variates for a 1-D density: ζ_a = φ′ + φ·∂log π with
/// φ(x) = a₀ + a₁x + a₂x² + a₃x³. For the exponential density a₀ is
/// pinned to zero by the boundary condition.
pub fn poly1d_family(density: &Density) -> Result<CvFamily> {
    if density.dim() != 1 {
        return Err(Error::InvalidArgument(format!(
            "poly1d family needs a 1-D density, got dim {}",
            density.dim()
        )));
    }
    let mask = vec![pins_constant_term(density), false, false, false];
    Ok(CvFamily {
        kind: FamilyKind::Poly1d,
        density: density.clone(),
        param_dim: 4,
        constraint_mask: mask,
        linear: true,
        cost_units: 2,
    })
}

/// Sum of per-coordinate cubic control variates over a density with
/// independent coordinates; 4 parameters per coordinate, row-major.
/// Exponential coordinates have their constant term aᵢ₀ pinned to zero.
pub fn additive_poly_family(density: &Density) -> Result<CvFamily> {
    let d = density.dim();
    let mask = match density {
        Density::StdNormal { .. } => vec![false; 4 * d],
        Density::Product(cs) => {
            let mut m = Vec::with_capacity(4 * d);
            for c in cs {
                m.push(pins_constant_term(c));
                m.extend_from_slice(&[false, false, false]);
            }
            m
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "additive poly family needs independent coordinates, got `{}`",
                density.id()
            )))
        }
    };
    Ok(CvFamily {
        kind: FamilyKind::AdditivePoly,
        density: density.clone(),
        param_dim: 4 * d,
        constraint_mask: mask,
        linear: true,
        cost_units: 2,
    })
}

/// Gaussian family from first- and second-order derivative ratios:
/// ζ_a = Σᵢ aᵢ ∂ᵢπ/π + Σ_{i≤j} aᵢⱼ ∂ᵢ∂ⱼπ/π. Parameters are the d linear
/// coefficients followed by the upper triangle of (aᵢⱼ) row-major; the
/// summands are shifted Hermite polynomials of degree 1 and 2.
pub fn gaussian_hermite_family(density: &Density) -> Result<CvFamily> {
    if !density.has_second_ratio() {
        return Err(Error::InvalidArgument(format!(
            "gauss hermite family needs second-order derivative ratios; `{}` has none",
            density.id()
        )));
    }
    let d = density.dim();
    let param_dim = d + d * (d + 1) / 2;
    Ok(CvFamily {
        kind: FamilyKind::GaussHermite,
        density: density.clone(),
        param_dim,
        constraint_mask: vec![false; param_dim],
        linear: true,
        cost_units: 2,
    })
}

/// Rotated-cubic family over a (possibly correlated) Gaussian:
/// ζ_{a,B}(x) = Σᵢ Bᵢᵢ φᵢ′((Bx)ᵢ) + φᵢ((Bx)ᵢ)·∂ᵢ log π(x), the chain-rule
/// expansion of (1/π) Σᵢ ∂ᵢ(φᵢ(Bx) π). Parameters: a ∈ ℝ^{d×4} row-major,
/// then B ∈ ℝ^{d×d} row-major; nonlinear in B.
pub fn rotated_poly_family(density: &Density) -> Result<CvFamily> {
    if !matches!(density, Density::StdNormal { .. } | Density::Mvn(_)) {
        return Err(Error::InvalidArgument(format!(
            "rotated poly family needs a Gaussian density, got `{}`",
            density.id()
        )));
    }
    let d = density.dim();
    let param_dim = 4 * d + d * d;
    Ok(CvFamily {
        kind: FamilyKind::RotatedPoly,
        density: density.clone(),
        param_dim,
        constraint_mask: vec![false; param_dim],
        linear: false,
        cost_units: 2,
    })
}

/// Basket family over independent log-normal assets:
/// ζ_a(x) = Σᵢ φᵢ′(xᵢ) + φᵢ(xᵢ)·∂log πᵢ(xᵢ) with φᵢ′ in closed form.
/// Parameters row-major per asset.
pub fn basket_exp_family(densities: &[Density], variant: BasketVariant) -> Result<CvFamily> {
    if densities.is_empty() {
        return Err(Error::InvalidArgument("basket family needs at least one asset".into()));
    }
    if let Some(c) = densities.iter().find(|c| !matches!(c, Density::LognormalGbm(_))) {
        return Err(Error::InvalidArgument(format!(
            "basket family needs log-normal assets, got `{}`",
            c.id()
        )));
    }
    let d = densities.len();
    let param_dim = variant.params_per_asset() * d;
    Ok(CvFamily {
        kind: FamilyKind::BasketExp(variant),
        density: crate::distributions::product_density(densities.to_vec())?,
        param_dim,
        constraint_mask: vec![false; param_dim],
        linear: false,
        cost_units: 2,
    })
}

impl CvFamily {
    pub fn family_id(&self) -> &'static str {
        match &self.kind {
            FamilyKind::Poly1d => "poly1d",
            FamilyKind::AdditivePoly => "additive_poly",
            FamilyKind::GaussHermite => "gauss_hermite",
            FamilyKind::RotatedPoly => "rotated_poly",
            FamilyKind::BasketExp(v) => v.family_id(),
        }
    }

    pub fn density(&self) -> &Density {
        &self.density
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    /// True entries mark parameters pinned to zero.
    pub fn constraint_mask(&self) -> &[bool] {
        &self.constraint_mask
    }

    pub fn is_linear(&self) -> bool {
        self.linear
    }

    pub fn cost_units(&self) -> u32 {
        self.cost_units
    }

    /// Indices of the free (unmasked) parameters.
    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.param_dim).filter(|&i| !self.constraint_mask[i]).collect()
    }

    fn check_params(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.param_dim {
            return Err(Error::DimensionMismatch { expected: self.param_dim, got: a.len() });
        }
        Ok(())
    }

    #[inline]
    fn param(&self, a: &[f64], i: usize) -> f64 {
        if self.constraint_mask[i] {
            0.0
        } else {
            a[i]
        }
    }

    /// ζ_a(x).
    pub fn eval(&self, a: &[f64], x: &[f64]) -> Result<f64> {
        self.check_params(a)?;
        match &self.kind {
            FamilyKind::Poly1d | FamilyKind::AdditivePoly | FamilyKind::GaussHermite => {
                let mut basis = vec![0.0; self.param_dim];
                self.basis_eval(x, &mut basis)?;
                Ok((0..self.param_dim).map(|i| self.param(a, i) * basis[i]).sum())
            }
            FamilyKind::RotatedPoly => self.eval_rotated(a, x),
            FamilyKind::BasketExp(variant) => self.eval_basket(*variant, a, x),
        }
    }

    /// For linear families: fills η_k(x) for all k, so that
    /// ζ_a(x) = Σ_k a_k η_k(x). Masked positions are still filled; fitters
    /// simply ignore them.
    pub fn basis_eval(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if out.len() != self.param_dim {
            return Err(Error::DimensionMismatch { expected: self.param_dim, got: out.len() });
        }
        let score = self.density.score(x)?;
        match &self.kind {
            FamilyKind::Poly1d => {
                let (t, s) = (x[0], score[0]);
                out[0] = s;
                out[1] = 1.0 + t * s;
                out[2] = 2.0 * t + t * t * s;
                out[3] = 3.0 * t * t + t * t * t * s;
            }
            FamilyKind::AdditivePoly => {
                for (i, (&t, &s)) in x.iter().zip(&score).enumerate() {
                    out[4 * i] = s;
                    out[4 * i + 1] = 1.0 + t * s;
                    out[4 * i + 2] = 2.0 * t + t * t * s;
                    out[4 * i + 3] = 3.0 * t * t + t * t * t * s;
                }
            }
            FamilyKind::GaussHermite => {
                let d = x.len();
                let inv_ij = |i: usize, j: usize| -> f64 {
                    match &self.density {
                        Density::StdNormal { .. } => {
                            if i == j {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        Density::Mvn(m) => m.inverse()[(i, j)],
                        _ => unreachable!(),
                    }
                };
                out[..d].copy_from_slice(&score);
                for i in 0..d {
                    for j in i..d {
                        // ∂ᵢ∂ⱼπ/π = scoreᵢ·scoreⱼ − (Σ⁻¹)ᵢⱼ for a centered Gaussian
                        out[d + tri_index(d, i, j)] = score[i] * score[j] - inv_ij(i, j);
                    }
                }
            }
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "family `{}` is not linear in its parameters",
                    self.family_id()
                )))
            }
        }
        Ok(())
    }

    fn eval_rotated(&self, a: &[f64], x: &[f64]) -> Result<f64> {
        let d = self.density.dim();
        let score = self.density.score(x)?;
        let b = &a[4 * d..]; // row-major d×d
        let mut acc = 0.0;
        for i in 0..d {
            let row = &b[i * d..(i + 1) * d];
            let y: f64 = row.iter().zip(x).map(|(bij, xj)| bij * xj).sum();
            let (c0, c1, c2, c3) = (a[4 * i], a[4 * i + 1], a[4 * i + 2], a[4 * i + 3]);
            let phi = c0 + y * (c1 + y * (c2 + y * c3));
            let dphi = c1 + y * (2.0 * c2 + y * 3.0 * c3);
            acc += row[i] * dphi + phi * score[i];
        }
        Ok(acc)
    }

    fn eval_basket(&self, variant: BasketVariant, a: &[f64], x: &[f64]) -> Result<f64> {
        let score = self.density.score(x)?;
        let p = variant.params_per_asset();
        let mut acc = 0.0;
        for (i, (&xi, &si)) in x.iter().zip(&score).enumerate() {
            let a0 = a[p * i];
            let a1 = a[p * i + 1];
            let li = xi.ln();
            let (phi, dphi) = match variant {
                BasketVariant::Exp1 => {
                    let phi = a0 * (a1 * li).exp();
                    (phi, phi * a1 / xi)
                }
                BasketVariant::Exp2 => {
                    let a2 = a[p * i + 2];
                    let phi = a0 * (a1 * li + a2 * li * li).exp();
                    (phi, phi * (a1 + 2.0 * a2 * li) / xi)
                }
            };
            acc += dphi + phi * si;
        }
        Ok(acc)
    }

    /// A random parameter vector satisfying the admissibility constraints:
    /// plain coefficients Uniform[−1, 1], basket first-order exponents
    /// Uniform[−2, 2], basket second-order exponents kept below the
    /// integrability threshold 1/(2σ²t) of the log-normal tail.
    pub fn random_admissible_params<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut a: Vec<f64> = (0..self.param_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if let FamilyKind::BasketExp(variant) = &self.kind {
            let p = variant.params_per_asset();
            for i in 0..self.param_dim / p {
                a[p * i + 1] = rng.gen_range(-2.0..2.0);
                if p == 3 {
                    a[p * i + 2] = rng.gen_range(-1.0..0.1);
                }
            }
        }
        for (v, &masked) in a.iter_mut().zip(&self.constraint_mask) {
            if masked {
                *v = 0.0;
            }
        }
        a
    }
}

/// Per-asset log-normal parameters, used by basket scores and start
/// points.
pub fn gbm_components(density: &Density) -> Option<Vec<&GbmDensity>> {
    match density {
        Density::Product(cs) => cs
            .iter()
            .map(|c| match c {
                Density::LognormalGbm(g) => Some(g),
                _ => None,
            })
            .collect(),
        Density::LognormalGbm(g) => Some(vec![g]),
        _ => None,
    }
}

/// First-order Stein operator for an explicit vector field:
/// returns x ↦ Σᵢ ∂ᵢφᵢ(x) + φᵢ(x)·∂ᵢ log π(x), the product-rule expansion
/// of (1/π) Σᵢ ∂ᵢ(φᵢ π).
pub fn first_order_stein<'a, P, Q>(
    density: &'a Density,
    phi: P,
    phi_partial: Q,
) -> impl Fn(&[f64]) -> Result<f64> + 'a
where
    P: Fn(usize, &[f64]) -> f64 + 'a,
    Q: Fn(usize, &[f64]) -> f64 + 'a,
{
    move |x: &[f64]| {
        let score = density.score(x)?;
        Ok(score
            .iter()
            .enumerate()
            .map(|(i, s)| phi_partial(i, x) + phi(i, x) * s)
            .sum())
    }
}

/// The difference function g = f − ζ_a whose expectation equals E_π[f]
/// for every admissible a.
pub struct DifferenceFunction<'a, F: Fn(&[f64]) -> f64> {
    pub integrand: F,
    pub family: &'a CvFamily,
    pub params: Vec<f64>,
}

impl<'a, F: Fn(&[f64]) -> f64> DifferenceFunction<'a, F> {
    pub fn new(integrand: F, family: &'a CvFamily, params: Vec<f64>) -> Self {
        DifferenceFunction { integrand, family, params }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok((self.integrand)(x) - self.family.eval(&self.params, x)?)
    }
}

/// Monte Carlo mean and standard error of ζ_a over n fresh samples; a
/// direct check of E_π[ζ_a] = 0.
pub fn cv_mean_check(family: &CvFamily, a: &[f64], n: usize, seed: u64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("mean check needs n >= 2, got {n}")));
    }
    let data = family.density().sample(n, seed)?;
    let values: Result<Vec<f64>> = data.rows().map(|x| family.eval(a, x)).collect();
    let values = values?;
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = crate::variance::empirical_variance(&values)?;
    Ok((mean, (var / n as f64).sqrt()))
}
