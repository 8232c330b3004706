//! Adaptive Simpson quadrature over finite truncation windows.

use crate::distributions::{Density, POSITIVE_SUPPORT_EPS};
use crate::error::{Error, Result};

/// Settings for the 1-D quadrature behind the zero-variance oracle.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureSpec {
    /// Absolute tolerance for the full-window integral.
    pub tolerance: f64,
    /// Finite truncation window; must cover all but ~1e-12 of the mass.
    pub window: (f64, f64),
    /// Maximum bisection depth per panel.
    pub max_subdivisions: u32,
}

impl QuadratureSpec {
    /// Default window for a 1-D density: wide enough that the truncated
    /// tail mass is below 1e-12.
    pub fn for_density(density: &Density) -> Result<Self> {
        if density.dim() != 1 {
            return Err(Error::InvalidArgument(format!(
                "quadrature windows are 1-D; `{}` has dim {}",
                density.id(),
                density.dim()
            )));
        }
        let window = match density {
            Density::StdNormal { .. } => (-10.0, 10.0),
            Density::Exp1 => (POSITIVE_SUPPORT_EPS, 50.0),
            Density::LognormalGbm(g) => (
                POSITIVE_SUPPORT_EPS,
                g.x0 * (g.mu * g.t + 10.0 * g.sigma * g.t.sqrt()).exp(),
            ),
            Density::Mvn(m) => {
                let sd = m.covariance().matrix()[(0, 0)].sqrt();
                (-10.0 * sd, 10.0 * sd)
            }
            Density::Product(cs) => return Self::for_density(&cs[0]),
        };
        Ok(QuadratureSpec { tolerance: 1e-10, window, max_subdivisions: 32 })
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    // the relative floor stops pointless refinement at machine precision
    if delta.abs() <= 15.0 * tol || delta.abs() <= 1e-14 * (left + right).abs() {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::QuadratureBudget { a, b });
    }
    let half = 0.5 * tol;
    Ok(adapt(f, a, fa, m, fm, flm, left, half, depth - 1)?
        + adapt(f, m, fm, b, fb, frm, right, half, depth - 1)?)
}

/// ∫ₐᵇ f to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Result<f64> {
    if !(a < b) {
        return Err(Error::InvalidArgument(format!("bad interval [{a}, {b}]")));
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, b - a);
    adapt(f, a, fa, b, fb, fm, whole, tol, max_depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_is_exact() {
        let v = adaptive_simpson(&|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12, 20).unwrap();
        assert_relative_eq!(v, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_mass() {
        let v = adaptive_simpson(&|x: f64| (-0.5 * x * x).exp(), -10.0, 10.0, 1e-12, 40).unwrap();
        assert_relative_eq!(v, (2.0 * std::f64::consts::PI).sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn oscillatory_integrand() {
        // ∫₀^π sin = 2
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-11, 40).unwrap();
        assert_relative_eq!(v, 2.0, max_relative = 1e-10);
    }

    #[test]
    fn budget_exhaustion_is_an_error() {
        // a kink needs refinement; depth 0 cannot resolve it
        let r = adaptive_simpson(&|x: f64| x.abs().sqrt(), -1.0, 1.0, 1e-14, 0);
        assert!(matches!(r, Err(Error::QuadratureBudget { .. })));
    }

    #[test]
    fn default_windows() {
        let spec = QuadratureSpec::for_density(&crate::distributions::exponential_unit()).unwrap();
        assert_eq!(spec.window.1, 50.0);
        assert!(QuadratureSpec::for_density(&crate::distributions::std_normal(2).unwrap()).is_err());
    }
}
