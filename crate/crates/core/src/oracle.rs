//! Independent ground-truth machinery: the 1-D zero-variance solution φ*
//! by quadrature, Hermite identities, and the lower-bound counterexample.
//!
//! The Stein equation ζ_φ = f − ℰ has the explicit solution
//!
//! ```text
//! φ*(x) = (1/π(x)) ∫_A^x π(t) (f(t) − ℰ) dt
//! ```
//!
//! for which Var_π[f − ζ_{φ*}] = 0. Everything here works with the
//! unnormalized density, so normalizing constants cancel between the
//! integrand and the 1/π(x) factor.

use rand::Rng;

use crate::distributions::{std_normal, Density};
use crate::error::{Error, Result};
use crate::quadrature::{adaptive_simpson, QuadratureSpec};
use crate::rng::chacha;
use crate::variance::empirical_variance;

const GRID_CELLS: usize = 4000;

/// The zero-variance vector field φ* for a 1-D problem, tabulated once on
/// a monotone grid and evaluated by cubic Hermite interpolation (the node
/// derivatives of the inner integral are known exactly). Immutable and
/// safe for concurrent reads.
pub struct PhiStar {
    density: Density,
    expectation: f64,
    grid: Vec<f64>,
    /// F(x_k) = ∫_A^{x_k} w(t)(f(t) − ℰ) dt with w the unnormalized density.
    cumulative: Vec<f64>,
    /// F′(x_k) = w(x_k)(f(x_k) − ℰ).
    derivative: Vec<f64>,
}

impl PhiStar {
    /// The quadrature estimate of ℰ = E_π[f].
    pub fn expectation(&self) -> f64 {
        self.expectation
    }

    pub fn window(&self) -> (f64, f64) {
        (self.grid[0], *self.grid.last().unwrap())
    }

    /// π(x)·φ*(x) = F(x), up to the (cancelled) normalizing constant.
    /// Zero at both window endpoints by construction of ℰ.
    pub fn weighted(&self, x: f64) -> Result<f64> {
        Ok(self.interpolate(x)?)
    }

    /// φ*(x).
    pub fn eval(&self, x: f64) -> Result<f64> {
        let w = self.density.log_density(&[x])?.exp();
        Ok(self.interpolate(x)? / w)
    }

    fn interpolate(&self, x: f64) -> Result<f64> {
        let (a, b) = self.window();
        if !(x >= a && x <= b) {
            return Err(Error::InvalidArgument(format!(
                "{x} outside the quadrature window [{a}, {b}]"
            )));
        }
        let cells = self.grid.len() - 1;
        let h = (b - a) / cells as f64;
        let k = (((x - a) / h) as usize).min(cells - 1);
        let t = (x - self.grid[k]) / h;
        let (f0, f1) = (self.cumulative[k], self.cumulative[k + 1]);
        let (d0, d1) = (self.derivative[k], self.derivative[k + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        Ok(f0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + d0 * h * (t3 - 2.0 * t2 + t)
            + f1 * (-2.0 * t3 + 3.0 * t2)
            + d1 * h * (t3 - t2))
    }
}

/// Builds φ* for a 1-D density by adaptive quadrature on the truncation
/// window. ℰ is taken as the ratio of the grid-accumulated ∫wf and ∫w,
/// which closes the inner integral exactly at the right endpoint and keeps
/// the tail of F accurate relative to the local density scale.
pub fn zero_variance_phi_1d<F>(f: F, density: &Density, quad: &QuadratureSpec) -> Result<PhiStar>
where
    F: Fn(f64) -> f64,
{
    if density.dim() != 1 {
        return Err(Error::InvalidArgument("zero-variance oracle is 1-D".into()));
    }
    let (a, b) = quad.window;
    let w = |x: f64| density.log_density(&[x]).map(|l| l.exp()).unwrap_or(0.0);
    let h = (b - a) / GRID_CELLS as f64;
    let cell_tol = quad.tolerance * h / (b - a);

    let grid: Vec<f64> = (0..=GRID_CELLS).map(|k| a + h * k as f64).collect();
    let mut mass = Vec::with_capacity(GRID_CELLS + 1);
    let mut weighted_f = Vec::with_capacity(GRID_CELLS + 1);
    mass.push(0.0);
    weighted_f.push(0.0);
    for k in 0..GRID_CELLS {
        let (lo, hi) = (grid[k], grid[k + 1]);
        let m = adaptive_simpson(&w, lo, hi, cell_tol, quad.max_subdivisions)?;
        let p = adaptive_simpson(&|x| w(x) * f(x), lo, hi, cell_tol, quad.max_subdivisions)?;
        mass.push(mass[k] + m);
        weighted_f.push(weighted_f[k] + p);
    }
    let total_mass = *mass.last().unwrap();
    if !(total_mass > 0.0) {
        return Err(Error::InvalidArgument("window carries no mass".into()));
    }
    let expectation = weighted_f.last().unwrap() / total_mass;

    let cumulative: Vec<f64> = weighted_f
        .iter()
        .zip(&mass)
        .map(|(p, m)| p - expectation * m)
        .collect();
    let derivative: Vec<f64> = grid.iter().map(|&x| w(x) * (f(x) - expectation)).collect();
    Ok(PhiStar { density: density.clone(), expectation, grid, cumulative, derivative })
}

/// Max over the grid of |f(x) − ζ_{φ*}(x) − ℰ|, with ζ_{φ*} assembled
/// numerically: central differences of φ* plus φ*·score.
pub fn verify_zero_variance<F>(
    f: F,
    density: &Density,
    phi_star: &PhiStar,
    grid: &[f64],
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut worst: f64 = 0.0;
    for &x in grid {
        let h = 1e-4 * x.abs().max(1.0);
        let dphi = (phi_star.eval(x + h)? - phi_star.eval(x - h)?) / (2.0 * h);
        let score = density.score(&[x])?[0];
        let zeta = dphi + phi_star.eval(x)? * score;
        worst = worst.max((f(x) - zeta - phi_star.expectation()).abs());
    }
    Ok(worst)
}

/// Monte Carlo zero-mean check for the Hermite polynomials built from the
/// standard-normal derivative ratios: H₁(x) = x from −∂π/π, H₂(x) = x²−1
/// from ∂²π/π. Returns (mean, standard error).
pub fn hermite_expectation_check(k: u32, n: usize, seed: u64) -> Result<(f64, f64)> {
    let density = std_normal(1)?;
    let data = density.sample(n, seed)?;
    let values: Vec<f64> = match k {
        1 => data
            .rows()
            .map(|x| density.score(x).map(|s| -s[0]))
            .collect::<Result<Vec<f64>>>()?,
        2 => data
            .rows()
            .map(|x| density.second_ratio(0, 0, x))
            .collect::<Result<Vec<f64>>>()?,
        other => {
            return Err(Error::InvalidArgument(format!(
                "hermite check supports k in {{1, 2}}, got {other}"
            )))
        }
    };
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let se = (empirical_variance(&values)? / values.len() as f64).sqrt();
    Ok((mean, se))
}

/// Direct simulation of the 1/(2n) lower-bound construction: a three-point
/// space {x₁, x₂, x₃} with P(x₁) = P(x₂) = ε = 1/(2n), the functions
/// g₀ ≡ 0 and g₁ = 1[x=x₁] − 1[x=x₂], and an empirical variance minimizer
/// that breaks ties adversarially toward g₁. Each trial draws n−1 points —
/// the waiting-time event {n(ε) ≥ n} of the geometric argument, which has
/// probability (1 − 1/n)^{n−1}. Returns the observed frequency of trials
/// whose selected function has conditional variance ≥ 1/(2n).
pub fn lower_bound_scenario(n: usize, trials: usize, seed: u64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("lower bound needs n > 1, got {n}")));
    }
    if trials < 100 {
        return Err(Error::InvalidArgument(format!(
            "lower bound needs >= 100 trials, got {trials}"
        )));
    }
    let eps = 1.0 / (2.0 * n as f64);
    let threshold = 1.0 / (2.0 * n as f64);
    let var_g1 = 2.0 * eps;
    let mut rng = chacha(seed);
    let mut hits = 0usize;
    for _ in 0..trials {
        let g1_sample: Vec<f64> = (0..n - 1)
            .map(|_| {
                let u: f64 = rng.gen();
                if u < eps {
                    1.0
                } else if u < 2.0 * eps {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect();
        // V_n(g₀) = 0 always; the adversary picks g₁ whenever it ties.
        let vn_g1 = if g1_sample.len() < 2 {
            0.0
        } else {
            empirical_variance(&g1_sample)?
        };
        let selected_variance = if vn_g1 <= 0.0 { var_g1 } else { 0.0 };
        if selected_variance >= threshold {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// One named pass/fail entry of the oracle battery.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckResult { name: name.to_string(), passed, detail }
    }
}

fn expectation_check(
    name: &str,
    f: impl Fn(f64) -> f64,
    density: &Density,
    closed_form: f64,
) -> CheckResult {
    let quad = match QuadratureSpec::for_density(density) {
        Ok(q) => q,
        Err(e) => return CheckResult::new(name, false, e.to_string()),
    };
    match zero_variance_phi_1d(&f, density, &quad) {
        Ok(phi) => {
            let err = (phi.expectation() - closed_form).abs();
            CheckResult::new(
                name,
                err <= 1e-8,
                format!("|E − {closed_form:.6}| = {err:.3e} (tolerance 1e-8)"),
            )
        }
        Err(e) => CheckResult::new(name, false, e.to_string()),
    }
}

fn residual_check(
    name: &str,
    f: impl Fn(f64) -> f64 + Copy,
    density: &Density,
    grid: (f64, f64, usize),
) -> CheckResult {
    let quad = match QuadratureSpec::for_density(density) {
        Ok(q) => q,
        Err(e) => return CheckResult::new(name, false, e.to_string()),
    };
    let phi = match zero_variance_phi_1d(f, density, &quad) {
        Ok(p) => p,
        Err(e) => return CheckResult::new(name, false, e.to_string()),
    };
    let (lo, hi, count) = grid;
    let points: Vec<f64> = (0..count)
        .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
        .collect();
    match verify_zero_variance(f, density, &phi, &points) {
        Ok(residual) => CheckResult::new(
            name,
            residual <= 1e-5,
            format!("max PDE residual {residual:.3e} (tolerance 1e-5)"),
        ),
        Err(e) => CheckResult::new(name, false, e.to_string()),
    }
}

fn boundary_check(name: &str, f: impl Fn(f64) -> f64, density: &Density) -> CheckResult {
    let quad = match QuadratureSpec::for_density(density) {
        Ok(q) => q,
        Err(e) => return CheckResult::new(name, false, e.to_string()),
    };
    match zero_variance_phi_1d(&f, density, &quad) {
        Ok(phi) => {
            let (a, b) = phi.window();
            let wa = phi.weighted(a).unwrap_or(f64::NAN).abs();
            let wb = phi.weighted(b).unwrap_or(f64::NAN).abs();
            let worst = wa.max(wb);
            CheckResult::new(
                name,
                worst <= 1e-8,
                format!("|π·φ*| at window endpoints: {wa:.3e}, {wb:.3e} (tolerance 1e-8)"),
            )
        }
        Err(e) => CheckResult::new(name, false, e.to_string()),
    }
}

/// The full oracle battery behind the `verify` CLI subcommand.
pub fn run_oracle_checks(seed: u64) -> Vec<CheckResult> {
    let normal = std_normal(1).expect("1-D normal");
    let exp = crate::distributions::exponential_unit();
    let e = std::f64::consts::E;

    let mut checks = vec![
        expectation_check("quad_normal_x2", |x| x * x, &normal, 1.0),
        expectation_check("quad_normal_exp", f64::exp, &normal, e.sqrt()),
        expectation_check("quad_normal_cos", f64::cos, &normal, 1.0 / e.sqrt()),
        expectation_check("quad_exp_x2", |x| x * x, &exp, 2.0),
        residual_check("pde_residual_normal_x2", |x| x * x, &normal, (-4.0, 4.0, 401)),
        residual_check("pde_residual_normal_exp", f64::exp, &normal, (-4.0, 4.0, 401)),
        residual_check("pde_residual_normal_cos", f64::cos, &normal, (-4.0, 4.0, 401)),
        residual_check("pde_residual_exp_x2", |x| x * x, &exp, (0.05, 10.0, 400)),
        residual_check("pde_residual_exp_cos", f64::cos, &exp, (0.05, 10.0, 400)),
        boundary_check("phi_star_boundary_normal", |x| x * x, &normal),
        boundary_check("phi_star_boundary_exp", |x| x * x, &exp),
    ];

    for k in [1, 2] {
        let name = format!("hermite_h{k}_zero_mean");
        match hermite_expectation_check(k, 100_000, seed) {
            Ok((mean, se)) => checks.push(CheckResult::new(
                &name,
                mean.abs() <= 4.0 * se,
                format!("|mean| = {:.3e} vs 4·se = {:.3e}", mean.abs(), 4.0 * se),
            )),
            Err(err) => checks.push(CheckResult::new(&name, false, err.to_string())),
        }
    }

    // E[(H₂/√2)²] = 1 by orthonormality
    {
        let density = std_normal(1).expect("1-D normal");
        let data = density.sample(100_000, seed ^ 0x5eed).expect("sample");
        let mean_sq = data
            .rows()
            .map(|x| {
                let h2 = density.second_ratio(0, 0, x).expect("second ratio");
                h2 * h2 / 2.0
            })
            .sum::<f64>()
            / data.len() as f64;
        checks.push(CheckResult::new(
            "hermite_h2_normalized_second_moment",
            (mean_sq - 1.0).abs() <= 0.05,
            format!("E[(H2/sqrt2)^2] = {mean_sq:.4} (tolerance 5%)"),
        ));
    }

    {
        let n = 10;
        let trials = 10_000;
        match lower_bound_scenario(n, trials, seed ^ 0xb0) {
            Ok(freq) => {
                let p = (1.0 - 1.0 / n as f64).powi(n as i32 - 1);
                let se = (p * (1.0 - p) / trials as f64).sqrt();
                let bound = p - 4.0 * se;
                checks.push(CheckResult::new(
                    "lower_bound_frequency",
                    freq >= bound,
                    format!("observed {freq:.4} vs bound {bound:.4}"),
                ));
            }
            Err(err) => checks.push(CheckResult::new("lower_bound_frequency", false, err.to_string())),
        }
    }

    checks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::exponential_unit;

    fn grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
        (0..count)
            .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
            .collect()
    }

    #[test]
    fn phi_star_normal_x2_is_minus_x() {
        let density = std_normal(1).unwrap();
        let quad = QuadratureSpec::for_density(&density).unwrap();
        let phi = zero_variance_phi_1d(|x| x * x, &density, &quad).unwrap();
        assert!((phi.expectation() - 1.0).abs() < 1e-8);
        for x in grid(-4.0, 4.0, 81) {
            let v = phi.eval(x).unwrap();
            assert!((v - (-x)).abs() < 1e-6, "phi*({x}) = {v}, want {}", -x);
        }
    }

    #[test]
    fn phi_star_constant_integrand_vanishes() {
        let density = std_normal(1).unwrap();
        let quad = QuadratureSpec::for_density(&density).unwrap();
        let phi = zero_variance_phi_1d(|_| 3.25, &density, &quad).unwrap();
        assert!((phi.expectation() - 3.25).abs() < 1e-10);
        for x in grid(-5.0, 5.0, 41) {
            assert!(phi.eval(x).unwrap().abs() < 1e-8);
        }
    }

    #[test]
    fn phi_star_exponential_x2_closed_form() {
        let density = exponential_unit();
        let quad = QuadratureSpec::for_density(&density).unwrap();
        let phi = zero_variance_phi_1d(|x| x * x, &density, &quad).unwrap();
        assert!((phi.expectation() - 2.0).abs() < 1e-8);
        for x in grid(0.01, 20.0, 200) {
            let want = -x * x - 2.0 * x;
            let got = phi.eval(x).unwrap();
            assert!(
                (got - want).abs() <= 1e-6 * want.abs().max(1.0),
                "phi*({x}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn pde_residual_small_on_grids() {
        let normal = std_normal(1).unwrap();
        let quad = QuadratureSpec::for_density(&normal).unwrap();
        let phi = zero_variance_phi_1d(|x| x * x, &normal, &quad).unwrap();
        let res = verify_zero_variance(|x| x * x, &normal, &phi, &grid(-4.0, 4.0, 401)).unwrap();
        assert!(res <= 1e-8, "normal x^2 residual {res}");

        let exp = exponential_unit();
        let quad = QuadratureSpec::for_density(&exp).unwrap();
        let phi = zero_variance_phi_1d(f64::cos, &exp, &quad).unwrap();
        let res = verify_zero_variance(f64::cos, &exp, &phi, &grid(0.05, 10.0, 300)).unwrap();
        assert!(res <= 1e-5, "exp cos residual {res}");
    }

    #[test]
    fn hermite_checks() {
        let (m1, se1) = hermite_expectation_check(1, 100_000, 2).unwrap();
        assert!(m1.abs() <= 4.0 * se1, "H1 mean {m1} se {se1}");
        let (m2, se2) = hermite_expectation_check(2, 100_000, 3).unwrap();
        assert!(m2.abs() <= 4.0 * se2, "H2 mean {m2} se {se2}");
        assert!(hermite_expectation_check(3, 1000, 1).is_err());
    }

    #[test]
    fn lower_bound_simulation() {
        let n = 10;
        let trials = 10_000;
        let freq = lower_bound_scenario(n, trials, 4).unwrap();
        let p = (1.0_f64 - 0.1).powi(9);
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!(freq >= p - 4.0 * se, "freq {freq} below {}", p - 4.0 * se);

        let freq2 = lower_bound_scenario(2, trials, 5).unwrap();
        let se2 = (0.5 * 0.5 / trials as f64).sqrt();
        assert!(freq2 >= 0.5 - 4.0 * se2, "n=2 freq {freq2}");

        assert!(lower_bound_scenario(1, 1000, 1).is_err());
        assert!(lower_bound_scenario(5, 10, 1).is_err());
    }

    #[test]
    fn oracle_battery_passes() {
        let checks = run_oracle_checks(17);
        let failed: Vec<&CheckResult> = checks.iter().filter(|c| !c.passed).collect();
        assert!(
            failed.is_empty(),
            "failing oracle checks: {:?}",
            failed.iter().map(|c| (&c.name, &c.detail)).collect::<Vec<_>>()
        );
    }
}
