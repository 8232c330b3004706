//! EVM and LS parameter fitting.
//!
//! For families linear in their parameters the EVM problem
//! min_a V_n(f − ζ_a) is a quadratic whose minimizer solves the
//! sample-covariance normal equations Ĉ α = ĉ with
//! Ĉ_kl = Cov̂(η_k, η_l) and ĉ_k = Cov̂(η_k, f); the LS problem solves the
//! uncentered analogue. Nonlinear families go through a derivative-free
//! Nelder–Mead simplex descent on the empirical variance itself.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::Dataset;
use crate::error::{Error, Result};
use crate::stein::{BasketVariant, CvFamily};
use crate::variance::{empirical_variance, reduced_values};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    EvmLinear,
    EvmNonlinear,
    LsLinear,
}

/// Outcome of one fit. `objective` is V_n(f − ζ_â) for the EVM methods and
/// the residual sum of squares for LS, both re-evaluable from `a_hat`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub a_hat: Vec<f64>,
    pub objective: f64,
    pub method: FitMethod,
    pub iterations: usize,
    pub converged: bool,
    pub start_point: Vec<f64>,
}

/// Options for the derivative-free search.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchOptions {
    pub max_iterations: usize,
    /// Absolute objective-spread tolerance of the simplex.
    pub tolerance: f64,
    /// Number of simplex passes; each pass after the first rebuilds the
    /// simplex around the incumbent best point.
    pub restarts: usize,
    /// Per-parameter bounds; `None` applies the default ±10 box.
    pub parameter_box: Option<Vec<(f64, f64)>>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            max_iterations: 2000,
            tolerance: 1e-9,
            restarts: 1,
            parameter_box: None,
        }
    }
}

pub const DEFAULT_PARAMETER_BOUND: f64 = 10.0;

/// V_n of the reduced values f − ζ_a on the dataset; the objective every
/// fitter minimizes (for LS, its uncentered cousin).
pub fn objective<F>(f: F, family: &CvFamily, a: &[f64], data: &Dataset) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    empirical_variance(&reduced_values(f, family, a, data)?)
}

/// Central-difference gradient of the EVM objective over the unmasked
/// coordinates (zeros at masked positions). A test instrument.
pub fn finite_difference_gradient<F>(
    f: F,
    family: &CvFamily,
    a: &[f64],
    data: &Dataset,
    step: f64,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Copy,
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let mut grad = vec![0.0; family.param_dim()];
    let mut work = a.to_vec();
    for i in family.free_indices() {
        work[i] = a[i] + step;
        let up = objective(f, family, &work, data)?;
        work[i] = a[i] - step;
        let down = objective(f, family, &work, data)?;
        work[i] = a[i];
        grad[i] = (up - down) / (2.0 * step);
    }
    Ok(grad)
}

/// Solves the m×m SPD system, retrying once with the ridge
/// λ = 1e-10·trace/m on the diagonal.
fn solve_spd(mut matrix: DMatrix<f64>, rhs: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    if let Some(chol) = matrix.clone().cholesky() {
        return Ok(chol.solve(rhs));
    }
    let m = matrix.nrows() as f64;
    let ridge = 1e-10 * matrix.trace() / m;
    for i in 0..matrix.nrows() {
        matrix[(i, i)] += ridge;
    }
    matrix
        .cholesky()
        .map(|chol| chol.solve(rhs))
        .ok_or_else(|| Error::SingularSystem { context: context.to_string() })
}

/// Basis values of the free parameters (n×m) and the integrand values.
fn design<F>(f: &F, family: &CvFamily, data: &Dataset) -> Result<(DMatrix<f64>, DVector<f64>)>
where
    F: Fn(&[f64]) -> f64,
{
    let free = family.free_indices();
    let n = data.len();
    let mut h = DMatrix::zeros(n, free.len());
    let mut y = DVector::zeros(n);
    let mut basis = vec![0.0; family.param_dim()];
    for (r, x) in data.rows().enumerate() {
        family.basis_eval(x, &mut basis)?;
        for (c, &idx) in free.iter().enumerate() {
            h[(r, c)] = basis[idx];
        }
        y[r] = f(x);
    }
    Ok((h, y))
}

fn expand_free(family: &CvFamily, solution: &DVector<f64>) -> Vec<f64> {
    let mut a = vec![0.0; family.param_dim()];
    for (c, &idx) in family.free_indices().iter().enumerate() {
        a[idx] = solution[c];
    }
    a
}

/// Closed-form EVM fit for a linear family: centers the basis and
/// integrand values and solves the sample-covariance normal equations.
pub fn evm_fit_linear<F>(f: F, family: &CvFamily, data: &Dataset) -> Result<FitResult>
where
    F: Fn(&[f64]) -> f64 + Copy,
{
    if !family.is_linear() {
        return Err(Error::InvalidArgument(format!(
            "family `{}` is not linear; use the nonlinear fitter",
            family.family_id()
        )));
    }
    let (mut h, mut y) = design(&f, family, data)?;
    let n = data.len() as f64;
    let y_mean = y.mean();
    y.add_scalar_mut(-y_mean);
    for mut col in h.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let cov = h.transpose() * &h / (n - 1.0);
    let rhs = h.transpose() * &y / (n - 1.0);
    let alpha = solve_spd(cov, &rhs, "EVM normal equations")?;
    let a_hat = expand_free(family, &alpha);
    let objective = objective(f, family, &a_hat, data)?;
    Ok(FitResult {
        start_point: vec![0.0; family.param_dim()],
        a_hat,
        objective,
        method: FitMethod::EvmLinear,
        iterations: 0,
        converged: true,
    })
}

/// Least-squares fit for a linear family: minimizes Σᵢ (f(Xᵢ) − ζ_a(Xᵢ))²
/// via the uncentered normal equations. The reported objective is that
/// residual sum of squares.
pub fn ls_fit_linear<F>(f: F, family: &CvFamily, data: &Dataset) -> Result<FitResult>
where
    F: Fn(&[f64]) -> f64 + Copy,
{
    if !family.is_linear() {
        return Err(Error::InvalidArgument(format!(
            "family `{}` is not linear; the LS fitter needs a linear family",
            family.family_id()
        )));
    }
    let (h, y) = design(&f, family, data)?;
    let gram = h.transpose() * &h;
    let rhs = h.transpose() * &y;
    let alpha = solve_spd(gram, &rhs, "LS normal equations")?;
    let residual = &y - &h * &alpha;
    let a_hat = expand_free(family, &alpha);
    Ok(FitResult {
        start_point: vec![0.0; family.param_dim()],
        a_hat,
        objective: residual.norm_squared(),
        method: FitMethod::LsLinear,
        iterations: 0,
        converged: true,
    })
}

fn clip(point: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, (lo, hi)) in point.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
}

pub(crate) struct SimplexOutcome {
    pub best: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best vertex objective after each iteration; non-increasing.
    pub trace: Vec<f64>,
}

/// One Nelder–Mead pass with the standard coefficients
/// (reflection 1, expansion 2, contraction 0.5, shrink 0.5).
/// Candidate points are clipped into `bounds` before evaluation.
/// Ties order by insertion position, so the outcome is deterministic.
pub(crate) fn nelder_mead<F>(
    objective_fn: &F,
    start: &[f64],
    bounds: &[(f64, f64)],
    max_iterations: usize,
    tolerance: f64,
) -> SimplexOutcome
where
    F: Fn(&[f64]) -> f64,
{
    let dim = start.len();
    let eval = |p: &[f64]| {
        let v = objective_fn(p);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let mut first = start.to_vec();
    clip(&mut first, bounds);
    let f0 = eval(&first);
    simplex.push((first.clone(), f0));
    for i in 0..dim {
        let mut v = first.clone();
        let step = if v[i].abs() > 1e-6 { 0.05 * v[i] } else { 0.1 };
        v[i] += step;
        clip(&mut v, bounds);
        let fv = eval(&v);
        simplex.push((v, fv));
    }

    let mut iterations = 0;
    let mut converged = false;
    let mut trace = Vec::new();
    while iterations < max_iterations {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let spread = simplex[dim].1 - simplex[0].1;
        if spread < tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; dim];
        for (v, _) in simplex.iter().take(dim) {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x;
            }
        }
        for c in &mut centroid {
            *c /= dim as f64;
        }
        let worst = simplex[dim].clone();

        let mut reflected: Vec<f64> =
            centroid.iter().zip(&worst.0).map(|(c, w)| c + (c - w)).collect();
        clip(&mut reflected, bounds);
        let f_reflected = eval(&reflected);

        if f_reflected < simplex[0].1 {
            let mut expanded: Vec<f64> =
                centroid.iter().zip(&worst.0).map(|(c, w)| c + 2.0 * (c - w)).collect();
            clip(&mut expanded, bounds);
            let f_expanded = eval(&expanded);
            simplex[dim] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
        } else if f_reflected < simplex[dim - 1].1 {
            simplex[dim] = (reflected, f_reflected);
        } else {
            let (contracted, f_contracted) = if f_reflected < worst.1 {
                // outside contraction, halfway toward the reflection
                let mut p: Vec<f64> =
                    centroid.iter().zip(&reflected).map(|(c, r)| c + 0.5 * (r - c)).collect();
                clip(&mut p, bounds);
                let fp = eval(&p);
                (p, fp)
            } else {
                // inside contraction, halfway toward the worst vertex
                let mut p: Vec<f64> =
                    centroid.iter().zip(&worst.0).map(|(c, w)| c - 0.5 * (c - w)).collect();
                clip(&mut p, bounds);
                let fp = eval(&p);
                (p, fp)
            };
            if f_contracted < worst.1.min(f_reflected) {
                simplex[dim] = (contracted, f_contracted);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let mut p: Vec<f64> =
                        best.iter().zip(&entry.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    clip(&mut p, bounds);
                    let fp = eval(&p);
                    *entry = (p, fp);
                }
            }
        }
        let best_now = simplex
            .iter()
            .map(|(_, f)| *f)
            .fold(f64::INFINITY, f64::min);
        trace.push(best_now);
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    SimplexOutcome {
        best: simplex[0].0.clone(),
        objective: simplex[0].1,
        iterations,
        converged,
        trace,
    }
}

/// EVM fit by simplex descent on a ↦ V_n(f − ζ_a), restricted to the
/// unmasked parameters and clipped to the parameter box. An exhausted
/// iteration budget is reported through `converged = false`, not an error.
pub fn evm_fit_nonlinear<F>(
    f: F,
    family: &CvFamily,
    data: &Dataset,
    start: &[f64],
    opts: &SearchOptions,
) -> Result<FitResult>
where
    F: Fn(&[f64]) -> f64 + Copy,
{
    if start.len() != family.param_dim() {
        return Err(Error::DimensionMismatch { expected: family.param_dim(), got: start.len() });
    }
    let free = family.free_indices();
    let bounds: Vec<(f64, f64)> = match &opts.parameter_box {
        Some(b) if b.len() == family.param_dim() => free.iter().map(|&i| b[i]).collect(),
        Some(b) => {
            return Err(Error::InvalidArgument(format!(
                "parameter box has {} entries for {} parameters",
                b.len(),
                family.param_dim()
            )))
        }
        None => vec![(-DEFAULT_PARAMETER_BOUND, DEFAULT_PARAMETER_BOUND); free.len()],
    };

    let to_full = |reduced: &[f64]| -> Vec<f64> {
        let mut a = vec![0.0; family.param_dim()];
        for (c, &idx) in free.iter().enumerate() {
            a[idx] = reduced[c];
        }
        a
    };
    let reduced_objective =
        |reduced: &[f64]| objective(f, family, &to_full(reduced), data).unwrap_or(f64::INFINITY);

    let start_reduced: Vec<f64> = free.iter().map(|&i| start[i]).collect();
    let f_start = objective(f, family, &to_full(&start_reduced), data)?;
    if !f_start.is_finite() {
        return Err(Error::NonFiniteObjective);
    }

    let mut best = start_reduced;
    let mut best_objective = f_start;
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..opts.restarts.max(1) {
        let outcome =
            nelder_mead(&reduced_objective, &best, &bounds, opts.max_iterations, opts.tolerance);
        iterations += outcome.iterations;
        converged = outcome.converged;
        if outcome.objective <= best_objective {
            best = outcome.best;
            best_objective = outcome.objective;
        }
    }

    let a_hat = to_full(&best);
    let objective = objective(f, family, &a_hat, data)?;
    Ok(FitResult {
        a_hat,
        objective,
        method: FitMethod::EvmNonlinear,
        iterations,
        converged,
        start_point: start.to_vec(),
    })
}

/// Start-point grid for the per-asset 1-D basket fits.
fn basket_grid(variant: BasketVariant) -> Vec<Vec<f64>> {
    let mut starts = Vec::new();
    for &a0 in &[0.5, -0.5, 1.0, -1.0] {
        for &a1 in &[0.5, 1.0, 2.0] {
            match variant {
                BasketVariant::Exp1 => starts.push(vec![a0, a1]),
                BasketVariant::Exp2 => starts.push(vec![a0, a1, 0.0]),
            }
        }
    }
    starts
}

/// Builds the d-dimensional basket start point by solving each asset's 1-D
/// problem from a small deterministic grid of starts: coordinate i is fit
/// against its own column of the training data with the 1-D integrand
/// `f_1d(i, ·)`. A failed 1-D fit falls back to zeros for that asset.
pub fn basket_start_point<F>(
    f_1d: F,
    densities: &[crate::distributions::Density],
    variant: BasketVariant,
    data: &Dataset,
    opts: &SearchOptions,
) -> Result<Vec<f64>>
where
    F: Fn(usize, f64) -> f64,
{
    if densities.len() != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), got: densities.len() });
    }
    let p = variant.params_per_asset();
    let mut start = vec![0.0; p * densities.len()];
    for (i, density) in densities.iter().enumerate() {
        let family = crate::stein::basket_exp_family(std::slice::from_ref(density), variant)?;
        let column = data.column(i);
        let n = column.len();
        let asset_data = Dataset::from_rows(column, n, 1, data.seed, density.id())?;
        let f_i = |x: &[f64]| f_1d(i, x[0]);

        let mut best: Option<FitResult> = None;
        for grid_start in basket_grid(variant) {
            match evm_fit_nonlinear(f_i, &family, &asset_data, &grid_start, opts) {
                Ok(fit) => {
                    if best.as_ref().map_or(true, |b| fit.objective < b.objective) {
                        best = Some(fit);
                    }
                }
                Err(_) => continue,
            }
        }
        if let Some(fit) = best {
            start[p * i..p * (i + 1)].copy_from_slice(&fit.a_hat);
        }
    }
    Ok(start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{exponential_unit, lognormal_gbm, std_normal};
    use crate::stein::{basket_exp_family, poly1d_family, rotated_poly_family};
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn evm_linear_recovers_exact_cv_normal() {
        let density = std_normal(1).unwrap();
        let family = poly1d_family(&density).unwrap();
        let data = density.sample(500, crate::rng::purpose_seed(17, "train")).unwrap();
        let fit = evm_fit_linear(|x| x[0] * x[0], &family, &data).unwrap();
        assert!(fit.objective <= 1e-10, "objective {}", fit.objective);
        assert_relative_eq!(fit.a_hat[1], -1.0, epsilon = 1e-6);
        assert!(fit.a_hat[0].abs() < 1e-6 && fit.a_hat[2].abs() < 1e-6 && fit.a_hat[3].abs() < 1e-6);
        assert!(fit.converged);
    }

    #[test]
    fn evm_linear_recovers_exact_cv_exponential() {
        let density = exponential_unit();
        let family = poly1d_family(&density).unwrap();
        let data = density.sample(500, 29).unwrap();
        let fit = evm_fit_linear(|x| x[0] * x[0], &family, &data).unwrap();
        assert!(fit.objective <= 1e-8, "objective {}", fit.objective);
        assert_eq!(fit.a_hat[0], 0.0);
        assert_relative_eq!(fit.a_hat[1], -2.0, epsilon = 1e-5);
        assert_relative_eq!(fit.a_hat[2], -1.0, epsilon = 1e-5);
    }

    #[test]
    fn evm_linear_constant_integrand() {
        let density = std_normal(1).unwrap();
        let family = poly1d_family(&density).unwrap();
        let data = density.sample(300, 5).unwrap();
        let fit = evm_fit_linear(|_| 4.2, &family, &data).unwrap();
        assert!(fit.objective <= 1e-20);
        let zeta_norm: f64 = data
            .rows()
            .map(|x| family.eval(&fit.a_hat, x).unwrap().abs())
            .fold(0.0, f64::max);
        assert!(zeta_norm < 1e-10, "zeta contribution {zeta_norm}");
    }

    #[test]
    fn ls_recovers_a_cv_integrand() {
        let density = std_normal(1).unwrap();
        let family = poly1d_family(&density).unwrap();
        let a0 = vec![0.3, -0.8, 0.25, 0.1];
        let data = density.sample(10_000, 101).unwrap();
        let fam = family.clone();
        let f = move |x: &[f64]| fam.eval(&a0, x).unwrap();
        let fit = ls_fit_linear(&f, &family, &data).unwrap();
        for (got, want) in fit.a_hat.iter().zip(&[0.3, -0.8, 0.25, 0.1]) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
        assert!(fit.objective < 1e-15);
    }

    #[test]
    fn ls_constant_integrand_is_stationary() {
        let density = std_normal(1).unwrap();
        let family = poly1d_family(&density).unwrap();
        let data = density.sample(500, 7).unwrap();
        let f = |_: &[f64]| 2.5;
        let fit = ls_fit_linear(f, &family, &data).unwrap();
        // first-order optimality of the LS objective: 2 Hᵀ(Hâ − y) = 0
        let (h, y) = design(&f, &family, &data).unwrap();
        let alpha = nalgebra::DVector::from_vec(
            family.free_indices().iter().map(|&i| fit.a_hat[i]).collect::<Vec<f64>>(),
        );
        let grad = 2.0 * h.transpose() * (&h * alpha - y);
        assert!(grad.norm() <= 1e-8 * (1.0 + fit.objective), "grad norm {}", grad.norm());
    }

    #[test]
    fn fd_gradient_vanishes_at_linear_optimum() {
        let density = std_normal(1).unwrap();
        let family = poly1d_family(&density).unwrap();
        let data = density.sample(500, 13).unwrap();
        let f = |x: &[f64]| (x[0]).exp();
        let fit = evm_fit_linear(f, &family, &data).unwrap();
        let grad = finite_difference_gradient(f, &family, &fit.a_hat, &data, 1e-4).unwrap();
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(
            norm <= 1e-6 * (1.0 + fit.objective),
            "gradient norm {norm} at objective {}",
            fit.objective
        );

        // perturbations never improve on the closed form
        let mut rng = crate::rng::chacha(3);
        for _ in 0..30 {
            let mut delta: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
            for d in &mut delta {
                *d *= 1e-3 / norm;
            }
            let perturbed: Vec<f64> = fit.a_hat.iter().zip(&delta).map(|(a, d)| a + d).collect();
            let obj = objective(f, &family, &perturbed, &data).unwrap();
            assert!(obj + 1e-15 >= fit.objective, "{obj} < {}", fit.objective);
        }
    }

    #[test]
    fn fd_gradient_matches_quadratic_structure() {
        let density = std_normal(1).unwrap();
        let family = poly1d_family(&density).unwrap();
        let data = density.sample(400, 23).unwrap();
        let f = |x: &[f64]| x[0].cos();
        let (mut h, mut y) = design(&f, &family, &data).unwrap();
        let n = data.len() as f64;
        let y_mean = y.mean();
        y.add_scalar_mut(-y_mean);
        for mut col in h.column_iter_mut() {
            let m = col.mean();
            col.add_scalar_mut(-m);
        }
        let cov = h.transpose() * &h / (n - 1.0);
        let rhs = h.transpose() * &y / (n - 1.0);

        let mut rng = crate::rng::chacha(31);
        let a: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grad_fd = finite_difference_gradient(f, &family, &a, &data, 1e-5).unwrap();
        let analytic = 2.0 * (&cov * nalgebra::DVector::from_vec(a.clone()) - &rhs);
        for (fd, an) in grad_fd.iter().zip(analytic.iter()) {
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "{fd} vs {an}");
        }

        // at a = 0 the gradient is −2·Cov̂(η, f)
        let grad0 = finite_difference_gradient(f, &family, &[0.0; 4], &data, 1e-5).unwrap();
        for (g, c) in grad0.iter().zip(rhs.iter()) {
            assert!((g + 2.0 * c).abs() <= 1e-5 * c.abs().max(1.0));
        }
    }

    #[test]
    fn nonlinear_descent_from_linear_optimum_does_not_regress() {
        let density = std_normal(1).unwrap();
        let family = poly1d_family(&density).unwrap();
        let data = density.sample(300, 47).unwrap();
        let f = |x: &[f64]| x[0].exp();
        let linear = evm_fit_linear(f, &family, &data).unwrap();
        let refined =
            evm_fit_nonlinear(f, &family, &data, &linear.a_hat, &SearchOptions::default()).unwrap();
        assert!(refined.objective <= linear.objective * (1.0 + 1e-12));
    }

    #[test]
    fn nonlinear_finds_exact_rotated_cv_in_1d() {
        let density = std_normal(1).unwrap();
        let family = rotated_poly_family(&density).unwrap();
        let data = density.sample(200, 53).unwrap();
        let f = |x: &[f64]| x[0] * x[0];
        // (a, B) = ((0,−1,0,0), 1) gives ζ = x² − 1 exactly
        let start = [0.0, 0.0, 0.0, 0.0, 1.0];
        let opts = SearchOptions { max_iterations: 5000, ..Default::default() };
        let fit = evm_fit_nonlinear(f, &family, &data, &start, &opts).unwrap();
        assert!(fit.objective <= 1e-8, "objective {}", fit.objective);
        assert!(fit.converged);
    }

    #[test]
    fn simplex_trace_is_monotone() {
        let objective_fn = |p: &[f64]| {
            (p[0] - 1.5) * (p[0] - 1.5) + 4.0 * (p[1] + 0.5) * (p[1] + 0.5) + p[0] * p[1]
        };
        let bounds = vec![(-10.0, 10.0); 2];
        let outcome = nelder_mead(&objective_fn, &[3.0, 3.0], &bounds, 500, 1e-12);
        assert!(outcome.converged);
        for w in outcome.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "best objective increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn budget_exhaustion_reports_not_converged() {
        let density = std_normal(1).unwrap();
        let family = rotated_poly_family(&density).unwrap();
        let data = density.sample(100, 2).unwrap();
        let opts = SearchOptions { max_iterations: 3, ..Default::default() };
        let fit =
            evm_fit_nonlinear(|x| x[0].exp(), &family, &data, &[0.2; 5], &opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 3);
    }

    #[test]
    fn nonlinear_fit_is_deterministic() {
        let density = lognormal_gbm(1.0, 0.5, 1.0, 1.0).unwrap();
        let family = basket_exp_family(&[density.clone()], BasketVariant::Exp1).unwrap();
        let data = density.sample(300, 71).unwrap();
        let f = |x: &[f64]| (x[0] - 1.0).max(0.0);
        let opts = SearchOptions::default();
        let a = evm_fit_nonlinear(f, &family, &data, &[1.0, 1.0], &opts).unwrap();
        let b = evm_fit_nonlinear(f, &family, &data, &[1.0, 1.0], &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn basket_start_point_d1_equals_direct_grid_fit() {
        let density = lognormal_gbm(1.0, 0.5, 1.0, 1.0).unwrap();
        let data = density.sample(400, 83).unwrap();
        let opts = SearchOptions::default();
        let payoff = |_: usize, x: f64| (x - 1.0).max(0.0);
        let start = basket_start_point(
            payoff,
            std::slice::from_ref(&density),
            BasketVariant::Exp1,
            &data,
            &opts,
        )
        .unwrap();

        let family = basket_exp_family(std::slice::from_ref(&density), BasketVariant::Exp1).unwrap();
        let mut best: Option<FitResult> = None;
        for grid_start in super::basket_grid(BasketVariant::Exp1) {
            let fit = evm_fit_nonlinear(
                |x: &[f64]| (x[0] - 1.0).max(0.0),
                &family,
                &data,
                &grid_start,
                &opts,
            )
            .unwrap();
            if best.as_ref().map_or(true, |b| fit.objective < b.objective) {
                best = Some(fit);
            }
        }
        assert_eq!(start, best.unwrap().a_hat);
    }

    #[test]
    fn basket_start_point_identical_assets_identical_blocks() {
        let asset = lognormal_gbm(1.0, 0.5, 1.0, 1.0).unwrap();
        let densities = vec![asset.clone(), asset.clone(), asset];
        let product = crate::distributions::product_density(densities.clone()).unwrap();
        // identical marginals but distinct columns: fit per-column, so use
        // a dataset whose columns are identical draws
        let one = densities[0].sample(300, 5).unwrap();
        let mut rows = Vec::new();
        for r in one.rows() {
            rows.extend_from_slice(&[r[0], r[0], r[0]]);
        }
        let data = Dataset::from_rows(rows, 300, 3, 5, product.id()).unwrap();
        let start = basket_start_point(
            |_, x| (x - 1.0).max(0.0),
            &densities,
            BasketVariant::Exp2,
            &data,
            &SearchOptions::default(),
        )
        .unwrap();
        assert_eq!(&start[0..3], &start[3..6]);
        assert_eq!(&start[0..3], &start[6..9]);
    }
}
