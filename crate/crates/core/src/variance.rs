//! Empirical variance U-statistic, reduced values, and the cost-model
//! efficiency metric.
//!
//! The central quantity is
//!
//! ```text
//! V_n(g) = (1/(n(n-1))) Σ_{i<j} (g(X_i) - g(X_j))²
//! ```
//!
//! which equals the 1/(n−1)-normalized centered sum of squares and is an
//! unbiased estimator of Var(g). It is computed in O(n); the O(n²)
//! pairwise sum exists only as a test oracle.

use serde::{Deserialize, Serialize};

use crate::distributions::Dataset;
use crate::error::{Error, Result};
use crate::stein::CvFamily;

/// Per-point evaluation costs: the integrand f costs `cost_f`, a control
/// variate written out by the product rule costs `cost_cv`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct CostModel {
    pub cost_f: u32,
    pub cost_cv: u32,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { cost_f: 1, cost_cv: 2 }
    }
}

/// Variance figures of one experiment on the testing sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceReport {
    /// V_n of the raw integrand.
    pub svar: f64,
    /// V_n of f − ζ at the EVM parameters.
    pub svar_evm: f64,
    /// V_n of f − ζ at the least-squares parameters (linear families only).
    pub svar_ls: Option<f64>,
    #[serde(with = "crate::report::maybe_nonfinite")]
    pub eff_evm: f64,
    #[serde(default, with = "crate::report::maybe_nonfinite_opt")]
    pub eff_ls: Option<f64>,
    /// svar / svar_evm.
    #[serde(with = "crate::report::maybe_nonfinite")]
    pub ratio: f64,
}

impl VarianceReport {
    /// Fixed column order shared by every CSV emitter.
    pub const CSV_COLUMNS: &'static str =
        "experiment_id,n_train,n_test,svar,svar_evm,svar_ls,eff_evm,eff_ls,ratio,seed";

    pub fn csv_row(&self, experiment_id: &str, n_train: usize, n_test: usize, seed: u64) -> String {
        let opt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            experiment_id,
            n_train,
            n_test,
            self.svar,
            self.svar_evm,
            opt(&self.svar_ls),
            self.eff_evm,
            opt(&self.eff_ls),
            self.ratio,
            seed
        )
    }
}

/// V_n over the values: the unbiased empirical variance.
///
/// Accumulation is centered on the first element so that the
/// sum-of-squares identity does not cancel catastrophically when the mean
/// dwarfs the spread. The result is clamped at zero.
pub fn empirical_variance(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "empirical variance needs n >= 2, got {n}"
        )));
    }
    let shift = values[0];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &v in values {
        let c = v - shift;
        sum += c;
        sum_sq += c * c;
    }
    let n = n as f64;
    Ok(((sum_sq - sum * sum / n) / (n - 1.0)).max(0.0))
}

/// g_i = f(X_i) − ζ_a(X_i) for every row of the dataset.
pub fn reduced_values<F>(f: F, family: &CvFamily, a: &[f64], data: &Dataset) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    data.rows().map(|x| Ok(f(x) - family.eval(a, x)?)).collect()
}

/// Efficiency of a variance-reduction method under the cost model:
/// (svar·cost_f) / (svar_method·(cost_f + cost_cv)).
///
/// A zero `svar_method` yields the +infinity sentinel; `f64::is_infinite`
/// is the flag for that degenerate case.
pub fn efficiency(svar: f64, svar_method: f64, cost: CostModel) -> f64 {
    if svar_method == 0.0 {
        return f64::INFINITY;
    }
    (svar * f64::from(cost.cost_f)) / (svar_method * f64::from(cost.cost_f + cost.cost_cv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::std_normal;
    use crate::stein::poly1d_family;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    /// O(n²) pairwise oracle for V_n.
    fn pairwise_variance(values: &[f64]) -> f64 {
        let n = values.len();
        let mut acc = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = values[i] - values[j];
                acc += d * d;
            }
        }
        acc / (n as f64 * (n as f64 - 1.0))
    }

    #[test]
    fn hand_checked_values() {
        assert_eq!(empirical_variance(&[3.5, 3.5, 3.5, 3.5]).unwrap(), 0.0);
        assert_relative_eq!(empirical_variance(&[0.0, 1.0]).unwrap(), 0.5);
        // pairwise sum (1+4+1)/6
        assert_relative_eq!(empirical_variance(&[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert!(empirical_variance(&[1.0]).is_err());
        assert!(empirical_variance(&[]).is_err());
    }

    #[test]
    fn u_statistic_identity_on_random_sequences() {
        let mut rng = crate::rng::chacha(17);
        for _ in 0..50 {
            let n = rng.gen_range(2..=200);
            let scale = 10f64.powi(rng.gen_range(-3..4));
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) * scale + 5.0 * scale).collect();
            let fast = empirical_variance(&values).unwrap();
            let slow = pairwise_variance(&values);
            assert_relative_eq!(fast, slow, max_relative = 1e-12);
        }
    }

    #[test]
    fn unbiased_for_uniform_variance() {
        let mut rng = crate::rng::chacha(5);
        let reps = 2000;
        let estimates: Vec<f64> = (0..reps)
            .map(|_| {
                let v: Vec<f64> = (0..10).map(|_| rng.gen_range(0.0..1.0)).collect();
                empirical_variance(&v).unwrap()
            })
            .collect();
        let mean = estimates.iter().sum::<f64>() / reps as f64;
        let var = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (reps as f64 - 1.0);
        let se = (var / reps as f64).sqrt();
        assert!(
            (mean - 1.0 / 12.0).abs() < 4.0 * se,
            "mean {mean} vs 1/12 (se {se})"
        );
    }

    proptest! {
        #[test]
        fn shift_invariance(
            values in proptest::collection::vec(-1e3f64..1e3, 2..64),
            c in -1e6f64..1e6,
        ) {
            let shifted: Vec<f64> = values.iter().map(|v| v + c).collect();
            let a = empirical_variance(&values).unwrap();
            let b = empirical_variance(&shifted).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-9).max(b.abs()) + 1e-9);
        }

        #[test]
        fn scale_law(
            values in proptest::collection::vec(-1e3f64..1e3, 2..64),
            c in -100f64..100.0,
        ) {
            let scaled: Vec<f64> = values.iter().map(|v| c * v).collect();
            let a = empirical_variance(&values).unwrap();
            let b = empirical_variance(&scaled).unwrap();
            prop_assert!((b - c * c * a).abs() <= 1e-12 * (c * c * a).max(1.0));
        }

        #[test]
        fn never_negative(values in proptest::collection::vec(-1e9f64..1e9, 2..64)) {
            prop_assert!(empirical_variance(&values).unwrap() >= 0.0);
        }
    }

    #[test]
    fn reduced_values_and_exact_cv() {
        let density = std_normal(1).unwrap();
        let family = poly1d_family(&density).unwrap();
        let data = density.sample(200, 3).unwrap();
        let f = |x: &[f64]| x[0] * x[0];

        // a = 0 reproduces the raw integrand
        let raw = reduced_values(f, &family, &[0.0; 4], &data).unwrap();
        for (g, x) in raw.iter().zip(data.rows()) {
            assert_eq!(*g, f(x));
        }

        // the exact control variate x² − 1 leaves a constant
        let g = reduced_values(f, &family, &[0.0, -1.0, 0.0, 0.0], &data).unwrap();
        assert!(g.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(empirical_variance(&g).unwrap() <= 1e-12);
    }

    #[test]
    fn efficiency_formula() {
        let cost = CostModel::default();
        assert_relative_eq!(efficiency(1.0, 1.0, cost), 1.0 / 3.0);
        // benchmark-table spot checks at the printed (rounded) inputs
        assert_relative_eq!(efficiency(0.1999, 0.0008, cost), 83.2917, max_relative = 1e-4);
        assert_relative_eq!(efficiency(2.4038, 0.0044, cost), 182.1061, max_relative = 1e-4);
        assert!(efficiency(1.0, 0.0, cost).is_infinite());
    }
}
