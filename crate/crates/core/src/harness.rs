//! Declarative experiment runner: draw a training sample, fit the control
//! variate, draw an independent testing sample, and report variances and
//! efficiencies. Ships the built-in configurations for benchmark tables
//! 1–7.
//!
//! Seed discipline: every experiment owns a master seed; the training
//! sample, testing sample, random covariance, and initial basket prices
//! each draw from their own derived stream, so the train and test samples
//! never overlap and resizing one leaves the other untouched.

use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::distributions::{
    exponential_unit, lognormal_gbm, mvn, product_density, random_covariance, std_normal,
    CovarianceSpec, Dataset, Density,
};
use crate::error::{Error, Result};
use crate::fit::{
    basket_start_point, evm_fit_linear, evm_fit_nonlinear, ls_fit_linear, FitMethod, FitResult,
    SearchOptions,
};
use crate::rng::{derive_seed, purpose_seed, STREAM_BASKET_X0, STREAM_COVARIANCE, STREAM_TEST, STREAM_TRAIN};
use crate::stein::{
    additive_poly_family, basket_exp_family, gaussian_hermite_family, poly1d_family,
    rotated_poly_family, BasketVariant, CvFamily,
};
use crate::variance::{efficiency, empirical_variance, reduced_values, CostModel, VarianceReport};

/// The benchmark integrands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integrand {
    /// |x|².
    SumSq,
    /// Σᵢ e^{xᵢ}.
    SumExp,
    /// Σᵢ cos xᵢ.
    SumCos,
    /// 1/(1 + |x|).
    InvNorm,
    /// (Σᵢ xᵢ − K)⁺.
    BasketCall { strike: f64 },
}

impl Integrand {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Integrand::SumSq => x.iter().map(|v| v * v).sum(),
            Integrand::SumExp => x.iter().map(|v| v.exp()).sum(),
            Integrand::SumCos => x.iter().map(|v| v.cos()).sum(),
            Integrand::InvNorm => {
                1.0 / (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt())
            }
            Integrand::BasketCall { strike } => (x.iter().sum::<f64>() - strike).max(0.0),
        }
    }
}

/// How an mvn experiment obtains its covariance matrix.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum CovarianceSource {
    /// "random": QΛQᵀ drawn from the experiment's covariance stream.
    Named(String),
    /// Explicit matrix as an array of rows.
    Explicit(CovarianceSpec),
}

/// Geometric-Brownian-motion basket setup. Initial prices are drawn once
/// per experiment from the basket stream unless given explicitly; the
/// strike defaults to the sum of the initial prices.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BasketParams {
    pub t: f64,
    pub mu: f64,
    pub sigma: f64,
    pub x0_min: f64,
    pub x0_max: f64,
    pub x0: Option<Vec<f64>>,
    pub strike: Option<f64>,
}

impl Default for BasketParams {
    fn default() -> Self {
        BasketParams {
            t: 1.0,
            mu: 0.5,
            sigma: 1.0,
            x0_min: 0.5,
            x0_max: 1.5,
            x0: None,
            strike: None,
        }
    }
}

/// Printed benchmark values carried as reference metadata alongside a
/// config; never asserted, only echoed for side-by-side comparison.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ReferenceValues {
    pub svar: Option<f64>,
    pub svar_evm: Option<f64>,
    pub svar_ls: Option<f64>,
    pub eff_evm: Option<f64>,
    pub eff_ls: Option<f64>,
    pub ratio: Option<f64>,
}

fn default_dim() -> usize {
    1
}

fn default_methods() -> Vec<String> {
    vec!["evm".to_string()]
}

/// One experiment: density, integrand, family, fit methods, sample sizes,
/// seed, cost model, and optional basket/covariance/search settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    /// "std_normal" | "exp1" | "mvn" | "lognormal_gbm".
    pub density: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// "sumsq" | "sumexp" | "sumcos" | "invnorm" | "basket_call".
    pub integrand: String,
    /// "poly1d" | "additive_poly" | "gauss_hermite" | "rotated_poly" |
    /// "basket_exp1" | "basket_exp2".
    pub family: String,
    /// "evm" is mandatory; "ls" may be added for linear families.
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub cost: CostModel,
    #[serde(default)]
    pub covariance: Option<CovarianceSource>,
    #[serde(default)]
    pub basket: Option<BasketParams>,
    #[serde(default)]
    pub search: SearchOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceValues>,
}

/// A whole config file: one `[[experiment]]` section per experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(rename = "experiment")]
    pub experiments: Vec<ExperimentConfig>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<ConfigFile> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if file.experiments.is_empty() {
            return Err(Error::Config("config contains no [[experiment]] section".into()));
        }
        Ok(file)
    }
}

/// One fitted method inside a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRecord {
    pub method: FitMethod,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub a_hat: Vec<f64>,
}

impl From<FitResult> for FitRecord {
    fn from(fit: FitResult) -> Self {
        FitRecord {
            method: fit.method,
            objective: fit.objective,
            iterations: fit.iterations,
            converged: fit.converged,
            a_hat: fit.a_hat,
        }
    }
}

/// Wall-clock phases of one run, in seconds. Kept out of the serialized
/// output so report bytes depend only on the inputs.
#[derive(Debug, Clone, Copy, Default)]
pub struct WallClock {
    pub sample_secs: f64,
    pub fit_secs: f64,
    pub evaluate_secs: f64,
}

/// Everything one experiment produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment_id: String,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub variance: VarianceReport,
    pub fits: Vec<FitRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceValues>,
    pub config: ExperimentConfig,
    #[serde(skip, default)]
    pub wall: WallClock,
}

impl ExperimentReport {
    pub fn csv_row(&self) -> String {
        self.variance
            .csv_row(&self.experiment_id, self.n_train, self.n_test, self.seed)
    }
}

struct Prepared {
    density: Density,
    family: CvFamily,
    integrand: Integrand,
    /// Per-asset log-normal components of a basket experiment.
    assets: Option<Vec<Density>>,
    /// Initial prices of a basket experiment.
    x0: Option<Vec<f64>>,
}

fn build_density(config: &ExperimentConfig) -> Result<(Density, Option<Vec<Density>>, Option<Vec<f64>>)> {
    let dim = config.dim;
    if dim == 0 {
        return Err(Error::Config(format!("`dim` must be >= 1 in `{}`", config.id)));
    }
    match config.density.as_str() {
        "std_normal" => Ok((std_normal(dim)?, None, None)),
        "exp1" => {
            let density = if dim == 1 {
                exponential_unit()
            } else {
                product_density(vec![exponential_unit(); dim])?
            };
            Ok((density, None, None))
        }
        "mvn" => {
            let spec = match &config.covariance {
                None => random_covariance(dim, purpose_seed(config.seed, STREAM_COVARIANCE))?,
                Some(CovarianceSource::Named(name)) if name == "random" => {
                    random_covariance(dim, purpose_seed(config.seed, STREAM_COVARIANCE))?
                }
                Some(CovarianceSource::Named(other)) => {
                    return Err(Error::Config(format!(
                        "unknown `covariance` value `{other}` in `{}` (expected \"random\" or a matrix)",
                        config.id
                    )))
                }
                Some(CovarianceSource::Explicit(spec)) => {
                    if spec.dim() != dim {
                        return Err(Error::Config(format!(
                            "`covariance` is {}x{} but `dim` = {dim} in `{}`",
                            spec.dim(),
                            spec.dim(),
                            config.id
                        )));
                    }
                    spec.clone()
                }
            };
            Ok((mvn(spec)?, None, None))
        }
        "lognormal_gbm" => {
            let params = config.basket.clone().unwrap_or_default();
            let x0 = match &params.x0 {
                Some(explicit) => {
                    if explicit.len() != dim {
                        return Err(Error::Config(format!(
                            "`basket.x0` has {} entries for dim {dim} in `{}`",
                            explicit.len(),
                            config.id
                        )));
                    }
                    explicit.clone()
                }
                None => {
                    use rand::Rng;
                    let mut rng =
                        crate::rng::chacha(purpose_seed(config.seed, STREAM_BASKET_X0));
                    (0..dim)
                        .map(|_| rng.gen_range(params.x0_min..params.x0_max))
                        .collect()
                }
            };
            let assets: Result<Vec<Density>> = x0
                .iter()
                .map(|&p| lognormal_gbm(p, params.mu, params.sigma, params.t))
                .collect();
            let assets = assets?;
            let density = if dim == 1 {
                assets[0].clone()
            } else {
                product_density(assets.clone())?
            };
            Ok((density, Some(assets), Some(x0)))
        }
        other => Err(Error::Config(format!(
            "unknown `density` value `{other}` in `{}`",
            config.id
        ))),
    }
}

fn build_integrand(config: &ExperimentConfig, x0: Option<&[f64]>) -> Result<Integrand> {
    match config.integrand.as_str() {
        "sumsq" => Ok(Integrand::SumSq),
        "sumexp" => Ok(Integrand::SumExp),
        "sumcos" => Ok(Integrand::SumCos),
        "invnorm" => Ok(Integrand::InvNorm),
        "basket_call" => {
            let params = config.basket.clone().unwrap_or_default();
            let strike = match params.strike {
                Some(k) => k,
                None => x0
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "`basket_call` needs a lognormal_gbm density in `{}`",
                            config.id
                        ))
                    })?
                    .iter()
                    .sum(),
            };
            Ok(Integrand::BasketCall { strike })
        }
        other => Err(Error::Config(format!(
            "unknown `integrand` value `{other}` in `{}`",
            config.id
        ))),
    }
}

fn build_family(
    config: &ExperimentConfig,
    density: &Density,
    assets: Option<&[Density]>,
) -> Result<CvFamily> {
    match config.family.as_str() {
        "poly1d" => poly1d_family(density),
        "additive_poly" => additive_poly_family(density),
        "gauss_hermite" => gaussian_hermite_family(density),
        "rotated_poly" => rotated_poly_family(density),
        "basket_exp1" | "basket_exp2" => {
            let variant = if config.family == "basket_exp1" {
                BasketVariant::Exp1
            } else {
                BasketVariant::Exp2
            };
            let assets = assets.ok_or_else(|| {
                Error::Config(format!(
                    "family `{}` needs a lognormal_gbm density in `{}`",
                    config.family, config.id
                ))
            })?;
            basket_exp_family(assets, variant)
        }
        other => Err(Error::Config(format!(
            "unknown `family` value `{other}` in `{}`",
            config.id
        ))),
    }
}

fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    if config.n_train < 2 || config.n_test < 2 {
        return Err(Error::Config(format!(
            "`n_train` and `n_test` must be >= 2 in `{}`",
            config.id
        )));
    }
    if !config.methods.iter().any(|m| m == "evm") {
        return Err(Error::Config(format!("`methods` must include \"evm\" in `{}`", config.id)));
    }
    if let Some(bad) = config.methods.iter().find(|m| *m != "evm" && *m != "ls") {
        return Err(Error::Config(format!(
            "unknown `methods` entry `{bad}` in `{}`",
            config.id
        )));
    }
    let (density, assets, x0) = build_density(config)?;
    let integrand = build_integrand(config, x0.as_deref())?;
    let family = build_family(config, &density, assets.as_deref())?;
    if matches!(integrand, Integrand::BasketCall { .. })
        && !matches!(config.density.as_str(), "lognormal_gbm")
    {
        return Err(Error::Config(format!(
            "`basket_call` needs the lognormal_gbm density in `{}`",
            config.id
        )));
    }
    if config.methods.iter().any(|m| m == "ls") && !family.is_linear() {
        return Err(Error::Config(format!(
            "method \"ls\" needs a linear family, but `{}` is nonlinear in `{}`",
            config.family, config.id
        )));
    }
    Ok(Prepared { density, family, integrand, assets, x0 })
}

/// Start point for a nonlinear EVM fit, following the benchmark protocol:
/// the rotated family starts at (a, B) = (0, Σ̂) with Σ̂ the training-sample
/// covariance; basket families assemble per-asset 1-D fits, each asset
/// priced against its own initial value; anything else starts at zero.
fn nonlinear_start(prepared: &Prepared, train: &Dataset, opts: &SearchOptions) -> Result<Vec<f64>> {
    let family = &prepared.family;
    match family.family_id() {
        "rotated_poly" => {
            let d = prepared.density.dim();
            let mut start = vec![0.0; family.param_dim()];
            let cov = train.sample_covariance();
            for i in 0..d {
                for j in 0..d {
                    start[4 * d + i * d + j] = cov[(i, j)];
                }
            }
            Ok(start)
        }
        "basket_exp1" | "basket_exp2" => {
            let assets = prepared.assets.as_ref().expect("basket family implies assets");
            let x0 = prepared.x0.as_ref().expect("basket family implies x0");
            let variant = if family.family_id() == "basket_exp1" {
                BasketVariant::Exp1
            } else {
                BasketVariant::Exp2
            };
            let per_asset_strike = x0.clone();
            basket_start_point(
                move |i, x| (x - per_asset_strike[i]).max(0.0),
                assets,
                variant,
                train,
                opts,
            )
        }
        _ => Ok(vec![0.0; family.param_dim()]),
    }
}

/// Runs one experiment end to end. The train and test samples come from
/// disjoint seed streams of the config's master seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let prepared = prepare(config)?;
    let mut wall = WallClock::default();

    let t0 = Instant::now();
    let train = prepared
        .density
        .sample(config.n_train, purpose_seed(config.seed, STREAM_TRAIN))?;
    wall.sample_secs = t0.elapsed().as_secs_f64();

    let integrand = prepared.integrand;
    let f = |x: &[f64]| integrand.eval(x);
    let family = &prepared.family;

    let t0 = Instant::now();
    let mut fits: Vec<FitRecord> = Vec::new();
    for method in &config.methods {
        let fit = match method.as_str() {
            "evm" => {
                if family.is_linear() {
                    evm_fit_linear(f, family, &train)
                } else {
                    let start = nonlinear_start(&prepared, &train, &config.search)?;
                    evm_fit_nonlinear(f, family, &train, &start, &config.search)
                }
            }
            "ls" => ls_fit_linear(f, family, &train),
            _ => unreachable!("validated in prepare"),
        };
        let fit = fit.map_err(|e| Error::FitFailed {
            experiment_id: config.id.clone(),
            source: Box::new(e),
        })?;
        fits.push(fit.into());
    }
    wall.fit_secs = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let test = prepared
        .density
        .sample(config.n_test, purpose_seed(config.seed, STREAM_TEST))?;
    let raw: Vec<f64> = test.rows().map(f).collect();
    let svar = empirical_variance(&raw)?;

    let evm_fit = fits
        .iter()
        .find(|r| matches!(r.method, FitMethod::EvmLinear | FitMethod::EvmNonlinear))
        .expect("evm method is mandatory");
    let svar_evm = empirical_variance(&reduced_values(f, family, &evm_fit.a_hat, &test)?)?;
    let svar_ls = match fits.iter().find(|r| r.method == FitMethod::LsLinear) {
        Some(ls) => Some(empirical_variance(&reduced_values(f, family, &ls.a_hat, &test)?)?),
        None => None,
    };
    wall.evaluate_secs = t0.elapsed().as_secs_f64();

    let eff_evm = efficiency(svar, svar_evm, config.cost);
    let eff_ls = svar_ls.map(|v| efficiency(svar, v, config.cost));
    let variance = VarianceReport {
        svar,
        svar_evm,
        svar_ls,
        eff_evm,
        eff_ls,
        ratio: svar / svar_evm,
    };

    Ok(ExperimentReport {
        experiment_id: config.id.clone(),
        n_train: config.n_train,
        n_test: config.n_test,
        seed: config.seed,
        variance,
        fits,
        reference: config.reference.clone(),
        config: config.clone(),
        wall,
    })
}

/// Deterministic summary of k independent replications of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub experiment_id: String,
    pub replicates: usize,
    pub failures: Vec<String>,
    pub median_svar_evm: f64,
    pub iqr_svar_evm: f64,
    #[serde(with = "crate::report::maybe_nonfinite")]
    pub median_ratio: f64,
    #[serde(with = "crate::report::maybe_nonfinite")]
    pub iqr_ratio: f64,
    pub reports: Vec<ExperimentReport>,
}

/// Linear-interpolation quantile of a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    quantile(&sorted, 0.5)
}

/// Runs `k` seeds derived from `base_seed` (index 0 keeps the base seed)
/// and summarizes the ratio and reduced variance across the successful
/// runs; individual failures are recorded, not fatal.
pub fn replicate(config: &ExperimentConfig, k: usize, base_seed: u64) -> Result<ReplicateSummary> {
    if k == 0 {
        return Err(Error::InvalidArgument("replicate needs k >= 1".into()));
    }
    let mut reports = Vec::with_capacity(k);
    let mut failures = Vec::new();
    for index in 0..k {
        let mut one = config.clone();
        one.seed = derive_seed(base_seed, index as u64);
        match run_experiment(&one) {
            Ok(report) => reports.push(report),
            Err(e) => failures.push(format!("seed index {index}: {e}")),
        }
    }
    let mut svars: Vec<f64> = reports.iter().map(|r| r.variance.svar_evm).collect();
    let mut ratios: Vec<f64> = reports.iter().map(|r| r.variance.ratio).collect();
    svars.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(ReplicateSummary {
        experiment_id: config.id.clone(),
        replicates: k,
        failures,
        median_svar_evm: quantile(&svars, 0.5),
        iqr_svar_evm: quantile(&svars, 0.75) - quantile(&svars, 0.25),
        median_ratio: quantile(&ratios, 0.5),
        iqr_ratio: quantile(&ratios, 0.75) - quantile(&ratios, 0.25),
        reports,
    })
}

pub const TABLE_COUNT: u32 = 7;
const TABLE_SEED: u64 = 20_240_501;

fn refv(
    svar: f64,
    svar_evm: f64,
    svar_ls: Option<f64>,
    eff_evm: f64,
    eff_ls: Option<f64>,
    ratio: Option<f64>,
) -> Option<ReferenceValues> {
    Some(ReferenceValues {
        svar: Some(svar),
        svar_evm: Some(svar_evm),
        svar_ls,
        eff_evm: Some(eff_evm),
        eff_ls,
        ratio,
    })
}

fn linear_config(
    id: &str,
    density: &str,
    dim: usize,
    integrand: &str,
    family: &str,
    n_train: usize,
    n_test: usize,
    reference: Option<ReferenceValues>,
) -> ExperimentConfig {
    ExperimentConfig {
        id: id.to_string(),
        density: density.to_string(),
        dim,
        integrand: integrand.to_string(),
        family: family.to_string(),
        methods: vec!["evm".to_string(), "ls".to_string()],
        n_train,
        n_test,
        seed: TABLE_SEED,
        cost: CostModel::default(),
        covariance: None,
        basket: None,
        search: SearchOptions::default(),
        reference,
    }
}

fn basket_config(table: u32, family: &str, dim: usize, reference: Option<ReferenceValues>) -> ExperimentConfig {
    ExperimentConfig {
        id: format!("t{table}_basket_d{dim}"),
        density: "lognormal_gbm".to_string(),
        dim,
        integrand: "basket_call".to_string(),
        family: family.to_string(),
        methods: vec!["evm".to_string()],
        n_train: 1000,
        n_test: 1_000_000,
        seed: TABLE_SEED,
        cost: CostModel::default(),
        covariance: None,
        basket: Some(BasketParams::default()),
        search: SearchOptions { max_iterations: 4000, restarts: 2, ..Default::default() },
        reference,
    }
}

/// The built-in benchmark configurations.
///
/// 1: 1-D normal/exponential, cubic family, EVM vs LS.
/// 2: 10-D i.i.d. coordinates, additive cubic family, EVM vs LS.
/// 3: as 2 but trained on 50 points (normal only).
/// 4: 10-D dependent Gaussian, rotated nonlinear family.
/// 5: basket options, one-exponent family ζ¹, d ∈ {1,10,25,50,100}.
/// 6: basket options, two-exponent family ζ², same dimensions.
/// 7: 10-D dependent Gaussian, linear Hermite family, EVM vs LS.
pub fn table_configs(table: u32) -> Result<Vec<ExperimentConfig>> {
    match table {
        1 => Ok(vec![
            linear_config("t1_normal_x2", "std_normal", 1, "sumsq", "poly1d", 500, 100_000,
                refv(1.9989, 3.2e-15, Some(0.0064), 2.0e14, Some(103.1210), None)),
            linear_config("t1_normal_expx", "std_normal", 1, "sumexp", "poly1d", 500, 100_000,
                refv(4.6410, 0.0272, Some(0.0319), 56.8328, Some(48.3517), None)),
            linear_config("t1_normal_cosx", "std_normal", 1, "sumcos", "poly1d", 500, 100_000,
                refv(0.1999, 0.0008, Some(0.0016), 82.7796, Some(39.7381), None)),
            linear_config("t1_normal_invnorm", "std_normal", 1, "invnorm", "poly1d", 500, 100_000,
                refv(0.0346, 0.0105, Some(0.0087), 1.0948, Some(1.3260), None)),
            linear_config("t1_exp_x2", "exp1", 1, "sumsq", "poly1d", 500, 100_000,
                refv(19.9852, 3.0e-13, Some(0.0042), 2.1e13, Some(1553.4700), None)),
            linear_config("t1_exp_cosx", "exp1", 1, "sumcos", "poly1d", 500, 100_000,
                refv(0.3492, 0.0431, Some(0.0422), 2.7002, Some(2.7543), None)),
            linear_config("t1_exp_invnorm", "exp1", 1, "invnorm", "poly1d", 500, 100_000,
                refv(0.0479, 0.0012, Some(0.0017), 13.1472, Some(8.9878), None)),
        ]),
        2 => Ok(vec![
            linear_config("t2_normal_normsq", "std_normal", 10, "sumsq", "additive_poly", 500, 100_000,
                refv(20.0487, 1.0e-13, Some(37.7377), 6.4e13, Some(0.1770), None)),
            linear_config("t2_normal_sumexp", "std_normal", 10, "sumexp", "additive_poly", 500, 100_000,
                refv(46.1526, 0.3992, Some(104.6210), 38.5331, Some(0.1470), None)),
            linear_config("t2_normal_sumcos", "std_normal", 10, "sumcos", "additive_poly", 500, 100_000,
                refv(2.0038, 0.0102, Some(13.5536), 64.9322, Some(0.0492), None)),
            linear_config("t2_normal_invnorm", "std_normal", 10, "invnorm", "additive_poly", 500, 100_000,
                refv(0.0020, 0.0003, Some(0.0246), 2.2811, Some(0.0278), None)),
            linear_config("t2_exp_normsq", "exp1", 10, "sumsq", "additive_poly", 500, 100_000,
                refv(193.939, 1.4e-12, Some(1461.3000), 4.4e13, Some(0.0442), None)),
            linear_config("t2_exp_sumcos", "exp1", 10, "sumcos", "additive_poly", 500, 100_000,
                refv(3.4982, 2.2988, Some(73.6570), 0.5072, Some(0.0158), None)),
            linear_config("t2_exp_invnorm", "exp1", 10, "invnorm", "additive_poly", 500, 100_000,
                refv(0.0031, 0.0007, Some(0.1542), 1.4758, Some(0.0068), None)),
        ]),
        3 => Ok(vec![
            linear_config("t3_normal_normsq", "std_normal", 10, "sumsq", "additive_poly", 50, 100_000,
                refv(20.0487, 1.5e-10, Some(1508.8300), 4.3e10, Some(0.0044), None)),
            linear_config("t3_normal_sumexp", "std_normal", 10, "sumexp", "additive_poly", 50, 100_000,
                refv(46.1526, 1.5104, Some(4058.0300), 10.1849, Some(0.0037), None)),
            linear_config("t3_normal_sumcos", "std_normal", 10, "sumcos", "additive_poly", 50, 100_000,
                refv(2.0038, 0.0286, Some(557.9050), 23.3086, Some(0.0011), None)),
            linear_config("t3_normal_invnorm", "std_normal", 10, "invnorm", "additive_poly", 50, 100_000,
                refv(0.0020, 0.0048, Some(0.9988), 0.1420, Some(0.0006), None)),
        ]),
        4 => {
            let rows = [
                ("t4_mvn_normsq", "sumsq", refv(31.1849, 0.1567, None, 66.3020, None, None)),
                ("t4_mvn_sumexp", "sumexp", refv(88.3872, 3.9196, None, 7.5166, None, None)),
                ("t4_mvn_sumcos", "sumcos", refv(2.5196, 0.0829, None, 10.1279, None, None)),
            ];
            Ok(rows
                .into_iter()
                .map(|(id, integrand, reference)| ExperimentConfig {
                    id: id.to_string(),
                    density: "mvn".to_string(),
                    dim: 10,
                    integrand: integrand.to_string(),
                    family: "rotated_poly".to_string(),
                    methods: vec!["evm".to_string()],
                    n_train: 500,
                    n_test: 10_000,
                    seed: TABLE_SEED,
                    cost: CostModel::default(),
                    covariance: None,
                    basket: None,
                    search: SearchOptions {
                        max_iterations: 20_000,
                        restarts: 2,
                        tolerance: 1e-10,
                        ..Default::default()
                    },
                    reference,
                })
                .collect())
        }
        5 => Ok(vec![
            basket_config(5, "basket_exp1", 1, refv(2.4038, 0.0044, None, 179.4021, None, Some(538.2110))),
            basket_config(5, "basket_exp1", 10, refv(52.2875, 0.5232, None, 33.3079, None, Some(99.9237))),
            basket_config(5, "basket_exp1", 25, refv(131.6974, 1.0134, None, 43.3181, None, Some(129.9545))),
            basket_config(5, "basket_exp1", 50, refv(266.1397, 2.8339, None, 31.3038, None, Some(93.9114))),
            basket_config(5, "basket_exp1", 100, refv(517.9147, 5.4508, None, 31.6719, None, Some(95.0159))),
        ]),
        6 => Ok(vec![
            basket_config(6, "basket_exp2", 1, refv(2.4038, 0.0041, None, 191.8013, None, Some(575.4038))),
            basket_config(6, "basket_exp2", 10, refv(52.2875, 0.4707, None, 37.0260, None, Some(111.0782))),
            basket_config(6, "basket_exp2", 25, refv(131.6974, 0.2241, None, 195.8283, None, Some(587.4850))),
            basket_config(6, "basket_exp2", 50, refv(266.1397, 0.0561, None, 1579.2940, None, Some(4737.8810))),
            basket_config(6, "basket_exp2", 100, refv(517.9147, 0.0313, None, 5514.6280, None, Some(16543.8800))),
        ]),
        7 => {
            let rows = [
                ("t7_mvn_normsq", "sumsq", refv(315.4940, 0.0236, Some(265.268), 4453.3, Some(0.3964), None)),
                ("t7_mvn_sumexp", "sumexp", refv(3454.95, 1875.80, Some(2618.53), 0.6139, Some(0.4398), None)),
                ("t7_mvn_sumcos", "sumcos", refv(6.8764, 3.1421, Some(5.0005), 0.7294, Some(0.4583), None)),
            ];
            Ok(rows
                .into_iter()
                .map(|(id, integrand, reference)| {
                    let mut config = linear_config(
                        id,
                        "mvn",
                        10,
                        integrand,
                        "gauss_hermite",
                        500,
                        10_000,
                        reference,
                    );
                    config.covariance = Some(CovarianceSource::Named("random".to_string()));
                    config
                })
                .collect())
        }
        other => Err(Error::InvalidArgument(format!(
            "table number must be 1..=7, got {other}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_shapes() {
        assert_eq!(table_configs(1).unwrap().len(), 7);
        assert_eq!(table_configs(2).unwrap().len(), 7);
        let t3 = table_configs(3).unwrap();
        assert_eq!(t3.len(), 4);
        assert!(t3.iter().all(|c| c.n_train == 50));
        assert_eq!(table_configs(4).unwrap().len(), 3);
        let dims: Vec<usize> = table_configs(5)
            .unwrap()
            .iter()
            .chain(table_configs(6).unwrap().iter())
            .filter(|c| c.integrand == "basket_call")
            .map(|c| c.dim)
            .collect();
        assert_eq!(dims, vec![1, 10, 25, 50, 100, 1, 10, 25, 50, 100]);
        assert_eq!(table_configs(7).unwrap().len(), 3);
        assert!(table_configs(0).is_err());
        assert!(table_configs(8).is_err());
    }

    #[test]
    fn exact_cv_experiment_runs() {
        let mut config = table_configs(1).unwrap()[0].clone();
        config.n_test = 10_000;
        config.seed = 11;
        let report = run_experiment(&config).unwrap();
        assert!(report.variance.svar_evm <= 1e-10, "svar_evm {}", report.variance.svar_evm);
        assert!((report.variance.svar - 2.0).abs() < 0.15, "svar {}", report.variance.svar);
        assert!(report.variance.svar_ls.unwrap() > report.variance.svar_evm);
        assert_eq!(report.fits.len(), 2);
        // ratio recomputes from stored fields
        assert_eq!(report.variance.ratio, report.variance.svar / report.variance.svar_evm);
    }

    #[test]
    fn train_test_streams_are_independent() {
        let mut config = table_configs(1).unwrap()[1].clone();
        config.n_test = 1000;
        config.seed = 7;
        let small = run_experiment(&config).unwrap();
        config.n_test = 2000;
        let large = run_experiment(&config).unwrap();
        // resizing the test sample must not move the fitted parameters
        assert_eq!(small.fits[0].a_hat, large.fits[0].a_hat);
    }

    #[test]
    fn replicate_is_deterministic_and_degenerate_at_one() {
        let mut config = table_configs(1).unwrap()[2].clone();
        config.n_test = 5_000;
        let single = replicate(&config, 1, 99).unwrap();
        let mut one = config.clone();
        one.seed = 99;
        let direct = run_experiment(&one).unwrap();
        assert_eq!(single.median_ratio, direct.variance.ratio);
        assert_eq!(single.median_svar_evm, direct.variance.svar_evm);

        let a = replicate(&config, 3, 42).unwrap();
        let b = replicate(&config, 3, 42).unwrap();
        assert_eq!(a.median_ratio, b.median_ratio);
        assert_eq!(a.iqr_ratio, b.iqr_ratio);
        assert!(replicate(&config, 0, 1).is_err());
    }

    #[test]
    fn config_errors_name_the_offender() {
        let mut config = table_configs(1).unwrap()[0].clone();
        config.density = "cauchy".to_string();
        let err = run_experiment(&config).unwrap_err().to_string();
        assert!(err.contains("density") && err.contains("cauchy"), "{err}");

        let mut config = table_configs(1).unwrap()[0].clone();
        config.methods = vec!["evm".into(), "gradient".into()];
        let err = run_experiment(&config).unwrap_err().to_string();
        assert!(err.contains("methods") && err.contains("gradient"), "{err}");

        let mut config = table_configs(4).unwrap()[0].clone();
        config.methods = vec!["evm".into(), "ls".into()];
        let err = run_experiment(&config).unwrap_err().to_string();
        assert!(err.contains("ls"), "{err}");
    }

    #[test]
    fn config_file_round_trip() {
        let text = r#"
[[experiment]]
id = "demo"
density = "std_normal"
dim = 1
integrand = "sumexp"
family = "poly1d"
methods = ["evm", "ls"]
n_train = 200
n_test = 2000
seed = 5
"#;
        let file = ConfigFile::parse(text).unwrap();
        assert_eq!(file.experiments.len(), 1);
        let report = run_experiment(&file.experiments[0]).unwrap();
        assert!(report.variance.svar_evm < report.variance.svar);

        assert!(ConfigFile::parse("[[experiment]]\nid = \"x\"").is_err());
        assert!(ConfigFile::parse("").is_err());
    }

    #[test]
    fn explicit_covariance_and_basket_overrides() {
        let text = r#"
[[experiment]]
id = "mvn_explicit"
density = "mvn"
dim = 2
integrand = "sumsq"
family = "gauss_hermite"
covariance = [[1.0, 0.3], [0.3, 2.0]]
n_train = 300
n_test = 2000
seed = 3

[[experiment]]
id = "basket_pinned"
density = "lognormal_gbm"
dim = 2
integrand = "basket_call"
family = "basket_exp1"
n_train = 300
n_test = 2000
seed = 3

[experiment.basket]
x0 = [1.0, 1.2]
"#;
        let file = ConfigFile::parse(text).unwrap();
        let mvn_report = run_experiment(&file.experiments[0]).unwrap();
        assert!(mvn_report.variance.svar_evm <= mvn_report.variance.svar);
        let basket_report = run_experiment(&file.experiments[1]).unwrap();
        // strike defaults to Σ x0 = 2.2; svar of a d=2 basket is O(1)
        assert!(basket_report.variance.svar > 0.0);
    }
}
