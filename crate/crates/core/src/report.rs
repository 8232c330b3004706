//! Report emission: CSV with a fixed column order and JSON arrays, both
//! byte-deterministic functions of their inputs.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::{ExperimentReport, ReplicateSummary};
use crate::variance::VarianceReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidArgument(format!(
                "unknown format `{other}` (expected csv or json)"
            ))),
        }
    }
}

const REFERENCE_COLUMNS: &str = "ref_svar,ref_svar_evm,ref_svar_ls,ref_eff_evm,ref_eff_ls,ref_ratio";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the reports in the requested format. CSV uses the fixed column
/// order of the variance report; reference columns are appended when any
/// report carries reference metadata. An empty list yields a header-only
/// CSV (or an empty JSON array).
pub fn emit_report<W: Write + ?Sized>(
    reports: &[ExperimentReport],
    format: ReportFormat,
    out: &mut W,
) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io { path: "<writer>".into(), source: e };
    match format {
        ReportFormat::Csv => {
            let with_reference = reports.iter().any(|r| r.reference.is_some());
            if with_reference {
                writeln!(out, "{},{}", VarianceReport::CSV_COLUMNS, REFERENCE_COLUMNS)
                    .map_err(io_err)?;
            } else {
                writeln!(out, "{}", VarianceReport::CSV_COLUMNS).map_err(io_err)?;
            }
            for report in reports {
                if with_reference {
                    let r = report.reference.clone().unwrap_or_default();
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        report.csv_row(),
                        opt(r.svar),
                        opt(r.svar_evm),
                        opt(r.svar_ls),
                        opt(r.eff_evm),
                        opt(r.eff_ls),
                        opt(r.ratio)
                    )
                    .map_err(io_err)?;
                } else {
                    writeln!(out, "{}", report.csv_row()).map_err(io_err)?;
                }
            }
        }
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, reports)
                .map_err(|e| Error::Config(format!("json serialization failed: {e}")))?;
            writeln!(out).map_err(io_err)?;
        }
    }
    Ok(())
}

/// [`emit_report`] into a file, surfacing the path on I/O failures.
pub fn emit_report_to_path(
    reports: &[ExperimentReport],
    format: ReportFormat,
    path: &Path,
) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    emit_report(reports, format, &mut file)
}

/// Summary table for replicated runs: one row per experiment with the
/// median/IQR of the reduced variance and the ratio.
pub fn emit_replicate_summary<W: Write + ?Sized>(
    summaries: &[ReplicateSummary],
    format: ReportFormat,
    out: &mut W,
) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io { path: "<writer>".into(), source: e };
    match format {
        ReportFormat::Csv => {
            let with_reference = summaries
                .iter()
                .any(|s| s.reports.iter().any(|r| r.reference.is_some()));
            let base = "experiment_id,replicates,failures,median_svar_evm,iqr_svar_evm,median_ratio,iqr_ratio";
            if with_reference {
                writeln!(out, "{base},ref_svar_evm,ref_ratio").map_err(io_err)?;
            } else {
                writeln!(out, "{base}").map_err(io_err)?;
            }
            for s in summaries {
                let row = format!(
                    "{},{},{},{},{},{},{}",
                    s.experiment_id,
                    s.replicates,
                    s.failures.len(),
                    s.median_svar_evm,
                    s.iqr_svar_evm,
                    s.median_ratio,
                    s.iqr_ratio
                );
                if with_reference {
                    let r = s
                        .reports
                        .first()
                        .and_then(|r| r.reference.clone())
                        .unwrap_or_default();
                    writeln!(out, "{row},{},{}", opt(r.svar_evm), opt(r.ratio)).map_err(io_err)?;
                } else {
                    writeln!(out, "{row}").map_err(io_err)?;
                }
            }
        }
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, summaries)
                .map_err(|e| Error::Config(format!("json serialization failed: {e}")))?;
            writeln!(out).map_err(io_err)?;
        }
    }
    Ok(())
}

/// Serde adapter for f64 fields that may legitimately hold the infinity
/// sentinel (e.g. efficiency when the reduced variance is exactly zero).
/// Finite values serialize as numbers; non-finite ones as the strings
/// "inf", "-inf", "nan", so JSON output stays parseable and round-trips.
pub mod maybe_nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            serializer.serialize_f64(*v)
        } else if v.is_nan() {
            serializer.serialize_str("nan")
        } else if *v > 0.0 {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Tag(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Ok(v),
            Raw::Tag(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad float tag `{other}`"))),
            },
        }
    }
}

/// Same adapter for optional fields.
pub mod maybe_nonfinite_opt {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, serializer: S) -> Result<S::Ok, S::Error> {
        match v {
            None => serializer.serialize_none(),
            Some(x) if x.is_finite() => serializer.serialize_some(x),
            Some(x) if x.is_nan() => serializer.serialize_some("nan"),
            Some(x) if *x > 0.0 => serializer.serialize_some("inf"),
            Some(_) => serializer.serialize_some("-inf"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Option<f64>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Tag(String),
        }
        match Option::<Raw>::deserialize(deserializer)? {
            None => Ok(None),
            Some(Raw::Num(v)) => Ok(Some(v)),
            Some(Raw::Tag(s)) => match s.as_str() {
                "inf" => Ok(Some(f64::INFINITY)),
                "-inf" => Ok(Some(f64::NEG_INFINITY)),
                "nan" => Ok(Some(f64::NAN)),
                other => Err(serde::de::Error::custom(format!("bad float tag `{other}`"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_experiment, table_configs};

    #[test]
    fn empty_list_yields_header_only_csv() {
        let mut buf = Vec::new();
        emit_report(&[], ReportFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, format!("{}\n", VarianceReport::CSV_COLUMNS));
    }

    #[test]
    fn one_report_yields_two_csv_lines() {
        let mut config = table_configs(1).unwrap()[3].clone();
        config.n_test = 2000;
        config.reference = None;
        let report = run_experiment(&config).unwrap();
        let mut buf = Vec::new();
        emit_report(std::slice::from_ref(&report), ReportFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().starts_with("t1_normal_invnorm,500,2000,"));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut config = table_configs(1).unwrap()[0].clone();
        config.n_test = 2000;
        let report = run_experiment(&config).unwrap();
        let mut buf = Vec::new();
        emit_report(std::slice::from_ref(&report), ReportFormat::Json, &mut buf).unwrap();
        let parsed: Vec<crate::harness::ExperimentReport> = serde_json::from_slice(&buf).unwrap();
        assert_eq!(parsed.len(), 1);
        let p = &parsed[0];
        assert_eq!(p.variance.svar.to_bits(), report.variance.svar.to_bits());
        assert_eq!(p.variance.svar_evm.to_bits(), report.variance.svar_evm.to_bits());
        assert_eq!(p.variance.eff_evm.to_bits(), report.variance.eff_evm.to_bits());
        assert_eq!(p.variance.ratio.to_bits(), report.variance.ratio.to_bits());
        for (a, b) in p.fits[0].a_hat.iter().zip(&report.fits[0].a_hat) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // emission is a pure function of the reports
        let mut again = Vec::new();
        emit_report(std::slice::from_ref(&report), ReportFormat::Json, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn infinite_efficiency_survives_json() {
        let mut config = table_configs(1).unwrap()[0].clone();
        config.n_test = 2000;
        let mut report = run_experiment(&config).unwrap();
        report.variance.eff_evm = f64::INFINITY;
        let text = serde_json::to_string(&report).unwrap();
        let parsed: crate::harness::ExperimentReport = serde_json::from_str(&text).unwrap();
        assert!(parsed.variance.eff_evm.is_infinite());
    }
}
