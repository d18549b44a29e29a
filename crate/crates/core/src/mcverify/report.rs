//! Trial reports and their JSON / CSV exports.

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};

use crate::bounds::{fmt_num, ser_f64, Predictor};
use crate::error::Result;
use crate::mcverify::config::{ExperimentKind, TrialConfig};
use crate::mcverify::stats::MetricSummary;

pub(crate) fn ser_f64_map<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    struct F(f64);
    impl Serialize for F {
        fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
            ser_f64(&self.0, s)
        }
    }
    let mut map = s.serialize_map(Some(m.len()))?;
    for (k, v) in m {
        map.serialize_entry(k, &F(*v))?;
    }
    map.end()
}

/// Everything measured and predicted at one grid value.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CellRecord {
    pub index: usize,
    pub param_name: String,
    #[serde(serialize_with = "ser_f64")]
    pub param: f64,
    pub metrics: BTreeMap<String, MetricSummary>,
    pub predictors: BTreeMap<String, Predictor>,
    /// Empirical `(1 − ε)` quantile of a metric over its predictor, keyed
    /// `metric/predictor`.
    #[serde(serialize_with = "ser_f64_map")]
    pub ratios: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
    #[serde(serialize_with = "ser_f64_map")]
    pub extras: BTreeMap<String, f64>,
}

impl CellRecord {
    pub fn median(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).map(|s| s.median)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TrialReport {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub tool_version: String,
    pub config_digest: String,
    pub master_seed: u64,
    pub config: TrialConfig,
    pub cells: Vec<CellRecord>,
    /// Log-log slope of each metric's median against the grid parameter.
    #[serde(serialize_with = "ser_f64_map")]
    pub slopes: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    /// Number of deterministic per-trial inequalities verified, by name.
    pub invariant_checks: BTreeMap<String, u64>,
    pub passed: bool,
    pub notes: Vec<String>,
}

impl TrialReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per cell × metric (and per predictor, ratio, extra), preceded
    /// by `#` metadata lines.
    pub fn to_csv(&self) -> Result<String> {
        let levels = &self.config.quantiles;
        let mut out = format!(
            "# toolVersion: {}\n# configDigest: {}\n# masterSeed: {}\n",
            self.tool_version, self.config_digest, self.master_seed
        );
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = ["cell", "paramName", "param", "rowType", "name", "value", "count", "mean", "sd", "median", "min", "max"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(levels.iter().map(|q| format!("q{q}")));
        w.write_record(&header).map_err(csv_err)?;
        let blanks = 6 + levels.len();
        for c in &self.cells {
            let lead = [c.index.to_string(), c.param_name.clone(), fmt_num(c.param)];
            let scalar_row = |kind: &str, name: &str, v: f64| {
                let mut row: Vec<String> = lead.to_vec();
                row.extend([kind.to_string(), name.to_string(), fmt_num(v)]);
                row.extend(std::iter::repeat_n(String::new(), blanks));
                row
            };
            for (name, s) in &c.metrics {
                let mut row: Vec<String> = lead.to_vec();
                row.extend(["metric".to_string(), name.clone(), fmt_num(s.median), s.count.to_string()]);
                row.extend([s.mean, s.sd, s.median, s.min, s.max].iter().map(|v| fmt_num(*v)));
                row.extend(levels.iter().map(|q| s.quantile(*q).map(fmt_num).unwrap_or_default()));
                w.write_record(&row).map_err(csv_err)?;
            }
            for (name, p) in &c.predictors {
                w.write_record(scalar_row("predictor", name, p.value)).map_err(csv_err)?;
            }
            for (name, v) in &c.ratios {
                w.write_record(scalar_row("ratio", name, *v)).map_err(csv_err)?;
            }
            for (name, v) in &c.extras {
                w.write_record(scalar_row("extra", name, *v)).map_err(csv_err)?;
            }
            for (name, v) in &c.flags {
                w.write_record(scalar_row("flag", name, if *v { 1.0 } else { 0.0 })).map_err(csv_err)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))?;
        out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
        Ok(out)
    }
}

fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Io(std::io::Error::other(e))
}
