//! Experiment configuration (JSON).

use serde::{Deserialize, Serialize};

use crate::completion::{NoiseKind, DEFAULT_FAILURE_BUDGET};
use crate::error::{Error, Result};
use crate::matcore::make_low_rank;
use crate::sparsify::{ClampPolicy, Method};
use crate::Matrix;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SparsifySv,
    SparsifySubspace,
    CompletionFull,
    CompletionColumn,
    Concentration,
}

impl ExperimentKind {
    /// Name of the swept parameter.
    pub fn param_name(self) -> &'static str {
        match self {
            ExperimentKind::CompletionFull | ExperimentKind::CompletionColumn => "p",
            _ => "m",
        }
    }

    fn default_slope_metric(self) -> &'static str {
        match self {
            ExperimentKind::SparsifySv => "relErr_1",
            ExperimentKind::SparsifySubspace => "sinU",
            ExperimentKind::CompletionFull => "errSpectral",
            ExperimentKind::CompletionColumn => "errColumn",
            ExperimentKind::Concentration => "absBilinear",
        }
    }
}

/// How the test matrix is obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase", deny_unknown_fields)]
pub enum MatrixSpec {
    /// `U diag(spectrum) Vᵀ` with Haar-random orthonormal factors.
    LowRank {
        rows: usize,
        cols: usize,
        spectrum: Vec<f64>,
        seed: u64,
    },
    /// All entries equal to one.
    Ones { rows: usize, cols: usize },
    /// Row-major entries.
    Explicit {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    },
}

impl MatrixSpec {
    pub fn build(&self) -> Result<Matrix> {
        match self {
            MatrixSpec::LowRank {
                rows,
                cols,
                spectrum,
                seed,
            } => make_low_rank(*rows, *cols, spectrum, *seed),
            MatrixSpec::Ones { rows, cols } => {
                if *rows == 0 || *cols == 0 {
                    return Err(Error::invalid("matrix must be at least 1x1"));
                }
                Ok(Matrix::from_fn(*rows, *cols, |_, _| 1.0))
            }
            MatrixSpec::Explicit { rows, cols, data } => {
                Matrix::from_row_major(*rows, *cols, data.clone())
            }
        }
    }

    pub fn from_matrix(a: &Matrix) -> Self {
        MatrixSpec::Explicit {
            rows: a.rows(),
            cols: a.cols(),
            data: a.as_slice().to_vec(),
        }
    }
}

/// Fixed unit vectors for the bilinear-form experiment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum VectorChoice {
    /// Haar-random unit vectors drawn from the master seed.
    #[default]
    Random,
    /// `(1, …, 1)/√N` and `(1, …, 1)/√n`.
    Flat,
    /// Leading singular vectors of the matrix.
    Leading,
    /// First standard basis vectors.
    Basis,
}

/// Pass/fail rules evaluated on the finished report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AcceptanceRules {
    /// Allowed range of the fitted log-log slope of `slope_metric`'s median.
    #[serde(default)]
    pub slope_band: Option<[f64; 2]>,
    #[serde(default)]
    pub slope_metric: Option<String>,
    /// Subspace runs: median `sin∠` must be at most this fraction of the
    /// median Wedin bound, in at least `min_cell_fraction` of the designed
    /// small-gap cells.
    #[serde(default)]
    pub max_wedin_ratio: Option<f64>,
    #[serde(default)]
    pub min_cell_fraction: Option<f64>,
    /// Completion runs: the median error must strictly decrease along the
    /// grid (sorted by `p`).
    #[serde(default)]
    pub require_monotone: bool,
    /// Largest error allowed in any trial, relative to `‖A‖_2`.
    #[serde(default)]
    pub max_relative_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TrialConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub matrix: MatrixSpec,
    /// Values of `m` (sparsification, concentration) or `p` (completion).
    pub grid: Vec<f64>,
    pub trials: usize,
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
    pub master_seed: u64,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub clamp: ClampPolicy,
    /// Singular index / truncation rank; defaults to the numerical rank.
    #[serde(default)]
    pub j: Option<usize>,
    #[serde(default)]
    pub noise: NoiseKind,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    /// Column tracked by completion-column runs (zero-based).
    #[serde(default)]
    pub column: usize,
    #[serde(default)]
    pub vectors: VectorChoice,
    #[serde(default)]
    pub projection_rank: Option<usize>,
    #[serde(default)]
    pub acceptance: AcceptanceRules,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_quantiles() -> Vec<f64> {
    vec![0.1, 0.5, 0.9]
}

fn default_eps() -> f64 {
    DEFAULT_FAILURE_BUDGET
}

fn default_t_grid() -> Vec<f64> {
    vec![2.0, 5.0, 10.0]
}

impl TrialConfig {
    /// A config of the given kind with defaults for every optional field.
    pub fn new(kind: ExperimentKind, matrix: MatrixSpec, grid: Vec<f64>, trials: usize, master_seed: u64) -> Self {
        TrialConfig {
            schema_version: SCHEMA_VERSION,
            kind,
            matrix,
            grid,
            trials,
            quantiles: default_quantiles(),
            master_seed,
            method: Method::default(),
            clamp: ClampPolicy::default(),
            j: None,
            noise: NoiseKind::None,
            sigma: 0.0,
            eps: default_eps(),
            t_grid: default_t_grid(),
            column: 0,
            vectors: VectorChoice::default(),
            projection_rank: None,
            acceptance: AcceptanceRules::default(),
        }
    }

    pub fn from_json(text: &str, name: &str) -> Result<Self> {
        let cfg: TrialConfig = serde_json::from_str(text)
            .map_err(|e| Error::parse(format!("{name}:{}:{}", e.line(), e.column()), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.grid.is_empty() {
            return Err(Error::invalid("grid must not be empty"));
        }
        if let Some(q) = self.quantiles.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
            return Err(Error::invalid(format!("quantile {q} outside (0, 1)")));
        }
        if let Some(x) = self.grid.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(Error::invalid(format!("grid value {x} must be positive")));
        }
        match self.kind {
            ExperimentKind::CompletionFull | ExperimentKind::CompletionColumn => {
                if let Some(p) = self.grid.iter().find(|p| **p > 1.0) {
                    return Err(Error::invalid(format!("observation probability {p} exceeds 1")));
                }
            }
            _ => {
                if self.method == Method::Replacement {
                    if let Some(m) = self.grid.iter().find(|m| m.fract() != 0.0) {
                        return Err(Error::invalid(format!(
                            "replacement sampling needs integer m, got {m}"
                        )));
                    }
                }
            }
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::invalid("eps must lie in (0, 1)"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("sigma must be finite and >= 0"));
        }
        if let Some(t) = self.t_grid.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::invalid(format!("t grid value {t} must be positive")));
        }
        if self.j == Some(0) || self.projection_rank == Some(0) {
            return Err(Error::invalid("j and projectionRank are 1-based"));
        }
        Ok(())
    }

    pub fn slope_metric(&self) -> String {
        self.acceptance
            .slope_metric
            .clone()
            .unwrap_or_else(|| self.kind.default_slope_metric().to_string())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        crate::io::digest(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMOKE: &str = r#"{
        "kind": "sparsify-sv",
        "matrix": {"type": "lowRank", "rows": 16, "cols": 16, "spectrum": [1.0], "seed": 3},
        "grid": [20, 40, 80],
        "trials": 50,
        "masterSeed": 7,
        "clamp": "clamp",
        "acceptance": {"slopeBand": [-1.35, -0.65]}
    }"#;

    #[test]
    fn parses_with_defaults() {
        let c = TrialConfig::from_json(SMOKE, "smoke").unwrap();
        assert_eq!(c.kind, ExperimentKind::SparsifySv);
        assert_eq!(c.method, Method::Bernoulli);
        assert_eq!(c.clamp, ClampPolicy::Clamp);
        assert_eq!(c.quantiles, vec![0.1, 0.5, 0.9]);
        assert_eq!(c.acceptance.slope_band, Some([-1.35, -0.65]));
        assert_eq!(c.slope_metric(), "relErr_1");
        assert_eq!(c.matrix.build().unwrap().dims(), (16, 16));
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = TrialConfig::from_json(SMOKE, "s").unwrap();
        let b = TrialConfig::from_json(SMOKE, "s").unwrap();
        assert_eq!(a.digest(), b.digest());
        let mut c = a.clone();
        c.master_seed += 1;
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn rejects_invalid() {
        let bad = [
            SMOKE.replace("\"trials\": 50", "\"trials\": 0"),
            SMOKE.replace("[20, 40, 80]", "[]"),
            SMOKE.replace("\"masterSeed\": 7", "\"masterSeed\": 7, \"quantiles\": [1.0]"),
            SMOKE.replace("[20, 40, 80]", "[20, -1]"),
            SMOKE.replace("\"clamp\": \"clamp\"", "\"clamp\": \"clamp\", \"method\": \"replacement\", \"grid\": [2.5]")
                .replace("\"grid\": [20, 40, 80],", ""),
            SMOKE.replace("\"masterSeed\"", "\"unknownField\": 1, \"masterSeed\""),
            SMOKE.replace("sparsify-sv", "completion-full"),
        ];
        for text in &bad {
            assert!(TrialConfig::from_json(text, "b").is_err(), "{text}");
        }
        let err = TrialConfig::from_json("{\"kind\": 3}", "cfg.json").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn matrix_specs() {
        let ones = MatrixSpec::Ones { rows: 2, cols: 3 }.build().unwrap();
        assert_eq!(ones.abs_sum(), 6.0);
        let e = MatrixSpec::Explicit {
            rows: 1,
            cols: 2,
            data: vec![1.0, 2.0],
        };
        assert_eq!(MatrixSpec::from_matrix(&e.build().unwrap()), e);
        assert!(MatrixSpec::Explicit {
            rows: 2,
            cols: 2,
            data: vec![1.0]
        }
        .build()
        .is_err());
        let json = serde_json::to_value(&e).unwrap();
        assert_eq!(json["type"], "explicit");
    }
}
