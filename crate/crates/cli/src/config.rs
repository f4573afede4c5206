use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rokf::bounds::BoundOptions;
use rokf::lgss::ModelFile;
use rokf::linalg::{ProjectionPair, PsdMatrix};
use rokf::riccati::DiscrepancyOptions;
use rokf::wave::{WaveParams, DEFAULT_SWEEP};
use rokf::LgssModelF64;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Where the model comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    WaveBuiltin,
    /// A model file with row-major matrices, relative to the config file.
    JsonPath(PathBuf),
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSource,
    pub params: WaveParams,
    pub seed: u64,
    /// Coarse mesh sizes of the refinement study.
    pub sweep: Vec<usize>,
    /// Steps for `offline` and `simulate`; defaults to burn-in plus evaluation.
    pub horizon: Option<usize>,
    /// Rows of `Π` for a model file; the wave model builds its own.
    pub projection: Option<Vec<Vec<f64>>>,
    /// Gram of the smoother norm in model coordinates (identity if absent).
    pub x1_gram: Option<Vec<Vec<f64>>>,
    pub tolerances: BTreeMap<String, f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSource::WaveBuiltin,
            params: WaveParams::default(),
            seed: 1,
            sweep: DEFAULT_SWEEP.to_vec(),
            horizon: None,
            projection: None,
            x1_gram: None,
            tolerances: BTreeMap::new(),
        }
    }
}

/// Tolerance names accepted by `--tol` and the `tolerances` map.
pub const TOLERANCE_NAMES: [&str; 4] = ["lyapunov", "dare", "discrepancy", "l0"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub lyapunov: f64,
    pub dare: f64,
    pub discrepancy: f64,
    pub l0: f64,
}

impl Tolerances {
    pub fn from_map(map: &BTreeMap<String, f64>) -> Result<Self, CliError> {
        let bounds = BoundOptions::<f64>::default();
        let mut tol = Self {
            lyapunov: bounds.lyapunov_tol,
            dare: bounds.dare_tol,
            discrepancy: DiscrepancyOptions::<f64>::default().tol,
            l0: bounds.l0_rel_tol,
        };
        for (name, &value) in map {
            if !(value > 0.0 && value.is_finite()) {
                return Err(CliError::Config(format!(
                    "tolerance `{name}` must be positive, got {value}"
                )));
            }
            match name.as_str() {
                "lyapunov" => tol.lyapunov = value,
                "dare" => tol.dare = value,
                "discrepancy" => tol.discrepancy = value,
                "l0" => tol.l0 = value,
                _ => {
                    return Err(CliError::Config(format!(
                        "unknown tolerance `{name}` (expected one of {})",
                        TOLERANCE_NAMES.join(", ")
                    )))
                }
            }
        }
        Ok(tol)
    }

    pub fn bounds(&self) -> BoundOptions<f64> {
        BoundOptions {
            lyapunov_tol: self.lyapunov,
            dare_tol: self.dare,
            l0_rel_tol: self.l0,
            ..BoundOptions::default()
        }
    }

    pub fn discrepancy(&self) -> DiscrepancyOptions<f64> {
        DiscrepancyOptions {
            tol: self.discrepancy,
            ..DiscrepancyOptions::default()
        }
    }
}

/// Parses one `NAME=VALUE` pair.
pub fn parse_tol(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let value: f64 = value.trim().parse().map_err(|e| format!("bad value in `{s}`: {e}"))?;
    Ok((name.trim().to_string(), value))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let ModelSource::JsonPath(p) = &cfg.model {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.model = ModelSource::JsonPath(base.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn horizon(&self) -> usize {
        self.horizon.unwrap_or(self.params.burn_in + self.params.eval_steps)
    }

    /// The model, projection and smoother Gram for a model file.
    pub fn file_model(
        &self,
        path: &Path,
    ) -> Result<(LgssModelF64, Option<ProjectionPair<f64>>, PsdMatrix<f64>), CliError> {
        let model: LgssModelF64 = ModelFile::load(path)?.into_model()?;
        let n = model.state_dim();
        let projection = match &self.projection {
            Some(rows) => Some(ProjectionPair::from_rows(matrix(rows, n, "projection")?)?),
            None => None,
        };
        let x1 = match &self.x1_gram {
            Some(rows) => PsdMatrix::new(matrix(rows, n, "x1_gram")?)?,
            None => PsdMatrix::identity(n),
        };
        Ok((model, projection, x1))
    }
}

fn matrix(rows: &[Vec<f64>], ncols: usize, name: &str) -> Result<DMatrix<f64>, CliError> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Config(format!("`{name}` rows must have {ncols} entries")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}
