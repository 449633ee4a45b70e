//! Run configuration: an optional TOML/JSON file, overridden by flags.

use complexmarket::economy::ModelConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Scalar, list, or `start:stop:step` / comma-list string.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Values {
    Number(f64),
    List(Vec<f64>),
    Text(String),
}

impl Values {
    pub fn resolve(&self) -> Result<Vec<f64>, String> {
        match self {
            Values::Number(x) => Ok(vec![*x]),
            Values::List(v) if v.is_empty() => Err("empty value list".into()),
            Values::List(v) => Ok(v.clone()),
            Values::Text(s) => parse_values(s),
        }
    }
}

/// `"0.1:4:0.05"` (inclusive of `stop` up to rounding), `"0.01,0.05,0.1"`, or `"0.5"`.
pub fn parse_values(text: &str) -> Result<Vec<f64>, String> {
    let text = text.trim();
    let num = |s: &str| -> Result<f64, String> {
        let v: f64 = s.trim().parse().map_err(|_| format!("not a number: {s:?}"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("not a finite number: {s:?}"))
        }
    };
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [start, stop, step] = parts.as_slice() else {
            return Err(format!("range must be start:stop:step, got {text:?}"));
        };
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if step == 0.0 || (stop - start) * step < 0.0 {
            return Err(format!("step {step} does not lead from {start} to {stop}"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        if count > 1_000_000 {
            return Err(format!("range {text:?} has {count} points"));
        }
        Ok((0..count).map(|k| round12(start + k as f64 * step)).collect())
    } else {
        text.split(',').map(num).collect()
    }
}

fn round12(x: f64) -> f64 {
    let r = (x * 1e12).round() / 1e12;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionKind {
    #[default]
    Equilibrium,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    #[default]
    ZeroNet,
    Unconstrained,
}

/// Model block of a config file; `n_ratio` and `epsilon` may be grids.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n_ratio: Option<Values>,
    pub epsilon: Option<Values>,
    pub omega_count: Option<usize>,
    pub crra_exponent: Option<f64>,
    pub price_spread: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub output_dir: Option<PathBuf>,
    pub format: Option<Format>,
    pub quadrature_order: Option<usize>,
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub model: ModelFile,
    pub samples: Option<usize>,
    pub bins: Option<usize>,
    pub gamma: Option<Values>,
    pub dn: Option<f64>,
    pub phi_targets: Option<Values>,
    pub selection: Option<SelectionKind>,
    pub phi: Option<f64>,
    pub mode: Option<ModeKind>,
    pub density_points: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
        } else {
            toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
        }
    }
}

/// Fully resolved settings shared by all commands.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub model: ModelConfig,
    pub n_values: Vec<f64>,
    pub epsilon_values: Vec<f64>,
    pub output_dir: PathBuf,
    pub format: Format,
    pub quadrature_order: usize,
    pub tolerance: f64,
    pub threads: usize,
    pub samples: usize,
    pub bins: usize,
    pub gamma_values: Vec<f64>,
    pub dn: f64,
    pub phi_targets: Vec<f64>,
    pub selection: SelectionKind,
    pub phi: Option<f64>,
    pub mode: ModeKind,
    pub density_points: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.quadrature_order < 16 {
            return Err(format!("quadrature_order must be at least 16, got {}", self.quadrature_order));
        }
        if !(self.tolerance > 0.0) {
            return Err(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if self.n_values.iter().any(|&n| !(n > 0.0)) {
            return Err("n values must be positive".into());
        }
        if self.gamma_values.iter().any(|&g| !(g > 0.0)) {
            return Err("gamma values must be positive".into());
        }
        if self.samples < 2 {
            return Err(format!("samples must be at least 2, got {}", self.samples));
        }
        if self.density_points < 2 || self.bins < 1 {
            return Err("density_points must be ≥ 2 and bins ≥ 1".into());
        }
        if let Some(phi) = self.phi {
            if !(0.0..1.0).contains(&phi) {
                return Err(format!("phi must lie in [0,1), got {phi}"));
            }
        }
        if self.selection == SelectionKind::Random && self.phi.is_none() && self.command == "hedge" {
            return Err("random selection needs --phi".into());
        }
        self.model.validate().map_err(|e| e.to_string())
    }
}
