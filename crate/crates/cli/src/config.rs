//! TOML run configuration: strict parsing, range checks, effective-value
//! echoing.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use oqs_core::bathcorr::{CorrelationFn, TabulatedCorrelation};
use oqs_core::model::{
    spin_boson_system, BathMode, DysonConfig, SpinObservable, SystemSpec, Tolerances,
};
use oqs_core::oracle::FockTruncation;
use oqs_core::{BathSpec, CMat};

/// Whole config file. Sections a command does not use may be omitted.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: Option<SystemConfig>,
    pub bath: Option<BathConfig>,
    pub perturbed_bath: Option<BathConfig>,
    pub dyson: Option<DysonConfig>,
    pub truncation: Option<FockTruncation>,
    #[serde(default)]
    pub check: CheckConfig,
    pub output: Option<OutputConfig>,
}

/// System section: the spin-boson preset or explicit operator entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub preset: Option<String>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub observable: Option<SpinObservable>,
    /// Explicit operators as row-major `[re, im]` entry grids.
    pub h_s: Option<MatrixEntries>,
    pub w_s: Option<MatrixEntries>,
    pub o_s: Option<MatrixEntries>,
    pub rho_s: Option<MatrixEntries>,
    #[serde(default)]
    pub tol: Tolerances,
}

pub type MatrixEntries = Vec<Vec<[f64; 2]>>;

fn parse_matrix(name: &str, entries: &MatrixEntries) -> Result<CMat> {
    let n = entries.len();
    if n == 0 || entries.iter().any(|row| row.len() != n) {
        bail!("system.{name}: expected a square row-major grid of [re, im] pairs");
    }
    Ok(CMat::from_fn(n, n, |i, j| {
        C64::new(entries[i][j][0], entries[i][j][1])
    }))
}

impl SystemConfig {
    pub fn build(&self) -> Result<SystemSpec> {
        match self.preset.as_deref() {
            Some("spin_boson") => {
                for (key, present) in [
                    ("h_s", self.h_s.is_some()),
                    ("w_s", self.w_s.is_some()),
                    ("o_s", self.o_s.is_some()),
                    ("rho_s", self.rho_s.is_some()),
                ] {
                    if present {
                        bail!("system.{key} conflicts with system.preset = \"spin_boson\"");
                    }
                }
                Ok(spin_boson_system(
                    self.epsilon.unwrap_or(0.0),
                    self.delta.unwrap_or(0.0),
                    self.observable.unwrap_or(SpinObservable::SigmaZ),
                ))
            }
            Some(other) => bail!("system.preset: unknown preset `{other}`"),
            None => {
                let get = |name: &str, field: &Option<MatrixEntries>| -> Result<CMat> {
                    let entries = field
                        .as_ref()
                        .ok_or_else(|| anyhow!("system.{name} required without a preset"))?;
                    parse_matrix(name, entries)
                };
                SystemSpec::new(
                    get("h_s", &self.h_s)?,
                    get("w_s", &self.w_s)?,
                    get("o_s", &self.o_s)?,
                    get("rho_s", &self.rho_s)?,
                    &self.tol,
                )
                .map_err(|e| anyhow!("system: {e}"))
            }
        }
    }
}

/// Bath section: discrete modes or a tabulated correlation CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    pub beta: Option<f64>,
    pub modes: Option<Vec<BathMode>>,
    /// CSV path with header `tau1,tau2,re,im` on a rectangular grid.
    pub tabulated: Option<PathBuf>,
}

impl BathConfig {
    /// Discrete-mode form, required by oracle-backed commands.
    pub fn bath_spec(&self, section: &str) -> Result<BathSpec> {
        if self.tabulated.is_some() {
            bail!("{section}: this command needs discrete modes, not a tabulated correlation");
        }
        let beta = self.beta.ok_or_else(|| anyhow!("{section}.beta missing"))?;
        let modes = self
            .modes
            .clone()
            .ok_or_else(|| anyhow!("{section}.modes missing"))?;
        BathSpec::new(modes, beta).map_err(|e| anyhow!("{section}: {e}"))
    }

    /// Correlation function on the contour with pivot `t`.
    pub fn correlation(&self, section: &str, t: f64) -> Result<CorrelationFn> {
        match (&self.tabulated, &self.modes) {
            (Some(path), None) => {
                if self.beta.is_some() {
                    bail!("{section}.beta has no effect with a tabulated correlation");
                }
                let table = TabulatedCorrelation::from_csv(path)
                    .map_err(|e| anyhow!("{section}.tabulated: {e}"))?;
                Ok(CorrelationFn::Tabulated(table))
            }
            (None, Some(_)) => Ok(CorrelationFn::discrete(self.bath_spec(section)?, t)),
            (Some(_), Some(_)) => {
                bail!("{section}: specify either modes or tabulated, not both")
            }
            (None, None) => bail!("{section}: specify modes (with beta) or tabulated"),
        }
    }
}

/// Knobs for the verification commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    /// Wick-sum order for check-comb.
    pub m: usize,
    /// Orders probed by check-wick.
    pub orders: Vec<usize>,
    /// Random time sequences per order in check-wick.
    pub sequences: usize,
    /// Monte Carlo samples for check-comb.
    pub samples: usize,
    /// Gauss points for deterministic quadratures.
    pub quad_points: usize,
    pub seed: u64,
    /// Relative tolerance for even-order Wick agreement.
    pub wick_rel_tol: f64,
    /// Absolute tolerance for odd-order traces.
    pub odd_abs_tol: f64,
    /// Scaling factors for the first-order identity diagnostic.
    pub epsilons: Vec<f64>,
    /// Also evaluate both observables with the oracle for the bound command.
    pub verify_with_oracle: bool,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            m: 4,
            orders: vec![1, 2, 3, 4, 5],
            sequences: 50,
            samples: 1_000_000,
            quad_points: 24,
            seed: 0,
            wick_rel_tol: 1e-6,
            odd_abs_tol: 1e-10,
            epsilons: vec![1e-2, 1e-3],
            verify_with_oracle: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub prefix: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if let Some(dyson) = &self.dyson {
            dyson.validate().map_err(|e| anyhow!("dyson: {e}"))?;
        }
        if let Some(trunc) = &self.truncation {
            if trunc.n_max == 0 {
                bail!("truncation.n_max must be at least 1");
            }
            if trunc.tail_threshold.is_nan() || trunc.tail_threshold <= 0.0 {
                bail!("truncation.tail_threshold must be positive");
            }
        }
        if self.check.quad_points < 2 {
            bail!("check.quad_points must be at least 2");
        }
        if self.check.samples == 0 || self.check.sequences == 0 {
            bail!("check.samples and check.sequences must be at least 1");
        }
        if self.check.epsilons.iter().any(|&e| e.is_nan() || e <= 0.0) {
            bail!("check.epsilons must be positive");
        }
        Ok(())
    }

    pub fn system(&self) -> Result<SystemSpec> {
        self.system
            .as_ref()
            .ok_or_else(|| anyhow!("missing [system] section"))?
            .build()
    }

    pub fn dyson(&self) -> Result<DysonConfig> {
        self.dyson
            .clone()
            .ok_or_else(|| anyhow!("missing [dyson] section"))
    }

    pub fn bath(&self) -> Result<&BathConfig> {
        self.bath
            .as_ref()
            .ok_or_else(|| anyhow!("missing [bath] section"))
    }

    pub fn perturbed_bath(&self) -> Result<&BathConfig> {
        self.perturbed_bath
            .as_ref()
            .ok_or_else(|| anyhow!("missing [perturbed_bath] section"))
    }

    pub fn truncation(&self) -> FockTruncation {
        self.truncation.unwrap_or_default()
    }
}
