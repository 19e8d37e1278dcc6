//! Experiment parameters. Every subcommand takes the same fields as flags or
//! from a TOML file given with `--config`; flags win over the file.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Args, Clone, Debug, Default)]
pub struct CommonArgs {
    /// TOML file with experiment parameters
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Random seed (used by `design`; recorded otherwise)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also print the JSON report to stdout
    #[arg(long)]
    pub json_report: bool,
    /// Write the time series CSV
    #[arg(long)]
    pub series: bool,
}

#[derive(Args, Serialize, Deserialize, Clone, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AbstractCycleParams {
    #[arg(skip)]
    pub kind: Option<String>,
    #[arg(skip)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub omega1: Option<f64>,
    /// Cold ladder spacing; defaults to β₁ω₁/β₂
    #[arg(long)]
    pub omega2: Option<f64>,
    #[arg(long)]
    pub g: Option<f64>,
    /// Hot-bath Fock cutoff; defaults to the Gibbs-tail cutoff
    #[arg(long)]
    pub n_max1: Option<usize>,
    #[arg(long)]
    pub n_max2: Option<usize>,
    /// Gibbs tail used for default cutoffs
    #[arg(long)]
    pub tail_delta: Option<f64>,
    #[arg(long)]
    pub a0: Option<f64>,
    /// Upper system level; defaults to a0 + omega1 - omega2
    #[arg(long)]
    pub a1: Option<f64>,
    /// Samples on [0, tau]
    #[arg(long)]
    pub samples: Option<usize>,
    /// Battery split parameter in [0, 1]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Write U(tau) and the Hamiltonians as matrix files for verify-slto
    #[arg(long)]
    pub export_matrices: Option<bool>,
}

#[derive(Args, Serialize, Deserialize, Clone, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsCycleParams {
    #[arg(skip)]
    pub kind: Option<String>,
    #[arg(skip)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub omega1: Option<f64>,
    #[arg(long)]
    pub omega2: Option<f64>,
    /// Effective coupling g1*g2/Delta
    #[arg(long)]
    pub g: Option<f64>,
    /// Detuning ratio Delta/g_k
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub tail_delta: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Also compare the full three-level model with the effective one
    #[arg(long)]
    pub compare_full: Option<bool>,
    /// Coupling profile of the full model: ladder-matched or intensity-inverse
    #[arg(long)]
    pub profile: Option<String>,
}

#[derive(Args, Serialize, Deserialize, Clone, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DeltaSweepParams {
    #[arg(skip)]
    pub kind: Option<String>,
    #[arg(skip)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub omega1: Option<f64>,
    #[arg(long)]
    pub omega2: Option<f64>,
    #[arg(long)]
    pub g: Option<f64>,
    /// Detuning ratios Delta/g_k to sweep
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    #[arg(long)]
    pub tail_delta: Option<f64>,
    #[arg(long)]
    pub profile: Option<String>,
}

#[derive(Args, Serialize, Deserialize, Clone, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DesignParams {
    #[arg(skip)]
    pub kind: Option<String>,
    #[arg(skip)]
    pub seed: Option<u64>,
    /// Target family: intensity-inverse or ansatz
    #[arg(long)]
    pub targets: Option<String>,
    #[arg(long)]
    pub n_fit: Option<usize>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub proposal_scale: Option<f64>,
    #[arg(long)]
    pub mc_temperature: Option<f64>,
    #[arg(long)]
    pub v_degree: Option<usize>,
    #[arg(long)]
    pub b_degree: Option<usize>,
    /// Cavity coupling g_k of the intensity-inverse targets
    #[arg(long)]
    pub g_k: Option<f64>,
    /// Detuning of the intensity-inverse targets
    #[arg(long)]
    pub delta: Option<f64>,
    /// V coefficients (degrees 2, 4, ..) generating ansatz targets
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub target_v: Option<Vec<f64>>,
    /// b coefficients (degrees 1, 3, ..) generating ansatz targets
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub target_b: Option<Vec<f64>>,
    /// Relative perturbation of the generator used as starting point
    #[arg(long)]
    pub start_perturbation: Option<f64>,
    /// Feed the fitted tables into the optics engine and report the degradation
    #[arg(long)]
    pub validate: Option<bool>,
}

#[derive(Args, Serialize, Deserialize, Clone, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySltoParams {
    #[arg(skip)]
    pub kind: Option<String>,
    #[arg(skip)]
    pub seed: Option<u64>,
    /// Unitary matrix file (its header declares the layout and baths)
    #[arg(long)]
    pub unitary: Option<PathBuf>,
    /// Hamiltonian of the bath-1 side on the full space
    #[arg(long)]
    pub h1: Option<PathBuf>,
    /// Hamiltonian of the bath-2 side on the full space
    #[arg(long)]
    pub h2: Option<PathBuf>,
    /// Unweighted remainder (system, batteries)
    #[arg(long)]
    pub hs: Option<PathBuf>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
}

/// Reads the config file (if any) and overlays the flags on it.
pub fn resolve<T>(kind: &str, flags: &T, config: Option<&Path>) -> Result<T, CliError>
where
    T: Serialize + DeserializeOwned + Clone,
{
    let Some(path) = config else {
        return Ok(flags.clone());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let from_file: T =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e.message())))?;
    let mut base = serde_json::to_value(&from_file).expect("params serialize");
    if let Some(found) = base.get("kind").and_then(|k| k.as_str()) {
        if found != kind {
            return Err(CliError::Usage(format!("config is for `{found}`, not `{kind}`")));
        }
    }
    let overlay = serde_json::to_value(flags).expect("params serialize");
    if let (Some(b), Some(o)) = (base.as_object_mut(), overlay.as_object()) {
        for (k, v) in o {
            if !v.is_null() {
                b.insert(k.clone(), v.clone());
            }
        }
    }
    serde_json::from_value(base).map_err(|e| CliError::Usage(e.to_string()))
}
