//! Settings from the config file and the command line, merged per key with
//! the command line winning.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every key any command understands.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub sigma_p: Option<f64>,
    pub surrogate: Option<PathBuf>,
    pub quad_nodes: Option<usize>,
    pub chains: Option<usize>,
    pub warmup: Option<usize>,
    pub samples: Option<usize>,

    pub data: Option<PathBuf>,
    pub quad_sigmas: Option<f64>,
    pub aim_grid: Option<usize>,
    pub burn_in: Option<f64>,
    pub adapt: Option<bool>,
    pub step_alpha: Option<f64>,
    pub step_beta: Option<f64>,
    pub step_sigma_p: Option<f64>,
    pub step_sigma_a: Option<f64>,
    pub beta_a1: Option<f64>,
    pub beta_a0: Option<f64>,
    pub alpha_loc: Option<f64>,
    pub alpha_scale: Option<f64>,
    pub sigma_a_loc: Option<f64>,
    pub sigma_a_scale: Option<f64>,
    pub sigma_p_loc: Option<f64>,
    pub sigma_p_scale: Option<f64>,
    pub min_trials: Option<usize>,
    pub prediction_targets: Option<usize>,
    pub draws_per_target: Option<usize>,

    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub sigma_a: Option<f64>,
    pub n: Option<usize>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub subject_id: Option<String>,

    pub target: Option<f64>,
    pub grid_points: Option<usize>,
    pub grid_lo: Option<f64>,
    pub grid_hi: Option<f64>,
    pub points: Option<usize>,
    pub log_values: Option<bool>,

    pub features: Option<usize>,
    pub epochs: Option<usize>,
    pub val_split: Option<f64>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub patience: Option<usize>,
    pub weights: Option<PathBuf>,
    pub eval_n: Option<usize>,
}

fn to_table<T: Serialize>(layer: &T) -> Result<toml::Table, CliError> {
    toml::Table::try_from(layer).map_err(|e| CliError::Config(e.to_string()))
}

/// Reads `file` (if any) and overlays each flag layer in order.
pub fn resolve<A: Serialize, B: Serialize>(file: Option<&Path>, common: &A, command: &B) -> Result<Config, CliError> {
    let mut table = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            text.parse::<toml::Table>().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for layer in [to_table(common)?, to_table(command)?] {
        table.extend(layer);
    }
    Config::deserialize(table).map_err(|e| CliError::Config(e.to_string()))
}

/// Writes the fully resolved settings of a run next to its outputs.
pub fn write_effective<T: Serialize>(dir: &Path, name: &str, settings: &T) -> Result<(), CliError> {
    let text = toml::to_string(settings).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(dir.join(format!("{name}.config.toml")), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::args::{Common, SimulateArgs};

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 3\nalpha = 2.0\nn = 50\n").unwrap();
        let common = Common { seed: Some(9), ..Default::default() };
        let cmd = SimulateArgs { alpha: Some(0.5), ..Default::default() };
        let c = resolve(Some(&p), &common, &cmd).unwrap();
        assert_eq!(c.seed, Some(9));
        assert_eq!(c.alpha, Some(0.5));
        assert_eq!(c.n, Some(50));
        assert_eq!(c.beta, None);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "sead = 3\n").unwrap();
        let err = resolve(Some(&p), &Common::default(), &SimulateArgs::default()).unwrap_err();
        assert!(err.to_string().contains("sead"));
    }
}
