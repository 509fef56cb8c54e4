//! Layering of defaults, config file and command-line overrides.

use std::fs;
use std::path::Path;

use toml::Table;
use waveqn::experiments::ExperimentConfig;

use crate::{CliError, Result, RunArgs};

/// Defaults (or the full-scale preset), then the config file, then flags.
pub fn resolve(args: &RunArgs) -> Result<ExperimentConfig> {
    let base = if args.full_scale {
        ExperimentConfig::full_scale()
    } else {
        ExperimentConfig::default()
    };
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            layer(base, &text, path)?
        }
        None => base,
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if !args.pairings.is_empty() {
        cfg.pairings = args.pairings.clone();
    }
    if let Some(mesh) = args.mesh {
        cfg.mesh = mesh;
    }
    if args.no_wall_time {
        cfg.record_wall_time = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Overlays the tables of `text` onto `base`, key by key.
pub fn layer(base: ExperimentConfig, text: &str, path: &Path) -> Result<ExperimentConfig> {
    let err = |message: String| CliError::Config {
        path: path.to_path_buf(),
        message,
    };
    let file: Table = text.parse().map_err(|e: toml::de::Error| err(e.to_string()))?;
    let mut merged = Table::try_from(&base).map_err(|e| err(e.to_string()))?;
    merge(&mut merged, file);
    merged.try_into().map_err(|e: toml::de::Error| err(e.to_string()))
}

fn merge(into: &mut Table, from: Table) {
    for (key, value) in from {
        match (into.get_mut(&key), value) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => merge(a, b),
            (_, value) => {
                into.insert(key, value);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use waveqn::Pairing;

    #[test]
    fn file_overrides_only_named_keys() {
        let base = ExperimentConfig::full_scale();
        let text = "mesh = 8\npairings = [\"water-steel\"]\n[grid_study]\nn_qn = [10]\n";
        let cfg = layer(base.clone(), text, Path::new("x.toml")).unwrap();
        assert_eq!(cfg.mesh, 8);
        assert_eq!(cfg.pairings, vec![Pairing::WaterSteel]);
        assert_eq!(cfg.grid_study.n_qn, vec![10]);
        assert_eq!(cfg.grid_study.base_steps, base.grid_study.base_steps);
        assert_eq!(cfg.efficiency, base.efficiency);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = layer(ExperimentConfig::default(), "meshh = 8\n", Path::new("x.toml")).unwrap_err();
        assert!(err.to_string().contains("meshh"), "{err}");
    }
}
