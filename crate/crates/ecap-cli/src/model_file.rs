//! Versioned on-disk model format. The spline knots and coefficients must
//! survive tool upgrades, so the file carries an explicit schema version and
//! the library version that wrote it.

use crate::CliError;
use ecap::estimator::{EcapConfig, EcapModel, MixtureSpec, MleMode, VarianceFloor};
use ecap::spline::CvConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub library_version: String,
    pub model: EcapModel,
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::io("reading model file", e))?;
        let file: ModelFile = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("parsing model file: {e}")))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(CliError::config(format!(
                "unsupported model schema version {} (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn into_model(self) -> Result<EcapModel, CliError> {
        self.model.validate()?;
        Ok(self.model)
    }
}

pub fn save(path: &Path, model: &EcapModel) -> Result<(), CliError> {
    let file = ModelFile {
        schema_version: SCHEMA_VERSION,
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        model: model.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file)
        .map_err(|e| CliError::config(format!("serializing model: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io("writing model file", e))
}

/// Partial overrides for the fitting configuration; anything omitted keeps
/// the library default.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FitConfigFile {
    gamma_grid: Option<Vec<f64>>,
    theta_grid: Option<Vec<f64>>,
    num_folds: Option<usize>,
    lambda_grid: Option<Vec<f64>>,
    max_knots: Option<usize>,
    variance_floor: Option<VarianceFloor>,
    likelihood_clamp: Option<f64>,
    mixture: Option<MixtureFile>,
    mle_mode: Option<MleMode>,
}

#[derive(Deserialize)]
struct MixtureFile {
    weights: Vec<f64>,
    scales: Vec<f64>,
}

pub fn load_fit_config(path: Option<&Path>, seed: u64) -> Result<EcapConfig, CliError> {
    let overrides = match path {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|e| CliError::io("reading fit config", e))?;
            serde_json::from_str::<FitConfigFile>(&text)
                .map_err(|e| CliError::config(format!("parsing fit config: {e}")))?
        }
        None => FitConfigFile::default(),
    };
    let mut config = EcapConfig::default();
    config.cv.rng_seed = seed;
    if let Some(g) = overrides.gamma_grid {
        config.gamma_grid = g;
    }
    if let Some(t) = overrides.theta_grid {
        config.theta_grid = t;
    }
    if let Some(k) = overrides.num_folds {
        config.cv = CvConfig {
            num_folds: k,
            ..config.cv
        };
    }
    if let Some(l) = overrides.lambda_grid {
        config.cv.lambda_grid = l;
    }
    if let Some(m) = overrides.max_knots {
        config.max_knots = m;
    }
    if let Some(v) = overrides.variance_floor {
        config.variance_floor = v;
    }
    if let Some(c) = overrides.likelihood_clamp {
        config.likelihood_clamp = c;
    }
    if let Some(m) = overrides.mixture {
        config.mixture = Some(MixtureSpec::new(m.weights, m.scales)?);
    }
    if let Some(m) = overrides.mle_mode {
        config.mle_mode = m;
    }
    config.validate()?;
    Ok(config)
}
