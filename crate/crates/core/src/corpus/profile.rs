use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMethod {
    Lora,
    Qlora,
}

/// Hyperparameters handed to an external fine-tuning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainProfile {
    pub method: TrainMethod,
    pub lora_rank: u32,
    pub lora_alpha: u32,
    pub learning_rate: f64,
    pub epochs: u32,
    pub max_source_length: u32,
    pub max_target_length: u32,
    pub model_name: String,
}

impl Default for TrainProfile {
    fn default() -> Self {
        TrainProfile {
            method: TrainMethod::Lora,
            lora_rank: 64,
            lora_alpha: 32,
            learning_rate: 0.0002,
            epochs: 8,
            max_source_length: 2048,
            max_target_length: 512,
            model_name: "codellama/CodeLlama-7b-Instruct-hf".into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("invalid training profile: {0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl TrainProfile {
    pub fn with_method(method: TrainMethod) -> Self {
        TrainProfile {
            method,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let bad = |m: &str| Err(ProfileError::Invalid(m.into()));
        if self.lora_rank == 0 || self.lora_alpha == 0 || self.epochs == 0 {
            return bad("rank, alpha and epochs must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.max_target_length == 0 || self.max_target_length >= self.max_source_length {
            return bad("max_target_length must be positive and below max_source_length");
        }
        if self.model_name.trim().is_empty() {
            return bad("model_name is empty");
        }
        Ok(())
    }
}

/// Writes `profile` as TOML to `out`.
pub fn emit_train_profile(profile: &TrainProfile, out: &Path) -> Result<PathBuf, ProfileError> {
    profile.validate()?;
    let io = |e: std::io::Error| ProfileError::Io {
        path: out.to_path_buf(),
        message: e.to_string(),
    };
    let text = toml::to_string(profile).map_err(|e| ProfileError::Invalid(e.to_string()))?;
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(out, text).map_err(io)?;
    Ok(out.to_path_buf())
}

pub fn load_train_profile(path: &Path) -> Result<TrainProfile, ProfileError> {
    let err = |message: String| ProfileError::Io {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let p: TrainProfile = toml::from_str(&text).map_err(|e| err(e.to_string()))?;
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rank_is_rejected() {
        let p = TrainProfile {
            lora_rank: 0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_train_profile(&p, &dir.path().join("p.toml")).is_err());
    }
}
