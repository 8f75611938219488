//! The run configuration file and the per-run output layout.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sqlharness::dataset::{load_examples, load_schemas, DatasetBundle, Dialect, Split};
use sqlharness::inference::ModelEndpoint;
use sqlharness::metrics::ScoreOptions;
use sqlharness::prompt::{PromptTemplate, TokenBudget};
use sqlharness::selector::{SelectionPolicy, ShotMode, Strategy, DEFAULT_SHOT_CHOICES};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSection {
    pub name: String,
    pub dialect: Dialect,
    /// Schema catalog (`tables.json`).
    pub tables: PathBuf,
    pub splits: BTreeMap<Split, PathBuf>,
    /// Directory holding `{db_id}/{db_id}.sqlite`; optional for EM-only runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub db_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptSection {
    #[serde(flatten)]
    pub template: PromptTemplate,
    pub budget: TokenBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSection {
    pub split: Split,
    pub mode: ShotMode,
    /// Shot counts for fixed-k mode; one corpus per entry.
    pub ks: Vec<usize>,
    /// Shot choices for random-shot mode.
    pub choices: Vec<i64>,
    pub strategy: Strategy,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            split: Split::Train,
            mode: ShotMode::FixedK,
            ks: vec![0, 1, 3, 5],
            choices: DEFAULT_SHOT_CHOICES.to_vec(),
            strategy: Strategy::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictSection {
    pub split: Split,
    pub shots: usize,
}

impl Default for PredictSection {
    fn default() -> Self {
        PredictSection {
            split: Split::Dev,
            shots: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointSection {
    #[serde(flatten)]
    pub endpoint: ModelEndpoint,
    /// Environment variable holding the API key.
    pub api_key_env: String,
}

impl Default for EndpointSection {
    fn default() -> Self {
        EndpointSection {
            endpoint: ModelEndpoint::default(),
            api_key_env: "SQLHARNESS_API_KEY".into(),
        }
    }
}

fn default_seed() -> u64 {
    42
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub prompt: PromptSection,
    #[serde(default)]
    pub selection: SelectionPolicy,
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub predict: PredictSection,
    #[serde(default)]
    pub endpoint: EndpointSection,
    #[serde(default)]
    pub metrics: ScoreOptions,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// The selection policy with the run seed applied.
    pub fn policy(&self) -> SelectionPolicy {
        SelectionPolicy {
            seed: self.seed,
            ..self.selection.clone()
        }
    }

    /// The endpoint with the API key read from the environment.
    pub fn endpoint(&self) -> ModelEndpoint {
        ModelEndpoint {
            api_key: std::env::var(&self.endpoint.api_key_env).ok().filter(|k| !k.is_empty()),
            ..self.endpoint.endpoint.clone()
        }
    }

    /// Every problem with the config, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        let tables = self.resolve(&self.dataset.tables);
        if !tables.is_file() {
            issues.push(format!("schema catalog not found: {}", tables.display()));
        }
        if self.dataset.splits.is_empty() {
            issues.push("dataset.splits is empty".into());
        }
        for (split, p) in &self.dataset.splits {
            let p = self.resolve(p);
            if !p.is_file() {
                issues.push(format!("{split} examples not found: {}", p.display()));
            }
        }
        if let Some(dir) = &self.dataset.db_dir {
            let dir = self.resolve(dir);
            if !dir.is_dir() {
                issues.push(format!("database directory not found: {}", dir.display()));
            }
        }
        if let Err(e) = self.prompt.template.validate() {
            issues.push(e.to_string());
        }
        if self.prompt.budget.prompt_limit() == 0 {
            issues.push("prompt budget leaves no room for the prompt".into());
        }
        if let Err(e) = self.endpoint.endpoint.validate() {
            issues.push(format!("endpoint: {e}"));
        }
        if self.corpus.choices.is_empty() {
            issues.push("corpus.choices is empty".into());
        }
        if let Some(c) = self.corpus.choices.iter().find(|c| **c < 0) {
            issues.push(format!("corpus.choices has negative shot count {c}"));
        }
        if self.metrics.timeout_ms == 0 {
            issues.push("metrics.timeout_ms must be positive".into());
        }
        issues
    }

    pub fn check(&self) -> Result<(), CliError> {
        let issues = self.validate();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(format!("invalid config:\n  {}", issues.join("\n  "))))
        }
    }

    /// SHA-256 of the canonical JSON form of the settings. Where outputs go
    /// (`output_dir`, `run_id`) is left out, so the same settings written to
    /// two places share a fingerprint.
    pub fn fingerprint(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("output_dir");
            m.remove("run_id");
        }
        // serde_json maps are ordered by key, so this is canonical.
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }

    /// `{output_dir}/{run_id}`. Without an explicit run id, the newest
    /// existing run with this fingerprint is reused (unless `fresh`), else a
    /// new `{timestamp}-{fingerprint prefix}` id is made.
    pub fn run_dir(&self, fresh: bool) -> PathBuf {
        let root = self.resolve(&self.output_dir);
        if let Some(id) = &self.run_id {
            return root.join(id);
        }
        let suffix = format!("-{}", &self.fingerprint()[..12]);
        if !fresh {
            let latest = std::fs::read_dir(&root)
                .into_iter()
                .flatten()
                .flatten()
                .filter(|e| e.path().is_dir())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| n.ends_with(&suffix))
                .max();
            if let Some(id) = latest {
                return root.join(id);
            }
        }
        root.join(format!("{}{suffix}", chrono::Utc::now().format("%Y%m%dT%H%M%SZ")))
    }

    pub fn load_bundle(&self) -> Result<DatasetBundle, CliError> {
        let d = &self.dataset;
        let mut bundle = DatasetBundle::new(d.name.clone(), d.dialect);
        let schemas = load_schemas(&self.resolve(&d.tables)).map_err(dataset_err)?;
        bundle.add_schemas(schemas).map_err(dataset_err)?;
        let mut issues = Vec::new();
        for (split, p) in &d.splits {
            match load_examples(&self.resolve(p), &bundle) {
                Ok(ex) => {
                    bundle.splits.insert(*split, ex);
                }
                Err(e) => issues.extend(e.issues()),
            }
        }
        issues.extend(bundle.check_closure());
        if !issues.is_empty() {
            return Err(CliError::Validation(format!("dataset validation failed:\n  {}", issues.join("\n  "))));
        }
        if let Some(dir) = &d.db_dir {
            bundle.discover_db_files(&self.resolve(dir));
        }
        Ok(bundle)
    }
}

fn dataset_err(e: sqlharness::dataset::DatasetError) -> CliError {
    CliError::Validation(e.issues().join("\n  "))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[dataset]
name = "spider"
dialect = "spider"
tables = "data/tables.json"
splits = { dev = "data/dev.json" }
"#;

    fn parse(text: &str) -> RunConfig {
        let mut c: RunConfig = toml::from_str(text).unwrap();
        c.base_dir = PathBuf::from("/cfg");
        c
    }

    #[test]
    fn defaults_fill_in() {
        let c = parse(MINIMAL);
        assert_eq!(c.seed, 42);
        assert_eq!(c.prompt.budget, TokenBudget::default());
        assert_eq!(c.prompt.template, PromptTemplate::sentence());
        assert_eq!(c.corpus.ks, vec![0, 1, 3, 5]);
        assert_eq!(c.resolve(Path::new("data/dev.json")), PathBuf::from("/cfg/data/dev.json"));
    }

    #[test]
    fn fingerprint_ignores_output_location_only() {
        let a = parse(MINIMAL);
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        b.run_id = Some("x".into());
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed = 7;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }

    #[test]
    fn api_key_never_serializes() {
        let mut c = parse(MINIMAL);
        c.endpoint.endpoint.api_key = Some("secret".into());
        assert!(!serde_json::to_string(&c).unwrap().contains("secret"));
    }

    #[test]
    fn readme_example_parses() {
        let readme = include_str!("../../../README.md");
        let block = readme.split("```toml\n").nth(1).unwrap().split("```").next().unwrap();
        let c = parse(block);
        assert_eq!(c.corpus.ks, vec![0, 1, 3, 5]);
        assert_eq!(c.endpoint.endpoint.model_name, "my-model");
        assert!(!c.metrics.ves);
    }

    #[test]
    fn missing_files_are_all_listed() {
        let c = parse(MINIMAL);
        let issues = c.validate();
        assert!(issues.iter().any(|i| i.contains("tables.json")));
        assert!(issues.iter().any(|i| i.contains("dev.json")));
    }
}
