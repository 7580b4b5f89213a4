//! Pipeline configuration: one JSON file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use subtrace::evalharness::{BenchmarkConfig, SemisupBenchmarkConfig};
use subtrace::infer::ToleranceConfig;
use subtrace::pipeline::MixedDayConfig;
use subtrace::rng::derive;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Base for the relative paths below.
    pub root: PathBuf,
    pub corpus: PathBuf,
    pub models: PathBuf,
    pub reports: PathBuf,
    /// Network file; defaults to `network.json` in the corpus directory.
    pub network: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            root: PathBuf::from("."),
            corpus: PathBuf::from("corpus"),
            models: PathBuf::from("models"),
            reports: PathBuf::from("reports"),
            network: None,
        }
    }
}

impl Paths {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.resolve(&self.corpus)
    }

    pub fn models_dir(&self) -> PathBuf {
        self.resolve(&self.models)
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.resolve(&self.reports)
    }

    pub fn network_file(&self) -> PathBuf {
        match &self.network {
            Some(p) => self.resolve(p),
            None => self.corpus_dir().join("network.json"),
        }
    }
}

/// Corpus extras beyond the benchmark trips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    /// Mixed-mode days used to train and check the extraction model.
    pub days: usize,
    pub day_plan: MixedDayConfig,
    pub day_seed: u64,
    pub non_metro: usize,
    /// Seconds per non-metro trace.
    pub non_metro_duration: f64,
    pub non_metro_seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            days: 8,
            day_plan: MixedDayConfig::default(),
            day_seed: 100,
            non_metro: 4,
            non_metro_duration: 1200.0,
            non_metro_seed: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PipelineConfig {
    /// Root seed. When set, every module seed is derived from it.
    pub seed: Option<u64>,
    pub paths: Paths,
    pub benchmark: BenchmarkConfig,
    pub generate: GenerateConfig,
    pub semisup: SemisupBenchmarkConfig,
    pub attack: ToleranceConfig,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(PipelineConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", p.display())))
            }
        }
    }

    /// Splits the root seed, if any, into per-module seeds.
    pub fn apply_root_seed(&mut self) {
        let Some(s) = self.seed else { return };
        self.benchmark.network_seed = derive(s, 1);
        self.benchmark.seed = derive(s, 2);
        self.benchmark.ensemble.seed = derive(s, 3);
        self.semisup.bootstrap.ensemble.seed = derive(s, 4);
        self.generate.day_seed = derive(s, 5);
        self.generate.non_metro_seed = derive(s, 6);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults() {
        let c: PipelineConfig = serde_json::from_str(r#"{"benchmark": {"trips": 6}}"#).unwrap();
        assert_eq!(c.benchmark.trips, 6);
        assert_eq!(c.benchmark.intervals, 10);
        assert_eq!(c.generate.non_metro, 4);
    }

    #[test]
    fn root_seed_changes_every_module_seed() {
        let mut c = PipelineConfig {
            seed: Some(9),
            ..PipelineConfig::default()
        };
        let before = c.clone();
        c.apply_root_seed();
        assert_ne!(c.benchmark.network_seed, before.benchmark.network_seed);
        assert_ne!(c.benchmark.seed, before.benchmark.seed);
        assert_ne!(c.generate.day_seed, c.generate.non_metro_seed);
    }

    #[test]
    fn network_defaults_into_corpus() {
        let p = Paths {
            root: PathBuf::from("/tmp/x"),
            ..Paths::default()
        };
        assert_eq!(p.network_file(), PathBuf::from("/tmp/x/corpus/network.json"));
    }
}
