//! Pipeline configuration, loaded from TOML.
//!
//! Every section has defaults, so an empty file (or no file at all) is a
//! valid configuration. Relative paths are resolved against the directory of
//! the configuration file, or the working directory when there is none.

use std::path::{Path, PathBuf};

use graphshield_core::adversarial::{AttackConfig, CURVE_SIZES, DEFAULT_EPSILON};
use graphshield_core::classifier::TrainConfig;
use graphshield_core::ensemble::EnsembleMode;
use graphshield_core::graph_ir::Layer;
use graphshield_core::opcode_embed::SkipGramConfig;
use graphshield_core::sif::SifConfig;
use graphshield_core::struct2vec::{Aggregation, Readout, DEFAULT_ITERATIONS};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Global seed. Every seeded stage derives its own seed from this one,
    /// overriding any per-section seed.
    pub seed: u64,
    pub paths: PathsConfig,
    pub synth: SynthConfig,
    pub skipgram: SkipGramConfig,
    pub sif: SifConfig,
    pub s2v: S2VConfig,
    pub classifier: TrainConfig,
    pub ensemble: EnsembleConfig,
    pub attack: AttackSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            paths: PathsConfig::default(),
            synth: SynthConfig::default(),
            skipgram: SkipGramConfig::default(),
            sif: SifConfig::default(),
            s2v: S2VConfig::default(),
            classifier: TrainConfig::default(),
            ensemble: EnsembleConfig::default(),
            attack: AttackSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory holding the graph documents written by `synth`.
    pub data_dir: PathBuf,
    pub manifest: PathBuf,
    /// Optional directory with extra unlabeled opcode sentences in
    /// `bytecode.txt` / `native.txt`, one whitespace-separated sequence per line.
    pub corpus: Option<PathBuf>,
    pub model_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            manifest: "data/manifest.json".into(),
            corpus: None,
            model_dir: "model".into(),
            report_dir: "report".into(),
        }
    }
}

impl PathsConfig {
    pub fn resolve(&mut self, base: &Path) {
        for p in [&mut self.data_dir, &mut self.manifest, &mut self.model_dir, &mut self.report_dir] {
            *p = base.join(&*p);
        }
        if let Some(c) = &mut self.corpus {
            *c = base.join(&*c);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Byte-code graphs (applications) per class.
    pub bytecode_per_class: usize,
    /// Native graphs per class, each bundled with one app of the same class.
    pub native_per_class: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Optional malware share to enforce by downsampling, e.g. 0.1.
    pub class_ratio: Option<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { bytecode_per_class: 200, native_per_class: 100, min_nodes: 12, max_nodes: 40, class_ratio: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct S2VConfig {
    pub iterations: usize,
    pub sigma: Aggregation,
    pub readout: Readout,
    /// Existing parameter file to use instead of drawing fresh weights.
    pub params: Option<PathBuf>,
}

impl Default for S2VConfig {
    fn default() -> Self {
        Self { iterations: DEFAULT_ITERATIONS, sigma: Aggregation::Relu, readout: Readout::Last, params: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub mode: EnsembleMode,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { mode: EnsembleMode::LogicGate }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub epsilon: f64,
    pub sizes: Vec<usize>,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self { epsilon: DEFAULT_EPSILON, sizes: CURVE_SIZES.to_vec() }
    }
}

/// Stages that draw randomness; each gets an independent seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Split,
    ClassRatio,
    SkipGram(Layer),
    Structure2Vec(Layer),
    Classifier(Layer),
    Ensemble,
}

impl Stage {
    fn tag(self) -> u64 {
        let layer = |l: Layer| match l {
            Layer::Bytecode => 0,
            Layer::Native => 1,
        };
        match self {
            Stage::Synth => 1,
            Stage::Split => 2,
            Stage::ClassRatio => 3,
            Stage::SkipGram(l) => 10 + layer(l),
            Stage::Structure2Vec(l) => 20 + layer(l),
            Stage::Classifier(l) => 30 + layer(l),
            Stage::Ensemble => 40,
        }
    }
}

/// SplitMix64 finalizer, so that nearby global seeds give unrelated stage seeds.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))
    }

    /// Reads a configuration file and resolves its paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| CliError::Missing { what: "configuration", path: path.to_owned() })?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.paths.resolve(&base);
        if let Some(p) = &mut cfg.s2v.params {
            *p = base.join(&*p);
        }
        Ok(cfg)
    }

    /// Default configuration rooted at `base`.
    pub fn rooted_at(base: &Path) -> Self {
        let mut cfg = Self::default();
        cfg.paths.resolve(base);
        cfg
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        mix(self.seed ^ mix(stage.tag()))
    }

    pub fn skipgram_config(&self, layer: Layer) -> SkipGramConfig {
        SkipGramConfig { seed: self.stage_seed(Stage::SkipGram(layer)), ..self.skipgram.clone() }
    }

    pub fn train_config(&self, layer: Layer) -> TrainConfig {
        TrainConfig { seed: self.stage_seed(Stage::Classifier(layer)), ..self.classifier.clone() }
    }

    pub fn attack_config(&self) -> AttackConfig {
        AttackConfig { epsilon: self.attack.epsilon }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: graphshield_core::Error| CliError::Usage(e.to_string());
        self.skipgram.validate().map_err(usage)?;
        self.sif.validate().map_err(usage)?;
        self.classifier.validate().map_err(usage)?;
        self.attack_config().validate().map_err(usage)?;
        if self.s2v.iterations < 1 {
            return Err(CliError::Usage("s2v.iterations must be at least 1".into()));
        }
        let s = &self.synth;
        if s.min_nodes < 1 || s.min_nodes > s.max_nodes {
            return Err(CliError::Usage("synth node range must satisfy 1 <= min_nodes <= max_nodes".into()));
        }
        if s.native_per_class > s.bytecode_per_class {
            return Err(CliError::Usage("synth.native_per_class cannot exceed synth.bytecode_per_class".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(PipelineConfig::from_toml_str("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn sections_are_partial() {
        let cfg = PipelineConfig::from_toml_str(
            "seed = 7\n[classifier]\nepochs = 3\n[ensemble]\nmode = \"weighted\"\n[s2v]\nreadout = \"mean\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.classifier.epochs, 3);
        assert_eq!(cfg.classifier.learning_rate, 0.01);
        assert_eq!(cfg.ensemble.mode, EnsembleMode::Weighted);
        assert_eq!(cfg.s2v.readout, Readout::Mean);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        assert!(matches!(PipelineConfig::from_toml_str("sed = 1"), Err(CliError::Usage(_))));
    }

    #[test]
    fn stage_seeds_follow_global_seed() {
        let a = PipelineConfig::default();
        let b = PipelineConfig { seed: 43, ..PipelineConfig::default() };
        let stages = [Stage::Synth, Stage::Split, Stage::SkipGram(Layer::Native), Stage::Classifier(Layer::Bytecode)];
        for s in stages {
            assert_ne!(a.stage_seed(s), b.stage_seed(s));
        }
        assert_ne!(a.stage_seed(Stage::Synth), a.stage_seed(Stage::Split));
        assert_eq!(a.train_config(Layer::Native).seed, a.stage_seed(Stage::Classifier(Layer::Native)));
    }

    #[test]
    fn paths_resolve_against_base() {
        let cfg = PipelineConfig::rooted_at(Path::new("/tmp/run"));
        assert_eq!(cfg.paths.manifest, PathBuf::from("/tmp/run/data/manifest.json"));
        assert_eq!(cfg.paths.model_dir, PathBuf::from("/tmp/run/model"));
    }
}
