//! Artifact file names and atomic file I/O.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use graphshield_core::graph_ir::Layer;

use crate::config::PipelineConfig;
use crate::error::CliError;

/// Writes `bytes` to a sibling temporary file and renames it over `path`, so
/// readers never observe a half-written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(CliError::io(path))
}

/// Reads a required input, reporting its absence as a missing artifact.
pub fn read_required(path: &Path, what: &'static str) -> Result<Vec<u8>, CliError> {
    if !path.is_file() {
        return Err(CliError::Missing { what, path: path.to_owned() });
    }
    fs::read(path).map_err(CliError::io(path))
}

/// Attaches the file path to a parse failure.
pub fn invalid(path: &Path) -> impl FnOnce(graphshield_core::Error) -> CliError + '_ {
    move |e| CliError::Invalid { path: path.to_owned(), message: e.to_string() }
}

/// Where each command reads and writes.
#[derive(Debug, Clone)]
pub struct Layout {
    pub data_dir: PathBuf,
    pub manifest: PathBuf,
    pub model_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Layout {
    pub fn new(cfg: &PipelineConfig) -> Self {
        Self {
            data_dir: cfg.paths.data_dir.clone(),
            manifest: cfg.paths.manifest.clone(),
            model_dir: cfg.paths.model_dir.clone(),
            report_dir: cfg.paths.report_dir.clone(),
        }
    }

    /// Directory against which manifest paths are resolved.
    pub fn manifest_base(&self) -> PathBuf {
        self.manifest.parent().map(Path::to_path_buf).unwrap_or_default()
    }

    fn model(&self, stem: &str, layer: Layer, ext: &str) -> PathBuf {
        self.model_dir.join(format!("{stem}.{}.{ext}", layer.as_str()))
    }

    fn report(&self, stem: &str, layer: Layer, ext: &str) -> PathBuf {
        self.report_dir.join(format!("{stem}.{}.{ext}", layer.as_str()))
    }

    pub fn corpus(&self, layer: Layer) -> PathBuf {
        self.model("corpus", layer, "txt")
    }

    pub fn opcode_table(&self, layer: Layer) -> PathBuf {
        self.model("opcodes", layer, "json")
    }

    pub fn skipgram_log(&self, layer: Layer) -> PathBuf {
        self.model("skipgram_log", layer, "json")
    }

    pub fn frequencies(&self) -> PathBuf {
        self.model("frequencies", Layer::Native, "json")
    }

    pub fn sif_model(&self) -> PathBuf {
        self.model("sif", Layer::Native, "json")
    }

    pub fn s2v_params(&self, layer: Layer) -> PathBuf {
        self.model("s2v", layer, "json")
    }

    pub fn embeddings(&self, layer: Layer) -> PathBuf {
        self.model("embeddings", layer, "json")
    }

    pub fn classifier(&self, layer: Layer) -> PathBuf {
        self.model("model", layer, "json")
    }

    pub fn scaler(&self, layer: Layer) -> PathBuf {
        self.model("scaler", layer, "json")
    }

    pub fn train_log(&self, layer: Layer) -> PathBuf {
        self.model("train_log", layer, "json")
    }

    pub fn ensemble_weights(&self) -> PathBuf {
        self.model_dir.join("ensemble.json")
    }

    pub fn validation_report(&self) -> PathBuf {
        self.report_dir.join("validation.json")
    }

    pub fn metrics(&self, layer: Layer) -> PathBuf {
        self.report("metrics", layer, "json")
    }

    pub fn roc(&self, layer: Layer) -> PathBuf {
        self.report("roc", layer, "csv")
    }

    pub fn verdicts(&self) -> PathBuf {
        self.report_dir.join("verdicts.jsonl")
    }

    pub fn ensemble_metrics(&self) -> PathBuf {
        self.report_dir.join("metrics.ensemble.json")
    }

    pub fn robustness(&self, layer: Layer) -> PathBuf {
        self.report("robustness", layer, "json")
    }

    pub fn summary(&self) -> PathBuf {
        self.report_dir.join("summary.json")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        let names: Vec<_> = fs::read_dir(dir.path().join("sub")).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn missing_input_names_artifact() {
        let e = read_required(Path::new("/nonexistent/model.bytecode.json"), "model").unwrap_err();
        assert!(e.to_string().starts_with("model not found"));
    }
}
