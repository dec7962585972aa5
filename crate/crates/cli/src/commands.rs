//! The pipeline stages. Each command reads declared files, writes its
//! artifacts atomically and returns a summary for the log line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use graphshield_core::adversarial::robustness_eval;
use graphshield_core::classifier::{
    compute_metrics, metrics_from_scores, predict, train_classifier, verdict_for, Class, Metrics, Mlp, RocCurve,
    Standardizer,
};
use graphshield_core::ensemble::{train_weights, verdicts_to_jsonl, EnsembleMode, EnsembleWeights, Fuser};
use graphshield_core::featurize::{block_features, function_features, function_input};
use graphshield_core::graph_ir::{
    build_adjacency, parse_graph_doc, serialize_graph_doc, synth_generate, DatasetManifest, GraphDoc, Label, Layer,
    ManifestEntry, Split, SynthParams,
};
use graphshield_core::opcode_embed::{parse_corpus, train_skipgram_logged, write_corpus, EmbeddingTable};
use graphshield_core::sif::{InstructionFrequencyTable, SifModel};
use graphshield_core::struct2vec::{embed_graph, S2VParams};
use graphshield_core::{json, EMBED_DIM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::artifacts::{invalid, read_required, write_atomic, Layout};
use crate::config::{PipelineConfig, Stage};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum Command {
    Validate,
    Synth,
    TrainEmbed,
    EmbedGraphs,
    TrainClf,
    Evaluate,
    Fuse,
    Attack,
    Report,
}

impl Command {
    /// Stage order of a full run.
    pub const PIPELINE: [Command; 9] = [
        Command::Synth,
        Command::Validate,
        Command::TrainEmbed,
        Command::EmbedGraphs,
        Command::TrainClf,
        Command::Evaluate,
        Command::Fuse,
        Command::Attack,
        Command::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Synth => "synth",
            Command::TrainEmbed => "train-embed",
            Command::EmbedGraphs => "embed-graphs",
            Command::TrainClf => "train-clf",
            Command::Evaluate => "evaluate",
            Command::Fuse => "fuse",
            Command::Attack => "attack",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// The command ran but found problems in its input (exit 1).
    Failed,
}

/// What a command did: its status, the files it wrote and a short summary.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub command: &'static str,
    pub status: Status,
    pub artifacts: Vec<PathBuf>,
    pub detail: Value,
}

impl Outcome {
    fn ok(command: Command, artifacts: Vec<PathBuf>, detail: Value) -> Self {
        Self { command: command.as_str(), status: Status::Ok, artifacts, detail }
    }

    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Ok => 0,
            Status::Failed => 1,
        }
    }

    /// One-line machine-readable record of the run.
    pub fn log_line(&self) -> String {
        serde_json::to_string(self).expect("outcome serializes")
    }
}

/// Runs one command, honouring `GRAPHSHIELD_THREADS` for the parallel stages.
pub fn execute(command: Command, cfg: &PipelineConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    match std::env::var("GRAPHSHIELD_THREADS").ok().filter(|s| !s.is_empty()) {
        Some(v) => {
            let n: usize =
                v.parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
                    CliError::Usage(format!("GRAPHSHIELD_THREADS must be a positive integer, got {v:?}"))
                })?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?;
            pool.install(|| dispatch(command, cfg))
        }
        None => dispatch(command, cfg),
    }
}

fn dispatch(command: Command, cfg: &PipelineConfig) -> Result<Outcome, CliError> {
    let layout = Layout::new(cfg);
    match command {
        Command::Validate => validate(&layout),
        Command::Synth => synth(cfg, &layout),
        Command::TrainEmbed => train_embed(cfg, &layout),
        Command::EmbedGraphs => embed_graphs(cfg, &layout),
        Command::TrainClf => train_clf(cfg, &layout),
        Command::Evaluate => evaluate(&layout),
        Command::Fuse => fuse(cfg, &layout),
        Command::Attack => attack(cfg, &layout),
        Command::Report => report(&layout),
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    write_atomic(path, &json::to_vec_pretty(value)?)?;
    written.push(path.to_owned());
    Ok(())
}

fn write_bytes(path: &Path, bytes: &[u8], written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    write_atomic(path, bytes)?;
    written.push(path.to_owned());
    Ok(())
}

// ---------------------------------------------------------------- dataset

fn load_manifest(layout: &Layout) -> Result<DatasetManifest, CliError> {
    let bytes = read_required(&layout.manifest, "manifest")?;
    DatasetManifest::parse(&bytes).map_err(invalid(&layout.manifest))
}

/// A graph listed in the manifest, with the app it belongs to.
#[derive(Debug, Clone)]
struct GraphRef {
    path: String,
    app_id: String,
    split: Split,
    /// Byte-code graphs carry the app's label; native graphs their own.
    label: Option<Label>,
}

fn graph_refs(manifest: &DatasetManifest, layer: Layer) -> Vec<GraphRef> {
    match layer {
        Layer::Bytecode => manifest
            .entries
            .iter()
            .map(|e| GraphRef { path: e.path.clone(), app_id: e.app_id.clone(), split: e.split, label: Some(e.label) })
            .collect(),
        Layer::Native => manifest
            .native_links
            .iter()
            .flat_map(|(app, paths)| {
                let split = manifest.entry(app).map_or(Split::Test, |e| e.split);
                paths.iter().map(move |p| GraphRef { path: p.clone(), app_id: app.clone(), split, label: None })
            })
            .collect(),
    }
}

fn load_graph(base: &Path, r: &GraphRef, layer: Layer) -> Result<GraphDoc, CliError> {
    let path = base.join(&r.path);
    let bytes = read_required(&path, "graph")?;
    let doc = parse_graph_doc(&bytes).map_err(invalid(&path))?;
    check_graph(&doc, r, layer).map_err(|message| CliError::Invalid { path, message })?;
    Ok(doc)
}

fn check_graph(doc: &GraphDoc, r: &GraphRef, layer: Layer) -> Result<(), String> {
    if doc.layer != layer {
        return Err(format!("expected a {layer} graph, found {}", doc.layer));
    }
    if let Some(label) = r.label {
        if doc.label != label {
            return Err(format!("manifest labels it {}, graph says {}", label.as_str(), doc.label.as_str()));
        }
    }
    Ok(())
}

fn load_graphs(base: &Path, refs: &[GraphRef], layer: Layer) -> Result<Vec<GraphDoc>, CliError> {
    refs.par_iter().map(|r| load_graph(base, r, layer)).collect()
}

// ---------------------------------------------------------------- validate

#[derive(Debug, Serialize)]
struct Problem {
    path: String,
    problem: String,
}

fn validate(layout: &Layout) -> Result<Outcome, CliError> {
    let bytes = read_required(&layout.manifest, "manifest")?;
    let manifest: DatasetManifest = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Invalid { path: layout.manifest.clone(), message: e.to_string() })?;
    // Reported by file name so that the report does not depend on where the run lives.
    let manifest_path = layout.manifest.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    let mut problems: Vec<Problem> =
        manifest.validate().into_iter().map(|problem| Problem { path: manifest_path.clone(), problem }).collect();

    let base = layout.manifest_base();
    let mut checked = 0;
    for layer in Layer::ALL {
        for r in graph_refs(&manifest, layer) {
            checked += 1;
            let full = base.join(&r.path);
            let problem = match std::fs::read(&full) {
                Err(_) => Some("file not found".to_owned()),
                Ok(bytes) => match parse_graph_doc(&bytes) {
                    Err(e) => Some(e.to_string()),
                    Ok(doc) => check_graph(&doc, &r, layer).err(),
                },
            };
            if let Some(problem) = problem {
                problems.push(Problem { path: r.path.clone(), problem });
            }
        }
    }

    let report = json!({ "manifest": manifest_path, "checked": checked, "problems": problems });
    let mut written = Vec::new();
    write_json(&layout.validation_report(), &report, &mut written)?;
    let status = if problems.is_empty() { Status::Ok } else { Status::Failed };
    let broken: Vec<&str> = problems.iter().map(|p| p.path.as_str()).collect();
    Ok(Outcome {
        command: Command::Validate.as_str(),
        status,
        artifacts: written,
        detail: json!({ "checked": checked, "problems": problems.len(), "paths": broken }),
    })
}

// ---------------------------------------------------------------- synth

fn synth(cfg: &PipelineConfig, layout: &Layout) -> Result<Outcome, CliError> {
    let s = &cfg.synth;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.stage_seed(Stage::Synth));
    let base = layout.manifest_base();
    let rel = |p: &Path| -> String {
        let p = p.strip_prefix(&base).unwrap_or(p);
        p.to_string_lossy().replace('\\', "/")
    };

    let mut plans = Vec::new();
    for class in [Label::Malware, Label::Benign] {
        for k in 0..s.bytecode_per_class {
            let n = rng.gen_range(s.min_nodes..=s.max_nodes);
            plans.push((SynthParams::new(class, n, rng.gen()), format!("app-{}-{k:04}", class.as_str())));
        }
        for k in 0..s.native_per_class {
            let n = rng.gen_range(s.min_nodes..=s.max_nodes);
            plans.push((SynthParams::native(class, n, rng.gen()), format!("app-{}-{k:04}", class.as_str())));
        }
    }

    let docs: Vec<GraphDoc> = plans.par_iter().map(|(p, _)| synth_generate(p)).collect::<Result<_, _>>()?;
    let mut written = Vec::new();
    let mut entries = Vec::new();
    let mut native_links: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (doc, (params, app_id)) in docs.iter().zip(&plans) {
        let path = layout.data_dir.join(params.layer.as_str()).join(format!("{}.json", doc.graph_id));
        write_bytes(&path, &serialize_graph_doc(doc), &mut written)?;
        match params.layer {
            Layer::Bytecode => entries.push(ManifestEntry {
                path: rel(&path),
                label: params.class,
                split: Split::Train,
                app_id: app_id.clone(),
            }),
            Layer::Native => native_links.entry(app_id.clone()).or_default().push(rel(&path)),
        }
    }

    let mut manifest = DatasetManifest {
        entries,
        native_links,
        class_ratio: s.class_ratio.unwrap_or(0.5),
        split_ratio: cfg.classifier.split,
    };
    if s.class_ratio.is_some() {
        manifest.enforce_class_ratio(cfg.stage_seed(Stage::ClassRatio));
    }
    manifest.assign_splits(cfg.stage_seed(Stage::Split));
    let problems = manifest.validate();
    if !problems.is_empty() {
        return Err(CliError::Invalid { path: layout.manifest.clone(), message: problems.join("; ") });
    }
    write_bytes(&layout.manifest, &manifest.to_json(), &mut written)?;

    let count = |split: Split| manifest.entries.iter().filter(|e| e.split == split).count();
    let detail = json!({
        "apps": manifest.entries.len(),
        "native_graphs": manifest.native_links.values().map(Vec::len).sum::<usize>(),
        "train": count(Split::Train),
        "test": count(Split::Test),
    });
    Ok(Outcome::ok(Command::Synth, written, detail))
}

// ---------------------------------------------------------------- train-embed

/// Opcode sentences (one per node) of every training graph, plus any extra
/// unlabeled sentences from the configured corpus directory.
fn training_corpus(docs: &[GraphDoc], extra: Option<&Path>) -> Result<Vec<Vec<String>>, CliError> {
    let mut sorted: Vec<&GraphDoc> = docs.iter().collect();
    sorted.sort_by(|a, b| a.graph_id.cmp(&b.graph_id));
    let mut corpus = Vec::new();
    for doc in sorted {
        let mut nodes: Vec<_> = doc.nodes.iter().collect();
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        corpus.extend(nodes.into_iter().filter(|n| !n.opcodes.is_empty()).map(|n| n.opcodes.clone()));
    }
    if let Some(path) = extra.filter(|p| p.is_file()) {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        corpus.extend(parse_corpus(&text));
    }
    Ok(corpus)
}

fn train_split(refs: Vec<GraphRef>) -> Vec<GraphRef> {
    refs.into_iter().filter(|r| r.split == Split::Train).collect()
}

fn train_embed(cfg: &PipelineConfig, layout: &Layout) -> Result<Outcome, CliError> {
    let manifest = load_manifest(layout)?;
    let base = layout.manifest_base();
    let mut written = Vec::new();
    let mut detail = serde_json::Map::new();
    for layer in Layer::ALL {
        let refs = train_split(graph_refs(&manifest, layer));
        if refs.is_empty() {
            if layer == Layer::Bytecode {
                return Err(CliError::Invalid {
                    path: layout.manifest.clone(),
                    message: "no byte-code graphs in the training split".into(),
                });
            }
            continue;
        }
        let docs = load_graphs(&base, &refs, layer)?;
        let extra = cfg.paths.corpus.as_ref().map(|d| d.join(format!("{}.txt", layer.as_str())));
        let corpus = training_corpus(&docs, extra.as_deref())?;
        let run = train_skipgram_logged(&corpus, &cfg.skipgram_config(layer))?;

        write_bytes(&layout.corpus(layer), write_corpus(&corpus).as_bytes(), &mut written)?;
        write_bytes(&layout.opcode_table(layer), &run.table.to_json(), &mut written)?;
        write_json(&layout.skipgram_log(layer), &json!({ "epoch_losses": run.epoch_losses }), &mut written)?;
        if layer == Layer::Native {
            let freq = InstructionFrequencyTable::from_corpus(&corpus);
            write_bytes(&layout.frequencies(), &freq.to_json(), &mut written)?;
        }
        detail.insert(
            layer.as_str().into(),
            json!({
                "sentences": corpus.len(),
                "vocabulary": run.table.vocab().len(),
                "final_loss": run.epoch_losses.last(),
            }),
        );
    }
    Ok(Outcome::ok(Command::TrainEmbed, written, Value::Object(detail)))
}

// ---------------------------------------------------------------- embed-graphs

/// One graph's embedding together with its bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedGraph {
    pub graph_id: String,
    pub app_id: String,
    pub path: String,
    pub label: Label,
    pub split: Split,
    pub embedding: Vec<f64>,
}

fn s2v_params(cfg: &PipelineConfig, layer: Layer) -> Result<S2VParams, CliError> {
    if let Some(path) = &cfg.s2v.params {
        let bytes = read_required(path, "Structure2Vec parameters")?;
        return S2VParams::from_json(&bytes).map_err(invalid(path));
    }
    let mut p = S2VParams::random(EMBED_DIM, cfg.s2v.iterations, cfg.stage_seed(Stage::Structure2Vec(layer)));
    p.sigma = cfg.s2v.sigma;
    p.readout = cfg.s2v.readout;
    Ok(p)
}

fn read_table(layout: &Layout, layer: Layer) -> Result<EmbeddingTable, CliError> {
    let path = layout.opcode_table(layer);
    let bytes = read_required(&path, "opcode embeddings")?;
    EmbeddingTable::from_json(&bytes).map_err(invalid(&path))
}

fn embed_graphs(cfg: &PipelineConfig, layout: &Layout) -> Result<Outcome, CliError> {
    let manifest = load_manifest(layout)?;
    let base = layout.manifest_base();
    let mut written = Vec::new();
    let mut detail = serde_json::Map::new();
    for layer in Layer::ALL {
        let refs = graph_refs(&manifest, layer);
        if refs.is_empty() {
            continue;
        }
        let table = read_table(layout, layer)?;
        let params = s2v_params(cfg, layer)?;
        if params.dim() != EMBED_DIM {
            return Err(CliError::Usage(format!("Structure2Vec parameters must be {EMBED_DIM}-dimensional")));
        }
        let docs = load_graphs(&base, &refs, layer)?;

        let sif = match layer {
            Layer::Bytecode => None,
            Layer::Native => {
                let path = layout.frequencies();
                let freq = InstructionFrequencyTable::from_json(&read_required(&path, "instruction frequencies")?)
                    .map_err(invalid(&path))?;
                let mut train: Vec<(&GraphRef, &GraphDoc)> =
                    refs.iter().zip(&docs).filter(|(r, _)| r.split == Split::Train).collect();
                train.sort_by(|a, b| a.1.graph_id.cmp(&b.1.graph_id));
                let functions: Vec<_> = train
                    .iter()
                    .flat_map(|(_, d)| d.nodes.iter())
                    .filter(|n| n.feature.is_none())
                    .map(|n| function_input(n, &table))
                    .collect();
                let model = if functions.is_empty() {
                    SifModel { alpha: cfg.sif.alpha, direction: None }
                } else {
                    SifModel::fit(&functions, &freq, &cfg.sif)?
                };
                write_json(&layout.sif_model(), &model, &mut written)?;
                Some((freq, model))
            }
        };

        let mut records: Vec<EmbeddedGraph> = refs
            .par_iter()
            .zip(docs.par_iter())
            .map(|(r, doc)| {
                let features = match &sif {
                    None => block_features(doc, &table)?,
                    Some((freq, model)) => function_features(doc, &table, freq, model)?,
                };
                let embedding = embed_graph(&features, &build_adjacency(doc), &params)?;
                Ok(EmbeddedGraph {
                    graph_id: doc.graph_id.clone(),
                    app_id: r.app_id.clone(),
                    path: r.path.clone(),
                    label: doc.label,
                    split: r.split,
                    embedding,
                })
            })
            .collect::<Result<_, graphshield_core::Error>>()?;
        records.sort_by(|a, b| a.graph_id.cmp(&b.graph_id));
        if let Some(w) = records.windows(2).find(|w| w[0].graph_id == w[1].graph_id) {
            return Err(CliError::Invalid {
                path: layout.manifest.clone(),
                message: format!("graph id {} appears twice", w[0].graph_id),
            });
        }

        write_bytes(&layout.s2v_params(layer), &params.to_json(), &mut written)?;
        write_json(&layout.embeddings(layer), &records, &mut written)?;
        detail.insert(layer.as_str().into(), json!({ "graphs": records.len() }));
    }
    Ok(Outcome::ok(Command::EmbedGraphs, written, Value::Object(detail)))
}

// ---------------------------------------------------------------- train-clf

fn read_embeddings(layout: &Layout, layer: Layer) -> Result<Vec<EmbeddedGraph>, CliError> {
    let path = layout.embeddings(layer);
    let bytes = read_required(&path, "embedded graphs")?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Invalid { path, message: e.to_string() })
}

fn read_optional_embeddings(layout: &Layout, layer: Layer) -> Result<Option<Vec<EmbeddedGraph>>, CliError> {
    if layout.embeddings(layer).is_file() {
        read_embeddings(layout, layer).map(Some)
    } else {
        Ok(None)
    }
}

/// A trained layer classifier together with its input standardizer.
struct LayerModel {
    mlp: Mlp,
    scaler: Standardizer,
}

impl LayerModel {
    fn input(&self, embedding: &[f64]) -> Result<Vec<f64>, CliError> {
        Ok(self.scaler.apply(embedding)?)
    }

    fn score(&self, embedding: &[f64]) -> Result<f64, CliError> {
        Ok(predict(&self.mlp, &self.input(embedding)?)?.1)
    }

    /// Samples as the network sees them.
    fn inputs(&self, samples: Vec<(Vec<f64>, Class)>) -> Result<Vec<(Vec<f64>, Class)>, CliError> {
        samples.into_iter().map(|(x, y)| Ok((self.input(&x)?, y))).collect()
    }
}

fn read_model(layout: &Layout, layer: Layer) -> Result<LayerModel, CliError> {
    let path = layout.classifier(layer);
    let mlp = Mlp::from_json(&read_required(&path, "model")?).map_err(invalid(&path))?;
    let path = layout.scaler(layer);
    let scaler = Standardizer::from_json(&read_required(&path, "feature scaler")?).map_err(invalid(&path))?;
    if scaler.dim() != mlp.input_dim() {
        return Err(CliError::Invalid {
            path,
            message: format!("scaler has {} dimensions, model expects {}", scaler.dim(), mlp.input_dim()),
        });
    }
    Ok(LayerModel { mlp, scaler })
}

/// Labelled samples of one split; graphs with an unknown label are skipped.
fn samples(records: &[EmbeddedGraph], split: Split) -> Vec<(Vec<f64>, Class)> {
    records
        .iter()
        .filter(|r| r.split == split)
        .filter_map(|r| Class::try_from(r.label).ok().map(|c| (r.embedding.clone(), c)))
        .collect()
}

/// An app's byte-code score, the scores of its native libraries and its label.
type AppScores = (f64, Vec<f64>, Label);

/// Byte-code score and native scores of each app, keyed by app id.
fn app_scores(
    bytecode: (&LayerModel, &[EmbeddedGraph]),
    native: Option<(&LayerModel, &[EmbeddedGraph])>,
    split: Split,
) -> Result<BTreeMap<String, AppScores>, CliError> {
    let mut apps = BTreeMap::new();
    for r in bytecode.1.iter().filter(|r| r.split == split) {
        apps.insert(r.app_id.clone(), (bytecode.0.score(&r.embedding)?, Vec::new(), r.label));
    }
    if let Some((model, records)) = native {
        for r in records {
            if let Some(app) = apps.get_mut(&r.app_id) {
                app.1.push(model.score(&r.embedding)?);
            }
        }
    }
    Ok(apps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EnsembleFile {
    weights: Option<EnsembleWeights>,
}

fn train_clf(cfg: &PipelineConfig, layout: &Layout) -> Result<Outcome, CliError> {
    let mut written = Vec::new();
    let mut detail = serde_json::Map::new();
    let mut models = BTreeMap::new();
    let mut records = BTreeMap::new();
    for layer in Layer::ALL {
        let recs = match layer {
            Layer::Bytecode => read_embeddings(layout, layer)?,
            Layer::Native => match read_optional_embeddings(layout, layer)? {
                Some(r) => r,
                None => continue,
            },
        };
        let train = samples(&recs, Split::Train);
        let rows: Vec<Vec<f64>> = train.iter().map(|s| s.0.clone()).collect();
        let scaler = Standardizer::fit(&rows)?;
        let train: Vec<(Vec<f64>, Class)> =
            train.into_iter().map(|(x, y)| Ok((scaler.apply(&x)?, y))).collect::<Result<_, CliError>>()?;
        let outcome = train_classifier(&train, &cfg.train_config(layer))?;
        let model = LayerModel { mlp: outcome.params, scaler };
        write_bytes(&layout.scaler(layer), &model.scaler.to_json(), &mut written)?;
        write_bytes(&layout.classifier(layer), &model.mlp.to_json(), &mut written)?;
        write_json(&layout.train_log(layer), &json!({ "epoch_losses": outcome.epoch_losses }), &mut written)?;
        detail.insert(
            layer.as_str().into(),
            json!({ "samples": train.len(), "final_loss": outcome.epoch_losses.last() }),
        );
        models.insert(layer.as_str(), model);
        records.insert(layer.as_str(), recs);
    }

    // Fusion weights are fitted on training-split apps that bundle native code.
    let mut weights = None;
    if let (Some(bm), Some(nm)) = (models.get("bytecode"), models.get("native")) {
        let apps = app_scores((bm, &records["bytecode"]), Some((nm, &records["native"])), Split::Train)?;
        let pairs: Vec<(f64, f64, Class)> = apps
            .values()
            .filter_map(|(sb, sn, label)| {
                let native = sn.iter().copied().reduce(f64::max)?;
                Class::try_from(*label).ok().map(|c| (*sb, native, c))
            })
            .collect();
        weights = match train_weights(&pairs, cfg.stage_seed(Stage::Ensemble)) {
            Ok(w) => Some(w),
            Err(graphshield_core::Error::DegenerateDataset(_)) => None,
            Err(e) => return Err(e.into()),
        };
    }
    write_json(&layout.ensemble_weights(), &EnsembleFile { weights }, &mut written)?;
    detail.insert("ensemble_weights".into(), json!(weights));
    Ok(Outcome::ok(Command::TrainClf, written, Value::Object(detail)))
}

// ---------------------------------------------------------------- evaluate

fn test_metrics(model: &LayerModel, records: &[EmbeddedGraph]) -> Result<Option<Metrics>, CliError> {
    let test = samples(records, Split::Test);
    if test.is_empty() {
        return Ok(None);
    }
    let scores: Vec<f64> = test.par_iter().map(|(x, _)| model.score(x)).collect::<Result<_, _>>()?;
    let labels: Vec<Class> = test.iter().map(|s| s.1).collect();
    Ok(Some(metrics_from_scores(&scores, &labels)?))
}

fn evaluate(layout: &Layout) -> Result<Outcome, CliError> {
    let mut written = Vec::new();
    let mut detail = serde_json::Map::new();
    for layer in Layer::ALL {
        if layer == Layer::Native && !layout.classifier(layer).is_file() {
            continue;
        }
        let model = read_model(layout, layer)?;
        let records = read_embeddings(layout, layer)?;
        let Some(metrics) = test_metrics(&model, &records)? else {
            continue;
        };
        write_json(&layout.metrics(layer), &metrics, &mut written)?;
        if metrics.auc.is_some() {
            let curve = RocCurve { points: metrics.roc_points.clone(), auc: metrics.auc.unwrap_or_default() };
            write_bytes(&layout.roc(layer), curve.to_csv().as_bytes(), &mut written)?;
        }
        detail.insert(
            layer.as_str().into(),
            json!({ "samples": metrics.confusion.total(), "accuracy": metrics.accuracy, "auc": metrics.auc }),
        );
    }
    Ok(Outcome::ok(Command::Evaluate, written, Value::Object(detail)))
}

// ---------------------------------------------------------------- fuse

fn fuse(cfg: &PipelineConfig, layout: &Layout) -> Result<Outcome, CliError> {
    let bytecode_model = read_model(layout, Layer::Bytecode)?;
    let bytecode = read_embeddings(layout, Layer::Bytecode)?;
    let native_model =
        if layout.classifier(Layer::Native).is_file() { Some(read_model(layout, Layer::Native)?) } else { None };
    let native = match &native_model {
        Some(_) => Some(read_embeddings(layout, Layer::Native)?),
        None => None,
    };

    let fuser = match cfg.ensemble.mode {
        EnsembleMode::LogicGate => Fuser::logic_gate(),
        EnsembleMode::Weighted => {
            let path = layout.ensemble_weights();
            let file: EnsembleFile = serde_json::from_slice(&read_required(&path, "ensemble weights")?)
                .map_err(|e| CliError::Invalid { path: path.clone(), message: e.to_string() })?;
            if file.weights.is_none() {
                return Err(CliError::Missing { what: "ensemble weights", path });
            }
            Fuser::weighted(file.weights)
        }
    };

    let apps = app_scores((&bytecode_model, &bytecode), native_model.as_ref().zip(native.as_deref()), Split::Test)?;
    let mut verdicts = Vec::with_capacity(apps.len());
    let (mut preds, mut labels, mut bytecode_scores) = (Vec::new(), Vec::new(), Vec::new());
    for (app_id, (sb, sn, label)) in &apps {
        let v = fuser.fuse(app_id, *sb, sn)?;
        if let Ok(c) = Class::try_from(*label) {
            preds.push(v.final_verdict);
            labels.push(c);
            bytecode_scores.push(*sb);
        }
        verdicts.push(v);
    }

    let mut written = Vec::new();
    write_bytes(&layout.verdicts(), &verdicts_to_jsonl(&verdicts), &mut written)?;
    let mut detail = json!({ "mode": fuser.mode, "apps": verdicts.len() });
    if !preds.is_empty() {
        let metrics = compute_metrics(&preds, &labels)?;
        let bytecode_preds: Vec<Class> = bytecode_scores.iter().map(|&s| verdict_for(s)).collect();
        let bytecode_accuracy = compute_metrics(&bytecode_preds, &labels)?.accuracy;
        let with_native = apps.values().filter(|a| !a.1.is_empty()).count();
        let report = json!({
            "mode": fuser.mode,
            "apps": preds.len(),
            "apps_with_native": with_native,
            "bytecode_accuracy": bytecode_accuracy,
            "metrics": metrics,
        });
        write_json(&layout.ensemble_metrics(), &report, &mut written)?;
        detail["accuracy"] = json!(metrics.accuracy);
        detail["bytecode_accuracy"] = json!(bytecode_accuracy);
    }
    Ok(Outcome::ok(Command::Fuse, written, detail))
}

// ---------------------------------------------------------------- attack

fn attack(cfg: &PipelineConfig, layout: &Layout) -> Result<Outcome, CliError> {
    let mut written = Vec::new();
    let mut detail = serde_json::Map::new();
    for layer in Layer::ALL {
        if layer == Layer::Native && !layout.classifier(layer).is_file() {
            continue;
        }
        let model = read_model(layout, layer)?;
        let test = model.inputs(samples(&read_embeddings(layout, layer)?, Split::Test))?;
        if test.is_empty() {
            continue;
        }
        // Perturbations act on the standardized embedding the network consumes.
        let report = robustness_eval(&model.mlp, &test, &cfg.attack_config(), &cfg.attack.sizes)?;
        write_bytes(&layout.robustness(layer), &report.to_json(), &mut written)?;
        detail.insert(
            layer.as_str().into(),
            json!({ "epsilon": report.epsilon, "clean": report.clean, "adversarial": report.adversarial }),
        );
    }
    Ok(Outcome::ok(Command::Attack, written, Value::Object(detail)))
}

// ---------------------------------------------------------------- report

fn read_value(path: &Path, what: &'static str) -> Result<Value, CliError> {
    let bytes = read_required(path, what)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Invalid { path: path.to_owned(), message: e.to_string() })
}

fn headline(metrics: &Value) -> Value {
    let keys = ["accuracy", "precision", "recall", "f1", "auc", "confusion"];
    keys.iter().map(|&k| (k.to_owned(), metrics.get(k).cloned().unwrap_or(Value::Null))).collect()
}

fn report(layout: &Layout) -> Result<Outcome, CliError> {
    let mut layers = serde_json::Map::new();
    let mut robustness = serde_json::Map::new();
    for layer in Layer::ALL {
        let path = layout.metrics(layer);
        if layer == Layer::Bytecode || path.is_file() {
            layers.insert(layer.as_str().into(), headline(&read_value(&path, "metrics")?));
        }
        let path = layout.robustness(layer);
        if path.is_file() {
            let mut r = read_value(&path, "robustness report")?;
            if let Some(obj) = r.as_object_mut() {
                obj.remove("curve");
            }
            robustness.insert(layer.as_str().into(), r);
        }
    }
    let ensemble = match layout.ensemble_metrics() {
        p if p.is_file() => {
            let v = read_value(&p, "ensemble metrics")?;
            let mut h = headline(&v["metrics"]);
            h["mode"] = v["mode"].clone();
            h
        }
        _ => Value::Null,
    };
    let summary = json!({ "layers": layers, "ensemble": ensemble, "robustness": robustness });
    let mut written = Vec::new();
    write_json(&layout.summary(), &summary, &mut written)?;
    Ok(Outcome::ok(Command::Report, written, summary))
}
