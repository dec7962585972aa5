//! Dataset manifests: which graph belongs to which app, label and split.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One byte-code graph, i.e. one application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub label: Label,
    pub split: Split,
    pub app_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// app id -> native graph paths bundled with that app
    #[serde(default)]
    pub native_links: BTreeMap<String, Vec<String>>,
    pub class_ratio: f64,
    pub split_ratio: f64,
}

impl DatasetManifest {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let m: Self = serde_json::from_slice(bytes)?;
        let problems = m.validate();
        if problems.is_empty() {
            Ok(m)
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        crate::json::to_vec_pretty(self).expect("manifest serializes")
    }

    /// Structural problems: repeated paths and out-of-range ratios.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            problems.push(format!("split_ratio {} not in (0, 1)", self.split_ratio));
        }
        if !(self.class_ratio > 0.0 && self.class_ratio < 1.0) {
            problems.push(format!("class_ratio {} not in (0, 1)", self.class_ratio));
        }
        let mut seen = HashSet::new();
        let linked = self.native_links.values().flatten();
        for path in self.entries.iter().map(|e| &e.path).chain(linked) {
            if !seen.insert(path.as_str()) {
                problems.push(format!("duplicate path {path}"));
            }
        }
        let mut apps = HashSet::new();
        for e in &self.entries {
            if !apps.insert(e.app_id.as_str()) {
                problems.push(format!("duplicate app id {}", e.app_id));
            }
        }
        for app in self.native_links.keys() {
            if !apps.contains(app.as_str()) {
                problems.push(format!("native link for unknown app {app}"));
            }
        }
        problems
    }

    pub fn entry(&self, app_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.app_id == app_id)
    }

    pub fn native_paths(&self, app_id: &str) -> &[String] {
        self.native_links.get(app_id).map_or(&[], Vec::as_slice)
    }

    /// Downsamples the over-represented class so that malware makes up
    /// `class_ratio` of the entries (as closely as integer counts allow).
    /// Entries with other labels are kept. Dropped apps lose their native links.
    pub fn enforce_class_ratio(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mal: Vec<usize> = self.indices_with(Label::Malware);
        let ben: Vec<usize> = self.indices_with(Label::Benign);
        let r = self.class_ratio;
        // keep as many samples as possible subject to mal/(mal+ben) = r
        let max_total_from_mal = (mal.len() as f64 / r).floor();
        let max_total_from_ben = (ben.len() as f64 / (1.0 - r)).floor();
        let total = max_total_from_mal.min(max_total_from_ben);
        let keep_mal = ((total * r).round() as usize).min(mal.len());
        let keep_ben = ((total - keep_mal as f64).round() as usize).min(ben.len());

        let mut drop = HashSet::new();
        for (mut pool, keep) in [(mal, keep_mal), (ben, keep_ben)] {
            pool.shuffle(&mut rng);
            drop.extend(pool.into_iter().skip(keep));
        }
        let mut i = 0;
        let native_links = &mut self.native_links;
        self.entries.retain(|e| {
            let keep = !drop.contains(&i);
            if !keep {
                native_links.remove(&e.app_id);
            }
            i += 1;
            keep
        });
    }

    /// Reassigns splits by a seeded shuffle stratified by label: within each
    /// label, the first `round(split_ratio * n)` shuffled entries train.
    pub fn assign_splits(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for label in [Label::Malware, Label::Benign, Label::Unknown] {
            let mut idx = self.indices_with(label);
            idx.shuffle(&mut rng);
            let n_train = (self.split_ratio * idx.len() as f64).round() as usize;
            for (k, i) in idx.into_iter().enumerate() {
                self.entries[i].split = if k < n_train { Split::Train } else { Split::Test };
            }
        }
    }

    fn indices_with(&self, label: Label) -> Vec<usize> {
        self.entries.iter().enumerate().filter(|(_, e)| e.label == label).map(|(i, _)| i).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(n_mal: usize, n_ben: usize) -> DatasetManifest {
        let mut entries = Vec::new();
        for i in 0..n_mal {
            entries.push(ManifestEntry {
                path: format!("m{i}.json"),
                label: Label::Malware,
                split: Split::Train,
                app_id: format!("m{i}"),
            });
        }
        for i in 0..n_ben {
            entries.push(ManifestEntry {
                path: format!("b{i}.json"),
                label: Label::Benign,
                split: Split::Train,
                app_id: format!("b{i}"),
            });
        }
        DatasetManifest { entries, native_links: BTreeMap::new(), class_ratio: 0.5, split_ratio: 0.7 }
    }

    #[test]
    fn split_is_stratified_and_seeded() {
        let mut a = manifest(100, 100);
        a.assign_splits(42);
        let train_mal = a.entries.iter().filter(|e| e.label == Label::Malware && e.split == Split::Train).count();
        assert_eq!(train_mal, 70);
        let mut b = manifest(100, 100);
        b.assign_splits(42);
        assert_eq!(a, b);
        let mut c = manifest(100, 100);
        c.assign_splits(43);
        assert_ne!(a, c);
    }

    #[test]
    fn ten_ninety_ratio() {
        let mut m = manifest(50, 300);
        m.class_ratio = 0.1;
        m.enforce_class_ratio(1);
        let mal = m.entries.iter().filter(|e| e.label == Label::Malware).count();
        let ben = m.entries.iter().filter(|e| e.label == Label::Benign).count();
        assert_eq!((mal, ben), (33, 300));
        assert!((mal as f64 / (mal + ben) as f64 - 0.1).abs() < 0.005);
    }

    #[test]
    fn validation_catches_duplicates_and_ratios() {
        let mut m = manifest(2, 0);
        m.entries[1].path = m.entries[0].path.clone();
        m.split_ratio = 1.0;
        m.native_links.insert("ghost".into(), vec!["n.json".into()]);
        assert_eq!(m.validate().len(), 3);
    }

    #[test]
    fn json_round_trip() {
        let mut m = manifest(3, 3);
        m.native_links.insert("m0".into(), vec!["n0.json".into()]);
        assert_eq!(DatasetManifest::parse(&m.to_json()).unwrap(), m);
    }
}
