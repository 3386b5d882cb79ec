use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assessor::AssessConfig;
use crate::corpus::LeaveOut;
use crate::embedder::{Hyperparameters, DEFAULT_DIM};
use crate::error::Result;
use crate::tokenizer::{DEFAULT_MASK_FRACTION, DEFAULT_MAX_LEN, DEFAULT_VOCAB_SIZE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    /// Step size for the roles stage; `None` reuses `learning_rate`.
    pub roles_learning_rate: Option<f64>,
    pub batch_size: usize,
    pub triplet_weight: f64,
    pub mr_weight: f64,
    pub window: usize,
    pub init_scale: f64,
    pub head_init_scale: f64,
    pub swc_epochs: usize,
    pub roles_epochs: usize,
    pub swc_triplets: usize,
    pub role_triplets: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let h = Hyperparameters::default();
        TrainingConfig {
            learning_rate: h.learning_rate,
            roles_learning_rate: Some(0.01),
            batch_size: h.batch_size,
            triplet_weight: h.triplet_weight,
            mr_weight: h.mr_weight,
            window: h.window,
            init_scale: h.init_scale,
            head_init_scale: h.head_init_scale,
            swc_epochs: 15,
            roles_epochs: 2,
            swc_triplets: 200,
            role_triplets: 200,
        }
    }
}

impl TrainingConfig {
    pub fn hyperparameters(&self, epochs: usize, seed: u64) -> Hyperparameters {
        Hyperparameters {
            learning_rate: self.learning_rate,
            epochs,
            batch_size: self.batch_size,
            triplet_weight: self.triplet_weight,
            mr_weight: self.mr_weight,
            window: self.window,
            seed,
            init_scale: self.init_scale,
            head_init_scale: self.head_init_scale,
        }
    }
}

/// Every knob of a pipeline run. Loaded from JSON; missing fields take
/// their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_root: PathBuf,
    /// Paths are not part of any config hash.
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Negative queries to sample; `None` matches the positive count.
    pub negatives: Option<usize>,
    pub vocab_size: usize,
    pub max_len: usize,
    pub dim: usize,
    pub mask_fraction: f64,
    pub baseline_salt: u64,
    pub training: TrainingConfig,
    pub leave_out: LeaveOut,
    /// When non-empty, the benchmark is frozen to these instance ids.
    pub golden_instances: Vec<String>,
    pub assess: AssessConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus_root: PathBuf::from("corpus"),
            out_dir: PathBuf::from("out"),
            seed: 7,
            negatives: None,
            vocab_size: DEFAULT_VOCAB_SIZE,
            max_len: DEFAULT_MAX_LEN,
            dim: DEFAULT_DIM,
            mask_fraction: DEFAULT_MASK_FRACTION,
            baseline_salt: 0,
            training: TrainingConfig::default(),
            leave_out: LeaveOut::Instance,
            golden_instances: Vec::new(),
            assess: AssessConfig::default(),
        }
    }
}

/// Pipeline stages in dependency order. Each stage's hash covers its own
/// settings and everything upstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StageKey {
    Ingest,
    Vocab,
    Train,
    Assess,
}

fn hex_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Seed for one randomized step: digest of `"{seed}:{stage}"`.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let d = Sha256::digest(format!("{seed}:{stage}").as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_json(path)
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }

    /// Hash of the settings that determine artifacts of `stage`, keyed to
    /// the corpus content digest rather than its location.
    pub fn stage_hash(&self, stage: StageKey, corpus_digest: &str) -> String {
        let mut v = serde_json::json!({
            "corpus": corpus_digest,
            "seed": self.seed,
            "negatives": self.negatives,
            "swc_triplets": self.training.swc_triplets,
            "role_triplets": self.training.role_triplets,
        });
        let obj = v.as_object_mut().expect("object");
        if stage >= StageKey::Vocab {
            obj.insert("vocab_size".into(), self.vocab_size.into());
            obj.insert("max_len".into(), self.max_len.into());
        }
        if stage >= StageKey::Train {
            obj.insert("dim".into(), self.dim.into());
            obj.insert("mask_fraction".into(), self.mask_fraction.into());
            obj.insert("baseline_salt".into(), self.baseline_salt.into());
            obj.insert(
                "training".into(),
                serde_json::to_value(&self.training).expect("serializable"),
            );
        }
        if stage >= StageKey::Assess {
            obj.insert(
                "leave_out".into(),
                serde_json::to_value(self.leave_out).expect("serializable"),
            );
            obj.insert("golden_instances".into(), self.golden_instances.clone().into());
            obj.insert(
                "assess".into(),
                serde_json::to_value(self.assess).expect("serializable"),
            );
        }
        // serde_json maps are ordered, so this is canonical
        hex_digest(v.to_string().as_bytes())
    }

    /// Hash of the whole configuration except paths.
    pub fn config_hash(&self, corpus_digest: &str) -> String {
        self.stage_hash(StageKey::Assess, corpus_digest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_dir_is_not_hashed() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = PathBuf::from("elsewhere");
        b.corpus_root = PathBuf::from("moved");
        assert_eq!(a.config_hash("c"), b.config_hash("c"));
        assert_ne!(a.config_hash("c"), a.config_hash("d"));
    }

    #[test]
    fn downstream_settings_do_not_touch_upstream_hashes() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.assess.threshold_ratio = 0.2;
        assert_eq!(a.stage_hash(StageKey::Train, "c"), b.stage_hash(StageKey::Train, "c"));
        assert_ne!(a.stage_hash(StageKey::Assess, "c"), b.stage_hash(StageKey::Assess, "c"));
        let mut c = a.clone();
        c.seed = 8;
        assert_ne!(a.stage_hash(StageKey::Ingest, "c"), c.stage_hash(StageKey::Ingest, "c"));
    }

    #[test]
    fn seeds_differ_per_stage() {
        assert_ne!(derive_seed(7, "swc"), derive_seed(7, "roles"));
        assert_eq!(derive_seed(7, "swc"), derive_seed(7, "swc"));
    }

    #[test]
    fn partial_config_uses_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 3, "training": {"swc_epochs": 2}}"#).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.training.swc_epochs, 2);
        assert_eq!(c.dim, 64);
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 3}"#).is_err());
    }
}
