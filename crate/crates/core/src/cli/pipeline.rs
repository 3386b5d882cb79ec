//! Stage implementations behind the CLI verbs. Every artifact lands in the
//! output directory under a fixed name and records the hash of the
//! configuration that produced it.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, StageKey};
use crate::assessor::{
    assess_all, read_results_jsonl, results_to_csv_string, results_to_jsonl_string,
    AssessmentResult, BenchmarkSource,
};
use crate::corpus::{
    build_role_triplets, build_swc_triplets, load_corpus, sample_negative_queries,
    unroll_instances, Corpus, CorpusSummary, PatternInstance, QueryPair, Triplet,
};
use crate::embedder::{
    embed_corpus, fine_tune_roles, fine_tune_swc, params_io, sha256_hex, Embedder,
    EmbeddingStore, HashedBagEmbedder, Hyperparameters, TrainableEmbedder, TrainingData,
    TrainingLog,
};
use crate::error::{Error, Result};
use crate::evaluation::reference::{check_reference, reference_text, ReferenceCheck};
use crate::evaluation::{
    compare_embedders, confusion, metrics, rank_distribution, split_by_polarity,
    ComparisonReport, MetricsReport, RankDistribution,
};
use crate::io::{read_json, read_jsonl_with_header, to_jsonl_string, write_json};
use crate::tokenizer::{lex_c, mask, train_bpe, EncodedProgram, SubwordVocabulary};

pub const CORPUS_SUMMARY: &str = "corpus_summary.json";
pub const QUERIES: &str = "queries.jsonl";
pub const SWC_TRIPLETS: &str = "swc_triplets.jsonl";
pub const ROLE_TRIPLETS: &str = "role_triplets.jsonl";
pub const VOCAB: &str = "vocab.json";
pub const ENCODED: &str = "encoded.jsonl";
pub const COMPARISON_JSON: &str = "comparison.json";
pub const COMPARISON_TXT: &str = "comparison.txt";

/// Embedder variants, in the order they are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Baseline,
    Swc,
    Roles,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Baseline, Stage::Swc, Stage::Roles];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Baseline => "baseline",
            Stage::Swc => "swc",
            Stage::Roles => "roles",
        }
    }

    pub fn embedder_file(self) -> String {
        format!("embedder_{}.json", self.name())
    }
    pub fn params_file(self) -> String {
        format!("embedder_{}.bin", self.name())
    }
    pub fn embeddings_file(self) -> String {
        format!("embeddings_{}.jsonl", self.name())
    }
    pub fn results_file(self) -> String {
        format!("results_{}.jsonl", self.name())
    }
    pub fn results_csv(self) -> String {
        format!("results_{}.csv", self.name())
    }
    pub fn confusion_file(self) -> String {
        format!("confusion_{}.csv", self.name())
    }
    pub fn metrics_file(self) -> String {
        format!("metrics_{}.json", self.name())
    }
    pub fn metrics_text(self) -> String {
        format!("metrics_{}.txt", self.name())
    }
    pub fn histogram_file(self) -> String {
        format!("histogram_{}.json", self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub config_hash: String,
    pub corpus_digest: String,
    pub query_set_id: String,
    pub positives: usize,
    pub negatives: usize,
    pub swc_triplets: usize,
    pub role_triplets: usize,
    pub summary: CorpusSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueriesHeader {
    pub config_hash: String,
    pub query_set_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabArtifact {
    pub config_hash: String,
    pub vocabulary: SubwordVocabulary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    HashedBag {
        dim: usize,
        salt: u64,
    },
    Trainable {
        vocab_len: usize,
        dim: usize,
        hyperparameters: Hyperparameters,
        params_file: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderArtifact {
    pub config_hash: String,
    pub stage: Stage,
    pub fingerprint: String,
    pub spec: EmbedderSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_log: Option<TrainingLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsHeader {
    pub config_hash: String,
    pub stage: Stage,
    pub store_fingerprint: String,
    pub query_set_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsArtifact {
    pub config_hash: String,
    #[serde(flatten)]
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramArtifact {
    pub config_hash: String,
    #[serde(flatten)]
    pub distribution: RankDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonArtifact {
    pub config_hash: String,
    pub comparison: ComparisonReport,
    /// Reference metrics recomputed from their confusion counts.
    pub reference_check: Vec<ReferenceCheck>,
}

impl ComparisonArtifact {
    pub fn to_text(&self) -> String {
        format!(
            "config: {}\n\n{}\nreference recomputation\n\n{}",
            self.config_hash,
            self.comparison.to_text(),
            reference_text(&self.reference_check)
        )
    }
}

enum LoadedEmbedder {
    Hashed(HashedBagEmbedder<f64>),
    Trainable(TrainableEmbedder<f64>),
}

impl LoadedEmbedder {
    fn as_dyn(&self) -> &dyn Embedder<f64> {
        match self {
            LoadedEmbedder::Hashed(e) => e,
            LoadedEmbedder::Trainable(e) => e,
        }
    }
}

/// Content digest of a corpus: program ids and texts, components and
/// instances.
pub fn corpus_digest(corpus: &Corpus) -> String {
    let mut parts: Vec<Vec<u8>> = Vec::new();
    for p in corpus.programs() {
        parts.push(p.id.as_bytes().to_vec());
        parts.push(p.text.as_bytes().to_vec());
    }
    parts.push(serde_json::to_vec(corpus.components()).expect("serializable"));
    parts.push(serde_json::to_vec(corpus.instances()).expect("serializable"));
    let refs: Vec<&[u8]> = parts.iter().map(Vec::as_slice).collect();
    sha256_hex(&refs)
}

pub struct Pipeline {
    config: RunConfig,
    corpus: Corpus,
    digest: String,
}

impl Pipeline {
    pub fn open(config: RunConfig) -> Result<Self> {
        let corpus = load_corpus(&config.corpus_root)?;
        let digest = corpus_digest(&corpus);
        Ok(Pipeline {
            config,
            corpus,
            digest,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }

    pub fn hash(&self, stage: StageKey) -> String {
        self.config.stage_hash(stage, &self.digest)
    }

    fn ensure_out_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.config.out_dir).map_err(|e| Error::io(&self.config.out_dir, e))
    }

    fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let path = self.out(name);
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))
    }

    fn upstream(&self, name: &str) -> Result<PathBuf> {
        let path = self.out(name);
        if !path.is_file() {
            return Err(Error::MissingStage(path.display().to_string()));
        }
        Ok(path)
    }

    fn check_hash(&self, name: &str, found: &str, stage: StageKey) -> Result<()> {
        let expected = self.hash(stage);
        if found != expected {
            return Err(Error::StaleArtifact {
                artifact: name.to_owned(),
                expected,
                found: found.to_owned(),
            });
        }
        Ok(())
    }

    fn read_header_jsonl<T: serde::de::DeserializeOwned>(
        &self,
        name: &str,
        stage: StageKey,
    ) -> Result<Vec<T>> {
        let (header, items) = read_jsonl_with_header::<Header, T>(&self.upstream(name)?, true)?;
        self.check_hash(name, &header.expect("header").config_hash, stage)?;
        Ok(items)
    }

    // ingest

    pub fn ingest(&self) -> Result<IngestSummary> {
        self.ensure_out_dir()?;
        let hash = self.hash(StageKey::Ingest);
        let positives = unroll_instances(&self.corpus, self.corpus.instances())?;
        let n_neg = self.config.negatives.unwrap_or(positives.len());
        let negatives = sample_negative_queries(
            &self.corpus,
            self.corpus.instances(),
            n_neg,
            self.config.stage_seed("negatives"),
        )?;
        let queries: Vec<QueryPair> = positives.into_iter().chain(negatives).collect();
        let body = to_jsonl_string::<(), _>(None, &queries)?;
        let query_set_id = sha256_hex(&[body.as_bytes()]);
        let header = QueriesHeader {
            config_hash: hash.clone(),
            query_set_id: query_set_id.clone(),
        };
        self.write_text(QUERIES, &to_jsonl_string(Some(&header), &queries)?)?;

        let t = &self.config.training;
        let swc = if t.swc_triplets > 0 {
            build_swc_triplets(&self.corpus, t.swc_triplets, self.config.stage_seed("swc_triplets"))?
        } else {
            Vec::new()
        };
        let roles = if t.role_triplets > 0 {
            build_role_triplets(&self.corpus, t.role_triplets, self.config.stage_seed("role_triplets"))?
        } else {
            Vec::new()
        };
        let h = Header { config_hash: hash.clone() };
        self.write_text(SWC_TRIPLETS, &to_jsonl_string(Some(&h), &swc)?)?;
        self.write_text(ROLE_TRIPLETS, &to_jsonl_string(Some(&h), &roles)?)?;

        let summary = IngestSummary {
            config_hash: hash,
            corpus_digest: self.digest.clone(),
            query_set_id,
            positives: queries.iter().filter(|q| q.origin_instance.is_some()).count(),
            negatives: n_neg,
            swc_triplets: swc.len(),
            role_triplets: roles.len(),
            summary: self.corpus.summary(),
        };
        write_json(&self.out(CORPUS_SUMMARY), &summary)?;
        Ok(summary)
    }

    fn queries(&self) -> Result<(String, Vec<QueryPair>)> {
        let (header, items) =
            read_jsonl_with_header::<QueriesHeader, QueryPair>(&self.upstream(QUERIES)?, true)?;
        let header = header.expect("header");
        self.check_hash(QUERIES, &header.config_hash, StageKey::Ingest)?;
        Ok((header.query_set_id, items))
    }

    // vocabulary

    pub fn train_vocab(&self) -> Result<SubwordVocabulary> {
        self.ensure_out_dir()?;
        let hash = self.hash(StageKey::Vocab);
        let streams: Vec<_> = self.corpus.programs().iter().map(|p| lex_c(&p.text)).collect();
        let vocab = train_bpe(&streams, self.config.vocab_size)?;
        let encoded: Vec<EncodedProgram> = self
            .corpus
            .programs()
            .iter()
            .zip(&streams)
            .map(|(p, s)| vocab.encode(&p.id, s, self.config.max_len))
            .collect();
        write_json(
            &self.out(VOCAB),
            &VocabArtifact {
                config_hash: hash.clone(),
                vocabulary: vocab.clone(),
            },
        )?;
        self.write_text(
            ENCODED,
            &to_jsonl_string(Some(&Header { config_hash: hash }), &encoded)?,
        )?;
        Ok(vocab)
    }

    fn vocab(&self) -> Result<SubwordVocabulary> {
        let a: VocabArtifact = read_json(&self.upstream(VOCAB)?)?;
        self.check_hash(VOCAB, &a.config_hash, StageKey::Vocab)?;
        Ok(a.vocabulary)
    }

    fn encoded(&self) -> Result<Vec<EncodedProgram>> {
        self.read_header_jsonl(ENCODED, StageKey::Vocab)
    }

    // training

    fn training_data(&self, encoded: Vec<EncodedProgram>, vocab: &SubwordVocabulary) -> Result<TrainingData> {
        let seed = self.config.stage_seed("mask");
        let mut masked = Vec::new();
        for (i, e) in encoded.iter().enumerate() {
            match mask(e, vocab.special_ids(), self.config.mask_fraction, seed.wrapping_add(i as u64)) {
                Ok(m) => masked.push(m),
                Err(Error::NoMaskablePosition(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(TrainingData::new(encoded, masked))
    }

    fn save_trainable(
        &self,
        stage: Stage,
        model: &TrainableEmbedder<f64>,
        log: TrainingLog,
    ) -> Result<EmbedderArtifact> {
        let bytes = params_io::to_bytes(model);
        // the stored form is f32; fingerprint what will be reloaded
        let reloaded: TrainableEmbedder<f64> =
            params_io::from_bytes(&bytes, model.hyper.clone(), &stage.params_file())?;
        let path = self.out(&stage.params_file());
        std::fs::write(&path, &bytes).map_err(|e| Error::io(path, e))?;
        let artifact = EmbedderArtifact {
            config_hash: self.hash(StageKey::Train),
            stage,
            fingerprint: reloaded.fingerprint(),
            spec: EmbedderSpec::Trainable {
                vocab_len: model.vocab_len(),
                dim: Embedder::<f64>::dim(model),
                hyperparameters: model.hyper.clone(),
                params_file: stage.params_file(),
            },
            training_log: Some(log),
        };
        write_json(&self.out(&stage.embedder_file()), &artifact)?;
        Ok(artifact)
    }

    pub fn train(&self, stage: Stage) -> Result<EmbedderArtifact> {
        self.ensure_out_dir()?;
        let t = &self.config.training;
        match stage {
            Stage::Baseline => {
                let e = HashedBagEmbedder::<f64>::new(self.config.dim, self.config.baseline_salt);
                let artifact = EmbedderArtifact {
                    config_hash: self.hash(StageKey::Train),
                    stage,
                    fingerprint: e.fingerprint(),
                    spec: EmbedderSpec::HashedBag {
                        dim: e.dim,
                        salt: e.salt,
                    },
                    training_log: None,
                };
                write_json(&self.out(&stage.embedder_file()), &artifact)?;
                Ok(artifact)
            }
            Stage::Swc => {
                let vocab = self.vocab()?;
                let data = self.training_data(self.encoded()?, &vocab)?;
                let triplets: Vec<Triplet> = self.read_header_jsonl(SWC_TRIPLETS, StageKey::Ingest)?;
                let hyper = t.hyperparameters(t.swc_epochs, self.config.stage_seed("swc"));
                let init = TrainableEmbedder::new(vocab.len(), self.config.dim, hyper);
                let (model, log) = fine_tune_swc(&init, &triplets, &data, t.swc_epochs)?;
                self.save_trainable(stage, &model, log)
            }
            Stage::Roles => {
                let vocab = self.vocab()?;
                let data = self.training_data(self.encoded()?, &vocab)?;
                let triplets: Vec<Triplet> = self.read_header_jsonl(ROLE_TRIPLETS, StageKey::Ingest)?;
                let LoadedEmbedder::Trainable(mut start) = self.load_embedder(Stage::Swc)? else {
                    return Err(Error::MissingStage("trainable swc embedder".into()));
                };
                start.hyper = t.hyperparameters(t.roles_epochs, self.config.stage_seed("roles"));
                start.hyper.learning_rate = t.roles_learning_rate.unwrap_or(t.learning_rate);
                let (model, log) = fine_tune_roles(&start, &triplets, &data, t.roles_epochs)?;
                self.save_trainable(stage, &model, log)
            }
        }
    }

    fn load_embedder(&self, stage: Stage) -> Result<LoadedEmbedder> {
        let name = stage.embedder_file();
        let a: EmbedderArtifact = read_json(&self.upstream(&name)?)?;
        self.check_hash(&name, &a.config_hash, StageKey::Train)?;
        let loaded = match a.spec {
            EmbedderSpec::HashedBag { dim, salt } => LoadedEmbedder::Hashed(HashedBagEmbedder::new(dim, salt)),
            EmbedderSpec::Trainable {
                hyperparameters,
                params_file,
                ..
            } => LoadedEmbedder::Trainable(params_io::read(&self.upstream(&params_file)?, hyperparameters)?),
        };
        let fp = loaded.as_dyn().fingerprint();
        if fp != a.fingerprint {
            return Err(Error::StaleArtifact {
                artifact: stage.params_file(),
                expected: a.fingerprint,
                found: fp,
            });
        }
        Ok(loaded)
    }

    // embedding

    pub fn embed(&self, stage: Stage) -> Result<EmbeddingStore<f64>> {
        self.ensure_out_dir()?;
        let embedder = self.load_embedder(stage)?;
        let encoded = self.encoded()?;
        let store = embed_corpus(&encoded, embedder.as_dyn())?;
        store.write_jsonl(&self.out(&stage.embeddings_file()), Some(&self.hash(StageKey::Train)))?;
        Ok(store)
    }

    fn store(&self, stage: Stage) -> Result<EmbeddingStore<f64>> {
        let name = stage.embeddings_file();
        let (store, header) = EmbeddingStore::read_jsonl(&self.upstream(&name)?)?;
        self.check_hash(&name, header.config_hash.as_deref().unwrap_or(""), StageKey::Train)?;
        Ok(store)
    }

    // assessment

    fn golden(&self) -> Result<Vec<PatternInstance>> {
        self.config
            .golden_instances
            .iter()
            .map(|id| {
                self.corpus
                    .instance(id)
                    .cloned()
                    .ok_or_else(|| Error::UnknownInstance(id.clone()))
            })
            .collect()
    }

    pub fn assess(&self, stage: Stage) -> Result<Vec<AssessmentResult>> {
        self.ensure_out_dir()?;
        let (query_set_id, queries) = self.queries()?;
        let store = self.store(stage)?;
        let golden = self.golden()?;
        let source = if golden.is_empty() {
            BenchmarkSource::LeaveOut(self.config.leave_out)
        } else {
            BenchmarkSource::Golden(&golden)
        };
        let results = assess_all(&queries, &self.corpus, &store, &source, &self.config.assess)?;
        let header = ResultsHeader {
            config_hash: self.hash(StageKey::Assess),
            stage,
            store_fingerprint: store.fingerprint().to_owned(),
            query_set_id,
        };
        self.write_text(&stage.results_file(), &results_to_jsonl_string(Some(&header), &results)?)?;
        self.write_text(&stage.results_csv(), &results_to_csv_string(&results)?)?;
        Ok(results)
    }

    // evaluation

    pub fn evaluate(&self, stage: Stage) -> Result<MetricsReport> {
        self.ensure_out_dir()?;
        let name = stage.results_file();
        let (header, results) = read_results_jsonl::<ResultsHeader>(&self.upstream(&name)?, true)?;
        let header = header.expect("header");
        self.check_hash(&name, &header.config_hash, StageKey::Assess)?;
        let hash = self.hash(StageKey::Assess);

        let (pos, neg) = split_by_polarity(&results);
        let cm = confusion(&pos, &neg)?;
        let report = metrics(&cm, stage.name(), &header.query_set_id)?;
        let hist = rank_distribution(&results, self.config.assess.boundaries)?;

        self.write_text(
            &stage.confusion_file(),
            &format!(
                "config_hash,tp,fn,fp,tn\n{},{},{},{},{}\n",
                hash, cm.tp, cm.fn_, cm.fp, cm.tn
            ),
        )?;
        let artifact = MetricsArtifact {
            config_hash: hash.clone(),
            report: report.clone(),
        };
        write_json(&self.out(&stage.metrics_file()), &artifact)?;
        self.write_text(
            &stage.metrics_text(),
            &format!("config: {hash}\n{}", report.to_text()),
        )?;
        write_json(
            &self.out(&stage.histogram_file()),
            &HistogramArtifact {
                config_hash: hash,
                distribution: hist,
            },
        )?;
        Ok(report)
    }

    // report

    pub fn report(&self, stages: &[Stage]) -> Result<ComparisonArtifact> {
        self.ensure_out_dir()?;
        let mut reports = Vec::with_capacity(stages.len());
        for s in stages {
            let name = s.metrics_file();
            let a: MetricsArtifact = read_json(&self.upstream(&name)?)?;
            self.check_hash(&name, &a.config_hash, StageKey::Assess)?;
            reports.push(a.report);
        }
        let comparison = compare_embedders(&reports)?;
        let reference = check_reference()?;
        let artifact = ComparisonArtifact {
            config_hash: self.hash(StageKey::Assess),
            comparison,
            reference_check: reference,
        };
        write_json(&self.out(COMPARISON_JSON), &artifact)?;
        self.write_text(COMPARISON_TXT, &artifact.to_text())?;
        Ok(artifact)
    }

    /// Every stage in order.
    pub fn run_all(&self) -> Result<ComparisonArtifact> {
        self.ingest()?;
        self.train_vocab()?;
        for s in Stage::ALL {
            self.train(s)?;
        }
        for s in Stage::ALL {
            self.embed(s)?;
            self.assess(s)?;
            self.evaluate(s)?;
        }
        self.report(&Stage::ALL)
    }
}

/// Names of every file `run_all` writes.
pub fn artifact_names() -> Vec<String> {
    let mut names: Vec<String> = [CORPUS_SUMMARY, QUERIES, SWC_TRIPLETS, ROLE_TRIPLETS, VOCAB, ENCODED]
        .iter()
        .map(|s| (*s).to_owned())
        .collect();
    for s in Stage::ALL {
        names.push(s.embedder_file());
        if s != Stage::Baseline {
            names.push(s.params_file());
        }
        names.extend([
            s.embeddings_file(),
            s.results_file(),
            s.results_csv(),
            s.confusion_file(),
            s.metrics_file(),
            s.metrics_text(),
            s.histogram_file(),
        ]);
    }
    names.extend([COMPARISON_JSON.to_owned(), COMPARISON_TXT.to_owned()]);
    names
}
