//! Tabular sentences and a skip-gram embedding of bin tokens.
//!
//! Every row yields a tuple-sentence of its tokens; every column yields
//! column-sentences, its tokens in row order cut into chunks. A skip-gram
//! model with negative sampling is trained on the sentences with the context
//! window spanning the whole sentence.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binning::{BinId, BinnedTable};
use crate::error::{Error, Result};

pub const DEFAULT_CORPUS_CAP: usize = 100_000;
pub const DEFAULT_CHUNK: usize = 1000;

const MODEL_MAGIC: &[u8; 8] = b"SUBTABEM";
const MODEL_VERSION: u32 = 1;
const MAX_EXP: f32 = 6.0;

static TRAINING_CALLS: AtomicU64 = AtomicU64::new(0);

/// Number of [`train_embedding`] calls made by this process.
pub fn training_calls() -> u64 {
    TRAINING_CALLS.load(Ordering::SeqCst)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KindCounts {
    pub tuple_sentences: usize,
    pub column_sentence_chunks: usize,
}

/// Sentences of token ids over the vocabulary of a binned table.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceCorpus {
    vocab: Vec<String>,
    tokens: Vec<u32>,
    offsets: Vec<usize>,
    pub kind_counts: KindCounts,
    pub cap: usize,
}

impl SentenceCorpus {
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sentence(&self, i: usize) -> &[u32] {
        &self.tokens[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn sentence_tokens(&self, i: usize) -> Vec<&str> {
        self.sentence(i).iter().map(|&t| self.vocab[t as usize].as_str()).collect()
    }

    /// Every token of the source table, including ones the sampled
    /// sentences miss.
    pub fn vocabulary(&self) -> &[String] {
        &self.vocab
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for i in 0..self.len() {
            for &t in self.sentence(i) {
                h.update(self.vocab[t as usize].as_bytes());
                h.update([0x1f]);
            }
            h.update([0x1e]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Builds tuple- and column-sentences, sampling down to `cap` sentences.
pub fn build_corpus(bt: &BinnedTable, cap: usize, chunk: usize, seed: u64) -> Result<SentenceCorpus> {
    if bt.n_rows() == 0 || bt.n_cols() == 0 {
        return Err(Error::EmptyTable);
    }
    if cap == 0 || chunk == 0 {
        return Err(Error::Config("corpus cap and chunk size must be positive".into()));
    }
    let (n, m) = (bt.n_rows(), bt.n_cols());
    // token id of (column, bin), for bins that occur
    let mut base = Vec::with_capacity(m);
    let mut vocab = Vec::new();
    let mut ids: Vec<Vec<u32>> = Vec::with_capacity(m);
    for c in 0..m {
        let mut present = vec![false; bt.n_bins(c)];
        for &b in bt.column_bins(c) {
            present[b as usize] = true;
        }
        base.push(vocab.len());
        let mut col_ids = vec![u32::MAX; bt.n_bins(c)];
        for b in (0..present.len()).filter(|&b| present[b]) {
            col_ids[b] = vocab.len() as u32;
            vocab.push(bt.token(c, b as BinId));
        }
        ids.push(col_ids);
    }

    let chunks_per_col = n.div_ceil(chunk);
    let total = n + m * chunks_per_col;
    let chosen: Vec<usize> = if total > cap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, total, cap).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..total).collect()
    };

    let mut tokens = Vec::new();
    let mut offsets = vec![0];
    let mut kinds = KindCounts::default();
    for &s in &chosen {
        if s < n {
            tokens.extend((0..m).map(|c| ids[c][bt.bin(s, c) as usize]));
            kinds.tuple_sentences += 1;
        } else {
            let c = (s - n) / chunks_per_col;
            let k = (s - n) % chunks_per_col;
            let bins = bt.column_bins(c);
            let end = ((k + 1) * chunk).min(n);
            tokens.extend(bins[k * chunk..end].iter().map(|&b| ids[c][b as usize]));
            kinds.column_sentence_chunks += 1;
        }
        offsets.push(tokens.len());
    }
    Ok(SentenceCorpus { vocab, tokens, offsets, kind_counts: kinds, cap })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct TrainParams {
    pub dim: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub learning_rate: f32,
    pub seed: u64,
    /// Contexts sampled per center token in sentences longer than this;
    /// shorter sentences use every other token. 0 disables the cap.
    pub max_contexts: usize,
    /// Frequent-token down-sampling threshold; 0 disables it.
    pub subsample: f64,
    /// Shards trained in parallel and averaged after each round. With 1 the
    /// run is sequential and bit-reproducible.
    pub workers: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            dim: 64,
            epochs: 5,
            negatives: 5,
            learning_rate: 0.025,
            seed: 42,
            max_contexts: 16,
            subsample: 0.0,
            workers: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainingMeta {
    pub params: TrainParams,
    pub corpus_hash: String,
    pub sentences: usize,
    pub kind_counts: KindCounts,
    /// Table tokens that got no vector because no sampled sentence holds them.
    pub missing_tokens: Vec<String>,
}

/// Token vectors of a trained model.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingModel {
    dim: usize,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    vectors: Vec<f32>,
    pub meta: TrainingMeta,
}

impl EmbeddingModel {
    fn new(dim: usize, vocab: Vec<String>, vectors: Vec<f32>, meta: TrainingMeta) -> Self {
        let index = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self { dim, vocab, index, vectors, meta }
    }

    /// A model from given vectors, `vocab.len() * dim` values row-major.
    pub fn from_vectors(dim: usize, vocab: Vec<String>, vectors: Vec<f32>) -> Self {
        assert_eq!(vocab.len() * dim, vectors.len());
        let meta = TrainingMeta {
            params: TrainParams { dim, ..Default::default() },
            corpus_hash: String::new(),
            sentences: 0,
            kind_counts: KindCounts::default(),
            missing_tokens: Vec::new(),
        };
        Self::new(dim, vocab, vectors, meta)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocab
    }

    pub fn vector(&self, token: &str) -> Result<&[f32]> {
        let i = *self.index.get(token).ok_or_else(|| Error::MissingVector(token.to_string()))? as usize;
        Ok(&self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn save(&self, bin_path: &Path, meta_path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(bin_path)?);
        f.write_all(MODEL_MAGIC)?;
        for x in [MODEL_VERSION, self.dim as u32, self.vocab.len() as u32] {
            f.write_all(&x.to_le_bytes())?;
        }
        for t in &self.vocab {
            f.write_all(&(t.len() as u32).to_le_bytes())?;
            f.write_all(t.as_bytes())?;
        }
        for x in &self.vectors {
            f.write_all(&x.to_le_bytes())?;
        }
        f.flush()?;
        std::fs::write(meta_path, serde_json::to_string_pretty(&self.meta)?)?;
        Ok(())
    }

    pub fn load(bin_path: &Path, meta_path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(bin_path)?);
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Format("not a model file".into()));
        }
        let mut word = || -> Result<u32> {
            let mut b = [0u8; 4];
            f.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let version = word()?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let dim = word()? as usize;
        let v = word()? as usize;
        let mut vocab = Vec::with_capacity(v);
        for _ in 0..v {
            let mut len = [0u8; 4];
            f.read_exact(&mut len)?;
            let mut buf = vec![0u8; u32::from_le_bytes(len) as usize];
            f.read_exact(&mut buf)?;
            vocab.push(String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))?);
        }
        let mut raw = vec![0u8; v * dim * 4];
        f.read_exact(&mut raw)?;
        let vectors = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let meta: TrainingMeta = serde_json::from_str(&std::fs::read_to_string(meta_path)?)?;
        Ok(Self::new(dim, vocab, vectors, meta))
    }
}

/// Vector of the token of `(column, bin)` in `bt`.
pub fn cell_vector<'m>(model: &'m EmbeddingModel, bt: &BinnedTable, col: usize, bin: BinId) -> Result<&'m [f32]> {
    model.vector(&bt.token(col, bin))
}

struct Weights {
    input: Vec<f32>,
    output: Vec<f32>,
}

struct Trainer<'a> {
    dim: usize,
    negatives: usize,
    max_contexts: usize,
    keep: &'a [f32],
    noise: &'a WeightedAliasIndex<f64>,
}

impl Trainer<'_> {
    /// Trains on one sentence; returns the number of center tokens processed.
    fn sentence(&self, w: &mut Weights, sent: &[u32], lr: f32, rng: &mut ChaCha8Rng, buf: &mut Vec<u32>, grad: &mut [f32]) -> usize {
        buf.clear();
        buf.extend(sent.iter().copied().filter(|&t| rng.random::<f32>() < self.keep[t as usize]));
        let len = buf.len();
        if len < 2 {
            return sent.len();
        }
        let d = self.dim;
        for i in 0..len {
            let center = buf[i] as usize;
            let sampled = self.max_contexts > 0 && len - 1 > self.max_contexts;
            let count = if sampled { self.max_contexts } else { len - 1 };
            for j in 0..count {
                let pos = if sampled {
                    let p = rng.random_range(0..len - 1);
                    if p >= i { p + 1 } else { p }
                } else if j >= i {
                    j + 1
                } else {
                    j
                };
                let context = buf[pos] as usize;
                grad.fill(0.0);
                let ci = &w.input[center * d..(center + 1) * d];
                for s in 0..=self.negatives {
                    let (target, label) = if s == 0 {
                        (context, 1.0)
                    } else {
                        let t = self.noise.sample(rng);
                        if t == context {
                            continue;
                        }
                        (t, 0.0)
                    };
                    let out = &mut w.output[target * d..(target + 1) * d];
                    let f = dot(ci, out);
                    let g = if f > MAX_EXP {
                        label - 1.0
                    } else if f < -MAX_EXP {
                        label
                    } else {
                        label - 1.0 / (1.0 + (-f).exp())
                    } * lr;
                    for ((gk, ok), &ck) in grad.iter_mut().zip(out.iter_mut()).zip(ci) {
                        *gk += g * *ok;
                        *ok += g * ck;
                    }
                }
                let ci = &mut w.input[center * d..(center + 1) * d];
                for (c, g) in ci.iter_mut().zip(grad.iter()) {
                    *c += g;
                }
            }
        }
        sent.len()
    }
}

/// Dot product with eight partial sums, which the compiler can vectorize.
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    acc.iter().sum::<f32>() + tail
}

/// Skip-gram with negative sampling over the corpus.
pub fn train_embedding(corpus: &SentenceCorpus, params: &TrainParams) -> Result<EmbeddingModel> {
    TRAINING_CALLS.fetch_add(1, Ordering::SeqCst);
    if params.dim == 0 || params.epochs == 0 {
        return Err(Error::Config("dimension and epochs must be positive".into()));
    }
    if corpus.is_empty() {
        return Err(Error::DegenerateVocabulary("empty corpus".into()));
    }
    // compact the vocabulary to tokens that occur in the corpus
    let mut counts = vec![0u64; corpus.vocab.len()];
    for &t in &corpus.tokens {
        counts[t as usize] += 1;
    }
    let used: Vec<usize> = (0..counts.len()).filter(|&t| counts[t] > 0).collect();
    if used.len() < 2 {
        return Err(Error::DegenerateVocabulary(format!("{} distinct token(s)", used.len())));
    }
    let mut remap = vec![u32::MAX; counts.len()];
    for (i, &t) in used.iter().enumerate() {
        remap[t] = i as u32;
    }
    let sentences: Vec<Vec<u32>> =
        (0..corpus.len()).map(|i| corpus.sentence(i).iter().map(|&t| remap[t as usize]).collect()).collect();
    let v = used.len();
    let freq: Vec<u64> = used.iter().map(|&t| counts[t]).collect();
    let total: u64 = freq.iter().sum();

    let keep: Vec<f32> = freq
        .iter()
        .map(|&c| {
            if params.subsample <= 0.0 {
                return 1.0;
            }
            let r = c as f64 / (params.subsample * total as f64);
            ((r.sqrt() + 1.0) / r).min(1.0) as f32
        })
        .collect();
    let noise = WeightedAliasIndex::new(freq.iter().map(|&c| (c as f64).powf(0.75)).collect())
        .map_err(|e| Error::DegenerateVocabulary(e.to_string()))?;

    let d = params.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut w = Weights {
        input: (0..v * d).map(|_| (rng.random::<f32>() - 0.5) / d as f32).collect(),
        output: vec![0.0; v * d],
    };
    let trainer = Trainer { dim: d, negatives: params.negatives, max_contexts: params.max_contexts, keep: &keep, noise: &noise };
    let work = (total * params.epochs as u64).max(1) as f64;
    let lr_at = |done: u64| (params.learning_rate * (1.0 - done as f64 / work) as f32).max(params.learning_rate * 1e-4);

    let mut order: Vec<usize> = (0..sentences.len()).collect();
    let mut done = 0u64;
    let workers = params.workers.max(1);
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        if workers == 1 {
            let mut buf = Vec::new();
            let mut grad = vec![0.0; d];
            for &s in &order {
                done += trainer.sentence(&mut w, &sentences[s], lr_at(done), &mut rng, &mut buf, &mut grad) as u64;
            }
        } else {
            // synchronous rounds: shards train copies that are then averaged
            let rounds = 8.min(order.len());
            let per_round = order.len().div_ceil(rounds);
            for (r, round) in order.chunks(per_round).enumerate() {
                let per_shard = round.len().div_ceil(workers);
                let lr = lr_at(done);
                let shards: Vec<(Weights, u64)> = round
                    .par_chunks(per_shard)
                    .enumerate()
                    .map(|(k, shard)| {
                        let mut local = Weights { input: w.input.clone(), output: w.output.clone() };
                        let mut srng = ChaCha8Rng::seed_from_u64(
                            params.seed ^ ((epoch as u64) << 40) ^ ((r as u64) << 20) ^ k as u64,
                        );
                        let (mut buf, mut grad) = (Vec::new(), vec![0.0; d]);
                        let mut count = 0;
                        for &s in shard {
                            count += trainer.sentence(&mut local, &sentences[s], lr, &mut srng, &mut buf, &mut grad) as u64;
                        }
                        (local, count)
                    })
                    .collect();
                let scale = 1.0 / shards.len() as f32;
                w.input.iter_mut().for_each(|x| *x = 0.0);
                w.output.iter_mut().for_each(|x| *x = 0.0);
                for (local, count) in &shards {
                    done += count;
                    for (a, b) in w.input.iter_mut().zip(&local.input) {
                        *a += b * scale;
                    }
                    for (a, b) in w.output.iter_mut().zip(&local.output) {
                        *a += b * scale;
                    }
                }
            }
        }
    }

    if w.input.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateVocabulary("training diverged".into()));
    }
    let vocab: Vec<String> = used.iter().map(|&t| corpus.vocab[t].clone()).collect();
    let missing_tokens: Vec<String> = (0..counts.len()).filter(|&t| counts[t] == 0).map(|t| corpus.vocab[t].clone()).collect();
    if !missing_tokens.is_empty() {
        tracing::warn!(missing = missing_tokens.len(), "some table tokens have no vector and will map to zero");
    }
    let meta = TrainingMeta {
        params: params.clone(),
        corpus_hash: corpus.hash(),
        sentences: corpus.len(),
        kind_counts: corpus.kind_counts,
        missing_tokens,
    };
    Ok(EmbeddingModel::new(d, vocab, w.input, meta))
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
