//! Skip-gram word embeddings with negative sampling, cosine queries and
//! anchor-based token screening.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::sync::atomic::{AtomicU32, Ordering};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::EmbedError;

pub const MAGIC: &[u8; 8] = b"CAPDEMB\0";
pub const FORMAT_VERSION: u32 = 1;
pub const MERGED_PHRASE: &str = "capacity_discipline";
pub const DEFAULT_ANCHORS: [&str; 3] = [MERGED_PHRASE, "demand", "gdp"];

/// Replaces each adjacent occurrence of `phrase` with the single token `merged`.
pub fn merge_phrase<S: AsRef<str>>(tokens: &[S], phrase: &[&str], merged: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        if !phrase.is_empty()
            && i + phrase.len() <= tokens.len()
            && tokens[i..i + phrase.len()].iter().zip(phrase).all(|(t, p)| t.as_ref() == *p)
        {
            out.push(merged.to_string());
            i += phrase.len();
        } else {
            out.push(tokens[i].as_ref().to_string());
            i += 1;
        }
    }
    out
}

/// u·v / (‖u‖‖v‖), clamped to [−1, 1].
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbedError> {
    if u.len() != v.len() {
        return Err(EmbedError::LengthMismatch(u.len(), v.len()));
    }
    let (mut uv, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        uv += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok((uv / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub dims: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial learning rate, decayed linearly to `lr * 1e-4`.
    pub lr: f32,
    pub min_count: usize,
    /// Frequency subsampling threshold; 0 disables subsampling.
    pub subsample: f64,
    pub seed: u64,
    /// 1 gives deterministic training; more workers update the shared
    /// parameters without synchronization.
    pub workers: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            dims: 300,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            min_count: 5,
            subsample: 1e-4,
            seed: 1,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vocab: Vec<String>,
    index: HashMap<String, usize>,
    pub dims: usize,
    /// Row-major |V| × dims.
    pub vectors: Vec<f32>,
    pub config: Option<TrainingConfig>,
}

/// f32 stored in an `AtomicU32`, read and written with relaxed ordering so
/// workers can update shared rows without locks.
struct SharedMatrix(Vec<AtomicU32>);

impl SharedMatrix {
    fn new(values: impl Iterator<Item = f32>) -> Self {
        SharedMatrix(values.map(|v| AtomicU32::new(v.to_bits())).collect())
    }

    #[inline]
    fn get(&self, i: usize) -> f32 {
        f32::from_bits(self.0[i].load(Ordering::Relaxed))
    }

    #[inline]
    fn set(&self, i: usize, v: f32) {
        self.0[i].store(v.to_bits(), Ordering::Relaxed);
    }

    fn into_vec(self) -> Vec<f32> {
        self.0.into_iter().map(|a| f32::from_bits(a.into_inner())).collect()
    }
}

fn sigmoid(x: f32) -> f32 {
    if x > 8.0 {
        1.0
    } else if x < -8.0 {
        0.0
    } else {
        1.0 / (1.0 + (-x).exp())
    }
}

impl Embedding {
    pub fn new(vocab: Vec<String>, dims: usize, vectors: Vec<f32>) -> Result<Self, EmbedError> {
        if dims < 2 {
            return Err(EmbedError::Dimension(dims));
        }
        if vectors.len() != vocab.len() * dims {
            return Err(EmbedError::LengthMismatch(vectors.len(), vocab.len() * dims));
        }
        let index = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Embedding {
            vocab,
            index,
            dims,
            vectors,
            config: None,
        })
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn vector(&self, token: &str) -> Option<&[f32]> {
        self.index
            .get(token)
            .map(|&i| &self.vectors[i * self.dims..(i + 1) * self.dims])
    }

    fn vector_f64(&self, token: &str) -> Result<Vec<f64>, EmbedError> {
        self.vector(token)
            .map(|v| v.iter().map(|&x| x as f64).collect())
            .ok_or_else(|| EmbedError::MissingToken(token.to_string()))
    }

    pub fn similarity(&self, a: &str, b: &str) -> Result<f64, EmbedError> {
        cosine(&self.vector_f64(a)?, &self.vector_f64(b)?)
    }

    /// Trains skip-gram with negative sampling on `corpus` (one lemma
    /// sequence per sentence or document).
    pub fn train<S: AsRef<str> + Sync>(corpus: &[Vec<S>], cfg: &TrainingConfig) -> Result<Self, EmbedError> {
        if cfg.dims < 2 {
            return Err(EmbedError::Dimension(cfg.dims));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for s in corpus {
            for t in s {
                *counts.entry(t.as_ref()).or_default() += 1;
            }
        }
        let mut vocab: Vec<(&str, usize)> = counts.into_iter().filter(|(_, c)| *c >= cfg.min_count).collect();
        if vocab.is_empty() {
            return Err(EmbedError::EmptyVocabulary(cfg.min_count));
        }
        vocab.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let index: HashMap<&str, u32> = vocab.iter().enumerate().map(|(i, (t, _))| (*t, i as u32)).collect();
        let total: usize = vocab.iter().map(|(_, c)| c).sum();
        let keep_prob: Vec<f64> = vocab
            .iter()
            .map(|&(_, c)| {
                if cfg.subsample <= 0.0 {
                    return 1.0;
                }
                let f = c as f64 / total as f64;
                (((f / cfg.subsample).sqrt() + 1.0) * cfg.subsample / f).min(1.0)
            })
            .collect();
        let noise = WeightedIndex::new(vocab.iter().map(|&(_, c)| (c as f64).powf(0.75)))
            .map_err(|e| EmbedError::Format(e.to_string()))?;
        let sentences: Vec<Vec<u32>> = corpus
            .iter()
            .map(|s| s.iter().filter_map(|t| index.get(t.as_ref()).copied()).collect())
            .collect();

        let v = vocab.len();
        let n = cfg.dims;
        let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let w_in = SharedMatrix::new((0..v * n).map(|_| (init_rng.random::<f32>() - 0.5) / n as f32));
        let w_out = SharedMatrix::new(std::iter::repeat_n(0.0, v * n));

        let workers = cfg.workers.max(1);
        let planned = (total * cfg.epochs).max(1) as f64;
        let processed = std::sync::atomic::AtomicUsize::new(0);
        let run_worker = |w: usize| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(w as u64 + 1);
            let mut grad = vec![0.0f32; n];
            for _ in 0..cfg.epochs {
                for s in sentences.iter().skip(w).step_by(workers) {
                    let done = processed.fetch_add(s.len(), Ordering::Relaxed) as f64;
                    let lr = (cfg.lr * (1.0 - (done / planned) as f32)).max(cfg.lr * 1e-4);
                    let kept: Vec<u32> = s
                        .iter()
                        .copied()
                        .filter(|&t| keep_prob[t as usize] >= 1.0 || rng.random::<f64>() < keep_prob[t as usize])
                        .collect();
                    for (pos, &center) in kept.iter().enumerate() {
                        let b = rng.random_range(1..=cfg.window.max(1));
                        let lo = pos.saturating_sub(b);
                        let hi = (pos + b + 1).min(kept.len());
                        for (cpos, &ctx) in kept.iter().enumerate().take(hi).skip(lo) {
                            if cpos == pos {
                                continue;
                            }
                            let row_in = ctx as usize * n;
                            grad.iter_mut().for_each(|g| *g = 0.0);
                            for k in 0..=cfg.negatives {
                                let (target, label) = if k == 0 {
                                    (center as usize, 1.0)
                                } else {
                                    let t = noise.sample(&mut rng);
                                    if t == center as usize {
                                        continue;
                                    }
                                    (t, 0.0)
                                };
                                let row_out = target * n;
                                let mut dot = 0.0f32;
                                for d in 0..n {
                                    dot += w_in.get(row_in + d) * w_out.get(row_out + d);
                                }
                                let g = (label - sigmoid(dot)) * lr;
                                for (d, gd) in grad.iter_mut().enumerate() {
                                    *gd += g * w_out.get(row_out + d);
                                    w_out.set(row_out + d, w_out.get(row_out + d) + g * w_in.get(row_in + d));
                                }
                            }
                            for (d, gd) in grad.iter().enumerate() {
                                w_in.set(row_in + d, w_in.get(row_in + d) + gd);
                            }
                        }
                    }
                }
            }
        };
        if workers == 1 {
            run_worker(0);
        } else {
            (0..workers).into_par_iter().for_each(run_worker);
        }
        let mut emb = Embedding::new(
            vocab.iter().map(|(t, _)| t.to_string()).collect(),
            n,
            w_in.into_vec(),
        )?;
        emb.config = Some(*cfg);
        Ok(emb)
    }

    /// Binary layout: magic, version (u32), |V| (u64), N (u32), then per token
    /// a u32 byte length and UTF-8 bytes, then the |V|×N matrix as row-major
    /// little-endian f32. All integers little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.vocab.len() as u64).to_le_bytes())?;
        w.write_all(&(self.dims as u32).to_le_bytes())?;
        for t in &self.vocab {
            w.write_all(&(t.len() as u32).to_le_bytes())?;
            w.write_all(t.as_bytes())?;
        }
        for x in &self.vectors {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, EmbedError> {
        let io = |e: std::io::Error| EmbedError::Format(e.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(EmbedError::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4).map_err(io)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(EmbedError::Format(format!("unsupported version {version}")));
        }
        r.read_exact(&mut b8).map_err(io)?;
        let nv = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b4).map_err(io)?;
        let dims = u32::from_le_bytes(b4) as usize;
        let mut vocab = Vec::with_capacity(nv);
        for _ in 0..nv {
            r.read_exact(&mut b4).map_err(io)?;
            let mut buf = vec![0u8; u32::from_le_bytes(b4) as usize];
            r.read_exact(&mut buf).map_err(io)?;
            vocab.push(String::from_utf8(buf).map_err(|e| EmbedError::Format(e.to_string()))?);
        }
        let mut raw = vec![0u8; nv * dims * 4];
        r.read_exact(&mut raw).map_err(io)?;
        let vectors = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Embedding::new(vocab, dims, vectors)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenScreen {
    pub anchors: Vec<String>,
    pub d_lo: f64,
    pub d_hi: f64,
    pub cooccur_min: f64,
}

impl Default for TokenScreen {
    fn default() -> Self {
        TokenScreen {
            anchors: DEFAULT_ANCHORS.iter().map(|s| s.to_string()).collect(),
            d_lo: 0.55,
            d_hi: 0.95,
            cooccur_min: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenedToken {
    pub token: String,
    pub mean_similarity: f64,
    /// Cosine to each anchor, in anchor order.
    pub similarities: Vec<f64>,
    /// Share of reports containing the token that also contain every anchor.
    pub cooccurrence: f64,
}

/// Per-token report co-occurrence with the full anchor set.
pub fn report_cooccurrence(reports: &[BTreeSet<String>], anchors: &[String]) -> HashMap<String, f64> {
    let mut with_token: HashMap<&str, (usize, usize)> = HashMap::new();
    for r in reports {
        let all = anchors.iter().all(|a| r.contains(a));
        for t in r {
            let e = with_token.entry(t.as_str()).or_default();
            e.0 += 1;
            if all {
                e.1 += 1;
            }
        }
    }
    with_token
        .into_iter()
        .map(|(t, (n, k))| (t.to_string(), k as f64 / n as f64))
        .collect()
}

/// Tokens within the similarity band of every anchor and co-occurring with
/// the anchors often enough, sorted by mean similarity (descending).
pub fn screen_tokens(
    emb: &Embedding,
    screen: &TokenScreen,
    cooccurrence: &HashMap<String, f64>,
) -> Result<Vec<ScreenedToken>, EmbedError> {
    if !(screen.d_lo <= screen.d_hi) {
        return Err(EmbedError::Bounds(screen.d_lo, screen.d_hi));
    }
    let anchors: Vec<Vec<f64>> = screen
        .anchors
        .iter()
        .map(|a| emb.vector_f64(a))
        .collect::<Result<_, _>>()?;
    let mut out: Vec<ScreenedToken> = emb
        .vocab
        .par_iter()
        .filter(|t| !screen.anchors.contains(t))
        .filter_map(|t| {
            let co = cooccurrence.get(t).copied().unwrap_or(0.0);
            if co < screen.cooccur_min {
                return None;
            }
            let v = emb.vector_f64(t).ok()?;
            let sims: Vec<f64> = anchors.iter().map(|a| cosine(&v, a)).collect::<Result<_, _>>().ok()?;
            sims.iter().all(|s| (screen.d_lo..=screen.d_hi).contains(s)).then(|| ScreenedToken {
                token: t.clone(),
                mean_similarity: sims.iter().sum::<f64>() / sims.len() as f64,
                similarities: sims,
                cooccurrence: co,
            })
        })
        .collect();
    out.sort_by(|a, b| b.mean_similarity.total_cmp(&a.mean_similarity).then(a.token.cmp(&b.token)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_values() {
        assert!((cosine(&[5.0, 0.0], &[-8.0, 8.0]).unwrap() + 0.707).abs() < 1e-3);
        assert!((cosine(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[0.0, 1.0]), Err(EmbedError::ZeroVector));
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn phrase_merge() {
        let t = merge_phrase(&["strong", "capacity", "discipline", "capacity"], &["capacity", "discipline"], MERGED_PHRASE);
        assert_eq!(t, vec!["strong", "capacity_discipline", "capacity"]);
    }

    #[test]
    fn single_token_corpus() {
        let corpus = vec![vec!["fleet"; 20]];
        let cfg = TrainingConfig {
            dims: 8,
            min_count: 1,
            ..Default::default()
        };
        let emb = Embedding::train(&corpus, &cfg).unwrap();
        assert_eq!(emb.len(), 1);
        assert!(emb.vectors.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn empty_vocabulary() {
        let corpus = vec![vec!["a", "b"]];
        assert_eq!(
            Embedding::train(&corpus, &TrainingConfig::default()),
            Err(EmbedError::EmptyVocabulary(5))
        );
    }

    #[test]
    fn binary_round_trip() {
        let emb = Embedding::new(vec!["a".into(), "ßb".into()], 2, vec![1.0, -2.5, 0.25, 3.0]).unwrap();
        let mut buf = Vec::new();
        emb.write_to(&mut buf).unwrap();
        let back = Embedding::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, emb);
        assert!(Embedding::read_from(&buf[..10]).is_err());
    }

    #[test]
    fn deterministic_single_worker() {
        let corpus: Vec<Vec<String>> = (0..50)
            .map(|i| (0..12).map(|j| format!("w{}", (i * 7 + j * 3) % 15)).collect())
            .collect();
        let cfg = TrainingConfig {
            dims: 10,
            min_count: 1,
            epochs: 2,
            ..Default::default()
        };
        let a = Embedding::train(&corpus, &cfg).unwrap();
        let b = Embedding::train(&corpus, &cfg).unwrap();
        assert_eq!(a.vectors, b.vectors);
    }
}
