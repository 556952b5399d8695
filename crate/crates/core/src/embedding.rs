//! Skip-gram word vectors with negative sampling, and a plain-text vector
//! file format so externally trained models can be substituted.
//!
//! Training is single-threaded: for a fixed seed and corpus order two runs
//! produce bitwise-identical matrices.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{build_vocabulary, tokenize, ArticleSet, Vocabulary};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramParams {
    pub min_count: usize,
    pub dims: usize,
    /// Symmetric context radius in tokens.
    pub window: usize,
    pub negative_samples: usize,
    pub epochs: usize,
    pub initial_learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramParams {
    fn default() -> Self {
        SkipGramParams {
            min_count: 10,
            dims: 300,
            window: 10,
            negative_samples: 5,
            epochs: 5,
            initial_learning_rate: 0.025,
            seed: 1,
        }
    }
}

impl SkipGramParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("skip-gram {what}")));
        if self.min_count < 1 {
            return bad("min_count must be >= 1");
        }
        if self.dims < 1 {
            return bad("dims must be >= 1");
        }
        if self.window < 1 {
            return bad("window must be >= 1");
        }
        if self.negative_samples < 1 {
            return bad("negative_samples must be >= 1");
        }
        if self.epochs < 1 {
            return bad("epochs must be >= 1");
        }
        if !(self.initial_learning_rate > 0.0 && self.initial_learning_rate.is_finite()) {
            return bad("learning rate must be > 0");
        }
        Ok(())
    }
}

/// `m` terms, each with an `n`-dimensional vector stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectors {
    terms: Vec<String>,
    dims: usize,
    matrix: Vec<f64>,
    index: HashMap<String, usize>,
}

impl WordVectors {
    pub fn new(terms: Vec<String>, dims: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != terms.len() * dims {
            return Err(Error::ShapeMismatch(format!(
                "{} terms × {dims} dims needs {} values, got {}",
                terms.len(),
                terms.len() * dims,
                matrix.len()
            )));
        }
        if let Some(k) = matrix.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite component in vector of {:?}",
                terms[k / dims.max(1)]
            )));
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate term {t:?}")));
            }
        }
        Ok(WordVectors {
            terms,
            dims,
            matrix,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.dims..(i + 1) * self.dims]
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn lookup(&self, term: &str) -> Option<&[f64]> {
        self.index_of(term).map(|i| self.row(i))
    }

    /// Text format: a `m n` header, then `term v1 ... vn` per line with eight
    /// significant digits.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "{} {}", self.len(), self.dims).map_err(io)?;
        for (i, t) in self.terms.iter().enumerate() {
            write!(w, "{t}").map_err(io)?;
            for x in self.row(i) {
                write!(w, " {x:.7e}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or(Error::Malformed {
                line: 1,
                message: "missing `m n` header".into(),
            })?
            .map_err(|e| Error::io(path, e))?;
        let parse_usize = |s: Option<&str>| s.and_then(|x| x.parse::<usize>().ok());
        let mut head = header.split_whitespace();
        let (m, n) = match (parse_usize(head.next()), parse_usize(head.next()), head.next()) {
            (Some(m), Some(n), None) => (m, n),
            _ => {
                return Err(Error::Malformed {
                    line: 1,
                    message: format!("bad header {header:?}"),
                })
            }
        };
        let mut terms = Vec::with_capacity(m);
        let mut matrix = Vec::with_capacity(m * n);
        for (k, line) in lines.enumerate() {
            let line_no = k + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let term = fields.next().expect("non-empty line");
            let values = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Malformed {
                    line: line_no,
                    message: e.to_string(),
                })?;
            if values.len() != n {
                return Err(Error::DimensionMismatch {
                    line: line_no,
                    expected: n,
                    found: values.len(),
                });
            }
            terms.push(term.to_string());
            matrix.extend(values);
        }
        if terms.len() != m {
            return Err(Error::Malformed {
                line: terms.len() + 1,
                message: format!("header declares {m} vectors, file has {}", terms.len()),
            });
        }
        WordVectors::new(terms, n, matrix)
    }
}

/// Draws term indices with probability proportional to `count^0.75`.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    cumulative: Vec<f64>,
}

impl NoiseSampler {
    pub fn new(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        NoiseSampler { cumulative }
    }

    pub fn probability(&self, term: usize) -> f64 {
        let total = *self.cumulative.last().unwrap();
        let prev = if term == 0 { 0.0 } else { self.cumulative[term - 1] };
        (self.cumulative[term] - prev) / total
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty noise table");
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Trains skip-gram vectors with negative sampling over the whole corpus,
/// one article body per token stream.
pub fn train_skipgram(set: &ArticleSet, params: &SkipGramParams) -> Result<WordVectors> {
    params.validate()?;
    let vocab = build_vocabulary(set, params.min_count)?;
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary(params.min_count));
    }
    train_on_vocabulary(set, &vocab, params, |_, _| Ok(()))
}

/// Same as [`train_skipgram`] over a prebuilt vocabulary; `on_epoch` runs
/// after every epoch with the current input vectors.
pub fn train_on_vocabulary(
    set: &ArticleSet,
    vocab: &Vocabulary,
    params: &SkipGramParams,
    mut on_epoch: impl FnMut(usize, &[f64]) -> Result<()>,
) -> Result<WordVectors> {
    params.validate()?;
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary(params.min_count));
    }
    let dims = params.dims;
    let streams: Vec<Vec<usize>> = set
        .iter()
        .map(|a| tokenize(&a.text).iter().filter_map(|t| vocab.lookup(t)).collect())
        .collect();

    let pairs_per_epoch: u64 = streams
        .iter()
        .map(|s| {
            (0..s.len())
                .map(|p| (p.min(params.window) + (s.len() - 1 - p).min(params.window)) as u64)
                .sum::<u64>()
        })
        .sum();
    let total_pairs = (pairs_per_epoch * params.epochs as u64).max(1) as f64;
    let min_rate = params.initial_learning_rate * 1e-4;

    let counts: Vec<u64> = (0..vocab.len()).map(|k| vocab.count(k)).collect();
    let noise = NoiseSampler::new(&counts);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let half = 0.5 / dims as f64;
    let mut input: Vec<f64> = (0..vocab.len() * dims).map(|_| rng.random_range(-half..half)).collect();
    let mut output = vec![0.0; vocab.len() * dims];
    let mut grad = vec![0.0; dims];

    let mut seen = 0u64;
    for epoch in 0..params.epochs {
        for stream in &streams {
            for (pos, &center) in stream.iter().enumerate() {
                let lo = pos.saturating_sub(params.window);
                let hi = (pos + params.window).min(stream.len() - 1);
                for ctx_pos in lo..=hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let rate = (params.initial_learning_rate * (1.0 - seen as f64 / total_pairs)).max(min_rate);
                    seen += 1;

                    let h = &mut input[center * dims..(center + 1) * dims];
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let target = stream[ctx_pos];
                    update_output(h, &mut output, target, 1.0, rate, &mut grad, dims);
                    for _ in 0..params.negative_samples {
                        let neg = noise.sample(&mut rng);
                        if neg == target {
                            continue;
                        }
                        update_output(h, &mut output, neg, 0.0, rate, &mut grad, dims);
                    }
                    h.iter_mut().zip(&grad).for_each(|(x, g)| *x += g);
                }
            }
        }
        on_epoch(epoch, &input)?;
    }
    WordVectors::new(vocab.terms().to_vec(), dims, input)
}

fn update_output(h: &[f64], output: &mut [f64], word: usize, label: f64, rate: f64, grad: &mut [f64], dims: usize) {
    let out = &mut output[word * dims..(word + 1) * dims];
    let dot: f64 = h.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
    let g = rate * (label - sigmoid(dot));
    for k in 0..dims {
        grad[k] += g * out[k];
        out[k] += g * h[k];
    }
}
