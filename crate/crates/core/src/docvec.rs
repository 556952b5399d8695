//! TFIDF-weighted document vectors and their pairwise cosine similarities.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{ArticleSet, WeightMatrix};
use crate::embedding::WordVectors;
use crate::stats::{histogram, Bin};
use crate::{Error, Result};

/// Pairs this close to 1 are treated as duplicate articles.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DocVector {
    pub article_id: String,
    pub vector: Vec<f64>,
    /// Token occurrences whose term has a word vector.
    pub known_token_count: u64,
    /// Token occurrences skipped for lack of a word vector.
    pub oov_token_count: u64,
}

impl DocVector {
    pub fn norm(&self) -> f64 {
        norm(&self.vector)
    }

    pub fn is_empty(&self) -> bool {
        self.known_token_count == 0
    }
}

fn norm(v: &[f64]) -> f64 {
    squared_norm(v).sqrt()
}

fn squared_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Sum of `w_i * W(w_i, d)` over the distinct in-vocabulary words of document `doc`.
pub fn document_vector(article_id: &str, doc: usize, wv: &WordVectors, weights: &WeightMatrix) -> DocVector {
    let mut vector = vec![0.0; wv.dims()];
    let (mut known, mut oov) = (0, 0);
    for (&(term, w), &tf) in weights.row(doc).iter().zip(weights.term_frequencies(doc)) {
        match wv.lookup(weights.term(term)) {
            Some(row) => {
                known += tf;
                vector.iter_mut().zip(row).for_each(|(d, x)| *d += x * w);
            }
            None => oov += tf,
        }
    }
    DocVector {
        article_id: article_id.to_string(),
        vector,
        known_token_count: known,
        oov_token_count: oov,
    }
}

/// Document vectors for every article, in publication order.
pub fn document_vectors(set: &ArticleSet, wv: &WordVectors, weights: &WeightMatrix) -> Vec<DocVector> {
    set.articles()
        .par_iter()
        .enumerate()
        .map(|(d, a)| document_vector(&a.id, d, wv, weights))
        .collect()
}

/// `A·B / (‖A‖‖B‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (squared_norm(a), squared_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm(String::new()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    // sqrt(x * x) == x exactly, so identical vectors give exactly 1
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

/// Upper-triangular similarity matrix over articles in publication order.
///
/// Entries are defined for `i < j`; everything else reads as 0. Documents
/// without any known token are kept as rows/columns but flagged `excluded`
/// and hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SimMatrix {
    ids: Vec<String>,
    values: Vec<f64>,
    excluded: Vec<bool>,
}

impl SimMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn is_excluded(&self, i: usize) -> bool {
        self.excluded[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i < j {
            self.values[i * self.len() + j]
        } else {
            0.0
        }
    }

    /// Defined `(i, j, s_ij)` entries with `i < j`, skipping excluded documents.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.len();
        (0..n).filter(move |&i| !self.excluded[i]).flat_map(move |i| {
            ((i + 1)..n)
                .filter(move |&j| !self.excluded[j])
                .map(move |j| (i, j, self.get(i, j)))
        })
    }

    /// Same shape and flags with entries replaced by `f(i, j, s_ij)`.
    pub(crate) fn map(&self, f: impl Fn(usize, usize, f64) -> f64 + Sync) -> SimMatrix {
        let n = self.len();
        let mut values = vec![0.0; n * n];
        values.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
            for j in (i + 1)..n {
                row[j] = f(i, j, self.values[i * n + j]);
            }
        });
        SimMatrix {
            ids: self.ids.clone(),
            values,
            excluded: self.excluded.clone(),
        }
    }

    /// Histogram of all defined pairwise similarities.
    pub fn pairwise_histogram(&self, bins: usize) -> Vec<Bin> {
        histogram(self.pairs().map(|p| p.2), bins, -1.0, 1.0)
    }

    /// For every non-excluded document, the similarity of its most similar
    /// other document (earlier or later).
    pub fn most_similar(&self) -> Vec<Option<f64>> {
        let n = self.len();
        let mut best: Vec<Option<f64>> = vec![None; n];
        for (i, j, s) in self.pairs() {
            for k in [i, j] {
                best[k] = Some(best[k].map_or(s, |b: f64| b.max(s)));
            }
        }
        best
    }

    pub fn most_similar_histogram(&self, bins: usize) -> Vec<Bin> {
        histogram(self.most_similar().into_iter().flatten(), bins, -1.0, 1.0)
    }

    /// CSV `i_id,j_id,similarity` for pairs with similarity `>= floor`.
    pub fn write_csv(&self, path: impl AsRef<Path>, floor: f64) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["i_id", "j_id", "similarity"])?;
        for (i, j, s) in self.pairs() {
            if s >= floor {
                w.write_record([&self.ids[i], &self.ids[j], &s.to_string()])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Cosine similarity for every ordered pair `i < j`.
///
/// Documents with no known token are excluded. A document that has known
/// tokens but a zero vector (all of its words carry zero weight) has no
/// defined similarity and is reported as an error.
pub fn similarity_matrix(docs: &[DocVector], order: &ArticleSet) -> Result<SimMatrix> {
    if docs.len() != order.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} document vectors for {} articles",
            docs.len(),
            order.len()
        )));
    }
    for (d, a) in docs.iter().zip(order.iter()) {
        if d.article_id != a.id {
            return Err(Error::ShapeMismatch(format!(
                "document {} is not aligned with article {}",
                d.article_id, a.id
            )));
        }
        if !d.is_empty() && d.norm() == 0.0 {
            return Err(Error::ZeroNorm(d.article_id.clone()));
        }
    }
    let n = docs.len();
    let excluded: Vec<bool> = docs.iter().map(DocVector::is_empty).collect();
    let mut values = vec![0.0; n * n];
    values.par_chunks_mut(n.max(1)).enumerate().try_for_each(|(i, row)| {
        if excluded[i] {
            return Ok(());
        }
        for j in (i + 1)..n {
            if !excluded[j] {
                row[j] = cosine_similarity(&docs[i].vector, &docs[j].vector)?;
            }
        }
        Ok::<_, Error>(())
    })?;
    Ok(SimMatrix {
        ids: docs.iter().map(|d| d.article_id.clone()).collect(),
        values,
        excluded,
    })
}

/// Writes `m n` then `id<TAB>known_count<TAB>v1 ... vn` per document.
pub fn save_doc_vectors(docs: &[DocVector], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let dims = docs.first().map_or(0, |d| d.vector.len());
    writeln!(w, "{} {dims}", docs.len()).map_err(io)?;
    for d in docs {
        write!(w, "{}\t{}\t{}\t", d.article_id, d.known_token_count, d.oov_token_count).map_err(io)?;
        let vals: Vec<String> = d.vector.iter().map(|x| x.to_string()).collect();
        writeln!(w, "{}", vals.join(" ")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_doc_vectors(path: impl AsRef<Path>) -> Result<Vec<DocVector>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let malformed = |line, message: String| Error::Malformed { line, message };
    let header = lines
        .next()
        .ok_or_else(|| malformed(1, "missing header".into()))?
        .map_err(|e| Error::io(path, e))?;
    let dims: usize = header
        .split_whitespace()
        .nth(1)
        .and_then(|x| x.parse().ok())
        .ok_or_else(|| malformed(1, format!("bad header {header:?}")))?;
    let mut docs = Vec::new();
    for (k, line) in lines.enumerate() {
        let line_no = k + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.splitn(4, '\t');
        let (Some(id), Some(known), Some(oov), Some(vals)) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(malformed(line_no, "expected 4 tab-separated fields".into()));
        };
        let vector = vals
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| malformed(line_no, e.to_string()))?;
        if vector.len() != dims {
            return Err(Error::DimensionMismatch {
                line: line_no,
                expected: dims,
                found: vector.len(),
            });
        }
        docs.push(DocVector {
            article_id: id.to_string(),
            vector,
            known_token_count: known
                .parse()
                .map_err(|_| malformed(line_no, "bad known count".into()))?,
            oov_token_count: oov.parse().map_err(|_| malformed(line_no, "bad oov count".into()))?,
        });
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabulary, tfidf_weights, Article};
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn set_of(n: usize) -> ArticleSet {
        ArticleSet::new(
            (0..n)
                .map(|i| Article {
                    id: format!("a{i:03}"),
                    publisher: "p.com".into(),
                    url: None,
                    published_at: Utc.with_ymd_and_hms(2015, 1, 7, 0, 0, 0).unwrap()
                        + chrono::Duration::hours(i as i64),
                    text: "xx".into(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn doc(id: &str, v: Vec<f64>) -> DocVector {
        let known = u64::from(v.iter().any(|&x| x != 0.0));
        DocVector {
            article_id: id.into(),
            vector: v,
            known_token_count: known,
            oov_token_count: 0,
        }
    }

    fn articles(texts: &[&str]) -> ArticleSet {
        ArticleSet::new(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Article {
                    id: format!("d{i}"),
                    publisher: "p.com".into(),
                    url: None,
                    published_at: Utc.with_ymd_and_hms(2015, 1, 7, i as u32, 0, 0).unwrap(),
                    text: (*t).into(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn weighted_sum_of_word_vectors() {
        // N = 4: "uu" has tf 2, df 1 in doc 0 → 2 ln 4; "vv" has tf 1, df 2 → ln 2.
        let set = articles(&["uu uu vv", "vv", "ww", "ww"]);
        let vocab = build_vocabulary(&set, 1).unwrap();
        let weights = tfidf_weights(&set, &vocab);
        let wv = WordVectors::new(vec!["uu".into(), "vv".into()], 2, vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        let d = document_vector("d0", 0, &wv, &weights);
        let (wu, wvv) = (2.0 * 4f64.ln(), 2f64.ln());
        assert_eq!(d.vector, vec![wu, 2.0 * wvv]);
        assert_eq!((d.known_token_count, d.oov_token_count), (3, 0));

        let oov = document_vector("d2", 2, &wv, &weights);
        assert_eq!(oov.vector, vec![0.0, 0.0]);
        assert_eq!((oov.known_token_count, oov.oov_token_count), (0, 1));
    }

    #[test]
    fn hand_arithmetic_weights() {
        // Two words with vectors (1,0), (0,2) and weights 2, 0.5.
        let set = articles(&["pp qq", "rr", "rr", "rr"]);
        let vocab = build_vocabulary(&set, 1).unwrap();
        let weights = tfidf_weights(&set, &vocab);
        let (wp, wq) = (
            weights.weight(0, vocab.lookup("pp").unwrap()),
            weights.weight(0, vocab.lookup("qq").unwrap()),
        );
        let wv = WordVectors::new(
            vec!["pp".into(), "qq".into()],
            2,
            vec![2.0 / wp, 0.0, 0.0, 2.0 * 0.5 / wq],
        )
        .unwrap();
        let d = document_vector("d0", 0, &wv, &weights);
        assert!((d.vector[0] - 2.0).abs() < 1e-12 && (d.vector[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_word_document_equals_its_vector() {
        let set = articles(&["solo", "xx", "xx", "yy"]);
        let vocab = build_vocabulary(&set, 1).unwrap();
        let weights = tfidf_weights(&set, &vocab);
        let w = weights.weight(0, vocab.lookup("solo").unwrap());
        let wv = WordVectors::new(vec!["solo".into()], 3, vec![0.5 / w, -1.0 / w, 2.0 / w]).unwrap();
        let d = document_vector("d0", 0, &wv, &weights);
        for (a, b) in d.vector.iter().zip([0.5, -1.0, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[0.3, 4.0], &[0.3, 4.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        let err = cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]).unwrap_err();
        assert!(err.to_string().starts_with("undefined similarity for empty document"));
    }

    #[test]
    fn matrix_small_cases() {
        assert!(similarity_matrix(&[doc("a000", vec![1.0])], &set_of(1))
            .unwrap()
            .pairs()
            .next()
            .is_none());
        let m = similarity_matrix(&[doc("a000", vec![1.0, 2.0]), doc("a001", vec![1.0, 2.0])], &set_of(2)).unwrap();
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(1, 0), 0.0);
    }

    #[test]
    fn matrix_matches_pairwise_calls() {
        let docs = vec![
            doc("a000", vec![1.0, 2.0, 0.5]),
            doc("a001", vec![-1.0, 0.3, 2.0]),
            doc("a002", vec![0.2, 0.2, 0.9]),
        ];
        let m = similarity_matrix(&docs, &set_of(3)).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                assert_eq!(
                    m.get(i, j),
                    cosine_similarity(&docs[i].vector, &docs[j].vector).unwrap()
                );
            }
        }
    }

    #[test]
    fn empty_documents_are_excluded() {
        let docs = vec![
            doc("a000", vec![1.0, 0.0]),
            doc("a001", vec![0.0, 0.0]),
            doc("a002", vec![1.0, 1.0]),
        ];
        let m = similarity_matrix(&docs, &set_of(3)).unwrap();
        assert!(m.is_excluded(1));
        assert_eq!(m.pairs().count(), 1);

        let mut weightless = doc("a001", vec![0.0, 0.0]);
        weightless.known_token_count = 4;
        let docs = vec![doc("a000", vec![1.0, 0.0]), weightless];
        assert!(matches!(similarity_matrix(&docs, &set_of(2)), Err(Error::ZeroNorm(id)) if id == "a001"));
    }

    #[test]
    fn doc_vector_file_round_trip() {
        let docs = vec![doc("a000", vec![1.0, 1.0 / 3.0]), doc("a001", vec![0.0, 0.0])];
        let f = tempfile::NamedTempFile::new().unwrap();
        save_doc_vectors(&docs, f.path()).unwrap();
        assert_eq!(load_doc_vectors(f.path()).unwrap(), docs);
    }

    fn nonzero_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, n).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric_and_scale_invariant(a in nonzero_vec(6), b in nonzero_vec(6)) {
            let s = cosine_similarity(&a, &b).unwrap();
            prop_assert_eq!(s, cosine_similarity(&b, &a).unwrap());
            prop_assert!(s.abs() <= 1.0);
            for c in [0.001, 1000.0] {
                let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
                prop_assert!((cosine_similarity(&scaled, &b).unwrap() - s).abs() < 1e-12);
            }
        }

        #[test]
        fn matrix_equals_double_loop(vs in prop::collection::vec(nonzero_vec(4), 1..50)) {
            let n = vs.len();
            let docs: Vec<DocVector> = vs.into_iter().enumerate().map(|(i, v)| doc(&format!("a{i:03}"), v)).collect();
            let m = similarity_matrix(&docs, &set_of(n)).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let expected = if i < j { cosine_similarity(&docs[i].vector, &docs[j].vector).unwrap() } else { 0.0 };
                    prop_assert_eq!(m.get(i, j).to_bits(), expected.to_bits());
                }
            }
        }
    }
}
