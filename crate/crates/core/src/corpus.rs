//! Article ingestion, tokenization, vocabulary and TFIDF weights.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SubsecRound, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One news item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    /// Registered domain of the outlet that published the article.
    pub publisher: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(with = "timestamp")]
    pub published_at: DateTime<Utc>,
    pub text: String,
}

/// Raw JSONL record; `publisher` may be absent when `url` is present.
#[derive(Deserialize)]
struct ArticleRecord {
    id: String,
    #[serde(default)]
    publisher: Option<String>,
    #[serde(default)]
    url: Option<String>,
    published_at: String,
    text: String,
}

mod timestamp {
    use chrono::{DateTime, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_timestamp(t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        super::parse_timestamp(&raw).ok_or_else(|| serde::de::Error::custom("bad timestamp"))
    }
}

/// Parses an ISO-8601 instant, truncated to whole seconds. Strings without an
/// offset are read as UTC.
pub fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Some(t.with_timezone(&Utc).trunc_subsecs(0));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(t.and_utc().trunc_subsecs(0));
        }
    }
    None
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Second-level labels under which country-code domains register names,
/// e.g. `folha.com.br`.
const GENERIC_SECOND_LEVEL: &[&str] = &[
    "com", "org", "net", "gov", "edu", "co", "ac", "art", "blog", "jor", "nom",
];

/// Derives a publisher key from a URL's registered domain.
///
/// `https://www1.folha.uol.com.br/x` gives `uol.com.br`; `https://www.lemonde.fr/` gives
/// `lemonde.fr`. Returns `None` when the URL has no host.
pub fn publisher_from_url(raw: &str) -> Option<String> {
    let parsed = url::Url::parse(raw).ok()?;
    let host = parsed.host_str()?.trim_end_matches('.').to_lowercase();
    let labels: Vec<&str> = host.split('.').filter(|l| !l.is_empty()).collect();
    let keep = match labels.as_slice() {
        [] => return None,
        [.., sld, tld] if tld.len() == 2 && GENERIC_SECOND_LEVEL.contains(sld) => 3,
        _ => 2,
    };
    let start = labels.len().saturating_sub(keep);
    Some(labels[start..].join("."))
}

/// Articles sorted ascending by `(published_at, id)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ArticleSet {
    articles: Vec<Article>,
}

impl ArticleSet {
    /// Builds a set, rejecting duplicate ids and empty bodies.
    pub fn new(mut articles: Vec<Article>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(articles.len());
        for a in &articles {
            if !seen.insert(a.id.as_str()) {
                return Err(Error::DuplicateId(a.id.clone()));
            }
            if a.text.trim().is_empty() {
                return Err(Error::InvalidParameter(format!("article {} has empty text", a.id)));
            }
        }
        articles.sort_by(|a, b| a.published_at.cmp(&b.published_at).then_with(|| a.id.cmp(&b.id)));
        Ok(ArticleSet { articles })
    }

    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn get(&self, index: usize) -> &Article {
        &self.articles[index]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Article> {
        self.articles.iter()
    }

    /// Map from article id to position in publication order.
    pub fn index_by_id(&self) -> HashMap<&str, usize> {
        self.articles
            .iter()
            .enumerate()
            .map(|(i, a)| (a.id.as_str(), i))
            .collect()
    }

    /// Signed lag `p_j - p_i` in hours.
    pub fn lag_hours(&self, i: usize, j: usize) -> f64 {
        let secs = (self.articles[j].published_at - self.articles[i].published_at).num_seconds();
        secs as f64 / 3600.0
    }

    /// Writes the set as JSON Lines in publication order.
    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for a in &self.articles {
            let line = serde_json::to_string(a).expect("article serializes");
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Loads a JSON Lines article file. Blank lines are skipped.
pub fn load_articles(path: impl AsRef<Path>) -> Result<ArticleSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut articles = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ArticleRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let published_at = parse_timestamp(&rec.published_at).ok_or_else(|| Error::Timestamp {
            line: line_no,
            value: rec.published_at.clone(),
        })?;
        let publisher = match (rec.publisher, rec.url.as_deref()) {
            (Some(p), _) if !p.trim().is_empty() => p,
            (_, Some(u)) => publisher_from_url(u).ok_or_else(|| Error::Malformed {
                line: line_no,
                message: format!("cannot derive publisher from url {u:?}"),
            })?,
            _ => {
                return Err(Error::Malformed {
                    line: line_no,
                    message: "article needs a publisher or a url".into(),
                })
            }
        };
        if rec.text.trim().is_empty() {
            return Err(Error::Malformed {
                line: line_no,
                message: format!("article {} has empty text", rec.id),
            });
        }
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        articles.push(Article {
            id: rec.id,
            publisher,
            url: rec.url,
            published_at,
            text: rec.text,
        });
    }
    if articles.is_empty() {
        log::warn!("{}: no articles", path.display());
    } else {
        log::info!("{}: loaded {} articles", path.display(), articles.len());
    }
    ArticleSet::new(articles)
}

/// Lowercased tokens split on anything that is not a letter or digit.
/// Tokens shorter than two characters are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().nth(1).is_some())
        .map(|t| t.to_lowercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    counts: Vec<u64>,
    doc_freq: Vec<u32>,
    min_count: usize,
    n_docs: usize,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn count(&self, term: usize) -> u64 {
        self.counts[term]
    }

    pub fn doc_freq(&self, term: usize) -> u32 {
        self.doc_freq[term]
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    /// Number of documents in the corpus the vocabulary was built from.
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn lookup(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// Writes `term<TAB>count<TAB>doc_freq` lines.
    pub fn save_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for ((t, c), d) in self.terms.iter().zip(&self.counts).zip(&self.doc_freq) {
            writeln!(w, "{t}\t{c}\t{d}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Keeps tokens with corpus frequency `>= min_count`, ordered by descending
/// frequency, ties broken lexicographically.
pub fn build_vocabulary(set: &ArticleSet, min_count: usize) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::InvalidParameter("min_count must be >= 1".into()));
    }
    if set.is_empty() {
        log::warn!("building vocabulary over an empty corpus");
    }
    let per_doc: Vec<HashMap<String, u64>> = set.articles.par_iter().map(|a| term_counts(&a.text)).collect();

    let mut totals: HashMap<&str, (u64, u32)> = HashMap::new();
    for doc in &per_doc {
        for (t, &c) in doc {
            let e = totals.entry(t.as_str()).or_default();
            e.0 += c;
            e.1 += 1;
        }
    }
    let mut kept: Vec<(&str, u64, u32)> = totals
        .into_iter()
        .filter(|&(_, (c, _))| c >= min_count as u64)
        .map(|(t, (c, d))| (t, c, d))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let terms: Vec<String> = kept.iter().map(|k| k.0.to_string()).collect();
    let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    Ok(Vocabulary {
        counts: kept.iter().map(|k| k.1).collect(),
        doc_freq: kept.iter().map(|k| k.2).collect(),
        terms,
        min_count,
        n_docs: set.len(),
        index,
    })
}

fn term_counts(text: &str) -> HashMap<String, u64> {
    let mut m = HashMap::new();
    for t in tokenize(text) {
        *m.entry(t).or_insert(0) += 1;
    }
    m
}

/// Sparse per-document TFIDF weights over a [`Vocabulary`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    /// Row `d` holds `(term_index, weight)` pairs sorted by term index.
    rows: Vec<Vec<(usize, f64)>>,
    /// Raw term counts aligned with `rows`.
    tf: Vec<Vec<u64>>,
    terms: Vec<String>,
}

impl WeightMatrix {
    pub fn n_docs(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, doc: usize) -> &[(usize, f64)] {
        &self.rows[doc]
    }

    pub fn term_frequencies(&self, doc: usize) -> &[u64] {
        &self.tf[doc]
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn weight(&self, doc: usize, term: usize) -> f64 {
        let row = &self.rows[doc];
        row.binary_search_by_key(&term, |e| e.0)
            .map(|k| row[k].1)
            .unwrap_or(0.0)
    }
}

/// `weight(w, d) = tf(w, d) * ln(N / df(w))`, with raw counts and no smoothing.
pub fn tfidf_weights(set: &ArticleSet, vocab: &Vocabulary) -> WeightMatrix {
    let n = set.len() as f64;
    let (rows, tf): (Vec<_>, Vec<_>) = set
        .articles
        .par_iter()
        .map(|a| {
            let mut entries: Vec<(usize, u64)> = term_counts(&a.text)
                .into_iter()
                .filter_map(|(t, c)| vocab.lookup(&t).map(|k| (k, c)))
                .collect();
            entries.sort_unstable_by_key(|e| e.0);
            let weights = entries
                .iter()
                .map(|&(k, c)| (k, c as f64 * (n / vocab.doc_freq[k] as f64).ln()))
                .collect::<Vec<_>>();
            (weights, entries.into_iter().map(|e| e.1).collect::<Vec<_>>())
        })
        .unzip();
    WeightMatrix {
        rows,
        tf,
        terms: vocab.terms.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn article(id: &str, hour: u32, text: &str) -> Article {
        Article {
            id: id.into(),
            publisher: "example.com".into(),
            url: None,
            published_at: Utc.with_ymd_and_hms(2015, 1, 7, hour, 0, 0).unwrap(),
            text: text.into(),
        }
    }

    fn write(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn load_sorts_by_time() {
        let f = write(&[
            r#"{"id":"a","publisher":"x.com","published_at":"2015-01-07T12:00:00Z","text":"first line"}"#,
            r#"{"id":"b","publisher":"x.com","published_at":"2015-01-07T11:00:00Z","text":"second line"}"#,
        ]);
        let set = load_articles(f.path()).unwrap();
        let ids: Vec<_> = set.iter().map(|a| a.id.as_str()).collect();
        assert_eq!(ids, ["b", "a"]);
    }

    #[test]
    fn load_empty_file() {
        let f = write(&[]);
        assert!(load_articles(f.path()).unwrap().is_empty());
    }

    #[test]
    fn load_duplicate_id() {
        let rec = r#"{"id":"a1","publisher":"x.com","published_at":"2015-01-07T12:00:00Z","text":"t t"}"#;
        let f = write(&[rec, rec]);
        let err = load_articles(f.path()).unwrap_err();
        assert_eq!(err.to_string(), "duplicate article id a1");
    }

    #[test]
    fn load_reports_line_numbers() {
        let good = r#"{"id":"a1","publisher":"x.com","published_at":"2015-01-07T12:00:00Z","text":"t t"}"#;
        let f = write(&[good, "{not json"]);
        assert!(matches!(load_articles(f.path()), Err(Error::Malformed { line: 2, .. })));

        let bad_ts = r#"{"id":"a2","publisher":"x.com","published_at":"yesterday","text":"t t"}"#;
        let f = write(&[good, bad_ts]);
        assert!(matches!(load_articles(f.path()), Err(Error::Timestamp { line: 2, .. })));
    }

    #[test]
    fn publisher_derived_from_url() {
        let f = write(&[
            r#"{"id":"a","url":"https://www1.folha.uol.com.br/mundo/x.shtml","published_at":"2015-01-07T12:00:00-02:00","text":"body"}"#,
        ]);
        let set = load_articles(f.path()).unwrap();
        assert_eq!(set.get(0).publisher, "uol.com.br");
        assert_eq!(format_timestamp(&set.get(0).published_at), "2015-01-07T14:00:00Z");
        assert_eq!(
            publisher_from_url("https://www.lemonde.fr/a").as_deref(),
            Some("lemonde.fr")
        );
        assert_eq!(publisher_from_url("not a url"), None);
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Charlie Hebdo!"), ["charlie", "hebdo"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("ataque à revista"), ["ataque", "revista"]);
        assert_eq!(tokenize("Ação, 2015; É"), ["ação", "2015"]);
    }

    #[test]
    fn vocabulary_min_count() {
        let nine = ["word"; 9].join(" ");
        let set = ArticleSet::new(vec![article("a", 1, &nine)]).unwrap();
        assert!(build_vocabulary(&set, 10).unwrap().is_empty());
        assert_eq!(build_vocabulary(&set, 9).unwrap().terms(), ["word"]);
    }

    #[test]
    fn vocabulary_hand_count() {
        let set = ArticleSet::new(vec![article("a", 1, "aa bb bb"), article("b", 2, "bb cc")]).unwrap();
        let v = build_vocabulary(&set, 2).unwrap();
        assert_eq!(v.terms(), ["bb"]);
        assert_eq!((v.count(0), v.doc_freq(0)), (3, 2));

        let all = build_vocabulary(&set, 1).unwrap();
        assert_eq!(all.terms(), ["bb", "aa", "cc"]);
        assert!(build_vocabulary(&set, 0).is_err());
    }

    #[test]
    fn tfidf_hand_values() {
        // N = 4; "xx" in docs 0 and 1 (df = 2), three times in doc 0.
        let set = ArticleSet::new(vec![
            article("a", 1, "xx xx xx common"),
            article("b", 2, "xx common"),
            article("c", 3, "yy common"),
            article("d", 4, "zz common"),
        ])
        .unwrap();
        let v = build_vocabulary(&set, 1).unwrap();
        let w = tfidf_weights(&set, &v);
        let xx = v.lookup("xx").unwrap();
        assert!((w.weight(0, xx) - 3.0 * 2f64.ln()).abs() < 1e-12);
        assert!((w.weight(0, xx) - 2.0794).abs() < 1e-4);
        let common = v.lookup("common").unwrap();
        for d in 0..4 {
            assert_eq!(w.weight(d, common), 0.0);
        }
    }

    #[test]
    fn tfidf_single_document() {
        let set = ArticleSet::new(vec![article("a", 1, "one two two three")]).unwrap();
        let v = build_vocabulary(&set, 1).unwrap();
        let w = tfidf_weights(&set, &v);
        assert!(w.row(0).iter().all(|&(_, x)| x == 0.0));
    }

    proptest! {
        #[test]
        fn tfidf_zero_iff_absent_or_ubiquitous(
            docs in prop::collection::vec(prop::collection::vec(0usize..6, 1..12), 1..8)
        ) {
            let articles = docs.iter().enumerate().map(|(i, toks)| {
                let text = toks.iter().map(|t| format!("w{t}")).collect::<Vec<_>>().join(" ");
                article(&format!("d{i}"), (i % 24) as u32, &text)
            }).collect();
            let set = ArticleSet::new(articles).unwrap();
            let v = build_vocabulary(&set, 1).unwrap();
            let w = tfidf_weights(&set, &v);
            for d in 0..set.len() {
                let tf: HashMap<String, u64> = term_counts(&set.get(d).text);
                for k in 0..v.len() {
                    let x = w.weight(d, k);
                    prop_assert!(x >= 0.0);
                    let present = tf.contains_key(&v.terms()[k]);
                    let ubiquitous = v.doc_freq(k) as usize == set.len();
                    prop_assert_eq!(x == 0.0, !present || ubiquitous);
                }
            }
        }

        #[test]
        fn vocabulary_ignores_line_order(
            docs in prop::collection::vec("[a-d ]{0,20}[a-d]{2}", 1..8),
            min_count in 1usize..4,
        ) {
            let mk = |order: &mut dyn Iterator<Item = (usize, &String)>| {
                ArticleSet::new(order.map(|(i, t)| article(&format!("d{i}"), 1, t)).collect()).unwrap()
            };
            let fwd = mk(&mut docs.iter().enumerate());
            let rev = mk(&mut docs.iter().enumerate().rev());
            let v1 = build_vocabulary(&fwd, min_count).unwrap();
            prop_assert_eq!(&v1, &build_vocabulary(&rev, min_count).unwrap());
            prop_assert_eq!(&v1, &build_vocabulary(&fwd, min_count).unwrap());
            for k in 0..v1.len() {
                prop_assert!(v1.count(k) >= min_count as u64);
                prop_assert!(v1.doc_freq(k) >= 1 && v1.doc_freq(k) as usize <= fwd.len());
            }
        }

        #[test]
        fn jsonl_round_trip(
            texts in prop::collection::vec("[a-zé \"\\\\]{1,30}[a-z]", 0..6),
            hours in prop::collection::vec(0u32..24, 6),
        ) {
            let articles: Vec<Article> = texts.iter().enumerate()
                .map(|(i, t)| article(&format!("id{i}"), hours[i], t))
                .collect();
            let set = ArticleSet::new(articles).unwrap();
            let f = tempfile::NamedTempFile::new().unwrap();
            set.save_jsonl(f.path()).unwrap();
            let back = load_articles(f.path()).unwrap();
            prop_assert_eq!(&set, &back);
        }
    }
}
