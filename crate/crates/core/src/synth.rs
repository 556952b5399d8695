//! Synthetic corpora with planted cascades.
//!
//! Each cascade has its own topic vocabulary. A cascade root samples its
//! tokens from the topic; every later article copies one earlier article of
//! the same cascade (its planted infector), resampling a `copy_noise`
//! fraction of token positions, and is published a random lag after it.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::corpus::{Article, ArticleSet};
use crate::netreconstruct::{nodes_of, Edge, SpreadNetwork};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LagDistribution {
    /// Exponential with the given mean, redrawn until it falls below `max_hours`.
    TruncatedExponential {
        mean_hours: f64,
        max_hours: f64,
    },
    Uniform {
        min_hours: f64,
        max_hours: f64,
    },
}

impl LagDistribution {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            LagDistribution::TruncatedExponential { mean_hours, max_hours } => {
                let exp = Exp::new(1.0 / mean_hours).expect("positive mean");
                loop {
                    let x = exp.sample(rng);
                    if x <= max_hours {
                        return x;
                    }
                }
            }
            LagDistribution::Uniform { min_hours, max_hours } => rng.random_range(min_hours..=max_hours),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LagDistribution::TruncatedExponential { mean_hours, max_hours } => mean_hours > 0.0 && max_hours > 0.0,
            LagDistribution::Uniform { min_hours, max_hours } => min_hours > 0.0 && max_hours >= min_hours,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad lag distribution {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_cascades: usize,
    pub articles_per_cascade: usize,
    /// Distinct words per topic.
    pub topic_vocabulary: usize,
    /// Probability that a sampled token comes from the shared cross-topic pool.
    pub overlap: f64,
    /// Size of the shared cross-topic pool.
    pub shared_vocabulary: usize,
    pub tokens_per_article: usize,
    /// Fraction of token positions resampled when copying an infector.
    pub copy_noise: f64,
    pub lag: LagDistribution,
    /// Cascade roots are spread uniformly over this many hours.
    pub root_spread_hours: f64,
    pub publishers: usize,
    pub start: DateTime<Utc>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_cascades: 4,
            articles_per_cascade: 50,
            topic_vocabulary: 200,
            overlap: 0.1,
            shared_vocabulary: 100,
            tokens_per_article: 300,
            copy_noise: 0.1,
            lag: LagDistribution::TruncatedExponential {
                mean_hours: 24.0,
                max_hours: 168.0,
            },
            root_spread_hours: 48.0,
            publishers: 8,
            start: Utc.with_ymd_and_hms(2015, 1, 7, 11, 30, 0).unwrap(),
            seed: 2015,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("synth: {m}")));
        if self.n_cascades < 1 || self.articles_per_cascade < 1 || self.publishers < 1 {
            return bad("counts must be >= 1");
        }
        if self.topic_vocabulary < 1 || self.shared_vocabulary < 1 || self.tokens_per_article < 1 {
            return bad("vocabulary sizes and article length must be >= 1");
        }
        if !(0.0..1.0).contains(&self.overlap) || (1.0 - self.overlap) - self.overlap < 0.2 {
            return bad("overlap must leave a within-topic margin of at least 0.2");
        }
        if !(0.0..=1.0).contains(&self.copy_noise) {
            return bad("copy_noise must be in [0, 1]");
        }
        if !(self.root_spread_hours >= 0.0) {
            return bad("root_spread_hours must be >= 0");
        }
        self.lag.validate()
    }
}

/// Generated corpus and its planted spread network.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub articles: ArticleSet,
    pub truth: SpreadNetwork,
}

fn topic_token<R: Rng>(config: &SynthConfig, topic: usize, rng: &mut R) -> String {
    if rng.random::<f64>() < config.overlap {
        format!("shared{}", rng.random_range(0..config.shared_vocabulary))
    } else {
        format!("topic{topic}w{}", rng.random_range(0..config.topic_vocabulary))
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    struct Planted {
        id: String,
        tokens: Vec<String>,
        at: DateTime<Utc>,
        publisher: usize,
        infector: Option<usize>,
    }
    let mut planted: Vec<Planted> = Vec::new();
    for c in 0..config.n_cascades {
        let base = planted.len();
        for k in 0..config.articles_per_cascade {
            let (tokens, at, infector) = if k == 0 {
                let tokens = (0..config.tokens_per_article)
                    .map(|_| topic_token(config, c, &mut rng))
                    .collect();
                let offset = rng.random::<f64>() * config.root_spread_hours;
                (tokens, config.start + seconds(offset), None)
            } else {
                let parent = base + rng.random_range(0..k);
                let tokens = planted[parent]
                    .tokens
                    .iter()
                    .map(|t| {
                        if rng.random::<f64>() < config.copy_noise {
                            topic_token(config, c, &mut rng)
                        } else {
                            t.clone()
                        }
                    })
                    .collect();
                let lag = config.lag.sample(&mut rng);
                (
                    tokens,
                    planted[parent].at + seconds(lag).max(Duration::seconds(60)),
                    Some(parent),
                )
            };
            planted.push(Planted {
                id: format!("c{c}-a{k:03}"),
                tokens,
                at,
                publisher: rng.random_range(0..config.publishers),
                infector,
            });
        }
    }

    let articles = ArticleSet::new(
        planted
            .iter()
            .map(|p| Article {
                id: p.id.clone(),
                publisher: format!("outlet{}.example.com", p.publisher),
                url: None,
                published_at: p.at,
                text: p.tokens.join(" "),
            })
            .collect(),
    )?;
    let by_id = articles.index_by_id();
    let edges = planted
        .iter()
        .filter_map(|p| {
            p.infector.map(|parent| {
                let (i, j) = (by_id[planted[parent].id.as_str()], by_id[p.id.as_str()]);
                Edge {
                    infector: i,
                    infected: j,
                    similarity: None,
                    lag_hours: articles.lag_hours(i, j),
                    step: None,
                }
            })
        })
        .collect();
    let truth = SpreadNetwork::new(nodes_of(&articles), edges)?;
    Ok(SynthCorpus { articles, truth })
}

fn seconds(hours: f64) -> Duration {
    Duration::seconds((hours * 3600.0).round() as i64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedMetrics {
    /// Reported as 1.0 when nothing was predicted (see `zero_predictions`).
    pub precision: f64,
    pub recall: f64,
    pub predicted_edges: usize,
    pub true_edges: usize,
    pub zero_predictions: bool,
}

/// Edge-set precision and recall of a reconstruction against planted truth.
pub fn planted_metrics(reconstructed: &SpreadNetwork, truth: &SpreadNetwork) -> Result<PlantedMetrics> {
    let mut a: Vec<&str> = reconstructed.nodes().iter().map(|n| n.id.as_str()).collect();
    let mut b: Vec<&str> = truth.nodes().iter().map(|n| n.id.as_str()).collect();
    a.sort_unstable();
    b.sort_unstable();
    if a != b {
        return Err(Error::NodeSetMismatch(format!(
            "{} reconstructed nodes vs {} planted",
            a.len(),
            b.len()
        )));
    }
    let truth_edges: std::collections::HashSet<(&str, &str)> = truth.edge_ids().into_iter().collect();
    let predicted = reconstructed.edge_ids();
    let hits = predicted.iter().filter(|e| truth_edges.contains(*e)).count();
    let zero_predictions = predicted.is_empty();
    Ok(PlantedMetrics {
        precision: if zero_predictions {
            1.0
        } else {
            hits as f64 / predicted.len() as f64
        },
        recall: if truth_edges.is_empty() {
            1.0
        } else {
            hits as f64 / truth_edges.len() as f64
        },
        predicted_edges: predicted.len(),
        true_edges: truth_edges.len(),
        zero_predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    #[test]
    fn noiseless_copies_are_identical() {
        let c = generate(&SynthConfig {
            copy_noise: 0.0,
            n_cascades: 2,
            articles_per_cascade: 10,
            ..SynthConfig::default()
        })
        .unwrap();
        for e in c.truth.edges() {
            let mut a = tokenize(&c.articles.get(e.infector).text);
            let mut b = tokenize(&c.articles.get(e.infected).text);
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn single_article_is_a_lone_root() {
        let c = generate(&SynthConfig {
            n_cascades: 1,
            articles_per_cascade: 1,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_eq!(c.articles.len(), 1);
        assert!(c.truth.edges().is_empty());
        assert_eq!(c.truth.roots(), vec![0]);
    }

    #[test]
    fn deterministic_forest_forward_in_time() {
        let cfg = SynthConfig::default();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.articles, b.articles);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.truth.edges().len(), 4 * 49);
        assert_eq!(a.truth.roots().len(), 4);
        for e in a.truth.edges() {
            assert!(a.articles.get(e.infected).published_at > a.articles.get(e.infector).published_at);
            assert!(e.lag_hours > 0.0 && e.lag_hours <= 168.0 + 1.0 / 3600.0);
        }
        assert!(crate::netreconstruct::generations(&a.truth).is_ok());
    }

    #[test]
    fn validation() {
        assert!(SynthConfig {
            overlap: 0.45,
            ..SynthConfig::default()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            n_cascades: 0,
            ..SynthConfig::default()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            copy_noise: 1.5,
            ..SynthConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn metrics_examples() {
        let c = generate(&SynthConfig {
            n_cascades: 1,
            articles_per_cascade: 5,
            ..SynthConfig::default()
        })
        .unwrap();
        let m = planted_metrics(&c.truth, &c.truth).unwrap();
        assert_eq!((m.precision, m.recall), (1.0, 1.0));

        let empty = SpreadNetwork::new(c.truth.nodes().to_vec(), vec![]).unwrap();
        let m = planted_metrics(&empty, &c.truth).unwrap();
        assert!(m.zero_predictions);
        assert_eq!((m.precision, m.recall), (1.0, 0.0));

        let half = SpreadNetwork::new(c.truth.nodes().to_vec(), c.truth.edges()[..2].to_vec()).unwrap();
        let m = planted_metrics(&half, &c.truth).unwrap();
        assert_eq!((m.precision, m.recall), (1.0, 0.5));

        let fewer = SpreadNetwork::new(c.truth.nodes()[..3].to_vec(), vec![]).unwrap();
        assert!(planted_metrics(&fewer, &c.truth).is_err());
    }
}
