//! Shared fixtures for the benchmarks.

use contagion_core::corpus::{build_vocabulary, tfidf_weights};
use contagion_core::docvec::document_vectors;
use contagion_core::embedding::train_skipgram;
use contagion_core::sirmodel::{earliest_articles, integrate, publisher_adjacency};
use contagion_core::synth::{generate, SynthConfig};
use contagion_core::{AdjacencyMatrix, ArticleSet, DocVector, SirParams, SirTrajectory, SkipGramParams};

pub struct Fixture {
    pub articles: ArticleSet,
    pub adjacency: AdjacencyMatrix,
    pub docs: Vec<DocVector>,
}

/// Synthetic corpus of `cascades * per_cascade` articles with trained
/// 50-dimensional document vectors and the planted-network adjacency.
pub fn fixture(cascades: usize, per_cascade: usize) -> Fixture {
    let c = generate(&SynthConfig {
        n_cascades: cascades,
        articles_per_cascade: per_cascade,
        tokens_per_article: 100,
        ..SynthConfig::default()
    })
    .expect("valid synth config");
    let params = SkipGramParams {
        dims: 50,
        min_count: 1,
        epochs: 1,
        ..SkipGramParams::default()
    };
    let wv = train_skipgram(&c.articles, &params).expect("trainable corpus");
    let vocab = build_vocabulary(&c.articles, 1).expect("vocabulary");
    let docs = document_vectors(&c.articles, &wv, &tfidf_weights(&c.articles, &vocab));
    let adjacency = publisher_adjacency(&c.truth, &c.articles).expect("adjacency");
    Fixture {
        articles: c.articles,
        adjacency,
        docs,
    }
}

pub fn sir_params(f: &Fixture, lambda: f64, t_end: f64) -> SirParams {
    SirParams {
        t_end,
        ..SirParams::new(lambda, earliest_articles(&f.articles))
    }
}

pub fn trajectory(f: &Fixture, lambda: f64, t_end: f64) -> SirTrajectory {
    integrate(&sir_params(f, lambda, t_end), &f.adjacency).expect("integrable")
}
