//! One function per subcommand. Each reads its upstream artifacts from the
//! output directory, writes its own, and records a manifest.

use std::path::{Path, PathBuf};

use contagion_core::corpus::{build_vocabulary, load_articles, tfidf_weights};
use contagion_core::docvec::{document_vectors, load_doc_vectors, save_doc_vectors, similarity_matrix};
use contagion_core::embedding::train_skipgram;
use contagion_core::export::{
    read_daily_counts_csv, read_edges_csv, write_daily_counts_csv, write_edges_csv, write_graphml, write_histogram_csv,
    write_lambda_csv, write_threshold_csv, write_window_csv, write_window_lags_csv,
};
use contagion_core::netreconstruct::{
    giant_component_fraction, lag_matrix, reconstruct, select_gamma, select_rho, threshold_sweep, window_sweep,
};
use contagion_core::realization::{compare_empirical, realize_states, run_ensemble, simulated_spread_network};
use contagion_core::sirmodel::{
    earliest_articles, empirical_daily_counts, integrate, lambda_sweep, publisher_adjacency, select_lambda, DailyCounts,
};
use contagion_core::synth::{generate, planted_metrics};
use contagion_core::{AdjacencyMatrix, ArticleSet, EnsembleSummary, SimMatrix, SirTrajectory, WordVectors};

use crate::config::PipelineConfig;
use crate::manifest::Manifest;
use crate::CliError;

/// Every artifact the pipeline reads back, with the subcommand that makes it.
pub const CORPUS: (&str, &str) = ("corpus.jsonl", "ingest");
pub const DAILY_COUNTS: (&str, &str) = ("daily_counts.csv", "ingest");
pub const VECTORS: (&str, &str) = ("vectors.txt", "train");
pub const DOCVECS: (&str, &str) = ("docvecs.tsv", "embed");
pub const PAIRWISE_HIST: (&str, &str) = ("pairwise_histogram.csv", "similarity");
pub const MOST_SIMILAR_HIST: (&str, &str) = ("most_similar_histogram.csv", "similarity");
pub const EDGES: (&str, &str) = ("edges.csv", "reconstruct");
pub const RHO_SWEEP: (&str, &str) = ("rho_sweep.csv", "sweep-rho");
pub const WINDOW_LAGS: (&str, &str) = ("window_lags.csv", "sweep-window");
pub const ADJACENCY: (&str, &str) = ("adjacency.csv", "adjacency");
pub const TRAJECTORY: (&str, &str) = ("trajectory.csv", "simulate");
pub const TRAJECTORY_AGGREGATE: (&str, &str) = ("trajectory_aggregate.csv", "simulate");
pub const LAMBDA_SWEEP: (&str, &str) = ("lambda_sweep.csv", "fit-lambda");
pub const ENSEMBLE: (&str, &str) = ("ensemble.csv", "ensemble");
pub const COMPARISON: (&str, &str) = ("comparison.csv", "compare");
pub const SYNTH_ARTICLES: &str = "synthetic_articles.jsonl";
pub const TRUTH_EDGES: &str = "truth_edges.csv";

/// Report file name and source artifact for each figure.
pub const REPORT: [(&str, (&str, &str)); 8] = [
    ("fig4_pairwise_similarity.csv", PAIRWISE_HIST),
    ("fig5_most_similar.csv", MOST_SIMILAR_HIST),
    ("fig6_rho_sweep.csv", RHO_SWEEP),
    ("fig8_window_lags.csv", WINDOW_LAGS),
    ("fig9_daily_counts.csv", DAILY_COUNTS),
    ("fig10_lambda_sweep.csv", LAMBDA_SWEEP),
    ("fig11_simulation.csv", TRAJECTORY_AGGREGATE),
    ("fig12_comparison.csv", COMPARISON),
];

struct Run<'a> {
    config: &'a PipelineConfig,
    manifest: Manifest,
}

impl<'a> Run<'a> {
    fn new(name: &str, config: &'a PipelineConfig) -> Self {
        Run {
            config,
            manifest: Manifest::new(name, config.seed, config.parameters()),
        }
    }

    fn out(&self) -> &Path {
        &self.config.out
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out().join(name)
    }

    /// Path of an upstream artifact, recorded as an input.
    fn need(&mut self, (name, producer): (&str, &str)) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        if !path.is_file() {
            return Err(CliError::MissingArtifact {
                path,
                subcommand: producer.to_string(),
            });
        }
        self.manifest.input(&path)?;
        Ok(path)
    }

    fn produced(&mut self, path: &Path) -> Result<(), CliError> {
        self.manifest.output(path)
    }

    fn corpus(&mut self) -> Result<ArticleSet, CliError> {
        Ok(load_articles(self.need(CORPUS)?)?)
    }

    /// Similarities recomputed from the stored document vectors; the CSV export
    /// is floored and cannot be read back losslessly.
    fn similarity(&mut self, set: &ArticleSet) -> Result<SimMatrix, CliError> {
        let docs = load_doc_vectors(self.need(DOCVECS)?)?;
        Ok(similarity_matrix(&docs, set)?)
    }

    /// Publisher adjacency rebuilt from the reconstructed edge list, transposed
    /// when configured.
    fn adjacency(&mut self, set: &ArticleSet) -> Result<AdjacencyMatrix, CliError> {
        self.need(ADJACENCY)?;
        let net = read_edges_csv(self.need(EDGES)?, set)?;
        let a = publisher_adjacency(&net, set)?;
        Ok(if self.config.transpose { a.transposed() } else { a })
    }

    fn finish(self) -> Result<(), CliError> {
        let path = self.manifest.write(self.out())?;
        log::info!("wrote {}", path.display());
        Ok(())
    }
}

fn create_out(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))
}

pub fn ingest(config: &PipelineConfig, input: Option<&Path>) -> Result<(), CliError> {
    let input = input
        .map(Path::to_path_buf)
        .or_else(|| config.articles.clone())
        .ok_or_else(|| CliError::Validation("ingest needs an input file or the `articles` config key".into()))?;
    if !input.is_file() {
        return Err(CliError::Validation(format!(
            "input {} does not exist",
            input.display()
        )));
    }
    create_out(&config.out)?;
    let mut run = Run::new("ingest", config);
    run.manifest.input(&input)?;
    let set = load_articles(&input)?;
    let vocab = build_vocabulary(&set, config.min_count)?;

    let corpus = run.path(CORPUS.0);
    set.save_jsonl(&corpus)?;
    let vocab_path = run.path("vocabulary.tsv");
    vocab.save_tsv(&vocab_path)?;
    let daily = run.path(DAILY_COUNTS.0);
    write_daily_counts_csv(&empirical_daily_counts(&set), &daily)?;
    for p in [&corpus, &vocab_path, &daily] {
        run.produced(p)?;
    }
    run.manifest.result("articles", set.len());
    run.manifest.result("vocabulary", vocab.len());
    run.finish()
}

pub fn train(config: &PipelineConfig) -> Result<(), CliError> {
    let mut run = Run::new("train", config);
    let set = run.corpus()?;
    let wv = train_skipgram(&set, &config.skipgram())?;
    let path = run.path(VECTORS.0);
    wv.save(&path)?;
    run.produced(&path)?;
    run.manifest.result("terms", wv.len());
    run.finish()
}

pub fn embed(config: &PipelineConfig) -> Result<(), CliError> {
    let mut run = Run::new("embed", config);
    let set = run.corpus()?;
    let vectors = match &config.vectors {
        Some(p) if p.is_file() => {
            run.manifest.input(p)?;
            p.clone()
        }
        Some(p) => {
            return Err(CliError::Validation(format!(
                "vectors file {} does not exist",
                p.display()
            )))
        }
        None => run.need(VECTORS)?,
    };
    let wv = WordVectors::load(&vectors)?;
    let vocab = build_vocabulary(&set, config.min_count)?;
    let docs = document_vectors(&set, &wv, &tfidf_weights(&set, &vocab));
    let path = run.path(DOCVECS.0);
    save_doc_vectors(&docs, &path)?;
    run.produced(&path)?;
    run.manifest
        .result("documents", docs.iter().filter(|d| !d.is_empty()).count());
    run.manifest
        .result("empty_documents", docs.iter().filter(|d| d.is_empty()).count());
    run.finish()
}

pub fn similarity(config: &PipelineConfig) -> Result<(), CliError> {
    let mut run = Run::new("similarity", config);
    let set = run.corpus()?;
    let sim = run.similarity(&set)?;
    let matrix = run.path("similarity.csv");
    sim.write_csv(&matrix, config.similarity_floor)?;
    let pairwise = run.path(PAIRWISE_HIST.0);
    write_histogram_csv(&sim.pairwise_histogram(config.histogram_bins), &pairwise)?;
    let most = run.path(MOST_SIMILAR_HIST.0);
    write_histogram_csv(&sim.most_similar_histogram(config.histogram_bins), &most)?;
    for p in [&matrix, &pairwise, &most] {
        run.produced(p)?;
    }
    run.manifest
        .result("excluded", (0..sim.len()).filter(|&i| sim.is_excluded(i)).count());
    run.finish()
}

pub fn reconstruct_network(config: &PipelineConfig) -> Result<(), CliError> {
    let mut run = Run::new("reconstruct", config);
    let set = run.corpus()?;
    let sim = run.similarity(&set)?;
    let net = reconstruct(&sim, &set, config.rho, config.gamma_hours)?;
    let edges = run.path(EDGES.0);
    write_edges_csv(&net, &edges)?;
    let graphml = run.path("network.graphml");
    write_graphml(&net, &graphml)?;
    run.produced(&edges)?;
    run.produced(&graphml)?;
    run.manifest.result("rho", config.rho);
    run.manifest.result("gamma_hours", config.gamma_hours);
    run.manifest.result("edges", net.edges().len());
    run.manifest
        .result("giant_component_fraction", giant_component_fraction(&net));

    let truth_path = run.path(TRUTH_EDGES);
    if truth_path.is_file() {
        match read_edges_csv(&truth_path, &set).and_then(|truth| planted_metrics(&net, &truth)) {
            Ok(m) => {
                run.manifest.input(&truth_path)?;
                run.manifest.result("planted_precision", m.precision);
                run.manifest.result("planted_recall", m.recall);
                run.manifest.result("planted_zero_predictions", m.zero_predictions);
            }
            Err(e) => log::warn!(
                "{} does not match the corpus, skipping planted metrics: {e}",
                truth_path.display()
            ),
        }
    }
    run.finish()
}

pub fn sweep_rho(config: &PipelineConfig) -> Result<(), CliError> {
    let mut run = Run::new("sweep-rho", config);
    let set = run.corpus()?;
    let sim = run.similarity(&set)?;
    let curve = threshold_sweep(&sim, &lag_matrix(&set, config.gamma_hours)?, &set, &config.rho_grid())?;
    let path = run.path(RHO_SWEEP.0);
    write_threshold_csv(&curve, &path)?;
    run.produced(&path)?;
    run.manifest.result("target_fraction", config.target_fraction);
    match select_rho(&curve, config.target_fraction) {
        Ok(rho) => run.manifest.result("selected_rho", rho),
        Err(e) => {
            log::warn!("{e}");
            run.manifest.result("selected_rho", serde_json::Value::Null);
        }
    }
    run.finish()
}

pub fn sweep_window(config: &PipelineConfig) -> Result<(), CliError> {
    let mut run = Run::new("sweep-window", config);
    let set = run.corpus()?;
    let sim = run.similarity(&set)?;
    let sweep = window_sweep(&sim, &set, &config.windows)?;
    let summary = run.path("window_sweep.csv");
    write_window_csv(&sweep, &summary)?;
    let lags = run.path(WINDOW_LAGS.0);
    write_window_lags_csv(&sweep, &lags)?;
    run.produced(&summary)?;
    run.produced(&lags)?;
    run.manifest.result("coverage", config.coverage);
    run.manifest
        .result("selected_gamma_hours", select_gamma(&sweep, config.coverage)?);
    run.finish()
}

pub fn adjacency(config: &PipelineConfig) -> Result<(), CliError> {
    let mut run = Run::new("adjacency", config);
    let set = run.corpus()?;
    let net = read_edges_csv(run.need(EDGES)?, &set)?;
    let a = publisher_adjacency(&net, &set)?;
    let path = run.path(ADJACENCY.0);
    a.write_csv(&path)?;
    run.produced(&path)?;
    run.manifest.result("publishers", a.publishers().len());
    run.finish()
}

pub fn simulate(config: &PipelineConfig) -> Result<(), CliError> {
    let mut run = Run::new("simulate", config);
    let set = run.corpus()?;
    let a = run.adjacency(&set)?;
    let traj = integrate(&config.sir(earliest_articles(&set)), &a)?;
    let path = run.path(TRAJECTORY.0);
    traj.write_csv(&path)?;
    let aggregate = run.path(TRAJECTORY_AGGREGATE.0);
    traj.write_aggregate_csv(&aggregate, config.mu_per_day)?;
    run.produced(&path)?;
    run.produced(&aggregate)?;
    run.manifest.result("lambda", config.lambda);
    run.manifest.result("clamped_total", traj.clamp.total);
    run.manifest.result("clamp_min_raw", traj.clamp.min_raw);
    run.manifest.result("clamp_max_raw", traj.clamp.max_raw);
    run.finish()
}

pub fn fit_lambda(config: &PipelineConfig) -> Result<(), CliError> {
    let mut run = Run::new("fit-lambda", config);
    let set = run.corpus()?;
    let a = run.adjacency(&set)?;
    let curve = lambda_sweep(&a, &config.sir(earliest_articles(&set)), &config.lambda_grid)?;
    let path = run.path(LAMBDA_SWEEP.0);
    write_lambda_csv(&curve, &path)?;
    run.produced(&path)?;

    let (low, high) = match config.peak_target() {
        Some(range) => range,
        None => {
            let counts = read_daily_counts_csv(run.need(DAILY_COUNTS)?)?;
            let peak = counts.iter().copied().max().unwrap_or(0) as f64;
            (0.9 * peak, 1.1 * peak)
        }
    };
    run.manifest.result("peak_low", low);
    run.manifest.result("peak_high", high);
    match select_lambda(&curve, low, high) {
        Ok((lo, hi)) => {
            run.manifest.result("lambda_min", lo);
            run.manifest.result("lambda_max", hi);
        }
        Err(e) => {
            log::warn!("{e}");
            run.manifest.result("lambda_min", serde_json::Value::Null);
            run.manifest.result("lambda_max", serde_json::Value::Null);
        }
    }
    run.finish()
}

pub fn realize(config: &PipelineConfig) -> Result<(), CliError> {
    let mut run = Run::new("realize", config);
    let set = run.corpus()?;
    let a = run.adjacency(&set)?;
    let traj = SirTrajectory::read_csv(run.need(TRAJECTORY)?)?;
    let states = realize_states(&traj, &config.realization(), config.seed)?;
    let net = simulated_spread_network(&states, &a, &set, config.seed)?;
    let states_path = run.path("states.csv");
    states.write_csv(&states_path)?;
    let edges = run.path("simulated_edges.csv");
    write_edges_csv(&net, &edges)?;
    let graphml = run.path("simulated_network.graphml");
    write_graphml(&net, &graphml)?;
    for p in [&states_path, &edges, &graphml] {
        run.produced(p)?;
    }
    run.manifest.result("infected", net.nodes().len());
    run.manifest.result("edges", net.edges().len());
    run.finish()
}

pub fn ensemble(config: &PipelineConfig) -> Result<(), CliError> {
    let mut run = Run::new("ensemble", config);
    let traj = SirTrajectory::read_csv(run.need(TRAJECTORY)?)?;
    let summary = run_ensemble(&traj, &config.realization(), config.runs, config.seed)?;
    let path = run.path(ENSEMBLE.0);
    summary.write_csv(&path)?;
    run.produced(&path)?;
    run.manifest.result("runs", summary.n_runs());
    run.manifest.result("days", summary.n_days());
    run.finish()
}

pub fn compare(config: &PipelineConfig) -> Result<(), CliError> {
    let mut run = Run::new("compare", config);
    let summary = EnsembleSummary::read_csv(run.need(ENSEMBLE)?)?;
    let empirical = DailyCounts {
        first_day: None,
        counts: read_daily_counts_csv(run.need(DAILY_COUNTS)?)?,
    };
    let report = compare_empirical(&summary, &empirical, config.offset_days, config.peak_target())?;
    let path = run.path(COMPARISON.0);
    report.write_csv(&path)?;
    run.produced(&path)?;
    run.manifest.result("coverage", report.coverage);
    run.manifest.result("empirical_peak", report.empirical_peak);
    run.manifest.result("empirical_peak_day", report.empirical_peak_day);
    run.manifest.result("model_peak", report.model_peak);
    run.manifest.result("model_peak_day", report.model_peak_day);
    run.manifest.result("peak_delta", report.peak_delta);
    run.manifest.result("peak_day_delta", report.peak_day_delta);
    if let Some(inside) = report.peak_in_target {
        run.manifest.result("peak_in_target", inside);
    }
    run.finish()
}

pub fn synth(config: &PipelineConfig) -> Result<(), CliError> {
    create_out(&config.out)?;
    let mut run = Run::new("synth", config);
    let corpus = generate(&config.synth)?;
    let articles = run.path(SYNTH_ARTICLES);
    corpus.articles.save_jsonl(&articles)?;
    let truth = run.path(TRUTH_EDGES);
    write_edges_csv(&corpus.truth, &truth)?;
    run.produced(&articles)?;
    run.produced(&truth)?;
    run.manifest.result("articles", corpus.articles.len());
    run.manifest.result("edges", corpus.truth.edges().len());
    run.finish()
}

pub fn report(config: &PipelineConfig) -> Result<(), CliError> {
    let mut run = Run::new("report", config);
    let dir = run.path("report");
    let sources = REPORT
        .iter()
        .map(|&(name, source)| Ok((name, run.need(source)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    create_out(&dir)?;
    for (name, from) in sources {
        let to = dir.join(name);
        std::fs::copy(&from, &to).map_err(|e| CliError::Runtime(format!("{}: {e}", to.display())))?;
        run.produced(&to)?;
    }
    run.finish()
}
