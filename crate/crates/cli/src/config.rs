//! Flat `key = value` pipeline configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! rejected so typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use contagion_core::embedding::SkipGramParams;
use contagion_core::realization::RealizationConfig;
use contagion_core::sirmodel::{ForceMode, SirParams};
use contagion_core::synth::{LagDistribution, SynthConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub articles: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    pub out: PathBuf,

    pub min_count: usize,
    pub dims: usize,
    pub window: usize,
    pub negative: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub train_seed: u64,

    pub similarity_floor: f64,
    pub histogram_bins: usize,

    pub rho: f64,
    pub gamma_hours: f64,
    pub rho_grid_points: usize,
    pub target_fraction: f64,
    pub windows: Vec<f64>,
    pub coverage: f64,

    pub lambda: f64,
    pub mu_per_day: f64,
    pub dt: f64,
    pub t_end: f64,
    pub record_dt: f64,
    pub force: ForceMode,
    pub transpose: bool,
    pub lambda_grid: Vec<f64>,
    pub peak_low: Option<f64>,
    pub peak_high: Option<f64>,

    pub runs: usize,
    pub seed: u64,
    pub dt_real: f64,
    pub offset_days: usize,

    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let sg = SkipGramParams::default();
        PipelineConfig {
            articles: None,
            vectors: None,
            out: PathBuf::from("out"),
            min_count: sg.min_count,
            dims: sg.dims,
            window: sg.window,
            negative: sg.negative_samples,
            epochs: sg.epochs,
            learning_rate: sg.initial_learning_rate,
            train_seed: sg.seed,
            similarity_floor: 0.5,
            histogram_bins: 40,
            rho: 0.8,
            gamma_hours: 168.0,
            rho_grid_points: 50,
            target_fraction: 0.8,
            windows: (1..=15).map(|d| d as f64 * 24.0).collect(),
            coverage: 0.95,
            lambda: 0.05,
            mu_per_day: 1.0,
            dt: 0.01,
            t_end: 60.0,
            record_dt: 0.1,
            force: ForceMode::Blocked,
            transpose: false,
            lambda_grid: (0..=40).map(|k| k as f64 / 400.0).collect(),
            peak_low: None,
            peak_high: None,
            runs: 10_000,
            seed: 1,
            dt_real: 0.1,
            offset_days: 0,
            synth: SynthConfig::default(),
        }
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, String> {
    value
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("{key}: bad number {v:?}")))
        .collect()
}

fn format_list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = PipelineConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Validation(format!("{}:{}: expected key = value", path.display(), n + 1)))?;
            config
                .set(key.trim(), value.trim())
                .map_err(|m| CliError::Validation(format!("{}:{}: {m}", path.display(), n + 1)))?;
        }
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value.parse().map_err(|_| format!("{key}: cannot parse {value:?}"))
        }
        let lag = |c: &SynthConfig| match c.lag {
            LagDistribution::TruncatedExponential { mean_hours, max_hours } => (mean_hours, max_hours),
            LagDistribution::Uniform { max_hours, .. } => (max_hours / 2.0, max_hours),
        };
        match key {
            "articles" => self.articles = Some(PathBuf::from(value)),
            "vectors" => self.vectors = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "min_count" => self.min_count = num(key, value)?,
            "dims" => self.dims = num(key, value)?,
            "window" => self.window = num(key, value)?,
            "negative" => self.negative = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "train_seed" => self.train_seed = num(key, value)?,
            "similarity_floor" => self.similarity_floor = num(key, value)?,
            "histogram_bins" => self.histogram_bins = num(key, value)?,
            "rho" => self.rho = num(key, value)?,
            "gamma_hours" => self.gamma_hours = num(key, value)?,
            "rho_grid_points" => self.rho_grid_points = num(key, value)?,
            "target_fraction" => self.target_fraction = num(key, value)?,
            "windows" => self.windows = parse_list(key, value)?,
            "coverage" => self.coverage = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "mu_per_day" => self.mu_per_day = num(key, value)?,
            "dt" => self.dt = num(key, value)?,
            "t_end" => self.t_end = num(key, value)?,
            "record_dt" => self.record_dt = num(key, value)?,
            "force" => {
                self.force = match value {
                    "blocked" => ForceMode::Blocked,
                    "dense" => ForceMode::Dense,
                    _ => return Err(format!("force: expected blocked or dense, got {value:?}")),
                }
            }
            "transpose" => self.transpose = num(key, value)?,
            "lambda_grid" => self.lambda_grid = parse_list(key, value)?,
            "peak_low" => self.peak_low = Some(num(key, value)?),
            "peak_high" => self.peak_high = Some(num(key, value)?),
            "runs" => self.runs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "dt_real" => self.dt_real = num(key, value)?,
            "offset_days" => self.offset_days = num(key, value)?,
            "synth_cascades" => self.synth.n_cascades = num(key, value)?,
            "synth_articles_per_cascade" => self.synth.articles_per_cascade = num(key, value)?,
            "synth_topic_vocabulary" => self.synth.topic_vocabulary = num(key, value)?,
            "synth_shared_vocabulary" => self.synth.shared_vocabulary = num(key, value)?,
            "synth_overlap" => self.synth.overlap = num(key, value)?,
            "synth_tokens" => self.synth.tokens_per_article = num(key, value)?,
            "synth_copy_noise" => self.synth.copy_noise = num(key, value)?,
            "synth_lag_mean_hours" => {
                let (_, max) = lag(&self.synth);
                self.synth.lag = LagDistribution::TruncatedExponential {
                    mean_hours: num(key, value)?,
                    max_hours: max,
                };
            }
            "synth_lag_max_hours" => {
                let (mean, _) = lag(&self.synth);
                self.synth.lag = LagDistribution::TruncatedExponential {
                    mean_hours: mean,
                    max_hours: num(key, value)?,
                };
            }
            "synth_root_spread_hours" => self.synth.root_spread_hours = num(key, value)?,
            "synth_publishers" => self.synth.publishers = num(key, value)?,
            "synth_seed" => self.synth.seed = num(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn skipgram(&self) -> SkipGramParams {
        SkipGramParams {
            min_count: self.min_count,
            dims: self.dims,
            window: self.window,
            negative_samples: self.negative,
            epochs: self.epochs,
            initial_learning_rate: self.learning_rate,
            seed: self.train_seed,
        }
    }

    pub fn sir(&self, seed_articles: Vec<String>) -> SirParams {
        SirParams {
            lambda: self.lambda,
            mu_per_day: self.mu_per_day,
            dt: self.dt,
            t_end: self.t_end,
            record_dt: self.record_dt,
            seed_articles,
            force: self.force,
        }
    }

    pub fn realization(&self) -> RealizationConfig {
        RealizationConfig {
            dt_real: self.dt_real,
            mu_per_day: self.mu_per_day,
        }
    }

    pub fn rho_grid(&self) -> Vec<f64> {
        let n = self.rho_grid_points;
        (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
    }

    pub fn peak_target(&self) -> Option<(f64, f64)> {
        self.peak_low.zip(self.peak_high)
    }

    /// Checks every numeric field against the preconditions of the operation
    /// that consumes it.
    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::Validation(m));
        self.skipgram()
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        self.sir(vec!["-".into()])
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        self.synth.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        if !(-1.0..=1.0).contains(&self.similarity_floor) {
            return fail(format!("similarity_floor {} not in [-1, 1]", self.similarity_floor));
        }
        if self.histogram_bins == 0 {
            return fail("histogram_bins must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return fail(format!("rho {} not in [0, 1]", self.rho));
        }
        if !(self.gamma_hours > 0.0) {
            return fail(format!("gamma_hours {} must be > 0", self.gamma_hours));
        }
        if self.rho_grid_points < 2 {
            return fail("rho_grid_points must be >= 2".into());
        }
        if !(self.target_fraction > 0.0 && self.target_fraction <= 1.0) {
            return fail(format!("target_fraction {} not in (0, 1]", self.target_fraction));
        }
        if self.windows.is_empty() || self.windows.iter().any(|&w| !(w > 0.0)) {
            return fail("windows must be a non-empty list of positive hours".into());
        }
        if self.windows.windows(2).any(|w| w[0] >= w[1]) {
            return fail("windows must be strictly increasing".into());
        }
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return fail(format!("coverage {} not in (0, 1]", self.coverage));
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|&l| !(l >= 0.0)) {
            return fail("lambda_grid must be a non-empty list of values >= 0".into());
        }
        if self.lambda_grid.windows(2).any(|w| w[0] > w[1]) {
            return fail("lambda_grid must be sorted ascending".into());
        }
        match (self.peak_low, self.peak_high) {
            (Some(lo), Some(hi)) if !(lo < hi) => return fail(format!("peak range [{lo}, {hi}] is empty")),
            (Some(_), None) | (None, Some(_)) => return fail("set both peak_low and peak_high, or neither".into()),
            _ => {}
        }
        if self.runs == 0 {
            return fail("runs must be >= 1".into());
        }
        let stride = self.dt_real / self.record_dt;
        if !(self.dt_real >= self.record_dt) || (stride - stride.round()).abs() > 1e-6 {
            return fail(format!(
                "dt_real {} must be a multiple of record_dt {}",
                self.dt_real, self.record_dt
            ));
        }
        Ok(())
    }

    /// Every setting as strings, for run manifests.
    pub fn parameters(&self) -> BTreeMap<String, String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let lag = match self.synth.lag {
            LagDistribution::TruncatedExponential { mean_hours, max_hours } => {
                format!("truncated_exponential(mean={mean_hours}, max={max_hours})")
            }
            LagDistribution::Uniform { min_hours, max_hours } => format!("uniform({min_hours}, {max_hours})"),
        };
        let force = match self.force {
            ForceMode::Blocked => "blocked",
            ForceMode::Dense => "dense",
        };
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            ("articles", path(&self.articles)),
            ("vectors", path(&self.vectors)),
            ("out", self.out.display().to_string()),
            ("min_count", self.min_count.to_string()),
            ("dims", self.dims.to_string()),
            ("window", self.window.to_string()),
            ("negative", self.negative.to_string()),
            ("epochs", self.epochs.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("train_seed", self.train_seed.to_string()),
            ("similarity_floor", self.similarity_floor.to_string()),
            ("histogram_bins", self.histogram_bins.to_string()),
            ("rho", self.rho.to_string()),
            ("gamma_hours", self.gamma_hours.to_string()),
            ("rho_grid_points", self.rho_grid_points.to_string()),
            ("target_fraction", self.target_fraction.to_string()),
            ("windows", format_list(&self.windows)),
            ("coverage", self.coverage.to_string()),
            ("lambda", self.lambda.to_string()),
            ("mu_per_day", self.mu_per_day.to_string()),
            ("dt", self.dt.to_string()),
            ("t_end", self.t_end.to_string()),
            ("record_dt", self.record_dt.to_string()),
            ("force", force.to_string()),
            ("transpose", self.transpose.to_string()),
            ("lambda_grid", format_list(&self.lambda_grid)),
            ("peak_low", opt(self.peak_low)),
            ("peak_high", opt(self.peak_high)),
            ("runs", self.runs.to_string()),
            ("seed", self.seed.to_string()),
            ("dt_real", self.dt_real.to_string()),
            ("offset_days", self.offset_days.to_string()),
            ("synth_cascades", self.synth.n_cascades.to_string()),
            (
                "synth_articles_per_cascade",
                self.synth.articles_per_cascade.to_string(),
            ),
            ("synth_topic_vocabulary", self.synth.topic_vocabulary.to_string()),
            ("synth_shared_vocabulary", self.synth.shared_vocabulary.to_string()),
            ("synth_overlap", self.synth.overlap.to_string()),
            ("synth_tokens", self.synth.tokens_per_article.to_string()),
            ("synth_copy_noise", self.synth.copy_noise.to_string()),
            ("synth_lag", lag),
            ("synth_root_spread_hours", self.synth.root_spread_hours.to_string()),
            ("synth_publishers", self.synth.publishers.to_string()),
            ("synth_seed", self.synth.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<PipelineConfig, CliError> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pipeline.conf");
        std::fs::write(&p, text).unwrap();
        PipelineConfig::load(&p)
    }

    #[test]
    fn parses_flat_file() {
        let c = load("# comment\n\nrho = 0.7\nwindows = 24, 48,72\nforce=dense\nsynth_lag_max_hours = 72\n").unwrap();
        assert_eq!(c.rho, 0.7);
        assert_eq!(c.windows, vec![24.0, 48.0, 72.0]);
        assert_eq!(c.force, ForceMode::Dense);
        assert_eq!(
            c.synth.lag,
            LagDistribution::TruncatedExponential {
                mean_hours: 24.0,
                max_hours: 72.0
            }
        );
        assert_eq!(c.gamma_hours, 168.0);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(matches!(load("rhoo = 0.7\n"), Err(CliError::Validation(m)) if m.contains("unknown key")));
        assert!(matches!(load("rho 0.7\n"), Err(CliError::Validation(m)) if m.contains(":1:")));
        assert!(load("dims = many\n").is_err());
    }

    #[test]
    fn validation_uses_module_preconditions() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad = [
            PipelineConfig {
                rho: 1.5,
                ..PipelineConfig::default()
            },
            PipelineConfig {
                dims: 0,
                ..PipelineConfig::default()
            },
            PipelineConfig {
                dt: 0.0,
                ..PipelineConfig::default()
            },
            PipelineConfig {
                runs: 0,
                ..PipelineConfig::default()
            },
            PipelineConfig {
                windows: vec![48.0, 24.0],
                ..PipelineConfig::default()
            },
            PipelineConfig {
                dt_real: 0.15,
                ..PipelineConfig::default()
            },
            PipelineConfig {
                peak_low: Some(3.0),
                ..PipelineConfig::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn default_rho_grid_has_fifty_points() {
        let g = PipelineConfig::default().rho_grid();
        assert_eq!(g.len(), 50);
        assert_eq!((g[0], g[49]), (0.0, 1.0));
    }
}
