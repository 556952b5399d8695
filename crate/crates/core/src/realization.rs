//! Binary state realizations sampled from SIR probability curves, simulated
//! spread networks, and seeded ensembles compared against observed counts.
//!
//! At each realization step `t > 0`:
//!
//! 1. `I*_t[i] ~ Bernoulli(rho_I_i(t) * S_{t-1}[i])`
//! 2. `R*_t[i] ~ Bernoulli(rho_R_i(t) * I_{t-1}[i])`
//! 3. `I_t = I_{t-1} - R*_t + I*_t`, `S_t = S_{t-1} - I*_t`, `R_t = R_{t-1} + R*_t`
//!
//! with `rho_R = 1 - rho_S - rho_I`. The initial state draws
//! `I_0[i] ~ Bernoulli(rho_I_i(0))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::ArticleSet;
use crate::netreconstruct::{Edge, Node, SpreadNetwork};
use crate::sirmodel::{AdjacencyMatrix, DailyCounts, SirTrajectory};
use crate::stats::quantile_sorted;
use crate::{Error, Result};

/// Slack allowed on curve values before they count as invalid probabilities.
const PROBABILITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum State {
    Susceptible,
    Infectious,
    Recovered,
}

impl State {
    pub fn letter(self) -> char {
        match self {
            State::Susceptible => 'S',
            State::Infectious => 'I',
            State::Recovered => 'R',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizationConfig {
    /// Realization step in scaled time; a multiple of the trajectory grid.
    pub dt_real: f64,
    pub mu_per_day: f64,
}

impl Default for RealizationConfig {
    fn default() -> Self {
        RealizationConfig {
            dt_real: 0.1,
            mu_per_day: 1.0,
        }
    }
}

impl RealizationConfig {
    /// Trajectory record indices visited by the realization.
    fn grid(&self, traj: &SirTrajectory) -> Result<Vec<usize>> {
        let times = traj.times();
        if times.len() < 2 {
            return Ok((0..times.len()).collect());
        }
        let spacing = times[1] - times[0];
        let stride = self.dt_real / spacing;
        if !(self.dt_real > 0.0) || stride < 1.0 - 1e-9 || (stride - stride.round()).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "realization step {} is not a multiple of the trajectory grid {spacing}",
                self.dt_real
            )));
        }
        if !(self.mu_per_day > 0.0) {
            return Err(Error::InvalidParameter("mu_per_day must be > 0".into()));
        }
        Ok((0..times.len()).step_by(stride.round() as usize).collect())
    }

    fn day_of(&self, t: f64) -> usize {
        (t / self.mu_per_day + 1e-9).floor() as usize
    }
}

/// Sampled S/I/R history, row-major `[step][article]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    ids: Vec<String>,
    times: Vec<f64>,
    mu_per_day: f64,
    states: Vec<State>,
    newly_infected: Vec<bool>,
}

impl StateMatrix {
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn n_steps(&self) -> usize {
        self.times.len()
    }

    pub fn n_articles(&self) -> usize {
        self.ids.len()
    }

    /// Scaled time of each step.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self, step: usize) -> &[State] {
        let n = self.ids.len();
        &self.states[step * n..(step + 1) * n]
    }

    /// `I*_t`: articles infected at this step. Always empty at step 0.
    pub fn newly_infected(&self, step: usize) -> &[bool] {
        let n = self.ids.len();
        &self.newly_infected[step * n..(step + 1) * n]
    }

    /// Infections per calendar day, excluding the initial state.
    pub fn daily_incidence(&self) -> Vec<u64> {
        let config = RealizationConfig {
            dt_real: 1.0,
            mu_per_day: self.mu_per_day,
        };
        let mut daily = Vec::new();
        for step in 1..self.n_steps() {
            let day = config.day_of(self.times[step - 1]);
            if daily.len() <= day {
                daily.resize(day + 1, 0);
            }
            daily[day] += self.newly_infected(step).iter().filter(|&&b| b).count() as u64;
        }
        daily
    }

    /// Long-form CSV `t,article_id,state`.
    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "article_id", "state"])?;
        for (step, t) in self.times.iter().enumerate() {
            for (id, s) in self.ids.iter().zip(self.states(step)) {
                w.write_record([t.to_string(), id.clone(), s.letter().to_string()])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn checked_probability(value: f64, article: usize, step: usize) -> Result<f64> {
    if (-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&value) {
        Ok(value.clamp(0.0, 1.0))
    } else {
        Err(Error::ProbabilityOutOfRange { article, step, value })
    }
}

fn bernoulli<R: Rng>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

/// Runs the sampling procedure, calling `on_step(step, states, newly)` for the
/// initial state and every following step.
fn realize_with<R: Rng>(
    traj: &SirTrajectory,
    grid: &[usize],
    rng: &mut R,
    mut on_step: impl FnMut(usize, &[State], &[bool]),
) -> Result<()> {
    let n = traj.n_articles();
    let mut states = vec![State::Susceptible; n];
    let mut newly = vec![false; n];
    let Some(&first) = grid.first() else {
        return Ok(());
    };
    for (a, st) in states.iter_mut().enumerate() {
        if bernoulli(rng, checked_probability(traj.rho_i(first)[a], a, 0)?) {
            *st = State::Infectious;
        }
    }
    on_step(0, &states, &newly);

    for (step, &k) in grid.iter().enumerate().skip(1) {
        let (rho_i, rho_s) = (traj.rho_i(k), traj.rho_s(k));
        for a in 0..n {
            newly[a] = false;
            match states[a] {
                State::Susceptible => {
                    if bernoulli(rng, checked_probability(rho_i[a], a, step)?) {
                        states[a] = State::Infectious;
                        newly[a] = true;
                    }
                }
                State::Infectious => {
                    let rho_r = 1.0 - rho_s[a] - rho_i[a];
                    if bernoulli(rng, checked_probability(rho_r, a, step)?) {
                        states[a] = State::Recovered;
                    }
                }
                State::Recovered => {}
            }
        }
        on_step(step, &states, &newly);
    }
    Ok(())
}

/// Samples one state history from `traj` with a generator seeded by `seed`.
pub fn realize_states(traj: &SirTrajectory, config: &RealizationConfig, seed: u64) -> Result<StateMatrix> {
    let grid = config.grid(traj)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = traj.n_articles();
    let mut all_states = Vec::with_capacity(grid.len() * n);
    let mut all_newly = Vec::with_capacity(grid.len() * n);
    realize_with(traj, &grid, &mut rng, |_, s, new| {
        all_states.extend_from_slice(s);
        all_newly.extend_from_slice(new);
    })?;
    Ok(StateMatrix {
        ids: traj.ids().to_vec(),
        times: grid.iter().map(|&k| traj.times()[k]).collect(),
        mu_per_day: config.mu_per_day,
        states: all_states,
        newly_infected: all_newly,
    })
}

/// Candidate infectors of article `i` at `step`: `I_{t-1}[j] * a_ji` for every
/// `j` with positive weight.
pub fn infector_weights(states: &StateMatrix, a: &AdjacencyMatrix, step: usize, i: usize) -> Vec<(usize, f64)> {
    if step == 0 {
        return Vec::new();
    }
    states
        .states(step - 1)
        .iter()
        .enumerate()
        .filter(|&(j, &s)| s == State::Infectious && j != i)
        .map(|(j, _)| (j, a.get(j, i)))
        .filter(|&(_, w)| w > 0.0)
        .collect()
}

/// Draws one candidate with probability proportional to its weight.
pub fn draw_infector<R: Rng + ?Sized>(weights: &[(usize, f64)], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().map(|w| w.1).sum();
    if !(total > 0.0) {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    for &(j, w) in weights {
        if u < w {
            return Some(j);
        }
        u -= w;
    }
    weights.last().map(|w| w.0)
}

/// Assigns an infector to every infection in `states` by sampling among the
/// infectious articles of the previous step, weighted by column `i` of `a`.
///
/// Nodes are the articles that were ever infectious, in publication order;
/// initial infections and infections with no weighted candidate are roots.
pub fn simulated_spread_network(
    states: &StateMatrix,
    a: &AdjacencyMatrix,
    set: &ArticleSet,
    seed: u64,
) -> Result<SpreadNetwork> {
    if a.article_ids() != states.ids() || set.len() != states.n_articles() {
        return Err(Error::NodeSetMismatch(
            "states, adjacency and articles must cover the same articles".into(),
        ));
    }
    let n = states.n_articles();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut infected_at: Vec<Option<usize>> = vec![None; n];
    for (k, st) in states.states(0).iter().enumerate() {
        if *st == State::Infectious {
            infected_at[k] = Some(0);
        }
    }
    let mut picks = Vec::new();
    for step in 1..states.n_steps() {
        for (i, &new) in states.newly_infected(step).iter().enumerate() {
            if !new {
                continue;
            }
            infected_at[i] = Some(step);
            if let Some(j) = draw_infector(&infector_weights(states, a, step, i), &mut rng) {
                picks.push((j, i, step));
            }
        }
    }

    let mut node_of = vec![usize::MAX; n];
    let mut nodes = Vec::new();
    for (k, at) in infected_at.iter().enumerate() {
        if at.is_some() {
            node_of[k] = nodes.len();
            let art = set.get(k);
            nodes.push(Node {
                id: art.id.clone(),
                publisher: art.publisher.clone(),
                published_at: art.published_at,
            });
        }
    }
    let hours_per_unit = 24.0 / states.mu_per_day;
    let edges = picks
        .into_iter()
        .map(|(j, i, step)| {
            let from = infected_at[j].expect("infector was infectious");
            Edge {
                infector: node_of[j],
                infected: node_of[i],
                similarity: None,
                lag_hours: (states.times[step] - states.times[from]) * hours_per_unit,
                step: Some(step),
            }
        })
        .collect();
    SpreadNetwork::new(nodes, edges)
}

/// Per-day incidence across independent realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    /// `runs[r][day]`: infections on `day` in run `r`.
    pub runs: Vec<Vec<u32>>,
    pub mean: Vec<f64>,
    /// 2.5% quantile, lowered to the mean where the mean falls below it.
    pub lo: Vec<f64>,
    /// 97.5% quantile, raised to the mean where the mean exceeds it.
    pub hi: Vec<f64>,
}

impl EnsembleSummary {
    pub fn n_runs(&self) -> usize {
        self.runs.len()
    }

    pub fn n_days(&self) -> usize {
        self.mean.len()
    }

    /// Rebuilds the summary statistics from per-run curves of equal length.
    pub fn from_runs(runs: Vec<Vec<u32>>) -> Self {
        let days = runs.first().map_or(0, Vec::len);
        let mut mean = vec![0.0; days];
        let mut lo = vec![0.0; days];
        let mut hi = vec![0.0; days];
        let mut column = vec![0.0; runs.len()];
        for d in 0..days {
            for (c, r) in column.iter_mut().zip(&runs) {
                *c = f64::from(r[d]);
            }
            mean[d] = column.iter().sum::<f64>() / runs.len() as f64;
            column.sort_by(f64::total_cmp);
            lo[d] = quantile_sorted(&column, 0.025).min(mean[d]);
            hi[d] = quantile_sorted(&column, 0.975).max(mean[d]);
        }
        EnsembleSummary { runs, mean, lo, hi }
    }
}

impl EnsembleSummary {
    /// CSV `day,mean,lo95,hi95`.
    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["day", "mean", "lo95", "hi95"])?;
        for d in 0..self.n_days() {
            w.write_record([
                d.to_string(),
                self.mean[d].to_string(),
                self.lo[d].to_string(),
                self.hi[d].to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads the per-day statistics written by [`EnsembleSummary::write_csv`];
    /// per-run curves are not stored, so `runs` comes back empty.
    pub fn read_csv(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let (mut mean, mut lo, mut hi) = (Vec::new(), Vec::new(), Vec::new());
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |f: usize| {
                rec.get(f)
                    .and_then(|x| x.parse::<f64>().ok())
                    .ok_or_else(|| Error::Malformed {
                        line: k + 2,
                        message: "expected day,mean,lo95,hi95".into(),
                    })
            };
            mean.push(num(1)?);
            lo.push(num(2)?);
            hi.push(num(3)?);
        }
        Ok(EnsembleSummary {
            runs: Vec::new(),
            mean,
            lo,
            hi,
        })
    }
}

/// Generator for run `run_index` of an ensemble: a ChaCha stream keyed by the
/// master seed, one stream per run.
pub fn run_rng(master_seed: u64, run_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run_index);
    rng
}

/// `n_runs` independent realizations reduced to per-day incidence. Results do
/// not depend on how runs are scheduled across threads.
pub fn run_ensemble(
    traj: &SirTrajectory,
    config: &RealizationConfig,
    n_runs: usize,
    master_seed: u64,
) -> Result<EnsembleSummary> {
    if n_runs == 0 {
        return Err(Error::InvalidParameter("n_runs must be >= 1".into()));
    }
    let grid = config.grid(traj)?;
    let times: Vec<f64> = grid.iter().map(|&k| traj.times()[k]).collect();
    let n_days = times
        .len()
        .checked_sub(2)
        .map_or(0, |last| config.day_of(times[last]) + 1);
    let runs = (0..n_runs as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = run_rng(master_seed, r);
            let mut daily = vec![0u32; n_days];
            realize_with(traj, &grid, &mut rng, |step, _, newly| {
                if step > 0 {
                    daily[config.day_of(times[step - 1])] += newly.iter().filter(|&&b| b).count() as u32;
                }
            })?;
            Ok(daily)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleSummary::from_runs(runs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    /// Day index relative to the start of the simulation.
    pub day: usize,
    pub empirical: f64,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl ComparisonRow {
    pub fn inside(&self) -> bool {
        self.empirical >= self.lo && self.empirical <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    /// Share of compared days with the empirical count inside the envelope.
    pub coverage: f64,
    pub empirical_peak: f64,
    pub empirical_peak_day: usize,
    pub model_peak: f64,
    pub model_peak_day: usize,
    /// `empirical_peak - model_peak`.
    pub peak_delta: f64,
    /// `empirical_peak_day - model_peak_day`.
    pub peak_day_delta: i64,
    /// Whether the empirical peak lies in the requested target range.
    pub peak_in_target: Option<bool>,
}

impl ComparisonReport {
    /// CSV `day,empirical,mean,lo95,hi95`.
    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["day", "empirical", "mean", "lo95", "hi95"])?;
        for r in &self.rows {
            w.write_record([
                r.day.to_string(),
                r.empirical.to_string(),
                r.mean.to_string(),
                r.lo.to_string(),
                r.hi.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn peak_of(values: impl Iterator<Item = f64>) -> (usize, f64) {
    values.enumerate().fold(
        (0, f64::NEG_INFINITY),
        |(bd, bv), (d, v)| if v > bv { (d, v) } else { (bd, bv) },
    )
}

/// Aligns simulation day 0 with empirical day `offset` and compares the
/// overlapping days.
pub fn compare_empirical(
    summary: &EnsembleSummary,
    empirical: &DailyCounts,
    offset: usize,
    target: Option<(f64, f64)>,
) -> Result<ComparisonReport> {
    let days = summary.n_days().min(empirical.counts.len().saturating_sub(offset));
    if days == 0 {
        return Err(Error::DisjointRanges);
    }
    let rows: Vec<ComparisonRow> = (0..days)
        .map(|d| ComparisonRow {
            day: d,
            empirical: empirical.counts[d + offset] as f64,
            mean: summary.mean[d],
            lo: summary.lo[d],
            hi: summary.hi[d],
        })
        .collect();
    let inside = rows.iter().filter(|r| r.inside()).count();
    let (e_day, e_peak) = peak_of(rows.iter().map(|r| r.empirical));
    let (m_day, m_peak) = peak_of(rows.iter().map(|r| r.mean));
    Ok(ComparisonReport {
        coverage: inside as f64 / rows.len() as f64,
        empirical_peak: e_peak,
        empirical_peak_day: e_day,
        model_peak: m_peak,
        model_peak_day: m_day,
        peak_delta: e_peak - m_peak,
        peak_day_delta: e_day as i64 - m_day as i64,
        peak_in_target: target.map(|(lo, hi)| e_peak >= lo && e_peak <= hi),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Trajectory with explicit curves on a 0.1-spaced grid.
    fn traj(s: Vec<Vec<f64>>, i: Vec<Vec<f64>>) -> SirTrajectory {
        let n = s[0].len();
        let times = (0..s.len()).map(|k| k as f64 * 0.1).collect();
        SirTrajectory::from_curves((0..n).map(|a| format!("a{a}")).collect(), times, s.concat(), i.concat()).unwrap()
    }

    #[test]
    fn certain_infection() {
        let t = traj(vec![vec![1.0], vec![0.0]], vec![vec![0.0], vec![1.0]]);
        for seed in 0..20 {
            let m = realize_states(&t, &RealizationConfig::default(), seed).unwrap();
            assert_eq!(m.states(0), &[State::Susceptible]);
            assert_eq!(m.states(1), &[State::Infectious]);
            assert!(m.newly_infected(1)[0]);
        }
    }

    #[test]
    fn non_susceptible_never_reinfected() {
        // Article starts infectious, stays so (rho_R = 0), so it can never be newly infected.
        let t = traj(vec![vec![0.0]; 5], vec![vec![1.0]; 5]);
        let m = realize_states(&t, &RealizationConfig::default(), 3).unwrap();
        for step in 0..5 {
            assert!(!m.newly_infected(step)[0]);
            assert_eq!(m.states(step)[0], State::Infectious);
        }
    }

    #[test]
    fn invalid_probabilities_are_rejected() {
        let t = traj(vec![vec![1.0], vec![0.0]], vec![vec![0.0], vec![1.2]]);
        assert!(matches!(
            realize_states(&t, &RealizationConfig::default(), 1),
            Err(Error::ProbabilityOutOfRange { step: 1, .. })
        ));
        let t = traj(vec![vec![1.0], vec![0.0]], vec![vec![0.0], vec![1.0]]);
        let odd = RealizationConfig {
            dt_real: 0.15,
            ..RealizationConfig::default()
        };
        assert!(realize_states(&t, &odd, 1).is_err());
    }

    #[test]
    fn multinomial_draw() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(draw_infector(&[(7, 0.4)], &mut rng), Some(7));
        assert_eq!(draw_infector(&[], &mut rng), None);
        assert_eq!(draw_infector(&[(1, 0.0)], &mut rng), None);
    }

    #[test]
    fn ensemble_of_one_is_its_run() {
        let t = traj(
            vec![vec![1.0, 0.0], vec![0.6, 0.0], vec![0.3, 0.0], vec![0.2, 0.0]],
            vec![vec![0.0, 1.0], vec![0.4, 0.7], vec![0.5, 0.5], vec![0.4, 0.3]],
        );
        let s = run_ensemble(&t, &RealizationConfig::default(), 1, 11).unwrap();
        assert_eq!(s.n_runs(), 1);
        let run: Vec<f64> = s.runs[0].iter().map(|&x| f64::from(x)).collect();
        assert_eq!(s.mean, run);
        assert_eq!(s.lo, run);
        assert_eq!(s.hi, run);
        assert!(run_ensemble(&t, &RealizationConfig::default(), 0, 11).is_err());
    }

    #[test]
    fn summary_csv_round_trip() {
        let s = EnsembleSummary::from_runs(vec![vec![1, 4, 0], vec![3, 2, 0], vec![2, 2, 1]]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ensemble.csv");
        s.write_csv(&p).unwrap();
        let back = EnsembleSummary::read_csv(&p).unwrap();
        assert_eq!((back.mean, back.lo, back.hi), (s.mean, s.lo, s.hi));
        assert!(back.runs.is_empty());
    }

    #[test]
    fn envelope_brackets_mean() {
        let runs = vec![vec![0, 5], vec![0, 6], vec![100, 7]];
        let s = EnsembleSummary::from_runs(runs);
        for d in 0..2 {
            assert!(s.lo[d] <= s.mean[d] && s.mean[d] <= s.hi[d]);
        }
    }

    #[test]
    fn comparison_against_itself() {
        let s = EnsembleSummary::from_runs(vec![vec![1, 4, 2], vec![3, 6, 2]]);
        let emp = DailyCounts {
            first_day: None,
            counts: vec![2, 5, 2],
        };
        let r = compare_empirical(&s, &emp, 0, None).unwrap();
        assert_eq!(r.coverage, 1.0);
        assert_eq!((r.peak_delta, r.peak_day_delta), (0.0, 0));
        assert!(compare_empirical(&s, &emp, 3, None).is_err());

        let shifted = DailyCounts {
            first_day: None,
            counts: vec![0, 0, 2, 5, 2],
        };
        assert_eq!(compare_empirical(&s, &shifted, 2, None).unwrap().coverage, 1.0);
    }

    #[test]
    fn peak_in_target_range() {
        let s = EnsembleSummary::from_runs(vec![vec![100, 280, 90]]);
        let emp = DailyCounts {
            first_day: None,
            counts: vec![120, 275, 60],
        };
        let r = compare_empirical(&s, &emp, 0, Some((250.0, 300.0))).unwrap();
        assert_eq!(r.peak_in_target, Some(true));
        assert_eq!(r.peak_delta, -5.0);
        let r = compare_empirical(&s, &emp, 0, Some((300.0, 400.0))).unwrap();
        assert_eq!(r.peak_in_target, Some(false));
    }
}
