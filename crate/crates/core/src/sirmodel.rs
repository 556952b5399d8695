//! Network SIR model over articles.
//!
//! Per-article infection probabilities evolve as
//!
//! ```text
//! dI_i/dt = -I_i + lambda * S_i * sum_j a_ij I_j
//! dS_i/dt =      - lambda * S_i * sum_j a_ij I_j
//! ```
//!
//! in time scaled by the recovery rate `mu`. `a_ij` depends only on the
//! publishers of `i` and `j`: it is the share of infected articles of `j`'s
//! publisher whose infector came from `i`'s publisher.

use std::collections::HashMap;

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::corpus::ArticleSet;
use crate::netreconstruct::SpreadNetwork;
use crate::{Error, Result};

/// Publisher-level estimate of the article adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    publishers: Vec<String>,
    article_ids: Vec<String>,
    article_publisher: Vec<usize>,
    /// `n_xy[x * p + y]`: edges from publisher `x` into publisher `y`.
    n_xy: Vec<u64>,
    /// Infected (non-root) articles per publisher.
    n_y: Vec<u64>,
    rates: Vec<f64>,
    transposed: bool,
}

impl AdjacencyMatrix {
    pub fn len(&self) -> usize {
        self.article_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.article_ids.is_empty()
    }

    pub fn article_ids(&self) -> &[String] {
        &self.article_ids
    }

    pub fn publishers(&self) -> &[String] {
        &self.publishers
    }

    pub fn publisher_of(&self, article: usize) -> usize {
        self.article_publisher[article]
    }

    pub fn is_transposed(&self) -> bool {
        self.transposed
    }

    pub fn n_xy(&self, x: usize, y: usize) -> u64 {
        self.n_xy[x * self.publishers.len() + y]
    }

    pub fn n_y(&self, y: usize) -> u64 {
        self.n_y[y]
    }

    /// `N_XY / N_Y`, or 0 when `N_Y = 0`.
    pub fn publisher_rate(&self, x: usize, y: usize) -> f64 {
        self.rates[x * self.publishers.len() + y]
    }

    /// Entry `a_ij`, honoring the orientation switch.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (x, y) = (self.article_publisher[i], self.article_publisher[j]);
        if self.transposed {
            self.publisher_rate(y, x)
        } else {
            self.publisher_rate(x, y)
        }
    }

    /// The same estimate with `a_ij` and `a_ji` exchanged.
    pub fn transposed(&self) -> Self {
        AdjacencyMatrix {
            transposed: !self.transposed,
            ..self.clone()
        }
    }

    /// `sum_j a_ij v_j` for every `i`, aggregated per publisher in
    /// `O(N + P^2)`. Agrees with the dense sum up to rounding.
    pub fn weighted_row_sums(&self, v: &[f64], out: &mut [f64]) {
        let p = self.publishers.len();
        let mut totals = vec![0.0; p];
        for (k, &x) in self.article_publisher.iter().enumerate() {
            totals[x] += v[k];
        }
        let per_publisher: Vec<f64> = (0..p)
            .map(|x| {
                (0..p)
                    .map(|y| {
                        let r = if self.transposed {
                            self.publisher_rate(y, x)
                        } else {
                            self.publisher_rate(x, y)
                        };
                        r * totals[y]
                    })
                    .sum()
            })
            .collect();
        for (k, o) in out.iter_mut().enumerate() {
            let x = self.article_publisher[k];
            *o = (per_publisher[x] - self.publisher_rate(x, x) * v[k]).max(0.0);
        }
    }

    /// CSV `infector_publisher,infected_publisher,n_xy,n_y,a` for every
    /// publisher pair with at least one edge.
    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["infector_publisher", "infected_publisher", "n_xy", "n_y", "a"])?;
        let p = self.publishers.len();
        for x in 0..p {
            for y in 0..p {
                if self.n_xy(x, y) > 0 {
                    w.write_record([
                        self.publishers[x].clone(),
                        self.publishers[y].clone(),
                        self.n_xy(x, y).to_string(),
                        self.n_y(y).to_string(),
                        self.publisher_rate(x, y).to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Counts publisher-to-publisher infections in `net` and fills
/// `a_ij = N_XY / N_Y` over the articles of `set`.
pub fn publisher_adjacency(net: &SpreadNetwork, set: &ArticleSet) -> Result<AdjacencyMatrix> {
    let mut publishers: Vec<String> = set.iter().map(|a| a.publisher.clone()).collect();
    publishers.sort();
    publishers.dedup();
    let pub_index: HashMap<&str, usize> = publishers.iter().enumerate().map(|(k, p)| (p.as_str(), k)).collect();
    let article_publisher: Vec<usize> = set.iter().map(|a| pub_index[a.publisher.as_str()]).collect();
    let by_id = set.index_by_id();

    let p = publishers.len();
    let mut n_xy = vec![0u64; p * p];
    let mut n_y = vec![0u64; p];
    for (from, to) in net.edge_ids() {
        let look = |id: &str| {
            by_id
                .get(id)
                .copied()
                .ok_or_else(|| Error::NodeSetMismatch(format!("network node {id} is not in the article set")))
        };
        let (x, y) = (article_publisher[look(from)?], article_publisher[look(to)?]);
        n_xy[x * p + y] += 1;
        n_y[y] += 1;
    }
    let rates = (0..p * p)
        .map(|k| match n_y[k % p] {
            0 => 0.0,
            ny => n_xy[k] as f64 / ny as f64,
        })
        .collect();
    Ok(AdjacencyMatrix {
        publishers,
        article_ids: set.iter().map(|a| a.id.clone()).collect(),
        article_publisher,
        n_xy,
        n_y,
        rates,
        transposed: false,
    })
}

/// Right-hand side of the SIR system, summing `a_ij I_j` over `j` in order.
pub fn sir_rhs(rho_s: &[f64], rho_i: &[f64], a: &AdjacencyMatrix, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = a.len();
    if rho_s.len() != n || rho_i.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "state vectors of length {} and {} for {n} articles",
            rho_s.len(),
            rho_i.len()
        )));
    }
    let mut ds = vec![0.0; n];
    let mut di = vec![0.0; n];
    for i in 0..n {
        let mut force = 0.0;
        for j in 0..n {
            force += a.get(i, j) * rho_i[j];
        }
        let infection = lambda * rho_s[i] * force;
        ds[i] = -infection;
        di[i] = -rho_i[i] + infection;
    }
    Ok((ds, di))
}

/// How the force of infection `sum_j a_ij I_j` is evaluated during integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForceMode {
    /// Plain double loop, `O(N^2)` per evaluation.
    Dense,
    /// Per-publisher aggregation, `O(N + P^2)` per evaluation.
    #[default]
    Blocked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SirParams {
    pub lambda: f64,
    /// Recovery rate per day; only maps scaled time onto calendar days.
    pub mu_per_day: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Spacing of the recorded trajectory grid; a multiple of `dt`.
    pub record_dt: f64,
    pub seed_articles: Vec<String>,
    pub force: ForceMode,
}

impl SirParams {
    pub fn new(lambda: f64, seed_articles: Vec<String>) -> Self {
        SirParams {
            lambda,
            mu_per_day: 1.0,
            dt: 0.01,
            t_end: 60.0,
            record_dt: 0.1,
            seed_articles,
            force: ForceMode::default(),
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn record_every(&self) -> usize {
        ((self.record_dt / self.dt).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.mu_per_day > 0.0) {
            return bad(format!("mu_per_day must be > 0, got {}", self.mu_per_day));
        }
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return bad("dt and t_end must be > 0".into());
        }
        let steps = self.t_end / self.dt;
        if (steps - steps.round()).abs() > 1e-6 {
            return bad(format!("t_end {} is not a multiple of dt {}", self.t_end, self.dt));
        }
        let every = self.record_dt / self.dt;
        if !(self.record_dt >= self.dt) || (every - every.round()).abs() > 1e-6 {
            return bad(format!(
                "record_dt {} is not a multiple of dt {}",
                self.record_dt, self.dt
            ));
        }
        if self.seed_articles.is_empty() {
            return bad("seed set is empty".into());
        }
        Ok(())
    }
}

/// Ids of the earliest-published articles (all that share the first timestamp).
pub fn earliest_articles(set: &ArticleSet) -> Vec<String> {
    let Some(first) = set.articles().first() else {
        return Vec::new();
    };
    set.iter()
        .take_while(|a| a.published_at == first.published_at)
        .map(|a| a.id.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClampStats {
    /// Sum of `|clamped - raw|` over all components and steps.
    pub total: f64,
    pub min_raw: f64,
    pub max_raw: f64,
}

/// Probability curves on the recorded grid, row-major `[time][article]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SirTrajectory {
    ids: Vec<String>,
    times: Vec<f64>,
    s: Vec<f64>,
    i: Vec<f64>,
    pub clamp: ClampStats,
}

impl SirTrajectory {
    /// Builds a trajectory from explicit curves; `s` and `i` are `[time][article]`.
    pub fn from_curves(ids: Vec<String>, times: Vec<f64>, s: Vec<f64>, i: Vec<f64>) -> Result<Self> {
        let n = ids.len();
        if s.len() != n * times.len() || i.len() != s.len() {
            return Err(Error::ShapeMismatch("curve lengths do not match ids × times".into()));
        }
        Ok(SirTrajectory {
            ids,
            times,
            s,
            i,
            clamp: ClampStats::default(),
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn n_articles(&self) -> usize {
        self.ids.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn rho_s(&self, k: usize) -> &[f64] {
        let n = self.ids.len();
        &self.s[k * n..(k + 1) * n]
    }

    pub fn rho_i(&self, k: usize) -> &[f64] {
        let n = self.ids.len();
        &self.i[k * n..(k + 1) * n]
    }

    /// `1 - rho_S - rho_I`.
    pub fn rho_r(&self, k: usize, article: usize) -> f64 {
        1.0 - self.rho_s(k)[article] - self.rho_i(k)[article]
    }

    /// Long-form CSV `t,article_id,rho_S,rho_I,rho_R`.
    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "article_id", "rho_S", "rho_I", "rho_R"])?;
        for (k, t) in self.times.iter().enumerate() {
            for (a, id) in self.ids.iter().enumerate() {
                w.write_record([
                    t.to_string(),
                    id.clone(),
                    self.rho_s(k)[a].to_string(),
                    self.rho_i(k)[a].to_string(),
                    self.rho_r(k, a).to_string(),
                ])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads a long-form CSV written by [`SirTrajectory::write_csv`].
    pub fn read_csv(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let (mut ids, mut times, mut s, mut i) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = k + 2;
            let num = |f: usize| {
                rec.get(f)
                    .and_then(|x| x.parse::<f64>().ok())
                    .ok_or_else(|| Error::Malformed {
                        line,
                        message: "expected t,article_id,rho_S,rho_I,rho_R".into(),
                    })
            };
            let t = num(0)?;
            let id = rec.get(1).unwrap_or_default();
            if times.last() != Some(&t) {
                times.push(t);
            }
            if times.len() == 1 {
                ids.push(id.to_string());
            }
            let expected = &ids[(s.len()) % ids.len().max(1)];
            if times.len() > 1 && id != expected {
                return Err(Error::Malformed {
                    line,
                    message: format!("expected article {expected}, found {id}"),
                });
            }
            s.push(num(2)?);
            i.push(num(3)?);
        }
        SirTrajectory::from_curves(ids, times, s, i)
    }

    /// CSV `t,sum_I,expected_daily_incidence`; incidence is the expected number
    /// of new infections per day over the interval starting at `t`.
    pub fn write_aggregate_csv(&self, path: impl AsRef<std::path::Path>, mu_per_day: f64) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "sum_I", "expected_daily_incidence"])?;
        let sums_s: Vec<f64> = (0..self.times.len()).map(|k| self.rho_s(k).iter().sum()).collect();
        for (k, t) in self.times.iter().enumerate() {
            let rate = match self.times.get(k + 1) {
                Some(next) => (sums_s[k] - sums_s[k + 1]) / ((next - t) / mu_per_day),
                None => 0.0,
            };
            let sum_i: f64 = self.rho_i(k).iter().sum();
            w.write_record([t.to_string(), sum_i.to_string(), rate.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Classical fixed-step fourth-order Runge–Kutta from `rho_I = 1` on the
/// seeds and `rho_S = 1` elsewhere. States are clamped to `[0, 1]` after
/// every step.
pub fn integrate(params: &SirParams, a: &AdjacencyMatrix) -> Result<SirTrajectory> {
    params.validate()?;
    let n = a.len();
    let index: HashMap<&str, usize> = a
        .article_ids()
        .iter()
        .enumerate()
        .map(|(k, id)| (id.as_str(), k))
        .collect();
    let mut s = vec![1.0; n];
    let mut i = vec![0.0; n];
    for id in &params.seed_articles {
        let k = *index
            .get(id.as_str())
            .ok_or_else(|| Error::InvalidParameter(format!("seed article {id} not found")))?;
        s[k] = 0.0;
        i[k] = 1.0;
    }

    let rhs = |s: &[f64], i: &[f64], ds: &mut [f64], di: &mut [f64], force: &mut [f64]| match params.force {
        ForceMode::Dense => {
            let (a_ds, a_di) = sir_rhs(s, i, a, params.lambda).expect("shapes checked");
            ds.copy_from_slice(&a_ds);
            di.copy_from_slice(&a_di);
        }
        ForceMode::Blocked => {
            a.weighted_row_sums(i, force);
            for k in 0..s.len() {
                let infection = params.lambda * s[k] * force[k];
                ds[k] = -infection;
                di[k] = -i[k] + infection;
            }
        }
    };

    let steps = params.steps();
    let every = params.record_every();
    let dt = params.dt;
    let mut times = Vec::with_capacity(steps / every + 1);
    let mut s_rec = Vec::with_capacity((steps / every + 1) * n);
    let mut i_rec = Vec::with_capacity((steps / every + 1) * n);
    let mut clamp = ClampStats {
        total: 0.0,
        min_raw: 0.0,
        max_raw: 1.0,
    };

    let mut k = [(); 4].map(|_| (vec![0.0; n], vec![0.0; n]));
    let mut force = vec![0.0; n];
    let (mut s_tmp, mut i_tmp) = (vec![0.0; n], vec![0.0; n]);

    for step in 0..=steps {
        if step % every == 0 {
            times.push(step as f64 * dt);
            s_rec.extend_from_slice(&s);
            i_rec.extend_from_slice(&i);
        }
        if step == steps {
            break;
        }
        for stage in 0..4 {
            let h = match stage {
                0 => 0.0,
                1 | 2 => dt / 2.0,
                _ => dt,
            };
            if stage == 0 {
                s_tmp.copy_from_slice(&s);
                i_tmp.copy_from_slice(&i);
            } else {
                let (ps, pi) = &k[stage - 1];
                for m in 0..n {
                    s_tmp[m] = s[m] + h * ps[m];
                    i_tmp[m] = i[m] + h * pi[m];
                }
            }
            let (ds, di) = &mut k[stage];
            rhs(&s_tmp, &i_tmp, ds, di, &mut force);
        }
        let t_next = (step + 1) as f64 * dt;
        for m in 0..n {
            let new_s = s[m] + dt / 6.0 * (k[0].0[m] + 2.0 * k[1].0[m] + 2.0 * k[2].0[m] + k[3].0[m]);
            let new_i = i[m] + dt / 6.0 * (k[0].1[m] + 2.0 * k[1].1[m] + 2.0 * k[2].1[m] + k[3].1[m]);
            for raw in [new_s, new_i] {
                if !raw.is_finite() || raw.abs() > 1.5 {
                    return Err(Error::Unstable { t: t_next, value: raw });
                }
                clamp.min_raw = clamp.min_raw.min(raw);
                clamp.max_raw = clamp.max_raw.max(raw);
            }
            let (cs, ci) = (new_s.clamp(0.0, 1.0), new_i.clamp(0.0, 1.0));
            clamp.total += (cs - new_s).abs() + (ci - new_i).abs();
            s[m] = cs;
            i[m] = ci;
        }
    }
    Ok(SirTrajectory {
        ids: a.article_ids().to_vec(),
        times,
        s: s_rec,
        i: i_rec,
        clamp,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakStats {
    /// Expected new infections per calendar day.
    pub daily: Vec<f64>,
    pub peak_per_day: f64,
    /// Start of the peak day, in days since the seeds.
    pub peak_time_days: f64,
}

/// Bins the expected incidence `sum_i (S_i(t_k) - S_i(t_k+1))` into days,
/// with wall-clock days `t / mu`. Each grid interval goes to the day of its
/// start; ties in the maximum go to the earliest day.
pub fn peak_statistics(traj: &SirTrajectory, mu_per_day: f64) -> PeakStats {
    let totals: Vec<f64> = (0..traj.times.len()).map(|k| traj.rho_s(k).iter().sum()).collect();
    let mut daily: Vec<f64> = Vec::new();
    for k in 0..traj.times.len().saturating_sub(1) {
        let day = (traj.times[k] / mu_per_day + 1e-9).floor() as usize;
        if daily.len() <= day {
            daily.resize(day + 1, 0.0);
        }
        daily[day] += totals[k] - totals[k + 1];
    }
    let (peak_day, peak) = daily
        .iter()
        .enumerate()
        .fold((0, 0.0), |(bd, bv), (d, &v)| if v > bv { (d, v) } else { (bd, bv) });
    PeakStats {
        daily,
        peak_per_day: peak,
        peak_time_days: peak_day as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaPoint {
    pub lambda: f64,
    pub peak_per_day: f64,
    pub peak_time_days: f64,
}

/// Integrates once per grid value of `lambda`, in parallel.
pub fn lambda_sweep(a: &AdjacencyMatrix, base: &SirParams, grid: &[f64]) -> Result<Vec<LambdaPoint>> {
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("lambda grid must be sorted ascending".into()));
    }
    grid.par_iter()
        .map(|&lambda| {
            let params = SirParams { lambda, ..base.clone() };
            let peak = peak_statistics(&integrate(&params, a)?, params.mu_per_day);
            Ok(LambdaPoint {
                lambda,
                peak_per_day: peak.peak_per_day,
                peak_time_days: peak.peak_time_days,
            })
        })
        .collect()
}

/// `[min, max]` of the grid values whose peak falls in `[low, high]`.
pub fn select_lambda(curve: &[LambdaPoint], low: f64, high: f64) -> Result<(f64, f64)> {
    if !(low < high) {
        return Err(Error::InvalidParameter(format!(
            "target range [{low}, {high}] is empty"
        )));
    }
    let hits: Vec<f64> = curve
        .iter()
        .filter(|p| p.peak_per_day >= low && p.peak_per_day <= high)
        .map(|p| p.lambda)
        .collect();
    let lo = hits.iter().copied().min_by(f64::total_cmp);
    let hi = hits.iter().copied().max_by(f64::total_cmp);
    lo.zip(hi).ok_or(Error::NoLambda { low, high })
}

/// Articles per UTC calendar day, gaps filled with zeros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DailyCounts {
    pub first_day: Option<NaiveDate>,
    pub counts: Vec<u64>,
}

impl DailyCounts {
    pub fn peak(&self) -> Option<(usize, u64)> {
        self.counts
            .iter()
            .copied()
            .enumerate()
            .fold(None, |best, (d, c)| match best {
                Some((_, bc)) if bc >= c => best,
                _ => Some((d, c)),
            })
    }
}

pub fn empirical_daily_counts(set: &ArticleSet) -> DailyCounts {
    let Some(first) = set.articles().first() else {
        return DailyCounts {
            first_day: None,
            counts: Vec::new(),
        };
    };
    let day0 = first.published_at.date_naive();
    let mut counts = Vec::new();
    for a in set.iter() {
        let d = (a.published_at.date_naive() - day0).num_days() as usize;
        if counts.len() <= d {
            counts.resize(d + 1, 0);
        }
        counts[d] += 1;
    }
    DailyCounts {
        first_day: Some(day0),
        counts,
    }
}
