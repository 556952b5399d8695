//! Reconstruction of the empirical spread network from similarities and
//! publication lags, plus the threshold and window sweeps used to pick
//! `rho` and `gamma`.

use std::collections::HashMap;

use chrono::{DateTime, Utc};
use rayon::prelude::*;

use crate::corpus::ArticleSet;
use crate::docvec::{SimMatrix, DUPLICATE_TOLERANCE};
use crate::stats::{quantile, UnionFind};
use crate::{Error, Result};

/// Windowed lags `d_ij = H(gamma - delta_ij) * delta_ij` in hours, with
/// `delta_ij = p_j - p_i` and `H(0) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagMatrix {
    n: usize,
    gamma_hours: f64,
    values: Vec<f64>,
}

impl LagMatrix {
    pub fn gamma_hours(&self) -> f64 {
        self.gamma_hours
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i < j {
            self.values[i * self.n + j]
        } else {
            0.0
        }
    }
}

pub fn lag_matrix(set: &ArticleSet, gamma_hours: f64) -> Result<LagMatrix> {
    if !(gamma_hours > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma_hours must be > 0, got {gamma_hours}"
        )));
    }
    let n = set.len();
    let mut values = vec![0.0; n * n];
    values.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        for j in (i + 1)..n {
            row[j] = windowed_lag(set.lag_hours(i, j), gamma_hours);
        }
    });
    Ok(LagMatrix { n, gamma_hours, values })
}

fn windowed_lag(delta: f64, gamma: f64) -> f64 {
    if gamma - delta >= 0.0 {
        delta
    } else {
        0.0
    }
}

/// Keeps `s_ij` where `d_ij != 0` and `rho <= s_ij < 1 - 1e-9`; zero elsewhere.
pub fn masked_similarity(sim: &SimMatrix, lags: &LagMatrix, rho: f64) -> Result<SimMatrix> {
    if sim.len() != lags.len() {
        return Err(Error::ShapeMismatch(format!(
            "similarity {} vs lag {}",
            sim.len(),
            lags.len()
        )));
    }
    Ok(sim.map(|i, j, s| {
        if sim.is_excluded(i) || sim.is_excluded(j) {
            return 0.0;
        }
        if lags.get(i, j) != 0.0 && s >= rho && s < 1.0 - DUPLICATE_TOLERANCE {
            s
        } else {
            0.0
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: String,
    pub publisher: String,
    pub published_at: DateTime<Utc>,
}

/// Directed infection event `infector -> infected` (node indices).
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub infector: usize,
    pub infected: usize,
    /// Cosine similarity for reconstructed edges; absent for simulated ones.
    pub similarity: Option<f64>,
    pub lag_hours: f64,
    /// Realization step of the infection, for simulated networks.
    pub step: Option<usize>,
}

/// Directed forest of infection events. Every node has at most one infector;
/// nodes without one are roots.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    infector: Vec<Option<usize>>,
}

impl SpreadNetwork {
    /// Builds a network, rejecting out-of-range nodes and in-degree above one.
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        let mut infector = vec![None; nodes.len()];
        for e in &edges {
            if e.infector >= nodes.len() || e.infected >= nodes.len() || e.infector == e.infected {
                return Err(Error::InvalidParameter(format!(
                    "edge {} -> {} is out of range",
                    e.infector, e.infected
                )));
            }
            if infector[e.infected].replace(e.infector).is_some() {
                return Err(Error::InvalidParameter(format!(
                    "node {} has two infectors",
                    nodes[e.infected].id
                )));
            }
        }
        Ok(SpreadNetwork { nodes, edges, infector })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn infector_of(&self, node: usize) -> Option<usize> {
        self.infector[node]
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&k| self.infector[k].is_none()).collect()
    }

    /// Edges as `(infector_id, infected_id)` pairs.
    pub fn edge_ids(&self) -> Vec<(&str, &str)> {
        self.edges
            .iter()
            .map(|e| (self.nodes[e.infector].id.as_str(), self.nodes[e.infected].id.as_str()))
            .collect()
    }

    pub fn node_index(&self) -> HashMap<&str, usize> {
        self.nodes.iter().enumerate().map(|(k, n)| (n.id.as_str(), k)).collect()
    }
}

pub(crate) fn nodes_of(set: &ArticleSet) -> Vec<Node> {
    set.iter()
        .map(|a| Node {
            id: a.id.clone(),
            publisher: a.publisher.clone(),
            published_at: a.published_at,
        })
        .collect()
}

/// Each column's largest nonzero entry names the infector; ties go to the
/// earliest article (lowest index, i.e. earliest publication then smallest id).
pub fn assign_infectors(masked: &SimMatrix, set: &ArticleSet) -> Result<SpreadNetwork> {
    if masked.len() != set.len() {
        return Err(Error::ShapeMismatch(format!(
            "matrix {} vs {} articles",
            masked.len(),
            set.len()
        )));
    }
    let edges: Vec<Edge> = (0..set.len())
        .into_par_iter()
        .filter_map(|j| {
            let mut best: Option<(usize, f64)> = None;
            for i in 0..j {
                let s = masked.get(i, j);
                if s != 0.0 && best.is_none_or(|(_, b)| s > b) {
                    best = Some((i, s));
                }
            }
            best.map(|(i, s)| Edge {
                infector: i,
                infected: j,
                similarity: Some(s),
                lag_hours: set.lag_hours(i, j),
                step: None,
            })
        })
        .collect();
    SpreadNetwork::new(nodes_of(set), edges)
}

/// Full reconstruction: lag window, masking, infector assignment.
pub fn reconstruct(sim: &SimMatrix, set: &ArticleSet, rho: f64, gamma_hours: f64) -> Result<SpreadNetwork> {
    let lags = lag_matrix(set, gamma_hours)?;
    assign_infectors(&masked_similarity(sim, &lags, rho)?, set)
}

/// Size of the largest weakly connected component over the node count.
pub fn giant_component_fraction(net: &SpreadNetwork) -> f64 {
    if net.nodes.is_empty() {
        return 0.0;
    }
    let mut uf = UnionFind::new(net.nodes.len());
    for e in &net.edges {
        uf.union(e.infector, e.infected);
    }
    uf.largest() as f64 / net.nodes.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCurve {
    pub points: Vec<(f64, f64)>,
}

pub fn threshold_sweep(
    sim: &SimMatrix,
    lags: &LagMatrix,
    set: &ArticleSet,
    rho_grid: &[f64],
) -> Result<ThresholdCurve> {
    if rho_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("rho grid must be sorted ascending".into()));
    }
    let points = rho_grid
        .par_iter()
        .map(|&rho| {
            let net = assign_infectors(&masked_similarity(sim, lags, rho)?, set)?;
            Ok((rho, giant_component_fraction(&net)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ThresholdCurve { points })
}

/// Largest grid value whose giant-component fraction reaches `target_fraction`.
pub fn select_rho(curve: &ThresholdCurve, target_fraction: f64) -> Result<f64> {
    if !(target_fraction > 0.0 && target_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target fraction {target_fraction} not in (0, 1]"
        )));
    }
    curve
        .points
        .iter()
        .filter(|p| p.1 >= target_fraction)
        .map(|p| p.0)
        .max_by(f64::total_cmp)
        .ok_or(Error::NoThreshold(target_fraction))
}

/// Lags from each article to its most similar earlier article within one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowLags {
    pub window_hours: f64,
    pub lags: Vec<f64>,
}

impl WindowLags {
    pub fn p50(&self) -> Option<f64> {
        quantile(&self.lags, 0.5)
    }

    pub fn p95(&self) -> Option<f64> {
        quantile(&self.lags, 0.95)
    }

    pub fn max(&self) -> Option<f64> {
        self.lags.iter().copied().max_by(f64::total_cmp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSweep {
    pub windows: Vec<WindowLags>,
}

/// For each window, the lag of every article to its most similar preceding
/// article published within that many hours. Duplicates (similarity 1) and
/// simultaneous articles never qualify.
pub fn window_sweep(sim: &SimMatrix, set: &ArticleSet, windows: &[f64]) -> Result<WindowSweep> {
    if set.len() < 2 {
        return Err(Error::WindowSweep("fewer than 2 articles".into()));
    }
    if windows.is_empty() || windows.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidParameter("windows must be positive".into()));
    }
    let mut windows = windows.to_vec();
    windows.sort_by(f64::total_cmp);
    let n = set.len();
    let windows = windows
        .par_iter()
        .map(|&w| {
            let lags = (1..n)
                .filter(|&j| !sim.is_excluded(j))
                .filter_map(|j| {
                    let mut best: Option<(f64, f64)> = None;
                    for i in 0..j {
                        let lag = set.lag_hours(i, j);
                        let s = sim.get(i, j);
                        if sim.is_excluded(i) || lag <= 0.0 || lag > w || s >= 1.0 - DUPLICATE_TOLERANCE {
                            continue;
                        }
                        if best.is_none_or(|(b, _)| s > b) {
                            best = Some((s, lag));
                        }
                    }
                    best.map(|b| b.1)
                })
                .collect();
            WindowLags { window_hours: w, lags }
        })
        .collect();
    Ok(WindowSweep { windows })
}

/// Smallest tested window that contains at least `coverage` of the lags
/// observed under the largest window.
pub fn select_gamma(sweep: &WindowSweep, coverage: f64) -> Result<f64> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::InvalidParameter(format!("coverage {coverage} not in (0, 1]")));
    }
    let widest = sweep
        .windows
        .last()
        .ok_or_else(|| Error::WindowSweep("no windows".into()))?;
    if widest.lags.is_empty() {
        return Err(Error::WindowSweep("no article has a candidate influencer".into()));
    }
    let total = widest.lags.len() as f64;
    sweep
        .windows
        .iter()
        .map(|w| w.window_hours)
        .find(|&w| widest.lags.iter().filter(|&&l| l <= w).count() as f64 / total >= coverage)
        .ok_or_else(|| Error::WindowSweep("coverage not reached".into()))
}

/// Depth of every node: roots are generation 0.
pub fn generations(net: &SpreadNetwork) -> Result<Vec<usize>> {
    let n = net.nodes.len();
    let mut level: Vec<Option<usize>> = vec![None; n];
    for start in 0..n {
        let mut path = Vec::new();
        let mut k = start;
        let mut depth = loop {
            if let Some(l) = level[k] {
                break l + 1;
            }
            path.push(k);
            if path.len() > n {
                return Err(Error::Cycle(net.nodes[start].id.clone()));
            }
            match net.infector[k] {
                Some(p) => k = p,
                None => break 0,
            }
        };
        while let Some(p) = path.pop() {
            level[p] = Some(depth);
            depth += 1;
        }
    }
    Ok(level.into_iter().map(|l| l.expect("every node resolved")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Article;
    use crate::docvec::{similarity_matrix, DocVector};
    use chrono::TimeZone;

    fn set_at(hours: &[f64]) -> ArticleSet {
        let t0 = Utc.with_ymd_and_hms(2015, 1, 7, 0, 0, 0).unwrap();
        ArticleSet::new(
            hours
                .iter()
                .enumerate()
                .map(|(i, &h)| Article {
                    id: format!("a{i:03}"),
                    publisher: format!("p{}.com", i % 3),
                    url: None,
                    published_at: t0 + chrono::Duration::seconds((h * 3600.0).round() as i64),
                    text: "xx".into(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn docs_from(vectors: &[Vec<f64>], set: &ArticleSet) -> Vec<DocVector> {
        vectors
            .iter()
            .zip(set.iter())
            .map(|(v, a)| DocVector {
                article_id: a.id.clone(),
                vector: v.clone(),
                known_token_count: 1,
                oov_token_count: 0,
            })
            .collect()
    }

    /// Builds a similarity matrix whose `(i, j)` entry equals `target[i][j]`
    /// exactly, via unit vectors in 2-D for a single source column.
    fn sim_with(set: &ArticleSet, vectors: &[Vec<f64>]) -> SimMatrix {
        similarity_matrix(&docs_from(vectors, set), set).unwrap()
    }

    #[test]
    fn lag_examples() {
        let set = set_at(&[0.0, 24.0, 200.0, 168.0]);
        // Sorted order: 0h, 24h, 168h, 200h.
        let d = lag_matrix(&set, 168.0).unwrap();
        assert_eq!(d.get(0, 1), 24.0);
        assert_eq!(d.get(0, 3), 0.0);
        assert_eq!(d.get(0, 2), 168.0);
        assert_eq!(d.get(1, 0), 0.0);
        assert!(lag_matrix(&set, 0.0).is_err());
    }

    fn angle(theta: f64) -> Vec<f64> {
        vec![theta.cos(), theta.sin()]
    }

    #[test]
    fn masking_rules() {
        let set = set_at(&[0.0, 24.0, 500.0]);
        let sim = sim_with(&set, &[angle(0.0), angle(0.85f64.acos()), angle(0.9f64.acos())]);
        let lags = lag_matrix(&set, 168.0).unwrap();
        let m = masked_similarity(&sim, &lags, 0.8).unwrap();
        assert!((m.get(0, 1) - 0.85).abs() < 1e-12);
        assert_eq!(m.get(0, 2), 0.0, "outside window");

        let dup_set = set_at(&[0.0, 1.0]);
        let dup = sim_with(&dup_set, &[angle(0.3), angle(0.3)]);
        assert_eq!(dup.get(0, 1), 1.0);
        let m = masked_similarity(&dup, &lag_matrix(&dup_set, 168.0).unwrap(), 0.8).unwrap();
        assert_eq!(m.get(0, 1), 0.0, "duplicates never form edges");

        let same_time = set_at(&[5.0, 5.0]);
        let sim = sim_with(&same_time, &[angle(0.0), angle(0.2)]);
        let m = masked_similarity(&sim, &lag_matrix(&same_time, 168.0).unwrap(), 0.0).unwrap();
        assert_eq!(m.get(0, 1), 0.0, "zero lag is masked");
    }

    #[test]
    fn infector_is_column_maximum() {
        // Article 3 (the fourth) is most similar to article 1.
        let set = set_at(&[0.0, 1.0, 2.0, 3.0]);
        let sim = sim_with(&set, &[angle(0.0), angle(1.0), angle(0.3), angle(0.95)]);
        let net = reconstruct(&sim, &set, 0.8, 168.0).unwrap();
        assert_eq!(net.infector_of(3), Some(1));
        assert_eq!(net.infector_of(0), None);
        assert!(net.roots().contains(&0));
    }

    #[test]
    fn all_zero_column_is_a_root() {
        let set = set_at(&[0.0, 1.0]);
        let sim = sim_with(&set, &[angle(0.0), angle(1.5)]);
        let net = reconstruct(&sim, &set, 0.8, 168.0).unwrap();
        assert_eq!(net.roots(), vec![0, 1]);
        assert!(net.edges().is_empty());
    }

    #[test]
    fn ties_go_to_the_earlier_article() {
        // Candidates at 10:00 and 11:00 both at similarity cos(a).
        let set = set_at(&[10.0, 11.0, 12.0]);
        let a = 0.83f64.acos();
        let sim = sim_with(&set, &[angle(-a), angle(a), angle(0.0)]);
        assert_eq!(sim.get(0, 2), sim.get(1, 2));
        let net = reconstruct(&sim, &set, 0.8, 168.0).unwrap();
        assert_eq!(net.infector_of(2), Some(0));
    }

    fn chain_network(sizes: &[usize]) -> SpreadNetwork {
        let total: usize = sizes.iter().sum();
        let set = set_at(&(0..total).map(|h| h as f64).collect::<Vec<_>>());
        let mut edges = Vec::new();
        let mut start = 0;
        for &s in sizes {
            for k in start + 1..start + s {
                edges.push(Edge {
                    infector: k - 1,
                    infected: k,
                    similarity: Some(0.9),
                    lag_hours: 1.0,
                    step: None,
                });
            }
            start += s;
        }
        SpreadNetwork::new(nodes_of(&set), edges).unwrap()
    }

    #[test]
    fn giant_component_examples() {
        assert_eq!(giant_component_fraction(&chain_network(&[10])), 1.0);
        assert_eq!(giant_component_fraction(&chain_network(&[8, 2])), 0.8);
    }

    #[test]
    fn generation_levels() {
        let roots_only = chain_network(&[1, 1, 1]);
        assert_eq!(generations(&roots_only).unwrap(), vec![0, 0, 0]);
        assert_eq!(generations(&chain_network(&[3])).unwrap(), vec![0, 1, 2]);
        assert_eq!(generations(&chain_network(&[2, 4])).unwrap(), vec![0, 1, 0, 1, 2, 3]);
    }

    #[test]
    fn cycles_are_reported() {
        let set = set_at(&[0.0, 1.0]);
        let e = |a, b| Edge {
            infector: a,
            infected: b,
            similarity: None,
            lag_hours: 0.0,
            step: None,
        };
        let net = SpreadNetwork::new(nodes_of(&set), vec![e(0, 1), e(1, 0)]).unwrap();
        assert!(matches!(generations(&net), Err(Error::Cycle(_))));
        assert!(SpreadNetwork::new(nodes_of(&set), vec![e(0, 1), e(0, 1)]).is_err());
    }

    #[test]
    fn select_rho_takes_largest_qualifying() {
        let curve = ThresholdCurve {
            points: vec![(0.5, 1.0), (0.7, 0.9), (0.8, 0.82), (0.9, 0.3)],
        };
        assert_eq!(select_rho(&curve, 0.8).unwrap(), 0.8);
        assert_eq!(select_rho(&curve, 0.95).unwrap(), 0.5);
        assert!(matches!(select_rho(&curve, 1.0), Ok(0.5)));
        let low = ThresholdCurve {
            points: vec![(0.5, 0.2)],
        };
        assert!(matches!(select_rho(&low, 0.8), Err(Error::NoThreshold(_))));
    }

    #[test]
    fn threshold_zero_connects_everything() {
        let set = set_at(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let sim = sim_with(&set, &[angle(0.0), angle(0.1), angle(0.2), angle(0.3), angle(0.4)]);
        let lags = lag_matrix(&set, 168.0).unwrap();
        let curve = threshold_sweep(&sim, &lags, &set, &[0.0, 0.5, 0.999]).unwrap();
        assert_eq!(curve.points[0].1, 1.0);
        assert!(curve.points.windows(2).all(|w| w[0].1 >= w[1].1));
        assert!(threshold_sweep(&sim, &lags, &set, &[0.5, 0.1]).is_err());
    }

    #[test]
    fn window_sweep_within_one_day() {
        let set = set_at(&[0.0, 3.0, 7.5, 12.0, 23.0]);
        let sim = sim_with(&set, &[angle(0.0), angle(0.2), angle(0.5), angle(0.1), angle(0.9)]);
        let sweep = window_sweep(&sim, &set, &[24.0, 168.0, 360.0]).unwrap();
        assert!(sweep.windows.iter().all(|w| w.lags == sweep.windows[0].lags));
        assert_eq!(select_gamma(&sweep, 0.95).unwrap(), 24.0);
        assert!(window_sweep(&sim_with(&set_at(&[0.0]), &[angle(0.0)]), &set_at(&[0.0]), &[24.0]).is_err());
    }

    #[test]
    fn outlier_lag_forces_wide_window() {
        // Article at 14 days is only similar to the first article.
        let set = set_at(&[0.0, 2.0, 4.0, 336.0]);
        let sim = sim_with(&set, &[angle(0.0), angle(0.1), angle(0.2), angle(0.01)]);
        let sweep = window_sweep(&sim, &set, &[24.0, 168.0, 336.0, 360.0]).unwrap();
        assert_eq!(sweep.windows[3].max(), Some(336.0));
        assert!(select_gamma(&sweep, 1.0).unwrap() >= 336.0);
    }
}
