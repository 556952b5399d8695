//! Small numeric helpers shared by the analysis modules.

/// Linearly interpolated quantile (the "type 7" estimator) of unsorted data.
/// Returns `None` for empty input.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(quantile_sorted(&v, q))
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub low: f64,
    pub high: f64,
    pub count: u64,
}

/// Equal-width histogram over `[low, high]`; values outside the range are
/// counted in the nearest edge bin.
pub fn histogram(values: impl IntoIterator<Item = f64>, bins: usize, low: f64, high: f64) -> Vec<Bin> {
    assert!(bins > 0 && high > low);
    let width = (high - low) / bins as f64;
    let mut out: Vec<Bin> = (0..bins)
        .map(|b| Bin {
            low: low + b as f64 * width,
            high: if b + 1 == bins {
                high
            } else {
                low + (b + 1) as f64 * width
            },
            count: 0,
        })
        .collect();
    for v in values {
        let b = ((v - low) / width).floor();
        let b = if b.is_nan() {
            0
        } else {
            (b.max(0.0) as usize).min(bins - 1)
        };
        out[b].count += 1;
    }
    out
}

/// Disjoint-set forest with union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }

    pub fn largest(&self) -> usize {
        (0..self.parent.len())
            .filter(|&x| self.parent[x] == x)
            .map(|x| self.size[x])
            .max()
            .unwrap_or(0)
    }
}
