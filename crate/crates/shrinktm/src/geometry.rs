//! Spatial geometry: maximin ordering, per-location scales, and
//! previously-ordered nearest-neighbor sets.
//!
//! The maximin ordering picks each successive location to maximize its
//! minimum distance to everything already ordered, which arranges the field
//! coarse-to-fine: early indices form a sparse skeleton of the domain and
//! later indices fill in detail. The scale of ordered index `i` is its
//! distance to the nearest earlier location, and conditioning sets are drawn
//! from the earlier locations closest to it.

use crate::error::{Error, Result};

/// Default cap on stored neighbors per location.
pub const M_MAX_DEFAULT: usize = 30;

/// Distance hook for the ordering; only the Euclidean metric ships, but the
/// trait keeps orderings based on other dissimilarities pluggable.
pub trait DistanceMetric: Sync {
    fn dist(&self, a: &[f64], b: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Euclidean;

impl DistanceMetric for Euclidean {
    fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

/// A set of distinct points in 1, 2, or 3 dimensions, with stable ids
/// preserving the order they arrived in (file order).
#[derive(Debug, Clone)]
pub struct Locations {
    coords: Vec<f64>,
    dim: usize,
    ids: Vec<String>,
}

impl Locations {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let ids = (0..points.len()).map(|i| i.to_string()).collect();
        Self::with_ids(points, ids)
    }

    pub fn with_ids(points: Vec<Vec<f64>>, ids: Vec<String>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("need at least one location".into()));
        }
        if points.len() != ids.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} points but {} ids",
                points.len(),
                ids.len()
            )));
        }
        let dim = points[0].len();
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!(
                "locations must live in 1, 2, or 3 dimensions, got {dim}"
            )));
        }
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if p.len() != dim {
                return Err(Error::ShapeMismatch("mixed point dimensions".into()));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite coordinate".into()));
            }
            coords.extend_from_slice(p);
        }
        {
            let mut seen = std::collections::HashSet::new();
            for id in &ids {
                if !seen.insert(id.as_str()) {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate location id '{id}'"
                    )));
                }
            }
        }
        Ok(Self { coords, dim, ids })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id_index(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|s| s == id)
    }

    /// Index of the location nearest the coordinate centroid; deterministic
    /// default start of the maximin ordering.
    pub fn centroid_index(&self) -> usize {
        let n = self.len();
        let mut centroid = vec![0.0; self.dim];
        for i in 0..n {
            for (c, v) in centroid.iter_mut().zip(self.point(i)) {
                *c += v;
            }
        }
        for c in centroid.iter_mut() {
            *c /= n as f64;
        }
        let metric = Euclidean;
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for i in 0..n {
            let d = metric.dist(self.point(i), &centroid);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Maximin ordering of a location set together with per-index scales and
/// nearest previously-ordered neighbor lists.
#[derive(Debug, Clone)]
pub struct Ordering {
    /// `perm[k]` = original index of the k-th ordered location.
    pub perm: Vec<usize>,
    /// `rank[orig]` = position of original index `orig` in the ordering.
    pub rank: Vec<usize>,
    /// Scale of each ordered index: distance to the nearest earlier
    /// location; the first entry is the domain diameter so that every later
    /// scale is dominated by it.
    pub scales: Vec<f64>,
    /// For each ordered index, up to `m_max` earlier ordered indices sorted
    /// by ascending distance (ties broken toward the lower ordered index).
    pub neighbors: Vec<Vec<usize>>,
    pub m_max: usize,
}

impl Ordering {
    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// Conditioning set of ordered index `i`: its first `min(m, i)` stored
    /// neighbors.
    pub fn conditioning_set(&self, i: usize, m: usize) -> &[usize] {
        let take = m.min(self.neighbors[i].len());
        &self.neighbors[i][..take]
    }
}

/// Maximin ordering with the default neighbor cap and centroid-nearest start.
pub fn maximin_order(locs: &Locations, first: Option<usize>) -> Result<Ordering> {
    maximin_order_with(locs, first, M_MAX_DEFAULT, &Euclidean)
}

pub fn maximin_order_with(
    locs: &Locations,
    first: Option<usize>,
    m_max: usize,
    metric: &dyn DistanceMetric,
) -> Result<Ordering> {
    let n = locs.len();
    if let Some(f) = first {
        if f >= n {
            return Err(Error::InvalidArgument(format!(
                "first index {f} out of range for {n} locations"
            )));
        }
    }
    let start = first.unwrap_or_else(|| locs.centroid_index());

    let mut diameter: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = metric.dist(locs.point(i), locs.point(j));
            if d == 0.0 {
                return Err(Error::DegenerateLocations(format!(
                    "locations {} and {} coincide",
                    locs.ids()[i],
                    locs.ids()[j]
                )));
            }
            diameter = diameter.max(d);
        }
    }

    // greedy selection with cached minimum distances to the selected set;
    // ties at the argmax go to the lowest original index because the scan
    // only replaces the incumbent on a strict improvement
    let mut min_dist = vec![f64::INFINITY; n];
    let mut selected = vec![false; n];
    let mut perm = Vec::with_capacity(n);
    let mut scales = Vec::with_capacity(n);

    let mut current = start;
    selected[current] = true;
    perm.push(current);
    scales.push(diameter);
    for _ in 1..n {
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for j in 0..n {
            if selected[j] {
                continue;
            }
            let d = metric.dist(locs.point(j), locs.point(current)).min(min_dist[j]);
            min_dist[j] = d;
            if d > best_d {
                best_d = d;
                best = j;
            }
        }
        current = best;
        selected[current] = true;
        perm.push(current);
        scales.push(best_d);
    }

    let mut rank = vec![0usize; n];
    for (k, &orig) in perm.iter().enumerate() {
        rank[orig] = k;
    }

    // nearest previously-ordered neighbors, sorted by distance then index
    let mut neighbors = Vec::with_capacity(n);
    neighbors.push(Vec::new());
    for i in 1..n {
        let pi = locs.point(perm[i]);
        let mut cand: Vec<(f64, usize)> = (0..i)
            .map(|j| (metric.dist(pi, locs.point(perm[j])), j))
            .collect();
        cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        cand.truncate(m_max);
        neighbors.push(cand.into_iter().map(|(_, j)| j).collect());
    }

    Ok(Ordering { perm, rank, scales, neighbors, m_max })
}

/// Conditioning sets `g_m(i)` for every ordered index at a given size `m`.
pub fn neighbor_sets(ordering: &Ordering, m: usize) -> Result<Vec<Vec<usize>>> {
    if m == 0 || m > ordering.m_max {
        return Err(Error::InvalidArgument(format!(
            "m = {m} outside 1..={}",
            ordering.m_max
        )));
    }
    Ok((0..ordering.len())
        .map(|i| ordering.conditioning_set(i, m).to_vec())
        .collect())
}
