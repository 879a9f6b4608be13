//! Seeded k-means with k-means++ initialization, plus silhouette scoring.
//!
//! Deterministic given the seed: restarts draw from one seeded stream, the
//! best inertia wins, and ties keep the earlier restart. Empty clusters are
//! refilled with the point farthest from its centroid.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct KmeansOptions {
    pub k: usize,
    pub max_iter: usize,
    pub restarts: usize,
    /// Relative inertia improvement below which iteration stops.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KmeansOptions {
    fn default() -> Self {
        KmeansOptions {
            k: 25,
            max_iter: 100,
            restarts: 10,
            tol: 1e-6,
            seed: 0,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())].clone());
    let mut dist: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total <= 0.0 {
            // All remaining points coincide with a centroid; pick uniformly.
            rng.gen_range(0..points.len())
        } else {
            WeightedIndex::new(dist.iter().map(|&d| d.max(0.0)))
                .map(|w| w.sample(rng))
                .unwrap_or_else(|_| rng.gen_range(0..points.len()))
        };
        centroids.push(points[next].clone());
        for (d, p) in dist.iter_mut().zip(points) {
            let nd = sq_dist(p, centroids.last().unwrap());
            if nd < *d {
                *d = nd;
            }
        }
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, options: &KmeansOptions) -> KmeansResult {
    let n = points.len();
    let k = centroids.len();
    let dim = points[0].len();
    let mut assignments = vec![0usize; n];
    let mut inertia = f64::INFINITY;
    let mut iterations = 0;

    for iter in 0..options.max_iter {
        iterations = iter + 1;
        let mut new_inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(p, centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            assignments[i] = best;
            new_inertia += best_d;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignments[i]] += 1;
            for (s, x) in sums[assignments[i]].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Refill with the point farthest from its centroid.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centroids[assignments[a]])
                            .partial_cmp(&sq_dist(&points[b], &centroids[assignments[b]]))
                            .unwrap()
                    })
                    .unwrap();
                centroids[c] = points[far].clone();
            } else {
                for (slot, s) in centroids[c].iter_mut().zip(&sums[c]) {
                    *slot = s / counts[c] as f64;
                }
            }
        }

        let improved = inertia.is_infinite()
            || (inertia - new_inertia) > options.tol * inertia.max(f64::MIN_POSITIVE);
        inertia = new_inertia;
        if !improved {
            break;
        }
    }
    KmeansResult {
        assignments,
        centroids,
        inertia,
        iterations,
    }
}

/// Run k-means with `restarts` seeded initializations, keeping the lowest
/// inertia. Panics if `points` is empty or `k` is zero; callers gate on
/// having at least `k` points.
pub fn kmeans(points: &[Vec<f64>], options: &KmeansOptions) -> KmeansResult {
    assert!(!points.is_empty() && options.k > 0);
    let k = options.k.min(points.len());
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut best: Option<KmeansResult> = None;
    for _ in 0..options.restarts.max(1) {
        let init = plus_plus_init(points, k, &mut rng);
        let result = lloyd(points, init, options);
        if best.as_ref().is_none_or(|b| result.inertia < b.inertia) {
            best = Some(result);
        }
    }
    best.expect("at least one restart")
}

/// Mean silhouette coefficient (Euclidean). Points in singleton clusters
/// contribute zero.
pub fn silhouette(points: &[Vec<f64>], assignments: &[usize], k: usize) -> f64 {
    let n = points.len();
    if n < 2 || k < 2 {
        return 0.0;
    }
    let mut cluster_sizes = vec![0usize; k];
    for &a in assignments {
        cluster_sizes[a] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = assignments[i];
        if cluster_sizes[own] <= 1 {
            continue;
        }
        let mut sums = vec![0.0f64; k];
        for j in 0..n {
            if i == j {
                continue;
            }
            sums[assignments[j]] += sq_dist(&points[i], &points[j]).sqrt();
        }
        let a = sums[own] / (cluster_sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && cluster_sizes[c] > 0)
            .map(|c| sums[c] / cluster_sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            total += (b - a) / a.max(b);
        }
    }
    total / n as f64
}
