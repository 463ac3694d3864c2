use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, MetricsReport};
use crate::color_math::IlluminantRGB;
use crate::error::{Error, Result};
use crate::scene_synth::stream_rng;

pub const KMEANS_MAX_ITERS: usize = 100;
pub const KMEANS_RESTARTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Centroid in `(r/g, b/g)` chromaticity.
    pub centroid: [f64; 2],
    pub members: Vec<usize>,
    pub metrics: MetricsReport,
}

/// Clusters ordered by decreasing size (ties broken by centroid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub k: usize,
    pub clusters: Vec<Cluster>,
    /// Cluster index of every sample.
    pub assignment: Vec<usize>,
    pub inertia: f64,
}

impl ClusterReport {
    pub fn largest(&self) -> &Cluster {
        &self.clusters[0]
    }

    pub fn smallest(&self) -> &Cluster {
        self.clusters.last().expect("at least one cluster")
    }
}

pub fn chromaticity(l: &IlluminantRGB) -> Result<[f64; 2]> {
    let [r, g, b] = l.rgb();
    if !(g > 0.0) {
        return Err(Error::domain("illuminant has no green response"));
    }
    Ok([r / g, b / g])
}

fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn nearest(p: &[f64; 2], centroids: &[[f64; 2]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn kmeans_pp(points: &[[f64; 2]], k: usize, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    let mut d: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, di) in d.iter().enumerate() {
                if u < *di {
                    pick = i;
                    break;
                }
                u -= di;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[next]);
        for (di, p) in d.iter_mut().zip(points) {
            *di = di.min(dist2(p, &points[next]));
        }
    }
    centroids
}

/// Lloyd iterations from the given seeds. Returns `(centroids, assignment, inertia)`.
fn lloyd(points: &[[f64; 2]], mut centroids: Vec<[f64; 2]>) -> (Vec<[f64; 2]>, Vec<usize>, f64) {
    let k = centroids.len();
    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(points) {
            let (j, _) = nearest(p, &centroids);
            changed |= *a != j;
            *a = j;
        }
        let mut sums = vec![[0.0; 2]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assign.iter().zip(points) {
            sums[a][0] += p[0];
            sums[a][1] += p[1];
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = [sums[j][0] / counts[j] as f64, sums[j][1] / counts[j] as f64];
            } else {
                // Reseed an empty cluster at the point farthest from its centroid.
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        dist2(&points[a], &centroids[assign[a]]).total_cmp(&dist2(&points[b], &centroids[assign[b]]))
                    })
                    .expect("nonempty");
                centroids[j] = points[far];
                assign[far] = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    for (a, p) in assign.iter_mut().zip(points) {
        *a = nearest(p, &centroids).0;
    }
    let inertia = assign.iter().zip(points).map(|(&a, p)| dist2(p, &centroids[a])).sum();
    (centroids, assign, inertia)
}

/// K-means (k-means++ seeding, restarts, best inertia) on points in the plane.
pub fn kmeans(points: &[[f64; 2]], k: usize, seed: u64) -> Result<(Vec<[f64; 2]>, Vec<usize>, f64)> {
    if k == 0 {
        return Err(Error::domain("K must be positive"));
    }
    let mut distinct = points.to_vec();
    distinct.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::domain(format!("{} distinct illuminants cannot form {k} clusters", distinct.len())));
    }
    let mut rng = stream_rng(seed, 0xc105);
    let mut best: Option<(Vec<[f64; 2]>, Vec<usize>, f64)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let run = lloyd(points, kmeans_pp(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.2 < b.2) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Groups samples by ground-truth illuminant chromaticity and reports
/// per-cluster error statistics.
pub fn cluster_robustness(illuminants: &[IlluminantRGB], errors: &[f64], k: usize, seed: u64) -> Result<ClusterReport> {
    if illuminants.len() != errors.len() {
        return Err(Error::domain("one error per illuminant is required"));
    }
    if illuminants.len() < k {
        return Err(Error::domain("fewer samples than clusters"));
    }
    let points = illuminants.iter().map(chromaticity).collect::<Result<Vec<_>>>()?;
    let (centroids, assign, inertia) = kmeans(&points, k, seed)?;

    let mut order: Vec<usize> = (0..k).collect();
    let count = |j: usize| assign.iter().filter(|&&a| a == j).count();
    order.sort_by(|&a, &b| {
        count(b)
            .cmp(&count(a))
            .then(centroids[a][0].total_cmp(&centroids[b][0]))
            .then(centroids[a][1].total_cmp(&centroids[b][1]))
    });
    let mut rank = vec![0; k];
    for (r, &j) in order.iter().enumerate() {
        rank[j] = r;
    }
    let assignment: Vec<usize> = assign.iter().map(|&a| rank[a]).collect();
    let clusters = order
        .iter()
        .enumerate()
        .map(|(r, &j)| {
            let members: Vec<usize> = (0..assignment.len()).filter(|&i| assignment[i] == r).collect();
            let errs: Vec<f64> = members.iter().map(|&i| errors[i]).collect();
            Ok(Cluster { centroid: centroids[j], metrics: compute_metrics(&errs)?, members })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClusterReport { k, clusters, assignment, inertia })
}
