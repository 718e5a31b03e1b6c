use serde::{Deserialize, Serialize};

use super::rng::Rng;
use super::vector::{mean_vector, sq_dist};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares after every Lloyd update.
    pub objective_history: Vec<f64>,
}

impl KMeans {
    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(0.0)
    }

    pub fn nearest(&self, point: &[f64]) -> usize {
        nearest(&self.centroids, point).0
    }
}

fn nearest(centroids: &[Vec<f64>], point: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.below(n);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.uniform() * total;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // All remaining points coincide with a centroid.
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.below(free.len())]
        };
        chosen[pick] = true;
        centroids.push(points[pick].clone());
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[pick]));
        }
    }
    centroids
}

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or `max_iter` updates have run. Empty clusters are reseeded with the
/// point farthest from its current centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, rng: &mut Rng, max_iter: usize) -> Result<KMeans> {
    let n = points.len();
    if k == 0 {
        return Err(invalid("k-means needs k >= 1"));
    }
    if k > n {
        return Err(invalid(format!("k-means with k = {k} > {n} points")));
    }
    let mut centroids = seed_plus_plus(points, k, rng);
    let mut assignments = vec![usize::MAX; n];
    let mut history = Vec::new();

    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(&centroids, p);
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
            dists[i] = d;
        }
        if !changed && !history.is_empty() {
            break;
        }

        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[assignments[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            if let Some(i) = far {
                counts[assignments[i]] -= 1;
                assignments[i] = c;
                counts[c] = 1;
                dists[i] = 0.0;
            }
        }

        let mut members: Vec<Vec<Vec<f64>>> = vec![Vec::new(); k];
        for (p, &a) in points.iter().zip(&assignments) {
            members[a].push(p.clone());
        }
        for (c, m) in members.iter().enumerate() {
            if !m.is_empty() {
                centroids[c] = mean_vector(m);
            }
        }
        let objective = points
            .iter()
            .zip(&assignments)
            .map(|(p, &a)| sq_dist(p, &centroids[a]))
            .sum();
        history.push(objective);
    }

    Ok(KMeans {
        centroids,
        assignments,
        objective_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_two_cluster_optimum(points: &[Vec<f64>]) -> f64 {
        // Enumerate every bipartition with both sides non-empty.
        let n = points.len();
        let mut best = f64::INFINITY;
        for mask in 1..(1u32 << n) - 1 {
            let (a, b): (Vec<_>, Vec<_>) = (0..n).partition(|&i| mask & (1 << i) != 0);
            let sse = |idx: &[usize]| {
                let pts: Vec<Vec<f64>> = idx.iter().map(|&i| points[i].clone()).collect();
                let m = mean_vector(&pts);
                pts.iter().map(|p| sq_dist(p, &m)).sum::<f64>()
            };
            best = best.min(sse(&a) + sse(&b));
        }
        best
    }

    #[test]
    fn two_obvious_clusters() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![10.0, 10.0],
            vec![10.0, 11.0],
        ];
        let km = kmeans(&pts, 2, &mut Rng::new(3), 50).unwrap();
        let mut cs = km.centroids.clone();
        cs.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(cs, vec![vec![0.0, 0.5], vec![10.0, 10.5]]);
        assert!((km.objective() - brute_force_two_cluster_optimum(&pts)).abs() < 1e-12);
    }

    #[test]
    fn single_cluster_is_mean() {
        let pts = vec![vec![1.0, 2.0], vec![3.0, -2.0], vec![5.0, 3.0]];
        let km = kmeans(&pts, 1, &mut Rng::new(0), 10).unwrap();
        let m = mean_vector(&pts);
        assert!(sq_dist(&km.centroids[0], &m) < 1e-24);
    }

    #[test]
    fn k_equals_n_gives_each_point() {
        let pts = vec![vec![1.0], vec![4.0], vec![-2.0], vec![9.0]];
        let km = kmeans(&pts, 4, &mut Rng::new(11), 10).unwrap();
        let mut cs: Vec<f64> = km.centroids.iter().map(|c| c[0]).collect();
        cs.sort_by(f64::total_cmp);
        assert_eq!(cs, vec![-2.0, 1.0, 4.0, 9.0]);
        assert_eq!(km.objective(), 0.0);
    }

    #[test]
    fn too_many_clusters() {
        assert!(kmeans(&[vec![0.0]], 2, &mut Rng::new(0), 5).is_err());
        assert!(kmeans(&[vec![0.0]], 0, &mut Rng::new(0), 5).is_err());
    }

    #[test]
    fn duplicates_do_not_stall_seeding() {
        let pts = vec![vec![1.0, 1.0]; 5];
        let km = kmeans(&pts, 3, &mut Rng::new(2), 10).unwrap();
        assert_eq!(km.centroids.len(), 3);
        assert_eq!(km.objective(), 0.0);
    }
}
