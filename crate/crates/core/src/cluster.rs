//! Seeded spherical k-means over unit vectors.
//!
//! Assignment maximizes cosine similarity; centroids are re-normalized means.
//! Initialization follows k-means++ with `1 - cos` as the distance, and any
//! cluster left empty is reseeded from the point farthest from its own
//! centroid, so every cluster ends up with at least one member.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::embedding::{dot, l2_norm, EmbeddingVector};
use crate::error::{CoreError, Result};
use crate::seed::rng_from_seed;

pub const MAX_ITERATIONS: usize = 100;
pub const CONVERGENCE_TOLERANCE: f64 = 1e-6;

// A point stays in its current cluster unless another centroid is better by
// more than this.
const TIE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centroids: Vec<EmbeddingVector>,
    pub assignment: Vec<usize>,
    pub iterations: usize,
}

pub fn kmeans(points: &[&EmbeddingVector], l: usize, seed: u64) -> Result<Clustering> {
    if l == 0 {
        return Err(CoreError::Configuration("cluster count must be at least 1".into()));
    }
    if points.len() < l {
        return Err(CoreError::Configuration(alloc::format!(
            "{} points cannot fill {l} clusters",
            points.len()
        )));
    }
    let dim = points[0].dim();
    if points.iter().any(|p| p.dim() != dim) {
        return Err(CoreError::Precondition("embeddings differ in dimensionality".into()));
    }

    let mut centroids = init_plus_plus(points, l, seed);
    let mut assignment = assign(points, &centroids, None);
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        repair_empty(points, &mut assignment, &mut centroids);
        let updated = recompute(points, &assignment, &centroids);
        let movement = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| {
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                l2_norm(&d)
            })
            .fold(0.0, f64::max);
        centroids = updated;
        let next = assign(points, &centroids, Some(&assignment));
        let changed = next != assignment;
        assignment = next;
        if !changed && movement < CONVERGENCE_TOLERANCE && !has_empty(&assignment, l) {
            break;
        }
    }
    if has_empty(&assignment, l) {
        repair_empty(points, &mut assignment, &mut centroids);
    }

    let centroids = centroids
        .into_iter()
        .map(EmbeddingVector::from_unit)
        .collect::<Result<Vec<_>>>()?;
    Ok(Clustering {
        centroids,
        assignment,
        iterations,
    })
}

fn init_plus_plus(points: &[&EmbeddingVector], l: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(l);
    centroids.push(points[rng.random_range(0..points.len())].values().to_vec());
    let mut distance: Vec<f64> = points
        .iter()
        .map(|p| (1.0 - dot(p.values(), &centroids[0])).max(0.0))
        .collect();
    while centroids.len() < l {
        let total: f64 = distance.iter().sum();
        let pick = if total <= 0.0 {
            rng.random_range(0..points.len())
        } else {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = points.len() - 1;
            for (i, d) in distance.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        let c = points[pick].values().to_vec();
        for (d, p) in distance.iter_mut().zip(points) {
            *d = d.min((1.0 - dot(p.values(), &c)).max(0.0));
        }
        centroids.push(c);
    }
    centroids
}

fn assign(points: &[&EmbeddingVector], centroids: &[Vec<f64>], previous: Option<&[usize]>) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let sims: Vec<f64> = centroids.iter().map(|c| dot(p.values(), c)).collect();
            let mut best = 0;
            for (j, &s) in sims.iter().enumerate().skip(1) {
                if s > sims[best] {
                    best = j;
                }
            }
            match previous {
                Some(prev) if sims[prev[i]] >= sims[best] - TIE_EPSILON => prev[i],
                _ => best,
            }
        })
        .collect()
}

fn has_empty(assignment: &[usize], l: usize) -> bool {
    let mut sizes = vec![0usize; l];
    for &a in assignment {
        sizes[a] += 1;
    }
    sizes.contains(&0)
}

fn repair_empty(points: &[&EmbeddingVector], assignment: &mut [usize], centroids: &mut [Vec<f64>]) {
    let l = centroids.len();
    loop {
        let mut sizes = vec![0usize; l];
        for &a in assignment.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut farthest: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if sizes[assignment[i]] < 2 {
                continue;
            }
            let sim = dot(p.values(), &centroids[assignment[i]]);
            if farthest.is_none_or(|(_, s)| sim < s) {
                farthest = Some((i, sim));
            }
        }
        // points.len() >= l guarantees a donor cluster with two members.
        let Some((donor, _)) = farthest else { return };
        assignment[donor] = empty;
        centroids[empty] = points[donor].values().to_vec();
    }
}

fn recompute(points: &[&EmbeddingVector], assignment: &[usize], previous: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = previous[0].len();
    let mut sums = vec![vec![0.0; dim]; previous.len()];
    let mut first_member: Vec<Option<usize>> = vec![None; previous.len()];
    for (i, (p, &a)) in points.iter().zip(assignment).enumerate() {
        for (s, v) in sums[a].iter_mut().zip(p.values()) {
            *s += v;
        }
        first_member[a].get_or_insert(i);
    }
    sums.into_iter()
        .enumerate()
        .map(|(c, mut sum)| {
            let norm = l2_norm(&sum);
            if norm > 1e-12 {
                for v in &mut sum {
                    *v /= norm;
                }
                sum
            } else if let Some(i) = first_member[c] {
                // Members cancel out; fall back to a member direction.
                points[i].values().to_vec()
            } else {
                previous[c].clone()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::normalized(v.to_vec()).unwrap()
    }

    #[test]
    fn single_cluster_takes_everything() {
        let pts: Vec<EmbeddingVector> = (0..5).map(|i| unit(&[1.0, i as f64])).collect();
        let refs: Vec<&EmbeddingVector> = pts.iter().collect();
        let c = kmeans(&refs, 1, 3).unwrap();
        assert!(c.assignment.iter().all(|&a| a == 0));
    }

    #[test]
    fn identical_points_fill_every_cluster() {
        let pts: Vec<EmbeddingVector> = (0..6).map(|_| unit(&[0.3, 0.4, 0.5])).collect();
        let refs: Vec<&EmbeddingVector> = pts.iter().collect();
        for l in 1..=6 {
            let c = kmeans(&refs, l, 11).unwrap();
            assert!(!has_empty(&c.assignment, l), "l={l}");
        }
    }

    #[test]
    fn too_few_points() {
        let pts = [unit(&[1.0, 0.0])];
        assert!(matches!(kmeans(&[&pts[0]], 2, 0), Err(CoreError::Configuration(_))));
        assert!(matches!(kmeans(&[&pts[0]], 0, 0), Err(CoreError::Configuration(_))));
    }

    #[test]
    fn separable_axes_are_recovered() {
        let mut pts = Vec::new();
        for axis in 0..4 {
            for j in 0..5 {
                let mut v = [0.02 * j as f64; 4];
                v[axis] = 1.0;
                pts.push(unit(&v));
            }
        }
        let refs: Vec<&EmbeddingVector> = pts.iter().collect();
        let c = kmeans(&refs, 4, 5).unwrap();
        for group in c.assignment.chunks(5) {
            assert!(group.iter().all(|&a| a == group[0]));
        }
        let mut firsts: Vec<usize> = c.assignment.chunks(5).map(|g| g[0]).collect();
        firsts.sort_unstable();
        assert_eq!(firsts, [0, 1, 2, 3]);
    }
}
