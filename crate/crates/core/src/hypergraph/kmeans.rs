use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const RESTARTS: usize = 20;
const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans<S> {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<S>>,
    pub inertia: S,
}

fn sq_dist<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn nearest<S: Scalar>(p: &[S], centroids: &[Vec<S>]) -> (usize, S) {
    let mut best = (0, S::infinity());
    for (c, cen) in centroids.iter().enumerate() {
        let d = sq_dist(p, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus<S: Scalar>(points: &[Vec<S>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<S>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0]).as_f64()).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centroids[centroids.len() - 1]).as_f64());
        }
    }
    centroids
}

/// Moves the point farthest from its centroid in the largest cluster into
/// each empty cluster.
fn repair_empty<S: Scalar>(points: &[Vec<S>], assign: &mut [usize], centroids: &mut [Vec<S>]) {
    let k = centroids.len();
    loop {
        let mut counts = vec![0usize; k];
        assign.iter().for_each(|&a| counts[a] += 1);
        let Some(empty) = counts.iter().position(|&c| c == 0) else { return };
        let largest = (0..k).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap();
        if counts[largest] < 2 {
            return;
        }
        let far = (0..points.len())
            .filter(|&i| assign[i] == largest)
            .max_by(|&a, &b| {
                let (da, db) = (sq_dist(&points[a], &centroids[largest]), sq_dist(&points[b], &centroids[largest]));
                da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal).then(b.cmp(&a))
            })
            .unwrap();
        assign[far] = empty;
        centroids[empty] = points[far].clone();
    }
}

fn update_centroids<S: Scalar>(points: &[Vec<S>], assign: &[usize], centroids: &mut [Vec<S>]) {
    let dim = points[0].len();
    let mut sums = vec![vec![S::zero(); dim]; centroids.len()];
    let mut counts = vec![0usize; centroids.len()];
    for (p, &a) in points.iter().zip(assign) {
        counts[a] += 1;
        sums[a].iter_mut().zip(p).for_each(|(s, &v)| *s += v);
    }
    for (c, sum) in sums.into_iter().enumerate() {
        if counts[c] > 0 {
            let inv = S::one() / S::of(counts[c] as f64);
            centroids[c] = sum.into_iter().map(|v| v * inv).collect();
        }
    }
}

fn lloyd<S: Scalar>(points: &[Vec<S>], k: usize, rng: &mut ChaCha8Rng) -> KMeans<S> {
    let mut centroids = plus_plus(points, k, rng);
    let mut assign: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    for _ in 0..MAX_ITERATIONS {
        repair_empty(points, &mut assign, &mut centroids);
        update_centroids(points, &assign, &mut centroids);
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    repair_empty(points, &mut assign, &mut centroids);
    update_centroids(points, &assign, &mut centroids);
    let inertia = points.iter().zip(&assign).map(|(p, &a)| sq_dist(p, &centroids[a])).sum();
    KMeans { assignments: assign, centroids, inertia }
}

/// Lloyd's algorithm from k-means++ seeds, best inertia over
/// [`RESTARTS`] runs.
pub fn kmeans<S: Scalar>(points: &[Vec<S>], k: usize, seed: u64) -> Result<KMeans<S>> {
    if k == 0 {
        return Err(Error::contract("k-means needs at least one cluster"));
    }
    if k > points.len() {
        return Err(Error::contract(format!("cannot form {k} clusters from {} points", points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::dim("kmeans", "points differ in length"));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::contract("k-means points must be finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeans<S>> = None;
    for _ in 0..RESTARTS {
        let run = lloyd(points, k, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn blobs(seed: u64, per: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (c, center) in [-10.0, 10.0].iter().enumerate() {
            for _ in 0..per {
                pts.push((0..3).map(|_| center + rng.sample::<f64, _>(StandardNormal)).collect());
                truth.push(c);
            }
        }
        (pts, truth)
    }

    #[test]
    fn recovers_two_blobs() {
        let (pts, truth) = blobs(3, 40);
        let km = kmeans(&pts, 2, 7).unwrap();
        let flip = km.assignments[0] != truth[0];
        for (a, t) in km.assignments.iter().zip(&truth) {
            assert_eq!(*a, if flip { 1 - t } else { *t });
        }
    }

    #[test]
    fn one_cluster_per_point() {
        let pts = vec![vec![0.0], vec![1.0], vec![5.0], vec![9.0]];
        let km = kmeans(&pts, 4, 0).unwrap();
        assert_eq!(km.inertia, 0.0);
        let mut a = km.assignments.clone();
        a.sort();
        assert_eq!(a, vec![0, 1, 2, 3]);
    }

    #[test]
    fn duplicate_points_still_fill_clusters() {
        let pts = vec![vec![1.0]; 5];
        let km = kmeans(&pts, 3, 0).unwrap();
        for c in 0..3 {
            assert!(km.assignments.contains(&c));
        }
    }

    #[test]
    fn seeded_determinism() {
        let (pts, _) = blobs(5, 25);
        assert_eq!(kmeans(&pts, 3, 11).unwrap(), kmeans(&pts, 3, 11).unwrap());
    }

    #[test]
    fn too_many_clusters() {
        assert!(matches!(kmeans(&[vec![0.0]], 2, 0), Err(Error::Contract(_))));
    }
}
