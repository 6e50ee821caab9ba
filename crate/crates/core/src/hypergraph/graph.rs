use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Hypergraph stored as member lists. The first member of a kNN hyperedge
/// is its centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypergraph<S> {
    pub n_vertices: usize,
    pub edges: Vec<Vec<usize>>,
    pub weights: Vec<S>,
}

impl<S: Scalar> Hypergraph<S> {
    pub fn new(n_vertices: usize, edges: Vec<Vec<usize>>, weights: Vec<S>) -> Result<Self> {
        let hg = Self { n_vertices, edges, weights };
        hg.validate()?;
        Ok(hg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.edges.len() != self.weights.len() {
            return Err(Error::contract(format!("{} edges but {} weights", self.edges.len(), self.weights.len())));
        }
        let mut covered = vec![false; self.n_vertices];
        for (e, members) in self.edges.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::contract(format!("hyperedge {e} is empty")));
            }
            let mut seen = members.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != members.len() {
                return Err(Error::contract(format!("hyperedge {e} repeats a vertex")));
            }
            for &v in members {
                if v >= self.n_vertices {
                    return Err(Error::contract(format!("hyperedge {e} names vertex {v} of {}", self.n_vertices)));
                }
                covered[v] = true;
            }
            if !(self.weights[e] > S::zero()) {
                return Err(Error::contract(format!("hyperedge {e} has non-positive weight")));
            }
        }
        if let Some(v) = covered.iter().position(|&c| !c) {
            return Err(Error::contract(format!("vertex {v} belongs to no hyperedge")));
        }
        Ok(())
    }

    /// Binary `|V|×|E|` incidence matrix.
    pub fn incidence(&self) -> Matrix<S> {
        let mut h = Matrix::zeros(self.n_vertices, self.edges.len());
        for (e, members) in self.edges.iter().enumerate() {
            for &v in members {
                h[(v, e)] = S::one();
            }
        }
        h
    }

    /// `d(v) = Σ_{e∋v} w(e)`.
    pub fn vertex_degrees(&self) -> Vec<S> {
        let mut d = vec![S::zero(); self.n_vertices];
        for (members, &w) in self.edges.iter().zip(&self.weights) {
            for &v in members {
                d[v] += w;
            }
        }
        d
    }

    /// `δ(e) = |e|`.
    pub fn edge_degrees(&self) -> Vec<usize> {
        self.edges.iter().map(Vec::len).collect()
    }

    /// Number of connected components (vertices linked through shared edges).
    pub fn components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.n_vertices).collect();
        fn root(parent: &mut [usize], mut v: usize) -> usize {
            while parent[v] != v {
                parent[v] = parent[parent[v]];
                v = parent[v];
            }
            v
        }
        for members in &self.edges {
            for w in members.windows(2) {
                let (a, b) = (root(&mut parent, w[0]), root(&mut parent, w[1]));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        (0..self.n_vertices).filter(|&v| root(&mut parent, v) == v).count()
    }
}

fn sq_dist<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Squared Euclidean distances between all rows.
pub fn pairwise_sq_distances<S: Scalar>(features: &[Vec<S>]) -> Matrix<S> {
    let n = features.len();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = sq_dist(&features[i], &features[j]);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Kernel bandwidth: mean Euclidean distance over distinct pairs, 1 when
/// every point coincides.
pub fn mean_pairwise_distance<S: Scalar>(sq: &Matrix<S>) -> S {
    let n = sq.rows();
    if n < 2 {
        return S::one();
    }
    let mut total = S::zero();
    for i in 0..n {
        for j in i + 1..n {
            total += sq[(i, j)].sqrt();
        }
    }
    let sigma = total / S::of((n * (n - 1) / 2) as f64);
    if sigma > S::zero() {
        sigma
    } else {
        S::one()
    }
}

fn check_features<S: Scalar>(features: &[Vec<S>]) -> Result<()> {
    let dim = features.first().map_or(0, Vec::len);
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::dim("hypergraph", "feature vectors differ in length"));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::contract("feature vectors must be finite"));
    }
    Ok(())
}

/// One hyperedge per vertex: the vertex plus its `kappa` nearest neighbours
/// (ties to the lower index), weighted by `Σ exp(−‖x_c − x_u‖²/σ²)` over
/// the neighbours, with σ the mean pairwise distance.
pub fn knn_hyperedges<S: Scalar>(features: &[Vec<S>], kappa: usize) -> Result<Hypergraph<S>> {
    knn_hyperedges_with(features, kappa, Bandwidth::MeanDistance)
}

/// Rule for the Gaussian kernel width σ.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Mean Euclidean distance over all vertex pairs.
    #[default]
    MeanDistance,
    Fixed(f64),
}

impl Bandwidth {
    fn sigma<S: Scalar>(self, sq: &Matrix<S>) -> Result<S> {
        match self {
            Bandwidth::MeanDistance => Ok(mean_pairwise_distance(sq)),
            Bandwidth::Fixed(s) if s > 0.0 && s.is_finite() => Ok(S::of(s)),
            Bandwidth::Fixed(s) => Err(Error::config(format!("kernel bandwidth {s} must be positive"))),
        }
    }
}

pub fn knn_hyperedges_with<S: Scalar>(features: &[Vec<S>], kappa: usize, bandwidth: Bandwidth) -> Result<Hypergraph<S>> {
    let n = features.len();
    if kappa == 0 {
        return Err(Error::config("kappa must be at least 1"));
    }
    if n < kappa + 1 {
        return Err(Error::contract(format!("{n} vertices cannot form hyperedges of {} members", kappa + 1)));
    }
    check_features(features)?;
    let sq = pairwise_sq_distances(features);
    let sigma = bandwidth.sigma(&sq)?;
    let s2 = sigma * sigma;
    let mut edges = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for c in 0..n {
        order.clear();
        order.extend((0..n).filter(|&u| u != c));
        let row = sq.row(c);
        order.select_nth_unstable_by(kappa - 1, |&a, &b| row[a].partial_cmp(&row[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        let mut nearest = order[..kappa].to_vec();
        nearest.sort_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        let w: S = nearest.iter().map(|&u| (-row[u] / s2).exp()).sum();
        let mut members = Vec::with_capacity(kappa + 1);
        members.push(c);
        members.extend(nearest);
        edges.push(members);
        // A neighbour so far away that its kernel underflows still keeps the edge alive.
        weights.push(if w > S::zero() { w } else { S::min_positive_value() });
    }
    Hypergraph::new(n, edges, weights)
}

/// `Δ = I − D_v^{−1/2} H W D_e^{−1} Hᵀ D_v^{−1/2}`.
pub fn laplacian<S: Scalar>(hg: &Hypergraph<S>) -> Result<Matrix<S>> {
    hg.validate()?;
    let n = hg.n_vertices;
    let deg = hg.vertex_degrees();
    if let Some(v) = deg.iter().position(|&d| !(d > S::zero())) {
        return Err(Error::contract(format!("vertex {v} has zero degree")));
    }
    let inv_sqrt: Vec<S> = deg.iter().map(|&d| S::one() / d.sqrt()).collect();
    let mut theta = Matrix::zeros(n, n);
    for (members, &w) in hg.edges.iter().zip(&hg.weights) {
        let scale = w / S::of(members.len() as f64);
        for &i in members {
            for &j in members {
                theta[(i, j)] += scale * inv_sqrt[i] * inv_sqrt[j];
            }
        }
    }
    let mut delta = Matrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            delta[(i, j)] -= theta[(i, j)];
        }
    }
    Ok(delta)
}

/// Normalized graph Laplacian `I − D^{−1/2} A D^{−1/2}` of a symmetric
/// non-negative affinity matrix.
pub fn graph_laplacian<S: Scalar>(affinity: &Matrix<S>) -> Result<Matrix<S>> {
    let n = affinity.rows();
    if n != affinity.cols() {
        return Err(Error::dim("graph_laplacian", "affinity must be square"));
    }
    let deg: Vec<S> = (0..n).map(|i| affinity.row(i).iter().copied().sum()).collect();
    if let Some(v) = deg.iter().position(|&d| !(d > S::zero())) {
        return Err(Error::contract(format!("vertex {v} has zero degree")));
    }
    let mut l = Matrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            l[(i, j)] -= affinity[(i, j)] / (deg[i] * deg[j]).sqrt();
        }
    }
    Ok(l)
}

/// Fully connected Gaussian affinity `exp(−‖x_i − x_j‖²/σ²)`, zero diagonal.
pub fn gaussian_affinity<S: Scalar>(features: &[Vec<S>], bandwidth: Bandwidth) -> Result<Matrix<S>> {
    check_features(features)?;
    let sq = pairwise_sq_distances(features);
    let sigma = bandwidth.sigma(&sq)?;
    let n = features.len();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                a[(i, j)] = (-sq[(i, j)] / (sigma * sigma)).exp().max(S::min_positive_value());
            }
        }
    }
    Ok(a)
}
