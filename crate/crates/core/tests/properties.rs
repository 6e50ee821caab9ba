use eegfuse::data::{synth_corpus, Store, SynthSpec};
use eegfuse::eval::{accuracy, encode_segments, f1_score, macro_f1, nmi};
use eegfuse::hypergraph::{graph_laplacian, knn_hyperedges, laplacian, Hypergraph};
use eegfuse::linalg::{symmetric_eigen, Matrix};
use eegfuse::model::{Segment, Variant};
use eegfuse::trainer::{fit_split, ArchConfig, TrainConfig};
use proptest::prelude::*;

fn points(max_n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (8..max_n).prop_flat_map(move |n| prop::collection::vec(prop::collection::vec(-5.0f64..5.0, dim), n))
}

fn labeling(n: usize, k: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..k, n)
}

fn paired(max_n: usize, k: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1..max_n).prop_flat_map(move |n| (labeling(n, k), labeling(n, k)))
}

fn sorted_edges(hg: &Hypergraph<f64>) -> Vec<Vec<usize>> {
    hg.edges
        .iter()
        .map(|e| {
            let mut e = e.clone();
            e.sort_unstable();
            e
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_symmetric_with_spectrum_in_unit_range(x in points(30, 3), kappa in 1usize..6) {
        prop_assume!(x.len() > kappa);
        let hg = knn_hyperedges(&x, kappa).unwrap();
        let delta = laplacian(&hg).unwrap();
        prop_assert!(delta.asymmetry() < 1e-12);
        let eig = symmetric_eigen(&delta).unwrap();
        for &v in &eig.values {
            prop_assert!((-1e-9..=2.0 + 1e-9).contains(&v), "eigenvalue {v}");
        }
        let smallest = eig.values.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(smallest.abs() < 1e-9);
    }

    #[test]
    fn knn_membership_invariant_under_scale_and_shift(x in points(25, 4), kappa in 1usize..5, c in 0.1f64..20.0, shift in -3.0f64..3.0) {
        prop_assume!(x.len() > kappa);
        let moved: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| c * v + shift).collect()).collect();
        let a = knn_hyperedges(&x, kappa).unwrap();
        let b = knn_hyperedges(&moved, kappa).unwrap();
        prop_assert_eq!(sorted_edges(&a), sorted_edges(&b));
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            prop_assert!((wa - wb).abs() <= 1e-9 * wa.abs().max(1.0));
        }
    }

    #[test]
    fn two_vertex_edges_match_halved_graph_laplacian(n in 3usize..12, seed_weights in prop::collection::vec(0.1f64..3.0, 66)) {
        // Complete graph so every vertex has positive degree.
        let mut edges = Vec::new();
        let mut weights = Vec::new();
        let mut adj = Matrix::<f64>::zeros(n, n);
        let mut w_iter = seed_weights.iter().cycle();
        for i in 0..n {
            for j in i + 1..n {
                let w = *w_iter.next().unwrap();
                edges.push(vec![i, j]);
                weights.push(w);
                adj[(i, j)] = w;
                adj[(j, i)] = w;
            }
        }
        let delta = laplacian(&Hypergraph::new(n, edges, weights).unwrap()).unwrap();
        let l = graph_laplacian(&adj).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((delta[(i, j)] - 0.5 * l[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nmi_symmetric_and_bounded((a, b) in paired(60, 4)) {
        let ab = nmi(&a, &b).unwrap();
        let ba = nmi(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&ab));
        prop_assert!((nmi(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nmi_ignores_label_names((a, b) in paired(60, 4), perm in Just([0usize, 1, 2, 3]).prop_shuffle()) {
        let renamed: Vec<usize> = a.iter().map(|&x| perm[x] + 7).collect();
        prop_assert!((nmi(&a, &b).unwrap() - nmi(&renamed, &b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn scores_match_confusion_counts((pred, truth) in paired(80, 3)) {
        let mut m = [[0usize; 3]; 3];
        for (&p, &t) in pred.iter().zip(&truth) {
            m[t][p] += 1;
        }
        let n = pred.len() as f64;
        let diag: usize = (0..3).map(|c| m[c][c]).sum();
        prop_assert!((accuracy(&pred, &truth).unwrap() - 100.0 * diag as f64 / n).abs() < 1e-9);
        let f1 = |c: usize| {
            let tp = m[c][c] as f64;
            let fp: f64 = (0..3).filter(|&t| t != c).map(|t| m[t][c] as f64).sum();
            let fnn: f64 = (0..3).filter(|&p| p != c).map(|p| m[c][p] as f64).sum();
            let (prec, rec) = (tp / (tp + fp), tp / (tp + fnn));
            if tp == 0.0 { 0.0 } else { 100.0 * 2.0 * prec * rec / (prec + rec) }
        };
        prop_assert!((f1_score(&pred, &truth, 1).unwrap() - f1(1)).abs() < 1e-9);
        let mean = (f1(0) + f1(1) + f1(2)) / 3.0;
        prop_assert!((macro_f1(&pred, &truth, 3).unwrap() - mean).abs() < 1e-9);
    }
}

fn tiny_segments(seed: u64) -> Vec<Segment<f64>> {
    let spec = SynthSpec { subjects: 1, trials: 2, segments: 4, channels: 3, rate: 32, seed, ..SynthSpec::default() };
    let dir = tempfile::tempdir().unwrap();
    let (m, blobs) = synth_corpus(&spec).unwrap();
    Store::create(dir.path(), m, &blobs).unwrap().load_corpus::<f64>().unwrap().segments
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn training_is_reproducible(seed in 0u64..1000, adversarial in any::<bool>()) {
        let segs = tiny_segments(seed);
        let refs: Vec<&Segment<f64>> = segs.iter().collect();
        let cfg = TrainConfig {
            variant: if adversarial { Variant::CnnRnnGan } else { Variant::Cnn },
            max_epochs: 2,
            batch_size: 4,
            seed,
            arch: ArchConfig { f1: 2, depth_multiplier: 2, gru_hidden: 4, latent: 8 },
            ..TrainConfig::default()
        };
        let a = fit_split(&refs, &refs, &cfg, |_| {}).unwrap();
        let b = fit_split(&refs, &refs, &cfg, |_| {}).unwrap();
        prop_assert!(a.history.same_trajectory(&b.history));
        prop_assert_eq!(encode_segments(&a.generator, &refs).unwrap(), encode_segments(&b.generator, &refs).unwrap());
    }
}
