use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::scalar::Scalar;

/// `sqrt(6 / (fan_in + fan_out))` for a weight of the given shape.
///
/// Matrices `[F, G]` use `F` and `G`. Conv kernels `[Cout, Cin/groups, kh, kw]`
/// use `fan_in = Cin/groups·kh·kw` and `fan_out = Cout/groups·kh·kw`.
pub fn glorot_bound(shape: &[usize], groups: usize) -> f64 {
    let (fan_in, fan_out) = match shape {
        [n] => (*n, *n),
        [f, g] => (*f, *g),
        [cout, cin_g, rest @ ..] => {
            let field: usize = rest.iter().product();
            (cin_g * field, cout / groups.max(1) * field)
        }
        [] => (1, 1),
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Glorot-uniform tensor drawn from `rng`.
pub fn glorot_init_grouped<S: Scalar, R: Rng>(shape: &[usize], groups: usize, rng: &mut R) -> Tensor<S> {
    let bound = glorot_bound(shape, groups);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| S::of(rng.random_range(-bound..=bound))).collect();
    Tensor::new(shape, data).expect("positive shape")
}

/// Glorot-uniform tensor, deterministic per seed.
pub fn glorot_init<S: Scalar>(shape: &[usize], seed: u64) -> Tensor<S> {
    glorot_init_grouped(shape, 1, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_stay_within_bound() {
        let shape = [16, 1, 1, 32];
        let bound = glorot_bound(&shape, 1);
        assert!((bound - (6.0f64 / (32.0 + 16.0 * 32.0)).sqrt()).abs() < 1e-15);
        let t: Tensor<f64> = glorot_init(&shape, 9);
        assert!(t.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn grouped_fan_out() {
        // depthwise [F·D, 1, C, 1] with groups F: fan_in = C, fan_out = D·C
        let b = glorot_bound(&[32, 1, 8, 1], 16);
        assert!((b - (6.0f64 / (8.0 + 16.0)).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mean_is_statistically_zero() {
        let t: Tensor<f64> = glorot_init(&[100, 1000], 3);
        let n = t.len() as f64;
        let bound = glorot_bound(&[100, 1000], 1);
        let mean = t.sum() / n;
        // Var of U(-a, a) is a²/3
        let se = (bound * bound / 3.0 / n).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn deterministic_per_seed() {
        let a: Tensor<f32> = glorot_init(&[4, 5], 11);
        let b: Tensor<f32> = glorot_init(&[4, 5], 11);
        let c: Tensor<f32> = glorot_init(&[4, 5], 12);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
