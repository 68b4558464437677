use std::f64::consts::PI;
use std::time::Instant;

use cdsp_core::slrtr::{tensor_svt, tnn, Tensor3};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, n1: usize, n2: usize, n3: usize) -> Tensor3 {
    Tensor3::from_fn(n1, n2, n3, |_, _, _| rng.random_range(-1.0..1.0))
}

/// Every frequency slice computed separately, decomposed with a full
/// complex SVD and shrunk; no conjugate-symmetry shortcuts.
fn spectrum(x: &Tensor3) -> Vec<DMatrix<Complex64>> {
    let (n1, n2, n3) = x.dims();
    (0..n3)
        .map(|k| {
            DMatrix::from_fn(n1, n2, |i, j| {
                (0..n3)
                    .map(|m| {
                        let theta = -2.0 * PI * (k * m) as f64 / n3 as f64;
                        Complex64::from_polar(x.get(i, j, m), theta)
                    })
                    .sum()
            })
        })
        .collect()
}

fn oracle_svt(x: &Tensor3, tau: f64) -> Tensor3 {
    let (n1, n2, n3) = x.dims();
    let shrunk: Vec<DMatrix<Complex64>> = spectrum(x)
        .into_iter()
        .map(|s| {
            let svd = s.svd(true, true);
            let u = svd.u.unwrap();
            let v_t = svd.v_t.unwrap();
            let d = DMatrix::from_diagonal(&svd.singular_values.map(|v| {
                Complex64::new((v - tau).max(0.0), 0.0)
            }));
            u * d * v_t
        })
        .collect();
    Tensor3::from_fn(n1, n2, n3, |i, j, m| {
        let total: Complex64 = (0..n3)
            .map(|k| {
                let theta = 2.0 * PI * (k * m) as f64 / n3 as f64;
                shrunk[k][(i, j)] * Complex64::from_polar(1.0, theta)
            })
            .sum();
        total.re / n3 as f64
    })
}

fn oracle_tnn(x: &Tensor3) -> f64 {
    let n3 = x.dims().2;
    spectrum(x)
        .into_iter()
        .map(|s| s.singular_values().sum())
        .sum::<f64>()
        / n3 as f64
}

fn max_abs_diff(a: &Tensor3, b: &Tensor3) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn random_tensors_match_brute_force_shrinkage() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let x = random_tensor(&mut rng, 3, 3, 4);
        let tau = rng.random_range(0.05..1.5);
        let (fast, norm) = tensor_svt(&x, tau);
        let slow = oracle_svt(&x, tau);
        worst = worst.max(max_abs_diff(&fast, &slow));
        assert!((norm - oracle_tnn(&slow)).abs() < 1e-10);
    }
    assert!(worst <= 1e-10, "max deviation {worst:e}");
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn odd_depth_and_rectangular_slices() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (n1, n2, n3) in [(5, 2, 3), (2, 6, 5), (4, 4, 1), (64, 20, 3)] {
        let x = random_tensor(&mut rng, n1, n2, n3);
        let (fast, _) = tensor_svt(&x, 0.4);
        assert!(max_abs_diff(&fast, &oracle_svt(&x, 0.4)) < 1e-10);
        assert!((tnn(&x) - oracle_tnn(&x)).abs() < 1e-9);
    }
}

#[test]
fn hand_computed_two_by_two_by_two() {
    let x = Tensor3::from_fn(2, 2, 2, |i, j, _| if i == 0 && j == 0 { 1.0 } else { 0.0 });
    assert!((tnn(&x) - 1.0).abs() < 1e-12);
    let (g, norm) = tensor_svt(&x, 0.5);
    let expected = Tensor3::from_fn(2, 2, 2, |i, j, _| if i == 0 && j == 0 { 0.75 } else { 0.0 });
    assert!(max_abs_diff(&g, &expected) < 1e-12);
    assert!((norm - 0.75).abs() < 1e-12);
}

#[test]
fn threshold_above_every_singular_value_zeroes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_tensor(&mut rng, 3, 3, 4);
    let largest = spectrum(&x)
        .into_iter()
        .map(|s| s.singular_values().max())
        .fold(0.0, f64::max);
    let (g, norm) = tensor_svt(&x, largest);
    assert!(g.as_slice().iter().all(|&v| v.abs() < 1e-12));
    assert!(norm < 1e-12);
}

#[test]
fn svt_is_the_proximal_minimizer() {
    // The prox value must not be beaten by nearby perturbations.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let y = random_tensor(&mut rng, 3, 4, 4);
    let tau = 0.3;
    let value = |g: &Tensor3| {
        let d: f64 = g
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        0.5 * d + tau * oracle_tnn(g)
    };
    let (g, _) = tensor_svt(&y, tau);
    let best = value(&g);
    for _ in 0..50 {
        let (n1, n2, n3) = g.dims();
        let p = Tensor3::from_fn(n1, n2, n3, |i, j, k| {
            g.get(i, j, k) + rng.random_range(-1e-3..1e-3)
        });
        assert!(value(&p) >= best - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svt_is_non_expansive(seed in any::<u64>(), tau in 0.01f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_tensor(&mut rng, 4, 3, 3);
        let b = random_tensor(&mut rng, 4, 3, 3);
        let (sa, _) = tensor_svt(&a, tau);
        let (sb, _) = tensor_svt(&b, tau);
        let dist = |x: &Tensor3, y: &Tensor3| {
            x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
        };
        prop_assert!(dist(&sa, &sb) <= dist(&a, &b) + 1e-12);
    }

    #[test]
    fn svt_shrinks_tnn_by_at_most_tau_per_rank(seed in any::<u64>(), tau in 0.01f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(&mut rng, 3, 3, 4);
        let (g, norm) = tensor_svt(&x, tau);
        prop_assert!((norm - tnn(&g)).abs() < 1e-10);
        prop_assert!(norm <= tnn(&x) + 1e-12);
    }
}
