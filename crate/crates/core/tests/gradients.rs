mod common;

use common::grad::{self, TOLERANCE};
use r2d2::nn::{images_to_tensor, ops, Network, NetworkConfig};
use r2d2::pixel::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 20;

#[test]
fn every_layer_matches_finite_differences() {
    for (name, check) in grad::all_checks() {
        for seed in 0..SEEDS {
            let r = check(seed);
            assert!(r.worst() < TOLERANCE, "{name} seed {seed}: {r:?}");
        }
    }
}

#[test]
fn conv_forward_matches_reference() {
    for k in [1, 3, 5] {
        for seed in 0..SEEDS {
            let e = grad::conv_forward_error(seed, k);
            assert!(e < 1e-5, "k={k} seed {seed}: max abs error {e}");
        }
    }
}

fn random_image(rng: &mut ChaCha8Rng, size: usize) -> RgbImage {
    RgbImage::new(size, size, (0..size * size * 3).map(|_| rng.gen()).collect()).unwrap()
}

/// Whole network against the f64 reference network. Step 1e-6 makes a
/// ReLU or pooling kink crossing vanishingly unlikely.
#[test]
fn network_backward_matches_reference_network() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net = Network::new(NetworkConfig::default().with_input(8, 8), 11).unwrap();
    for v in net.head_weight.data_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let images: Vec<RgbImage> = (0..2).map(|_| random_image(&mut rng, 8)).collect();
    let x = images_to_tensor(&images.iter().collect::<Vec<_>>()).unwrap();
    let labels = [0usize, 1];

    let (logits, cache) = net.forward(&x).unwrap();
    let ce = ops::softmax_cross_entropy(&logits, &labels).unwrap();
    let analytic = net.backward(&cache, &ce.grad).unwrap();

    let xs: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
    let mut params: Vec<Vec<f64>> = net
        .parameters()
        .iter()
        .map(|t| t.data().iter().map(|&v| v as f64).collect())
        .collect();
    let base = grad::network_loss_ref(&net, &params, &xs, 2, &labels);
    assert!((base - ce.loss as f64).abs() < 1e-5, "{base} vs {}", ce.loss);

    let h = 1e-6;
    for p in 0..params.len() {
        let mut num = Vec::with_capacity(params[p].len());
        for i in 0..params[p].len() {
            let orig = params[p][i];
            params[p][i] = orig + h;
            let plus = grad::network_loss_ref(&net, &params, &xs, 2, &labels);
            params[p][i] = orig - h;
            let minus = grad::network_loss_ref(&net, &params, &xs, 2, &labels);
            params[p][i] = orig;
            num.push((plus - minus) / (2.0 * h));
        }
        let a = analytic[p].data();
        let diff = a
            .iter()
            .zip(&num)
            .map(|(&a, n)| (a as f64 - n).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = num.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(
            diff <= 1e-4 * scale.max(1e-6),
            "parameter {p}: |a-n| {diff} vs |n| {scale}"
        );
    }
}
