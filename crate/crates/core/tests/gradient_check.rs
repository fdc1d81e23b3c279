//! Backpropagation against central finite differences on a reduced network.

use drillsim::classifier::Network;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[test]
fn backprop_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // same shape family as the full model (windowed input, stacked ReLU layers,
    // softmax output), scaled down
    let dims = [18, 8, 8, 6, 3];
    let mut net = Network::glorot(&dims, &mut rng);
    for b in &mut net.biases {
        b.mapv_inplace(|_| rng.random_range(-0.1..0.1));
    }
    let n = 16;
    let x = Array2::from_shape_fn((n, dims[0]), |_| rng.random_range(-1.5..1.5));
    let y: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let l2 = 1e-3;

    // no dropout, so the gradient is that of `loss`
    let (loss, grads) = net.loss_and_gradients(x.view(), &y, l2, 0.0, &mut rng);
    assert!((loss - net.loss(x.view(), &y, l2)).abs() < 1e-12);

    let h = 1e-6;
    let mut worst = 0.0f64;
    for layer in 0..net.weights.len() {
        let (r, c) = net.weights[layer].dim();
        for i in 0..r {
            for j in 0..c {
                let orig = net.weights[layer][[i, j]];
                net.weights[layer][[i, j]] = orig + h;
                let up = net.loss(x.view(), &y, l2);
                net.weights[layer][[i, j]] = orig - h;
                let down = net.loss(x.view(), &y, l2);
                net.weights[layer][[i, j]] = orig;
                let fd = (up - down) / (2.0 * h);
                worst = worst.max(rel_err(grads.weights[layer][[i, j]], fd));
            }
        }
        for j in 0..net.biases[layer].len() {
            let orig = net.biases[layer][j];
            net.biases[layer][j] = orig + h;
            let up = net.loss(x.view(), &y, l2);
            net.biases[layer][j] = orig - h;
            let down = net.loss(x.view(), &y, l2);
            net.biases[layer][j] = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max(rel_err(grads.biases[layer][j], fd));
        }
    }
    assert!(worst <= 1e-5, "max relative error {worst:e}");
}
