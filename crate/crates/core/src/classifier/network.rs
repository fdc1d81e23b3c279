//! Trainable form of the classifier with hand-written backpropagation.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use super::features::FeatureStats;
use super::mlp::{softmax, Layer, MlpModel, MODEL_FORMAT, MODEL_VERSION};

/// Weights (`n_in × n_out`) and biases of every dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Gradient of the loss, laid out like [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Network {
    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for d in dims.windows(2) {
            let limit = (6.0 / (d[0] + d[1]) as f64).sqrt();
            weights.push(Array2::from_shape_fn((d[0], d[1]), |_| rng.random_range(-limit..limit)));
            biases.push(Array1::zeros(d[1]));
        }
        Self { weights, biases }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.weights[0].nrows()];
        d.extend(self.weights.iter().map(|w| w.ncols()));
        d
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// `l2 · Σ w²` over all weight matrices (biases are not penalized).
    pub fn l2_penalty(&self, l2: f64) -> f64 {
        if l2 == 0.0 {
            return 0.0;
        }
        l2 * self.weights.iter().map(|w| w.iter().map(|x| x * x).sum::<f64>()).sum::<f64>()
    }

    /// Row-wise class probabilities, no dropout.
    pub fn probabilities(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let last = self.weights.len() - 1;
        let mut a = x.to_owned();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = a.dot(w);
            z += b;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        for mut row in a.rows_mut() {
            softmax(row.as_slice_mut().expect("standard layout"));
        }
        a
    }

    /// Mean cross-entropy over the rows of `x`, without the penalty term.
    pub fn cross_entropy(&self, x: ArrayView2<f64>, y: &[usize]) -> f64 {
        let p = self.probabilities(x);
        mean_ce(&p, y)
    }

    /// Mean cross-entropy plus L2 penalty, no dropout.
    pub fn loss(&self, x: ArrayView2<f64>, y: &[usize], l2: f64) -> f64 {
        self.cross_entropy(x, y) + self.l2_penalty(l2)
    }

    /// Loss (cross-entropy + L2) and its gradient for one batch. `dropout` is the
    /// drop probability applied after every hidden layer (inverted scaling).
    pub fn loss_and_gradients<R: Rng>(
        &self,
        x: ArrayView2<f64>,
        y: &[usize],
        l2: f64,
        dropout: f64,
        rng: &mut R,
    ) -> (f64, Gradients) {
        let n = x.nrows();
        let n_layers = self.weights.len();
        let keep = 1.0 - dropout;

        // inputs of each layer, and the derivative mask of each hidden layer
        let mut inputs: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
        let mut masks: Vec<Array2<f64>> = Vec::with_capacity(n_layers - 1);
        let mut a = x.to_owned();
        for i in 0..n_layers {
            let mut z = a.dot(&self.weights[i]);
            z += &self.biases[i];
            inputs.push(a);
            if i + 1 < n_layers {
                let mut mask = z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                if dropout > 0.0 {
                    mask.mapv_inplace(|m| if rng.random::<f64>() < dropout { 0.0 } else { m / keep });
                }
                z.mapv_inplace(|v| v.max(0.0));
                z *= &mask;
                masks.push(mask);
            }
            a = z;
        }
        for mut row in a.rows_mut() {
            softmax(row.as_slice_mut().expect("standard layout"));
        }
        let loss = mean_ce(&a, y) + self.l2_penalty(l2);

        // dL/dz of the output layer
        let mut dz = a;
        for (r, &c) in y.iter().enumerate() {
            dz[[r, c]] -= 1.0;
        }
        dz /= n as f64;

        let mut gw = vec![Array2::zeros((0, 0)); n_layers];
        let mut gb = vec![Array1::zeros(0); n_layers];
        for i in (0..n_layers).rev() {
            let mut w_grad = inputs[i].t().dot(&dz);
            if l2 != 0.0 {
                w_grad.scaled_add(2.0 * l2, &self.weights[i]);
            }
            gw[i] = w_grad;
            gb[i] = dz.sum_axis(Axis(0));
            if i > 0 {
                let mut da = dz.dot(&self.weights[i].t());
                da *= &masks[i - 1];
                dz = da;
            }
        }
        (
            loss,
            Gradients {
                weights: gw,
                biases: gb,
            },
        )
    }

    pub fn to_model(&self, stats: FeatureStats, config_hash: String) -> MlpModel {
        let layers = self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| Layer {
                n_in: w.nrows(),
                n_out: w.ncols(),
                weights: w.iter().copied().collect(),
                bias: b.to_vec(),
            })
            .collect();
        MlpModel {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            dims: self.dims(),
            layers,
            stats,
            config_hash,
        }
    }

    pub fn from_model(m: &MlpModel) -> Self {
        Self {
            weights: m
                .layers
                .iter()
                .map(|l| Array2::from_shape_vec((l.n_in, l.n_out), l.weights.clone()).expect("validated dims"))
                .collect(),
            biases: m.layers.iter().map(|l| Array1::from(l.bias.clone())).collect(),
        }
    }
}

fn mean_ce(p: &Array2<f64>, y: &[usize]) -> f64 {
    let total: f64 = y
        .iter()
        .enumerate()
        .map(|(r, &c)| -(p[[r, c]].max(1e-300)).ln())
        .sum();
    total / y.len() as f64
}

/// Adam optimizer state.
#[derive(Debug, Clone)]
pub(crate) struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub(crate) fn new(net: &Network, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = Gradients {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        };
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub(crate) fn step(&mut self, net: &mut Network, g: &Gradients) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = self.lr;
        let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * mh / (vh.sqrt() + eps);
        };
        for i in 0..net.weights.len() {
            Zip::from(&mut net.weights[i])
                .and(&g.weights[i])
                .and(&mut self.m.weights[i])
                .and(&mut self.v.weights[i])
                .for_each(update);
            Zip::from(&mut net.biases[i])
                .and(&g.biases[i])
                .and(&mut self.m.biases[i])
                .and(&mut self.v.biases[i])
                .for_each(update);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn probabilities_match_model_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::glorot(&[12, 7, 7, 3], &mut rng);
        let model = net.to_model(FeatureStats::identity(3), String::new());
        let x = Array2::from_shape_fn((5, 12), |_| rng.random_range(-2.0..2.0));
        let p = net.probabilities(x.view());
        for r in 0..5 {
            let q = model.forward(x.row(r).as_slice().unwrap()).unwrap();
            for c in 0..3 {
                assert!((p[[r, c]] - q[c]).abs() < 1e-12);
            }
        }
        assert_eq!(Network::from_model(&model), net);
    }

    #[test]
    fn glorot_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Network::glorot(&[180, 75, 3], &mut rng);
        let lim = (6.0f64 / 255.0).sqrt();
        assert!(net.weights[0].iter().all(|w| w.abs() <= lim));
        assert!(net.biases.iter().all(|b| b.iter().all(|&x| x == 0.0)));
        assert_eq!(net.n_params(), 180 * 75 + 75 + 75 * 3 + 3);
    }

    #[test]
    fn small_step_decreases_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Network::glorot(&[6, 8, 3], &mut rng);
        let x = Array2::from_shape_fn((1, 6), |_| rng.random_range(-1.0..1.0));
        let y = [2usize];
        let (l0, g) = net.loss_and_gradients(x.view(), &y, 0.0, 0.0, &mut rng);
        let lr = 1e-3;
        for (w, gw) in net.weights.iter_mut().zip(&g.weights) {
            w.scaled_add(-lr, gw);
        }
        for (b, gb) in net.biases.iter_mut().zip(&g.biases) {
            b.scaled_add(-lr, gb);
        }
        assert!(net.loss(x.view(), &y, 0.0) < l0);
    }
}
