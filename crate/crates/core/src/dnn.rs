//! Frame-wise feed-forward conversion model.
//!
//! An 80 -> 128 -> 64 -> 64 -> 128 -> 80 ReLU network trained with Adam on
//! the L2 loss over z-score normalized features, with L2 weight
//! regularization (biases excluded). Training is single-threaded and
//! bit-reproducible given the seed.

use crate::align::AlignedPairSet;
use crate::error::{Error, Result};
use crate::spectral::{AnalysisConfig, Cepstrogram};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Training hyperparameters. Defaults are the tuned values: hidden sizes
/// (128, 64, 64, 128), lr 0.002, batch 2048 frames, lambda 1e-5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnnHyperparams {
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2_lambda: f64,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for DnnHyperparams {
    fn default() -> Self {
        DnnHyperparams {
            hidden_sizes: vec![128, 64, 64, 128],
            learning_rate: 0.002,
            batch_size: 2048,
            l2_lambda: 1e-5,
            epochs: 100,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl DnnHyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 || self.adam_eps <= 0.0 {
            return Err(Error::Config(
                "learning rate and eps must be positive".into(),
            ));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Plain fully-connected ReLU network. Weight matrices are (out x in).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl Mlp {
    /// Seeded He-style uniform initialization for the given layer sizes.
    pub fn init(sizes: &[usize], rng: &mut ChaCha8Rng) -> Mlp {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            weights.push(DMatrix::from_fn(fan_out, fan_in, |_, _| {
                rng.gen_range(-bound..bound)
            }));
            biases.push(DVector::zeros(fan_out));
        }
        Mlp { weights, biases }
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    /// Forward pass over a batch (rows are samples). ReLU on all layers but
    /// the last.
    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut a = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = &a * w.transpose();
            for mut row in z.row_iter_mut() {
                row += b.transpose();
            }
            if l + 1 < self.weights.len() {
                z.apply(|v| *v = v.max(0.0));
            }
            a = z;
        }
        a
    }

    /// Mean squared error plus L2 penalty, and analytic gradients of both.
    ///
    /// Loss = mean over batch and output dims of (pred - y)^2
    ///      + l2_lambda * sum of squared weights (biases excluded).
    pub fn loss_and_gradients(
        &self,
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
        l2_lambda: f64,
    ) -> (f64, Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
        let batch = x.nrows() as f64;
        let out_dim = y.ncols() as f64;

        // forward, caching activations
        let mut activations = vec![x.clone()];
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = activations.last().unwrap() * w.transpose();
            for mut row in z.row_iter_mut() {
                row += b.transpose();
            }
            if l + 1 < self.weights.len() {
                z.apply(|v| *v = v.max(0.0));
            }
            activations.push(z);
        }
        let pred = activations.last().unwrap();
        let resid = pred - y;
        let mse = resid.map(|v| v * v).sum() / (batch * out_dim);
        let weight_sq: f64 = self.weights.iter().map(|w| w.map(|v| v * v).sum()).sum();
        let loss = mse + l2_lambda * weight_sq;

        // backward
        let mut grad_w = Vec::with_capacity(self.num_layers());
        let mut grad_b = Vec::with_capacity(self.num_layers());
        let mut delta = resid * (2.0 / (batch * out_dim));
        for l in (0..self.num_layers()).rev() {
            let a_prev = &activations[l];
            let gw = delta.transpose() * a_prev + 2.0 * l2_lambda * &self.weights[l];
            let gb = DVector::from_fn(delta.ncols(), |j, _| delta.column(j).sum());
            grad_w.push(gw);
            grad_b.push(gb);
            if l > 0 {
                let mut back = &delta * &self.weights[l];
                // ReLU mask from the post-activation values
                let a = &activations[l];
                for i in 0..back.nrows() {
                    for j in 0..back.ncols() {
                        if a[(i, j)] <= 0.0 {
                            back[(i, j)] = 0.0;
                        }
                    }
                }
                delta = back;
            }
        }
        grad_w.reverse();
        grad_b.reverse();
        (loss, grad_w, grad_b)
    }
}

/// Adam state and update step.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: usize,
    m_w: Vec<DMatrix<f64>>,
    v_w: Vec<DMatrix<f64>>,
    m_b: Vec<DVector<f64>>,
    v_b: Vec<DVector<f64>>,
}

impl Adam {
    pub fn new(model: &Mlp, hp: &DnnHyperparams) -> Adam {
        Adam {
            lr: hp.learning_rate,
            beta1: hp.adam_beta1,
            beta2: hp.adam_beta2,
            eps: hp.adam_eps,
            step: 0,
            m_w: model
                .weights
                .iter()
                .map(|w| DMatrix::zeros(w.nrows(), w.ncols()))
                .collect(),
            v_w: model
                .weights
                .iter()
                .map(|w| DMatrix::zeros(w.nrows(), w.ncols()))
                .collect(),
            m_b: model
                .biases
                .iter()
                .map(|b| DVector::zeros(b.len()))
                .collect(),
            v_b: model
                .biases
                .iter()
                .map(|b| DVector::zeros(b.len()))
                .collect(),
        }
    }

    // index-based: the same (l, i, j) addresses four parallel state arrays
    #[allow(clippy::needless_range_loop)]
    pub fn update(&mut self, model: &mut Mlp, grad_w: &[DMatrix<f64>], grad_b: &[DVector<f64>]) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for l in 0..model.num_layers() {
            for i in 0..model.weights[l].nrows() {
                for j in 0..model.weights[l].ncols() {
                    let g = grad_w[l][(i, j)];
                    let m = &mut self.m_w[l][(i, j)];
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    let v = &mut self.v_w[l][(i, j)];
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let m_hat = self.m_w[l][(i, j)] / bc1;
                    let v_hat = self.v_w[l][(i, j)] / bc2;
                    model.weights[l][(i, j)] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                }
            }
            for i in 0..model.biases[l].len() {
                let g = grad_b[l][i];
                let m = &mut self.m_b[l][i];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                let v = &mut self.v_b[l][i];
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = self.m_b[l][i] / bc1;
                let v_hat = self.v_b[l][i] / bc2;
                model.biases[l][i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Trained converter: network plus input/output z-score statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DnnModel {
    pub mlp: Mlp,
    pub in_mean: DVector<f64>,
    pub in_std: DVector<f64>,
    pub out_mean: DVector<f64>,
    pub out_std: DVector<f64>,
    pub trained_on: String,
    pub config: AnalysisConfig,
}

fn column_stats(m: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = m.nrows() as f64;
    let mean = DVector::from_fn(m.ncols(), |j, _| m.column(j).sum() / n);
    let std = DVector::from_fn(m.ncols(), |j, _| {
        let mu = mean[j];
        let var = m.column(j).iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        var.sqrt().max(1e-8)
    });
    (mean, std)
}

fn znorm(m: &DMatrix<f64>, mean: &DVector<f64>, std: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] - mean[j]) / std[j])
}

/// Raw matrices train entry point (z-stats come from `x`/`y` themselves).
///
/// Returns the parameters from the epoch with lowest validation loss, or the
/// final epoch when no validation data is given.
pub fn train_dnn_matrices(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    val: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
    hp: &DnnHyperparams,
    trained_on: &str,
    config: &AnalysisConfig,
) -> Result<DnnModel> {
    hp.validate()?;
    if x.nrows() == 0 {
        return Err(Error::Training("no training frames".into()));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension("input/target row counts differ".into()));
    }

    let (in_mean, in_std) = column_stats(x);
    let (out_mean, out_std) = column_stats(y);
    let xn = znorm(x, &in_mean, &in_std);
    let yn = znorm(y, &out_mean, &out_std);
    let val_n = val.map(|(vx, vy)| (znorm(vx, &in_mean, &in_std), znorm(vy, &out_mean, &out_std)));

    let mut sizes = vec![x.ncols()];
    sizes.extend(&hp.hidden_sizes);
    sizes.push(y.ncols());

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut model = Mlp::init(&sizes, &mut rng);
    let mut adam = Adam::new(&model, hp);

    let n = xn.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut best: Option<(f64, Mlp)> = None;

    for _epoch in 0..hp.epochs {
        // Fisher-Yates with the training RNG; deterministic across runs
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut start = 0;
        while start < n {
            let end = (start + hp.batch_size).min(n);
            let idx = &order[start..end];
            let bx = DMatrix::from_fn(idx.len(), xn.ncols(), |i, j| xn[(idx[i], j)]);
            let by = DMatrix::from_fn(idx.len(), yn.ncols(), |i, j| yn[(idx[i], j)]);
            let (loss, gw, gb) = model.loss_and_gradients(&bx, &by, hp.l2_lambda);
            if !loss.is_finite() {
                return Err(Error::Training("loss diverged to non-finite value".into()));
            }
            adam.update(&mut model, &gw, &gb);
            start = end;
        }

        if let Some((vx, vy)) = &val_n {
            let pred = model.forward(vx);
            let resid = &pred - vy;
            let vloss = resid.map(|v| v * v).sum() / (vx.nrows() as f64 * vx.ncols() as f64);
            if !vloss.is_finite() {
                return Err(Error::Training("validation loss non-finite".into()));
            }
            if best.as_ref().is_none_or(|(b, _)| vloss < *b) {
                best = Some((vloss, model.clone()));
            }
        }
    }

    let mlp = match best {
        Some((_, m)) => m,
        None => model,
    };
    Ok(DnnModel {
        mlp,
        in_mean,
        in_std,
        out_mean,
        out_std,
        trained_on: trained_on.to_string(),
        config: config.clone(),
    })
}

/// Train on aligned pairs: source frames are inputs, target frames outputs
/// (the full order, c0 included).
pub fn train_dnn(
    pairs: &AlignedPairSet,
    hp: &DnnHyperparams,
    val: Option<&AlignedPairSet>,
    trained_on: &str,
    config: &AnalysisConfig,
) -> Result<DnnModel> {
    let order = pairs.order;
    let x = pairs.rows.columns(0, order).into_owned();
    let y = pairs.rows.columns(order, order).into_owned();
    let val_mats = val.map(|v| {
        (
            v.rows.columns(0, order).into_owned(),
            v.rows.columns(order, order).into_owned(),
        )
    });
    train_dnn_matrices(
        &x,
        &y,
        val_mats.as_ref().map(|(a, b)| (a, b)),
        hp,
        trained_on,
        config,
    )
}

/// Frame-wise conversion: z-normalize, forward pass, de-normalize.
pub fn convert_dnn(model: &DnnModel, src: &Cepstrogram) -> Result<Cepstrogram> {
    if src.config.order != model.in_mean.len() {
        return Err(Error::Dimension(format!(
            "model expects {}-dim frames, got {}",
            model.in_mean.len(),
            src.config.order
        )));
    }
    let xn = znorm(&src.frames, &model.in_mean, &model.in_std);
    let pred = model.mlp.forward(&xn);
    let frames = DMatrix::from_fn(pred.nrows(), pred.ncols(), |i, j| {
        pred[(i, j)] * model.out_std[j] + model.out_mean[j]
    });
    Ok(Cepstrogram {
        frames,
        config: src.config.clone(),
    })
}
