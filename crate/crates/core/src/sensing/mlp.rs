//! Force regressor: a four-layer perceptron with layer normalization and
//! GELU activations between the affine stages (15 → 64 → 64 → 64 → 3).
//!
//! Training is plain mini-batch gradient descent with momentum on the
//! standardized inputs/outputs, with a geometric learning-rate decay.
//! Forward and backward passes are batch-major (columns are samples) so
//! the heavy lifting runs through dense GEMMs. Everything is `f64`
//! end to end; weight files are serialized as little-endian `f32` with a
//! JSON sidecar describing shapes and standardization statistics.

use crate::sensing::dataset::{ForceSample, TrainTestSplit};
use crate::sensing::taxel::{TaxelReading, READING_DIM};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const HIDDEN_WIDTH: usize = 64;
pub const OUTPUT_DIM: usize = 3;
const LN_EPS: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("empty split: train {train}, test {test}")]
    EmptySplit { train: usize, test: usize },
    #[error("weights io: {0}")]
    Io(#[from] std::io::Error),
    #[error("weights sidecar: {0}")]
    Sidecar(String),
    #[error("weight file length {got} does not match sidecar ({expected} floats)")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone)]
struct LinearLayer {
    /// out × in.
    weight: DMatrix<f64>,
    bias: DVector<f64>,
}

#[derive(Debug, Clone)]
struct LayerNorm {
    gamma: DVector<f64>,
    beta: DVector<f64>,
}

/// Trained estimator with its standardization statistics.
#[derive(Debug, Clone)]
pub struct MlpEstimator {
    linear: Vec<LinearLayer>,
    norms: Vec<LayerNorm>,
    input_mean: DVector<f64>,
    input_std: DVector<f64>,
    output_mean: DVector<f64>,
    output_std: DVector<f64>,
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    const A: f64 = 0.044_715;
    0.5 * x * (1.0 + (C * (x + A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    const A: f64 = 0.044_715;
    let u = C * (x + A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * A * x * x)
}

/// Per-column layer norm cache for the backward pass.
struct NormCache {
    normalized: DMatrix<f64>,
    inv_std: DVector<f64>,
}

struct ForwardCache {
    /// Input and the activation entering each linear layer (4 entries).
    layer_inputs: Vec<DMatrix<f64>>,
    /// Layer-norm caches.
    norms: Vec<NormCache>,
    /// Post-norm, pre-activation values.
    pre_activation: Vec<DMatrix<f64>>,
    /// Final output.
    output: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct GradientSet {
    pub linear: Vec<(DMatrix<f64>, DVector<f64>)>,
    pub norms: Vec<(DVector<f64>, DVector<f64>)>,
}

impl MlpEstimator {
    fn architecture() -> [(usize, usize); 4] {
        [
            (READING_DIM, HIDDEN_WIDTH),
            (HIDDEN_WIDTH, HIDDEN_WIDTH),
            (HIDDEN_WIDTH, HIDDEN_WIDTH),
            (HIDDEN_WIDTH, OUTPUT_DIM),
        ]
    }

    fn init(rng: &mut ChaCha8Rng) -> Self {
        let linear = Self::architecture()
            .iter()
            .map(|&(n_in, n_out)| {
                let scale = (2.0 / (n_in + n_out) as f64).sqrt();
                let dist = Normal::<f64>::new(0.0, scale).unwrap();
                LinearLayer {
                    weight: DMatrix::from_fn(n_out, n_in, |_, _| dist.sample(rng)),
                    bias: DVector::zeros(n_out),
                }
            })
            .collect();
        let norms = (0..3)
            .map(|_| LayerNorm {
                gamma: DVector::from_element(HIDDEN_WIDTH, 1.0),
                beta: DVector::zeros(HIDDEN_WIDTH),
            })
            .collect();
        Self {
            linear,
            norms,
            input_mean: DVector::zeros(READING_DIM),
            input_std: DVector::from_element(READING_DIM, 1.0),
            output_mean: DVector::zeros(OUTPUT_DIM),
            output_std: DVector::from_element(OUTPUT_DIM, 1.0),
        }
    }

    /// Standardized forward pass over a batch (columns are samples).
    fn forward_batch(&self, x: &DMatrix<f64>) -> ForwardCache {
        let cols = x.ncols();
        let mut layer_inputs = Vec::with_capacity(4);
        let mut norm_caches = Vec::with_capacity(3);
        let mut pre_activation = Vec::with_capacity(3);

        let mut activation = x.clone();
        for stage in 0..3 {
            layer_inputs.push(activation.clone());
            let layer = &self.linear[stage];
            let mut z = &layer.weight * &activation;
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            // Layer norm per sample (over the feature dimension).
            let dim = z.nrows() as f64;
            let mut normalized = DMatrix::zeros(z.nrows(), cols);
            let mut inv_std = DVector::zeros(cols);
            let norm = &self.norms[stage];
            let mut activated = DMatrix::zeros(z.nrows(), cols);
            for c in 0..cols {
                let col = z.column(c);
                let mean = col.sum() / dim;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / dim;
                let istd = 1.0 / (var + LN_EPS).sqrt();
                inv_std[c] = istd;
                for r in 0..z.nrows() {
                    let xhat = (z[(r, c)] - mean) * istd;
                    normalized[(r, c)] = xhat;
                    let pre = norm.gamma[r] * xhat + norm.beta[r];
                    activated[(r, c)] = pre;
                }
            }
            pre_activation.push(activated.clone());
            norm_caches.push(NormCache { normalized, inv_std });
            activated.apply(|v| *v = gelu(*v));
            activation = activated;
        }

        layer_inputs.push(activation.clone());
        let last = &self.linear[3];
        let mut output = &last.weight * &activation;
        for mut col in output.column_iter_mut() {
            col += &last.bias;
        }
        ForwardCache { layer_inputs, norms: norm_caches, pre_activation, output }
    }

    /// Mean-squared-error loss and parameter gradients on a standardized
    /// batch. `targets` has the same column layout as the inputs.
    pub fn loss_and_gradients(&self, x: &DMatrix<f64>, targets: &DMatrix<f64>) -> (f64, GradientSet) {
        let cache = self.forward_batch(x);
        let cols = x.ncols() as f64;
        let residual = &cache.output - targets;
        let loss = residual.iter().map(|v| v * v).sum::<f64>() / (cols * OUTPUT_DIM as f64);

        let mut grads = GradientSet {
            linear: self
                .linear
                .iter()
                .map(|l| (DMatrix::zeros(l.weight.nrows(), l.weight.ncols()), DVector::zeros(l.bias.len())))
                .collect(),
            norms: self
                .norms
                .iter()
                .map(|n| (DVector::zeros(n.gamma.len()), DVector::zeros(n.beta.len())))
                .collect(),
        };

        // Output layer.
        let mut delta = residual * (2.0 / (cols * OUTPUT_DIM as f64));
        grads.linear[3].0 = &delta * cache.layer_inputs[3].transpose();
        grads.linear[3].1 = sum_columns(&delta);
        let mut upstream = self.linear[3].weight.transpose() * &delta;

        for stage in (0..3).rev() {
            // Through GELU.
            let pre = &cache.pre_activation[stage];
            let mut d_pre = upstream;
            for r in 0..d_pre.nrows() {
                for c in 0..d_pre.ncols() {
                    d_pre[(r, c)] *= gelu_grad(pre[(r, c)]);
                }
            }
            // Through layer norm.
            let norm = &self.norms[stage];
            let nc = &cache.norms[stage];
            let dim = d_pre.nrows() as f64;
            let mut d_z = DMatrix::zeros(d_pre.nrows(), d_pre.ncols());
            for c in 0..d_pre.ncols() {
                let mut mean_dxhat = 0.0;
                let mut mean_dxhat_xhat = 0.0;
                for r in 0..d_pre.nrows() {
                    grads.norms[stage].0[r] += d_pre[(r, c)] * nc.normalized[(r, c)];
                    grads.norms[stage].1[r] += d_pre[(r, c)];
                    let dxhat = d_pre[(r, c)] * norm.gamma[r];
                    mean_dxhat += dxhat;
                    mean_dxhat_xhat += dxhat * nc.normalized[(r, c)];
                }
                mean_dxhat /= dim;
                mean_dxhat_xhat /= dim;
                for r in 0..d_pre.nrows() {
                    let dxhat = d_pre[(r, c)] * norm.gamma[r];
                    d_z[(r, c)] = nc.inv_std[c]
                        * (dxhat - mean_dxhat - nc.normalized[(r, c)] * mean_dxhat_xhat);
                }
            }
            // Through the affine layer.
            grads.linear[stage].0 = &d_z * cache.layer_inputs[stage].transpose();
            grads.linear[stage].1 = sum_columns(&d_z);
            upstream = self.linear[stage].weight.transpose() * &d_z;
            delta = d_z;
        }
        let _ = delta;
        (loss, grads)
    }

    fn standardize_input(&self, reading: &[f64; READING_DIM]) -> DVector<f64> {
        DVector::from_fn(READING_DIM, |i, _| (reading[i] - self.input_mean[i]) / self.input_std[i])
    }

    /// Estimate the fingertip-frame force from an offset-subtracted reading.
    pub fn estimate_force(&self, reading: &TaxelReading) -> Vector3<f64> {
        let x = DMatrix::from_columns(&[self.standardize_input(&reading.values)]);
        let cache = self.forward_batch(&x);
        let y = cache.output.column(0);
        Vector3::new(
            y[0] * self.output_std[0] + self.output_mean[0],
            y[1] * self.output_std[1] + self.output_mean[1],
            y[2] * self.output_std[2] + self.output_mean[2],
        )
    }

    /// Batched convenience wrapper, order preserving.
    pub fn estimate_batch(&self, readings: &[TaxelReading]) -> Vec<Vector3<f64>> {
        readings.iter().map(|r| self.estimate_force(r)).collect()
    }

    pub fn save(&self, dir: &Path, name: &str) -> Result<(), MlpError> {
        std::fs::create_dir_all(dir)?;
        let sidecar = Sidecar {
            layers: Self::architecture().iter().map(|&(i, o)| LayerShape { input: i, output: o }).collect(),
            layer_norm_width: HIDDEN_WIDTH,
            input_mean: self.input_mean.iter().copied().collect(),
            input_std: self.input_std.iter().copied().collect(),
            output_mean: self.output_mean.iter().copied().collect(),
            output_std: self.output_std.iter().copied().collect(),
        };
        let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        std::fs::write(dir.join(format!("{name}.json")), json)?;

        let mut bytes: Vec<u8> = Vec::new();
        for layer in &self.linear {
            // Row-major weight dump.
            for r in 0..layer.weight.nrows() {
                for c in 0..layer.weight.ncols() {
                    bytes.extend_from_slice(&(layer.weight[(r, c)] as f32).to_le_bytes());
                }
            }
            for v in layer.bias.iter() {
                bytes.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        for norm in &self.norms {
            for v in norm.gamma.iter() {
                bytes.extend_from_slice(&(*v as f32).to_le_bytes());
            }
            for v in norm.beta.iter() {
                bytes.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        let mut file = std::fs::File::create(dir.join(format!("{name}.bin")))?;
        file.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(dir: &Path, name: &str) -> Result<Self, MlpError> {
        let sidecar: Sidecar = serde_json::from_str(
            &std::fs::read_to_string(dir.join(format!("{name}.json")))?,
        )
        .map_err(|e| MlpError::Sidecar(e.to_string()))?;
        let expected_shapes = Self::architecture();
        if sidecar.layers.len() != 4
            || sidecar
                .layers
                .iter()
                .zip(expected_shapes.iter())
                .any(|(s, &(i, o))| s.input != i || s.output != o)
        {
            return Err(MlpError::Sidecar("unexpected layer shapes".into()));
        }

        let mut file = std::fs::File::open(dir.join(format!("{name}.bin")))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let expected_floats: usize = expected_shapes.iter().map(|&(i, o)| i * o + o).sum::<usize>()
            + 3 * 2 * HIDDEN_WIDTH;
        if bytes.len() != expected_floats * 4 {
            return Err(MlpError::LengthMismatch { expected: expected_floats, got: bytes.len() / 4 });
        }
        let mut floats = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
        let mut next = || floats.next().expect("length checked");

        let mut estimator = Self {
            linear: Vec::new(),
            norms: Vec::new(),
            input_mean: DVector::from_vec(sidecar.input_mean.clone()),
            input_std: DVector::from_vec(sidecar.input_std.clone()),
            output_mean: DVector::from_vec(sidecar.output_mean.clone()),
            output_std: DVector::from_vec(sidecar.output_std.clone()),
        };
        for &(n_in, n_out) in &expected_shapes {
            let mut weight = DMatrix::zeros(n_out, n_in);
            for r in 0..n_out {
                for c in 0..n_in {
                    weight[(r, c)] = next();
                }
            }
            let bias = DVector::from_fn(n_out, |_, _| next());
            estimator.linear.push(LinearLayer { weight, bias });
        }
        for _ in 0..3 {
            let gamma = DVector::from_fn(HIDDEN_WIDTH, |_, _| next());
            let beta = DVector::from_fn(HIDDEN_WIDTH, |_, _| next());
            estimator.norms.push(LayerNorm { gamma, beta });
        }
        Ok(estimator)
    }

    /// Mutable views over every parameter tensor, for the finite-difference
    /// gradient checks.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.linear {
            out.push(layer.weight.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
        }
        for norm in &mut self.norms {
            out.push(norm.gamma.as_mut_slice());
            out.push(norm.beta.as_mut_slice());
        }
        out
    }

    /// Gradients in the same order as [`MlpEstimator::params_mut`].
    pub fn flatten_gradients(grads: &GradientSet) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for (w, b) in &grads.linear {
            // Match DMatrix's column-major as_mut_slice layout.
            out.push(w.as_slice().to_vec());
            out.push(b.as_slice().to_vec());
        }
        for (gamma, beta) in &grads.norms {
            out.push(gamma.as_slice().to_vec());
            out.push(beta.as_slice().to_vec());
        }
        out
    }
}

fn sum_columns(m: &DMatrix<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(m.nrows());
    for c in 0..m.ncols() {
        out += m.column(c);
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerShape {
    input: usize,
    output: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    layers: Vec<LayerShape>,
    layer_norm_width: usize,
    input_mean: Vec<f64>,
    input_std: Vec<f64>,
    output_mean: Vec<f64>,
    output_std: Vec<f64>,
}

/// Normalized MAE of an estimator on the given sample indices: per force
/// component, MAE divided by that component's target range, averaged.
pub fn evaluate_nmae(estimator: &MlpEstimator, samples: &[ForceSample], indices: &[usize]) -> f64 {
    assert!(!indices.is_empty(), "cannot evaluate on an empty index set");
    let mut mae = [0.0; 3];
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for &idx in indices {
        let predicted = estimator.estimate_force(&samples[idx].taxels);
        for k in 0..3 {
            let truth = samples[idx].force[k];
            mae[k] += (predicted[k] - truth).abs();
            min[k] = min[k].min(truth);
            max[k] = max[k].max(truth);
        }
    }
    let n = indices.len() as f64;
    let mut nmae = 0.0;
    for k in 0..3 {
        nmae += (mae[k] / n) / (max[k] - min[k]).max(1e-9);
    }
    nmae / 3.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Multiplicative learning-rate decay per epoch.
    pub lr_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 24, batch_size: 128, learning_rate: 0.02, momentum: 0.9, lr_decay: 0.92 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean over components of MAE / (max − min) on the held-out split.
    pub nmae: f64,
    pub per_component_mae: [f64; 3],
    pub per_component_range: [f64; 3],
    /// Full-training-split loss recorded after each epoch.
    pub epoch_losses: Vec<f64>,
    pub train_count: usize,
    pub test_count: usize,
}

/// Train an estimator on the train side of the split and evaluate the
/// normalized MAE on the test side. Deterministic per seed.
pub fn train_estimator(
    samples: &[ForceSample],
    split: &TrainTestSplit,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(MlpEstimator, TrainReport), MlpError> {
    if split.train.is_empty() || split.test.is_empty() {
        return Err(MlpError::EmptySplit { train: split.train.len(), test: split.test.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut estimator = MlpEstimator::init(&mut rng);

    // Standardization statistics from the training split only.
    let n_train = split.train.len();
    let mut input_mean: DVector<f64> = DVector::zeros(READING_DIM);
    let mut output_mean: DVector<f64> = DVector::zeros(OUTPUT_DIM);
    for &idx in &split.train {
        for k in 0..READING_DIM {
            input_mean[k] += samples[idx].taxels.values[k];
        }
        for k in 0..OUTPUT_DIM {
            output_mean[k] += samples[idx].force[k];
        }
    }
    input_mean /= n_train as f64;
    output_mean /= n_train as f64;
    let mut input_std: DVector<f64> = DVector::zeros(READING_DIM);
    let mut output_std: DVector<f64> = DVector::zeros(OUTPUT_DIM);
    for &idx in &split.train {
        for k in 0..READING_DIM {
            let d = samples[idx].taxels.values[k] - input_mean[k];
            input_std[k] += d * d;
        }
        for k in 0..OUTPUT_DIM {
            let d = samples[idx].force[k] - output_mean[k];
            output_std[k] += d * d;
        }
    }
    for v in input_std.iter_mut() {
        *v = (*v / n_train as f64).sqrt().max(1e-6);
    }
    for v in output_std.iter_mut() {
        *v = (*v / n_train as f64).sqrt().max(1e-6);
    }
    estimator.input_mean = input_mean;
    estimator.input_std = input_std;
    estimator.output_mean = output_mean;
    estimator.output_std = output_std;

    // Pre-standardized training matrices.
    let x_train = DMatrix::from_fn(READING_DIM, n_train, |r, c| {
        (samples[split.train[c]].taxels.values[r] - estimator.input_mean[r]) / estimator.input_std[r]
    });
    let y_train = DMatrix::from_fn(OUTPUT_DIM, n_train, |r, c| {
        (samples[split.train[c]].force[r] - estimator.output_mean[r]) / estimator.output_std[r]
    });

    let mut velocity: Vec<(DMatrix<f64>, DVector<f64>)> = estimator
        .linear
        .iter()
        .map(|l| (DMatrix::zeros(l.weight.nrows(), l.weight.ncols()), DVector::zeros(l.bias.len())))
        .collect();
    let mut norm_velocity: Vec<(DVector<f64>, DVector<f64>)> = estimator
        .norms
        .iter()
        .map(|n| (DVector::zeros(n.gamma.len()), DVector::zeros(n.beta.len())))
        .collect();

    let mut order: Vec<usize> = (0..n_train).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut lr = cfg.learning_rate;
    for epoch in 0..cfg.epochs {
        // Deterministic shuffle.
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(cfg.batch_size) {
            let x = x_train.select_columns(chunk.iter());
            let y = y_train.select_columns(chunk.iter());
            let (loss, grads) = estimator.loss_and_gradients(&x, &y);
            if !loss.is_finite() {
                return Err(MlpError::Diverged { epoch, loss });
            }
            for (stage, (dw, db)) in grads.linear.iter().enumerate() {
                let v = &mut velocity[stage];
                v.0 = cfg.momentum * &v.0 - lr * dw;
                v.1 = cfg.momentum * &v.1 - lr * db;
                estimator.linear[stage].weight += &v.0;
                estimator.linear[stage].bias += &v.1;
            }
            for (stage, (dg, dbeta)) in grads.norms.iter().enumerate() {
                let v = &mut norm_velocity[stage];
                v.0 = cfg.momentum * &v.0 - lr * dg;
                v.1 = cfg.momentum * &v.1 - lr * dbeta;
                estimator.norms[stage].gamma += &v.0;
                estimator.norms[stage].beta += &v.1;
            }
        }
        // Full-split loss after the epoch's updates.
        let (train_loss, _) = estimator.loss_and_gradients(&x_train, &y_train);
        if !train_loss.is_finite() {
            return Err(MlpError::Diverged { epoch, loss: train_loss });
        }
        epoch_losses.push(train_loss);
        lr *= cfg.lr_decay;
    }

    // Held-out evaluation in physical units.
    let mut mae = [0.0; 3];
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for &idx in &split.test {
        let predicted = estimator.estimate_force(&samples[idx].taxels);
        for k in 0..3 {
            let truth = samples[idx].force[k];
            mae[k] += (predicted[k] - truth).abs();
            min[k] = min[k].min(truth);
            max[k] = max[k].max(truth);
        }
    }
    let n_test = split.test.len() as f64;
    let mut range = [0.0; 3];
    let mut nmae = 0.0;
    for k in 0..3 {
        mae[k] /= n_test;
        range[k] = (max[k] - min[k]).max(1e-9);
        nmae += mae[k] / range[k];
    }
    nmae /= 3.0;

    Ok((
        estimator,
        TrainReport {
            nmae,
            per_component_mae: mae,
            per_component_range: range,
            epoch_losses,
            train_count: split.train.len(),
            test_count: split.test.len(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::dataset::{generate_dataset, split_by_contact_point, DatasetConfig};
    use crate::sensing::taxel::SensorModel;

    fn tiny_dataset(sensor: u32) -> Vec<ForceSample> {
        let cfg = DatasetConfig {
            trajectories_per_point: 3,
            steps_per_trajectory: 10,
            ..DatasetConfig::default()
        };
        let mut model = SensorModel::generate(sensor, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        model.subtract_offset(500, &mut rng);
        generate_dataset(&mut model, &cfg, 42)
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn gradients_match_finite_differences() {
        // Every parameter of every layer against central differences on a
        // 10-sample batch.
        let samples = tiny_dataset(0);
        let x = DMatrix::from_fn(READING_DIM, 10, |r, c| samples[c * 7].taxels.values[r] / 50.0);
        let y = DMatrix::from_fn(OUTPUT_DIM, 10, |r, c| samples[c * 7].force[r] / 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut estimator = MlpEstimator::init(&mut rng);
        let (_, grads) = estimator.loss_and_gradients(&x, &y);
        let flat_grads = MlpEstimator::flatten_gradients(&grads);

        let h = 1e-6;
        let n_tensors = flat_grads.len();
        for tensor in 0..n_tensors {
            let len = flat_grads[tensor].len();
            for p in 0..len {
                let original = estimator.params_mut()[tensor][p];
                estimator.params_mut()[tensor][p] = original + h;
                let (lp, _) = estimator.loss_and_gradients(&x, &y);
                estimator.params_mut()[tensor][p] = original - h;
                let (lm, _) = estimator.loss_and_gradients(&x, &y);
                estimator.params_mut()[tensor][p] = original;
                let numeric = (lp - lm) / (2.0 * h);
                let analytic = flat_grads[tensor][p];
                let scale = analytic.abs().max(numeric.abs()).max(1e-4);
                assert!(
                    (analytic - numeric).abs() / scale < 1e-5,
                    "tensor {tensor} param {p}: analytic {analytic} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn training_fits_synthetic_sensor() {
        let samples = tiny_dataset(1);
        let split = split_by_contact_point(&samples, 0.2, 5);
        let cfg = TrainConfig { epochs: 12, ..TrainConfig::default() };
        let (estimator, report) = train_estimator(&samples, &split, &cfg, 9).unwrap();
        assert!(report.nmae < 0.10, "nMAE {} too high", report.nmae);
        // Loss non-increasing across epochs.
        for w in report.epoch_losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "loss increased: {:?}", report.epoch_losses);
        }
        // Round trip through the weight files is exact at f32 precision.
        let dir = tempfile::tempdir().unwrap();
        estimator.save(dir.path(), "sensor_1").unwrap();
        let loaded = MlpEstimator::load(dir.path(), "sensor_1").unwrap();
        let probe = &samples[3].taxels;
        let a = estimator.estimate_force(probe);
        let b = loaded.estimate_force(probe);
        assert!((a - b).norm() < 1e-4, "round-trip drift {}", (a - b).norm());
        // Saved files are byte-identical across a retrain with the same seed.
        let (estimator2, _) = train_estimator(&samples, &split, &cfg, 9).unwrap();
        estimator2.save(dir.path(), "again").unwrap();
        let bytes_a = std::fs::read(dir.path().join("sensor_1.bin")).unwrap();
        let bytes_b = std::fs::read(dir.path().join("again.bin")).unwrap();
        assert_eq!(bytes_a, bytes_b);
    }

    #[test]
    fn zero_reading_maps_to_finite_output() {
        let samples = tiny_dataset(2);
        let split = split_by_contact_point(&samples, 0.2, 5);
        let cfg = TrainConfig { epochs: 4, ..TrainConfig::default() };
        let (estimator, _) = train_estimator(&samples, &split, &cfg, 11).unwrap();
        let reading = TaxelReading { values: [0.0; READING_DIM], sensor_id: 2 };
        let out = estimator.estimate_force(&reading);
        assert!(out.iter().all(|v| v.is_finite()));
        let batch = estimator.estimate_batch(&[reading.clone(), reading.clone()]);
        assert_eq!(batch.len(), 2);
        assert_eq!(batch[0], batch[1]);
    }

    #[test]
    fn empty_split_rejected() {
        let samples = tiny_dataset(3);
        let split = TrainTestSplit { train: (0..samples.len()).collect(), test: Vec::new() };
        assert!(matches!(
            train_estimator(&samples, &split, &TrainConfig::default(), 1),
            Err(MlpError::EmptySplit { .. })
        ));
    }
}
