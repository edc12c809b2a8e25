//! Neural encoder-decoder: a small dense autoencoder scored by reconstruction error.
//!
//! Parameters are stored layer-major: for each layer the weight matrix
//! (row-major, `out × in`) followed by its bias vector.

use std::borrow::Cow;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::check_dim;
use crate::data::{validate_dataset, Dataset, DetectorKind, ModelParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output.
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NedParams {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Number of consecutive samples concatenated into one input.
    pub window: usize,
    pub activation: Activation,
}

impl Default for NedParams {
    fn default() -> Self {
        Self {
            epochs: 4,
            batch: 15,
            lr: 0.03,
            window: 1,
            activation: Activation::Tanh,
        }
    }
}

impl NedParams {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 || self.window == 0 {
            return Err(Error::InvalidParameter("NED epochs, batch and window must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter("NED learning rate must be positive".into()));
        }
        Ok(())
    }

    /// Default layer sizes for `dim` raw features.
    pub fn architecture(&self, dim: usize) -> Result<NedArchitecture> {
        NedArchitecture::for_input(dim * self.window, self.activation)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NedArchitecture {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
}

impl NedArchitecture {
    /// d → max(2,⌈d/2⌉) → max(1,⌈d/4⌉) → max(2,⌈d/2⌉) → d
    pub fn for_input(d: usize, activation: Activation) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter(format!(
                "NED needs at least 2 inputs to compress, got {d}"
            )));
        }
        let h = d.div_ceil(2).max(2);
        let b = d.div_ceil(4).max(1);
        Ok(Self {
            layer_sizes: vec![d, h, b, h, d],
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn bottleneck(&self) -> usize {
        *self.layer_sizes.iter().min().unwrap_or(&0)
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NedModel {
    arch: NedArchitecture,
    window: usize,
    layers: Vec<Layer>,
    trained_on: u64,
    /// Full-data reconstruction MSE after each epoch of the last `train` call.
    pub loss_history: Vec<f64>,
}

pub fn ned_fit(data: &Dataset, params: &NedParams, rng: &mut dyn RngCore) -> Result<NedModel> {
    params.validate()?;
    validate_dataset(data)?;
    let arch = params.architecture(data.dimension())?;
    let mut model = NedModel::init(&arch, params.window, rng);
    model.train(data, params.epochs, params.batch, params.lr, rng)?;
    Ok(model)
}

impl NedModel {
    /// Xavier-uniform weights, zero biases.
    pub fn init(arch: &NedArchitecture, window: usize, rng: &mut dyn RngCore) -> Self {
        let layers = arch
            .layer_sizes
            .windows(2)
            .map(|s| {
                let (fan_in, fan_out) = (s[0], s[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let w = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                Layer {
                    fan_in,
                    fan_out,
                    w,
                    b: vec![0.0; fan_out],
                }
            })
            .collect();
        Self {
            arch: arch.clone(),
            window: window.max(1),
            layers,
            trained_on: 0,
            loss_history: Vec::new(),
        }
    }

    pub fn architecture(&self) -> &NedArchitecture {
        &self.arch
    }

    /// Length of a (possibly windowed) input vector.
    pub fn input_dim(&self) -> usize {
        self.arch.input_dim()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Applies the model's window to a dataset of raw samples.
    pub fn prepare<'a>(&self, data: &'a Dataset) -> Cow<'a, Dataset> {
        if self.window > 1 {
            Cow::Owned(data.windowed(self.window))
        } else {
            Cow::Borrowed(data)
        }
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            Activation::Identity
        } else {
            self.arch.activation
        }
    }

    /// Activations of every layer, input included.
    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (li, layer) in self.layers.iter().enumerate() {
            let act = self.activation(li);
            let input = &acts[li];
            let out = (0..layer.fan_out)
                .map(|o| {
                    let row = &layer.w[o * layer.fan_in..(o + 1) * layer.fan_in];
                    let z = row.iter().zip(input).fold(layer.b[o], |acc, (w, v)| acc + w * v);
                    act.apply(z)
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x)?;
        Ok(self.forward(x).pop().unwrap_or_default())
    }

    /// Mean squared reconstruction error of one input vector.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let y = self.reconstruct(x)?;
        Ok(y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64)
    }

    /// Mean of per-sample scores over the (already windowed) data.
    pub fn mean_loss(&self, data: &Dataset) -> Result<f64> {
        let mut total = 0.0;
        for row in data.rows() {
            total += self.score(row)?;
        }
        Ok(total / data.len() as f64)
    }

    /// Minibatch SGD on raw samples; the window is applied here.
    pub fn train(
        &mut self,
        data: &Dataset,
        epochs: usize,
        batch: usize,
        lr: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<f64>> {
        let prepared = self.prepare(data);
        let data = prepared.as_ref();
        check_dim(self.input_dim(), data.samples.first().map_or(&[][..], |s| &s.features))?;
        let batch = batch.max(1);
        let mut order: Vec<usize> = Vec::with_capacity(data.len());
        let mut grads: Vec<Layer> = self.layers.clone();
        self.loss_history.clear();
        for epoch in 0..epochs {
            order.clear();
            order.extend(0..data.len());
            order.shuffle(rng);
            for chunk in order.chunks(batch) {
                for g in grads.iter_mut() {
                    g.w.iter_mut().for_each(|v| *v = 0.0);
                    g.b.iter_mut().for_each(|v| *v = 0.0);
                }
                for &i in chunk {
                    self.accumulate(&data.samples[i].features, &mut grads);
                }
                let step = lr / chunk.len() as f64;
                for (layer, g) in self.layers.iter_mut().zip(&grads) {
                    layer.w.iter_mut().zip(&g.w).for_each(|(w, d)| *w -= step * d);
                    layer.b.iter_mut().zip(&g.b).for_each(|(b, d)| *b -= step * d);
                }
            }
            let loss = self.mean_loss(data)?;
            if !loss.is_finite() {
                return Err(Error::DivergedLoss { epoch });
            }
            self.loss_history.push(loss);
        }
        self.trained_on = data.len() as u64;
        Ok(self.loss_history.clone())
    }

    /// Backpropagates one sample's squared error into `grads`.
    fn accumulate(&self, x: &[f64], grads: &mut [Layer]) {
        let acts = self.forward(x);
        let d = x.len() as f64;
        let out = &acts[acts.len() - 1];
        let mut delta: Vec<f64> = out.iter().zip(x).map(|(y, t)| 2.0 * (y - t) / d).collect();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let act = self.activation(li);
            let output = &acts[li + 1];
            for (o, dl) in delta.iter_mut().enumerate() {
                *dl *= act.grad_from_output(output[o]);
            }
            let input = &acts[li];
            let g = &mut grads[li];
            for o in 0..layer.fan_out {
                g.b[o] += delta[o];
                let row = &mut g.w[o * layer.fan_in..(o + 1) * layer.fan_in];
                for (gw, v) in row.iter_mut().zip(input) {
                    *gw += delta[o] * v;
                }
            }
            if li > 0 {
                let mut prev = vec![0.0; layer.fan_in];
                for o in 0..layer.fan_out {
                    let row = &layer.w[o * layer.fan_in..(o + 1) * layer.fan_in];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += delta[o] * w;
                    }
                }
                delta = prev;
            }
        }
    }

    pub fn export(&self) -> ModelParams {
        let mut values = Vec::with_capacity(self.arch.param_count());
        for layer in &self.layers {
            values.extend_from_slice(&layer.w);
            values.extend_from_slice(&layer.b);
        }
        ModelParams::new(DetectorKind::Ned, values, self.trained_on)
    }

    pub fn import(arch: &NedArchitecture, window: usize, params: &ModelParams) -> Result<Self> {
        let expected = arch.param_count();
        if params.values.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: params.values.len(),
            });
        }
        let mut rest = &params.values[..];
        let layers = arch
            .layer_sizes
            .windows(2)
            .map(|s| {
                let (fan_in, fan_out) = (s[0], s[1]);
                let (w, tail) = rest.split_at(fan_in * fan_out);
                let (b, tail) = tail.split_at(fan_out);
                rest = tail;
                Layer {
                    fan_in,
                    fan_out,
                    w: w.to_vec(),
                    b: b.to_vec(),
                }
            })
            .collect();
        Ok(Self {
            arch: arch.clone(),
            window: window.max(1),
            layers,
            trained_on: params.sample_count,
            loss_history: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SeededRng, Stream};
    use rand_distr::{Distribution, Normal};

    fn rng(seed: u64) -> SeededRng {
        SeededRng::new(seed, Stream::Detector)
    }

    #[test]
    fn default_architecture_compresses() {
        let a = NedArchitecture::for_input(8, Activation::Tanh).unwrap();
        assert_eq!(a.layer_sizes, vec![8, 4, 2, 4, 8]);
        assert_eq!(a.param_count(), 9 * 4 + 5 * 2 + 3 * 4 + 5 * 8);
        let two = NedArchitecture::for_input(2, Activation::Tanh).unwrap();
        assert_eq!(two.layer_sizes, vec![2, 2, 1, 2, 2]);
        for d in 2..40 {
            let a = NedArchitecture::for_input(d, Activation::Tanh).unwrap();
            assert!(a.bottleneck() < d);
        }
        assert!(NedArchitecture::for_input(1, Activation::Tanh).is_err());
    }

    #[test]
    fn constant_data_is_memorized() {
        let data = Dataset::from_rows("c", vec![vec![0.5, -0.3, 0.2, 0.1]; 30]);
        let params = NedParams {
            epochs: 200,
            batch: 5,
            lr: 0.05,
            ..NedParams::default()
        };
        let m = ned_fit(&data, &params, &mut rng(1)).unwrap();
        assert!(*m.loss_history.last().unwrap() < 1e-3);
        assert!(m.score(&[0.5, -0.3, 0.2, 0.1]).unwrap() < 1e-3);
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let data = Dataset::from_rows(
            "d",
            (0..40).map(|i| vec![i as f64 / 10.0, -(i as f64) / 7.0, 1.0]).collect(),
        );
        let params = NedParams {
            epochs: 50,
            lr: 1e6,
            ..NedParams::default()
        };
        assert!(matches!(
            ned_fit(&data, &params, &mut rng(2)),
            Err(Error::DivergedLoss { .. })
        ));
    }

    #[test]
    fn loss_mostly_decreases() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut r = rng(3);
        let rows: Vec<Vec<f64>> = (0..400)
            .map(|_| {
                let z: f64 = normal.sample(&mut r);
                let e: Vec<f64> = (0..4).map(|_| 0.2 * normal.sample(&mut r)).collect();
                vec![z + e[0], -z + e[1], 0.5 * z + e[2], e[3]]
            })
            .collect();
        let data = Dataset::from_rows("g", rows);
        let params = NedParams {
            epochs: 30,
            batch: 15,
            lr: 0.03,
            ..NedParams::default()
        };
        let m = ned_fit(&data, &params, &mut rng(4)).unwrap();
        let drops = m.loss_history.windows(2).filter(|w| w[1] <= w[0]).count();
        assert!(drops as f64 >= 0.9 * (m.loss_history.len() - 1) as f64, "{:?}", m.loss_history);
    }

    #[test]
    fn linear_bottleneck_matches_minor_axis_variance() {
        // Rotated Gaussian with variances 4 and 0.25 on its principal axes.
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut r = rng(5);
        let (c, s) = (0.6f64, 0.8f64);
        let rows: Vec<Vec<f64>> = (0..2000)
            .map(|_| {
                let a = 2.0 * normal.sample(&mut r);
                let b = 0.5 * normal.sample(&mut r);
                vec![c * a - s * b, s * a + c * b]
            })
            .collect();
        let data = Dataset::from_rows("blob", rows);
        // Oracle: the best rank-1 linear reconstruction leaves the smallest
        // eigenvalue of the (population) covariance, averaged over 2 coords.
        let n = data.len() as f64;
        let mean: Vec<f64> = (0..2).map(|j| data.rows().map(|x| x[j]).sum::<f64>() / n).collect();
        let mut cov = [[0.0; 2]; 2];
        for x in data.rows() {
            for i in 0..2 {
                for j in 0..2 {
                    cov[i][j] += (x[i] - mean[i]) * (x[j] - mean[j]) / n;
                }
            }
        }
        let tr = cov[0][0] + cov[1][1];
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        let lambda_min = tr / 2.0 - (tr * tr / 4.0 - det).sqrt();
        let optimum = lambda_min / 2.0;

        let params = NedParams {
            epochs: 60,
            batch: 10,
            lr: 0.01,
            activation: Activation::Identity,
            ..NedParams::default()
        };
        let m = ned_fit(&data, &params, &mut rng(6)).unwrap();
        let loss = *m.loss_history.last().unwrap();
        assert!(loss >= optimum * 0.999, "loss {loss} below linear optimum {optimum}");
        assert!(loss <= optimum * 1.10, "loss {loss} vs optimum {optimum}");
    }

    #[test]
    fn outlier_scores_above_training_95th_percentile() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut r = rng(7);
        let rows: Vec<Vec<f64>> = (0..500)
            .map(|_| (0..6).map(|_| normal.sample(&mut r)).collect())
            .collect();
        let data = Dataset::from_rows("blob", rows);
        let params = NedParams {
            epochs: 20,
            ..NedParams::default()
        };
        let m = ned_fit(&data, &params, &mut rng(8)).unwrap();
        let mut scores: Vec<f64> = data.rows().map(|x| m.score(x).unwrap()).collect();
        scores.sort_by(f64::total_cmp);
        let p95 = scores[(0.95 * scores.len() as f64) as usize];
        let outlier = m.score(&[10.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(outlier > p95);
        assert_eq!(m.score(&[1.0; 6]).unwrap(), m.score(&[1.0; 6]).unwrap());
    }

    #[test]
    fn export_import_round_trip_and_split_training() {
        let data = Dataset::from_rows(
            "d",
            (0..50).map(|i| vec![(i as f64).sin(), (i as f64).cos(), 0.1 * i as f64 % 1.0]).collect(),
        );
        let params = NedParams::default();
        let arch = params.architecture(3).unwrap();
        let mut r = rng(9);
        let mut whole = NedModel::init(&arch, 1, &mut r);
        let start = whole.export();
        whole.train(&data, 6, 15, 0.03, &mut r).unwrap();

        // Training in two legs through an export/import boundary is identical.
        let mut r2 = rng(9);
        let _ = NedModel::init(&arch, 1, &mut r2);
        let mut leg = NedModel::import(&arch, 1, &start).unwrap();
        leg.train(&data, 3, 15, 0.03, &mut r2).unwrap();
        let mut leg = NedModel::import(&arch, 1, &leg.export()).unwrap();
        leg.train(&data, 3, 15, 0.03, &mut r2).unwrap();
        assert_eq!(leg.export().values, whole.export().values);

        let short = ModelParams::new(DetectorKind::Ned, vec![0.0; 3], 1);
        assert!(NedModel::import(&arch, 1, &short).is_err());
    }

    #[test]
    fn windowed_input() {
        let data = Dataset::from_rows("w", (0..20).map(|i| vec![i as f64 * 0.1, 1.0]).collect());
        let params = NedParams {
            window: 3,
            ..NedParams::default()
        };
        let m = ned_fit(&data, &params, &mut rng(10)).unwrap();
        assert_eq!(m.input_dim(), 6);
        assert!(m.score(&[0.0, 1.0]).is_err());
        assert!(m.score(&[0.0, 1.0, 0.1, 1.0, 0.2, 1.0]).is_ok());
    }
}
