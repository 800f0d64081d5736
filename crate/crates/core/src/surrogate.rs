//! Regression network approximating the optimal aim point.
//!
//! Inputs are `[sigma_a, alpha, beta, x]` when `sigma_p` is fixed, or
//! `[sigma_a, sigma_p, alpha, beta, x]` otherwise, min-max scaled to [0, 1] with
//! the declared feature ranges. The output is the aim mode in task units.

use std::fmt;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aim::AimProvider;
use crate::error::{domain, ensure_positive, Error, Result};
use crate::optimizer::{optimal_aim, QuadratureSpec, SubjectParams};

pub const FORMAT_VERSION: u32 = 1;
pub const MIN_OUTPUT: f64 = 1e-6;
/// Training rows whose features hit a boundary optimum are resampled; more
/// than this fraction of rejections aborts generation.
pub const MAX_REJECT_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu(slope) => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative given the pre-activation `z` and the activation `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::LeakyRelu(slope) => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }

    pub fn tag(self) -> String {
        match self {
            Activation::LeakyRelu(s) => format!("leaky_relu({s})"),
            Activation::Relu => "relu".into(),
            Activation::Sigmoid => "sigmoid".into(),
            Activation::Identity => "identity".into(),
        }
    }

    pub fn parse(tag: &str) -> Result<Self> {
        match tag {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            t if t.starts_with("leaky_relu(") && t.ends_with(')') => t["leaky_relu(".len()..t.len() - 1]
                .parse::<f64>()
                .map(Activation::LeakyRelu)
                .map_err(|_| Error::Weights(format!("bad leaky_relu slope in {t:?}"))),
            t => Err(Error::Weights(format!("unknown activation {t:?}"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

/// Layer widths and activations after the input layer.
pub fn architecture(input_dim: usize) -> [(usize, Activation); 5] {
    [
        (16, Activation::LeakyRelu(0.1)),
        (64, Activation::LeakyRelu(0.05)),
        (16, Activation::Relu),
        (input_dim, Activation::Sigmoid),
        (1, Activation::Identity),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    fn new(name: &str, min: f64, max: f64) -> Self {
        Self { name: name.into(), min, max }
    }
}

/// Input layout of a network: feature ranges plus the fixed `sigma_p`, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub ranges: Vec<FeatureRange>,
    pub fixed_sigma_p: Option<f64>,
}

impl FeatureSpace {
    /// Four inputs with `sigma_p` held at `sigma_p`.
    pub fn four(sigma_p: f64) -> Self {
        Self {
            ranges: vec![
                FeatureRange::new("sigma_a", 0.01, 1.0),
                FeatureRange::new("alpha", 0.01, 4.0),
                FeatureRange::new("beta", 0.5, 0.99),
                FeatureRange::new("x", 0.2, 5.0),
            ],
            fixed_sigma_p: Some(sigma_p),
        }
    }

    pub fn five() -> Self {
        Self {
            ranges: vec![
                FeatureRange::new("sigma_a", 0.01, 1.0),
                FeatureRange::new("sigma_p", 0.005, 1.0),
                FeatureRange::new("alpha", 0.01, 8.0),
                FeatureRange::new("beta", 0.5, 0.99),
                FeatureRange::new("x", 0.2, 5.0),
            ],
            fixed_sigma_p: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn validate(&self) -> Result<()> {
        let expected: &[&str] = match self.fixed_sigma_p {
            Some(sp) => {
                ensure_positive("fixed sigma_p", sp)?;
                &["sigma_a", "alpha", "beta", "x"]
            }
            None => &["sigma_a", "sigma_p", "alpha", "beta", "x"],
        };
        if self.ranges.len() != expected.len() {
            return Err(Error::Dimension { expected: expected.len(), got: self.ranges.len() });
        }
        for (r, name) in self.ranges.iter().zip(expected) {
            if r.name != *name {
                return Err(domain(format!("feature {name:?} expected, found {:?}", r.name)));
            }
            if !(r.min < r.max) || !r.min.is_finite() || !r.max.is_finite() {
                return Err(domain(format!("range for {name} must satisfy min < max, got [{}, {}]", r.min, r.max)));
            }
            let upper = if *name == "beta" { 1.0 } else { f64::INFINITY };
            if !(r.min > 0.0) || !(r.max < upper) {
                return Err(domain(format!("range for {name} leaves the valid domain: [{}, {}]", r.min, r.max)));
            }
        }
        Ok(())
    }

    /// Parameters and target encoded by a feature row.
    pub fn decode(&self, f: &[f64]) -> Result<(SubjectParams, f64)> {
        if f.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: f.len() });
        }
        let (sigma_a, sigma_p, rest) = match self.fixed_sigma_p {
            Some(sp) => (f[0], sp, &f[1..]),
            None => (f[0], f[1], &f[2..]),
        };
        let theta = SubjectParams::new(rest[0], rest[1], sigma_p, sigma_a)?
            .with_fixed_sigma_p(self.fixed_sigma_p.is_some());
        Ok((theta, rest[2]))
    }

    pub fn encode(&self, theta: &SubjectParams, x: f64) -> Result<Vec<f64>> {
        match self.fixed_sigma_p {
            Some(sp) => {
                if (theta.sigma_p - sp).abs() > 1e-12 * sp.max(1.0) {
                    return Err(domain(format!(
                        "network was trained for sigma_p = {sp}, parameters carry sigma_p = {}",
                        theta.sigma_p
                    )));
                }
                Ok(vec![theta.sigma_a, theta.alpha, theta.beta, x])
            }
            None => Ok(vec![theta.sigma_a, theta.sigma_p, theta.alpha, theta.beta, x]),
        }
    }
}

/// Oracle-labeled training rows.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub space: FeatureSpace,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    /// Feature draws discarded because the optimum ran to a boundary.
    pub rejected: usize,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Uniform feature draws labeled with [`optimal_aim`]. Row `i` draws from its
/// own stream of the seeded generator, so the set does not depend on thread
/// scheduling.
pub fn generate_training_set(n: usize, space: &FeatureSpace, quad: &QuadratureSpec, seed: u64) -> Result<TrainingSet> {
    if n == 0 {
        return Err(domain("training set size must be at least 1"));
    }
    space.validate()?;
    quad.validate()?;
    const MAX_ATTEMPTS: usize = 1000;

    let rows: Vec<(Vec<f64>, f64, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            for attempt in 0..MAX_ATTEMPTS {
                let f: Vec<f64> = space.ranges.iter().map(|r| rng.random_range(r.min..=r.max)).collect();
                let (theta, x) = space.decode(&f)?;
                match optimal_aim(x, &theta, quad) {
                    Ok(y) => return Ok((f, y, attempt)),
                    Err(e) if e.is_boundary() => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(domain(format!("row {i}: {MAX_ATTEMPTS} consecutive boundary optima")))
        })
        .collect::<Result<_>>()?;

    let rejected: usize = rows.iter().map(|r| r.2).sum();
    let fraction = rejected as f64 / (rejected + n) as f64;
    if fraction > MAX_REJECT_FRACTION {
        return Err(domain(format!(
            "{rejected} of {} feature draws ({:.1}%) had boundary optima; check the feature ranges",
            rejected + n,
            100.0 * fraction
        )));
    }
    let (features, labels) = rows.into_iter().map(|(f, y, _)| (f, y)).unzip();
    Ok(TrainingSet { space: space.clone(), features, labels, rejected })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Shape (outputs, inputs).
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateNet {
    pub space: FeatureSpace,
    pub layers: Vec<Layer>,
}

/// Gradients of the mean squared error, one (weights, bias) pair per layer.
pub type Gradients = Vec<(Array2<f64>, Array1<f64>)>;

impl SurrogateNet {
    /// Fan-in scaled uniform initialization.
    pub fn new(space: FeatureSpace, seed: u64) -> Result<Self> {
        space.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fan_in = space.dim();
        let layers = architecture(space.dim())
            .iter()
            .map(|&(width, activation)| {
                let limit = (6.0 / fan_in as f64).sqrt();
                let weights = Array2::from_shape_fn((width, fan_in), |_| rng.random_range(-limit..limit));
                fan_in = width;
                Layer { weights, bias: Array1::zeros(width), activation }
            })
            .collect();
        Ok(Self { space, layers })
    }

    /// All weights and biases zero.
    pub fn zeroed(space: FeatureSpace) -> Result<Self> {
        let mut net = Self::new(space, 0)?;
        for layer in &mut net.layers {
            layer.weights.fill(0.0);
            layer.bias.fill(0.0);
        }
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.space.dim()
    }

    /// Checks widths, activations and weight shapes against [`architecture`].
    pub fn audit(&self) -> Result<()> {
        self.space.validate()?;
        let arch = architecture(self.input_dim());
        if self.layers.len() != arch.len() {
            return Err(Error::Weights(format!("expected {} layers, found {}", arch.len(), self.layers.len())));
        }
        let mut fan_in = self.input_dim();
        for (i, (layer, &(width, act))) in self.layers.iter().zip(&arch).enumerate() {
            if layer.weights.dim() != (width, fan_in) {
                return Err(Error::Weights(format!(
                    "layer {i}: weight shape {:?}, expected ({width}, {fan_in})",
                    layer.weights.dim()
                )));
            }
            if layer.bias.len() != width {
                return Err(Error::Weights(format!("layer {i}: bias length {}, expected {width}", layer.bias.len())));
            }
            if layer.activation != act {
                return Err(Error::Weights(format!("layer {i}: activation {}, expected {act}", layer.activation)));
            }
            fan_in = width;
        }
        Ok(())
    }

    pub(crate) fn scale_into(&self, features: &[f64], out: &mut [f64]) {
        for ((o, &v), r) in out.iter_mut().zip(features).zip(&self.space.ranges) {
            *o = (v - r.min) / (r.max - r.min);
        }
    }

    pub fn scale_rows(&self, rows: &[Vec<f64>]) -> Result<Array2<f64>> {
        let d = self.input_dim();
        let mut x = Array2::zeros((rows.len(), d));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Dimension { expected: d, got: row.len() });
            }
            self.scale_into(row, x.row_mut(i).as_slice_mut().expect("standard layout"));
        }
        Ok(x)
    }

    /// Raw network outputs for already-scaled inputs.
    pub fn forward_scaled(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        let mut a = x.to_owned();
        for layer in &self.layers {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.bias;
            let act = layer.activation;
            z.mapv_inplace(|v| act.apply(v));
            a = z;
        }
        a.index_axis_move(Axis(1), 0)
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        Ok(self.predict_batch(std::slice::from_ref(&features.to_vec()))?[0])
    }

    pub fn predict_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let x = self.scale_rows(rows)?;
        Ok(self.forward_scaled(x.view()).iter().map(|&y| y.max(MIN_OUTPUT)).collect())
    }

    /// Mean squared error and its gradients for scaled inputs `x` and labels `y`.
    pub fn loss_and_gradients(&self, x: ArrayView2<'_, f64>, y: &[f64]) -> (f64, Gradients) {
        let n = x.nrows();
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len() + 1);
        post.push(x.to_owned());
        for layer in &self.layers {
            let mut z = post.last().expect("input").dot(&layer.weights.t());
            z += &layer.bias;
            let act = layer.activation;
            let a = z.mapv(|v| act.apply(v));
            pre.push(z);
            post.push(a);
        }
        let out = post.last().expect("output");
        let mut loss = 0.0;
        let mut delta = Array2::zeros((n, 1));
        for i in 0..n {
            let r = out[[i, 0]] - y[i];
            loss += r * r;
            delta[[i, 0]] = 2.0 * r / n as f64;
        }
        loss /= n as f64;

        let mut grads = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let act = layer.activation;
            ndarray::Zip::from(&mut delta)
                .and(&pre[l])
                .and(&post[l + 1])
                .for_each(|d, &z, &a| *d *= act.derivative(z, a));
            let gw = delta.t().dot(&post[l]);
            let gb = delta.sum_axis(Axis(0));
            if l > 0 {
                delta = delta.dot(&layer.weights);
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        (loss, grads)
    }

    /// All parameters, layer by layer, weights (row-major) before biases.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, p: &[f64]) -> Result<()> {
        let total: usize = self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum();
        if p.len() != total {
            return Err(Error::Dimension { expected: total, got: p.len() });
        }
        let mut it = p.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|w| *w = it.next().expect("length checked"));
        }
        Ok(())
    }

    pub fn to_file(&self) -> WeightFile {
        WeightFile {
            format_version: FORMAT_VERSION,
            input_dim: self.input_dim(),
            fixed_sigma_p: self.space.fixed_sigma_p,
            ranges: self.space.ranges.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerRecord {
                    rows: l.weights.nrows(),
                    cols: l.weights.ncols(),
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                    activation: l.activation.tag(),
                })
                .collect(),
        }
    }

    pub fn from_file(file: WeightFile) -> Result<Self> {
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Version { found: file.format_version, expected: FORMAT_VERSION });
        }
        if file.ranges.len() != file.input_dim {
            return Err(Error::Weights(format!(
                "input_dim {} but {} feature ranges",
                file.input_dim,
                file.ranges.len()
            )));
        }
        let space = FeatureSpace { ranges: file.ranges, fixed_sigma_p: file.fixed_sigma_p };
        let layers = file
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, rec)| {
                if rec.weights.len() != rec.rows * rec.cols {
                    return Err(Error::Weights(format!(
                        "layer {i}: {} weights stored, shape {}x{} needs {}",
                        rec.weights.len(),
                        rec.rows,
                        rec.cols,
                        rec.rows * rec.cols
                    )));
                }
                if rec.bias.len() != rec.rows {
                    return Err(Error::Weights(format!(
                        "layer {i}: {} biases stored, expected {}",
                        rec.bias.len(),
                        rec.rows
                    )));
                }
                let weights = Array2::from_shape_vec((rec.rows, rec.cols), rec.weights)
                    .map_err(|e| Error::Weights(format!("layer {i}: {e}")))?;
                Ok(Layer { weights, bias: Array1::from(rec.bias), activation: Activation::parse(&rec.activation)? })
            })
            .collect::<Result<Vec<_>>>()?;
        let net = Self { space, layers };
        net.audit()?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: WeightFile = serde_json::from_str(&text)?;
        Self::from_file(file)
    }
}

impl AimProvider for SurrogateNet {
    fn aims(&self, targets: &[f64], theta: &SubjectParams) -> Result<Vec<f64>> {
        theta.validate()?;
        let rows = targets.iter().map(|&x| self.space.encode(theta, x)).collect::<Result<Vec<_>>>()?;
        self.predict_batch(&rows)
    }

    fn describe(&self) -> String {
        match self.space.fixed_sigma_p {
            Some(sp) => format!("surrogate network (4 inputs, sigma_p = {sp})"),
            None => "surrogate network (5 inputs)".into(),
        }
    }
}

/// On-disk form of a [`SurrogateNet`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightFile {
    pub format_version: u32,
    pub input_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_sigma_p: Option<f64>,
    pub ranges: Vec<FeatureRange>,
    pub layers: Vec<LayerRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerRecord {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: String,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub val_split: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 200, val_split: 0.2, batch_size: 64, learning_rate: 1e-3, patience: 20, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// Last epoch run (1-based).
    pub stop_epoch: usize,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    pub early_stopped: bool,
    pub train_rows: usize,
    pub val_rows: usize,
    /// Mean absolute error on the held-out split.
    pub val_mae: f64,
}

struct Adam {
    lr: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self { lr, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    fn step(&mut self, net: &mut SurrogateNet, grads: &Gradients) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let mut k = 0;
        for (layer, (gw, gb)) in net.layers.iter_mut().zip(grads) {
            for (w, &g) in layer.weights.iter_mut().chain(layer.bias.iter_mut()).zip(gw.iter().chain(gb.iter())) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = Self::B1 * *m + (1.0 - Self::B1) * g;
                *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
                *w -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
                k += 1;
            }
        }
    }
}

/// Mini-batch Adam on mean squared error with early stopping on the
/// validation loss; the best-validation weights are returned.
pub fn train(data: &TrainingSet, cfg: &TrainConfig) -> Result<(SurrogateNet, TrainReport)> {
    if data.is_empty() {
        return Err(domain("training set is empty"));
    }
    if !(cfg.val_split > 0.0 && cfg.val_split <= 0.5) {
        return Err(domain(format!("val_split must lie in (0, 0.5], got {}", cfg.val_split)));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(domain("epochs and batch size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = SurrogateNet::new(data.space.clone(), rng.random())?;

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((data.len() as f64 * cfg.val_split).round() as usize).clamp(1, data.len());
    let (val_idx, train_idx) = if data.len() > 1 { order.split_at(n_val) } else { (&order[..], &order[..]) };
    let train_idx = train_idx.to_vec();

    let x_all = net.scale_rows(&data.features)?;
    let x_val = x_all.select(Axis(0), val_idx);
    let y_val: Vec<f64> = val_idx.iter().map(|&i| data.labels[i]).collect();

    // start the output at the label mean
    let mean = train_idx.iter().map(|&i| data.labels[i]).sum::<f64>() / train_idx.len() as f64;
    net.layers.last_mut().expect("output layer").bias[0] = mean;

    let mut adam = Adam::new(net.parameters().len(), cfg.learning_rate);
    let mut best = (f64::INFINITY, net.clone(), 0usize);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut since_best = 0;
    let mut shuffled = train_idx.clone();
    let mut early_stopped = false;

    for epoch in 1..=cfg.epochs {
        shuffled.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in shuffled.chunks(cfg.batch_size) {
            let xb = x_all.select(Axis(0), batch);
            let yb: Vec<f64> = batch.iter().map(|&i| data.labels[i]).collect();
            let (loss, grads) = net.loss_and_gradients(xb.view(), &yb);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("non-finite batch loss {loss} after {} updates", adam.t),
                });
            }
            sum += loss * batch.len() as f64;
            adam.step(&mut net, &grads);
        }
        let train_loss = sum / shuffled.len() as f64;
        let pred = net.forward_scaled(x_val.view());
        let val_loss = pred.iter().zip(&y_val).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / y_val.len() as f64;
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch, detail: format!("validation loss {val_loss}") });
        }
        history.push(EpochRecord { epoch, train_loss, val_loss });
        if val_loss < best.0 {
            best = (val_loss, net.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                early_stopped = true;
                break;
            }
        }
    }

    let (_, net, best_epoch) = best;
    let pred = net.forward_scaled(x_val.view());
    let val_mae = pred.iter().zip(&y_val).map(|(p, y)| (p.max(MIN_OUTPUT) - y).abs()).sum::<f64>() / y_val.len() as f64;
    let report = TrainReport {
        stop_epoch: history.len(),
        history,
        best_epoch,
        early_stopped,
        train_rows: train_idx.len(),
        val_rows: val_idx.len(),
        val_mae,
    };
    Ok((net, report))
}

/// Absolute errors of a network against oracle labels.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub predictions: Vec<f64>,
    pub abs_errors: Vec<f64>,
    pub mae: f64,
    pub p95_abs_error: f64,
}

pub fn evaluate(net: &SurrogateNet, data: &TrainingSet) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(domain("evaluation set is empty"));
    }
    let predictions = net.predict_batch(&data.features)?;
    let abs_errors: Vec<f64> = predictions.iter().zip(&data.labels).map(|(p, y)| (p - y).abs()).collect();
    let mae = abs_errors.iter().sum::<f64>() / abs_errors.len() as f64;
    let p95_abs_error = crate::stats::quantile(&abs_errors, 0.95)?;
    Ok(EvalReport { predictions, abs_errors, mae, p95_abs_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::closed_form_quadratic;

    fn small_space() -> FeatureSpace {
        FeatureSpace::four(0.05)
    }

    #[test]
    fn architecture_matches_layer_spec() {
        for space in [FeatureSpace::four(0.2), FeatureSpace::five()] {
            let d = space.dim();
            let net = SurrogateNet::new(space, 3).unwrap();
            net.audit().unwrap();
            let widths: Vec<usize> = net.layers.iter().map(|l| l.weights.nrows()).collect();
            assert_eq!(widths, vec![16, 64, 16, d, 1]);
            let tags: Vec<String> = net.layers.iter().map(|l| l.activation.tag()).collect();
            assert_eq!(tags, ["leaky_relu(0.1)", "leaky_relu(0.05)", "relu", "sigmoid", "identity"]);
            assert_eq!(net.layers[0].weights.ncols(), d);
        }
    }

    #[test]
    fn activation_tags_round_trip() {
        for a in [Activation::LeakyRelu(0.1), Activation::LeakyRelu(0.05), Activation::Relu, Activation::Sigmoid, Activation::Identity] {
            assert_eq!(Activation::parse(&a.tag()).unwrap(), a);
        }
        assert!(Activation::parse("tanh").is_err());
    }

    #[test]
    fn zero_net_outputs_bias() {
        let mut net = SurrogateNet::zeroed(small_space()).unwrap();
        net.layers[4].bias[0] = 1.25;
        for f in [[0.1, 1.0, 0.9, 2.0], [0.9, 3.0, 0.5, 0.3]] {
            assert_eq!(net.predict(&f).unwrap(), 1.25);
        }
        net.layers[4].bias[0] = -3.0;
        assert_eq!(net.predict(&[0.1, 1.0, 0.9, 2.0]).unwrap(), MIN_OUTPUT);
    }

    #[test]
    fn batch_equals_single_predictions() {
        let net = SurrogateNet::new(FeatureSpace::five(), 11).unwrap();
        let rows: Vec<Vec<f64>> = (0..7).map(|i| vec![0.1 + 0.1 * i as f64, 0.2, 1.0 + i as f64, 0.8, 2.5]).collect();
        let batch = net.predict_batch(&rows).unwrap();
        for (row, b) in rows.iter().zip(&batch) {
            assert_eq!(net.predict(row).unwrap(), *b);
        }
        assert!(matches!(net.predict(&[1.0, 2.0]), Err(Error::Dimension { expected: 5, got: 2 })));
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut net = SurrogateNet::new(FeatureSpace::five(), 5).unwrap();
        // move biases off zero so every unit is active somewhere
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for l in &mut net.layers {
            l.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|_| FeatureSpace::five().ranges.iter().map(|r| rng.random_range(r.min..r.max)).collect())
            .collect();
        let y: Vec<f64> = (0..10).map(|_| rng.random_range(0.2..5.0)).collect();
        let x = net.scale_rows(&rows).unwrap();
        let (_, grads) = net.loss_and_gradients(x.view(), &y);
        let analytic: Vec<f64> = grads.iter().flat_map(|(w, b)| w.iter().chain(b.iter()).copied()).collect();
        let params = net.parameters();
        let h = 1e-6;
        let mut probe = net.clone();
        let mut worst: f64 = 0.0;
        for k in 0..params.len() {
            let mut p = params.clone();
            p[k] += h;
            probe.set_parameters(&p).unwrap();
            let up = probe.loss_and_gradients(x.view(), &y).0;
            p[k] -= 2.0 * h;
            probe.set_parameters(&p).unwrap();
            let down = probe.loss_and_gradients(x.view(), &y).0;
            let numeric = (up - down) / (2.0 * h);
            let err = (numeric - analytic[k]).abs() / analytic[k].abs().max(1e-3);
            worst = worst.max(err);
        }
        assert!(worst < 1e-4, "worst relative gradient error {worst}");
    }

    #[test]
    fn memorizes_a_single_point() {
        let space = small_space();
        let data = TrainingSet {
            space: space.clone(),
            features: vec![vec![0.3, 2.0, 0.9, 2.0]; 50],
            labels: vec![1.7; 50],
            rejected: 0,
        };
        let cfg = TrainConfig { epochs: 300, patience: 300, ..TrainConfig::default() };
        let (net, report) = train(&data, &cfg).unwrap();
        assert!((net.predict(&[0.3, 2.0, 0.9, 2.0]).unwrap() - 1.7).abs() < 1e-3);
        assert!(report.val_mae < 1e-3);
        assert_eq!(report.train_rows + report.val_rows, 50);
    }

    #[test]
    fn train_validates_inputs() {
        let data = TrainingSet { space: small_space(), features: vec![], labels: vec![], rejected: 0 };
        assert!(train(&data, &TrainConfig::default()).is_err());
        let data = TrainingSet { space: small_space(), features: vec![vec![0.3, 2.0, 0.9, 2.0]], labels: vec![1.0], rejected: 0 };
        assert!(train(&data, &TrainConfig { val_split: 0.7, ..TrainConfig::default() }).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let data = TrainingSet {
            space: small_space(),
            features: (0..40).map(|i| vec![0.3, 2.0, 0.9, 0.2 + 0.1 * i as f64]).collect(),
            labels: (0..40).map(|i| if i % 2 == 0 { 1e200 } else { -1e200 }).collect(),
            rejected: 0,
        };
        let err = train(&data, &TrainConfig { epochs: 5, ..TrainConfig::default() }).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn training_labels_are_oracle_solves() {
        let quad = QuadratureSpec::default();
        let space = small_space();
        let data = generate_training_set(100, &space, &quad, 42).unwrap();
        assert_eq!(data.len(), 100);
        for (f, &y) in data.features.iter().zip(&data.labels) {
            for (v, r) in f.iter().zip(&space.ranges) {
                assert!(*v >= r.min && *v <= r.max);
            }
            let (theta, x) = space.decode(f).unwrap();
            assert_eq!(optimal_aim(x, &theta, &quad).unwrap(), y);
        }
        let again = generate_training_set(100, &space, &quad, 42).unwrap();
        assert_eq!(again.features, data.features);
        assert_eq!(again.labels, data.labels);
    }

    #[test]
    fn single_row_matches_closed_form() {
        let space = FeatureSpace {
            ranges: vec![
                FeatureRange::new("sigma_a", 0.3, 0.3 + 1e-12),
                FeatureRange::new("alpha", 2.0, 2.0 + 1e-12),
                FeatureRange::new("beta", 0.99, 0.99 + 1e-12),
                FeatureRange::new("x", 1.0, 1.0 + 1e-12),
            ],
            fixed_sigma_p: Some(1e-4),
        };
        let data = generate_training_set(1, &space, &QuadratureSpec::default(), 1).unwrap();
        let expected = closed_form_quadratic(1.0, 0.99, 1e-4, 0.3).unwrap();
        assert!((data.labels[0] / expected - 1.0).abs() < 1e-4);
    }

    #[test]
    fn excessive_boundary_rejection_is_reported() {
        let space = FeatureSpace {
            ranges: vec![
                FeatureRange::new("sigma_a", 0.6, 1.0),
                FeatureRange::new("alpha", 0.01, 0.05),
                FeatureRange::new("beta", 0.5, 0.55),
                FeatureRange::new("x", 0.2, 0.3),
            ],
            fixed_sigma_p: Some(0.3),
        };
        let err = generate_training_set(20, &space, &QuadratureSpec::default(), 1).unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "{err}");
    }

    #[test]
    fn weight_file_errors() {
        let net = SurrogateNet::new(small_space(), 2).unwrap();
        let mut file = net.to_file();
        file.format_version = 99;
        assert!(matches!(SurrogateNet::from_file(file), Err(Error::Version { found: 99, .. })));

        let mut file = net.to_file();
        file.layers[2].weights.truncate(100);
        let err = SurrogateNet::from_file(file).unwrap_err().to_string();
        assert!(err.contains("layer 2"), "{err}");

        let mut file = net.to_file();
        file.layers[1].activation = "relu".into();
        assert!(SurrogateNet::from_file(file).is_err());
    }

    #[test]
    fn encode_rejects_mismatched_sigma_p() {
        let space = FeatureSpace::four(0.05);
        let theta = SubjectParams::new(1.0, 0.9, 0.2, 0.3).unwrap();
        assert!(space.encode(&theta, 1.0).is_err());
        let theta = SubjectParams::new(1.0, 0.9, 0.05, 0.3).unwrap();
        assert_eq!(space.encode(&theta, 1.5).unwrap(), vec![0.3, 1.0, 0.9, 1.5]);
    }
}
