//! Fully connected noise predictor `z_θ(x)` with hand-written
//! backpropagation, Adam, and the noise-prediction training loop.
//!
//! The network never receives the timestep. Hidden layers use SiLU,
//! `a(u) = u · sigmoid(u)`; the output layer is linear.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::SampleBatch;
use crate::diffusion::{forward_on_axis, forward_plain, project_out, NoisePredictor, OrthoTimeConfig};
use crate::error::{Error, Result};
use crate::geometry::AmbientConfig;
use crate::rng;
use crate::schedule::ScheduleSpec;

pub const DEFAULT_HIDDEN: [usize; 3] = [256, 256, 256];

/// Stream of the training seed reserved for minibatch noise and shuffling;
/// stream 0 initialises weights.
const TRAIN_STREAM: u64 = 1;

/// Affine map `x W + b` with `W` stored `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn zeros_like(&self) -> Self {
        Layer::zeros(self.weight.nrows(), self.weight.ncols())
    }

    fn slices(&self) -> [&[f64]; 2] {
        [
            self.weight.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
        ]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 2] {
        [
            self.weight.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ]
    }
}

fn silu(u: f64) -> f64 {
    u / (1.0 + (-u).exp())
}

fn silu_grad(u: f64) -> f64 {
    let s = 1.0 / (1.0 + (-u).exp());
    s + u * s * (1.0 - s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserModel {
    layers: Vec<Layer>,
}

/// Parameter-shaped gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.slices().into_iter().flatten())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl DenoiserModel {
    /// Gaussian fan-in initialisation, `W ~ N(0, 1/fan_in)`, zero biases.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Parameter(format!(
                "need at least two positive layer widths, got {layer_sizes:?}"
            )));
        }
        let mut g = rng::seeded(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = (1.0 / fan_in as f64).sqrt();
                let mut layer = Layer::zeros(fan_in, fan_out);
                for v in layer.weight.iter_mut() {
                    *v = std * rng::normal(&mut g);
                }
                layer
            })
            .collect();
        Ok(DenoiserModel { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Parameter("model needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weight.ncols() {
                return Err(Error::Dimension {
                    expected: l.weight.ncols(),
                    actual: l.bias.len(),
                });
            }
            if i + 1 < layers.len() && layers[i + 1].weight.nrows() != l.weight.ncols() {
                return Err(Error::Dimension {
                    expected: l.weight.ncols(),
                    actual: layers[i + 1].weight.nrows(),
                });
            }
            if l.slices().into_iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Parameter(format!("layer {i} has non-finite parameters")));
            }
        }
        let layers = layers
            .into_iter()
            .map(|l| Layer {
                weight: l.weight.as_standard_layout().into_owned(),
                bias: l.bias,
            })
            .collect();
        Ok(DenoiserModel { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Input width, hidden widths, output width.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].weight.nrows()];
        sizes.extend(self.layers.iter().map(|l| l.weight.ncols()));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.ncols()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: cols,
            });
        }
        Ok(())
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.weight) + &layer.bias;
            if i < last {
                h.mapv_inplace(silu);
            }
        }
        Ok(h)
    }

    pub fn predict_row(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let batch = x.insert_axis(Axis(0));
        Ok(self.predict(batch)?.index_axis_move(Axis(0), 0))
    }

    /// Mean over rows of `‖target − z_θ(x)‖²` and its exact gradient.
    pub fn loss_and_grad(
        &self,
        x: ArrayView2<'_, f64>,
        target: ArrayView2<'_, f64>,
    ) -> Result<(f64, Gradients)> {
        self.check_input(x.ncols())?;
        if target.dim() != (x.nrows(), self.output_dim()) {
            return Err(Error::Parameter(format!(
                "target shape {:?} does not match ({}, {})",
                target.dim(),
                x.nrows(),
                self.output_dim()
            )));
        }
        let n = x.nrows();
        if n == 0 {
            return Err(Error::Parameter("empty batch".into()));
        }
        // forward, keeping inputs and pre-activations of every layer
        let last = self.layers.len() - 1;
        let mut inputs: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        let mut pre: Vec<Array2<f64>> = Vec::with_capacity(last);
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let u = h.dot(&layer.weight) + &layer.bias;
            inputs.push(h);
            if i < last {
                h = u.mapv(silu);
                pre.push(u);
            } else {
                h = u;
            }
        }
        let residual = &h - &target;
        let loss = residual.iter().map(|r| r * r).sum::<f64>() / n as f64;

        let mut delta = residual * (2.0 / n as f64);
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let weight = inputs[i].t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            grads.push(Layer { weight, bias });
            if i > 0 {
                let mut back = delta.dot(&layer.weight.t());
                Zip::from(&mut back)
                    .and(&pre[i - 1])
                    .for_each(|d, &u| *d *= silu_grad(u));
                delta = back;
            }
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }
}

impl NoisePredictor for DenoiserModel {
    fn width(&self) -> usize {
        self.input_dim()
    }

    fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.predict(x).expect("input width checked by caller")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Parameter("learning_rate must be > 0".into()));
        }
        for (name, b) in [("adam_beta1", self.beta1), ("adam_beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Parameter(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Parameter("adam_eps must be > 0".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Layer>,
    pub v: Vec<Layer>,
    pub step: u64,
}

impl AdamState {
    pub fn new(model: &DenoiserModel) -> Self {
        AdamState {
            m: model.layers.iter().map(Layer::zeros_like).collect(),
            v: model.layers.iter().map(Layer::zeros_like).collect(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(model: &mut DenoiserModel, grad: &Gradients, state: &mut AdamState, cfg: &AdamConfig) {
    state.step += 1;
    let t = state.step as i32;
    let corr1 = 1.0 - cfg.beta1.powi(t);
    let corr2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in model
        .layers
        .iter_mut()
        .zip(&grad.layers)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for (((p, g), m), v) in p
            .slices_mut()
            .into_iter()
            .zip(g.slices())
            .zip(m.slices_mut())
            .zip(v.slices_mut())
        {
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub schedule: ScheduleSpec,
    /// `None` trains the plain variant.
    pub ortho: Option<OrthoTimeConfig>,
    pub ambient: AmbientConfig,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Select each row's time direction by its label.
    pub conditional: bool,
}

impl TrainConfig {
    pub fn new(schedule: ScheduleSpec, ambient: AmbientConfig) -> Self {
        TrainConfig {
            schedule,
            ortho: None,
            ambient,
            hidden: DEFAULT_HIDDEN.to_vec(),
            epochs: 200,
            batch_size: 2048,
            adam: AdamConfig::default(),
            seed: 0,
            conditional: false,
        }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let d = self.ambient.ambient_dim();
        let mut sizes = vec![d];
        sizes.extend(&self.hidden);
        sizes.push(d);
        sizes
    }

    pub fn validate(&self) -> Result<()> {
        if !self.schedule.kind().is_variance_preserving() {
            return Err(Error::NotTrainable(format!(
                "{} is not variance preserving",
                self.schedule.kind()
            )));
        }
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be >= 1".into()));
        }
        if let Some(o) = &self.ortho {
            if o.dim() != self.ambient.ambient_dim() {
                return Err(Error::Dimension {
                    expected: self.ambient.ambient_dim(),
                    actual: o.dim(),
                });
            }
        }
        if self.conditional && self.ortho.as_ref().map_or(0, |o| o.num_classes()) == 0 {
            return Err(Error::Parameter(
                "conditional training needs orthogonal class directions".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DenoiserModel,
    /// Mean loss per epoch.
    pub loss_history: Vec<f64>,
}

/// Builds one `(x_k, target)` training pair: plain when `axis` is `None`,
/// orthogonal otherwise (target is the projected noise).
pub fn training_pair(
    x0: ArrayView1<'_, f64>,
    k: usize,
    schedule: &ScheduleSpec,
    axis: Option<&crate::diffusion::TimeAxis<'_>>,
    z: ArrayView1<'_, f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    match axis {
        None => Ok((forward_plain(x0, k, schedule, z)?, z.to_owned())),
        Some(a) => Ok((
            forward_on_axis(x0, k, schedule, a, z)?,
            project_out(z, a.direction),
        )),
    }
}

/// Noise-prediction training with uniformly drawn steps `k ∈ {1…T}`.
pub fn train(cfg: &TrainConfig, data: &SampleBatch) -> Result<TrainOutcome> {
    train_with_progress(cfg, data, |_, _| {})
}

/// [`train`], calling `progress(epoch, mean_loss)` after every epoch.
pub fn train_with_progress<F: FnMut(usize, f64)>(
    cfg: &TrainConfig,
    data: &SampleBatch,
    mut progress: F,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let dim = cfg.ambient.ambient_dim();
    if data.dim() != dim {
        return Err(Error::Dimension {
            expected: dim,
            actual: data.dim(),
        });
    }
    if data.is_empty() {
        return Err(Error::Parameter("training data is empty".into()));
    }
    let labels = if cfg.conditional {
        let labels = data
            .labels()
            .ok_or_else(|| Error::Parameter("conditional training needs labelled data".into()))?;
        let classes = cfg.ortho.as_ref().map_or(0, |o| o.num_classes());
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Parameter(format!(
                "label {bad} has no class direction ({classes} configured)"
            )));
        }
        Some(labels)
    } else {
        None
    };
    let axes: Option<Vec<_>> = match &cfg.ortho {
        None => None,
        Some(o) => Some(
            (0..data.len())
                .map(|i| o.time_axis(labels.map(|l| l[i])))
                .collect::<Result<_>>()?,
        ),
    };

    let mut model = DenoiserModel::init(&cfg.layer_sizes(), cfg.seed)?;
    let mut state = AdamState::new(&model);
    let mut g = rng::stream(cfg.seed, TRAIN_STREAM);
    let steps = cfg.schedule.steps();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut z = Array1::zeros(dim);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut g);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut x = Array2::zeros((chunk.len(), dim));
            let mut target = Array2::zeros((chunk.len(), dim));
            for (r, &i) in chunk.iter().enumerate() {
                let k = g.random_range(1..=steps);
                rng::fill_normal(&mut g, z.as_slice_mut().unwrap());
                let axis = axes.as_ref().map(|a| &a[i]);
                let (xk, t) = training_pair(data.row(i), k, &cfg.schedule, axis, z.view())?;
                x.row_mut(r).assign(&xk);
                target.row_mut(r).assign(&t);
            }
            let (loss, grad) = model.loss_and_grad(x.view(), target.view())?;
            if !loss.is_finite() {
                return Err(Error::Divergence(epoch));
            }
            adam_step(&mut model, &grad, &mut state, &cfg.adam);
            total += loss * chunk.len() as f64;
        }
        let mean = total / data.len() as f64;
        history.push(mean);
        progress(epoch, mean);
    }
    Ok(TrainOutcome {
        model,
        loss_history: history,
    })
}
