//! Fully-connected network training where the hidden-layer delta products
//! run through the coded cluster, plus the uncoded wait-for-all baseline.
//!
//! Batches are column-major in the sense that a batch of `B` samples is an
//! `M_0 × B` matrix; activations and deltas of layer `l` are `M_l × B`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::cluster::{Cluster, ClusterConfig, ClusterReport, TaskFunction, TaskSpec, Timing, WaitPolicy};
use crate::codec::CodecConfig;
use crate::error::{Error, Result};
use crate::realmat::RealMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Self::Identity => v,
            Self::Relu => v.max(0.0),
            Self::Sigmoid => 1.0 / (1.0 + (-v).exp()),
        }
    }

    /// Derivative with respect to the pre-activation. Relu uses 0 at 0.
    pub fn derivative(self, v: f64) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Sigmoid => {
                let s = self.apply(v);
                s * (1.0 - s)
            }
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "identity" => Ok(Self::Identity),
            "relu" => Ok(Self::Relu),
            "sigmoid" => Ok(Self::Sigmoid),
            other => Err(Error::InvalidConfig(format!("unknown activation '{other}'"))),
        }
    }
}

/// Weights `Θ^l` (`M_l × M_{l-1}`) and biases `b^l` for `l = 1..L`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<RealMatrix>,
    pub biases: Vec<Vec<f64>>,
    pub hidden: Activation,
    pub output: Activation,
}

impl NetworkParams {
    pub fn new(weights: Vec<RealMatrix>, biases: Vec<Vec<f64>>, hidden: Activation, output: Activation) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::InvalidArgument(format!(
                "{} weight matrices and {} bias vectors",
                weights.len(),
                biases.len()
            )));
        }
        let mut layer_sizes = vec![weights[0].cols()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.cols() != *layer_sizes.last().unwrap() || b.len() != w.rows() {
                return Err(Error::InvalidArgument(format!(
                    "layer {}: weight {}x{} and bias {} do not chain",
                    l + 1,
                    w.rows(),
                    w.cols(),
                    b.len()
                )));
            }
            layer_sizes.push(w.rows());
        }
        Ok(Self { layer_sizes, weights, biases, hidden, output })
    }

    /// Glorot-uniform weights, zero biases, relu hidden layers and sigmoid output.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer sizes {layer_sizes:?}")));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let weights = layer_sizes
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                RealMatrix::from_fn(w[1], w[0], |_, _| rng.gen_range(-limit..=limit))
            })
            .collect();
        let biases = layer_sizes[1..].iter().map(|&m| vec![0.0; m]).collect();
        Self::new(weights, biases, Activation::Relu, Activation::Sigmoid)
    }

    /// Number of weight layers `L`.
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.depth() {
            self.output
        } else {
            self.hidden
        }
    }
}

/// Activations `a^0..a^L` and pre-activations `τ^1..τ^L` of a batch. Index
/// `l` of `pre` holds `τ^{l+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchPass {
    pub activations: Vec<RealMatrix>,
    pub pre: Vec<RealMatrix>,
}

impl BatchPass {
    pub fn output(&self) -> &RealMatrix {
        self.activations.last().unwrap()
    }
}

/// Single-sample forward pass: `(a^1..a^L, τ^1..τ^L)`.
pub fn forward(params: &NetworkParams, x: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let pass = forward_batch(params, &RealMatrix::column(x))?;
    Ok((
        pass.activations[1..].iter().map(|a| a.as_slice().to_vec()).collect(),
        pass.pre.iter().map(|t| t.as_slice().to_vec()).collect(),
    ))
}

pub fn forward_batch(params: &NetworkParams, x: &RealMatrix) -> Result<BatchPass> {
    if x.rows() != params.layer_sizes[0] {
        return Err(Error::InvalidArgument(format!(
            "input has {} features, network expects {}",
            x.rows(),
            params.layer_sizes[0]
        )));
    }
    let mut activations = vec![x.clone()];
    let mut pre = Vec::with_capacity(params.depth());
    for (l, (w, b)) in params.weights.iter().zip(&params.biases).enumerate() {
        let mut tau = w.matmul(activations.last().unwrap())?;
        let cols = tau.cols();
        tau = RealMatrix::from_fn(tau.rows(), cols, |i, j| tau.get(i, j) + b[i]);
        let act = params.activation(l);
        activations.push(tau.map(|v| act.apply(v)));
        pre.push(tau);
    }
    Ok(BatchPass { activations, pre })
}

/// Mean over the batch of `½‖a^L − y‖²`.
pub fn loss(params: &NetworkParams, x: &RealMatrix, y: &RealMatrix) -> Result<f64> {
    let pass = forward_batch(params, x)?;
    let diff = pass.output().sub(y)?;
    Ok(0.5 * diff.as_slice().iter().map(|v| v * v).sum::<f64>() / x.cols().max(1) as f64)
}

fn derivative_of(pre: &RealMatrix, act: Activation) -> RealMatrix {
    pre.map(|v| act.derivative(v))
}

/// `(a^L − y) ⊙ σ′(τ^L)`.
pub fn output_delta(params: &NetworkParams, pass: &BatchPass, y: &RealMatrix) -> Result<RealMatrix> {
    let l = params.depth() - 1;
    pass.output().sub(y)?.hadamard(&derivative_of(&pass.pre[l], params.output))
}

/// Serial deltas `δ^1..δ^L` (index `l` holds `δ^{l+1}`).
pub fn deltas_serial(params: &NetworkParams, pass: &BatchPass, y: &RealMatrix) -> Result<Vec<RealMatrix>> {
    let depth = params.depth();
    let mut deltas = vec![output_delta(params, pass, y)?];
    for l in (0..depth - 1).rev() {
        let next = deltas.last().unwrap();
        let back = params.weights[l + 1].transpose().matmul(next)?;
        deltas.push(back.hadamard(&derivative_of(&pass.pre[l], params.activation(l)))?);
    }
    deltas.reverse();
    Ok(deltas)
}

/// Batch-summed gradients `Σ δ^l (a^{l-1})ᵀ` and `Σ δ^l`.
pub fn gradients(pass: &BatchPass, deltas: &[RealMatrix]) -> Result<(Vec<RealMatrix>, Vec<Vec<f64>>)> {
    let mut gw = Vec::with_capacity(deltas.len());
    let mut gb = Vec::with_capacity(deltas.len());
    for (l, d) in deltas.iter().enumerate() {
        gw.push(d.matmul(&pass.activations[l].transpose())?);
        gb.push((0..d.rows()).map(|i| d.row(i).iter().sum()).collect());
    }
    Ok((gw, gb))
}

/// How a training step computes the hidden-layer delta products.
pub enum DeltaEngine<'a> {
    /// Local computation, no cluster.
    Serial,
    /// Coded cluster job per hidden layer.
    Coded {
        cluster: &'a Cluster,
        codec: CodecConfig,
        wait_policy: WaitPolicy,
        mask_scale: f64,
    },
    /// Uncoded job split over all workers, waiting for every one.
    Uncoded { cluster: &'a Cluster },
}

/// `(Θ)ᵀ δ_next ⊙ σ′(τ)` with the product computed by a coded job: the rows
/// of `Θᵀ` are split into `K` blocks (zero-padding the last), each worker
/// multiplies its encoded block by the broadcast `δ_next`, and the decoded
/// blocks are stacked and truncated before the master applies `σ′(τ)`.
pub fn backprop_delta_coded(
    theta: &RealMatrix,
    delta_next: &RealMatrix,
    tau: &RealMatrix,
    activation: Activation,
    cluster: &Cluster,
    codec: &CodecConfig,
    wait_policy: WaitPolicy,
    mask_scale: f64,
    seed: u64,
) -> Result<(RealMatrix, ClusterReport)> {
    check_delta_shapes(theta, delta_next, tau)?;
    let spec = TaskSpec {
        function: TaskFunction::BackpropDelta { delta_next: delta_next.clone() },
        input: theta.transpose(),
        codec: codec.clone(),
        wait_policy,
        mask_scale,
    };
    let (blocks, report) = cluster.run_job(&spec, seed)?;
    let product = RealMatrix::vstack(&blocks)?.truncate_rows(theta.cols())?;
    Ok((product.hadamard(&derivative_of(tau, activation))?, report))
}

/// Same product through the uncoded baseline.
pub fn backprop_delta_uncoded(
    theta: &RealMatrix,
    delta_next: &RealMatrix,
    tau: &RealMatrix,
    activation: Activation,
    cluster: &Cluster,
    seed: u64,
) -> Result<(RealMatrix, ClusterReport)> {
    check_delta_shapes(theta, delta_next, tau)?;
    let f = TaskFunction::BackpropDelta { delta_next: delta_next.clone() };
    let (blocks, report) = cluster.run_uncoded_job(&f, &theta.transpose(), seed)?;
    let product = RealMatrix::vstack(&blocks)?.truncate_rows(theta.cols())?;
    Ok((product.hadamard(&derivative_of(tau, activation))?, report))
}

fn check_delta_shapes(theta: &RealMatrix, delta_next: &RealMatrix, tau: &RealMatrix) -> Result<()> {
    if delta_next.rows() != theta.rows() || tau.rows() != theta.cols() || tau.cols() != delta_next.cols() {
        return Err(Error::InvalidArgument(format!(
            "delta shapes do not conform: Θ {}x{}, δ {}x{}, τ {}x{}",
            theta.rows(),
            theta.cols(),
            delta_next.rows(),
            delta_next.cols(),
            tau.rows(),
            tau.cols()
        )));
    }
    Ok(())
}

/// Deltas for every layer, with hidden layers computed by `engine`. Returns
/// the deltas and the summed virtual wall-clock of the cluster jobs.
pub fn deltas_with(
    params: &NetworkParams,
    pass: &BatchPass,
    y: &RealMatrix,
    engine: &DeltaEngine<'_>,
    seed: u64,
) -> Result<(Vec<RealMatrix>, f64)> {
    let depth = params.depth();
    let mut deltas = vec![output_delta(params, pass, y)?];
    let mut wall = 0.0;
    for l in (0..depth - 1).rev() {
        let next = deltas.last().unwrap();
        let theta = &params.weights[l + 1];
        let act = params.activation(l);
        let job_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(l as u64);
        let d = match engine {
            DeltaEngine::Serial => {
                theta.transpose().matmul(next)?.hadamard(&derivative_of(&pass.pre[l], act))?
            }
            DeltaEngine::Coded { cluster, codec, wait_policy, mask_scale } => {
                let (d, report) = backprop_delta_coded(
                    theta, next, &pass.pre[l], act, cluster, codec, *wait_policy, *mask_scale, job_seed,
                )?;
                wall += report.wall_clock_ms;
                d
            }
            DeltaEngine::Uncoded { cluster } => {
                let (d, report) = backprop_delta_uncoded(theta, next, &pass.pre[l], act, cluster, job_seed)?;
                wall += report.wall_clock_ms;
                d
            }
        };
        deltas.push(d);
    }
    deltas.reverse();
    Ok((deltas, wall))
}

/// One update `Θ^l ← Θ^l − η Σ δ^l (a^{l-1})ᵀ`, `b^l ← b^l − η Σ δ^l` over
/// the batch. Returns the new parameters and the virtual time spent in
/// cluster jobs.
pub fn sgd_step(
    params: &NetworkParams,
    x: &RealMatrix,
    y: &RealMatrix,
    lr: f64,
    engine: &DeltaEngine<'_>,
    seed: u64,
) -> Result<(NetworkParams, f64)> {
    let pass = forward_batch(params, x)?;
    let (deltas, wall) = deltas_with(params, &pass, y, engine, seed)?;
    let (gw, gb) = gradients(&pass, &deltas)?;
    let mut next = params.clone();
    for l in 0..params.depth() {
        next.weights[l] = params.weights[l].sub(&gw[l].scale(lr))?;
        for (b, g) in next.biases[l].iter_mut().zip(&gb[l]) {
            *b -= lr * g;
        }
    }
    Ok((next, wall))
}

/// Labeled samples: one sample per row of `features`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: RealMatrix,
    pub labels: Vec<usize>,
    pub classes: usize,
}

const DIGITS1K: &str = include_str!("../data/digits1k.csv");

impl Dataset {
    pub fn new(features: RealMatrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} samples but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&c| c >= classes) {
            return Err(Error::InvalidArgument(format!("label {bad} out of range for {classes} classes")));
        }
        Ok(Self { features, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Two Gaussian clusters in the plane, centred at `(-2, -2)` and `(2, 2)`
    /// with unit variance; labels alternate.
    pub fn blobs(samples: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..samples).map(|i| i % 2).collect();
        let features = RealMatrix::from_fn(samples, 2, |i, _| {
            let centre = if labels[i] == 0 { -2.0 } else { 2.0 };
            centre + rng.sample::<f64, _>(StandardNormal)
        });
        Self { features, labels, classes: 2 }
    }

    /// Parses `label,x1,x2,...` lines; `#` lines and a non-numeric first line are skipped.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split(',').map(str::trim);
            let label = fields.next().unwrap_or_default();
            let Ok(label) = label.parse::<usize>() else {
                if rows.is_empty() {
                    continue;
                }
                return Err(Error::InvalidArgument(format!("line {}: bad label '{label}'", lineno + 1)));
            };
            let values = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::InvalidArgument(format!("line {}: {e}", lineno + 1)))?;
            labels.push(label);
            rows.push(values);
        }
        if rows.is_empty() {
            return Err(Error::InvalidArgument("dataset has no samples".into()));
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(RealMatrix::from_rows(&rows)?, labels, classes)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        Self::parse_csv(&text)
    }

    /// The bundled 1,000 handwritten digits (8×8, 10 classes), scaled to `[0, 1]`.
    pub fn digits1k() -> Self {
        let d = Self::parse_csv(DIGITS1K).expect("bundled digits parse");
        Self { features: d.features.scale(1.0 / 16.0), ..d }
    }

    /// Seeded shuffle followed by a split with `train_fraction` of the samples first.
    pub fn split(&self, train_fraction: f64, seed: u64) -> (Self, Self) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
        let cut = ((self.len() as f64) * train_fraction).round() as usize;
        (self.subset(&idx[..cut]), self.subset(&idx[cut..]))
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let features = RealMatrix::from_fn(idx.len(), self.dim(), |i, j| self.features.get(idx[i], j));
        Self { features, labels: idx.iter().map(|&i| self.labels[i]).collect(), classes: self.classes }
    }

    /// Features as an `M_0 × B` batch and one-hot targets as `classes × B`.
    pub fn batch(&self, idx: &[usize]) -> (RealMatrix, RealMatrix) {
        let x = RealMatrix::from_fn(self.dim(), idx.len(), |f, s| self.features.get(idx[s], f));
        let y = RealMatrix::from_fn(self.classes, idx.len(), |c, s| (self.labels[idx[s]] == c) as u8 as f64);
        (x, y)
    }

    fn all(&self) -> (RealMatrix, RealMatrix) {
        self.batch(&(0..self.len()).collect::<Vec<_>>())
    }
}

/// Fraction of samples whose largest output matches the label.
pub fn accuracy(params: &NetworkParams, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let (x, _) = data.all();
    let out = forward_batch(params, &x)?;
    let out = out.output();
    let correct = (0..data.len())
        .filter(|&s| {
            let best = (0..out.rows()).max_by(|&a, &b| out.get(a, s).total_cmp(&out.get(b, s))).unwrap();
            best == data.labels[s]
        })
        .count();
    Ok(correct as f64 / data.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    /// Coded deltas, decoding from the first `N − S` results.
    Spacdc,
    /// Uncoded deltas over all `N` workers.
    Conv,
}

impl Algorithm {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "spacdc" => Ok(Self::Spacdc),
            "conv" => Ok(Self::Conv),
            other => Err(Error::InvalidConfig(format!("unknown algorithm '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Spacdc => "spacdc",
            Self::Conv => "conv",
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    /// Hidden and output sizes; the input size comes from the dataset.
    pub hidden_layers: Vec<usize>,
    pub n: usize,
    pub k: usize,
    pub t: usize,
    pub stragglers: Vec<usize>,
    pub colluders: Vec<usize>,
    pub timing: Timing,
    pub mask_scale: f64,
    /// Overrides the default `first_r(N − S)` policy for the coded variant.
    pub wait_policy: Option<WaitPolicy>,
    pub cluster: ClusterConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            epochs: 30,
            batch: 20,
            hidden_layers: vec![16],
            n: 30,
            k: 4,
            t: 3,
            stragglers: Vec::new(),
            colluders: Vec::new(),
            timing: Timing::default(),
            mask_scale: 1.0,
            wait_policy: None,
            cluster: ClusterConfig::default(),
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::InvalidConfig("epochs and batch size must be at least 1".into()));
        }
        if self.stragglers.len() >= self.n {
            return Err(Error::InvalidConfig(format!(
                "{} stragglers leave no worker out of {}",
                self.stragglers.len(),
                self.n
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    /// Training loss before the first update.
    pub initial_loss: f64,
    /// Training loss after each epoch.
    pub loss: Vec<f64>,
    /// Test accuracy after each epoch, when a test set is given.
    pub accuracy: Vec<Option<f64>>,
    /// Virtual time spent waiting on cluster jobs per epoch.
    pub epoch_ms: Vec<f64>,
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,accuracy,epoch_ms\n");
        for e in 0..self.loss.len() {
            let acc = self.accuracy[e].map(|a| format!("{a:.6}")).unwrap_or_default();
            out.push_str(&format!("{},{:.9},{},{:.6}\n", e + 1, self.loss[e], acc, self.epoch_ms[e]));
        }
        out
    }
}

/// Trains a fresh network on `data`. Both variants share the network
/// initialisation, batch order and cluster keys for a given seed.
pub fn train(
    data: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
    algo: Algorithm,
) -> Result<(NetworkParams, TrainTrace)> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    cfg.validate()?;
    let mut sizes = vec![data.dim()];
    sizes.extend(&cfg.hidden_layers);
    if sizes.last() != Some(&data.classes) {
        sizes.push(data.classes);
    }
    let mut params = NetworkParams::init(&sizes, cfg.seed)?;
    let cluster = Cluster::with_roles(cfg.cluster.clone(), cfg.n, &cfg.stragglers, &cfg.colluders, cfg.timing, cfg.seed)?;
    let engine = match algo {
        Algorithm::Spacdc => DeltaEngine::Coded {
            cluster: &cluster,
            codec: CodecConfig::default_anchors(cfg.n, cfg.k, cfg.t)?,
            wait_policy: cfg.wait_policy.unwrap_or(WaitPolicy::FirstR(cfg.n - cfg.stragglers.len())),
            mask_scale: cfg.mask_scale,
        },
        Algorithm::Conv => DeltaEngine::Uncoded { cluster: &cluster },
    };

    let (all_x, all_y) = data.all();
    let mut trace = TrainTrace { initial_loss: loss(&params, &all_x, &all_y)?, ..Default::default() };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_ba7c4);
    let mut step: u64 = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_ms = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let (x, y) = data.batch(chunk);
            let (next, wall) = sgd_step(&params, &x, &y, cfg.lr, &engine, cfg.seed.wrapping_add(step << 8))?;
            params = next;
            epoch_ms += wall;
            step += 1;
        }
        let epoch_loss = loss(&params, &all_x, &all_y)?;
        if !epoch_loss.is_finite() {
            return Err(Error::Numerical(format!("training loss diverged after {} epochs", trace.loss.len() + 1)));
        }
        trace.loss.push(epoch_loss);
        trace.accuracy.push(test.map(|t| accuracy(&params, t)).transpose()?);
        trace.epoch_ms.push(epoch_ms);
    }
    Ok((params, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_network_passes_input_through() {
        let p = NetworkParams::new(
            vec![RealMatrix::identity(3)],
            vec![vec![0.0; 3]],
            Activation::Identity,
            Activation::Identity,
        )
        .unwrap();
        let (a, _) = forward(&p, &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(a[0], vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn single_relu_layer() {
        let p = NetworkParams::new(
            vec![RealMatrix::from_rows(&[vec![1.0, -1.0]]).unwrap()],
            vec![vec![0.0]],
            Activation::Relu,
            Activation::Relu,
        )
        .unwrap();
        let (a, t) = forward(&p, &[2.0, 3.0]).unwrap();
        assert_eq!(a[0], vec![0.0]);
        assert_eq!(t[0], vec![-1.0]);
    }

    #[test]
    fn shape_errors() {
        let p = NetworkParams::init(&[3, 4, 2], 0).unwrap();
        assert!(matches!(forward(&p, &[1.0, 2.0]), Err(Error::InvalidArgument(_))));
        assert!(NetworkParams::new(vec![RealMatrix::zeros(2, 3)], vec![vec![0.0; 3]], Activation::Relu, Activation::Relu).is_err());
        assert!(NetworkParams::init(&[3], 0).is_err());
    }

    #[test]
    fn forward_matches_straight_line_reference() {
        let p = NetworkParams::init(&[5, 7, 4, 3], 11).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let p = NetworkParams {
            biases: p.biases.iter().map(|b| b.iter().map(|_| rng.gen_range(-0.5..0.5)).collect()).collect(),
            ..p
        };
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut a = x.clone();
        for (l, (w, b)) in p.weights.iter().zip(&p.biases).enumerate() {
            let act = if l == 2 { Activation::Sigmoid } else { Activation::Relu };
            a = (0..w.rows())
                .map(|i| act.apply((0..w.cols()).map(|j| w.get(i, j) * a[j]).sum::<f64>() + b[i]))
                .collect();
        }
        let (got, _) = forward(&p, &x).unwrap();
        for (g, r) in got[2].iter().zip(&a) {
            assert!((g - r).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // Smooth hidden activation so central differences are well defined.
        let base = NetworkParams::init(&[3, 5, 2], 4).unwrap();
        let p = NetworkParams { hidden: Activation::Sigmoid, ..base };
        let data = Dataset::blobs(6, 3);
        let (x, y) = data.batch(&(0..6).collect::<Vec<_>>());
        let x = RealMatrix::from_fn(3, 6, |i, j| if i < 2 { x.get(i, j) } else { 0.3 * j as f64 - 0.7 });
        let pass = forward_batch(&p, &x).unwrap();
        let deltas = deltas_serial(&p, &pass, &y).unwrap();
        let (gw, gb) = gradients(&pass, &deltas).unwrap();
        let b = x.cols() as f64;
        let h = 1e-5;
        for l in 0..2 {
            for i in 0..p.weights[l].rows() {
                for j in 0..p.weights[l].cols() {
                    let bump = |s: f64| {
                        let mut q = p.clone();
                        let w = &q.weights[l];
                        q.weights[l] = RealMatrix::from_fn(w.rows(), w.cols(), |r, c| {
                            w.get(r, c) + if (r, c) == (i, j) { s } else { 0.0 }
                        });
                        loss(&q, &x, &y).unwrap() * b
                    };
                    let fd = (bump(h) - bump(-h)) / (2.0 * h);
                    let g = gw[l].get(i, j);
                    assert!((fd - g).abs() <= 1e-4 * g.abs().max(1e-3), "w[{l}][{i},{j}]: {fd} vs {g}");
                }
                let bump = |s: f64| {
                    let mut q = p.clone();
                    q.biases[l][i] += s;
                    loss(&q, &x, &y).unwrap() * b
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                assert!((fd - gb[l][i]).abs() <= 1e-4 * gb[l][i].abs().max(1e-3));
            }
        }
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let p = NetworkParams::init(&[2, 4, 2], 1).unwrap();
        let d = Dataset::blobs(8, 1);
        let (x, y) = d.batch(&[0, 1, 2, 3]);
        let (q, _) = sgd_step(&p, &x, &y, 0.0, &DeltaEngine::Serial, 0).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn serial_engine_matches_oracle() {
        let p = NetworkParams::init(&[2, 6, 5, 2], 8).unwrap();
        let d = Dataset::blobs(10, 2);
        let (x, y) = d.batch(&(0..10).collect::<Vec<_>>());
        let pass = forward_batch(&p, &x).unwrap();
        let (a, wall) = deltas_with(&p, &pass, &y, &DeltaEngine::Serial, 0).unwrap();
        assert_eq!(a, deltas_serial(&p, &pass, &y).unwrap());
        assert_eq!(wall, 0.0);
    }

    #[test]
    fn datasets() {
        let b = Dataset::blobs(50, 3);
        assert_eq!((b.len(), b.dim(), b.classes), (50, 2, 2));
        assert_eq!(b, Dataset::blobs(50, 3));
        let d = Dataset::digits1k();
        assert_eq!((d.len(), d.dim(), d.classes), (1000, 64, 10));
        assert!(d.features.max_abs() <= 1.0);
        let (tr, te) = d.split(0.8, 1);
        assert_eq!((tr.len(), te.len()), (800, 200));
        let parsed = Dataset::parse_csv("label,a,b\n1,0.5,2\n0,1,1\n").unwrap();
        assert_eq!(parsed.labels, vec![1, 0]);
        assert!(Dataset::parse_csv("").is_err());
        assert!(Dataset::parse_csv("1,2\nx,3\n").is_err());
    }

    #[test]
    fn empty_dataset_rejected() {
        let empty = Dataset { features: RealMatrix::zeros(0, 2), labels: vec![], classes: 2 };
        let err = train(&empty, None, &TrainConfig::default(), Algorithm::Conv).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig { lr: 0.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }
}
