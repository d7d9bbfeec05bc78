//! The deep network: pretrained encoder halves feeding a softmax head,
//! trained greedily one stage at a time with optional joint fine-tuning.

use crate::autoencoder::{self, init_bound, AeHyper, AutoencoderParams};
use crate::classifier::{self, cross_entropy, logit_gradient, SoftmaxHyper, SoftmaxParams};
use crate::codec::{Decoder, Encoder};
use crate::data::{one_hot, Dataset, Split};
use crate::error::{Error, Result};
use crate::linalg::{rand_uniform, sigmoid, Matrix, RngState};
use crate::optim::{self, Evaluation, ParamSet, TrainTrace};

pub const MAGIC: &[u8; 4] = b"DSNW";

/// Encoder half of a trained autoencoder.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayer {
    /// out x in
    pub w: Matrix,
    /// out x 1
    pub b: Matrix,
}

impl EncoderLayer {
    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.w.matmul(x)?.add_column(&self.b)?.map(sigmoid))
    }
}

impl From<&AutoencoderParams> for EncoderLayer {
    fn from(p: &AutoencoderParams) -> Self {
        EncoderLayer {
            w: p.w_enc.clone(),
            b: p.b_enc.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StackedNetwork {
    encoders: Vec<EncoderLayer>,
    head: SoftmaxParams,
    layer_dims: Vec<usize>,
}

/// Hyperparameters for every stage of the pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    /// One entry per autoencoder, input side first.
    pub autoencoders: Vec<AeHyper>,
    pub softmax: SoftmaxHyper,
    /// Joint fine-tuning; `epochs_max = 0` disables it.
    pub fine_tune: SoftmaxHyper,
}

impl PipelineConfig {
    /// Hidden sizes 100 and 50 with epoch caps 400, 100 and 400.
    pub fn paper() -> Self {
        PipelineConfig {
            autoencoders: vec![
                AeHyper {
                    hidden: 100,
                    epochs_max: 400,
                    ..AeHyper::default()
                },
                AeHyper {
                    hidden: 50,
                    epochs_max: 100,
                    ..AeHyper::default()
                },
            ],
            softmax: SoftmaxHyper::default(),
            fine_tune: SoftmaxHyper {
                epochs_max: 0,
                ..SoftmaxHyper::default()
            },
        }
    }

    /// The full-scale layout shrunk to hidden sizes 25 and 10 for small images.
    /// The sparsity target is doubled: at 0.05 a 10-unit code keeps only
    /// half a unit active on average and the head cannot separate it with
    /// confident posteriors.
    pub fn desk() -> Self {
        let mut cfg = Self::paper();
        cfg.autoencoders[0].hidden = 25;
        cfg.autoencoders[1].hidden = 10;
        for ae in &mut cfg.autoencoders {
            ae.sparsity_target = 0.1;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.autoencoders.is_empty() {
            return Err(Error::Param(
                "at least one autoencoder stage is required".into(),
            ));
        }
        for (i, hyp) in self.autoencoders.iter().enumerate() {
            hyp.validate()
                .map_err(|e| Error::Param(format!("ae{}: {e}", i + 1)))?;
        }
        if self.softmax.epochs_max == 0 {
            return Err(Error::Param(
                "softmax: epochs_max must be at least 1".into(),
            ));
        }
        self.softmax
            .validate()
            .map_err(|e| Error::Param(format!("softmax: {e}")))?;
        self.fine_tune
            .validate()
            .map_err(|e| Error::Param(format!("fine_tune: {e}")))
    }
}

impl ParamSet for StackedNetwork {
    fn tensors(&self) -> Vec<&Matrix> {
        let mut out = Vec::with_capacity(2 * self.encoders.len() + 2);
        for e in &self.encoders {
            out.push(&e.w);
            out.push(&e.b);
        }
        out.push(&self.head.w);
        out.push(&self.head.b);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::with_capacity(2 * self.encoders.len() + 2);
        for e in &mut self.encoders {
            out.push(&mut e.w);
            out.push(&mut e.b);
        }
        out.push(&mut self.head.w);
        out.push(&mut self.head.b);
        out
    }
}

impl StackedNetwork {
    /// Assembles a network, checking that adjacent layer sizes agree.
    pub fn new(encoders: Vec<EncoderLayer>, head: SoftmaxParams) -> Result<Self> {
        let mut dims = Vec::with_capacity(encoders.len() + 2);
        let mut expected = encoders.first().map_or(head.features(), |e| e.input_dim());
        dims.push(expected);
        for (i, e) in encoders.iter().enumerate() {
            if e.input_dim() != expected || e.b.shape() != (e.output_dim(), 1) {
                return Err(Error::shape(
                    &format!("encoder{}", i + 1),
                    (expected, 1),
                    e.w.shape(),
                ));
            }
            expected = e.output_dim();
            dims.push(expected);
        }
        if head.features() != expected || head.b.shape() != (head.classes(), 1) {
            return Err(Error::shape("head", (expected, 1), head.w.shape()));
        }
        dims.push(head.classes());
        Ok(StackedNetwork {
            encoders,
            head,
            layer_dims: dims,
        })
    }

    /// Untrained network with the layer sizes of `cfg`.
    pub fn initialize(
        input: usize,
        classes: usize,
        cfg: &PipelineConfig,
        rng: &mut RngState,
    ) -> Result<Self> {
        let mut encoders = Vec::with_capacity(cfg.autoencoders.len());
        let mut fan_in = input;
        for hyp in &cfg.autoencoders {
            if fan_in == 0 || hyp.hidden == 0 {
                return Err(Error::Param("layer sizes must be positive".into()));
            }
            let r = init_bound(fan_in, hyp.hidden);
            encoders.push(EncoderLayer {
                w: rand_uniform(rng, hyp.hidden, fan_in, -r, r)?,
                b: Matrix::zeros(hyp.hidden, 1),
            });
            fan_in = hyp.hidden;
        }
        let head = SoftmaxParams::init(classes, fan_in, rng)?;
        Self::new(encoders, head)
    }

    pub fn encoders(&self) -> &[EncoderLayer] {
        &self.encoders
    }

    pub fn head(&self) -> &SoftmaxParams {
        &self.head
    }

    /// Input size, each hidden size, then the class count.
    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn classes(&self) -> usize {
        self.head.classes()
    }

    /// Activations of every encoder, input first.
    fn activations(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        let mut acts = vec![x.clone()];
        for (i, e) in self.encoders.iter().enumerate() {
            let a = acts.last().unwrap();
            if a.rows() != e.input_dim() {
                return Err(Error::shape(
                    &format!("encoder{}", i + 1),
                    e.w.shape(),
                    a.shape(),
                ));
            }
            acts.push(e.forward(a)?);
        }
        Ok(acts)
    }

    /// Top-level code fed to the head.
    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.activations(x)?.pop().unwrap())
    }

    pub fn to_bytes(&self, config_text: &str) -> Vec<u8> {
        let mut e = Encoder::new(MAGIC);
        e.u64(self.layer_dims.len() as u64);
        for &d in &self.layer_dims {
            e.u64(d as u64);
        }
        for layer in &self.encoders {
            e.values(&layer.w);
            e.values(&layer.b);
        }
        e.bytes(&self.head.to_bytes());
        e.bytes(config_text.as_bytes());
        e.finish()
    }
}

/// A network together with the configuration text it was trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub network: StackedNetwork,
    pub config: String,
}

impl ModelBundle {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.network.to_bytes(&self.config)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(buf, MAGIC, "model bundle")?;
        let n = d.dim()?;
        if n < 2 {
            return Err(Error::Format(format!("model bundle: {n} layer dims")));
        }
        let dims = (0..n).map(|_| d.dim()).collect::<Result<Vec<_>>>()?;
        let mut encoders = Vec::with_capacity(n - 2);
        for pair in dims[..n - 1].windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            encoders.push(EncoderLayer {
                w: d.matrix(fan_out, fan_in)?,
                b: d.matrix(fan_out, 1)?,
            });
        }
        let head = SoftmaxParams::from_bytes(d.bytes()?)?;
        let config = String::from_utf8(d.bytes()?.to_vec())
            .map_err(|_| Error::Format("model bundle: config is not UTF-8".into()))?;
        d.finish()?;
        let network = StackedNetwork::new(encoders, head)?;
        if network.layer_dims != dims {
            return Err(Error::Format(format!(
                "model bundle: declared dims {dims:?} but layers give {:?}",
                network.layer_dims
            )));
        }
        Ok(ModelBundle { network, config })
    }
}

/// Posterior matrix (classes x N) and the argmax label of each column.
pub fn predict(net: &StackedNetwork, x: &Matrix) -> Result<(Matrix, Vec<usize>)> {
    let features = net.features(x)?;
    let posteriors = net
        .head
        .posteriors(&features)
        .map_err(|e| e.in_stage("head"))?;
    let labels = posteriors.argmax_columns();
    Ok((posteriors, labels))
}

/// Mean cross-entropy of the whole network plus `(λ/2)` times the squared
/// norm of every weight matrix.
pub fn network_objective(
    net: &StackedNetwork,
    x: &Matrix,
    t: &Matrix,
    l2_weight: f64,
) -> Result<f64> {
    let z = net.head.logits(&net.features(x)?)?;
    if z.shape() != t.shape() {
        return Err(Error::shape("targets", z.shape(), t.shape()));
    }
    let decay: f64 =
        net.encoders.iter().map(|e| e.w.sum_squares()).sum::<f64>() + net.head.w.sum_squares();
    Ok(cross_entropy(&z, t) + 0.5 * l2_weight * decay)
}

/// Backpropagates [`network_objective`] through the head and every encoder.
pub fn network_gradient(
    net: &StackedNetwork,
    x: &Matrix,
    t: &Matrix,
    l2_weight: f64,
) -> Result<StackedNetwork> {
    let acts = net.activations(x)?;
    let top = acts.last().unwrap();
    let z = net.head.logits(top)?;
    if z.shape() != t.shape() {
        return Err(Error::shape("targets", z.shape(), t.shape()));
    }
    let delta = logit_gradient(&z, t)?;
    let mut head_w = delta.matmul(&top.transpose())?;
    head_w.add_scaled(&net.head.w, l2_weight)?;
    let head = SoftmaxParams {
        w: head_w,
        b: delta.row_sums(),
    };

    let mut back = net.head.w.transpose().matmul(&delta)?;
    let mut grads = Vec::with_capacity(net.encoders.len());
    for (i, layer) in net.encoders.iter().enumerate().rev() {
        let out = &acts[i + 1];
        let d = back.zip_map(out, |g, a| g * a * (1.0 - a))?;
        let mut w = d.matmul(&acts[i].transpose())?;
        w.add_scaled(&layer.w, l2_weight)?;
        if i > 0 {
            back = layer.w.transpose().matmul(&d)?;
        }
        grads.push(EncoderLayer { w, b: d.row_sums() });
    }
    grads.reverse();
    Ok(StackedNetwork {
        encoders: grads,
        head,
        layer_dims: net.layer_dims.clone(),
    })
}

/// Everything produced by [`greedy_train`].
#[derive(Clone, Debug)]
pub struct GreedyOutcome {
    pub network: StackedNetwork,
    /// Full autoencoders including decoders, input side first.
    pub autoencoders: Vec<AutoencoderParams>,
    /// `(stage name, trace)` for ae1, ae2, ..., softmax and, when enabled,
    /// fine_tune.
    pub traces: Vec<(String, TrainTrace)>,
}

fn partition_targets(ds: &Dataset, idx: &[usize]) -> Result<Matrix> {
    one_hot(&ds.labels(idx), ds.class_count)
}

/// Greedy layer-wise training: each autoencoder learns the previous stage's
/// codes of the training partition, the head learns the top codes, and the
/// validation partition drives model selection at every stage.
pub fn greedy_train(
    ds: &Dataset,
    split: &Split,
    cfg: &PipelineConfig,
    rng: &RngState,
) -> Result<GreedyOutcome> {
    cfg.validate()?;
    if split.train.is_empty() || split.validation.is_empty() {
        return Err(Error::Param(
            "greedy training needs non-empty train and validation partitions".into(),
        ));
    }
    let mut feat_train = ds.matrix(&split.train);
    let mut feat_val = ds.matrix(&split.validation);
    let mut autoencoders = Vec::new();
    let mut traces = Vec::new();

    for (i, hyp) in cfg.autoencoders.iter().enumerate() {
        let stage = format!("ae{}", i + 1);
        let (ae, trace) =
            autoencoder::train_ae(&feat_train, &feat_val, hyp, &mut rng.fork(i as u64))
                .map_err(|e| e.in_stage(&stage))?;
        feat_train = autoencoder::encode(&ae, &feat_train)?;
        feat_val = autoencoder::encode(&ae, &feat_val)?;
        autoencoders.push(ae);
        traces.push((stage, trace));
    }

    let t_train = partition_targets(ds, &split.train)?;
    let t_val = partition_targets(ds, &split.validation)?;
    let (head, trace) = classifier::train_softmax(
        &feat_train,
        &t_train,
        &feat_val,
        &t_val,
        &cfg.softmax,
        &mut rng.fork(cfg.autoencoders.len() as u64),
    )
    .map_err(|e| e.in_stage("softmax"))?;
    traces.push(("softmax".to_string(), trace));

    let mut network =
        StackedNetwork::new(autoencoders.iter().map(EncoderLayer::from).collect(), head)?;
    if cfg.fine_tune.epochs_max > 0 {
        let (tuned, trace) = fine_tune(&network, ds, split, cfg, rng)?;
        network = tuned;
        traces.push(("fine_tune".to_string(), trace));
    }
    Ok(GreedyOutcome {
        network,
        autoencoders,
        traces,
    })
}

fn accuracy(net: &StackedNetwork, x: &Matrix, labels: &[usize]) -> Result<f64> {
    let (_, pred) = predict(net, x)?;
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len().max(1) as f64)
}

/// Joint backpropagation of cross-entropy through the whole stack using
/// `cfg.fine_tune`. Keeps the epoch with the best validation accuracy, ties
/// broken by validation objective; the starting network is a candidate.
pub fn fine_tune(
    net: &StackedNetwork,
    ds: &Dataset,
    split: &Split,
    cfg: &PipelineConfig,
    rng: &RngState,
) -> Result<(StackedNetwork, TrainTrace)> {
    let hyp = &cfg.fine_tune;
    hyp.validate()?;
    let x_train = ds.matrix(&split.train);
    let x_val = ds.matrix(&split.validation);
    let t_train = partition_targets(ds, &split.train)?;
    let t_val = partition_targets(ds, &split.validation)?;
    let val_labels = ds.labels(&split.validation);
    optim::descend(
        "fine_tune",
        net.clone(),
        x_train.cols(),
        &hyp.sgd(),
        &mut rng.fork(1000),
        |p, batch| {
            network_gradient(
                p,
                &x_train.select_columns(batch),
                &t_train.select_columns(batch),
                hyp.l2_weight,
            )
        },
        |p| {
            let val_objective = network_objective(p, &x_val, &t_val, hyp.l2_weight)?;
            Ok(Evaluation {
                train_objective: network_objective(p, &x_train, &t_train, hyp.l2_weight)?,
                val_objective,
                score: [1.0 - accuracy(p, &x_val, &val_labels)?, val_objective],
            })
        },
    )
    .map_err(|e| e.in_stage("fine_tune"))
}
