//! Sparse autoencoder: logistic encoder `h = f(x)`, logistic decoder
//! `r = g(h)`, trained to reconstruct its input under L2 weight decay and a
//! KL sparsity penalty on the mean hidden activation.

use crate::codec::{self, Decoder, Encoder};
use crate::error::{Error, Result};
use crate::linalg::{rand_uniform, sigmoid, Matrix, RngState};
use crate::optim::{self, Evaluation, ParamSet, SgdOptions, TrainTrace};

pub const MAGIC: &[u8; 4] = b"DSAE";

/// Mean activations are clamped to this distance from 0 and 1 before the
/// KL logarithms.
pub const RHO_CLAMP: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderParams {
    pub w_enc: Matrix,
    pub b_enc: Matrix,
    pub w_dec: Matrix,
    pub b_dec: Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AeHyper {
    pub hidden: usize,
    pub epochs_max: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2_weight: f64,
    pub sparsity_target: f64,
    pub sparsity_weight: f64,
    pub batch_size: usize,
}

impl Default for AeHyper {
    fn default() -> Self {
        AeHyper {
            hidden: 100,
            epochs_max: 400,
            learning_rate: 0.1,
            momentum: 0.9,
            l2_weight: 1e-4,
            sparsity_target: 0.05,
            sparsity_weight: 1.0,
            batch_size: 64,
        }
    }
}

impl AeHyper {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Param("hidden size must be at least 1".into()));
        }
        if self.epochs_max == 0 {
            return Err(Error::Param("epochs_max must be at least 1".into()));
        }
        if !(self.l2_weight >= 0.0 && self.l2_weight.is_finite()) {
            return Err(Error::Param(format!(
                "l2_weight must be >= 0, got {}",
                self.l2_weight
            )));
        }
        if !(self.sparsity_target > 0.0 && self.sparsity_target < 1.0) {
            return Err(Error::Param(format!(
                "sparsity_target must be in (0, 1), got {}",
                self.sparsity_target
            )));
        }
        if !(self.sparsity_weight >= 0.0 && self.sparsity_weight.is_finite()) {
            return Err(Error::Param(format!(
                "sparsity_weight must be >= 0, got {}",
                self.sparsity_weight
            )));
        }
        self.sgd().validate()
    }

    pub fn sgd(&self) -> SgdOptions {
        SgdOptions {
            epochs: self.epochs_max,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            batch_size: self.batch_size,
        }
    }
}

impl ParamSet for AutoencoderParams {
    fn tensors(&self) -> Vec<&Matrix> {
        vec![&self.w_enc, &self.b_enc, &self.w_dec, &self.b_dec]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.w_enc,
            &mut self.b_enc,
            &mut self.w_dec,
            &mut self.b_dec,
        ]
    }
}

/// Glorot-style uniform bound for a `fan_in -> fan_out` layer.
pub(crate) fn init_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl AutoencoderParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        AutoencoderParams {
            w_enc: Matrix::zeros(hidden, input),
            b_enc: Matrix::zeros(hidden, 1),
            w_dec: Matrix::zeros(input, hidden),
            b_dec: Matrix::zeros(input, 1),
        }
    }

    /// Uniform weights in `±sqrt(6 / (input + hidden))`, zero biases.
    pub fn init(input: usize, hidden: usize, rng: &mut RngState) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(Error::Param(format!(
                "autoencoder dims must be positive, got {input} -> {hidden}"
            )));
        }
        let r = init_bound(input, hidden);
        Ok(AutoencoderParams {
            w_enc: rand_uniform(rng, hidden, input, -r, r)?,
            b_enc: Matrix::zeros(hidden, 1),
            w_dec: rand_uniform(rng, input, hidden, -r, r)?,
            b_dec: Matrix::zeros(input, 1),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w_enc.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_enc.rows()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.rows() != self.input_dim() {
            return Err(Error::shape("encode", self.w_enc.shape(), x.shape()));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new(MAGIC);
        e.u64(self.input_dim() as u64);
        e.u64(self.hidden_dim() as u64);
        for t in self.tensors() {
            e.values(t);
        }
        e.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(buf, MAGIC, "autoencoder")?;
        let input = d.dim()?;
        let hidden = d.dim()?;
        let p = AutoencoderParams {
            w_enc: d.matrix(hidden, input)?,
            b_enc: d.matrix(hidden, 1)?,
            w_dec: d.matrix(input, hidden)?,
            b_dec: d.matrix(input, 1)?,
        };
        d.finish()?;
        Ok(p)
    }

    /// Plain-text export carrying the same fields as the binary record.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "DSAE {}\ninput {}\nhidden {}\n",
            codec::FORMAT_VERSION,
            self.input_dim(),
            self.hidden_dim()
        );
        codec::write_text_matrix(&mut out, "w_enc", &self.w_enc);
        codec::write_text_matrix(&mut out, "b_enc", &self.b_enc);
        codec::write_text_matrix(&mut out, "w_dec", &self.w_dec);
        codec::write_text_matrix(&mut out, "b_dec", &self.b_dec);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let head = lines.next().unwrap_or_default();
        if head.trim() != format!("DSAE {}", codec::FORMAT_VERSION) {
            return Err(Error::Format(format!("not a DSAE text export: `{head}`")));
        }
        // the dims lines are informational; the matrix headers carry shapes
        lines.next();
        lines.next();
        let w_enc = codec::read_text_matrix(&mut lines, "w_enc")?;
        let b_enc = codec::read_text_matrix(&mut lines, "b_enc")?;
        let w_dec = codec::read_text_matrix(&mut lines, "w_dec")?;
        let b_dec = codec::read_text_matrix(&mut lines, "b_dec")?;
        let (h, i) = w_enc.shape();
        if b_enc.shape() != (h, 1) || w_dec.shape() != (i, h) || b_dec.shape() != (i, 1) {
            return Err(Error::Format("inconsistent autoencoder shapes".into()));
        }
        Ok(AutoencoderParams {
            w_enc,
            b_enc,
            w_dec,
            b_dec,
        })
    }
}

pub fn encode(p: &AutoencoderParams, x: &Matrix) -> Result<Matrix> {
    p.check_input(x)?;
    Ok(p.w_enc.matmul(x)?.add_column(&p.b_enc)?.map(sigmoid))
}

pub fn decode(p: &AutoencoderParams, h: &Matrix) -> Result<Matrix> {
    if h.rows() != p.hidden_dim() {
        return Err(Error::shape("decode", p.w_dec.shape(), h.shape()));
    }
    Ok(p.w_dec.matmul(h)?.add_column(&p.b_dec)?.map(sigmoid))
}

fn kl(rho: f64, rho_hat: f64) -> f64 {
    rho * (rho / rho_hat).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - rho_hat)).ln()
}

/// Per-unit mean activation over the batch, before clamping.
fn mean_activation(h: &Matrix) -> Vec<f64> {
    let n = h.cols() as f64;
    (0..h.rows())
        .map(|j| h.row(j).iter().sum::<f64>() / n)
        .collect()
}

fn clamp_rho(v: f64) -> f64 {
    v.clamp(RHO_CLAMP, 1.0 - RHO_CLAMP)
}

fn check_batch(p: &AutoencoderParams, x: &Matrix) -> Result<()> {
    p.check_input(x)?;
    if x.cols() == 0 {
        return Err(Error::Param(
            "autoencoder objective needs at least one sample".into(),
        ));
    }
    Ok(())
}

struct Forward {
    h: Matrix,
    r: Matrix,
}

fn forward(p: &AutoencoderParams, x: &Matrix) -> Result<Forward> {
    let h = encode(p, x)?;
    let r = decode(p, &h)?;
    Ok(Forward { h, r })
}

fn objective_from(p: &AutoencoderParams, x: &Matrix, fw: &Forward, hyp: &AeHyper) -> f64 {
    let n = x.cols() as f64;
    let recon: f64 =
        fw.r.data()
            .iter()
            .zip(x.data())
            .map(|(r, x)| (r - x) * (r - x))
            .sum();
    let decay = 0.5 * hyp.l2_weight * (p.w_enc.sum_squares() + p.w_dec.sum_squares());
    let sparsity = if hyp.sparsity_weight > 0.0 {
        hyp.sparsity_weight
            * mean_activation(&fw.h)
                .into_iter()
                .map(|m| kl(hyp.sparsity_target, clamp_rho(m)))
                .sum::<f64>()
    } else {
        0.0
    };
    recon / (2.0 * n) + decay + sparsity
}

/// `(1/2N) Σ‖r − x‖² + (λ/2)(‖W_enc‖² + ‖W_dec‖²) + β Σ_j KL(ρ ‖ ρ̂_j)`.
pub fn ae_objective(p: &AutoencoderParams, x: &Matrix, hyp: &AeHyper) -> Result<f64> {
    check_batch(p, x)?;
    let fw = forward(p, x)?;
    Ok(objective_from(p, x, &fw, hyp))
}

/// Mean squared reconstruction error per sample, `(1/2N) Σ‖r − x‖²`,
/// without regularizers.
pub fn reconstruction_error(p: &AutoencoderParams, x: &Matrix) -> Result<f64> {
    let hyp = AeHyper {
        l2_weight: 0.0,
        sparsity_weight: 0.0,
        ..AeHyper::default()
    };
    ae_objective(p, x, &hyp)
}

/// Backpropagated gradient of [`ae_objective`], returned in parameter shape.
pub fn ae_gradient(p: &AutoencoderParams, x: &Matrix, hyp: &AeHyper) -> Result<AutoencoderParams> {
    check_batch(p, x)?;
    let fw = forward(p, x)?;
    let n = x.cols() as f64;

    // output layer: d/dz2 of the reconstruction term
    let delta_out = fw.r.zip_map(x, |r, x| (r - x) * r * (1.0 - r) / n)?;
    let mut g_w_dec = delta_out.matmul(&fw.h.transpose())?;
    g_w_dec.add_scaled(&p.w_dec, hyp.l2_weight)?;
    let g_b_dec = delta_out.row_sums();

    let mut back = p.w_dec.transpose().matmul(&delta_out)?;
    if hyp.sparsity_weight > 0.0 {
        let rho = hyp.sparsity_target;
        let cols = back.cols();
        for (j, m) in mean_activation(&fw.h).into_iter().enumerate() {
            // the clamp is flat, so clamped units get no sparsity gradient
            if m != clamp_rho(m) {
                continue;
            }
            let s = hyp.sparsity_weight * (-rho / m + (1.0 - rho) / (1.0 - m)) / n;
            for c in 0..cols {
                back.set(j, c, back.get(j, c) + s);
            }
        }
    }
    let delta_hidden = back.zip_map(&fw.h, |b, h| b * h * (1.0 - h))?;
    let mut g_w_enc = delta_hidden.matmul(&x.transpose())?;
    g_w_enc.add_scaled(&p.w_enc, hyp.l2_weight)?;
    let g_b_enc = delta_hidden.row_sums();

    Ok(AutoencoderParams {
        w_enc: g_w_enc,
        b_enc: g_b_enc,
        w_dec: g_w_dec,
        b_dec: g_b_dec,
    })
}

/// Trains one autoencoder on the columns of `x_train`, keeping the
/// parameters with the lowest objective on `x_val`.
pub fn train_ae(
    x_train: &Matrix,
    x_val: &Matrix,
    hyp: &AeHyper,
    rng: &mut RngState,
) -> Result<(AutoencoderParams, TrainTrace)> {
    hyp.validate()?;
    if x_train.rows() != x_val.rows() {
        return Err(Error::shape("train_ae", x_train.shape(), x_val.shape()));
    }
    if x_val.cols() == 0 {
        return Err(Error::Param(
            "autoencoder training needs validation samples".into(),
        ));
    }
    let init = AutoencoderParams::init(x_train.rows(), hyp.hidden, rng)?;
    optim::descend(
        "autoencoder",
        init,
        x_train.cols(),
        &hyp.sgd(),
        rng,
        |p, batch| ae_gradient(p, &x_train.select_columns(batch), hyp),
        |p| {
            Ok(Evaluation::by_validation(
                ae_objective(p, x_train, hyp)?,
                ae_objective(p, x_val, hyp)?,
            ))
        },
    )
}
