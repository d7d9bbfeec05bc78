//! Softmax output layer trained with cross-entropy.

use crate::autoencoder::init_bound;
use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::linalg::{rand_uniform, Matrix, RngState};
use crate::optim::{self, Evaluation, ParamSet, SgdOptions, TrainTrace};

pub const MAGIC: &[u8; 4] = b"DSSM";

#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxParams {
    /// classes x features
    pub w: Matrix,
    /// classes x 1
    pub b: Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SoftmaxHyper {
    pub epochs_max: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub l2_weight: f64,
    pub batch_size: usize,
}

impl Default for SoftmaxHyper {
    fn default() -> Self {
        SoftmaxHyper {
            epochs_max: 400,
            learning_rate: 0.1,
            momentum: 0.9,
            l2_weight: 1e-4,
            batch_size: 64,
        }
    }
}

impl SoftmaxHyper {
    /// Zero epochs are allowed here; fine-tuning uses that as "off".
    pub fn validate(&self) -> Result<()> {
        if !(self.l2_weight >= 0.0 && self.l2_weight.is_finite()) {
            return Err(Error::Param(format!(
                "l2_weight must be >= 0, got {}",
                self.l2_weight
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

impl ParamSet for SoftmaxParams {
    fn tensors(&self) -> Vec<&Matrix> {
        vec![&self.w, &self.b]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w, &mut self.b]
    }
}

impl SoftmaxParams {
    pub fn zeros(classes: usize, features: usize) -> Self {
        SoftmaxParams {
            w: Matrix::zeros(classes, features),
            b: Matrix::zeros(classes, 1),
        }
    }

    pub fn init(classes: usize, features: usize, rng: &mut RngState) -> Result<Self> {
        if classes == 0 || features == 0 {
            return Err(Error::Param(format!(
                "softmax dims must be positive, got {features} -> {classes}"
            )));
        }
        let r = init_bound(features, classes);
        Ok(SoftmaxParams {
            w: rand_uniform(rng, classes, features, -r, r)?,
            b: Matrix::zeros(classes, 1),
        })
    }

    pub fn classes(&self) -> usize {
        self.w.rows()
    }

    pub fn features(&self) -> usize {
        self.w.cols()
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() != self.features() {
            return Err(Error::shape("softmax", self.w.shape(), x.shape()));
        }
        self.w.matmul(x)?.add_column(&self.b)
    }

    pub fn posteriors(&self, x: &Matrix) -> Result<Matrix> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new(MAGIC);
        e.u64(self.classes() as u64);
        e.u64(self.features() as u64);
        e.values(&self.w);
        e.values(&self.b);
        e.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(buf, MAGIC, "softmax")?;
        let classes = d.dim()?;
        let features = d.dim()?;
        let p = SoftmaxParams {
            w: d.matrix(classes, features)?,
            b: d.matrix(classes, 1)?,
        };
        d.finish()?;
        Ok(p)
    }
}

/// Column-wise softmax, computed after subtracting each column's maximum.
pub fn softmax(z: &Matrix) -> Matrix {
    let mut out = z.clone();
    let (rows, cols) = z.shape();
    for c in 0..cols {
        let max = (0..rows)
            .map(|r| z.get(r, c))
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for r in 0..rows {
            let e = (z.get(r, c) - max).exp();
            out.set(r, c, e);
            total += e;
        }
        for r in 0..rows {
            out.set(r, c, out.get(r, c) / total);
        }
    }
    out
}

/// Column-wise `log softmax(z)`, finite even where the softmax underflows.
pub fn log_softmax(z: &Matrix) -> Matrix {
    let mut out = z.clone();
    let (rows, cols) = z.shape();
    for c in 0..cols {
        let max = (0..rows)
            .map(|r| z.get(r, c))
            .fold(f64::NEG_INFINITY, f64::max);
        let lse = max
            + (0..rows)
                .map(|r| (z.get(r, c) - max).exp())
                .sum::<f64>()
                .ln();
        for r in 0..rows {
            out.set(r, c, z.get(r, c) - lse);
        }
    }
    out
}

/// Mean cross-entropy of logits `z` against one-hot targets `t`.
pub(crate) fn cross_entropy(z: &Matrix, t: &Matrix) -> f64 {
    let logp = log_softmax(z);
    let total: f64 = logp
        .data()
        .iter()
        .zip(t.data())
        .filter(|(_, &tv)| tv != 0.0)
        .map(|(lp, tv)| tv * lp)
        .sum();
    -total / z.cols() as f64
}

/// Gradient of the mean cross-entropy with respect to the logits:
/// `(softmax(z) - t) / N`.
pub fn logit_gradient(z: &Matrix, t: &Matrix) -> Result<Matrix> {
    let n = z.cols() as f64;
    softmax(z).zip_map(t, |p, t| (p - t) / n)
}

fn check_targets(p: &SoftmaxParams, x: &Matrix, t: &Matrix) -> Result<()> {
    if t.rows() != p.classes() || t.cols() != x.cols() {
        return Err(Error::shape("targets", (p.classes(), x.cols()), t.shape()));
    }
    if x.cols() == 0 {
        return Err(Error::Param(
            "cross-entropy needs at least one sample".into(),
        ));
    }
    Ok(())
}

/// `-(1/N) Σ t·log softmax(Wx + b) + (λ/2)‖W‖²`.
pub fn xent_objective(p: &SoftmaxParams, x: &Matrix, t: &Matrix, l2_weight: f64) -> Result<f64> {
    let z = p.logits(x)?;
    check_targets(p, x, t)?;
    Ok(cross_entropy(&z, t) + 0.5 * l2_weight * p.w.sum_squares())
}

pub fn xent_gradient(
    p: &SoftmaxParams,
    x: &Matrix,
    t: &Matrix,
    l2_weight: f64,
) -> Result<SoftmaxParams> {
    let z = p.logits(x)?;
    check_targets(p, x, t)?;
    let delta = logit_gradient(&z, t)?;
    let mut w = delta.matmul(&x.transpose())?;
    w.add_scaled(&p.w, l2_weight)?;
    Ok(SoftmaxParams {
        w,
        b: delta.row_sums(),
    })
}

/// Trains the output layer on feature columns `x_*` with one-hot targets
/// `t_*`, keeping the parameters with the lowest validation objective.
pub fn train_softmax(
    x_train: &Matrix,
    t_train: &Matrix,
    x_val: &Matrix,
    t_val: &Matrix,
    hyp: &SoftmaxHyper,
    rng: &mut RngState,
) -> Result<(SoftmaxParams, TrainTrace)> {
    hyp.validate()?;
    if x_train.rows() != x_val.rows() {
        return Err(Error::shape(
            "train_softmax",
            x_train.shape(),
            x_val.shape(),
        ));
    }
    if t_train.rows() != t_val.rows() {
        return Err(Error::shape(
            "train_softmax targets",
            t_train.shape(),
            t_val.shape(),
        ));
    }
    if x_val.cols() == 0 {
        return Err(Error::Param(
            "softmax training needs validation samples".into(),
        ));
    }
    let init = SoftmaxParams::init(t_train.rows(), x_train.rows(), rng)?;
    check_targets(&init, x_train, t_train)?;
    check_targets(&init, x_val, t_val)?;
    optim::descend(
        "softmax",
        init,
        x_train.cols(),
        &hyp.sgd(),
        rng,
        |p, batch| {
            xent_gradient(
                p,
                &x_train.select_columns(batch),
                &t_train.select_columns(batch),
                hyp.l2_weight,
            )
        },
        |p| {
            Ok(Evaluation::by_validation(
                xent_objective(p, x_train, t_train, hyp.l2_weight)?,
                xent_objective(p, x_val, t_val, hyp.l2_weight)?,
            ))
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::one_hot;
    use proptest::prelude::*;

    #[test]
    fn uniform_logits() {
        let s = softmax(&Matrix::zeros(5, 3));
        assert!(s.data().iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn reference_values() {
        // exp(k) / (e + e^2 + e^3), evaluated in extended precision
        let s = softmax(&Matrix::column_vector(vec![1.0, 2.0, 3.0]));
        let want = [
            0.090_030_573_170_380_46,
            0.244_728_471_054_797_65,
            0.665_240_955_774_821_9,
        ];
        for (g, w) in s.data().iter().zip(want) {
            assert!((g - w).abs() < 1e-15, "{g} vs {w}");
        }
    }

    #[test]
    fn uniform_prediction_costs_ln_classes() {
        let p = SoftmaxParams::zeros(5, 3);
        let x = Matrix::filled(3, 4, 0.7);
        let t = one_hot(&[0, 1, 4, 2], 5).unwrap();
        let j = xent_objective(&p, &x, &t, 0.0).unwrap();
        assert!((j - 5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn confident_predictions_cost_nothing() {
        let t = one_hot(&[0, 2], 3).unwrap();
        let x = Matrix::identity(2);
        let mut last = f64::INFINITY;
        for scale in [1.0, 10.0, 100.0, 1000.0] {
            let p = SoftmaxParams {
                w: Matrix::from_rows(&[&[scale, 0.0], &[0.0, 0.0], &[0.0, scale]]),
                b: Matrix::zeros(3, 1),
            };
            let j = xent_objective(&p, &x, &t, 0.0).unwrap();
            assert!(j <= last && j >= 0.0, "scale {scale}: {j} after {last}");
            last = j;
        }
        assert_eq!(last, 0.0);
    }

    #[test]
    fn logit_gradient_properties() {
        // prediction equal to target -> zero
        let z = Matrix::column_vector(vec![0.0, 0.0]);
        let t = Matrix::column_vector(vec![0.5, 0.5]);
        assert!(logit_gradient(&z, &t)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));

        let mut rng = RngState::new(3);
        let z = rand_uniform(&mut rng, 4, 6, -3.0, 3.0).unwrap();
        let t = one_hot(&[0, 3, 1, 1, 2, 0], 4).unwrap();
        let g = logit_gradient(&z, &t).unwrap();
        for c in 0..6 {
            assert!(g.column(c).iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn objective_matches_loop_oracle() {
        let mut rng = RngState::new(5);
        let p = SoftmaxParams {
            w: rand_uniform(&mut rng, 3, 4, -1.0, 1.0).unwrap(),
            b: rand_uniform(&mut rng, 3, 1, -1.0, 1.0).unwrap(),
        };
        let x = rand_uniform(&mut rng, 4, 5, -1.0, 1.0).unwrap();
        let labels = [2, 0, 1, 1, 2];
        let t = one_hot(&labels, 3).unwrap();
        let l2 = 0.03;

        let mut total = 0.0;
        for (n, &label) in labels.iter().enumerate() {
            let z: Vec<f64> = (0..3)
                .map(|k| p.b.get(k, 0) + (0..4).map(|i| p.w.get(k, i) * x.get(i, n)).sum::<f64>())
                .collect();
            let denom: f64 = z.iter().map(|v| v.exp()).sum();
            total -= (z[label].exp() / denom).ln();
        }
        let w2: f64 = p.w.data().iter().map(|v| v * v).sum();
        let want = total / 5.0 + l2 / 2.0 * w2;
        assert!((xent_objective(&p, &x, &t, l2).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn separable_toy_trains_to_perfect_accuracy() {
        let mut rng = RngState::new(8);
        let n = 40;
        let mut x = Matrix::zeros(2, n);
        let mut labels = Vec::new();
        for c in 0..n {
            let label = c % 2;
            let a = rng.uniform() * 2.0 - 1.0;
            let b = 0.2 + rng.uniform();
            x.set(0, c, a);
            x.set(1, c, if label == 0 { b } else { -b });
            labels.push(label);
        }
        let t = one_hot(&labels, 2).unwrap();
        let hyp = SoftmaxHyper {
            epochs_max: 200,
            batch_size: 8,
            ..SoftmaxHyper::default()
        };
        let (p, _) = train_softmax(&x, &t, &x, &t, &hyp, &mut RngState::new(1)).unwrap();
        assert_eq!(p.posteriors(&x).unwrap().argmax_columns(), labels);

        let (q, _) = train_softmax(&x, &t, &x, &t, &hyp, &mut RngState::new(1)).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn full_batch_small_step_is_monotone() {
        let mut rng = RngState::new(12);
        let x = rand_uniform(&mut rng, 6, 30, -1.0, 1.0).unwrap();
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let t = one_hot(&labels, 3).unwrap();
        let hyp = SoftmaxHyper {
            epochs_max: 100,
            learning_rate: 0.01,
            momentum: 0.0,
            batch_size: 30,
            ..SoftmaxHyper::default()
        };
        let (_, trace) = train_softmax(&x, &t, &x, &t, &hyp, &mut rng).unwrap();
        let curve: Vec<f64> = trace.records().map(|r| r.train_objective).collect();
        assert!(curve.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn bytes_round_trip() {
        let p = SoftmaxParams::init(4, 3, &mut RngState::new(2)).unwrap();
        assert_eq!(SoftmaxParams::from_bytes(&p.to_bytes()).unwrap(), p);
        assert!(SoftmaxParams::from_bytes(b"DSAE\x01\0\0\0").is_err());
    }

    proptest! {
        #[test]
        fn shift_invariance(v in proptest::collection::vec(-50.0f64..50.0, 4), c in -100.0f64..100.0) {
            let z = Matrix::column_vector(v);
            let a = softmax(&z);
            let b = softmax(&z.map(|x| x + c));
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn columns_normalized_and_argmax_kept(v in proptest::collection::vec(-700.0f64..700.0, 12)) {
            let z = Matrix::new(4, 3, v).unwrap();
            let s = softmax(&z);
            for c in 0..3 {
                prop_assert!((s.column(c).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            prop_assert_eq!(s.argmax_columns(), z.argmax_columns());
        }

        // exp underflows past a gap of ~745, so positivity is only checked below that
        #[test]
        fn entries_positive_for_moderate_gaps(v in proptest::collection::vec(-340.0f64..340.0, 5)) {
            let s = softmax(&Matrix::column_vector(v));
            prop_assert!(s.data().iter().all(|&p| p > 0.0 && p <= 1.0));
        }
    }
}
