//! Mini-batch gradient descent with momentum and best-epoch selection,
//! shared by every trainable stage.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, RngState};

/// A bundle of parameter matrices that can be updated in lockstep with a
/// gradient of the same type.
pub trait ParamSet: Clone {
    fn tensors(&self) -> Vec<&Matrix>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        z
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data().len()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl SgdOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Param(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Param(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Param("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_objective: f64,
    pub val_objective: f64,
}

/// Objective curves of one training run. `initial` is the state before any
/// update (epoch 0); `epochs` holds one record per completed epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainTrace {
    pub initial: EpochRecord,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (0 means the initial parameters).
    pub best_epoch: usize,
}

pub const TRACE_HEADER: &str = "epoch,train_objective,val_objective";

impl TrainTrace {
    pub fn records(&self) -> impl Iterator<Item = &EpochRecord> {
        std::iter::once(&self.initial).chain(self.epochs.iter())
    }

    pub fn best(&self) -> &EpochRecord {
        self.records()
            .find(|r| r.epoch == self.best_epoch)
            .unwrap_or(&self.initial)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for r in self.records() {
            let _ = writeln!(out, "{},{},{}", r.epoch, r.train_objective, r.val_objective);
        }
        out
    }

    /// Parses the CSV written by [`TrainTrace::to_csv`]. The best epoch is
    /// taken to be the one with the lowest validation objective.
    pub fn from_csv(text: &str) -> Result<TrainTrace> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == TRACE_HEADER => {}
            other => {
                return Err(Error::Format(format!(
                    "trace header should be `{TRACE_HEADER}`, got {other:?}"
                )))
            }
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::Format(format!("trace row {}: `{line}`", i + 1));
            if fields.len() != 3 {
                return Err(bad());
            }
            let epoch: usize = fields[0].parse().map_err(|_| bad())?;
            if epoch != i {
                return Err(bad());
            }
            records.push(EpochRecord {
                epoch,
                train_objective: fields[1].parse().map_err(|_| bad())?,
                val_objective: fields[2].parse().map_err(|_| bad())?,
            });
        }
        if records.is_empty() {
            return Err(Error::Format("trace has no rows".into()));
        }
        let best_epoch = records
            .iter()
            .fold(&records[0], |b, r| {
                if r.val_objective < b.val_objective {
                    r
                } else {
                    b
                }
            })
            .epoch;
        let initial = records.remove(0);
        Ok(TrainTrace {
            initial,
            epochs: records,
            best_epoch,
        })
    }
}

/// Result of evaluating a parameter set at the end of an epoch. Scores
/// compare lexicographically, lower is better; ties keep the earlier epoch.
#[derive(Clone, Copy, Debug)]
pub struct Evaluation {
    pub train_objective: f64,
    pub val_objective: f64,
    pub score: [f64; 2],
}

impl Evaluation {
    /// Selection by validation objective.
    pub fn by_validation(train_objective: f64, val_objective: f64) -> Self {
        Evaluation {
            train_objective,
            val_objective,
            score: [val_objective, 0.0],
        }
    }
}

/// Runs momentum descent over `n_samples` training columns.
///
/// `gradient` receives the current parameters and the column indices of one
/// mini-batch; `evaluate` is called once before training and after every
/// epoch. The parameters with the lowest evaluation score are returned.
pub fn descend<P: ParamSet>(
    stage: &str,
    init: P,
    n_samples: usize,
    opts: &SgdOptions,
    rng: &mut RngState,
    mut gradient: impl FnMut(&P, &[usize]) -> Result<P>,
    mut evaluate: impl FnMut(&P) -> Result<Evaluation>,
) -> Result<(P, TrainTrace)> {
    opts.validate()?;
    if n_samples == 0 {
        return Err(Error::Param(format!("{stage}: no training samples")));
    }
    let diverged = |epoch| Error::Divergence {
        stage: stage.to_string(),
        epoch,
        learning_rate: opts.learning_rate,
    };

    let first = evaluate(&init)?;
    if !(first.train_objective.is_finite() && first.val_objective.is_finite()) {
        return Err(diverged(0));
    }
    let record = |epoch, e: &Evaluation| EpochRecord {
        epoch,
        train_objective: e.train_objective,
        val_objective: e.val_objective,
    };
    let mut trace = TrainTrace {
        initial: record(0, &first),
        epochs: Vec::with_capacity(opts.epochs),
        best_epoch: 0,
    };
    let mut best_score = first.score;
    let mut best = init.clone();
    let mut params = init;
    let mut velocity = params.zeros_like();
    let mut order: Vec<usize> = (0..n_samples).collect();

    for epoch in 1..=opts.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(opts.batch_size) {
            let grad = gradient(&params, batch)?;
            for ((p, v), g) in params
                .tensors_mut()
                .into_iter()
                .zip(velocity.tensors_mut())
                .zip(grad.tensors())
            {
                for ((pv, vv), &gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                    *vv = opts.momentum * *vv - opts.learning_rate * gv;
                    *pv += *vv;
                }
            }
        }
        if !params.is_finite() {
            return Err(diverged(epoch));
        }
        let eval = evaluate(&params)?;
        if !(eval.train_objective.is_finite() && eval.val_objective.is_finite()) {
            return Err(diverged(epoch));
        }
        trace.epochs.push(record(epoch, &eval));
        if eval.score < best_score {
            best_score = eval.score;
            best = params.clone();
            trace.best_epoch = epoch;
        }
    }
    Ok((best, trace))
}
