//! First-order optimizers over the two GCN weight matrices.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::gcn::{GcnGrads, GcnParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" | "gd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

struct Moments {
    m: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl Moments {
    fn zeros_like(w: &DMatrix<f64>) -> Self {
        Moments {
            m: DMatrix::zeros(w.nrows(), w.ncols()),
            v: DMatrix::zeros(w.nrows(), w.ncols()),
        }
    }

    fn update(&mut self, w: &mut DMatrix<f64>, g: &DMatrix<f64>, lr: f64, t: i32) {
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for ((wi, gi), (mi, vi)) in w
            .iter_mut()
            .zip(g.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
            *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *wi -= lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }
}

pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    weight_decay: f64,
    step: i32,
    moments: Option<[Moments; 2]>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, weight_decay: f64, params: &GcnParams) -> Self {
        let moments = (kind == OptimizerKind::Adam)
            .then(|| [Moments::zeros_like(&params.w0), Moments::zeros_like(&params.w1)]);
        Optimizer {
            kind,
            learning_rate,
            weight_decay,
            step: 0,
            moments,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Applies one update in place. Weight decay is added to the gradient
    /// (L2 coupled), not to the reported loss.
    pub fn step(&mut self, params: &mut GcnParams, grads: &GcnGrads) {
        self.step += 1;
        let (g0, g1) = if self.weight_decay > 0.0 {
            (
                &grads.w0 + &params.w0 * self.weight_decay,
                &grads.w1 + &params.w1 * self.weight_decay,
            )
        } else {
            (grads.w0.clone(), grads.w1.clone())
        };
        match self.moments.as_mut() {
            Some([m0, m1]) => {
                m0.update(&mut params.w0, &g0, self.learning_rate, self.step);
                m1.update(&mut params.w1, &g1, self.learning_rate, self.step);
            }
            None => {
                params.w0 -= g0 * self.learning_rate;
                params.w1 -= g1 * self.learning_rate;
            }
        }
    }
}
