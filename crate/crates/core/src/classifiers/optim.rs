use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd {
        #[serde(default)]
        momentum: f64,
    },
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerKind {
    pub fn sgd() -> Self {
        OptimizerKind::Sgd { momentum: 0.0 }
    }

    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::adam()
    }
}

/// Optimizer state over one flat parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Self {
        Self {
            kind,
            first: vec![0.0; n_params],
            second: match kind {
                OptimizerKind::Adam { .. } => vec![0.0; n_params],
                OptimizerKind::Sgd { .. } => Vec::new(),
            },
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grads.len());
        self.steps = self.steps.saturating_add(1);
        match self.kind {
            OptimizerKind::Sgd { momentum } => {
                if momentum == 0.0 {
                    for (p, g) in params.iter_mut().zip(grads) {
                        *p -= lr * g;
                    }
                } else {
                    for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.first) {
                        *v = momentum * *v + g;
                        *p -= lr * *v;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.steps);
                let c2 = 1.0 - beta2.powi(self.steps);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
    }
}

/// Halves the learning rate once the monitored metric has gone `patience` consecutive
/// observations without beating its best by more than `threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    lr: f64,
    patience: usize,
    threshold: f64,
    best: f64,
    stale: usize,
}

impl PlateauScheduler {
    pub const DEFAULT_THRESHOLD: f64 = 1e-4;

    /// `baseline` is the metric before the first epoch. `patience == 0` disables decay.
    pub fn new(lr: f64, patience: usize, baseline: f64) -> Self {
        Self {
            lr,
            patience,
            threshold: Self::DEFAULT_THRESHOLD,
            best: baseline,
            stale: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Record an epoch's metric and return the rate for the next epoch.
    pub fn observe(&mut self, metric: f64) -> f64 {
        if metric > self.best + self.threshold {
            self.best = metric;
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.patience > 0 && self.stale >= self.patience {
                self.lr /= 2.0;
                self.stale = 0;
            }
        }
        self.lr
    }
}
