use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Bias-corrected Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One Adam update of `theta` in place. A non-finite gradient aborts the step
/// and leaves both `theta` and the state untouched.
pub fn adam_step(theta: &mut [f64], grad: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if theta.len() != grad.len() || state.m.len() != grad.len() {
        return Err(Error::Shape(format!(
            "adam: theta {}, gradient {}, state {}",
            theta.len(),
            grad.len(),
            state.m.len()
        )));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient entry {i}")));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for ((p, &g), (m, v)) in theta.iter_mut().zip(grad).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// Staircase exponential decay `base · rate^⌊step / decay_steps⌋`.
pub fn lr_schedule(step: usize, base: f64, decay_rate: f64, decay_steps: usize) -> f64 {
    base * decay_rate.powi((step / decay_steps.max(1)) as i32)
}

/// Per-data-term loss weights driven by gradient statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnealingState {
    pub lambdas: Vec<f64>,
    pub alpha: f64,
    pub period: usize,
    pub statistic: AnnealStatistic,
}

/// Which data-term gradient enters the denominator of `λ̂ᵢ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AnnealStatistic {
    /// `mean|λᵢ∇Lᵢ|`, the term as it enters the loss. The weight then settles
    /// near `√(max|∇L_r| / mean|∇Lᵢ|)`.
    #[default]
    Weighted,
    /// `mean|∇Lᵢ|`. Diverges once a data term is fitted exactly, for example a
    /// zero boundary condition met by `u ≡ 0`.
    Raw,
}

impl AnnealStatistic {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(Self::Weighted),
            "raw" => Ok(Self::Raw),
            other => Err(Error::Config(format!("unknown annealing statistic '{other}' (weighted or raw)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Weighted => "weighted",
            Self::Raw => "raw",
        }
    }
}

/// Below this mean gradient magnitude a term keeps its previous weight.
pub const ANNEAL_MEAN_FLOOR: f64 = 1e-12;

impl AnnealingState {
    pub fn new(terms: usize, alpha: f64, period: usize) -> Self {
        Self { lambdas: vec![1.0; terms], alpha, period, statistic: AnnealStatistic::default() }
    }

    pub fn with_statistic(self, statistic: AnnealStatistic) -> Self {
        Self { statistic, ..self }
    }

    pub fn is_update_step(&self, step: usize) -> bool {
        self.period > 0 && step % self.period == 0
    }

    /// `λ̂ᵢ = max|∇L_r| / mean|λᵢ∇Lᵢ|` (or `mean|∇Lᵢ|` for [`AnnealStatistic::Raw`]),
    /// then `λᵢ ← (1−α)λᵢ + αλ̂ᵢ`.
    pub fn update(&mut self, residual_grad: &[f64], term_grads: &[Vec<f64>]) -> Result<()> {
        if term_grads.len() != self.lambdas.len() {
            return Err(Error::Shape(format!("{} weights but {} term gradients", self.lambdas.len(), term_grads.len())));
        }
        let max_r = residual_grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if !max_r.is_finite() {
            return Err(Error::Numeric("residual gradient is not finite".into()));
        }
        for (lambda, g) in self.lambdas.iter_mut().zip(term_grads) {
            let mean = g.iter().map(|v| v.abs()).sum::<f64>() / g.len().max(1) as f64;
            if !mean.is_finite() {
                return Err(Error::Numeric("term gradient is not finite".into()));
            }
            if mean < ANNEAL_MEAN_FLOOR {
                continue;
            }
            let hat = match self.statistic {
                AnnealStatistic::Weighted => max_r / (mean * *lambda),
                AnnealStatistic::Raw => max_r / mean,
            };
            *lambda = (1.0 - self.alpha) * *lambda + self.alpha * hat;
        }
        Ok(())
    }
}
