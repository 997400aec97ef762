//! Composite-loss training: Adam with a staircase learning-rate decay and
//! optional gradient-statistics loss weighting.
//!
//! The four model variants combine two switches:
//!
//! | variant | architecture | loss weighting |
//! |---------|--------------|----------------|
//! | M1      | plain        | fixed (all 1)  |
//! | M2      | plain        | annealed       |
//! | M3      | improved     | fixed          |
//! | M4      | improved     | annealed       |
//!
//! Residual terms always carry weight 1; each data term carries its own weight.

mod loss;
mod optim;

pub use loss::{GradientMode, LossEvaluation, LossFunction};
pub use optim::{
    adam_step, lr_schedule, AdamState, AnnealStatistic, AnnealingState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, ANNEAL_MEAN_FLOOR,
};

use std::time::Instant;

use ndarray::{Array2, ArrayView2};

use crate::models::{glorot_init, Architecture, NetworkConfig};
use crate::problems::{evaluation_grid, Batch, Benchmark, SamplerKind};
use crate::rng::Stream;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelVariant {
    M1,
    M2,
    M3,
    M4,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [ModelVariant::M1, ModelVariant::M2, ModelVariant::M3, ModelVariant::M4];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "M1" | "m1" => Ok(ModelVariant::M1),
            "M2" | "m2" => Ok(ModelVariant::M2),
            "M3" | "m3" => Ok(ModelVariant::M3),
            "M4" | "m4" => Ok(ModelVariant::M4),
            other => Err(Error::Config(format!("unknown model variant '{other}' (expected M1..M4)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::M1 => "M1",
            ModelVariant::M2 => "M2",
            ModelVariant::M3 => "M3",
            ModelVariant::M4 => "M4",
        }
    }

    pub fn architecture(self) -> Architecture {
        match self {
            ModelVariant::M1 | ModelVariant::M2 => Architecture::Plain,
            ModelVariant::M3 | ModelVariant::M4 => Architecture::Improved,
        }
    }

    pub fn anneals(self) -> bool {
        matches!(self, ModelVariant::M2 | ModelVariant::M4)
    }
}

/// Fixed point sets used instead of per-step resampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FullBatch {
    pub collocation: usize,
    pub boundary: usize,
    pub initial: usize,
}

impl Default for FullBatch {
    fn default() -> Self {
        Self { collocation: 10_000, boundary: 400, initial: 400 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub problem: Benchmark,
    pub variant: ModelVariant,
    pub hidden_layers: usize,
    pub width: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub decay_rate: f64,
    pub decay_steps: usize,
    pub anneal_alpha: f64,
    pub anneal_period: usize,
    pub anneal_statistic: AnnealStatistic,
    /// Points per term group per step.
    pub batch_size: usize,
    pub full_batch: Option<FullBatch>,
    pub seed: u64,
    /// Loss-trace cadence in steps; the last step is always logged.
    pub log_every: usize,
    /// Parameter-snapshot cadence in steps (0 disables); the final parameters are always kept.
    pub snapshot_every: usize,
}

impl TrainConfig {
    pub fn new(problem: Benchmark, variant: ModelVariant, hidden_layers: usize, width: usize, steps: usize, seed: u64) -> Self {
        Self {
            problem,
            variant,
            hidden_layers,
            width,
            steps,
            learning_rate: 1e-3,
            decay_rate: 0.9,
            decay_steps: 1000,
            anneal_alpha: 0.9,
            anneal_period: 10,
            anneal_statistic: AnnealStatistic::Weighted,
            batch_size: crate::problems::DEFAULT_BATCH,
            full_batch: None,
            seed,
            log_every: 100,
            snapshot_every: 0,
        }
    }

    pub fn network(&self) -> NetworkConfig {
        NetworkConfig {
            architecture: self.variant.architecture(),
            input_dim: self.problem.input_dim(),
            output_dim: self.problem.output_dim(),
            hidden_layers: self.hidden_layers,
            width: self.width,
            jet_order: self.problem.jet_order(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        self.network().validate()?;
        let positive = [self.learning_rate, self.decay_rate];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("learning rate and decay rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.anneal_alpha) {
            return Err(Error::Config(format!("annealing alpha {} outside [0, 1]", self.anneal_alpha)));
        }
        if self.batch_size == 0 || self.decay_steps == 0 || self.log_every == 0 {
            return Err(Error::Config("batch size, decay steps and log cadence must be positive".into()));
        }
        if self.variant.anneals() && self.anneal_period == 0 {
            return Err(Error::Config("annealing period must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub lr: f64,
    /// `Σ L_r + Σ λᵢLᵢ` with the weights used for this step.
    pub total: f64,
    pub terms: Vec<f64>,
    pub lambdas: Vec<f64>,
}

/// Unweighted gradients of the last step's batch.
#[derive(Clone, Debug, PartialEq)]
pub struct FinalGradients {
    pub step: usize,
    pub residual: Vec<f64>,
    pub data: Vec<Vec<f64>>,
    pub lambdas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub term_names: Vec<String>,
    pub data_term_names: Vec<String>,
    pub trace: Vec<TraceRow>,
    /// `(step, θ)` before the update of `step`.
    pub snapshots: Vec<(usize, Vec<f64>)>,
    pub final_params: Vec<f64>,
    pub final_gradients: Option<FinalGradients>,
    pub final_lambdas: Vec<f64>,
    pub steps_completed: usize,
    pub seconds: f64,
    /// Set when training stopped early; everything above covers the completed steps.
    pub failure: Option<String>,
}

impl TrainReport {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    /// Loss trace as CSV: `step,lr,L_total,<term values>,<lambda_i>`.
    pub fn trace_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::from("step,lr,L_total");
        for t in &self.term_names {
            let _ = write!(s, ",L_{t}");
        }
        for t in &self.data_term_names {
            let _ = write!(s, ",lambda_{t}");
        }
        s.push('\n');
        for row in &self.trace {
            let _ = write!(s, "{},{:e},{:e}", row.step, row.lr, row.total);
            for v in row.terms.iter().chain(&row.lambdas) {
                let _ = write!(s, ",{v:e}");
            }
            s.push('\n');
        }
        s
    }
}

/// Draws the batches of every term group from its own stream.
pub struct BatchSource {
    benchmark: Benchmark,
    kinds: Vec<SamplerKind>,
    streams: Vec<Stream>,
    batch_size: usize,
    fixed: Option<Vec<Batch>>,
}

impl BatchSource {
    pub fn new(loss: &LossFunction, seed: u64, batch_size: usize, full_batch: Option<FullBatch>) -> Result<Self> {
        let benchmark = *loss.benchmark();
        let kinds: Vec<SamplerKind> = loss.groups().iter().map(|g| g.sampler).collect();
        let mut streams: Vec<Stream> = kinds.iter().map(|k| Stream::new(seed, k.stream_name())).collect();
        let fixed = match full_batch {
            Some(fb) => Some(
                kinds
                    .iter()
                    .zip(streams.iter_mut())
                    .map(|(&k, s)| {
                        let n = match k {
                            SamplerKind::Collocation => fb.collocation,
                            SamplerKind::Boundary => fb.boundary,
                            SamplerKind::Initial => fb.initial,
                        };
                        benchmark.sample(k, n, s)
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        Ok(Self { benchmark, kinds, streams, batch_size, fixed })
    }

    pub fn next_batches(&mut self) -> Result<Vec<Batch>> {
        if let Some(f) = &self.fixed {
            return Ok(f.clone());
        }
        self.kinds
            .iter()
            .zip(self.streams.iter_mut())
            .map(|(&k, s)| self.benchmark.sample(k, self.batch_size, s))
            .collect()
    }
}

/// Comparison field for scoring: solution components at points.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub points: Array2<f64>,
    pub values: Array2<f64>,
}

/// `‖pred − exact‖₂ / ‖exact‖₂` over every entry.
pub fn relative_l2_error(pred: ArrayView2<'_, f64>, exact: ArrayView2<'_, f64>) -> Result<f64> {
    if pred.dim() != exact.dim() {
        return Err(Error::Shape(format!("prediction {:?} vs reference {:?}", pred.dim(), exact.dim())));
    }
    let num: f64 = pred.iter().zip(exact.iter()).map(|(p, e)| (p - e) * (p - e)).sum();
    let den: f64 = exact.iter().map(|e| e * e).sum();
    if den == 0.0 {
        return Err(Error::Domain("reference field has zero norm".into()));
    }
    Ok((num / den).sqrt())
}

/// Relative L² error of a network against the benchmark's exact solution on
/// the evaluation grid, or against `reference` when given.
pub fn evaluate_error(
    problem: &Benchmark,
    net: &NetworkConfig,
    params: &[f64],
    reference: Option<&Reference>,
) -> Result<f64> {
    match reference {
        Some(r) => {
            let pred = problem.predict_solution(net, params, r.points.view())?;
            relative_l2_error(pred.view(), r.values.view())
        }
        None => {
            let grid = evaluation_grid(problem);
            let exact = problem.exact_solution(grid.view()).ok_or_else(|| {
                Error::Config(format!("{} has no closed-form solution; a reference field is required", problem.name()))
            })?;
            let pred = problem.predict_solution(net, params, grid.view())?;
            relative_l2_error(pred.view(), exact.view())
        }
    }
}

/// Run the configured optimisation. Configuration problems are errors; a
/// numeric failure mid-run yields a partial report with `failure` set.
pub fn train(config: &TrainConfig) -> Result<TrainReport> {
    train_from(config, None)
}

/// As [`train`], starting from `initial` parameters instead of a fresh draw.
pub fn train_from(config: &TrainConfig, initial: Option<Vec<f64>>) -> Result<TrainReport> {
    config.validate()?;
    let started = Instant::now();
    let net = config.network();
    let loss = LossFunction::new(config.problem, net)?;
    let mut theta = match initial {
        Some(p) if p.len() == net.param_count() => p,
        Some(p) => {
            return Err(Error::Shape(format!("initial parameters: expected {}, got {}", net.param_count(), p.len())))
        }
        None => glorot_init(config.seed, &net)?.into_values(),
    };
    let mut source = BatchSource::new(&loss, config.seed, config.batch_size, config.full_batch)?;
    let data_terms = loss.data_terms();
    let terms = config.problem.terms();
    let mut anneal = AnnealingState::new(data_terms.len(), config.anneal_alpha, config.anneal_period)
        .with_statistic(config.anneal_statistic);
    let mut adam = AdamState::new(theta.len());
    let mut report = TrainReport {
        term_names: terms.iter().map(|t| t.name.to_string()).collect(),
        data_term_names: data_terms.iter().map(|&t| terms[t].name.to_string()).collect(),
        trace: Vec::new(),
        snapshots: Vec::new(),
        final_params: Vec::new(),
        final_gradients: None,
        final_lambdas: Vec::new(),
        steps_completed: 0,
        seconds: 0.0,
        failure: None,
    };

    for step in 0..config.steps {
        if config.snapshot_every > 0 && step % config.snapshot_every == 0 {
            report.snapshots.push((step, theta.clone()));
        }
        let outcome = (|| -> Result<()> {
            let batches = source.next_batches()?;
            let eval = loss.evaluate(&theta, &batches, GradientMode::Grouped)?;
            if config.variant.anneals() && anneal.is_update_step(step) {
                anneal.update(&eval.residual_grad, &eval.data_grads)?;
            }
            let lambdas = &anneal.lambdas;
            let lr = lr_schedule(step, config.learning_rate, config.decay_rate, config.decay_steps);
            let last = step + 1 == config.steps;
            if step % config.log_every == 0 || last {
                let mut total = 0.0;
                let mut li = 0;
                for (t, v) in eval.term_values.iter().enumerate() {
                    if data_terms.contains(&t) {
                        total += lambdas[li] * v;
                        li += 1;
                    } else {
                        total += v;
                    }
                }
                report.trace.push(TraceRow { step, lr, total, terms: eval.term_values.clone(), lambdas: lambdas.clone() });
            }
            let g = eval.weighted_gradient(lambdas);
            if last {
                report.final_gradients = Some(FinalGradients {
                    step,
                    residual: eval.residual_grad,
                    data: eval.data_grads,
                    lambdas: lambdas.clone(),
                });
            }
            adam_step(&mut theta, &g, &mut adam, lr)
        })();
        if let Err(e) = outcome {
            report.failure = Some(format!("step {step}: {e}"));
            break;
        }
        report.steps_completed = step + 1;
    }
    if config.snapshot_every > 0 && report.failure.is_none() {
        report.snapshots.push((config.steps, theta.clone()));
    }
    report.final_lambdas = anneal.lambdas.clone();
    report.final_params = theta;
    report.seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_examples() {
        let e = Array2::from_shape_vec((2, 1), vec![1.0, 2.0]).unwrap();
        assert_eq!(relative_l2_error(e.view(), e.view()).unwrap(), 0.0);
        let twice = &e * 2.0;
        assert!((relative_l2_error(twice.view(), e.view()).unwrap() - 1.0).abs() < 1e-15);
        let p = Array2::from_shape_vec((1, 2), vec![1.0, 0.0]).unwrap();
        let q = Array2::from_shape_vec((1, 2), vec![0.0, 1.0]).unwrap();
        assert!((relative_l2_error(p.view(), q.view()).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let z = Array2::zeros((1, 2));
        assert!(matches!(relative_l2_error(p.view(), z.view()), Err(Error::Domain(_))));
    }

    #[test]
    fn variants_map_to_switches() {
        assert_eq!(ModelVariant::M3.architecture(), Architecture::Improved);
        assert!(ModelVariant::M2.anneals() && !ModelVariant::M3.anneals());
        assert_eq!(ModelVariant::parse("M4").unwrap(), ModelVariant::M4);
        assert!(ModelVariant::parse("M5").is_err());
    }

    #[test]
    fn short_run_is_deterministic_and_logs_cadence() {
        let mut cfg = TrainConfig::new(Benchmark::by_name("poisson").unwrap(), ModelVariant::M2, 2, 8, 25, 4);
        cfg.log_every = 10;
        cfg.snapshot_every = 10;
        let a = train(&cfg).unwrap();
        let b = train(&cfg).unwrap();
        assert!(a.is_complete());
        assert_eq!(a.trace.iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 10, 20, 24]);
        assert_eq!(a.snapshots.iter().map(|s| s.0).collect::<Vec<_>>(), vec![0, 10, 20, 25]);
        assert_eq!(a.trace_csv(), b.trace_csv());
        assert!(a.final_params.iter().zip(&b.final_params).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.trace_csv().starts_with("step,lr,L_total,L_r,L_u_b,lambda_u_b\n"));
    }
}
