//! Experiment configuration (TOML).
//!
//! Every key is optional except `name` and `seed`. Unknown keys anywhere in the
//! file are collected and rejected together, so a typo never silently falls
//! back to a default.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pinn_core::cavity_ref::FdmConfig;
use pinn_core::diagnostics::HISTOGRAM_BINS;
use pinn_core::models::NetworkConfig;
use pinn_core::problems::{Benchmark, DEFAULT_BATCH};
use pinn_core::trainer::{AnnealStatistic, FullBatch, ModelVariant, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    /// Train one network per (sweep value, variant, architecture).
    Train,
    /// Only compute the cavity reference field.
    Fdm,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Mandatory: there is no wall-clock seeding.
    pub seed: u64,
    #[serde(default = "default_kind")]
    pub kind: Kind,
    /// Output directory; `--out` overrides it, `out/<name>` when both are absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub fdm: FdmSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceSection>,
}

fn default_kind() -> Kind {
    Kind::Train
}

/// Benchmark name plus any constants to override, e.g. `a2 = 4.0`.
#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
pub struct ProblemSection {
    pub name: String,
    #[serde(flatten)]
    pub constants: BTreeMap<String, f64>,
}

/// One run per value of a problem constant.
#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
pub struct SweepSection {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(default)]
pub struct ModelSection {
    /// Any of `M1`..`M4`.
    pub variants: Vec<String>,
    /// `[hidden_layers, width]` pairs.
    pub architectures: Vec<[usize; 2]>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { variants: vec!["M1".into()], architectures: vec![[4, 50]] }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(default)]
pub struct TrainSection {
    pub steps: usize,
    pub learning_rate: f64,
    pub decay_rate: f64,
    pub decay_steps: usize,
    pub anneal_alpha: f64,
    pub anneal_period: usize,
    /// `weighted` (`mean|λᵢ∇Lᵢ|` in the weight statistic) or `raw` (`mean|∇Lᵢ|`).
    pub anneal_statistic: String,
    /// Points per term group per step (mini-batch mode).
    pub batch_size: usize,
    /// Train on one fixed draw of the point counts below instead of fresh mini-batches.
    pub full_batch: bool,
    pub collocation_points: usize,
    pub boundary_points: usize,
    pub initial_points: usize,
    pub log_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let fb = FullBatch::default();
        Self {
            steps: 40_000,
            learning_rate: 1e-3,
            decay_rate: 0.9,
            decay_steps: 1000,
            anneal_alpha: 0.9,
            anneal_period: 10,
            anneal_statistic: AnnealStatistic::default().name().into(),
            batch_size: DEFAULT_BATCH,
            full_batch: false,
            collocation_points: fb.collocation,
            boundary_points: fb.boundary,
            initial_points: fb.initial,
            log_every: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(default)]
pub struct DiagnosticsSection {
    /// Per-layer weight-gradient histograms of every loss term.
    pub histograms: bool,
    /// Histogram cadence in steps; 0 means final parameters only.
    pub histogram_every: usize,
    pub histogram_bins: usize,
    /// Top Hessian eigenvalue cadence in steps; 0 disables the trace.
    pub lambda_max_every: usize,
    /// Points per term group for second-order probes and histograms.
    pub probe_points: usize,
    /// Dense Hessian spectrum of every loss term at the final parameters.
    pub spectra: bool,
    /// `max|∇L_r| / max|∇L_ub|` of the last training step, one row per run.
    pub gradient_ratio: bool,
    /// `max|∇L_r| / mean|λ∇L_i|` of the last training step.
    pub balance: bool,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            histograms: false,
            histogram_every: 0,
            histogram_bins: HISTOGRAM_BINS,
            lambda_max_every: 0,
            probe_points: 256,
            spectra: false,
            gradient_ratio: false,
            balance: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(default)]
pub struct FdmSection {
    pub n: usize,
    pub re: f64,
    pub dt: f64,
    pub epsilon: f64,
    pub poisson_tol: f64,
    pub poisson_max_sweeps: usize,
    pub max_iterations: usize,
}

impl Default for FdmSection {
    fn default() -> Self {
        let c = FdmConfig::default();
        Self {
            n: c.n,
            re: c.re,
            dt: c.dt,
            epsilon: c.epsilon,
            poisson_tol: c.poisson_tol,
            poisson_max_sweeps: c.poisson_max_sweeps,
            max_iterations: c.max_iterations,
        }
    }
}

impl FdmSection {
    pub fn to_config(&self) -> FdmConfig {
        FdmConfig {
            n: self.n,
            re: self.re,
            dt: self.dt,
            epsilon: self.epsilon,
            poisson_tol: self.poisson_tol,
            poisson_max_sweeps: self.poisson_max_sweeps,
            max_iterations: self.max_iterations,
        }
    }
}

/// Cavity reference field written by the `fdm` kind. Without it a cavity
/// experiment computes the field itself from `[fdm]`.
#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
pub struct ReferenceSection {
    pub path: PathBuf,
}

/// One training run of an experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct RunPlan {
    /// Directory name under `runs/`, e.g. `a2=4-M1-4x50`.
    pub label: String,
    pub sweep_value: Option<f64>,
    pub train: TrainConfig,
}

impl RunPlan {
    pub fn network(&self) -> NetworkConfig {
        self.train.network()
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let mut unknown = Vec::new();
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
            .map_err(|e| CliError::Config(e.to_string()))?;
        if !unknown.is_empty() {
            return Err(CliError::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// Base benchmark with the configured constants applied.
    pub fn benchmark(&self) -> CliResult<Benchmark> {
        let p = self
            .problem
            .as_ref()
            .ok_or_else(|| CliError::Config("a training experiment needs a [problem] section".into()))?;
        let mut b = Benchmark::by_name(&p.name)?;
        for (k, &v) in &p.constants {
            b = b.with_param(k, v)?;
        }
        Ok(b)
    }

    pub fn is_cavity(&self) -> bool {
        self.problem.as_ref().is_some_and(|p| p.name.starts_with("cavity"))
    }

    /// Expand and check every run without doing any work.
    pub fn plan(&self) -> CliResult<Vec<RunPlan>> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(CliError::Config(format!("experiment name '{}' must be non-empty without path separators", self.name)));
        }
        if self.kind == Kind::Fdm {
            self.fdm.to_config().validate()?;
            return Ok(Vec::new());
        }
        let base = self.benchmark()?;
        let problems: Vec<(Option<f64>, Benchmark)> = match &self.sweep {
            Some(s) if s.values.is_empty() => return Err(CliError::Config("sweep.values is empty".into())),
            Some(s) => s
                .values
                .iter()
                .map(|&v| Ok((Some(v), base.with_param(&s.parameter, v)?)))
                .collect::<CliResult<_>>()?,
            None => vec![(None, base)],
        };
        let statistic = AnnealStatistic::parse(&self.train.anneal_statistic)?;
        let variants = self.model.variants.iter().map(|v| ModelVariant::parse(v)).collect::<pinn_core::Result<Vec<_>>>()?;
        if variants.is_empty() || self.model.architectures.is_empty() {
            return Err(CliError::Config("model.variants and model.architectures must be non-empty".into()));
        }
        let d = &self.diagnostics;
        if d.histograms && (d.histogram_bins == 0 || d.histogram_bins % 2 == 0) {
            return Err(CliError::Config(format!("diagnostics.histogram_bins must be odd, got {}", d.histogram_bins)));
        }
        let needs_probe = d.histograms || d.lambda_max_every > 0 || d.spectra;
        if needs_probe && d.probe_points == 0 {
            return Err(CliError::Config("diagnostics.probe_points must be positive".into()));
        }
        if d.gradient_ratio && !matches!(base, Benchmark::Poisson { .. }) {
            return Err(CliError::Config("diagnostics.gradient_ratio applies to the poisson problem only".into()));
        }
        if self.is_cavity() && self.reference.is_none() {
            self.fdm.to_config().validate()?;
        }

        let mut runs = Vec::new();
        for (value, problem) in &problems {
            for &variant in &variants {
                for &[layers, width] in &self.model.architectures {
                    let t = &self.train;
                    let mut train = TrainConfig::new(*problem, variant, layers, width, t.steps, self.seed);
                    train.learning_rate = t.learning_rate;
                    train.decay_rate = t.decay_rate;
                    train.decay_steps = t.decay_steps;
                    train.anneal_alpha = t.anneal_alpha;
                    train.anneal_period = t.anneal_period;
                    train.anneal_statistic = statistic;
                    train.batch_size = t.batch_size;
                    train.full_batch = t.full_batch.then_some(FullBatch {
                        collocation: t.collocation_points,
                        boundary: t.boundary_points,
                        initial: t.initial_points,
                    });
                    train.log_every = t.log_every;
                    train.snapshot_every = snapshot_cadence(d);
                    train.validate()?;
                    if t.steps == 0 {
                        return Err(CliError::Config("train.steps must be positive".into()));
                    }
                    let net = train.network();
                    if d.spectra && net.param_count() > pinn_core::autodiff::FULL_SPECTRUM_LIMIT {
                        return Err(CliError::Config(format!(
                            "spectra need at most {} parameters, {layers}x{width} has {}",
                            pinn_core::autodiff::FULL_SPECTRUM_LIMIT,
                            net.param_count()
                        )));
                    }
                    let mut label = String::new();
                    if let (Some(v), Some(s)) = (value, &self.sweep) {
                        label.push_str(&format!("{}={v}-", s.parameter));
                    }
                    label.push_str(&format!("{}-{layers}x{width}", variant.name()));
                    runs.push(RunPlan { label, sweep_value: *value, train });
                }
            }
        }
        Ok(runs)
    }
}

/// Snapshot cadence serving both the histogram and the eigenvalue cadence.
fn snapshot_cadence(d: &DiagnosticsSection) -> usize {
    let h = if d.histograms { d.histogram_every } else { 0 };
    match (h, d.lambda_max_every) {
        (0, l) => l,
        (h, 0) => h,
        (mut a, mut b) => {
            while b != 0 {
                (a, b) = (b, a % b);
            }
            a
        }
    }
}
