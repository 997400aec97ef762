//! Runs an experiment and writes its artifacts.
//!
//! Layout of the output directory:
//!
//! ```text
//! manifest.json            config echo, output hashes, runtime, metrics
//! results.csv              one row per run
//! reference.csv            cavity FDM field (when computed here)
//! gradient_ratio.csv       poisson gradient ratio (when enabled)
//! balance.csv              gradient balance per data term (when enabled)
//! runs/<label>/checkpoint.txt
//! runs/<label>/trace.csv
//! runs/<label>/histograms.csv, lambda_max.csv, spectra.csv (when enabled)
//! ```
//!
//! A numeric failure in one run is recorded and the remaining runs still
//! execute; the manifest lists every failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use pinn_core::cavity_ref::{run_to_steady_state, FdmSolution};
use pinn_core::diagnostics::{
    balance_ratio, histogram_csv, histogram_range, lambda_max_trace, layer_grad_histogram, probe_batches, ratio_row,
    spectrum_csv, term_spectra, weighted_loss_gradient, GradientHistogram, RatioRow, StiffnessTrace,
};
use pinn_core::models::Checkpoint;
use pinn_core::problems::Benchmark;
use pinn_core::trainer::{evaluate_error, train, GradientMode, LossFunction, Reference, TrainReport};

use crate::config::{ExperimentConfig, Kind, RunPlan};
use crate::error::{CliError, CliResult, EXIT_NUMERIC, EXIT_OK};
use crate::manifest::{hash_outputs, Manifest, OutputDir, MANIFEST_FILE};

/// Everything measured for one run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub plan: RunPlan,
    pub report: TrainReport,
    pub rel_l2: Option<f64>,
    pub lambda_max: Option<StiffnessTrace>,
    pub spectra: Option<Vec<(String, Vec<f64>)>>,
    /// `(data term, max|∇L_r| / mean|λ∇L_i|)` of the last step.
    pub balance: Vec<(String, f64)>,
    pub ratio: Option<RatioRow>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug)]
pub struct FdmSummary {
    pub solution: FdmSolution,
    /// True when the field was computed by this experiment.
    pub computed: bool,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub runs: Vec<RunOutcome>,
    pub fdm: Option<FdmSummary>,
    pub manifest: Manifest,
}

impl ExperimentOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.manifest.failures.is_empty() {
            EXIT_OK
        } else {
            EXIT_NUMERIC
        }
    }

    pub fn run(&self, label: &str) -> Option<&RunOutcome> {
        self.runs.iter().find(|r| r.plan.label == label)
    }
}

/// Run every planned job of `cfg`, writing artifacts under `out`.
///
/// Configuration and I/O problems are errors; numeric failures are reported in
/// the outcome (and its manifest) with all artifacts written so far retained.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> CliResult<ExperimentOutcome> {
    let started = Instant::now();
    let plans = cfg.plan()?;
    let mut dir = OutputDir::create(out)?;
    let mut failures = Vec::new();
    let mut metrics: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();

    let mut fdm = None;
    if cfg.kind == Kind::Fdm || cfg.is_cavity() {
        match reference_field(cfg, &mut dir) {
            Ok(summary) => {
                let s = &summary.solution;
                let mut m = BTreeMap::new();
                m.insert("n".to_string(), s.n as f64);
                m.insert("re".to_string(), s.re);
                m.insert("iterations".to_string(), s.iterations as f64);
                m.insert("psi_min".to_string(), s.psi.values().iter().copied().fold(f64::INFINITY, f64::min));
                metrics.insert("fdm".to_string(), m);
                fdm = Some(summary);
            }
            Err(CliError::Numeric(msg)) => failures.push(format!("fdm: {msg}")),
            Err(e) => return Err(e),
        }
    }

    let mut runs = Vec::new();
    let cavity_without_field = cfg.is_cavity() && fdm.is_none();
    if cfg.kind == Kind::Train && !cavity_without_field {
        let reference = fdm.as_ref().map(|f| f.solution.to_reference());
        for plan in plans {
            eprintln!("[{}] training {} ({} steps)", cfg.name, plan.label, plan.train.steps);
            let outcome = run_one(cfg, plan, reference.as_ref(), &mut dir)?;
            eprintln!(
                "[{}] {}: rel L2 {} in {:.1} s",
                cfg.name,
                outcome.plan.label,
                outcome.rel_l2.map_or("n/a".to_string(), |e| format!("{e:.3e}")),
                outcome.report.seconds
            );
            if let Some(f) = &outcome.failure {
                failures.push(format!("{}: {f}", outcome.plan.label));
            }
            metrics.insert(outcome.plan.label.clone(), run_metrics(&outcome));
            runs.push(outcome);
        }
        if !runs.is_empty() {
            write_summaries(cfg, &runs, &mut dir)?;
        }
    }

    let (outputs, content_hash) = hash_outputs(dir.root(), dir.written())?;
    let manifest = Manifest {
        name: cfg.name.clone(),
        seed: cfg.seed,
        config: serde_json::to_value(cfg).expect("configuration serialises"),
        outputs,
        content_hash,
        runtime_seconds: started.elapsed().as_secs_f64(),
        metrics,
        failures,
    };
    std::fs::write(dir.path(MANIFEST_FILE), manifest.to_json())
        .map_err(|e| crate::manifest::io_error(&dir.path(MANIFEST_FILE), e))?;
    Ok(ExperimentOutcome { runs, fdm, manifest })
}

fn reference_field(cfg: &ExperimentConfig, dir: &mut OutputDir) -> CliResult<FdmSummary> {
    if let (Kind::Train, Some(r)) = (cfg.kind, &cfg.reference) {
        let solution = FdmSolution::read(&r.path)?;
        let re = match cfg.benchmark()? {
            Benchmark::CavityUvp { re } | Benchmark::CavityPsiP { re } => re,
            _ => unreachable!("reference fields are only used by cavity problems"),
        };
        if solution.re != re {
            return Err(CliError::Config(format!(
                "reference {} was computed at Re={}, the problem has Re={re}",
                r.path.display(),
                solution.re
            )));
        }
        return Ok(FdmSummary { solution, computed: false });
    }
    let fc = cfg.fdm.to_config();
    if cfg.kind == Kind::Train {
        let re = match cfg.benchmark()? {
            Benchmark::CavityUvp { re } | Benchmark::CavityPsiP { re } => re,
            _ => unreachable!("reference fields are only used by cavity problems"),
        };
        if fc.re != re {
            return Err(CliError::Config(format!("[fdm] re = {} differs from the problem's Re = {re}", fc.re)));
        }
    }
    eprintln!("[{}] computing FDM reference (N={}, Re={})", cfg.name, fc.n, fc.re);
    let solution = run_to_steady_state(&fc)?;
    dir.write("reference.csv", &solution.to_csv())?;
    Ok(FdmSummary { solution, computed: true })
}

fn run_one(cfg: &ExperimentConfig, plan: RunPlan, reference: Option<&Reference>, dir: &mut OutputDir) -> CliResult<RunOutcome> {
    let base = format!("runs/{}", plan.label);
    let report = train(&plan.train)?;
    let net = plan.network();
    let problem = plan.train.problem;
    let mut failure = report.failure.clone();
    let mut note = |e: CliError, what: &str| -> CliResult<()> {
        match e {
            CliError::Numeric(m) => {
                failure.get_or_insert(format!("{what}: {m}"));
                Ok(())
            }
            other => Err(other),
        }
    };

    let checkpoint = Checkpoint {
        config: net,
        seed: plan.train.seed,
        step: report.steps_completed,
        problem: problem.spec(),
        params: report.final_params.clone(),
    };
    dir.write(&format!("{base}/checkpoint.txt"), &checkpoint.to_text())?;
    dir.write(&format!("{base}/trace.csv"), &report.trace_csv())?;

    let rel_l2 = match evaluate_error(&problem, &net, &report.final_params, reference) {
        Ok(e) => Some(e),
        Err(e) => {
            note(e.into(), "scoring")?;
            None
        }
    };

    let d = &cfg.diagnostics;
    let loss = LossFunction::new(problem, net)?;
    let needs_probe = d.histograms || d.lambda_max_every > 0 || d.spectra;
    let probes = if needs_probe { Some(probe_batches(&loss, plan.train.seed, d.probe_points)?) } else { None };
    let snapshots = |every: usize| -> Vec<(usize, Vec<f64>)> {
        if report.snapshots.is_empty() {
            return vec![(report.steps_completed, report.final_params.clone())];
        }
        let last = report.snapshots.last().map(|s| s.0);
        report
            .snapshots
            .iter()
            .filter(|(s, _)| (every > 0 && s % every == 0) || Some(*s) == last)
            .cloned()
            .collect()
    };

    if d.histograms {
        let probes = probes.as_deref().expect("probe batches drawn");
        match gradient_histograms(&loss, probes, &snapshots(d.histogram_every), d.histogram_bins) {
            Ok(h) => dir.write(&format!("{base}/histograms.csv"), &histogram_csv(&h))?,
            Err(e) => note(e.into(), "histograms")?,
        }
    }

    let mut lambda_max = None;
    if d.lambda_max_every > 0 {
        let probes = probes.as_deref().expect("probe batches drawn");
        let lambdas = report.final_lambdas.clone();
        let grad = weighted_loss_gradient(&loss, probes, &lambdas);
        let trace = lambda_max_trace(grad, &snapshots(d.lambda_max_every), plan.train.seed);
        dir.write(&format!("{base}/lambda_max.csv"), &trace.to_csv())?;
        lambda_max = Some(trace);
    }

    let mut spectra = None;
    if d.spectra {
        let probes = probes.as_deref().expect("probe batches drawn");
        match term_spectra(&loss, &report.final_params, probes) {
            Ok(s) => {
                dir.write(&format!("{base}/spectra.csv"), &spectrum_csv(&s))?;
                spectra = Some(s);
            }
            Err(e) => note(e.into(), "spectra")?,
        }
    }

    let mut balance = Vec::new();
    let mut ratio = None;
    if let Some(g) = &report.final_gradients {
        if d.balance {
            for (i, name) in report.data_term_names.iter().enumerate() {
                balance.push((name.clone(), balance_ratio(&g.residual, &g.data[i], g.lambdas[i])));
            }
        }
        if d.gradient_ratio {
            let c = match (plan.sweep_value, problem) {
                (Some(v), _) => v,
                (None, Benchmark::Poisson { c }) => c,
                _ => f64::NAN,
            };
            ratio = Some(ratio_row(c, g));
        }
    }

    Ok(RunOutcome { plan, report, rel_l2, lambda_max, spectra, balance, ratio, failure })
}

/// Histograms of every term's weight gradient on the probe batches at each snapshot.
fn gradient_histograms(
    loss: &LossFunction,
    probes: &[pinn_core::problems::Batch],
    snapshots: &[(usize, Vec<f64>)],
    bins: usize,
) -> pinn_core::Result<Vec<GradientHistogram>> {
    let partition = loss.network().partition();
    let names: Vec<&str> = loss.benchmark().terms().iter().map(|t| t.name).collect();
    let mut out = Vec::new();
    for (step, theta) in snapshots {
        let eval = loss.evaluate(theta, probes, GradientMode::PerTerm)?;
        for (name, g) in names.iter().zip(eval.term_grads.expect("per-term mode")) {
            let weights: Vec<f64> = partition
                .iter()
                .filter(|b| b.kind == pinn_core::autodiff::BlockKind::Weight)
                .flat_map(|b| g[b.range()].iter().copied())
                .collect();
            out.extend(layer_grad_histogram(*step, name, &g, &partition, bins, histogram_range(&weights))?);
        }
    }
    Ok(out)
}

fn run_metrics(r: &RunOutcome) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    m.insert("steps_completed".to_string(), r.report.steps_completed as f64);
    if let Some(e) = r.rel_l2 {
        m.insert("rel_l2".to_string(), e);
    }
    if let Some(row) = r.report.trace.last() {
        m.insert("final_loss".to_string(), row.total);
    }
    for (name, l) in r.report.data_term_names.iter().zip(&r.report.final_lambdas) {
        m.insert(format!("lambda_{name}"), *l);
    }
    for (name, b) in &r.balance {
        m.insert(format!("balance_{name}"), *b);
    }
    if let Some(v) = r.lambda_max.as_ref().and_then(|t| t.points.last()).and_then(|p| p.lambda_max) {
        m.insert("lambda_max_final".to_string(), v);
    }
    if let Some(s) = &r.spectra {
        for (name, eig) in s {
            if let Some(top) = eig.last() {
                m.insert(format!("eig_max_{name}"), *top);
            }
        }
    }
    if let Some(row) = &r.ratio {
        m.insert("gradient_ratio".to_string(), row.ratio);
    }
    m.retain(|_, v| v.is_finite());
    m
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_summaries(cfg: &ExperimentConfig, runs: &[RunOutcome], dir: &mut OutputDir) -> CliResult<()> {
    let data_terms = &runs[0].report.data_term_names;
    let mut s = String::from("label,problem,variant,hidden_layers,width,steps_completed,rel_l2");
    for t in data_terms {
        let _ = write!(s, ",lambda_{t}");
    }
    s.push_str(",status\n");
    for r in runs {
        let t = &r.plan.train;
        let _ = write!(
            s,
            "{},{},{},{},{},{},{}",
            r.plan.label,
            csv_field(&t.problem.spec()),
            t.variant.name(),
            t.hidden_layers,
            t.width,
            r.report.steps_completed,
            r.rel_l2.map_or("nan".to_string(), |e| format!("{e:e}"))
        );
        for l in &r.report.final_lambdas {
            let _ = write!(s, ",{l:e}");
        }
        let _ = writeln!(s, ",{}", if r.failure.is_some() { "failed" } else { "ok" });
    }
    dir.write("results.csv", &s)?;

    if cfg.diagnostics.gradient_ratio {
        let mut s = String::from("label,C,max_grad_r,max_grad_ub,ratio\n");
        for r in runs {
            if let Some(row) = &r.ratio {
                let _ = writeln!(s, "{},{},{:e},{:e},{:e}", r.plan.label, row.c, row.max_residual, row.max_boundary, row.ratio);
            }
        }
        dir.write("gradient_ratio.csv", &s)?;
    }
    if cfg.diagnostics.balance {
        let mut s = String::from("label,term,lambda,balance\n");
        for r in runs {
            for ((name, b), l) in r.balance.iter().zip(&r.report.final_lambdas) {
                let _ = writeln!(s, "{},{name},{l:e},{b:e}", r.plan.label);
            }
        }
        dir.write("balance.csv", &s)?;
    }
    Ok(())
}
