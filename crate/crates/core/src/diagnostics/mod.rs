//! Measurement tools: per-layer gradient histograms, Hessian top-eigenvalue
//! traces, dense per-term spectra for small networks and the Poisson
//! gradient-ratio sweep.

use std::fmt::Write as _;

use crate::autodiff::{power_iteration, symmetric_eigenvalues, BlockKind, ParamBlock, FULL_SPECTRUM_LIMIT};
use crate::problems::{Batch, Benchmark};
use crate::rng::{stream_seed, streams, Stream};
use crate::trainer::{train, FinalGradients, GradientMode, LossFunction, TrainConfig};
use crate::{Error, Result};

pub const HISTOGRAM_BINS: usize = 101;
pub const HISTOGRAM_MIN_RANGE: f64 = 1e-3;
pub const HISTOGRAM_PERCENTILE: f64 = 99.5;

pub const POWER_MAX_ITERS: usize = 100;
pub const POWER_TOL: f64 = 1e-3;
pub const TRACE_EVERY: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct GradientHistogram {
    pub step: usize,
    pub term: String,
    /// Position of the weight block among the network's weight blocks.
    pub layer: usize,
    pub block: String,
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// `max(1e-3, 99.5th percentile of |entries|)` (nearest-rank percentile).
pub fn histogram_range(entries: &[f64]) -> f64 {
    if entries.is_empty() {
        return HISTOGRAM_MIN_RANGE;
    }
    let mut mags: Vec<f64> = entries.iter().map(|v| v.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let rank = ((HISTOGRAM_PERCENTILE / 100.0) * mags.len() as f64).ceil() as usize;
    let p = mags[rank.clamp(1, mags.len()) - 1];
    if p.is_finite() {
        p.max(HISTOGRAM_MIN_RANGE)
    } else {
        HISTOGRAM_MIN_RANGE
    }
}

/// Weight entries of every layer binned over `[−range, range]`; values outside
/// the range land in the end bins. Bias blocks and empty blocks are skipped.
pub fn layer_grad_histogram(
    step: usize,
    term: &str,
    gradient: &[f64],
    partition: &[ParamBlock],
    bins: usize,
    range: f64,
) -> Result<Vec<GradientHistogram>> {
    if bins == 0 || bins % 2 == 0 {
        return Err(Error::Domain(format!("histogram needs an odd bin count, got {bins}")));
    }
    if !(range.is_finite() && range > 0.0) {
        return Err(Error::Domain(format!("histogram range must be positive, got {range}")));
    }
    let total: usize = partition.iter().map(ParamBlock::len).sum();
    if total != gradient.len() {
        return Err(Error::Shape(format!("partition covers {total} entries, gradient has {}", gradient.len())));
    }
    let width = 2.0 * range / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| -range + width * i as f64).collect();
    let mut out = Vec::new();
    for (layer, block) in partition.iter().filter(|b| b.kind == BlockKind::Weight).enumerate() {
        if block.is_empty() {
            continue;
        }
        let mut counts = vec![0usize; bins];
        for &g in &gradient[block.range()] {
            if g.is_nan() {
                return Err(Error::Numeric(format!("NaN gradient entry in {}", block.name)));
            }
            let pos = ((g + range) / width).floor();
            let i = if pos < 0.0 { 0 } else { (pos as usize).min(bins - 1) };
            counts[i] += 1;
        }
        out.push(GradientHistogram {
            step,
            term: term.to_string(),
            layer,
            block: block.name.clone(),
            edges: edges.clone(),
            counts,
        });
    }
    Ok(out)
}

/// Histogram CSV: `step,term,layer,bin_left,bin_right,count`.
pub fn histogram_csv(hists: &[GradientHistogram]) -> String {
    let mut s = String::from("step,term,layer,bin_left,bin_right,count\n");
    for h in hists {
        for (i, c) in h.counts.iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{:e},{:e},{}", h.step, h.term, h.layer, h.edges[i], h.edges[i + 1], c);
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct TracePoint {
    pub step: usize,
    /// `None` when the probe failed at this checkpoint.
    pub lambda_max: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct StiffnessTrace {
    pub points: Vec<TracePoint>,
}

impl StiffnessTrace {
    /// Trace CSV: `step,lambda_max`; failed checkpoints are written as `nan`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,lambda_max\n");
        for p in &self.points {
            match p.lambda_max {
                Some(v) => {
                    let _ = writeln!(s, "{},{:e}", p.step, v);
                }
                None => {
                    let _ = writeln!(s, "{},nan", p.step);
                }
            }
        }
        s
    }

    pub fn value_at(&self, step: usize) -> Option<f64> {
        self.points.iter().find(|p| p.step == step).and_then(|p| p.lambda_max)
    }
}

/// Central-difference Hessian-vector product of a gradient map returning
/// several stacked gradients (`outputs × n`) at once.
fn stacked_hvp<G>(grad: &mut G, theta: &[f64], v: &[f64]) -> Result<Vec<Vec<f64>>>
where
    G: FnMut(&[f64]) -> Result<Vec<Vec<f64>>>,
{
    let inf = |x: &[f64]| x.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let eps = f64::EPSILON.sqrt() * (1.0 + inf(theta)) / inf(v);
    let shifted = |sign: f64| -> Vec<f64> { theta.iter().zip(v).map(|(t, d)| t + sign * eps * d).collect() };
    let plus = grad(&shifted(1.0))?;
    let minus = grad(&shifted(-1.0))?;
    Ok(plus
        .iter()
        .zip(&minus)
        .map(|(p, m)| p.iter().zip(m).map(|(a, b)| (a - b) / (2.0 * eps)).collect())
        .collect())
}

/// Top Hessian eigenvalue of the loss behind `grad` at every snapshot. A
/// failure at one snapshot is recorded and the trace continues.
pub fn lambda_max_trace<G>(mut grad: G, snapshots: &[(usize, Vec<f64>)], seed: u64) -> StiffnessTrace
where
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut trace = StiffnessTrace::default();
    let start_seed = stream_seed(seed, streams::POWER_ITERATION);
    for (step, theta) in snapshots {
        let apply = |v: &[f64]| crate::autodiff::hvp(&mut grad, theta, v);
        let point = match power_iteration(apply, theta.len(), POWER_MAX_ITERS, POWER_TOL, start_seed) {
            Ok(p) => TracePoint {
                step: *step,
                lambda_max: Some(p.lambda_max),
                iterations: p.iterations,
                converged: p.converged,
                error: None,
            },
            Err(e) => TracePoint { step: *step, lambda_max: None, iterations: 0, converged: false, error: Some(e.to_string()) },
        };
        trace.points.push(point);
    }
    trace
}

/// Fixed evaluation batches for second-order probes, drawn from the probe stream.
pub fn probe_batches(loss: &LossFunction, seed: u64, size: usize) -> Result<Vec<Batch>> {
    let mut rng = Stream::new(seed, streams::PROBE);
    loss.groups().iter().map(|g| loss.benchmark().sample(g.sampler, size, &mut rng)).collect()
}

/// Gradient map of `Σ L_r + Σ λᵢLᵢ` on fixed batches.
pub fn weighted_loss_gradient<'a>(
    loss: &'a LossFunction,
    batches: &'a [Batch],
    lambdas: &'a [f64],
) -> impl FnMut(&[f64]) -> Result<Vec<f64>> + 'a {
    move |theta| Ok(loss.evaluate(theta, batches, GradientMode::Grouped)?.weighted_gradient(lambdas))
}

/// Ascending Hessian eigenvalues of every output of a stacked gradient map.
pub fn spectra_of<G>(mut grad: G, theta: &[f64], outputs: usize) -> Result<Vec<Vec<f64>>>
where
    G: FnMut(&[f64]) -> Result<Vec<Vec<f64>>>,
{
    let n = theta.len();
    if n > FULL_SPECTRUM_LIMIT {
        return Err(Error::Size(format!("{n} parameters exceed the dense spectrum limit of {FULL_SPECTRUM_LIMIT}")));
    }
    let mut hs = vec![vec![0.0; n * n]; outputs];
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let cols = stacked_hvp(&mut grad, theta, &e)?;
        e[j] = 0.0;
        if cols.len() != outputs || cols.iter().any(|c| c.len() != n) {
            return Err(Error::Shape("gradient map returned the wrong shape".into()));
        }
        for (h, col) in hs.iter_mut().zip(cols) {
            for (i, c) in col.into_iter().enumerate() {
                h[i * n + j] = c;
            }
        }
    }
    hs.into_iter()
        .map(|mut h| {
            for i in 0..n {
                for j in i + 1..n {
                    let s = 0.5 * (h[i * n + j] + h[j * n + i]);
                    h[i * n + j] = s;
                    h[j * n + i] = s;
                }
            }
            symmetric_eigenvalues(h, n)
        })
        .collect()
}

/// Hessian spectrum of every roster term, keyed by term name.
pub fn term_spectra(loss: &LossFunction, theta: &[f64], batches: &[Batch]) -> Result<Vec<(String, Vec<f64>)>> {
    let names: Vec<String> = loss.benchmark().terms().iter().map(|t| t.name.to_string()).collect();
    let grad = |p: &[f64]| -> Result<Vec<Vec<f64>>> {
        Ok(loss.evaluate(p, batches, GradientMode::PerTerm)?.term_grads.expect("per-term mode"))
    };
    let spectra = spectra_of(grad, theta, names.len())?;
    Ok(names.into_iter().zip(spectra).collect())
}

/// Spectrum CSV: `term,index,eigenvalue`.
pub fn spectrum_csv(spectra: &[(String, Vec<f64>)]) -> String {
    let mut s = String::from("term,index,eigenvalue\n");
    for (name, eig) in spectra {
        for (i, v) in eig.iter().enumerate() {
            let _ = writeln!(s, "{name},{i},{v:e}");
        }
    }
    s
}

/// `max|g_r| / mean|λ·g_b|`.
pub fn balance_ratio(residual_grad: &[f64], data_grad: &[f64], lambda: f64) -> f64 {
    let max_r = residual_grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mean = data_grad.iter().map(|g| (lambda * g).abs()).sum::<f64>() / data_grad.len().max(1) as f64;
    max_r / mean
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatioRow {
    pub c: f64,
    pub max_residual: f64,
    pub max_boundary: f64,
    pub ratio: f64,
}

/// Train one Poisson model per `C` (everything else from `base`) and record
/// `max|∇L_r|` and `max|∇L_ub|` of the final step.
pub fn poisson_ratio_experiment(cs: &[f64], base: &TrainConfig) -> Result<Vec<RatioRow>> {
    cs.iter()
        .map(|&c| {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config(format!("C must be positive, got {c}")));
            }
            let mut cfg = base.clone();
            cfg.problem = Benchmark::Poisson { c };
            let report = train(&cfg)?;
            if let Some(f) = &report.failure {
                return Err(Error::Numeric(format!("C = {c}: {f}")));
            }
            let g = report.final_gradients.as_ref().ok_or_else(|| Error::Config("training ran zero steps".into()))?;
            Ok(ratio_row(c, g))
        })
        .collect()
}

/// `max|∇L_r|` against `max|∇L_ub|` (first data term) of one gradient record.
pub fn ratio_row(c: f64, g: &FinalGradients) -> RatioRow {
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let max_residual = max_abs(&g.residual);
    let max_boundary = g.data.first().map_or(0.0, |d| max_abs(d));
    RatioRow { c, max_residual, max_boundary, ratio: max_residual / max_boundary }
}

/// Ratio table CSV: `C,max_grad_r,max_grad_ub,ratio`.
pub fn ratio_csv(rows: &[RatioRow]) -> String {
    let mut s = String::from("C,max_grad_r,max_grad_ub,ratio\n");
    for r in rows {
        let _ = writeln!(s, "{},{:e},{:e},{:e}", r.c, r.max_residual, r.max_boundary, r.ratio);
    }
    s
}
