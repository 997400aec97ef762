use ndarray::Array2;

use crate::autodiff::{pairwise_sum, Jet, Scalar, Tape};
use crate::models::{backward_batch, forward_batch_mapped, NetworkConfig};
use crate::problems::{Batch, Benchmark, TermGroup, TermRole};
use crate::{Error, Result};

/// How parameter gradients are split across loss terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientMode {
    /// One backward sweep per roster term.
    PerTerm,
    /// One backward sweep for the sum of all residual terms, one per data term.
    Grouped,
}

/// Term values and unweighted gradients at one parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LossEvaluation {
    /// Mean-squared value of every roster term.
    pub term_values: Vec<f64>,
    /// Gradient of the sum of the residual terms.
    pub residual_grad: Vec<f64>,
    /// Gradient of each data term, in roster order.
    pub data_grads: Vec<Vec<f64>>,
    /// Gradient of every roster term (per-term mode only).
    pub term_grads: Option<Vec<Vec<f64>>>,
}

impl LossEvaluation {
    /// `∇L_r + Σ λᵢ∇Lᵢ`, accumulated in roster order.
    pub fn weighted_gradient(&self, lambdas: &[f64]) -> Vec<f64> {
        let mut g = self.residual_grad.clone();
        for (gi, &l) in self.data_grads.iter().zip(lambdas) {
            g.iter_mut().zip(gi).for_each(|(a, b)| *a += l * b);
        }
        g
    }
}

/// Composite physics-informed loss of one benchmark and network.
#[derive(Clone, Debug)]
pub struct LossFunction {
    benchmark: Benchmark,
    net: NetworkConfig,
    groups: Vec<TermGroup>,
}

struct TermPass {
    value: f64,
    adjoint: Array2<f64>,
}

impl LossFunction {
    pub fn new(benchmark: Benchmark, net: NetworkConfig) -> Result<Self> {
        benchmark.validate()?;
        net.validate()?;
        if net.input_dim != benchmark.input_dim() || net.output_dim != benchmark.output_dim() {
            return Err(Error::Config(format!(
                "{} needs a {}→{} network, got {}→{}",
                benchmark.name(),
                benchmark.input_dim(),
                benchmark.output_dim(),
                net.input_dim,
                net.output_dim
            )));
        }
        if net.jet_order < benchmark.jet_order() {
            return Err(Error::Config(format!("{} needs jets of order {}", benchmark.name(), benchmark.jet_order())));
        }
        Ok(Self { groups: benchmark.groups(), benchmark, net })
    }

    pub fn benchmark(&self) -> &Benchmark {
        &self.benchmark
    }

    pub fn network(&self) -> &NetworkConfig {
        &self.net
    }

    pub fn groups(&self) -> &[TermGroup] {
        &self.groups
    }

    pub fn term_count(&self) -> usize {
        self.benchmark.terms().len()
    }

    pub fn data_terms(&self) -> Vec<usize> {
        let terms = self.benchmark.terms();
        (0..terms.len()).filter(|&i| terms[i].role == TermRole::Data).collect()
    }

    fn check_batches(&self, batches: &[Batch]) -> Result<()> {
        if batches.len() != self.groups.len() || batches.iter().zip(&self.groups).any(|(b, g)| b.kind != g.sampler) {
            return Err(Error::Contract("batches must follow the benchmark's term groups".into()));
        }
        Ok(())
    }

    /// Value of one term and the adjoint of its loss w.r.t. the output jets.
    fn term_pass(&self, term: usize, batch: &Batch, out: &crate::models::JetBatch) -> Result<TermPass> {
        let layout = out.layout();
        let (k, b, o) = (layout.len(), out.batch(), out.features());
        let mut adjoint = Array2::zeros((k * b, o));
        let mut contributions = Vec::with_capacity(b);
        let scale = 1.0 / b as f64;
        for i in 0..b {
            let tape = Tape::with_capacity(64 + 8 * k * o);
            let mut coeffs = Vec::with_capacity(k * o);
            for f in 0..o {
                for s in 0..k {
                    coeffs.push(tape.parameter(out.coeff(s, i, f)));
                }
            }
            let jets: Vec<Jet<_>> = coeffs.chunks(k).map(|c| Jet::from_coeffs(layout, c)).collect::<Result<_>>()?;
            let mut r = Vec::new();
            let x = batch.points.row(i);
            let target = batch.targets.row(i);
            self.benchmark.term_mismatch(
                term,
                x.as_slice().expect("row-major batch"),
                target.as_slice().unwrap_or(&[]),
                &jets,
                &mut r,
            )?;
            let m = r.len() as f64;
            contributions.push(r.iter().map(|v| v.value() * v.value()).sum::<f64>() / m);
            let seeds: Vec<_> = r.iter().map(|v| (v.id(), 2.0 * v.value() * scale / m)).collect();
            let g = tape.backward_seeded(&seeds)?;
            for f in 0..o {
                for s in 0..k {
                    adjoint[[s * b + i, f]] = g[f * k + s];
                }
            }
        }
        let value = pairwise_sum(&contributions) * scale;
        if !value.is_finite() {
            return Err(Error::Numeric(format!("term {} produced a non-finite loss", self.benchmark.terms()[term].name)));
        }
        Ok(TermPass { value, adjoint })
    }

    /// Term values only (forward sweeps, no gradients).
    pub fn values(&self, theta: &[f64], batches: &[Batch]) -> Result<Vec<f64>> {
        self.check_batches(batches)?;
        let mut values = vec![0.0; self.term_count()];
        for (group, batch) in self.groups.iter().zip(batches) {
            let fwd = forward_batch_mapped(&self.net, theta, batch.points.view(), group.order, &self.benchmark.input_map())?;
            for &t in &group.terms {
                values[t] = self.term_pass(t, batch, fwd.output())?.value;
            }
        }
        Ok(values)
    }

    pub fn evaluate(&self, theta: &[f64], batches: &[Batch], mode: GradientMode) -> Result<LossEvaluation> {
        self.check_batches(batches)?;
        let terms = self.benchmark.terms();
        let n = theta.len();
        let mut values = vec![0.0; terms.len()];
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; terms.len()];
        let mut residual_grad: Option<Vec<f64>> = None;
        for (group, batch) in self.groups.iter().zip(batches) {
            let fwd = forward_batch_mapped(&self.net, theta, batch.points.view(), group.order, &self.benchmark.input_map())?;
            let mut residual_adjoint: Option<Array2<f64>> = None;
            for &t in &group.terms {
                let pass = self.term_pass(t, batch, fwd.output())?;
                values[t] = pass.value;
                match (mode, terms[t].role) {
                    (GradientMode::Grouped, TermRole::Residual) => match residual_adjoint.as_mut() {
                        Some(acc) => *acc += &pass.adjoint,
                        None => residual_adjoint = Some(pass.adjoint),
                    },
                    _ => grads[t] = Some(backward_batch(&self.net, theta, &fwd, &pass.adjoint)?),
                }
            }
            if let Some(adj) = residual_adjoint {
                residual_grad = Some(backward_batch(&self.net, theta, &fwd, &adj)?);
            }
        }
        if mode == GradientMode::PerTerm {
            let mut acc = vec![0.0; n];
            for (t, term) in terms.iter().enumerate() {
                if term.role == TermRole::Residual {
                    let g = grads[t].as_ref().expect("per-term gradient");
                    acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
            }
            residual_grad = Some(acc);
        }
        let residual_grad = residual_grad.expect("every benchmark has a residual term");
        let data_grads: Vec<Vec<f64>> = self
            .data_terms()
            .into_iter()
            .map(|t| grads[t].clone().expect("data gradients are always per term"))
            .collect();
        if residual_grad.iter().chain(data_grads.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("loss gradient is not finite".into()));
        }
        let term_grads = match mode {
            GradientMode::PerTerm => Some(grads.into_iter().map(|g| g.expect("per-term gradient")).collect()),
            GradientMode::Grouped => None,
        };
        Ok(LossEvaluation { term_values: values, residual_grad, data_grads, term_grads })
    }
}
