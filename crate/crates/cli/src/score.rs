use std::path::Path;

use pinn_core::cavity_ref::FdmSolution;
use pinn_core::models::Checkpoint;
use pinn_core::problems::Benchmark;
use pinn_core::trainer::evaluate_error;

use crate::error::{CliError, CliResult};

/// Relative L² error of a checkpoint against the exact solution on the
/// evaluation grid, or against an FDM reference field for the cavity.
///
/// `problem` overrides the problem recorded in the checkpoint.
pub fn score(checkpoint: &Path, problem: Option<&str>, reference: Option<&Path>) -> CliResult<f64> {
    let ck = Checkpoint::read(checkpoint)?;
    let spec = problem.unwrap_or(&ck.problem);
    let bench = Benchmark::parse_spec(spec)?;
    let net = ck.config;
    if net.input_dim != bench.input_dim() || net.output_dim != bench.output_dim() {
        return Err(pinn_core::Error::Checkpoint(format!(
            "network maps {} inputs to {} outputs, {} needs {} to {}",
            net.input_dim,
            net.output_dim,
            bench.name(),
            bench.input_dim(),
            bench.output_dim()
        ))
        .into());
    }
    let is_cavity = matches!(bench, Benchmark::CavityUvp { .. } | Benchmark::CavityPsiP { .. });
    let field = match (is_cavity, reference) {
        (true, None) => {
            return Err(CliError::Usage(format!("{} has no closed-form solution; pass --reference", bench.name())))
        }
        (false, Some(_)) => {
            return Err(CliError::Usage(format!("{} is scored against its exact solution; drop --reference", bench.name())))
        }
        (true, Some(p)) => Some(FdmSolution::read(p)?.to_reference()),
        (false, None) => None,
    };
    Ok(evaluate_error(&bench, &net, &ck.params, field.as_ref())?)
}
