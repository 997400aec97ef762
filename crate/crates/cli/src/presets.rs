//! Named experiments, one per published figure or table.

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub toml: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "fig-helmholtz-m1",
        description: "Helmholtz a2=4, plain network without weighting (M1), 4x50: error field, gradient histograms",
        toml: r#"
name = "fig-helmholtz-m1"
seed = 0
[problem]
name = "helmholtz"
a1 = 1.0
a2 = 4.0
[model]
variants = ["M1"]
architectures = [[4, 50]]
[diagnostics]
histograms = true
balance = true
"#,
    },
    Preset {
        name: "fig-helmholtz-m4",
        description: "Helmholtz a2=4, gated network with annealing (M4), 4x50: error field, gradient histograms",
        toml: r#"
name = "fig-helmholtz-m4"
seed = 0
[problem]
name = "helmholtz"
a1 = 1.0
a2 = 4.0
[model]
variants = ["M4"]
architectures = [[4, 50]]
[diagnostics]
histograms = true
balance = true
"#,
    },
    Preset {
        name: "fig-gradients",
        description: "Helmholtz a2=4, M1 vs M2 at 4x50: per-layer gradient histograms and gradient balance",
        toml: r#"
name = "fig-gradients"
seed = 0
[problem]
name = "helmholtz"
a1 = 1.0
a2 = 4.0
[model]
variants = ["M1", "M2"]
architectures = [[4, 50]]
[diagnostics]
histograms = true
histogram_every = 10000
balance = true
"#,
    },
    Preset {
        name: "fig-poisson-sweep",
        description: "1D Poisson with C in {1, 2, 4}, M1 4x50: residual to boundary gradient ratio",
        toml: r#"
name = "fig-poisson-sweep"
seed = 0
[problem]
name = "poisson"
[sweep]
parameter = "c"
values = [1.0, 2.0, 4.0]
[model]
variants = ["M1"]
architectures = [[4, 50]]
[diagnostics]
histograms = true
gradient_ratio = true
"#,
    },
    Preset {
        name: "fig-hessian-trace",
        description: "Helmholtz a2 in {1, 4}, M1 4x50: top Hessian eigenvalue every 1000 steps",
        toml: r#"
name = "fig-hessian-trace"
seed = 0
[problem]
name = "helmholtz"
a1 = 1.0
[sweep]
parameter = "a2"
values = [1.0, 4.0]
[model]
variants = ["M1"]
architectures = [[4, 50]]
[diagnostics]
lambda_max_every = 1000
"#,
    },
    Preset {
        name: "fig-stiffness-spectra",
        description: "Helmholtz a2=4, M1 3x25: full Hessian spectrum of every loss term after training",
        toml: r#"
name = "fig-stiffness-spectra"
seed = 0
[problem]
name = "helmholtz"
a1 = 1.0
a2 = 4.0
[model]
variants = ["M1"]
architectures = [[3, 25]]
[diagnostics]
spectra = true
balance = true
"#,
    },
    Preset {
        name: "table-helmholtz",
        description: "Helmholtz a2=4: M1-M4 across 3/5/7 hidden layers of 30/50/100 units (36 runs)",
        toml: r#"
name = "table-helmholtz"
seed = 0
[problem]
name = "helmholtz"
a1 = 1.0
a2 = 4.0
[model]
variants = ["M1", "M2", "M3", "M4"]
architectures = [[3, 30], [3, 50], [3, 100], [5, 30], [5, 50], [5, 100], [7, 30], [7, 50], [7, 100]]
"#,
    },
    Preset {
        name: "table-klein-gordon",
        description: "Klein-Gordon, M1-M4 at 5x50: relative error and training time",
        toml: r#"
name = "table-klein-gordon"
seed = 0
[problem]
name = "klein_gordon"
[model]
variants = ["M1", "M2", "M3", "M4"]
architectures = [[5, 50]]
"#,
    },
    Preset {
        name: "fig-cavity-uvp",
        description: "Lid-driven cavity Re=100, velocity-pressure outputs, M1-M4 at 5x50 against the FDM field",
        toml: r#"
name = "fig-cavity-uvp"
seed = 0
[problem]
name = "cavity_uvp"
[model]
variants = ["M1", "M2", "M3", "M4"]
architectures = [[5, 50]]
"#,
    },
    Preset {
        name: "fig-cavity-psi",
        description: "Lid-driven cavity Re=100, streamfunction-pressure outputs, M1-M4 at 5x50 against the FDM field",
        toml: r#"
name = "fig-cavity-psi"
seed = 0
[problem]
name = "cavity_psi_p"
[model]
variants = ["M1", "M2", "M3", "M4"]
architectures = [[5, 50]]
"#,
    },
    Preset {
        name: "fdm-reference",
        description: "Streamfunction-vorticity FDM reference for the cavity at Re=100 on a 128x128 grid",
        toml: r#"
name = "fdm-reference"
seed = 0
kind = "fdm"
[fdm]
n = 128
re = 100.0
"#,
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

pub fn load(name: &str) -> CliResult<ExperimentConfig> {
    let p = find(name).ok_or_else(|| {
        let known: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
        CliError::Config(format!("unknown preset '{name}' (known: {})", known.join(", ")))
    })?;
    let mut cfg = ExperimentConfig::from_toml(p.toml)?;
    if cfg.description.is_empty() {
        cfg.description = p.description.to_string();
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_plans() {
        assert!(PRESETS.len() >= 9);
        for p in PRESETS {
            let cfg = load(p.name).unwrap();
            assert_eq!(cfg.name, p.name);
            cfg.plan().unwrap_or_else(|e| panic!("{}: {e}", p.name));
        }
    }

    #[test]
    fn table_grid_has_36_runs() {
        assert_eq!(load("table-helmholtz").unwrap().plan().unwrap().len(), 36);
    }

    #[test]
    fn names_are_unique() {
        for (i, p) in PRESETS.iter().enumerate() {
            assert!(PRESETS[i + 1..].iter().all(|q| q.name != p.name));
        }
    }
}
