use std::fmt::Write as _;
use std::path::Path;

use super::{Architecture, NetworkConfig};
use crate::{Error, Result};

const MAGIC: &str = "# pinn checkpoint v1";

/// Parameters with enough metadata to rebuild the network.
///
/// Text format: a magic line, `key=value` metadata lines, a `count=` line, then
/// one parameter per line printed with 17 significant digits, so that reading
/// a checkpoint back reproduces every value bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub seed: u64,
    pub step: usize,
    pub problem: String,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = String::with_capacity(24 * self.params.len() + 256);
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "problem={}", self.problem);
        let _ = writeln!(s, "architecture={}", c.architecture.name());
        let _ = writeln!(s, "input_dim={}", c.input_dim);
        let _ = writeln!(s, "output_dim={}", c.output_dim);
        let _ = writeln!(s, "hidden_layers={}", c.hidden_layers);
        let _ = writeln!(s, "width={}", c.width);
        let _ = writeln!(s, "jet_order={}", c.jet_order);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "step={}", self.step);
        let _ = writeln!(s, "count={}", self.params.len());
        for p in &self.params {
            let _ = writeln!(s, "{p:.16e}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("missing checkpoint header".into()));
        }
        let mut meta = std::collections::HashMap::new();
        let count: usize = loop {
            let line = lines.next().ok_or_else(|| bad("truncated metadata".into()))?;
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("malformed metadata line '{line}'")))?;
            if k == "count" {
                break v.parse().map_err(|_| bad(format!("bad count '{v}'")))?;
            }
            meta.insert(k.to_string(), v.to_string());
        };
        let get = |k: &str| meta.get(k).ok_or_else(|| bad(format!("missing metadata '{k}'")));
        let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| bad(format!("bad value for '{k}'"))) };
        let config = NetworkConfig {
            architecture: Architecture::parse(get("architecture")?).map_err(|e| bad(e.to_string()))?,
            input_dim: num("input_dim")?,
            output_dim: num("output_dim")?,
            hidden_layers: num("hidden_layers")?,
            width: num("width")?,
            jet_order: num("jet_order")?,
        };
        config.validate().map_err(|e| bad(e.to_string()))?;
        let seed = get("seed")?.parse().map_err(|_| bad("bad seed".into()))?;
        let step = num("step")?;
        let problem = get("problem")?.clone();
        let params = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|_| bad(format!("bad parameter '{l}'"))))
            .collect::<Result<Vec<_>>>()?;
        if params.len() != count || count != config.param_count() {
            return Err(bad(format!(
                "checkpoint holds {} parameters, header says {count}, network needs {}",
                params.len(),
                config.param_count()
            )));
        }
        Ok(Self { config, seed, step, problem, params })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
