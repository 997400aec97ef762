//! Benchmark PDEs: fabricated solutions, source terms, samplers and residuals.
//!
//! Every benchmark exposes a roster of loss terms. Residual terms share one
//! collocation batch; data terms are grouped by the boundary or initial batch
//! they are evaluated on. Mismatch functions are generic over [`Scalar`] so the
//! same code runs on plain reals and on taped reals (for loss adjoints).

mod residuals;
mod sampling;

pub use residuals::{
    cavity_residuals_psi_p, cavity_residuals_uvp, helmholtz_residual, helmholtz_source, klein_gordon_residual,
    klein_gordon_source, poisson_residual, poisson_source, psi_continuity,
};
pub use sampling::{evaluation_grid, Batch, GRID_POINTS_PER_AXIS};

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};

use crate::autodiff::{Jet, Scalar};
use crate::models::{forward_batch_mapped, InputMap, NetworkConfig};
use crate::rng::Stream;
use crate::{Error, Result};

/// Registry names accepted by [`Benchmark::by_name`].
pub const PROBLEM_NAMES: [&str; 5] = ["poisson", "helmholtz", "klein_gordon", "cavity_uvp", "cavity_psi_p"];

pub const DEFAULT_BATCH: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Benchmark {
    /// `u_xx = g` on `[0,1]` with `u = sin(Cx)`.
    Poisson { c: f64 },
    /// `Δu + k²u = q` on `(−1,1)²` with `u = sin(a₁πx)sin(a₂πy)`.
    Helmholtz { a1: f64, a2: f64, k: f64 },
    /// `u_tt + αu_xx + βu + γu^k = f` on `[0,1]×[0,1]` with `u = x·cos(5πt) + (xt)³`.
    KleinGordon { alpha: f64, beta: f64, gamma: f64, k: i32 },
    /// Lid-driven cavity, network outputs `(u, v, p)`.
    CavityUvp { re: f64 },
    /// Lid-driven cavity, network outputs `(ψ, p)` with `(u, v) = (ψ_y, −ψ_x)`.
    CavityPsiP { re: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TermRole {
    Residual,
    Data,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    Collocation,
    Boundary,
    Initial,
}

impl SamplerKind {
    pub fn stream_name(self) -> &'static str {
        match self {
            SamplerKind::Collocation => crate::rng::streams::COLLOCATION,
            SamplerKind::Boundary => crate::rng::streams::BOUNDARY,
            SamplerKind::Initial => crate::rng::streams::INITIAL,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Term {
    pub name: &'static str,
    pub role: TermRole,
    pub sampler: SamplerKind,
}

/// Terms evaluated on one shared batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TermGroup {
    pub sampler: SamplerKind,
    /// Jet order the group's mismatches read.
    pub order: usize,
    /// Indices into [`Benchmark::terms`].
    pub terms: Vec<usize>,
}

/// Axis-aligned box; 1D problems use the first axis only.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub dims: usize,
}

impl Domain {
    pub fn contains(&self, p: &[f64]) -> bool {
        (0..self.dims).all(|d| p[d] >= self.lo[d] && p[d] <= self.hi[d])
    }
}

const R: TermRole = TermRole::Residual;
const D: TermRole = TermRole::Data;
const COL: SamplerKind = SamplerKind::Collocation;
const BND: SamplerKind = SamplerKind::Boundary;
const INI: SamplerKind = SamplerKind::Initial;

const SCALAR_TERMS: [Term; 2] =
    [Term { name: "r", role: R, sampler: COL }, Term { name: "u_b", role: D, sampler: BND }];
const KG_TERMS: [Term; 3] = [
    Term { name: "r", role: R, sampler: COL },
    Term { name: "u_0", role: D, sampler: INI },
    Term { name: "u_b", role: D, sampler: BND },
];
const UVP_TERMS: [Term; 5] = [
    Term { name: "r_u", role: R, sampler: COL },
    Term { name: "r_v", role: R, sampler: COL },
    Term { name: "r_c", role: R, sampler: COL },
    Term { name: "u_b", role: D, sampler: BND },
    Term { name: "v_b", role: D, sampler: BND },
];
const PSI_TERMS: [Term; 4] = [
    Term { name: "r_u", role: R, sampler: COL },
    Term { name: "r_v", role: R, sampler: COL },
    Term { name: "u_b", role: D, sampler: BND },
    Term { name: "v_b", role: D, sampler: BND },
];

impl Benchmark {
    /// Default constants for a registry name.
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "poisson" => Benchmark::Poisson { c: 1.0 },
            "helmholtz" => Benchmark::Helmholtz { a1: 1.0, a2: 4.0, k: 1.0 },
            "klein_gordon" => Benchmark::KleinGordon { alpha: -1.0, beta: 0.0, gamma: 1.0, k: 3 },
            "cavity_uvp" => Benchmark::CavityUvp { re: 100.0 },
            "cavity_psi_p" => Benchmark::CavityPsiP { re: 100.0 },
            other => {
                return Err(Error::Config(format!("unknown problem '{other}'; known: {}", PROBLEM_NAMES.join(", "))))
            }
        })
    }

    /// Constant names accepted by [`Benchmark::with_param`], with current values.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Benchmark::Poisson { c } => vec![("c", c)],
            Benchmark::Helmholtz { a1, a2, k } => vec![("a1", a1), ("a2", a2), ("k", k)],
            Benchmark::KleinGordon { alpha, beta, gamma, k } => {
                vec![("alpha", alpha), ("beta", beta), ("gamma", gamma), ("k", k as f64)]
            }
            Benchmark::CavityUvp { re } | Benchmark::CavityPsiP { re } => vec![("re", re)],
        }
    }

    /// Copy with one constant replaced.
    pub fn with_param(&self, key: &str, value: f64) -> Result<Self> {
        let mut b = *self;
        let unknown = || {
            let known: Vec<&str> = self.params().iter().map(|p| p.0).collect();
            Error::Config(format!("{} has no constant '{key}' (known: {})", self.name(), known.join(", ")))
        };
        match (&mut b, key) {
            (Benchmark::Poisson { c }, "c") => *c = value,
            (Benchmark::Helmholtz { a1, .. }, "a1") => *a1 = value,
            (Benchmark::Helmholtz { a2, .. }, "a2") => *a2 = value,
            (Benchmark::Helmholtz { k, .. }, "k") => *k = value,
            (Benchmark::KleinGordon { alpha, .. }, "alpha") => *alpha = value,
            (Benchmark::KleinGordon { beta, .. }, "beta") => *beta = value,
            (Benchmark::KleinGordon { gamma, .. }, "gamma") => *gamma = value,
            (Benchmark::KleinGordon { k, .. }, "k") => {
                if value.fract() != 0.0 || !value.is_finite() {
                    return Err(Error::Config(format!("klein_gordon power k must be an integer, got {value}")));
                }
                *k = value as i32;
            }
            (Benchmark::CavityUvp { re } | Benchmark::CavityPsiP { re }, "re") => *re = value,
            _ => return Err(unknown()),
        }
        b.validate()?;
        Ok(b)
    }

    /// `name:key=value,...` with every constant, e.g. `helmholtz:a1=1,a2=4,k=1`.
    pub fn spec(&self) -> String {
        let kv: Vec<String> = self.params().iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}:{}", self.name(), kv.join(","))
    }

    /// Inverse of [`Benchmark::spec`]; a bare name gives the defaults and any
    /// listed constant overrides its default.
    pub fn parse_spec(spec: &str) -> Result<Self> {
        let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let mut b = Self::by_name(name.trim())?;
        for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("problem constant '{item}' is not key=value")))?;
            let value: f64 =
                v.trim().parse().map_err(|_| Error::Config(format!("problem constant {k}: '{v}' is not a number")))?;
            b = b.with_param(k.trim(), value)?;
        }
        Ok(b)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Benchmark::Poisson { .. } => "poisson",
            Benchmark::Helmholtz { .. } => "helmholtz",
            Benchmark::KleinGordon { .. } => "klein_gordon",
            Benchmark::CavityUvp { .. } => "cavity_uvp",
            Benchmark::CavityPsiP { .. } => "cavity_psi_p",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let ok = match *self {
            Benchmark::Poisson { c } => finite(&[c]) && c > 0.0,
            Benchmark::Helmholtz { a1, a2, k } => finite(&[a1, a2, k]),
            Benchmark::KleinGordon { alpha, beta, gamma, k } => finite(&[alpha, beta, gamma]) && (k == 2 || k == 3),
            Benchmark::CavityUvp { re } | Benchmark::CavityPsiP { re } => finite(&[re]) && re > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid constants for {}: {self:?}", self.name())))
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Benchmark::Poisson { .. } => 1,
            _ => 2,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Benchmark::CavityUvp { .. } => 3,
            Benchmark::CavityPsiP { .. } => 2,
            _ => 1,
        }
    }

    /// Highest input-derivative order any term reads.
    pub fn jet_order(&self) -> usize {
        match self {
            Benchmark::CavityPsiP { .. } => 3,
            _ => 2,
        }
    }

    pub fn domain(&self) -> Domain {
        match self {
            Benchmark::Poisson { .. } => Domain { lo: [0.0, 0.0], hi: [1.0, 0.0], dims: 1 },
            Benchmark::Helmholtz { .. } => Domain { lo: [-1.0, -1.0], hi: [1.0, 1.0], dims: 2 },
            _ => Domain { lo: [0.0, 0.0], hi: [1.0, 1.0], dims: 2 },
        }
    }

    /// Map the network sees its inputs through: the domain onto `[−1, 1]^d`.
    pub fn input_map(&self) -> InputMap {
        let d = self.domain();
        InputMap::unit_box(d.lo, d.hi)
    }

    pub fn terms(&self) -> &'static [Term] {
        match self {
            Benchmark::Poisson { .. } | Benchmark::Helmholtz { .. } => &SCALAR_TERMS,
            Benchmark::KleinGordon { .. } => &KG_TERMS,
            Benchmark::CavityUvp { .. } => &UVP_TERMS,
            Benchmark::CavityPsiP { .. } => &PSI_TERMS,
        }
    }

    pub fn term_index(&self, name: &str) -> Option<usize> {
        self.terms().iter().position(|t| t.name == name)
    }

    /// Terms grouped by shared batch, collocation first, then in roster order.
    pub fn groups(&self) -> Vec<TermGroup> {
        let mut groups: Vec<TermGroup> = Vec::new();
        for (i, t) in self.terms().iter().enumerate() {
            match groups.iter_mut().find(|g| g.sampler == t.sampler) {
                Some(g) => g.terms.push(i),
                None => groups.push(TermGroup { sampler: t.sampler, order: self.sampler_order(t.sampler), terms: vec![i] }),
            }
        }
        groups
    }

    fn sampler_order(&self, kind: SamplerKind) -> usize {
        match (self, kind) {
            (_, SamplerKind::Collocation) => self.jet_order(),
            (Benchmark::KleinGordon { .. }, SamplerKind::Initial) => 1,
            (Benchmark::CavityPsiP { .. }, SamplerKind::Boundary) => 1,
            _ => 0,
        }
    }

    /// Number of target columns attached by a sampler.
    pub fn target_dim(&self, kind: SamplerKind) -> usize {
        match (self, kind) {
            (_, SamplerKind::Collocation) => 0,
            (Benchmark::KleinGordon { .. }, SamplerKind::Initial) => 2,
            (Benchmark::CavityUvp { .. } | Benchmark::CavityPsiP { .. }, SamplerKind::Boundary) => 2,
            _ => 1,
        }
    }

    /// Mismatch components of `term` at one point; the term's loss at the point
    /// is the mean of their squares.
    pub fn term_mismatch<S: Scalar>(
        &self,
        term: usize,
        x: &[f64],
        target: &[f64],
        out: &[Jet<S>],
        dst: &mut Vec<S>,
    ) -> Result<()> {
        dst.clear();
        let t = self.terms().get(term).ok_or_else(|| Error::Contract(format!("term {term} out of range")))?;
        if out.len() != self.output_dim() {
            return Err(Error::Shape(format!("{} expects {} outputs, got {}", self.name(), self.output_dim(), out.len())));
        }
        let value_of = |j: &Jet<S>, v: f64| j.value() - v;
        match (*self, t.name) {
            (Benchmark::Poisson { c }, "r") => dst.push(poisson_residual(&out[0], x[0], c)?),
            (Benchmark::Helmholtz { a1, a2, k }, "r") => dst.push(helmholtz_residual(&out[0], x[0], x[1], a1, a2, k)?),
            (Benchmark::KleinGordon { alpha, beta, gamma, k }, "r") => {
                dst.push(klein_gordon_residual(&out[0], x[0], x[1], alpha, beta, gamma, k)?)
            }
            (Benchmark::KleinGordon { .. }, "u_0") => {
                let ut = out[0].try_d(&[1]).ok_or_else(|| Error::Shape("initial term needs first-order jets".into()))?;
                dst.push(value_of(&out[0], target[0]));
                dst.push(ut - target[1]);
            }
            (Benchmark::Poisson { .. } | Benchmark::Helmholtz { .. } | Benchmark::KleinGordon { .. }, "u_b") => {
                dst.push(value_of(&out[0], target[0]))
            }
            (Benchmark::CavityUvp { re }, r) if r.starts_with("r_") => {
                let [ru, rv, rc] = cavity_residuals_uvp(out, re)?;
                dst.push(match r {
                    "r_u" => ru,
                    "r_v" => rv,
                    _ => rc,
                });
            }
            (Benchmark::CavityUvp { .. }, "u_b") => dst.push(value_of(&out[0], target[0])),
            (Benchmark::CavityUvp { .. }, "v_b") => dst.push(value_of(&out[1], target[1])),
            (Benchmark::CavityPsiP { re }, r) if r.starts_with("r_") => {
                let [ru, rv] = cavity_residuals_psi_p(out, re)?;
                dst.push(if r == "r_u" { ru } else { rv });
            }
            (Benchmark::CavityPsiP { .. }, "u_b" | "v_b") => {
                let (psi_x, psi_y) = match (out[0].try_d(&[0]), out[0].try_d(&[1])) {
                    (Some(a), Some(b)) => (a, b),
                    _ => return Err(Error::Shape("streamfunction boundary terms need first-order jets".into())),
                };
                dst.push(if t.name == "u_b" { psi_y - target[0] } else { -psi_x - target[1] });
            }
            (b, name) => return Err(Error::Contract(format!("{} has no evaluator for term {name}", b.name()))),
        }
        Ok(())
    }

    /// Exact solution values at `x`, when the benchmark has a closed form.
    pub fn exact(&self, x: &[f64]) -> Option<f64> {
        match *self {
            Benchmark::Poisson { c } => Some((c * x[0]).sin()),
            Benchmark::Helmholtz { a1, a2, .. } => Some((a1 * PI * x[0]).sin() * (a2 * PI * x[1]).sin()),
            Benchmark::KleinGordon { .. } => {
                let (x, t) = (x[0], x[1]);
                Some(x * (5.0 * PI * t).cos() + (x * t).powi(3))
            }
            Benchmark::CavityUvp { .. } | Benchmark::CavityPsiP { .. } => None,
        }
    }

    /// Exact solution as a jet built from input jets (for residual checks).
    pub fn exact_jet<S: Scalar>(&self, x: &[Jet<S>]) -> Option<Jet<S>> {
        match *self {
            Benchmark::Poisson { c } => Some(x[0].scale(c).sin()),
            Benchmark::Helmholtz { a1, a2, .. } => Some(x[0].scale(a1 * PI).sin() * x[1].scale(a2 * PI).sin()),
            Benchmark::KleinGordon { .. } => {
                let xt = x[0] * x[1];
                Some(x[0] * x[1].scale(5.0 * PI).cos() + xt * xt * xt)
            }
            Benchmark::CavityUvp { .. } | Benchmark::CavityPsiP { .. } => None,
        }
    }

    /// Sample `count` points for `kind`, attaching target data.
    pub fn sample(&self, kind: SamplerKind, count: usize, rng: &mut Stream) -> Result<Batch> {
        sampling::sample(self, kind, count, rng)
    }

    /// Boundary/initial targets at a point of the corresponding region.
    pub(crate) fn targets(&self, kind: SamplerKind, x: &[f64], on_lid: bool, dst: &mut [f64]) {
        match (*self, kind) {
            (Benchmark::KleinGordon { .. }, SamplerKind::Initial) => {
                dst[0] = self.exact(x).expect("closed form");
                // u_t(x, 0) of the fabricated solution: −5πx·sin(0) + 3x³·0² = 0.
                dst[1] = 0.0;
            }
            (Benchmark::CavityUvp { .. } | Benchmark::CavityPsiP { .. }, SamplerKind::Boundary) => {
                dst[0] = if on_lid { 1.0 } else { 0.0 };
                dst[1] = 0.0;
            }
            (_, SamplerKind::Boundary) => dst[0] = self.exact(x).expect("closed form"),
            _ => {}
        }
    }

    /// Number of solution components compared when scoring.
    pub fn solution_dim(&self) -> usize {
        match self {
            Benchmark::CavityUvp { .. } | Benchmark::CavityPsiP { .. } => 2,
            _ => 1,
        }
    }

    /// Predicted solution components at `points` (`B × solution_dim`): the
    /// network value for scalar problems, velocity `(u, v)` for the cavity.
    pub fn predict_solution(&self, net: &NetworkConfig, params: &[f64], points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        const CHUNK: usize = 2048;
        let order = if matches!(self, Benchmark::CavityPsiP { .. }) { 1 } else { 0 };
        let n = points.nrows();
        let mut out = Array2::zeros((n, self.solution_dim()));
        let mut start = 0;
        while start < n {
            let end = (start + CHUNK).min(n);
            let fwd = forward_batch_mapped(net, params, points.slice(ndarray::s![start..end, ..]), order, &self.input_map())?;
            let o = fwd.output();
            for i in 0..end - start {
                match self {
                    Benchmark::CavityUvp { .. } => {
                        out[[start + i, 0]] = o.coeff(0, i, 0);
                        out[[start + i, 1]] = o.coeff(0, i, 1);
                    }
                    Benchmark::CavityPsiP { .. } => {
                        // Slots 1 and 2 hold ψ_x and ψ_y.
                        out[[start + i, 0]] = o.coeff(2, i, 0);
                        out[[start + i, 1]] = -o.coeff(1, i, 0);
                    }
                    _ => out[[start + i, 0]] = o.coeff(0, i, 0),
                }
            }
            start = end;
        }
        Ok(out)
    }

    /// Exact solution on `points`, or `None` for the cavity.
    pub fn exact_solution(&self, points: ArrayView2<'_, f64>) -> Option<Array2<f64>> {
        self.exact(&[0.0, 0.0])?;
        let mut out = Array2::zeros((points.nrows(), 1));
        for (i, row) in points.rows().into_iter().enumerate() {
            let x = [row[0], if row.len() > 1 { row[1] } else { 0.0 }];
            out[[i, 0]] = self.exact(&x).expect("closed form");
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_round_trip() {
        for name in PROBLEM_NAMES {
            let b = Benchmark::by_name(name).unwrap();
            assert_eq!(Benchmark::parse_spec(&b.spec()).unwrap(), b);
        }
        let h = Benchmark::parse_spec("helmholtz:a2=1").unwrap();
        assert_eq!(h, Benchmark::Helmholtz { a1: 1.0, a2: 1.0, k: 1.0 });
        assert_eq!(h.spec(), "helmholtz:a1=1,a2=1,k=1");
        assert!(Benchmark::parse_spec("helmholtz:c=2").is_err());
        assert!(Benchmark::parse_spec("klein_gordon:k=2.5").is_err());
        assert!(Benchmark::parse_spec("poisson:c=-1").is_err());
    }

    #[test]
    fn registry_round_trips() {
        for name in PROBLEM_NAMES {
            let b = Benchmark::by_name(name).unwrap();
            assert_eq!(b.name(), name);
            b.validate().unwrap();
        }
        assert!(matches!(Benchmark::by_name("burgers"), Err(Error::Config(_))));
    }

    #[test]
    fn roster_groups_cover_every_term_once() {
        for name in PROBLEM_NAMES {
            let b = Benchmark::by_name(name).unwrap();
            let mut seen: Vec<usize> = b.groups().into_iter().flat_map(|g| g.terms).collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..b.terms().len()).collect::<Vec<_>>());
            assert_eq!(b.groups()[0].sampler, SamplerKind::Collocation);
            assert!(b.groups().iter().all(|g| g.order <= b.jet_order()));
        }
    }

    #[test]
    fn klein_gordon_power_is_restricted() {
        let b = Benchmark::KleinGordon { alpha: -1.0, beta: 0.0, gamma: 1.0, k: 4 };
        assert!(b.validate().is_err());
    }

    #[test]
    fn mean_square_of_single_boundary_point() {
        let b = Benchmark::by_name("helmholtz").unwrap();
        let layout = crate::autodiff::JetLayout::get(2, 0).unwrap();
        let mut dst = Vec::new();
        b.term_mismatch(1, &[1.0, 0.3], &[0.0], &[Jet::constant(layout, 2.0)], &mut dst).unwrap();
        assert_eq!(dst.iter().map(|r| r * r).sum::<f64>() / dst.len() as f64, 4.0);
    }

    #[test]
    fn input_maps_send_each_domain_onto_the_unit_box() {
        for name in PROBLEM_NAMES {
            let b = Benchmark::by_name(name).unwrap();
            let (d, m) = (b.domain(), b.input_map());
            for k in 0..d.dims {
                assert_eq!((m.apply(k, d.lo[k]), m.apply(k, d.hi[k])), (-1.0, 1.0), "{name}");
            }
        }
        assert_eq!(Benchmark::by_name("helmholtz").unwrap().input_map(), InputMap::IDENTITY);
    }
}
