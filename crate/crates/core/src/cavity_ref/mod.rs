//! Streamfunction–vorticity finite-difference solver for the lid-driven
//! cavity on `[0,1]²`.
//!
//! Explicit Euler in time for the vorticity transport equation, SOR for
//! `Δψ = −ω`, Wood's formula for wall vorticity. Nodes `(i, j)` sit at
//! `(i/N, j/N)`; `i` runs along x.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::trainer::Reference;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FdmConfig {
    /// Cells per side; nodes run `0..=n`.
    pub n: usize,
    pub re: f64,
    pub dt: f64,
    /// Steady when `max|Δu|/Δt` and `max|Δv|/Δt` fall below this.
    pub epsilon: f64,
    /// Max-norm bound on the discrete Poisson residual.
    pub poisson_tol: f64,
    pub poisson_max_sweeps: usize,
    pub max_iterations: usize,
}

impl Default for FdmConfig {
    fn default() -> Self {
        Self {
            n: 128,
            re: 100.0,
            dt: 1e-3,
            epsilon: 1e-4,
            poisson_tol: 1e-8,
            poisson_max_sweeps: 50_000,
            max_iterations: 1_000_000,
        }
    }
}

impl FdmConfig {
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Over-relaxation factor `2 / (1 + sin(πh))`.
    pub fn sor_omega(&self) -> f64 {
        2.0 / (1.0 + (std::f64::consts::PI * self.h()).sin())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 8 {
            return Err(Error::Config(format!("grid needs at least 8 cells per side, got {}", self.n)));
        }
        let positive = [self.re, self.dt, self.epsilon, self.poisson_tol];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("Re, dt, epsilon and Poisson tolerance must be positive".into()));
        }
        if self.poisson_max_sweeps == 0 || self.max_iterations == 0 {
            return Err(Error::Config("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

/// Nodal values on the `(N+1)×(N+1)` grid, `values[i·(N+1) + j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    n: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(n: usize) -> Self {
        Self { n, values: vec![0.0; (n + 1) * (n + 1)] }
    }

    pub fn from_fn(n: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let h = 1.0 / n as f64;
        let mut g = Self::zeros(n);
        for i in 0..=n {
            for j in 0..=n {
                g.values[i * (n + 1) + j] = f(i as f64 * h, j as f64 * h);
            }
        }
        g
    }

    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != (n + 1) * (n + 1) {
            return Err(Error::Shape(format!("grid of {n} cells needs {} values, got {}", (n + 1) * (n + 1), values.len())));
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * (self.n + 1) + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * (self.n + 1) + j] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn same_grid(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::Shape(format!("grids of {} and {} cells", self.n, other.n)));
        }
        Ok(())
    }
}

/// One explicit Euler step of `ω_t + ψ_y ω_x − ψ_x ω_y = νΔω` at interior
/// nodes; boundary values are copied unchanged.
pub fn step_vorticity(omega: &GridField, psi: &GridField, cfg: &FdmConfig) -> Result<GridField> {
    omega.same_grid(psi)?;
    let n = omega.n;
    let s = n + 1;
    let h = 1.0 / n as f64;
    let (inv2h, invh2, nu) = (0.5 / h, 1.0 / (h * h), 1.0 / cfg.re);
    let (w, p) = (&omega.values, &psi.values);
    let mut out = omega.clone();
    for i in 1..n {
        for j in 1..n {
            let k = i * s + j;
            let psi_x = (p[k + s] - p[k - s]) * inv2h;
            let psi_y = (p[k + 1] - p[k - 1]) * inv2h;
            let w_x = (w[k + s] - w[k - s]) * inv2h;
            let w_y = (w[k + 1] - w[k - 1]) * inv2h;
            let lap = (w[k + s] + w[k - s] + w[k + 1] + w[k - 1] - 4.0 * w[k]) * invh2;
            out.values[k] = w[k] + cfg.dt * (nu * lap - psi_y * w_x + psi_x * w_y);
        }
    }
    if out.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("vorticity update produced non-finite values".into()));
    }
    Ok(out)
}

/// Max over interior nodes of `|Δ_h ψ + ω|`.
pub fn poisson_residual(psi: &GridField, omega: &GridField) -> f64 {
    let n = psi.n;
    let s = n + 1;
    let invh2 = (n * n) as f64;
    let (p, w) = (&psi.values, &omega.values);
    let mut r = 0.0f64;
    for i in 1..n {
        for j in 1..n {
            let k = i * s + j;
            let lap = (p[k + s] + p[k - s] + p[k + 1] + p[k - 1] - 4.0 * p[k]) * invh2;
            r = r.max((lap + w[k]).abs());
        }
    }
    r
}

/// SOR sweeps for `Δ_h ψ = −ω` at interior nodes, starting from the current
/// `psi` and holding its boundary values fixed. Returns the sweep count.
///
/// The exact residual is evaluated only once the largest pre-update residual
/// of a sweep is within tolerance.
pub fn relax_poisson(psi: &mut GridField, omega: &GridField, cfg: &FdmConfig) -> Result<usize> {
    psi.same_grid(omega)?;
    let n = psi.n;
    let s = n + 1;
    let h2 = 1.0 / (n * n) as f64;
    let relax = cfg.sor_omega();
    let w = &omega.values;
    let mut residual = poisson_residual(psi, omega);
    if residual <= cfg.poisson_tol {
        return Ok(0);
    }
    // Pre-update residual r = 4(gs − ψ)/h², compared against the tolerance.
    let tol_gs = cfg.poisson_tol * 0.25 * h2;
    for sweep in 1..=cfg.poisson_max_sweeps {
        let mut largest = 0.0f64;
        let p = &mut psi.values;
        for i in 1..n {
            let (before, rest) = p.split_at_mut(i * s);
            let (cur, after) = rest.split_at_mut(s);
            let up = &before[(i - 1) * s..];
            let down = &after[..s];
            let wr = &w[i * s..(i + 1) * s];
            for j in 1..n {
                let gs = 0.25 * (up[j] + down[j] + cur[j - 1] + cur[j + 1] + h2 * wr[j]);
                let delta = gs - cur[j];
                largest = largest.max(delta.abs());
                cur[j] += relax * delta;
            }
        }
        if !largest.is_finite() {
            return Err(Error::Numeric(format!("Poisson sweep {sweep} diverged")));
        }
        if largest <= tol_gs {
            residual = poisson_residual(psi, omega);
            if residual <= cfg.poisson_tol {
                return Ok(sweep);
            }
        }
    }
    residual = residual.min(poisson_residual(psi, omega));
    Err(Error::NonConvergence(format!(
        "Poisson solve stopped after {} sweeps with residual {residual:e}",
        cfg.poisson_max_sweeps
    )))
}

/// Stream-function wall values: `h/2` along the lid row (corners included),
/// zero on the other walls.
pub fn apply_psi_boundary(psi: &mut GridField) {
    let n = psi.n;
    let lid = 0.5 / n as f64;
    for k in 0..=n {
        psi.set(k, 0, 0.0);
        psi.set(0, k, 0.0);
        psi.set(n, k, 0.0);
    }
    for i in 0..=n {
        psi.set(i, n, lid);
    }
}

/// Solve `Δψ = −ω` from a zero interior with the cavity wall values.
pub fn solve_poisson_psi(omega: &GridField, cfg: &FdmConfig) -> Result<GridField> {
    let mut psi = GridField::zeros(omega.n);
    apply_psi_boundary(&mut psi);
    relax_poisson(&mut psi, omega, cfg)?;
    Ok(psi)
}

/// Wood's formula for wall vorticity:
/// `ω₀ = −½ω₁ − 3(ψ₁−ψ₀)/h² − 3v_τ/h − (3/2)∂v_n/∂τ + (h/2)∂²v_τ/∂τ²`.
pub fn woods_formula(psi0: f64, psi1: f64, omega1: f64, v_tau: f64, dvn_dtau: f64, d2vtau_dtau2: f64, h: f64) -> f64 {
    -0.5 * omega1 - 3.0 * (psi1 - psi0) / (h * h) - 3.0 * v_tau / h - 1.5 * dvn_dtau + 0.5 * h * d2vtau_dtau2
}

/// Lid velocity in the wall-tangent direction used by Wood's formula.
pub const LID_VELOCITY: f64 = 1.0;

/// Overwrite wall vorticity from interior values. Prescribed wall velocities
/// are constant along each wall, so their tangential derivatives vanish; only
/// the lid carries `v_τ = 1`. Corners use the side-wall normal.
pub fn woods_boundary_vorticity(psi: &GridField, omega: &mut GridField) -> Result<()> {
    psi.same_grid(omega)?;
    let n = psi.n;
    let h = 1.0 / n as f64;
    let wall = |p0: f64, p1: f64, w1: f64, vt: f64| woods_formula(p0, p1, w1, vt, 0.0, 0.0, h);
    for i in 1..n {
        let bottom = wall(psi.get(i, 0), psi.get(i, 1), omega.get(i, 1), 0.0);
        let top = wall(psi.get(i, n), psi.get(i, n - 1), omega.get(i, n - 1), LID_VELOCITY);
        omega.set(i, 0, bottom);
        omega.set(i, n, top);
    }
    for j in 0..=n {
        let left = wall(psi.get(0, j), psi.get(1, j), omega.get(1, j), 0.0);
        let right = wall(psi.get(n, j), psi.get(n - 1, j), omega.get(n - 1, j), 0.0);
        omega.set(0, j, left);
        omega.set(n, j, right);
    }
    Ok(())
}

/// `u = ψ_y`, `v = −ψ_x` by central differences, second-order one-sided on walls.
pub fn recover_velocity(psi: &GridField) -> (GridField, GridField) {
    let n = psi.n;
    let inv2h = 0.5 * n as f64;
    let d = |f: &dyn Fn(usize) -> f64, k: usize| -> f64 {
        if k == 0 {
            (-3.0 * f(0) + 4.0 * f(1) - f(2)) * inv2h
        } else if k == n {
            (3.0 * f(n) - 4.0 * f(n - 1) + f(n - 2)) * inv2h
        } else {
            (f(k + 1) - f(k - 1)) * inv2h
        }
    };
    let mut u = GridField::zeros(n);
    let mut v = GridField::zeros(n);
    for i in 0..=n {
        for j in 0..=n {
            u.set(i, j, d(&|jj| psi.get(i, jj), j));
            v.set(i, j, -d(&|ii| psi.get(ii, j), i));
        }
    }
    (u, v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdmSolution {
    pub n: usize,
    pub re: f64,
    pub iterations: usize,
    pub u: GridField,
    pub v: GridField,
    pub psi: GridField,
    pub omega: GridField,
}

fn max_change(a: &GridField, b: &GridField) -> f64 {
    a.values.iter().zip(&b.values).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// One outer time step: vorticity transport, stream function, wall vorticity.
/// The Poisson solve starts from `2ψⁿ − ψⁿ⁻¹`; `prev` is updated to `ψⁿ`.
fn advance(psi: &mut GridField, prev: &mut GridField, omega: &mut GridField, cfg: &FdmConfig) -> Result<()> {
    *omega = step_vorticity(omega, psi, cfg)?;
    for (p, q) in psi.values.iter_mut().zip(prev.values.iter_mut()) {
        let current = *p;
        *p = 2.0 * current - *q;
        *q = current;
    }
    apply_psi_boundary(psi);
    relax_poisson(psi, omega, cfg)?;
    woods_boundary_vorticity(psi, omega)
}

/// March from rest until the velocity change per unit time drops below
/// `epsilon` in both components.
pub fn run_to_steady_state(cfg: &FdmConfig) -> Result<FdmSolution> {
    cfg.validate()?;
    let n = cfg.n;
    let mut psi = GridField::zeros(n);
    apply_psi_boundary(&mut psi);
    let mut omega = GridField::zeros(n);
    woods_boundary_vorticity(&psi, &mut omega)?;
    let (mut u, mut v) = recover_velocity(&psi);
    let mut prev = psi.clone();
    for it in 1..=cfg.max_iterations {
        advance(&mut psi, &mut prev, &mut omega, cfg)
            .map_err(|e| Error::Numeric(format!("time step {it}: {e}")))?;
        let (u_new, v_new) = recover_velocity(&psi);
        let err = max_change(&u_new, &u).max(max_change(&v_new, &v)) / cfg.dt;
        u = u_new;
        v = v_new;
        if err < cfg.epsilon {
            return Ok(FdmSolution { n, re: cfg.re, iterations: it, u, v, psi, omega });
        }
    }
    Err(Error::NonConvergence(format!("no steady state within {} time steps", cfg.max_iterations)))
}

impl FdmSolution {
    /// One further outer step from this state, with the Poisson solve
    /// warm-started at the current ψ.
    pub fn advance_once(&self, cfg: &FdmConfig) -> Result<FdmSolution> {
        let mut psi = self.psi.clone();
        let mut prev = self.psi.clone();
        let mut omega = self.omega.clone();
        advance(&mut psi, &mut prev, &mut omega, cfg)?;
        let (u, v) = recover_velocity(&psi);
        Ok(FdmSolution { n: self.n, re: self.re, iterations: self.iterations + 1, u, v, psi, omega })
    }

    /// CSV: a metadata header (`N,Re,iterations`) and its row, then one row per
    /// node `i,j,x,y,u,v,psi,omega` in 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.n;
        let mut s = format!("N,Re,iterations\n{},{:.16e},{}\ni,j,x,y,u,v,psi,omega\n", n, self.re, self.iterations);
        for i in 0..=n {
            for j in 0..=n {
                let _ = writeln!(
                    s,
                    "{i},{j},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    i as f64 / n as f64,
                    j as f64 / n as f64,
                    self.u.get(i, j),
                    self.v.get(i, j),
                    self.psi.get(i, j),
                    self.omega.get(i, j)
                );
            }
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Parse(format!("reference file: {msg}"));
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| lines.next().ok_or_else(|| bad(format!("missing {what}")));
        let (_, head) = next("header")?;
        if head.trim() != "N,Re,iterations" {
            return Err(bad("expected header 'N,Re,iterations'".into()));
        }
        let (_, meta) = next("metadata row")?;
        let meta: Vec<&str> = meta.split(',').collect();
        if meta.len() != 3 {
            return Err(bad("metadata row needs 3 fields".into()));
        }
        let n: usize = meta[0].trim().parse().map_err(|e| bad(format!("N: {e}")))?;
        let re: f64 = meta[1].trim().parse().map_err(|e| bad(format!("Re: {e}")))?;
        let iterations: usize = meta[2].trim().parse().map_err(|e| bad(format!("iterations: {e}")))?;
        if n < 2 {
            return Err(bad(format!("N = {n} is too small")));
        }
        let (_, cols) = next("column header")?;
        if cols.trim() != "i,j,x,y,u,v,psi,omega" {
            return Err(bad("expected column header 'i,j,x,y,u,v,psi,omega'".into()));
        }
        let mut fields = [GridField::zeros(n), GridField::zeros(n), GridField::zeros(n), GridField::zeros(n)];
        let mut seen = vec![false; (n + 1) * (n + 1)];
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad(format!("line {}: expected 8 fields", ln + 1)));
            }
            let idx = |k: usize| -> Result<usize> {
                let v: usize = f[k].trim().parse().map_err(|e| bad(format!("line {}: {e}", ln + 1)))?;
                if v > n {
                    return Err(bad(format!("line {}: node index {v} outside grid", ln + 1)));
                }
                Ok(v)
            };
            let (i, j) = (idx(0)?, idx(1)?);
            for (slot, field) in fields.iter_mut().enumerate() {
                let v: f64 = f[4 + slot].trim().parse().map_err(|e| bad(format!("line {}: {e}", ln + 1)))?;
                if !v.is_finite() {
                    return Err(bad(format!("line {}: non-finite value", ln + 1)));
                }
                field.set(i, j, v);
            }
            seen[i * (n + 1) + j] = true;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(bad(format!("node ({}, {}) missing", k / (n + 1), k % (n + 1))));
        }
        let [u, v, psi, omega] = fields;
        Ok(Self { n, re, iterations, u, v, psi, omega })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::parse_csv(&text)
    }

    /// Every node with its velocity `(u, v)` as a scoring reference.
    pub fn to_reference(&self) -> Reference {
        let n = self.n;
        let count = (n + 1) * (n + 1);
        let mut points = Array2::zeros((count, 2));
        let mut values = Array2::zeros((count, 2));
        for i in 0..=n {
            for j in 0..=n {
                let r = i * (n + 1) + j;
                points[[r, 0]] = i as f64 / n as f64;
                points[[r, 1]] = j as f64 / n as f64;
                values[[r, 0]] = self.u.get(i, j);
                values[[r, 1]] = self.v.get(i, j);
            }
        }
        Reference { points, values }
    }
}
