//! Second-order probes built on exact gradients: finite-difference
//! Hessian-vector products, power iteration for the dominant eigenvalue and
//! dense eigensolvers for small parameter counts.

use crate::rng::Stream;
use crate::{Error, Result};

/// Parameter-count guard for dense Hessians (O(n²) storage, O(n³) eigensolve).
pub const FULL_SPECTRUM_LIMIT: usize = 3000;

const JACOBI_MAX_SWEEPS: usize = 60;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Hessian-vector product by central differences of the gradient map:
/// `(∇L(θ+εv) − ∇L(θ−εv)) / 2ε` with `ε = √eps·(1+‖θ‖∞)/‖v‖∞`.
pub fn hvp<G>(mut grad: G, theta: &[f64], v: &[f64]) -> Result<Vec<f64>>
where
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if theta.len() != v.len() {
        return Err(Error::Shape(format!("direction has length {}, parameters {}", v.len(), theta.len())));
    }
    let vmax = inf_norm(v);
    if vmax == 0.0 || !vmax.is_finite() {
        return Err(Error::Domain("Hessian-vector product needs a non-zero finite direction".into()));
    }
    let eps = f64::EPSILON.sqrt() * (1.0 + inf_norm(theta)) / vmax;
    let shifted = |sign: f64| -> Vec<f64> { theta.iter().zip(v).map(|(t, d)| t + sign * eps * d).collect() };
    let plus = grad(&shifted(1.0))?;
    let minus = grad(&shifted(-1.0))?;
    if plus.len() != theta.len() || minus.len() != theta.len() {
        return Err(Error::Shape("gradient map returned a vector of the wrong length".into()));
    }
    let out: Vec<f64> = plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * eps)).collect();
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite gradient in Hessian-vector product".into()));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerIteration {
    /// Rayleigh quotient at the last iterate.
    pub lambda_max: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The operator mapped the iterate to zero; `lambda_max` is reported as 0.
    pub zero_operator: bool,
}

/// Dominant eigenvalue of a symmetric operator. Stops when the Rayleigh
/// quotient changes by less than `tol` relative, or after `max_iters`
/// applications. The start vector is Gaussian, drawn from `seed`.
pub fn power_iteration<A>(mut apply: A, dim: usize, max_iters: usize, tol: f64, seed: u64) -> Result<PowerIteration>
where
    A: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if dim == 0 {
        return Err(Error::Shape("power iteration needs dim >= 1".into()));
    }
    let mut rng = Stream::from_seed(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    normalize(&mut v);
    let mut lambda = f64::NAN;
    for it in 1..=max_iters.max(1) {
        let w = apply(&v)?;
        if w.len() != dim {
            return Err(Error::Shape("operator changed the vector length".into()));
        }
        let rq: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !rq.is_finite() || !norm.is_finite() {
            return Err(Error::Numeric(format!("non-finite iterate at power iteration step {it}")));
        }
        if norm == 0.0 {
            return Ok(PowerIteration { lambda_max: 0.0, iterations: it, converged: true, zero_operator: true });
        }
        let done = lambda.is_finite() && (rq - lambda).abs() < tol * rq.abs();
        lambda = rq;
        if done {
            return Ok(PowerIteration { lambda_max: lambda, iterations: it, converged: true, zero_operator: false });
        }
        v = w;
        for x in &mut v {
            *x /= norm;
        }
    }
    Ok(PowerIteration { lambda_max: lambda, iterations: max_iters.max(1), converged: false, zero_operator: false })
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v {
            *x /= n;
        }
    }
}

/// All Hessian eigenvalues in ascending order: the finite-difference Hessian is
/// assembled column by column with [`hvp`], symmetrised as `(H+Hᵀ)/2` and handed
/// to [`symmetric_eigenvalues`].
pub fn full_spectrum<G>(mut grad: G, theta: &[f64]) -> Result<Vec<f64>>
where
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = theta.len();
    if n > FULL_SPECTRUM_LIMIT {
        return Err(Error::Size(format!("{n} parameters exceed the dense spectrum limit of {FULL_SPECTRUM_LIMIT}")));
    }
    let mut h = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = hvp(&mut grad, theta, &e)?;
        e[j] = 0.0;
        for (i, c) in col.into_iter().enumerate() {
            h[i * n + j] = c;
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (h[i * n + j] + h[j * n + i]);
            h[i * n + j] = s;
            h[j * n + i] = s;
        }
    }
    symmetric_eigenvalues(h, n)
}

/// Eigenvalues (ascending) of a dense symmetric matrix stored row-major, by
/// Householder tridiagonalisation and implicit QR.
pub fn symmetric_eigenvalues(a: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    if a.len() != n * n {
        return Err(Error::Shape(format!("expected {}x{} matrix, got {} entries", n, n, a.len())));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite matrix entry".into()));
    }
    if n == 0 {
        return Ok(a);
    }
    let m = nalgebra::DMatrix::from_row_slice(n, n, &a);
    let mut eig: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Eigenvalues (ascending) of a dense symmetric matrix stored row-major, by
/// cyclic Jacobi rotations. Slower than [`symmetric_eigenvalues`]; kept as an
/// independent cross-check.
///
/// Cyclic Jacobi rotations in round-robin (parallel) order: each round zeroes
/// `n/2` disjoint off-diagonal pairs at once, so both the row and the column
/// updates run along contiguous memory.
pub fn jacobi_eigenvalues(mut a: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    if a.len() != n * n {
        return Err(Error::Shape(format!("expected {}x{} matrix, got {} entries", n, n, a.len())));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite matrix entry".into()));
    }
    if n <= 1 {
        return Ok(a);
    }
    let frob2: f64 = a.iter().map(|x| x * x).sum();
    let target = (f64::EPSILON * f64::EPSILON) * frob2;
    let m = n + n % 2;
    let mut players: Vec<usize> = (0..m).collect();
    let mut rotations: Vec<(usize, usize, f64, f64)> = Vec::with_capacity(m / 2);
    let mut converged = false;

    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n).map(|i| a[i * n + i + 1..(i + 1) * n].iter().map(|x| x * x).sum::<f64>()).sum();
        if off <= target || off == 0.0 {
            converged = true;
            break;
        }
        for _round in 0..m - 1 {
            rotations.clear();
            for k in 0..m / 2 {
                let (mut p, mut q) = (players[k], players[m - 1 - k]);
                if p >= n || q >= n {
                    continue;
                }
                if p > q {
                    std::mem::swap(&mut p, &mut q);
                }
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                rotations.push((p, q, c, t * c));
            }
            // A ← PᵀAP as two row passes: B = PᵀA, then PᵀBᵀ = (BP)ᵀ, which
            // equals BP because the result is symmetric.
            rotate_rows(&mut a, n, &rotations);
            transpose_in_place(&mut a, n);
            rotate_rows(&mut a, n, &rotations);
            for &(p, q, _, _) in &rotations {
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
            }
            players[1..].rotate_right(1);
        }
    }
    if !converged {
        return Err(Error::NonConvergence(format!("Jacobi eigensolver exceeded {JACOBI_MAX_SWEEPS} sweeps")));
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    Ok(eig)
}

fn rotate_rows(a: &mut [f64], n: usize, rotations: &[(usize, usize, f64, f64)]) {
    for &(p, q, c, s) in rotations {
        // p < q, so row p lies in the head and row q in the tail.
        let (head, tail) = a.split_at_mut(q * n);
        let rp = &mut head[p * n..(p + 1) * n];
        let rq = &mut tail[..n];
        for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
            let (xv, yv) = (*x, *y);
            *x = c * xv - s * yv;
            *y = s * xv + c * yv;
        }
    }
}

fn transpose_in_place(a: &mut [f64], n: usize) {
    const TILE: usize = 32;
    for bi in (0..n).step_by(TILE) {
        for bj in (bi..n).step_by(TILE) {
            for i in bi..(bi + TILE).min(n) {
                let start = if bi == bj { i + 1 } else { bj };
                for j in start..(bj + TILE).min(n) {
                    a.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}
