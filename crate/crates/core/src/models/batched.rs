//! Whole-batch jet evaluation with a hand-written reverse sweep.
//!
//! Activations are stored as `(K·B) × features` matrices, plane-major: rows
//! `s·B .. (s+1)·B` hold jet coefficient `s` for every point. A dense layer is
//! then one matrix product over all planes, with the bias added to plane 0
//! only, and elementwise operations walk the Leibniz / Faà di Bruno tables of
//! the [`JetLayout`] one contiguous plane at a time.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, ArrayViewMut2};

use super::{Dense, NetworkConfig, Shape};
use crate::autodiff::{Jet, JetLayout};
use crate::{Error, Result};

/// Reuses activation buffers across calls so that repeated training steps do
/// not return memory to the OS and fault it back in every iteration.
mod pool {
    use std::cell::RefCell;

    use ndarray::Array2;

    const MAX_KEPT: usize = 256;

    thread_local! {
        static FREE: RefCell<Vec<Vec<f64>>> = const { RefCell::new(Vec::new()) };
    }

    pub fn vec_zeros(len: usize) -> Vec<f64> {
        let mut v = FREE.with(|free| {
            let mut free = free.borrow_mut();
            let best = free
                .iter()
                .enumerate()
                .filter(|(_, b)| b.capacity() >= len)
                .min_by_key(|(_, b)| b.capacity())
                .map(|(i, _)| i);
            match best {
                Some(i) => free.swap_remove(i),
                None => Vec::with_capacity(len),
            }
        });
        v.clear();
        v.resize(len, 0.0);
        v
    }

    pub fn zeros(shape: (usize, usize)) -> Array2<f64> {
        Array2::from_shape_vec(shape, vec_zeros(shape.0 * shape.1)).expect("length matches shape")
    }

    pub fn recycle_vec(v: Vec<f64>) {
        if v.capacity() == 0 {
            return;
        }
        FREE.with(|free| {
            let mut free = free.borrow_mut();
            if free.len() < MAX_KEPT {
                free.push(v);
            }
        });
    }

    pub fn recycle(a: Array2<f64>) {
        let (v, _) = a.into_raw_vec_and_offset();
        recycle_vec(v);
    }
}

/// Affine input map `x ↦ (x − shift) · scale` applied ahead of the first layer.
/// Jets stay derivatives with respect to the raw coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputMap {
    pub shift: [f64; 2],
    pub scale: [f64; 2],
}

impl InputMap {
    pub const IDENTITY: InputMap = InputMap { shift: [0.0; 2], scale: [1.0; 2] };

    /// Sends the box `[lo, hi]` onto `[−1, 1]` per axis.
    pub fn unit_box(lo: [f64; 2], hi: [f64; 2]) -> Self {
        let mut m = Self::IDENTITY;
        for d in 0..2 {
            if hi[d] > lo[d] {
                m.shift[d] = 0.5 * (lo[d] + hi[d]);
                m.scale[d] = 2.0 / (hi[d] - lo[d]);
            }
        }
        m
    }

    fn axis(&self, d: usize) -> (f64, f64) {
        if d < 2 {
            (self.shift[d], self.scale[d])
        } else {
            (0.0, 1.0)
        }
    }

    pub fn apply(&self, d: usize, x: f64) -> f64 {
        let (c, k) = self.axis(d);
        (x - c) * k
    }
}

/// Jets of several features at `batch` points, plane-major.
#[derive(Clone, Debug)]
pub struct JetBatch {
    layout: &'static JetLayout,
    batch: usize,
    data: Array2<f64>,
}

impl JetBatch {
    /// Coordinate jets `x_i` at each row of `points` (`B × dims`).
    pub fn inputs(points: ArrayView2<'_, f64>, order: usize) -> Result<Self> {
        Self::mapped_inputs(points, order, &InputMap::IDENTITY)
    }

    /// Jets of the mapped coordinates: value `(x_i − c_i)·k_i`, first partial `k_i`.
    pub fn mapped_inputs(points: ArrayView2<'_, f64>, order: usize, map: &InputMap) -> Result<Self> {
        let (b, d) = points.dim();
        let layout = JetLayout::get(d, order)?;
        let mut data = pool::zeros((layout.len() * b, d));
        for i in 0..d {
            let mut col = data.slice_mut(s![..b, i]);
            col.assign(&points.column(i));
            col.mapv_inplace(|x| map.apply(i, x));
            if order >= 1 {
                data.slice_mut(s![(1 + i) * b..(2 + i) * b, i]).fill(map.axis(i).1);
            }
        }
        Ok(Self { layout, batch: b, data })
    }

    pub fn from_data(layout: &'static JetLayout, batch: usize, data: Array2<f64>) -> Result<Self> {
        if data.nrows() != layout.len() * batch {
            return Err(Error::Shape(format!("expected {} rows, got {}", layout.len() * batch, data.nrows())));
        }
        Ok(Self { layout, batch, data })
    }

    pub fn layout(&self) -> &'static JetLayout {
        self.layout
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn features(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn coeff(&self, slot: usize, point: usize, feature: usize) -> f64 {
        self.data[[slot * self.batch + point, feature]]
    }

    /// Plane 0: `B × features` values.
    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.data.slice(s![..self.batch, ..])
    }

    pub fn jet(&self, point: usize, feature: usize) -> Jet<f64> {
        let k = self.layout.len();
        let mut c = [0.0; crate::autodiff::MAX_SLOTS];
        for (slot, v) in c.iter_mut().enumerate().take(k) {
            *v = self.coeff(slot, point, feature);
        }
        Jet::from_coeffs(self.layout, &c[..k]).expect("slot count matches layout")
    }
}

/// tanh of every jet plus the cached derivatives `f⁽ᵐ⁾(z₀)`, `m = 0..=order+1`.
struct Tanh {
    derivs: Vec<f64>,
}

fn tanh_forward(layout: &JetLayout, z: &Array2<f64>, b: usize) -> (Array2<f64>, Tanh) {
    let m = z.ncols();
    let n = b * m;
    let order = layout.order();
    let nf = order + 2;
    let zs = z.as_slice().expect("standard layout");
    let mut f = pool::vec_zeros(nf * n);
    for e in 0..n {
        let t = zs[e].tanh();
        let f1 = 1.0 - t * t;
        let f2 = -2.0 * t * f1;
        let f3 = -2.0 * (f1 * f1 + t * f2);
        let f4 = -2.0 * (3.0 * f1 * f2 + t * f3);
        let all = [t, f1, f2, f3, f4];
        for (k, v) in all.iter().enumerate().take(nf) {
            f[k * n + e] = *v;
        }
    }
    let mut y = pool::zeros(z.dim());
    let ys = y.as_slice_mut().expect("standard layout");
    for slot in 0..layout.len() {
        let out = &mut ys[slot * n..(slot + 1) * n];
        for term in layout.compose_terms(slot) {
            let fd = &f[term.deriv * n..(term.deriv + 1) * n];
            let p = |k: usize| &zs[term.factors[k] * n..(term.factors[k] + 1) * n];
            let mult = term.mult;
            match term.factors.len() {
                0 => out.iter_mut().zip(fd).for_each(|(o, f)| *o += mult * f),
                1 => {
                    let a = p(0);
                    for e in 0..n {
                        out[e] += mult * fd[e] * a[e];
                    }
                }
                2 => {
                    let (a, c) = (p(0), p(1));
                    for e in 0..n {
                        out[e] += mult * fd[e] * a[e] * c[e];
                    }
                }
                _ => {
                    let (a, c, d) = (p(0), p(1), p(2));
                    for e in 0..n {
                        out[e] += mult * fd[e] * a[e] * c[e] * d[e];
                    }
                }
            }
        }
    }
    (y, Tanh { derivs: f })
}

fn tanh_backward(layout: &JetLayout, z: &Array2<f64>, cache: &Tanh, ybar: &Array2<f64>, b: usize) -> Array2<f64> {
    let n = b * z.ncols();
    let zs = z.as_slice().expect("standard layout");
    let yb = ybar.as_slice().expect("standard layout");
    let f = &cache.derivs;
    let mut zbar = pool::zeros(z.dim());
    let zb = zbar.as_slice_mut().expect("standard layout");
    let plane = |k: usize| k * n..(k + 1) * n;
    let mut scratch = pool::vec_zeros(3 * n);
    // Each term m·f⁽ᵈ⁾(z₀)·Π z_fᵢ feeds z̄₀ through f⁽ᵈ⁺¹⁾ and every z̄_fᵢ through the remaining factors.
    for slot in 0..layout.len() {
        let g = &yb[plane(slot)];
        for term in layout.compose_terms(slot) {
            let (d, m) = (term.deriv, term.mult);
            let fd = &f[plane(d)];
            let fd1 = &f[plane(d + 1)];
            match term.factors[..] {
                [] => {
                    let z0 = &mut zb[plane(0)];
                    for e in 0..n {
                        z0[e] += m * g[e] * fd1[e];
                    }
                }
                [a] => {
                    let za = &zs[plane(a)];
                    let da = &mut scratch[..n];
                    {
                        let z0 = &mut zb[plane(0)];
                        for e in 0..n {
                            let mg = m * g[e];
                            z0[e] += mg * fd1[e] * za[e];
                            da[e] = mg * fd[e];
                        }
                    }
                    zb[plane(a)].iter_mut().zip(da.iter()).for_each(|(o, v)| *o += v);
                }
                [a, c] => {
                    let (za, zc) = (&zs[plane(a)], &zs[plane(c)]);
                    let (da, rest) = scratch.split_at_mut(n);
                    let dc = &mut rest[..n];
                    {
                        let z0 = &mut zb[plane(0)];
                        for e in 0..n {
                            let mg = m * g[e];
                            z0[e] += mg * fd1[e] * za[e] * zc[e];
                            let w = mg * fd[e];
                            da[e] = w * zc[e];
                            dc[e] = w * za[e];
                        }
                    }
                    zb[plane(a)].iter_mut().zip(da.iter()).for_each(|(o, v)| *o += v);
                    zb[plane(c)].iter_mut().zip(dc.iter()).for_each(|(o, v)| *o += v);
                }
                [a, c, q] => {
                    let (za, zc, zq) = (&zs[plane(a)], &zs[plane(c)], &zs[plane(q)]);
                    let (da, rest) = scratch.split_at_mut(n);
                    let (dc, dq) = rest.split_at_mut(n);
                    {
                        let z0 = &mut zb[plane(0)];
                        for e in 0..n {
                            let mg = m * g[e];
                            z0[e] += mg * fd1[e] * za[e] * zc[e] * zq[e];
                            let w = mg * fd[e];
                            da[e] = w * zc[e] * zq[e];
                            dc[e] = w * za[e] * zq[e];
                            dq[e] = w * za[e] * zc[e];
                        }
                    }
                    zb[plane(a)].iter_mut().zip(da.iter()).for_each(|(o, v)| *o += v);
                    zb[plane(c)].iter_mut().zip(dc.iter()).for_each(|(o, v)| *o += v);
                    zb[plane(q)].iter_mut().zip(dq.iter()).for_each(|(o, v)| *o += v);
                }
                _ => unreachable!("jets hold at most third-order terms"),
            }
        }
    }
    pool::recycle_vec(scratch);
    zbar
}

/// Elementwise jet product.
fn product_forward(layout: &JetLayout, a: &Array2<f64>, c: &Array2<f64>, b: usize) -> Array2<f64> {
    let n = b * a.ncols();
    let (as_, cs) = (a.as_slice().expect("standard layout"), c.as_slice().expect("standard layout"));
    let mut y = pool::zeros(a.dim());
    let ys = y.as_slice_mut().expect("standard layout");
    for slot in 0..layout.len() {
        for &(p, q, mult) in layout.product_terms(slot) {
            for e in 0..n {
                ys[slot * n + e] += mult * as_[p * n + e] * cs[q * n + e];
            }
        }
    }
    y
}

fn product_backward(
    layout: &JetLayout,
    a: &Array2<f64>,
    c: &Array2<f64>,
    ybar: &Array2<f64>,
    b: usize,
) -> (Array2<f64>, Array2<f64>) {
    let n = b * a.ncols();
    let (as_, cs) = (a.as_slice().expect("standard layout"), c.as_slice().expect("standard layout"));
    let yb = ybar.as_slice().expect("standard layout");
    let mut abar = pool::zeros(a.dim());
    let mut cbar = pool::zeros(c.dim());
    {
        let ab = abar.as_slice_mut().expect("standard layout");
        let cb = cbar.as_slice_mut().expect("standard layout");
        for slot in 0..layout.len() {
            for &(p, q, mult) in layout.product_terms(slot) {
                for e in 0..n {
                    let g = mult * yb[slot * n + e];
                    ab[p * n + e] += g * cs[q * n + e];
                    cb[q * n + e] += g * as_[p * n + e];
                }
            }
        }
    }
    (abar, cbar)
}

fn weights<'a>(params: &'a [f64], d: &Dense) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((d.fan_in, d.fan_out), &params[d.w..d.w + d.fan_in * d.fan_out]).expect("block shape")
}

fn dense_forward(params: &[f64], d: &Dense, a: &Array2<f64>, b: usize) -> Array2<f64> {
    let mut z = pool::zeros((a.nrows(), d.fan_out));
    general_mat_mul(1.0, a, &weights(params, d), 0.0, &mut z);
    let bias = &params[d.b..d.b + d.fan_out];
    for mut row in z.rows_mut().into_iter().take(b) {
        row.iter_mut().zip(bias).for_each(|(v, bj)| *v += bj);
    }
    z
}

/// Accumulate `W̄ += AᵀZ̄`, `b̄ += Σ value rows of Z̄`; return `Ā = Z̄Wᵀ` if asked.
fn dense_backward(
    params: &[f64],
    d: &Dense,
    a: &Array2<f64>,
    zbar: &Array2<f64>,
    b: usize,
    grad: &mut [f64],
    need_input: bool,
) -> Option<Array2<f64>> {
    {
        let mut gw = ArrayViewMut2::from_shape((d.fan_in, d.fan_out), &mut grad[d.w..d.w + d.fan_in * d.fan_out])
            .expect("block shape");
        general_mat_mul(1.0, &a.t(), zbar, 1.0, &mut gw);
    }
    let gb = &mut grad[d.b..d.b + d.fan_out];
    for row in zbar.rows().into_iter().take(b) {
        gb.iter_mut().zip(row).for_each(|(g, v)| *g += v);
    }
    need_input.then(|| {
        let mut abar = pool::zeros(a.dim());
        general_mat_mul(1.0, zbar, &weights(params, d).t(), 0.0, &mut abar);
        abar
    })
}

enum Cache {
    Plain {
        /// Input to each dense layer.
        inputs: Vec<Array2<f64>>,
        /// Pre-activations of the hidden layers.
        pre: Vec<Array2<f64>>,
        tanh: Vec<Tanh>,
    },
    Improved {
        x: Array2<f64>,
        zu: Array2<f64>,
        tu: Tanh,
        zv: Array2<f64>,
        tv: Tanh,
        diff: Array2<f64>,
        ze: Array2<f64>,
        te: Tanh,
        /// `H^k` for k = 1..=L+1.
        h: Vec<Array2<f64>>,
        zg: Vec<Array2<f64>>,
        tg: Vec<Tanh>,
        gates: Vec<Array2<f64>>,
    },
}

impl Cache {
    fn recycle(self) {
        let arrays = |v: Vec<Array2<f64>>| v.into_iter().for_each(pool::recycle);
        let tanhs = |v: Vec<Tanh>| v.into_iter().for_each(|t| pool::recycle_vec(t.derivs));
        match self {
            Cache::Plain { inputs, pre, tanh } => {
                arrays(inputs);
                arrays(pre);
                tanhs(tanh);
            }
            Cache::Improved { x, zu, tu, zv, tv, diff, ze, te, h, zg, tg, gates } => {
                arrays(vec![x, zu, zv, diff, ze]);
                tanhs(vec![tu, tv, te]);
                arrays(h);
                arrays(zg);
                tanhs(tg);
                arrays(gates);
            }
        }
    }
}

/// Network outputs plus everything the reverse sweep needs.
pub struct BatchForward {
    output: JetBatch,
    cache: Option<Cache>,
}

impl BatchForward {
    pub fn output(&self) -> &JetBatch {
        &self.output
    }
}

impl Drop for BatchForward {
    fn drop(&mut self) {
        if let Some(cache) = self.cache.take() {
            cache.recycle();
        }
        pool::recycle(std::mem::take(&mut self.output.data));
    }
}

/// Evaluate the network on `points` (`B × input_dim`) with jets of `order`.
pub fn forward_batch(config: &NetworkConfig, params: &[f64], points: ArrayView2<'_, f64>, order: usize) -> Result<BatchForward> {
    forward_batch_mapped(config, params, points, order, &InputMap::IDENTITY)
}

/// [`forward_batch`] behind an input map.
pub fn forward_batch_mapped(
    config: &NetworkConfig,
    params: &[f64],
    points: ArrayView2<'_, f64>,
    order: usize,
    map: &InputMap,
) -> Result<BatchForward> {
    config.validate()?;
    if params.len() != config.param_count() {
        return Err(Error::Shape(format!("expected {} parameters, got {}", config.param_count(), params.len())));
    }
    if points.ncols() != config.input_dim {
        return Err(Error::Shape(format!("points have {} columns, network expects {}", points.ncols(), config.input_dim)));
    }
    let x = JetBatch::mapped_inputs(points, order, map)?;
    let (layout, b) = (x.layout, x.batch);
    let x = x.data;
    let (out, cache) = match config.shape() {
        Shape::Plain(layers) => {
            let (last, hidden) = layers.split_last().expect("at least one layer");
            let mut inputs = Vec::with_capacity(layers.len());
            let mut pre = Vec::with_capacity(hidden.len());
            let mut tanh = Vec::with_capacity(hidden.len());
            let mut a = x;
            for d in hidden {
                let z = dense_forward(params, d, &a, b);
                let (y, t) = tanh_forward(layout, &z, b);
                inputs.push(a);
                pre.push(z);
                tanh.push(t);
                a = y;
            }
            let out = dense_forward(params, last, &a, b);
            inputs.push(a);
            (out, Cache::Plain { inputs, pre, tanh })
        }
        Shape::Improved { u, v, embed, gates, out } => {
            let zu = dense_forward(params, &u, &x, b);
            let (uu, tu) = tanh_forward(layout, &zu, b);
            let zv = dense_forward(params, &v, &x, b);
            let (mut diff, tv) = tanh_forward(layout, &zv, b);
            diff -= &uu;
            let ze = dense_forward(params, &embed, &x, b);
            let (h1, te) = tanh_forward(layout, &ze, b);
            let mut h = vec![h1];
            let (mut zg, mut tg, mut gs) = (Vec::new(), Vec::new(), Vec::new());
            for g in &gates {
                let z = dense_forward(params, g, h.last().expect("non-empty"), b);
                let (gate, t) = tanh_forward(layout, &z, b);
                let mut next = product_forward(layout, &gate, &diff, b);
                next += &uu;
                zg.push(z);
                tg.push(t);
                gs.push(gate);
                h.push(next);
            }
            pool::recycle(uu);
            let y = dense_forward(params, &out, h.last().expect("non-empty"), b);
            (y, Cache::Improved { x, zu, tu, zv, tv, diff, ze, te, h, zg, tg, gates: gs })
        }
    };
    Ok(BatchForward { output: JetBatch { layout, batch: b, data: out }, cache: Some(cache) })
}

/// Parameter gradient of `Σ out_adjoint ⊙ output` (both `(K·B) × output_dim`).
pub fn backward_batch(config: &NetworkConfig, params: &[f64], fwd: &BatchForward, out_adjoint: &Array2<f64>) -> Result<Vec<f64>> {
    if out_adjoint.dim() != fwd.output.data.dim() {
        return Err(Error::Shape(format!(
            "adjoint shape {:?} does not match output shape {:?}",
            out_adjoint.dim(),
            fwd.output.data.dim()
        )));
    }
    let layout = fwd.output.layout;
    let b = fwd.output.batch;
    let mut grad = vec![0.0; params.len()];
    match (config.shape(), fwd.cache.as_ref().expect("cache lives until drop")) {
        (Shape::Plain(layers), Cache::Plain { inputs, pre, tanh }) => {
            let l = layers.len() - 1;
            let mut abar = dense_backward(params, &layers[l], &inputs[l], out_adjoint, b, &mut grad, l > 0);
            for k in (0..l).rev() {
                let ybar = abar.take().expect("hidden adjoint");
                let zbar = tanh_backward(layout, &pre[k], &tanh[k], &ybar, b);
                pool::recycle(ybar);
                abar = dense_backward(params, &layers[k], &inputs[k], &zbar, b, &mut grad, k > 0);
                pool::recycle(zbar);
            }
        }
        (Shape::Improved { u, v, embed, gates, out }, Cache::Improved { x, zu, tu, zv, tv, diff, ze, te, h, zg, tg, gates: gs }) => {
            let l = gates.len();
            let mut hbar = dense_backward(params, &out, &h[l], out_adjoint, b, &mut grad, true).expect("requested");
            let mut ubar = pool::zeros(hbar.dim());
            let mut dbar = pool::zeros(hbar.dim());
            for k in (0..l).rev() {
                // H^{k+1} = U + Z^k ⊙ (V − U)
                ubar += &hbar;
                let (gbar, db) = product_backward(layout, &gs[k], diff, &hbar, b);
                dbar += &db;
                pool::recycle(db);
                pool::recycle(hbar);
                let zbar = tanh_backward(layout, &zg[k], &tg[k], &gbar, b);
                pool::recycle(gbar);
                hbar = dense_backward(params, &gates[k], &h[k], &zbar, b, &mut grad, true).expect("requested");
                pool::recycle(zbar);
            }
            let zebar = tanh_backward(layout, ze, te, &hbar, b);
            pool::recycle(hbar);
            dense_backward(params, &embed, x, &zebar, b, &mut grad, false);
            pool::recycle(zebar);
            // diff = V − U
            ubar -= &dbar;
            let zvbar = tanh_backward(layout, zv, tv, &dbar, b);
            pool::recycle(dbar);
            dense_backward(params, &v, x, &zvbar, b, &mut grad, false);
            pool::recycle(zvbar);
            let zubar = tanh_backward(layout, zu, tu, &ubar, b);
            pool::recycle(ubar);
            dense_backward(params, &u, x, &zubar, b, &mut grad, false);
            pool::recycle(zubar);
        }
        _ => return Err(Error::Contract("forward cache does not match the network architecture".into())),
    }
    Ok(grad)
}

/// Plain network values at `points` (`B × out`), evaluated in chunks.
pub fn predict(config: &NetworkConfig, params: &[f64], points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    const CHUNK: usize = 2048;
    let mut out = Array2::zeros((points.nrows(), config.output_dim));
    let mut start = 0;
    while start < points.nrows() {
        let end = (start + CHUNK).min(points.nrows());
        let fwd = forward_batch(config, params, points.slice(s![start..end, ..]), 0)?;
        out.slice_mut(s![start..end, ..]).assign(&fwd.output.data);
        start = end;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::models::{forward, glorot_init, Architecture};
    use ndarray::Array2;

    fn config(arch: Architecture, d: usize, out: usize, order: usize) -> NetworkConfig {
        NetworkConfig { architecture: arch, input_dim: d, output_dim: out, hidden_layers: 3, width: 5, jet_order: order }
    }

    fn points(b: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_fn((b, d), |(i, j)| ((i * 7 + j * 3) as f64 * 0.37).sin())
    }

    #[test]
    fn batched_matches_per_point_jets() {
        for arch in [Architecture::Plain, Architecture::Improved] {
            for (d, order) in [(1, 0), (1, 3), (2, 2), (2, 3)] {
                let c = config(arch, d, 2, order);
                let p = glorot_init(3, &c).unwrap();
                let pts = points(4, d);
                let fwd = forward_batch(&c, p.values(), pts.view(), order).unwrap();
                let layout = JetLayout::get(d, order).unwrap();
                for i in 0..4 {
                    let x: Vec<_> = (0..d).map(|k| Jet::variable(layout, pts[[i, k]], k).unwrap()).collect();
                    let reference = forward(&c, p.values(), &x).unwrap();
                    for (o, r) in reference.iter().enumerate() {
                        let got = fwd.output().jet(i, o);
                        for (a, e) in got.coeffs().iter().zip(r.coeffs()) {
                            assert!((a - e).abs() <= 1e-13 * (1.0 + e.abs()), "{arch:?} d{d} o{order}: {a} vs {e}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn batched_backward_matches_tape() {
        for arch in [Architecture::Plain, Architecture::Improved] {
            for (d, order) in [(1, 2), (2, 3)] {
                let c = config(arch, d, 2, order);
                let p = glorot_init(11, &c).unwrap();
                let pts = points(3, d);
                let fwd = forward_batch(&c, p.values(), pts.view(), order).unwrap();
                let adj = Array2::from_shape_fn(fwd.output().data().dim(), |(r, k)| ((r * 5 + k) as f64 * 0.91).cos());
                let g = backward_batch(&c, p.values(), &fwd, &adj).unwrap();

                let tape = Tape::new();
                let vars = tape.parameters(p.values());
                let layout = JetLayout::get(d, order).unwrap();
                let mut seeds = Vec::new();
                for i in 0..3 {
                    let x: Vec<_> = (0..d).map(|k| Jet::variable(layout, tape.constant(pts[[i, k]]), k).unwrap()).collect();
                    let out = forward(&c, &vars, &x).unwrap();
                    for (o, jet) in out.iter().enumerate() {
                        for (slot, v) in jet.coeffs().iter().enumerate() {
                            seeds.push((v.id(), adj[[slot * 3 + i, o]]));
                        }
                    }
                }
                let reference = tape.backward_seeded(&seeds).unwrap();
                for (a, e) in g.iter().zip(&reference) {
                    assert!((a - e).abs() <= 1e-12 * (1.0 + e.abs()), "{arch:?}: {a} vs {e}");
                }
            }
        }
    }

    #[test]
    fn predict_chunks_agree_with_single_pass() {
        let c = config(Architecture::Plain, 2, 1, 0);
        let p = glorot_init(2, &c).unwrap();
        let pts = points(5000, 2);
        let all = predict(&c, p.values(), pts.view()).unwrap();
        let head = forward_batch(&c, p.values(), pts.slice(s![..10, ..]), 0).unwrap();
        for i in 0..10 {
            assert_eq!(all[[i, 0]].to_bits(), head.output().values()[[i, 0]].to_bits());
        }
    }

    #[test]
    fn input_map_follows_the_chain_rule() {
        // N(k(x − c)): each differentiated axis contributes one factor k_i.
        let map = InputMap::unit_box([0.0, -2.0], [1.0, 6.0]);
        for arch in [Architecture::Plain, Architecture::Improved] {
            let c = config(arch, 2, 2, 3);
            let p = glorot_init(4, &c).unwrap();
            let pts = points(6, 2);
            let moved = Array2::from_shape_fn((6, 2), |(i, d)| map.apply(d, pts[[i, d]]));
            let mapped = forward_batch_mapped(&c, p.values(), pts.view(), 3, &map).unwrap();
            let plain = forward_batch(&c, p.values(), moved.view(), 3).unwrap();
            let layout = JetLayout::get(2, 3).unwrap();
            for slot in 0..layout.len() {
                let factor: f64 = layout.multi_index(slot).iter().map(|&d| map.scale[d]).product();
                for i in 0..6 {
                    for o in 0..2 {
                        let e = plain.output().coeff(slot, i, o) * factor;
                        let a = mapped.output().coeff(slot, i, o);
                        assert!((a - e).abs() <= 1e-12 * (1.0 + e.abs()), "slot {slot}: {a} vs {e}");
                    }
                }
            }
        }
    }

    #[test]
    fn unit_box_sends_corners_to_plus_minus_one() {
        let m = InputMap::unit_box([0.0, 2.0], [1.0, 10.0]);
        assert_eq!([m.apply(0, 0.0), m.apply(0, 1.0), m.apply(1, 2.0), m.apply(1, 10.0)], [-1.0, 1.0, -1.0, 1.0]);
        assert_eq!(InputMap::unit_box([-1.0, -1.0], [1.0, 1.0]), InputMap::IDENTITY);
        // A degenerate axis is left alone.
        assert_eq!(InputMap::unit_box([0.0, 0.0], [1.0, 0.0]).apply(1, 0.3), 0.3);
    }

    #[test]
    fn mismatched_adjoint_is_rejected() {
        let c = config(Architecture::Plain, 2, 1, 1);
        let p = glorot_init(2, &c).unwrap();
        let fwd = forward_batch(&c, p.values(), points(2, 2).view(), 1).unwrap();
        assert!(matches!(backward_batch(&c, p.values(), &fwd, &Array2::zeros((1, 1))), Err(Error::Shape(_))));
    }
}
