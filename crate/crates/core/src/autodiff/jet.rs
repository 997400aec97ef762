//! Truncated multivariate Taylor jets.
//!
//! A jet stores a value together with every partial derivative with respect
//! to the inputs up to a fixed order, one slot per *unique* multi-index. Slots
//! are ordered by total order and then lexicographically, e.g. for two inputs
//! at order three:
//!
//! ```text
//! [ u, u_x, u_y, u_xx, u_xy, u_yy, u_xxx, u_xxy, u_xyy, u_yyy ]
//! ```
//!
//! Products follow the general Leibniz rule and elementary functions follow
//! Faà di Bruno's formula; both are tabulated once per `(dims, order)` in a
//! [`JetLayout`] so the same tables drive per-point jets and the batched
//! network sweeps.

use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::OnceLock;

use super::Scalar;
use crate::{Error, Result};

/// Upper bound on slots: two inputs at order three.
pub const MAX_SLOTS: usize = 10;
const MAX_DIMS: usize = 2;
const MAX_ORDER: usize = 3;

/// One summand of `(f∘a)_α = Σ mult · f^(deriv)(a₀) · Π a_factors`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposeTerm {
    pub deriv: usize,
    pub factors: Vec<usize>,
    pub mult: f64,
}

#[derive(Debug)]
pub struct JetLayout {
    dims: usize,
    order: usize,
    multi: Vec<Vec<usize>>,
    product: Vec<Vec<(usize, usize, f64)>>,
    compose: Vec<Vec<ComposeTerm>>,
}

static LAYOUTS: OnceLock<Vec<JetLayout>> = OnceLock::new();

impl JetLayout {
    /// Shared layout for `dims` inputs (1 or 2) and derivative order 0–3.
    /// Order 0 jets are plain values and exist for data-fit batches.
    pub fn get(dims: usize, order: usize) -> Result<&'static JetLayout> {
        if !(1..=MAX_DIMS).contains(&dims) || order > MAX_ORDER {
            return Err(Error::Shape(format!(
                "jets support 1..={MAX_DIMS} inputs and order <= {MAX_ORDER}, got dims {dims} order {order}"
            )));
        }
        let all = LAYOUTS.get_or_init(|| {
            let mut v = Vec::new();
            for d in 1..=MAX_DIMS {
                for o in 0..=MAX_ORDER {
                    v.push(JetLayout::build(d, o));
                }
            }
            v
        });
        Ok(&all[(dims - 1) * (MAX_ORDER + 1) + order])
    }

    fn build(dims: usize, order: usize) -> Self {
        let mut multi: Vec<Vec<usize>> = Vec::new();
        for n in 0..=order {
            let mut current = Vec::with_capacity(n);
            push_sequences(dims, n, 0, &mut current, &mut multi);
        }
        let slot_of = |idx: &[usize]| -> usize {
            multi.iter().position(|m| m.as_slice() == idx).expect("slot exists")
        };

        let product = multi
            .iter()
            .map(|alpha| {
                let n = alpha.len();
                let mut terms: Vec<(usize, usize, f64)> = Vec::new();
                for mask in 0..(1usize << n) {
                    let a: Vec<usize> = (0..n).filter(|p| mask & (1 << p) != 0).map(|p| alpha[p]).collect();
                    let b: Vec<usize> = (0..n).filter(|p| mask & (1 << p) == 0).map(|p| alpha[p]).collect();
                    let (sa, sb) = (slot_of(&a), slot_of(&b));
                    match terms.iter_mut().find(|t| t.0 == sa && t.1 == sb) {
                        Some(t) => t.2 += 1.0,
                        None => terms.push((sa, sb, 1.0)),
                    }
                }
                terms
            })
            .collect();

        let compose = multi
            .iter()
            .map(|alpha| {
                let positions: Vec<usize> = (0..alpha.len()).collect();
                let mut terms: Vec<ComposeTerm> = Vec::new();
                for partition in set_partitions(&positions) {
                    let mut factors: Vec<usize> = partition
                        .iter()
                        .map(|block| {
                            let mut idx: Vec<usize> = block.iter().map(|&p| alpha[p]).collect();
                            idx.sort_unstable();
                            slot_of(&idx)
                        })
                        .collect();
                    factors.sort_unstable();
                    let deriv = factors.len();
                    match terms.iter_mut().find(|t| t.deriv == deriv && t.factors == factors) {
                        Some(t) => t.mult += 1.0,
                        None => terms.push(ComposeTerm { deriv, factors, mult: 1.0 }),
                    }
                }
                terms
            })
            .collect();

        Self { dims, order, multi, product, compose }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of stored coefficients.
    pub fn len(&self) -> usize {
        self.multi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multi.is_empty()
    }

    /// Sorted multi-index held by `slot` (empty for the value).
    pub fn multi_index(&self, slot: usize) -> &[usize] {
        &self.multi[slot]
    }

    /// Slot of a multi-index in any order, or `None` if it exceeds the jet order.
    pub fn slot(&self, index: &[usize]) -> Option<usize> {
        if index.len() > self.order || index.iter().any(|&i| i >= self.dims) {
            return None;
        }
        let mut sorted = [0usize; MAX_ORDER];
        sorted[..index.len()].copy_from_slice(index);
        sorted[..index.len()].sort_unstable();
        self.multi.iter().position(|m| m.as_slice() == &sorted[..index.len()])
    }

    /// Leibniz terms `(slot_a, slot_b, multiplicity)` of a product's `slot`.
    pub fn product_terms(&self, slot: usize) -> &[(usize, usize, f64)] {
        &self.product[slot]
    }

    /// Faà di Bruno terms of a composition's `slot`.
    pub fn compose_terms(&self, slot: usize) -> &[ComposeTerm] {
        &self.compose[slot]
    }

    fn same(&self, other: &JetLayout) -> bool {
        std::ptr::eq(self, other)
    }
}

fn push_sequences(dims: usize, n: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if current.len() == n {
        out.push(current.clone());
        return;
    }
    for d in start..dims {
        current.push(d);
        push_sequences(dims, n, d, current, out);
        current.pop();
    }
}

fn set_partitions(items: &[usize]) -> Vec<Vec<Vec<usize>>> {
    let Some((&first, rest)) = items.split_first() else {
        return vec![Vec::new()];
    };
    let mut out = Vec::new();
    for partition in set_partitions(rest) {
        for i in 0..partition.len() {
            let mut p = partition.clone();
            p[i].insert(0, first);
            out.push(p);
        }
        let mut p = partition;
        p.insert(0, vec![first]);
        out.push(p);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// A value with its input partials up to `layout.order()`.
#[derive(Clone, Copy, Debug)]
pub struct Jet<S: Scalar> {
    layout: &'static JetLayout,
    c: [S; MAX_SLOTS],
}

/// Checked binary arithmetic: rejects mismatched layouts and zero divisors.
pub fn jet_binary<S: Scalar>(op: BinaryOp, a: &Jet<S>, b: &Jet<S>) -> Result<Jet<S>> {
    if !a.layout.same(b.layout) {
        return Err(Error::Shape(format!(
            "jet layouts differ: (dims {}, order {}) vs (dims {}, order {})",
            a.layout.dims, a.layout.order, b.layout.dims, b.layout.order
        )));
    }
    Ok(match op {
        BinaryOp::Add => a.add_unchecked(b),
        BinaryOp::Sub => a.sub_unchecked(b),
        BinaryOp::Mul => a.mul_unchecked(b),
        BinaryOp::Div => a.mul_unchecked(&b.recip()?),
    })
}

impl<S: Scalar> Jet<S> {
    pub fn constant(layout: &'static JetLayout, value: S) -> Self {
        let mut c = [value.constant_like(0.0); MAX_SLOTS];
        c[0] = value;
        Self { layout, c }
    }

    /// The coordinate function `x_dim` evaluated at `value`.
    pub fn variable(layout: &'static JetLayout, value: S, dim: usize) -> Result<Self> {
        if dim >= layout.dims {
            return Err(Error::Shape(format!("input {dim} out of range for {} dims", layout.dims)));
        }
        let mut jet = Self::constant(layout, value);
        if layout.order >= 1 {
            jet.c[1 + dim] = value.constant_like(1.0);
        }
        Ok(jet)
    }

    pub fn from_coeffs(layout: &'static JetLayout, coeffs: &[S]) -> Result<Self> {
        if coeffs.len() != layout.len() {
            return Err(Error::Shape(format!(
                "expected {} jet coefficients, got {}",
                layout.len(),
                coeffs.len()
            )));
        }
        let mut c = [coeffs[0].constant_like(0.0); MAX_SLOTS];
        c[..coeffs.len()].copy_from_slice(coeffs);
        Ok(Self { layout, c })
    }

    pub fn layout(&self) -> &'static JetLayout {
        self.layout
    }

    pub fn order(&self) -> usize {
        self.layout.order
    }

    pub fn dims(&self) -> usize {
        self.layout.dims
    }

    pub fn value(&self) -> S {
        self.c[0]
    }

    pub fn coeffs(&self) -> &[S] {
        &self.c[..self.layout.len()]
    }

    /// Partial derivative for a multi-index given in any order, e.g. `&[0, 1]` for u_xy.
    ///
    /// Panics if the multi-index exceeds the jet's order or dimension.
    pub fn d(&self, index: &[usize]) -> S {
        let slot = self
            .layout
            .slot(index)
            .unwrap_or_else(|| panic!("derivative {index:?} not stored in jet of order {}", self.layout.order));
        self.c[slot]
    }

    pub fn try_d(&self, index: &[usize]) -> Option<S> {
        self.layout.slot(index).map(|s| self.c[s])
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.layout.same(other.layout)
    }

    fn map(&self, f: impl Fn(S) -> S) -> Self {
        let mut out = *self;
        for v in &mut out.c[..self.layout.len()] {
            *v = f(*v);
        }
        out
    }

    fn add_unchecked(&self, b: &Self) -> Self {
        let mut out = *self;
        for (o, &x) in out.c[..self.layout.len()].iter_mut().zip(&b.c) {
            *o = *o + x;
        }
        out
    }

    fn sub_unchecked(&self, b: &Self) -> Self {
        let mut out = *self;
        for (o, &x) in out.c[..self.layout.len()].iter_mut().zip(&b.c) {
            *o = *o - x;
        }
        out
    }

    fn mul_unchecked(&self, b: &Self) -> Self {
        let mut out = *self;
        for (slot, o) in out.c[..self.layout.len()].iter_mut().enumerate() {
            let mut acc: Option<S> = None;
            for &(p, q, mult) in self.layout.product_terms(slot) {
                let mut t = self.c[p] * b.c[q];
                if mult != 1.0 {
                    t = t * mult;
                }
                acc = Some(match acc {
                    Some(a) => a + t,
                    None => t,
                });
            }
            *o = acc.expect("every slot has a Leibniz term");
        }
        out
    }

    /// Multiply every coefficient by a real constant.
    pub fn scale(&self, k: f64) -> Self {
        self.map(|v| v * k)
    }

    /// Multiply every coefficient by a scalar (e.g. a network weight).
    pub fn scale_by(&self, k: S) -> Self {
        self.map(|v| v * k)
    }

    pub fn add_scalar(&self, k: f64) -> Self {
        let mut out = *self;
        out.c[0] = out.c[0] + k;
        out
    }

    pub fn add_value(&self, k: S) -> Self {
        let mut out = *self;
        out.c[0] = out.c[0] + k;
        out
    }

    /// `f∘self` given `f` and its derivatives at `self.value()`: `derivs[m] = f^(m)(a₀)`
    /// for `m = 0..=order`.
    pub fn compose(&self, derivs: &[S]) -> Self {
        assert!(derivs.len() > self.layout.order, "compose needs derivatives up to the jet order");
        let mut out = *self;
        for (slot, o) in out.c[..self.layout.len()].iter_mut().enumerate() {
            let mut acc: Option<S> = None;
            for term in self.layout.compose_terms(slot) {
                let mut t = derivs[term.deriv];
                for &f in &term.factors {
                    t = t * self.c[f];
                }
                if term.mult != 1.0 {
                    t = t * term.mult;
                }
                acc = Some(match acc {
                    Some(a) => a + t,
                    None => t,
                });
            }
            *o = acc.expect("every slot has a composition term");
        }
        out
    }

    pub fn tanh(&self) -> Self {
        let order = self.layout.order;
        let t = self.c[0].tanh();
        let mut f = [t; MAX_ORDER + 1];
        if order >= 1 {
            f[1] = -(t * t) + 1.0;
        }
        if order >= 2 {
            f[2] = t * f[1] * -2.0;
        }
        if order >= 3 {
            f[3] = (f[1] * f[1] + t * f[2]) * -2.0;
        }
        self.compose(&f[..=order])
    }

    pub fn sin(&self) -> Self {
        let (s, c) = (self.c[0].sin(), self.c[0].cos());
        self.compose(&[s, c, -s, -c][..=self.layout.order])
    }

    pub fn cos(&self) -> Self {
        let (s, c) = (self.c[0].sin(), self.c[0].cos());
        self.compose(&[c, -s, -c, s][..=self.layout.order])
    }

    pub fn exp(&self) -> Self {
        let e = self.c[0].exp();
        self.compose(&[e; MAX_ORDER + 1][..=self.layout.order])
    }

    /// Integer power. Negative exponents require a non-zero value.
    pub fn powi(&self, n: i32) -> Result<Self> {
        let x = self.c[0];
        if n < 0 && x.value() == 0.0 {
            return Err(Error::Domain("negative power of a zero-valued jet".into()));
        }
        let order = self.layout.order;
        let mut f = [x.constant_like(0.0); MAX_ORDER + 1];
        let mut falling = 1.0;
        for (m, fm) in f.iter_mut().enumerate().take(order + 1) {
            if m > 0 {
                falling *= f64::from(n - m as i32 + 1);
            }
            if falling != 0.0 {
                let p = n - m as i32;
                *fm = if p == 0 { x.constant_like(falling) } else { x.powi(p) * falling };
            }
        }
        Ok(self.compose(&f[..=order]))
    }

    pub fn recip(&self) -> Result<Self> {
        if self.c[0].value() == 0.0 {
            return Err(Error::Domain("division by a zero-valued jet".into()));
        }
        self.powi(-1)
    }
}

fn assert_same<S: Scalar>(a: &Jet<S>, b: &Jet<S>) {
    assert!(a.same_layout(b), "jet arithmetic between mismatched layouts; use jet_binary for a checked variant");
}

impl<S: Scalar> Add for Jet<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        assert_same(&self, &rhs);
        self.add_unchecked(&rhs)
    }
}

impl<S: Scalar> Sub for Jet<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        assert_same(&self, &rhs);
        self.sub_unchecked(&rhs)
    }
}

impl<S: Scalar> Mul for Jet<S> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        assert_same(&self, &rhs);
        self.mul_unchecked(&rhs)
    }
}

impl<S: Scalar> Div for Jet<S> {
    type Output = Self;
    /// Panics on mismatched layouts or a zero divisor; see [`jet_binary`].
    fn div(self, rhs: Self) -> Self {
        jet_binary(BinaryOp::Div, &self, &rhs).expect("jet division")
    }
}

impl<S: Scalar> Neg for Jet<S> {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(|v| -v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn jet1(order: usize, coeffs: &[f64]) -> Jet<f64> {
        Jet::from_coeffs(JetLayout::get(1, order).unwrap(), coeffs).unwrap()
    }

    #[test]
    fn layout_sizes() {
        let expect = [(1, 0, 1), (1, 1, 2), (1, 3, 4), (2, 1, 3), (2, 2, 6), (2, 3, 10)];
        for (d, o, n) in expect {
            assert_eq!(JetLayout::get(d, o).unwrap().len(), n);
        }
        assert!(JetLayout::get(3, 1).is_err());
        assert!(JetLayout::get(1, 4).is_err());
    }

    #[test]
    fn slot_lookup_is_symmetric() {
        let l = JetLayout::get(2, 3).unwrap();
        assert_eq!(l.slot(&[0, 1]), l.slot(&[1, 0]));
        assert_eq!(l.slot(&[1, 0, 1]), l.slot(&[0, 1, 1]));
        assert_eq!(l.slot(&[0, 1]), Some(4));
        assert_eq!(l.slot(&[0, 0, 0, 0]), None);
    }

    #[test]
    fn faa_di_bruno_mixed_third_order_terms() {
        let l = JetLayout::get(2, 3).unwrap();
        let xxy = l.slot(&[0, 0, 1]).unwrap();
        let terms = l.compose_terms(xxy);
        let total: f64 = terms.iter().map(|t| t.mult).sum();
        // Bell(3) = 5 set partitions.
        assert_eq!(total, 5.0);
        let xy = l.slot(&[0, 1]).unwrap();
        let x = l.slot(&[0]).unwrap();
        assert!(terms.iter().any(|t| t.deriv == 2 && t.factors == vec![x, xy] && t.mult == 2.0));
    }

    #[test]
    fn product_rule_first_order() {
        let a = jet1(1, &[2.0, 3.0]);
        let b = jet1(1, &[5.0, 7.0]);
        let p = a * b;
        assert_eq!(p.value(), 10.0);
        assert_eq!(p.d(&[0]), 29.0);
    }

    #[test]
    fn product_rule_second_order() {
        let a = jet1(2, &[1.0, 1.0, 0.0]);
        let p = a * a;
        assert_eq!(p.d(&[0, 0]), 2.0);
    }

    #[test]
    fn mismatched_layouts_are_rejected() {
        let a = jet1(1, &[1.0, 1.0]);
        let b = jet1(2, &[1.0, 1.0, 0.0]);
        assert!(matches!(jet_binary(BinaryOp::Add, &a, &b), Err(Error::Shape(_))));
        let c = Jet::from_coeffs(JetLayout::get(2, 1).unwrap(), &[1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(jet_binary(BinaryOp::Mul, &a, &c), Err(Error::Shape(_))));
    }

    #[test]
    fn division_by_zero_value_is_domain_error() {
        let a = jet1(1, &[1.0, 1.0]);
        let z = jet1(1, &[0.0, 1.0]);
        assert!(matches!(jet_binary(BinaryOp::Div, &a, &z), Err(Error::Domain(_))));
    }

    #[test]
    fn tanh_at_zero() {
        let t = jet1(2, &[0.0, 1.0, 0.0]).tanh();
        assert_eq!(t.value(), 0.0);
        assert_eq!(t.d(&[0]), 1.0);
        assert_eq!(t.d(&[0, 0]), 0.0);
        let t2 = jet1(1, &[0.0, 2.0]).tanh();
        assert_eq!(t2.d(&[0]), 2.0);
    }

    #[test]
    fn powi_matches_repeated_products() {
        let mut s = Stream::new(3, "powi");
        let l = JetLayout::get(2, 3).unwrap();
        let coeffs: Vec<f64> = (0..l.len()).map(|_| s.uniform_in(-1.0, 1.0)).collect();
        let a = Jet::from_coeffs(l, &coeffs).unwrap();
        let cube = a * a * a;
        let p = a.powi(3).unwrap();
        for (x, y) in cube.coeffs().iter().zip(p.coeffs()) {
            assert!((x - y).abs() < 1e-12);
        }
        let zero = a.powi(0).unwrap();
        assert_eq!(zero.value(), 1.0);
        assert!(zero.coeffs()[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mixed_partials_of_product_are_symmetric_by_construction() {
        let l = JetLayout::get(2, 3).unwrap();
        let x = Jet::variable(l, 0.3, 0).unwrap();
        let y = Jet::variable(l, -0.7, 1).unwrap();
        let f = (x * y).sin() * x;
        assert_eq!(f.d(&[0, 1]), f.d(&[1, 0]));
        assert_eq!(f.d(&[0, 1, 1]), f.d(&[1, 1, 0]));
    }
}
