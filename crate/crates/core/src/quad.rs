//! Numerical integration over `[0,1]^l` of covariance products along
//! multigraphs.
//!
//! Smooth kernels use a composite tensor rule. Kernels with a kink on the
//! diagonal (`min`-based, exponential) are integrated over each of the `l!`
//! ordering simplices `s_{σ(1)} ≤ … ≤ s_{σ(l)}` separately, where every
//! factor `f(s_a, s_b)` is smooth, using collapsed coordinates
//! `t_l = y_l, t_{i} = t_{i+1}·y_i` with Jacobian `∏ y_j^{j−1}`. For the
//! piecewise-polynomial kernels this is exact once the order covers the
//! polynomial degree. Lattice kernels use a tensor rule with panels aligned
//! to the lattice cells.

use std::f64::consts::PI;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Multigraph;
use crate::kernel::{CovarianceKernel, Regularity};

pub const DEFAULT_DIMENSION_CAP: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    GaussLegendre,
    Trapezoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureRule {
    #[serde(default = "default_kind")]
    pub kind: RuleKind,
    /// Points per axis (per panel).
    #[serde(default = "default_order")]
    pub order: usize,
    /// Panels per axis for the tensor rule on smooth kernels.
    #[serde(default = "default_panels")]
    pub panels: usize,
    /// Largest connected component that will be integrated.
    #[serde(default = "default_cap")]
    pub dim_cap: usize,
}

fn default_kind() -> RuleKind {
    RuleKind::GaussLegendre
}
fn default_order() -> usize {
    8
}
fn default_panels() -> usize {
    8
}
fn default_cap() -> usize {
    DEFAULT_DIMENSION_CAP
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule {
            kind: default_kind(),
            order: default_order(),
            panels: default_panels(),
            dim_cap: default_cap(),
        }
    }
}

impl QuadratureRule {
    pub fn gauss_legendre(order: usize, panels: usize) -> Self {
        QuadratureRule { kind: RuleKind::GaussLegendre, order, panels, ..Default::default() }
    }

    pub fn trapezoid(order: usize, panels: usize) -> Self {
        QuadratureRule { kind: RuleKind::Trapezoid, order, panels, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 || self.panels == 0 {
            return Err(Error::InvalidRule("order and panels must be positive".into()));
        }
        if self.kind == RuleKind::Trapezoid && self.order == 1 {
            return Err(Error::InvalidRule("trapezoid rule needs at least 2 points".into()));
        }
        Ok(())
    }

    /// The rule used for the two-resolution error estimate.
    fn coarse(&self) -> QuadratureRule {
        let order = match self.kind {
            RuleKind::GaussLegendre => self.order.div_ceil(2),
            RuleKind::Trapezoid => self.order.div_ceil(2).max(2),
        };
        QuadratureRule { order, ..*self }
    }

    /// Nodes and weights on `[0,1]` over `panels` equal panels.
    pub fn nodes_weights(&self, panels: usize) -> Vec<(f64, f64)> {
        let base = match self.kind {
            RuleKind::GaussLegendre => gauss_legendre_unit(self.order),
            RuleKind::Trapezoid => trapezoid_unit(self.order),
        };
        let h = 1.0 / panels as f64;
        (0..panels).flat_map(|p| base.iter().map(move |&(x, w)| ((p as f64 + x) * h, w * h))).collect()
    }
}

/// `order`-point Gauss–Legendre rule mapped to `[0,1]`.
pub fn gauss_legendre_unit(order: usize) -> Vec<(f64, f64)> {
    let n = order;
    let mut out = vec![(0.0, 0.0); n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // symmetric pair on [-1,1], mapped to [0,1]
        out[i] = ((1.0 - x) / 2.0, w / 2.0);
        out[n - 1 - i] = ((1.0 + x) / 2.0, w / 2.0);
    }
    out
}

// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn trapezoid_unit(points: usize) -> Vec<(f64, f64)> {
    if points == 1 {
        return vec![(0.5, 1.0)];
    }
    let h = 1.0 / (points - 1) as f64;
    (0..points)
        .map(|i| {
            let w = if i == 0 || i == points - 1 { h / 2.0 } else { h };
            (i as f64 * h, w)
        })
        .collect()
}

/// A quadrature value with a two-resolution error estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub envelope: f64,
}

impl Estimate {
    pub const ONE: Estimate = Estimate { value: 1.0, envelope: 0.0 };

    /// First-order error propagation through a product.
    pub fn times(self, other: Estimate) -> Estimate {
        Estimate {
            value: self.value * other.value,
            envelope: self.envelope * other.value.abs() + other.envelope * self.value.abs(),
        }
    }
}

/// Integrates `f` over `[0,1]^dim`, choosing the scheme from `regularity`.
pub fn integrate_cube<F>(dim: usize, regularity: Regularity, rule: &QuadratureRule, f: F) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    match regularity {
        Regularity::Smooth => tensor(dim, &rule.nodes_weights(rule.panels), &f),
        Regularity::Lattice { cells } => tensor(dim, &rule.nodes_weights(cells.max(1)), &f),
        Regularity::DiagonalKink => {
            let nodes = rule.nodes_weights(1);
            let mut total = CompensatedSum::default();
            let mut s = vec![0.0; dim];
            for perm in (0..dim).permutations(dim) {
                total.add(simplex(dim, &nodes, |t| {
                    for (i, &p) in perm.iter().enumerate() {
                        s[p] = t[i];
                    }
                    f(&s)
                }));
            }
            total.value()
        }
    }
}

/// Integrates `f` over the ordered simplex `0 ≤ s₁ ≤ … ≤ s_dim ≤ 1`.
pub fn integrate_ordered_simplex<F>(dim: usize, rule: &QuadratureRule, f: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    simplex(dim, &rule.nodes_weights(1), f)
}

fn tensor<F>(dim: usize, nodes: &[(f64, f64)], f: &F) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    if dim == 0 {
        return f(&[]);
    }
    let mut idx = vec![0usize; dim];
    let mut x = vec![0.0; dim];
    let mut total = CompensatedSum::default();
    loop {
        let mut w = 1.0;
        for (d, &i) in idx.iter().enumerate() {
            x[d] = nodes[i].0;
            w *= nodes[i].1;
        }
        total.add(w * f(&x));
        if !advance(&mut idx, nodes.len()) {
            return total.value();
        }
    }
}

fn simplex<F>(dim: usize, nodes: &[(f64, f64)], mut f: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    if dim == 0 {
        return f(&[]);
    }
    let mut idx = vec![0usize; dim];
    let mut t = vec![0.0; dim];
    let mut total = CompensatedSum::default();
    loop {
        let mut w = 1.0;
        let mut scale = 1.0;
        for d in (0..dim).rev() {
            let (y, wy) = nodes[idx[d]];
            // Jacobian factor y_d^{d}, zero-based
            w *= wy * y.powi(d as i32);
            scale *= y;
            t[d] = scale;
        }
        total.add(w * f(&t));
        if !advance(&mut idx, nodes.len()) {
            return total.value();
        }
    }
}

/// Neumaier summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn advance(idx: &mut [usize], len: usize) -> bool {
    for i in idx.iter_mut().rev() {
        *i += 1;
        if *i < len {
            return true;
        }
        *i = 0;
    }
    false
}

fn graph_integrand<'a>(g: &'a Multigraph, kernel: &'a CovarianceKernel) -> impl Fn(&[f64]) -> f64 + 'a {
    let edges: Vec<(usize, usize, i32)> = g.edges().map(|(a, b, m)| (a, b, m as i32)).collect();
    move |s: &[f64]| edges.iter().map(|&(a, b, m)| kernel.at(s[a], s[b]).powi(m)).product()
}

/// `∫_{[0,1]^l} ∏_{edges} f(s_a, s_b)` for a connected graph (or an
/// edgeless singleton, which gives exactly 1).
pub fn integrate_component(c: &Multigraph, kernel: &CovarianceKernel, rule: &QuadratureRule) -> Result<Estimate> {
    rule.validate()?;
    if c.edge_count() == 0 {
        if c.n() > 1 {
            return Err(Error::InvalidGraph(format!("edgeless graph on {} vertices is not connected", c.n())));
        }
        return Ok(Estimate::ONE);
    }
    if !c.is_connected() {
        return Err(Error::InvalidGraph(format!("component {c} is not connected")));
    }
    if c.n() > rule.dim_cap {
        return Err(Error::SizeCap { what: "connected component", size: c.n(), cap: rule.dim_cap });
    }
    let integrand = graph_integrand(c, kernel);
    let regularity = kernel.regularity();
    let value = integrate_cube(c.n(), regularity, rule, &integrand);
    let coarse = integrate_cube(c.n(), regularity, &rule.coarse(), &integrand);
    Ok(Estimate { value, envelope: (value - coarse).abs() })
}

/// Product of component integrals, i.e. `∫_{[0,1]^n}` of the full edge product.
pub fn integrate_graph(g: &Multigraph, kernel: &CovarianceKernel, rule: &QuadratureRule) -> Result<Estimate> {
    g.components()
        .blocks
        .iter()
        .try_fold(Estimate::ONE, |acc, c| Ok(acc.times(integrate_component(&c.graph, kernel, rule)?)))
}
