//! The graph expansion of the time-ordered integral
//!
//! `Iₙ = ∫_{0≤s₁≤…≤sₙ≤1} E[∏ₖ Q(X(sₖ))] ds`
//!
//! as `(1/n!) Σ_{α-tuples} (∏ q) Σ_{Γ₁…Γ_m} ∏ C(Γ_q) ∏_{Λ} ∫_Λ f`, where the
//! inner sum runs over one labeled multigraph per coordinate with degrees
//! prescribed by the tuple and `Λ` ranges over the connected components of
//! `Γ₁+…+Γ_m`.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use itertools::Itertools;
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use parking_lot::RwLock;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::factor::{c_graph, factorial};
use crate::graph::{CanonicalKey, Multigraph};
use crate::kernel::CovarianceKernel;
use crate::poly::{AlphaTuple, MultiIndex, Polynomial};
use crate::quad::{integrate_component, CompensatedSum, Estimate, QuadratureRule};

pub const DEFAULT_TERM_BUDGET: u64 = 10_000_000;
/// Largest truncation order accepted by [`fk_partial_sum`].
pub const FK_MAX_ORDER: usize = 6;

#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    /// Cap on both the number of α-tuples visited and the number of terms.
    pub budget: u64,
    /// Keep every [`Term`] in the result. Totals are identical either way.
    pub keep_terms: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { budget: DEFAULT_TERM_BUDGET, keep_terms: true }
    }
}

/// One connected component class of a term, with its multiplicity.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentValue {
    pub key: CanonicalKey,
    pub count: u32,
    pub integral: f64,
}

#[derive(Clone, Debug)]
pub struct Term {
    pub alpha_tuple: AlphaTuple,
    /// `∏ₖ q_{α⁽ᵏ⁾}`.
    pub coeff_q: f64,
    /// `(1/n!) ∏_q C(Γ_q)`.
    pub coeff_comb: BigRational,
    /// One graph per coordinate.
    pub graphs: Vec<Multigraph>,
    /// Components of the summed graph, edgeless vertices omitted.
    pub components: Vec<ComponentValue>,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub tuples: u64,
    pub term_count: u64,
    pub skipped_parity: u64,
    /// `Σ |coefficient| · (propagated quadrature envelope)` over all terms.
    pub envelope: f64,
    /// `Σ |term value|`, the scale for accumulation error.
    pub abs_sum: f64,
    pub distinct_components: usize,
}

#[derive(Clone, Debug)]
pub struct EvaluationResult {
    pub n: usize,
    pub total: f64,
    pub terms: Vec<Term>,
    pub diagnostics: Diagnostics,
}

/// Graphs with a given degree sequence, each with its `C(Γ)`.
type GraphList = Arc<Vec<(Multigraph, BigUint)>>;

struct PlannedTuple {
    tuple: AlphaTuple,
    coeff: f64,
    per_coord: Vec<GraphList>,
}

struct Plan {
    tuples: Vec<PlannedTuple>,
    counts: TermCount,
}

/// Cost estimate produced without integrating anything.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TermCount {
    pub tuples: u64,
    pub skipped_parity: u64,
    pub terms: u64,
}

fn plan(q: &Polynomial, n: usize, budget: u64) -> Result<Plan> {
    let m = q.dim();
    let mut table: HashMap<Vec<u32>, GraphList> = HashMap::new();
    let mut counts = TermCount::default();
    let mut tuples = Vec::new();
    for (tuple, coeff) in q.alpha_tuples(n) {
        counts.tuples += 1;
        if counts.tuples > budget {
            return Err(Error::BudgetExceeded { count: counts.tuples, budget });
        }
        if !tuple.coordinates_even() {
            counts.skipped_parity += 1;
            continue;
        }
        let mut per_coord = Vec::with_capacity(m);
        let mut terms: u64 = 1;
        for coord in 0..m {
            let degrees = tuple.coordinate_degrees(coord);
            let list = match table.get(&degrees) {
                Some(list) => list.clone(),
                None => {
                    let graphs = Multigraph::enumerate(n, &degrees)?;
                    let list: GraphList = Arc::new(
                        graphs
                            .into_iter()
                            .map(|g| {
                                let c = c_graph(&g);
                                (g, c)
                            })
                            .collect(),
                    );
                    table.insert(degrees, list.clone());
                    list
                }
            };
            terms = terms.saturating_mul(list.len() as u64);
            per_coord.push(list);
        }
        counts.terms = counts.terms.saturating_add(terms);
        if counts.terms > budget {
            return Err(Error::BudgetExceeded { count: counts.terms, budget });
        }
        tuples.push(PlannedTuple { tuple, coeff, per_coord });
    }
    Ok(Plan { tuples, counts })
}

/// Dry run: how many tuples and terms [`evaluate`] would visit.
pub fn count_terms(q: &Polynomial, n: usize, budget: u64) -> Result<TermCount> {
    Ok(plan(q, n, budget)?.counts)
}

/// Canonical keys for labeled components, memoized.
#[derive(Default)]
struct KeyCache {
    keys: RwLock<HashMap<Multigraph, CanonicalKey>>,
}

impl KeyCache {
    fn key(&self, g: &Multigraph) -> Result<CanonicalKey> {
        if let Some(k) = self.keys.read().get(g) {
            return Ok(k.clone());
        }
        let k = g.canonical_key()?;
        self.keys.write().entry(g.clone()).or_insert_with(|| k.clone());
        Ok(k)
    }
}

/// Component integrals for one kernel and rule, keyed by canonical form.
/// The integral is always taken on the canonical representative, so the
/// stored value does not depend on which labeling reached it first.
pub struct ComponentCache<'a> {
    kernel: &'a CovarianceKernel,
    rule: &'a QuadratureRule,
    keys: KeyCache,
    integrals: RwLock<HashMap<CanonicalKey, Estimate>>,
}

impl<'a> ComponentCache<'a> {
    pub fn new(kernel: &'a CovarianceKernel, rule: &'a QuadratureRule) -> Self {
        ComponentCache { kernel, rule, keys: KeyCache::default(), integrals: RwLock::new(HashMap::new()) }
    }

    pub fn integral(&self, key: &CanonicalKey) -> Result<Estimate> {
        if let Some(e) = self.integrals.read().get(key) {
            return Ok(*e);
        }
        let e = integrate_component(&key.to_graph(), self.kernel, self.rule)?;
        Ok(*self.integrals.write().entry(key.clone()).or_insert(e))
    }

    pub fn len(&self) -> usize {
        self.integrals.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Component classes of `g` with multiplicities, skipping edgeless vertices.
fn component_classes(g: &Multigraph, keys: &KeyCache) -> Result<BTreeMap<CanonicalKey, u32>> {
    let mut classes = BTreeMap::new();
    for c in g.components().blocks {
        if c.graph.edge_count() == 0 {
            continue;
        }
        *classes.entry(keys.key(&c.graph)?).or_insert(0) += 1;
    }
    Ok(classes)
}

fn rational(n: &BigUint) -> BigRational {
    BigRational::from_integer(BigInt::from(n.clone()))
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Walks every graph tuple of a planned α-tuple.
fn for_each_graph_tuple<F>(p: &PlannedTuple, n: usize, mut visit: F) -> Result<()>
where
    F: FnMut(Vec<Multigraph>, Multigraph, BigUint) -> Result<()>,
{
    let combos = p.per_coord.iter().map(|l| 0..l.len()).multi_cartesian_product();
    let mut visit_one = |choice: &[usize]| -> Result<()> {
        let mut sum = Multigraph::empty(n);
        let mut c = BigUint::one();
        let mut graphs = Vec::with_capacity(choice.len());
        for (list, &i) in p.per_coord.iter().zip(choice) {
            let (g, cg) = &list[i];
            sum = sum.sum(g)?;
            c *= cg;
            graphs.push(g.clone());
        }
        visit(graphs, sum, c)
    };
    if p.per_coord.is_empty() {
        // m = 0 never happens for a valid polynomial, but keep the empty product
        return visit_one(&[]);
    }
    for choice in combos {
        visit_one(&choice)?;
    }
    Ok(())
}

struct TupleOutcome {
    sum: CompensatedSum,
    abs_sum: f64,
    envelope: f64,
    terms: Vec<Term>,
}

fn evaluate_tuple(
    p: &PlannedTuple,
    n: usize,
    inv_nfact: &BigRational,
    cache: &ComponentCache<'_>,
    keep_terms: bool,
) -> Result<TupleOutcome> {
    let mut out = TupleOutcome { sum: CompensatedSum::default(), abs_sum: 0.0, envelope: 0.0, terms: Vec::new() };
    for_each_graph_tuple(p, n, |graphs, sum, c| {
        let coeff_comb = rational(&c) * inv_nfact;
        let classes = component_classes(&sum, &cache.keys)?;
        let mut product = Estimate::ONE;
        let mut components = Vec::with_capacity(classes.len());
        for (key, count) in classes {
            let e = cache.integral(&key)?;
            for _ in 0..count {
                product = product.times(e);
            }
            components.push(ComponentValue { key, count, integral: e.value });
        }
        let coefficient = p.coeff * to_f64(&coeff_comb);
        let value = coefficient * product.value;
        out.sum.add(value);
        out.abs_sum += value.abs();
        out.envelope += coefficient.abs() * product.envelope;
        if keep_terms {
            out.terms.push(Term {
                alpha_tuple: p.tuple.clone(),
                coeff_q: p.coeff,
                coeff_comb,
                graphs,
                components,
                value,
            });
        }
        Ok(())
    })?;
    Ok(out)
}

fn inverse_factorial(n: usize) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::from(factorial(n as u32)))
}

/// `Iₙ` by the graph expansion. Tuples are processed in parallel on the
/// current rayon pool and reduced in tuple order, so the total does not
/// depend on the thread count.
pub fn evaluate(
    q: &Polynomial,
    n: usize,
    kernel: &CovarianceKernel,
    rule: &QuadratureRule,
    options: &EvalOptions,
) -> Result<EvaluationResult> {
    let cache = ComponentCache::new(kernel, rule);
    evaluate_with_cache(q, n, &cache, options)
}

/// As [`evaluate`], reusing component integrals across calls.
pub fn evaluate_with_cache(
    q: &Polynomial,
    n: usize,
    cache: &ComponentCache<'_>,
    options: &EvalOptions,
) -> Result<EvaluationResult> {
    cache.rule.validate()?;
    let plan = plan(q, n, options.budget)?;
    let inv_nfact = inverse_factorial(n);
    let outcomes: Vec<TupleOutcome> = plan
        .tuples
        .par_iter()
        .map(|p| evaluate_tuple(p, n, &inv_nfact, cache, options.keep_terms))
        .collect::<Result<_>>()?;

    let mut total = CompensatedSum::default();
    let mut diagnostics = Diagnostics {
        tuples: plan.counts.tuples,
        term_count: plan.counts.terms,
        skipped_parity: plan.counts.skipped_parity,
        ..Default::default()
    };
    let mut terms = Vec::new();
    for o in outcomes {
        total.add(o.sum.value());
        diagnostics.abs_sum += o.abs_sum;
        diagnostics.envelope += o.envelope;
        terms.extend(o.terms);
    }
    diagnostics.distinct_components = cache.len();
    Ok(EvaluationResult { n, total: total.value(), terms, diagnostics })
}

/// An aggregated term of the symbolic expansion: `weight · ∏ q_α^{power}`
/// times the product of the listed component integrals.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicTerm {
    /// The q-monomial as a sorted multiset of exponent vectors.
    pub alphas: Vec<(MultiIndex, u32)>,
    pub coeff_q: f64,
    pub weight: BigRational,
    pub components: Vec<(CanonicalKey, u32)>,
}

impl SymbolicTerm {
    pub fn coefficient(&self) -> f64 {
        self.coeff_q * to_f64(&self.weight)
    }
}

/// The expansion with exact weights, aggregated by (q-monomial, component
/// multiset). No kernel is needed.
pub fn expand_symbolic(q: &Polynomial, n: usize, options: &EvalOptions) -> Result<Vec<SymbolicTerm>> {
    let plan = plan(q, n, options.budget)?;
    let inv_nfact = inverse_factorial(n);
    let keys = KeyCache::default();
    type Shape = (Vec<(MultiIndex, u32)>, Vec<(CanonicalKey, u32)>);
    let mut agg: BTreeMap<Shape, (f64, BigRational)> = BTreeMap::new();
    for p in &plan.tuples {
        let alphas: Vec<(MultiIndex, u32)> =
            p.tuple.entries().iter().cloned().sorted().dedup_with_count().map(|(c, a)| (a, c as u32)).collect();
        for_each_graph_tuple(p, n, |_, sum, c| {
            let comps: Vec<(CanonicalKey, u32)> = component_classes(&sum, &keys)?.into_iter().collect();
            let entry = agg.entry((alphas.clone(), comps)).or_insert_with(|| (p.coeff, BigRational::zero()));
            entry.1 += rational(&c) * &inv_nfact;
            Ok(())
        })?;
    }
    Ok(agg
        .into_iter()
        .map(|((alphas, components), (coeff_q, weight))| SymbolicTerm { alphas, coeff_q, weight, components })
        .collect())
}

/// Re-evaluates an expansion against a kernel.
pub fn evaluate_expansion(terms: &[SymbolicTerm], kernel: &CovarianceKernel, rule: &QuadratureRule) -> Result<f64> {
    let cache = ComponentCache::new(kernel, rule);
    let mut total = CompensatedSum::default();
    for t in terms {
        let mut v = t.coefficient();
        for (key, count) in &t.components {
            v *= cache.integral(key)?.value.powi(*count as i32);
        }
        total.add(v);
    }
    Ok(total.value())
}

/// One row of the formal series `E[exp(−∫Q)] ~ Σ (−1)ⁿ Iₙ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FkPartial {
    pub n: usize,
    pub term: f64,
    pub partial_sum: f64,
}

/// Partial sums `S₀ … S_N` of the formal expansion. This is a diagnostic
/// only; the series need not converge.
pub fn fk_partial_sum(
    q: &Polynomial,
    order: usize,
    kernel: &CovarianceKernel,
    rule: &QuadratureRule,
    options: &EvalOptions,
) -> Result<Vec<FkPartial>> {
    if order > FK_MAX_ORDER {
        return Err(Error::Guard(format!("truncation order {order} above {FK_MAX_ORDER}")));
    }
    let cache = ComponentCache::new(kernel, rule);
    let opts = EvalOptions { keep_terms: false, ..*options };
    let mut out = Vec::with_capacity(order + 1);
    let mut partial = 0.0;
    for n in 0..=order {
        let i_n = evaluate_with_cache(q, n, &cache, &opts)?.total;
        let term = if n % 2 == 0 { i_n } else { 0.0 - i_n };
        partial += term;
        out.push(FkPartial { n, term, partial_sum: partial });
    }
    Ok(out)
}

fn rational_string(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

impl Term {
    pub fn to_json(&self) -> Value {
        json!({
            "alphas": self.alpha_tuple.entries().iter().map(|a| a.exponents().to_vec()).collect::<Vec<_>>(),
            "coeff_q": self.coeff_q,
            "coeff_comb": rational_string(&self.coeff_comb),
            "components": self.components.iter().map(|c| json!({
                "key": c.key.to_string(),
                "count": c.count,
                "integral": c.integral,
            })).collect::<Vec<_>>(),
            "value": self.value,
        })
    }
}

impl EvaluationResult {
    pub fn to_json(&self) -> Value {
        let d = &self.diagnostics;
        json!({
            "total": self.total,
            "n": self.n,
            "terms": self.terms.iter().map(Term::to_json).collect::<Vec<_>>(),
            "diagnostics": {
                "tuples": d.tuples,
                "term_count": d.term_count,
                "skipped_parity": d.skipped_parity,
                "quadrature_envelope": d.envelope,
                "abs_sum": d.abs_sum,
                "distinct_components": d.distinct_components,
            },
        })
    }
}

impl SymbolicTerm {
    pub fn to_json(&self) -> Value {
        json!({
            "alphas": self.alphas.iter().map(|(a, c)| json!({"alpha": a.exponents(), "power": c})).collect::<Vec<_>>(),
            "coeff_q": self.coeff_q,
            "weight": rational_string(&self.weight),
            "components": self.components.iter().map(|(k, c)| json!({"key": k.to_string(), "count": c})).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let bad = |what: &str| Error::InvalidArgument(format!("malformed expansion term: {what}"));
        let alphas = v["alphas"]
            .as_array()
            .ok_or_else(|| bad("alphas"))?
            .iter()
            .map(|e| {
                let alpha: Vec<u32> = serde_json::from_value(e["alpha"].clone())?;
                let power = e["power"].as_u64().ok_or_else(|| bad("power"))? as u32;
                Ok((MultiIndex::new(alpha), power))
            })
            .collect::<Result<Vec<_>>>()?;
        let coeff_q = v["coeff_q"].as_f64().ok_or_else(|| bad("coeff_q"))?;
        let weight = parse_rational(v["weight"].as_str().ok_or_else(|| bad("weight"))?)?;
        let components = v["components"]
            .as_array()
            .ok_or_else(|| bad("components"))?
            .iter()
            .map(|e| {
                let key: CanonicalKey = e["key"].as_str().ok_or_else(|| bad("key"))?.parse()?;
                let count = e["count"].as_u64().ok_or_else(|| bad("count"))? as u32;
                Ok((key, count))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SymbolicTerm { alphas, coeff_q, weight, components })
    }
}

/// Parses `"p/q"` or `"p"`.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let bad = || Error::InvalidArgument(format!("malformed rational '{s}'"));
    let (p, q) = s.split_once('/').unwrap_or((s, "1"));
    let p: BigInt = p.trim().parse().map_err(|_| bad())?;
    let q: BigInt = q.trim().parse().map_err(|_| bad())?;
    if q.is_zero() {
        return Err(bad());
    }
    Ok(BigRational::new(p, q))
}
