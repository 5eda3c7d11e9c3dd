//! Multivariate polynomials in exponent-vector form and the bookkeeping
//! needed to expand `Q(x⁽¹⁾)⋯Q(x⁽ⁿ⁾)` into monomial tuples.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An exponent vector `α ∈ ℕ₀ᵐ`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    /// The unit vector `e_i` (zero-based `i`).
    pub fn unit(dim: usize, i: usize) -> Self {
        let mut e = vec![0; dim];
        e[i] = 1;
        MultiIndex(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `x^α` for a point `x` of matching dimension.
    pub fn monomial(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(&a, &xi)| xi.powi(a as i32)).product()
    }
}

impl std::ops::Add for &MultiIndex {
    type Output = MultiIndex;

    fn add(self, rhs: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// `Q(x) = Σ q_α x^α` with finite support and no stored zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

impl Polynomial {
    /// The zero polynomial in `dim` variables.
    pub fn zero(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidPolynomial("dimension must be positive".into()));
        }
        Ok(Polynomial { dim, terms: BTreeMap::new() })
    }

    /// Builds a polynomial from `(α, q_α)` pairs. Repeated exponents are
    /// summed and zero coefficients dropped.
    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiIndex, f64)>,
    {
        let mut poly = Polynomial::zero(dim)?;
        for (alpha, q) in terms {
            if alpha.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: alpha.dim() });
            }
            if !q.is_finite() {
                return Err(Error::InvalidPolynomial(format!("non-finite coefficient for {alpha}")));
            }
            *poly.terms.entry(alpha).or_insert(0.0) += q;
        }
        poly.terms.retain(|_, q| *q != 0.0);
        Ok(poly)
    }

    /// `Q(x) = (x, Dx) + (c, x)` for symmetric `D`. Off-diagonal entries
    /// collapse into `q_{e_i+e_j} = 2 D_ij`.
    pub fn quadratic_form(d: &[Vec<f64>], c: &[f64]) -> Result<Self> {
        let m = c.len();
        if d.len() != m || d.iter().any(|row| row.len() != m) {
            return Err(Error::InvalidPolynomial("D must be m×m with m = len(c)".into()));
        }
        let mut terms = Vec::new();
        for (i, (row, &ci)) in d.iter().zip(c).enumerate() {
            terms.push((MultiIndex::unit(m, i), ci));
            for (j, &dij) in row.iter().enumerate() {
                if (dij - d[j][i]).abs() > 1e-12 * (1.0 + dij.abs()) {
                    return Err(Error::InvalidPolynomial("D must be symmetric".into()));
                }
                let alpha = &MultiIndex::unit(m, i) + &MultiIndex::unit(m, j);
                terms.push((alpha, dij));
            }
        }
        Polynomial::from_terms(m, terms)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Support in lexicographic order, paired with coefficients.
    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(a, &q)| (a, q))
    }

    pub fn support_len(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, alpha: &MultiIndex) -> f64 {
        self.terms.get(alpha).copied().unwrap_or(0.0)
    }

    pub fn max_degree(&self) -> u32 {
        self.terms.keys().map(MultiIndex::total_degree).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(self.terms.iter().map(|(a, q)| q * a.monomial(x)).sum())
    }

    /// All `|support|ⁿ` tuples `(α⁽¹⁾,…,α⁽ⁿ⁾)` with `∏ q_{α⁽ᵏ⁾}`, in
    /// lexicographic order of support positions.
    pub fn alpha_tuples(&self, n: usize) -> AlphaTuples<'_> {
        let support: Vec<(&MultiIndex, f64)> = self.terms().collect();
        let done = support.is_empty() && n > 0;
        AlphaTuples { support, cursor: vec![0; n], done }
    }
}

#[derive(Serialize, Deserialize)]
struct PolynomialJson {
    m: usize,
    terms: Vec<TermJson>,
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    alpha: Vec<u32>,
    q: f64,
}

impl Polynomial {
    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let raw: PolynomialJson = serde_json::from_value(value)?;
        Polynomial::from_terms(raw.m, raw.terms.into_iter().map(|t| (MultiIndex(t.alpha), t.q)))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Polynomial::from_json_value(serde_json::from_str(s)?)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let raw = PolynomialJson {
            m: self.dim,
            terms: self.terms.iter().map(|(a, &q)| TermJson { alpha: a.0.clone(), q }).collect(),
        };
        serde_json::to_value(raw).expect("polynomial serializes")
    }
}

/// One element `(k, i, r)` of the occurrence set, zero-based in `k` and `i`
/// and one-based in the replica `r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Occurrence {
    pub slot: usize,
    pub coord: usize,
    pub replica: u32,
}

/// A tuple `(α⁽¹⁾,…,α⁽ⁿ⁾)`, one exponent vector per time slot.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AlphaTuple {
    entries: Vec<MultiIndex>,
}

impl AlphaTuple {
    pub fn new(entries: Vec<MultiIndex>) -> Result<Self> {
        if let Some(first) = entries.first() {
            let m = first.dim();
            if let Some(bad) = entries.iter().find(|a| a.dim() != m) {
                return Err(Error::DimensionMismatch { expected: m, got: bad.dim() });
            }
        }
        Ok(AlphaTuple { entries })
    }

    pub fn entries(&self) -> &[MultiIndex] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.entries.first().map_or(0, MultiIndex::dim)
    }

    /// Occurrences in lexicographic `(k, i, r)` order.
    pub fn occurrence_set(&self) -> Vec<Occurrence> {
        let mut occ = Vec::new();
        for (slot, alpha) in self.entries.iter().enumerate() {
            for (coord, &a) in alpha.exponents().iter().enumerate() {
                for replica in 1..=a {
                    occ.push(Occurrence { slot, coord, replica });
                }
            }
        }
        occ
    }

    pub fn occurrence_count(&self) -> u32 {
        self.entries.iter().map(MultiIndex::total_degree).sum()
    }

    pub fn total_degree_is_even(&self) -> bool {
        self.occurrence_count().is_multiple_of(2)
    }

    /// `(α⁽¹⁾_q, …, α⁽ⁿ⁾_q)`: the degree each slot demands from coordinate `q`.
    pub fn coordinate_degrees(&self, q: usize) -> Vec<u32> {
        self.entries.iter().map(|a| a.exponents()[q]).collect()
    }

    /// True when every coordinate's column sum is even.
    pub fn coordinates_even(&self) -> bool {
        (0..self.dim()).all(|q| self.entries.iter().map(|a| a.exponents()[q]).sum::<u32>() % 2 == 0)
    }
}

/// Odometer over `support^n`.
pub struct AlphaTuples<'a> {
    support: Vec<(&'a MultiIndex, f64)>,
    cursor: Vec<usize>,
    done: bool,
}

impl Iterator for AlphaTuples<'_> {
    type Item = (AlphaTuple, f64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let entries: Vec<MultiIndex> = self.cursor.iter().map(|&c| self.support[c].0.clone()).collect();
        let coeff: f64 = self.cursor.iter().map(|&c| self.support[c].1).product();

        // advance: last slot varies fastest
        let mut k = self.cursor.len();
        loop {
            if k == 0 {
                self.done = true;
                break;
            }
            k -= 1;
            self.cursor[k] += 1;
            if self.cursor[k] < self.support.len() {
                break;
            }
            self.cursor[k] = 0;
        }
        Some((AlphaTuple { entries }, coeff))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    #[test]
    fn eval_examples() {
        let q = Polynomial::from_terms(2, [(mi(&[2, 0]), 1.0), (mi(&[1, 1]), 2.0)]).unwrap();
        assert_eq!(q.eval(&[1.0, 1.0]).unwrap(), 3.0);

        let zero = Polynomial::zero(3).unwrap();
        assert_eq!(zero.eval(&[0.3, -1.0, 2.0]).unwrap(), 0.0);

        let q = Polynomial::quadratic_form(&[vec![1.0, 0.0], vec![0.0, 2.0]], &[1.0, 0.0]).unwrap();
        assert_eq!(q.eval(&[2.0, 1.0]).unwrap(), 8.0);
    }

    #[test]
    fn eval_rejects_wrong_dimension() {
        let q = Polynomial::from_terms(2, [(mi(&[1, 0]), 1.0)]).unwrap();
        assert!(matches!(q.eval(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn duplicates_summed_and_zeros_dropped() {
        let q = Polynomial::from_terms(1, [(mi(&[1]), 1.5), (mi(&[1]), -1.5), (mi(&[2]), 2.0)]).unwrap();
        assert_eq!(q.support_len(), 1);
        assert_eq!(q.coefficient(&mi(&[2])), 2.0);
    }

    #[test]
    fn json_load_sums_duplicates() {
        let q = Polynomial::from_json_str(
            r#"{"m": 2, "terms": [{"alpha": [1,0], "q": 1.0}, {"alpha": [1,0], "q": 2.0}, {"alpha": [0,2], "q": 0.5}]}"#,
        )
        .unwrap();
        assert_eq!(q.coefficient(&mi(&[1, 0])), 3.0);
        assert_eq!(q.coefficient(&mi(&[0, 2])), 0.5);
        let back = Polynomial::from_json_value(q.to_json_value()).unwrap();
        assert_eq!(back, q);
    }

    #[test]
    fn json_rejects_ragged_alpha() {
        let err = Polynomial::from_json_str(r#"{"m": 2, "terms": [{"alpha": [1], "q": 1.0}]}"#);
        assert!(err.is_err());
    }

    #[test]
    fn alpha_tuple_counts() {
        let q = Polynomial::from_terms(1, [(mi(&[1]), 3.0)]).unwrap();
        let tuples: Vec<_> = q.alpha_tuples(2).collect();
        assert_eq!(tuples.len(), 1);
        assert_eq!(tuples[0].0.entries(), &[mi(&[1]), mi(&[1])]);
        assert_eq!(tuples[0].1, 9.0);

        let q = Polynomial::from_terms(1, [(mi(&[1]), 1.0), (mi(&[2]), 2.0)]).unwrap();
        assert_eq!(q.alpha_tuples(2).count(), 4);

        let d = vec![vec![1.0, 0.5], vec![0.5, -2.0]];
        let q = Polynomial::quadratic_form(&d, &[0.3, 0.7]).unwrap();
        assert_eq!(q.support_len(), 5);
        assert_eq!(q.coefficient(&mi(&[1, 1])), 1.0);
        assert_eq!(q.alpha_tuples(3).count(), 125);
    }

    #[test]
    fn alpha_tuples_order_is_lexicographic() {
        let q = Polynomial::from_terms(1, [(mi(&[1]), 1.0), (mi(&[2]), 2.0)]).unwrap();
        let got: Vec<_> = q.alpha_tuples(2).map(|(t, _)| t).collect();
        let mut sorted = got.clone();
        sorted.sort();
        assert_eq!(got, sorted);
    }

    #[test]
    fn zero_order_yields_empty_tuple() {
        let q = Polynomial::from_terms(1, [(mi(&[1]), 1.0)]).unwrap();
        let tuples: Vec<_> = q.alpha_tuples(0).collect();
        assert_eq!(tuples.len(), 1);
        assert!(tuples[0].0.is_empty());
        assert_eq!(tuples[0].1, 1.0);
    }

    #[test]
    fn occurrence_examples() {
        let t = AlphaTuple::new(vec![mi(&[2])]).unwrap();
        let occ = t.occurrence_set();
        assert_eq!(
            occ,
            vec![Occurrence { slot: 0, coord: 0, replica: 1 }, Occurrence { slot: 0, coord: 0, replica: 2 }]
        );

        let t = AlphaTuple::new(vec![mi(&[1, 0]), mi(&[0, 1])]).unwrap();
        assert_eq!(
            t.occurrence_set(),
            vec![Occurrence { slot: 0, coord: 0, replica: 1 }, Occurrence { slot: 1, coord: 1, replica: 1 }]
        );

        let t = AlphaTuple::new(vec![mi(&[1, 1]), mi(&[2, 0])]).unwrap();
        assert_eq!(t.occurrence_set().len(), 4);
    }

    #[test]
    fn parity_examples() {
        assert!(AlphaTuple::new(vec![mi(&[1]), mi(&[1])]).unwrap().total_degree_is_even());
        assert!(!AlphaTuple::new(vec![mi(&[1])]).unwrap().total_degree_is_even());
        let t = AlphaTuple::new(vec![mi(&[2, 0]), mi(&[1, 1]), mi(&[1, 1])]).unwrap();
        assert!(t.total_degree_is_even());
        assert!(t.coordinates_even());
        // 2 + 2 + 1 occurrences
        let t = AlphaTuple::new(vec![mi(&[2, 0]), mi(&[1, 1]), mi(&[0, 1])]).unwrap();
        assert_eq!(t.occurrence_count(), 5);
        assert!(!t.total_degree_is_even());
        // total even, but each coordinate column is odd
        let t = AlphaTuple::new(vec![mi(&[1, 0]), mi(&[0, 1])]).unwrap();
        assert!(t.total_degree_is_even());
        assert!(!t.coordinates_even());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn tuple_strategy() -> impl Strategy<Value = AlphaTuple> {
            (1usize..4, 1usize..5).prop_flat_map(|(m, n)| {
                proptest::collection::vec(proptest::collection::vec(0u32..4, m), n)
                    .prop_map(|rows| AlphaTuple::new(rows.into_iter().map(MultiIndex::new).collect()).unwrap())
            })
        }

        fn poly_strategy() -> impl Strategy<Value = Polynomial> {
            (1usize..3).prop_flat_map(|m| {
                proptest::collection::vec((proptest::collection::vec(0u32..3, m), -2.0f64..2.0), 1..5).prop_map(
                    move |terms| {
                        Polynomial::from_terms(m, terms.into_iter().map(|(a, q)| (MultiIndex::new(a), q))).unwrap()
                    },
                )
            })
        }

        proptest! {
            #[test]
            fn occurrence_count_matches_exponent_sum(t in tuple_strategy()) {
                let sum: u32 = t.entries().iter().map(|a| a.total_degree()).sum();
                prop_assert_eq!(t.occurrence_set().len() as u32, sum);
            }

            #[test]
            fn expansion_reproduces_power(q in poly_strategy(), n in 1usize..4, seed in proptest::collection::vec(-1.5f64..1.5, 2)) {
                let x = &seed[..q.dim()];
                let expanded: f64 = q
                    .alpha_tuples(n)
                    .map(|(t, c)| c * t.entries().iter().map(|a| a.monomial(x)).product::<f64>())
                    .sum();
                let direct = q.eval(x).unwrap().powi(n as i32);
                prop_assert!((expanded - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
            }
        }
    }
}
