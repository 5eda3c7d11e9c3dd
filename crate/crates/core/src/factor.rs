//! Exact combinatorial factors `C(M, A)` and `C(Γ)`.
//!
//! Everything here is arbitrary-precision. `C(Γ)` counts the pairings of a
//! vertex-labeled occurrence multiset that induce the labeled multigraph `Γ`:
//!
//! ```text
//! C(Γ) = ∏ⱼ deg(vⱼ)! / (2^{tr M} · ∏ M_ij!)
//! ```
//!
//! where `M` is the upper-triangular adjacency matrix.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::graph::Multigraph;

pub fn factorial(k: u32) -> BigUint {
    (2..=k).fold(BigUint::one(), |acc, i| acc * i)
}

/// `(2k−1)!! = 1·3·5⋯(2k−1)`, the number of pairings of `2k` elements.
pub fn double_factorial_odd(k: u32) -> BigUint {
    (1..=k).fold(BigUint::one(), |acc, i| acc * (2 * i - 1))
}

/// Summary statistics of a non-negative integer matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatrixStats {
    /// `S(A)`
    pub sum: u64,
    /// `SC(A, i)` for each column
    pub col_sums: Vec<u64>,
    /// `SR(A, i)` for each row
    pub row_sums: Vec<u64>,
    /// `P(A!)`
    pub factorial_product: BigUint,
    /// `P(A)`
    pub product: BigUint,
    /// `tr(A)`, only for square matrices
    pub trace: Option<u64>,
}

fn check_rectangular(a: &[Vec<u32>]) -> Result<usize> {
    let cols = a.first().map_or(0, Vec::len);
    if let Some(row) = a.iter().find(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch { expected: cols, got: row.len() });
    }
    Ok(cols)
}

pub fn factorial_stats(a: &[Vec<u32>]) -> Result<MatrixStats> {
    let cols = check_rectangular(a)?;
    let rows = a.len();
    let entries = || a.iter().flatten().copied();
    Ok(MatrixStats {
        sum: entries().map(u64::from).sum(),
        col_sums: (0..cols).map(|c| a.iter().map(|r| u64::from(r[c])).sum()).collect(),
        row_sums: a.iter().map(|r| r.iter().copied().map(u64::from).sum()).collect(),
        factorial_product: entries().map(factorial).product(),
        product: entries().map(BigUint::from).product(),
        trace: (rows == cols).then(|| (0..rows).map(|i| u64::from(a[i][i])).sum()),
    })
}

/// `C(Γ)` in closed form.
pub fn c_graph(g: &Multigraph) -> BigUint {
    let numerator: BigUint = g.degrees().into_iter().map(factorial).product();
    let denominator: BigUint =
        (BigUint::one() << g.trace() as usize) * g.matrix().iter().map(|&m| factorial(m)).product::<BigUint>();
    let (q, r) = numerator.div_rem(&denominator);
    debug_assert!(r.is_zero(), "C(Γ) must be integral");
    q
}

/// `C(M, A)` as an exact rational, by enumerating all decompositions
/// `M = M₁ + … + M_l` with `SC(M_k, j) + SR(M_k, j) = A_{j,k}`.
///
/// `M` is `n×n`, `A` is `n×l`. An empty decomposition set gives zero.
pub fn c_general_rational(m: &[Vec<u32>], a: &[Vec<u32>]) -> Result<BigRational> {
    let n = m.len();
    if check_rectangular(m)? != n && n > 0 {
        return Err(Error::DimensionMismatch { expected: n, got: m[0].len() });
    }
    if a.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.len() });
    }
    let l = check_rectangular(a)?;
    let stats_a = factorial_stats(a)?;
    let trace: usize = (0..n).map(|i| m[i][i] as usize).sum();

    let budget: Vec<u32> = m.iter().flatten().copied().collect();
    let mut search = Decompositions { n, l, a, memo: HashMap::new() };
    let sum = if l == 0 {
        if budget.iter().all(|&b| b == 0) {
            BigRational::one()
        } else {
            BigRational::zero()
        }
    } else {
        search.sum_from(0, budget)
    };
    let prefactor = BigRational::new(stats_a.factorial_product.into(), (BigUint::one() << trace).into());
    Ok(prefactor * sum)
}

/// `C(M, A)` as an integer. Integrality always holds for valid input; a
/// fractional result is reported as an error rather than truncated.
pub fn c_general(m: &[Vec<u32>], a: &[Vec<u32>]) -> Result<BigUint> {
    let value = c_general_rational(m, a)?;
    if !value.is_integer() {
        return Err(Error::InvalidArgument(format!("C(M, A) = {value} is not an integer")));
    }
    value.to_integer().to_biguint().ok_or_else(|| Error::InvalidArgument("negative C(M, A)".into()))
}

struct Decompositions<'a> {
    n: usize,
    l: usize,
    a: &'a [Vec<u32>],
    memo: HashMap<(usize, Vec<u32>), BigRational>,
}

impl Decompositions<'_> {
    /// Σ over `M_k + … + M_l = budget` of `∏_{i ≥ k} 1/P(M_i!)`.
    fn sum_from(&mut self, k: usize, budget: Vec<u32>) -> BigRational {
        if let Some(v) = self.memo.get(&(k, budget.clone())) {
            return v.clone();
        }
        let value = if k + 1 == self.l {
            if self.satisfies(k, &budget) {
                BigRational::new(BigUint::one().into(), inverse_weight(&budget).into())
            } else {
                BigRational::zero()
            }
        } else {
            let mut need: Vec<u32> = (0..self.n).map(|j| self.a[j][k]).collect();
            let mut current = vec![0u32; budget.len()];
            let mut acc = BigRational::zero();
            self.choose(k, 0, &budget, &mut current, &mut need, &mut acc);
            acc
        };
        self.memo.insert((k, budget), value.clone());
        value
    }

    fn satisfies(&self, k: usize, mk: &[u32]) -> bool {
        let n = self.n;
        (0..n).all(|j| {
            let row: u32 = (0..n).map(|q| mk[j * n + q]).sum();
            let col: u32 = (0..n).map(|p| mk[p * n + j]).sum();
            row + col == self.a[j][k]
        })
    }

    // Backtracks over the entries of M_k in row-major order.
    fn choose(
        &mut self,
        k: usize,
        pos: usize,
        budget: &[u32],
        current: &mut Vec<u32>,
        need: &mut Vec<u32>,
        acc: &mut BigRational,
    ) {
        let n = self.n;
        if pos == n * n {
            if need.iter().all(|&x| x == 0) {
                let rest: Vec<u32> = budget.iter().zip(current.iter()).map(|(b, c)| b - c).collect();
                let tail = self.sum_from(k + 1, rest);
                if !tail.is_zero() {
                    *acc += tail / BigRational::from_integer(inverse_weight(current).into());
                }
            }
            return;
        }
        let (p, q) = (pos / n, pos % n);
        let cap = if p == q { need[p] / 2 } else { need[p].min(need[q]) };
        for v in 0..=cap.min(budget[pos]) {
            current[pos] = v;
            if p == q {
                need[p] -= 2 * v;
            } else {
                need[p] -= v;
                need[q] -= v;
            }
            self.choose(k, pos + 1, budget, current, need, acc);
            if p == q {
                need[p] += 2 * v;
            } else {
                need[p] += v;
                need[q] += v;
            }
        }
        current[pos] = 0;
    }
}

fn inverse_weight(entries: &[u32]) -> BigUint {
    entries.iter().map(|&x| factorial(x)).product()
}

/// Convenience: `C(Γ)` as `u64` when it fits.
pub fn c_graph_u64(g: &Multigraph) -> Option<u64> {
    c_graph(g).to_u64()
}
