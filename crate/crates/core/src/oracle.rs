//! Brute-force references: Isserlis–Wick pairing sums, the pairing-side
//! integral that the graph expansion must reproduce, the hafnian
//! permutation identity, and pairing counts per induced graph.
//!
//! Everything here enumerates in full and carries hard size guards.

use std::collections::HashMap;

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::graph::Multigraph;
use crate::kernel::CovarianceKernel;
use crate::poly::{AlphaTuple, Occurrence, Polynomial};
use crate::quad::{integrate_cube, integrate_ordered_simplex, QuadratureRule};

/// Largest time-slot count accepted by [`lhs_bruteforce`].
pub const LHS_MAX_SLOTS: usize = 4;
/// Largest occurrence set accepted by [`lhs_bruteforce`].
pub const LHS_MAX_OCCURRENCES: usize = 10;
/// Largest total degree accepted by the pairing counters.
pub const COUNT_MAX_DEGREE: usize = 12;
/// Largest matrix accepted by [`hafnian_identity_check`].
pub const HAFNIAN_MAX_SIZE: usize = 8;

/// Perfect matchings of `{0, …, len−1}` as index pairs. Each pairing
/// matches the smallest unmatched element first, so pairs come out sorted.
#[derive(Clone, Debug)]
pub struct PairingIndices {
    len: usize,
    // choice[level] indexes the partner among the still-unmatched elements
    choice: Vec<usize>,
    done: bool,
}

impl PairingIndices {
    pub fn new(len: usize) -> Result<Self> {
        if len % 2 == 1 {
            return Err(Error::OddSize(len));
        }
        Ok(PairingIndices { len, choice: vec![0; len / 2], done: false })
    }

    fn decode(&self) -> Vec<(usize, usize)> {
        let mut free: Vec<usize> = (0..self.len).collect();
        let mut pairs = Vec::with_capacity(self.len / 2);
        for &c in &self.choice {
            let first = free.remove(0);
            let partner = free.remove(c);
            pairs.push((first, partner));
        }
        pairs
    }
}

impl Iterator for PairingIndices {
    type Item = Vec<(usize, usize)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let pairs = self.decode();
        let levels = self.choice.len();
        let mut level = levels;
        loop {
            if level == 0 {
                self.done = true;
                break;
            }
            level -= 1;
            let options = self.len - 2 * level - 1;
            self.choice[level] += 1;
            if self.choice[level] < options {
                break;
            }
            self.choice[level] = 0;
        }
        Some(pairs)
    }
}

/// A perfect matching of an occurrence set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pairing {
    pub pairs: Vec<(Occurrence, Occurrence)>,
}

/// All `(2l−1)!!` pairings of `occ`.
pub fn enumerate_pairings(occ: &[Occurrence]) -> Result<impl Iterator<Item = Pairing> + '_> {
    Ok(PairingIndices::new(occ.len())?
        .map(move |pairs| Pairing { pairs: pairs.into_iter().map(|(a, b)| (occ[a], occ[b])).collect() }))
}

/// `E[∏ₖ (Y⁽ᵏ⁾)^{α⁽ᵏ⁾}]` by Isserlis–Wick, with
/// `cov(k, i, l, j) = Cov(Y⁽ᵏ⁾ᵢ, Y⁽ˡ⁾ⱼ)`.
pub fn wick_expectation<C>(t: &AlphaTuple, cov: C) -> f64
where
    C: Fn(usize, usize, usize, usize) -> f64,
{
    let occ = t.occurrence_set();
    let total = match enumerate_pairings(&occ) {
        Err(_) => 0.0,
        Ok(pairings) => {
            pairings.map(|p| p.pairs.iter().map(|(a, b)| cov(a.slot, a.coord, b.slot, b.coord)).product::<f64>()).sum()
        }
    };
    total
}

/// For each pairing that survives the `δᵢⱼ` coordinate filter, the list of
/// slot pairs it joins.
fn coordinate_diagonal_pairings(t: &AlphaTuple) -> Vec<Vec<(usize, usize)>> {
    let occ = t.occurrence_set();
    let pairs = match enumerate_pairings(&occ) {
        Err(_) => Vec::new(),
        Ok(pairings) => pairings
            .filter(|p| p.pairs.iter().all(|(a, b)| a.coord == b.coord))
            .map(|p| p.pairs.iter().map(|(a, b)| (a.slot, b.slot)).collect())
            .collect(),
    };
    pairs
}

/// `∫_{[0,1]^n} Σ_pairings ∏ δᵢⱼ f(s_k, s_l)` for one tuple, by direct
/// quadrature of the pairing sum.
pub fn lhs_bruteforce(t: &AlphaTuple, kernel: &CovarianceKernel, rule: &QuadratureRule) -> Result<f64> {
    rule.validate()?;
    let n = t.len();
    let occ = t.occurrence_count() as usize;
    if n > LHS_MAX_SLOTS || occ > LHS_MAX_OCCURRENCES {
        return Err(Error::Guard(format!(
            "pairing oracle limited to {LHS_MAX_SLOTS} slots and {LHS_MAX_OCCURRENCES} occurrences (got {n}, {occ})"
        )));
    }
    if occ % 2 == 1 {
        return Ok(0.0);
    }
    let pairings = coordinate_diagonal_pairings(t);
    if pairings.is_empty() {
        return Ok(0.0);
    }
    Ok(integrate_cube(n, kernel.regularity(), rule, |s| {
        pairings.iter().map(|p| p.iter().map(|&(a, b)| kernel.at(s[a], s[b])).product::<f64>()).sum()
    }))
}

/// `(1/n!) Σ_tuples (∏ q) · lhs_bruteforce(tuple)`: the time-ordered
/// integral computed without any graphs.
pub fn pairing_total(q: &Polynomial, n: usize, kernel: &CovarianceKernel, rule: &QuadratureRule) -> Result<f64> {
    if n == 0 {
        return Ok(1.0);
    }
    let n_fact: f64 = (1..=n).map(|k| k as f64).product();
    let mut total = 0.0;
    for (t, coeff) in q.alpha_tuples(n) {
        if !t.total_degree_is_even() {
            continue;
        }
        total += coeff * lhs_bruteforce(&t, kernel, rule)?;
    }
    Ok(total / n_fact)
}

/// `∫_{0≤s₁≤…≤sₙ≤1} E[∏ Q(X(s_k))]` integrated directly over the ordered
/// simplex, with the expectation from [`wick_expectation`].
pub fn time_ordered_bruteforce(
    q: &Polynomial,
    n: usize,
    kernel: &CovarianceKernel,
    rule: &QuadratureRule,
) -> Result<f64> {
    if n > LHS_MAX_SLOTS {
        return Err(Error::Guard(format!("time-ordered oracle limited to {LHS_MAX_SLOTS} slots")));
    }
    let tuples: Vec<(AlphaTuple, f64)> = q.alpha_tuples(n).filter(|(t, _)| t.total_degree_is_even()).collect();
    if let Some((t, _)) = tuples.iter().find(|(t, _)| t.occurrence_count() as usize > LHS_MAX_OCCURRENCES) {
        return Err(Error::Guard(format!("occurrence set of {} too large", t.occurrence_count())));
    }
    Ok(integrate_ordered_simplex(n, rule, |s| {
        tuples
            .iter()
            .map(|(t, c)| c * wick_expectation(t, |k, i, l, j| if i == j { kernel.at(s[k], s[l]) } else { 0.0 }))
            .sum()
    }))
}

/// Both sides of the hafnian identity for a symmetric `n×n` matrix with
/// `n = 2l`: the pairing sum and `(1/(l!·2^l)) Σ_σ ∏ A_{σ(2i−1),σ(2i)}`.
pub fn hafnian_identity_check(a: &[Vec<f64>]) -> Result<(f64, f64)> {
    let n = a.len();
    if let Some(row) = a.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: row.len() });
    }
    if n % 2 == 1 {
        return Err(Error::OddSize(n));
    }
    if n > HAFNIAN_MAX_SIZE {
        return Err(Error::Guard(format!("hafnian check limited to n ≤ {HAFNIAN_MAX_SIZE}")));
    }
    let pairing_sum: f64 = PairingIndices::new(n)?.map(|p| p.iter().map(|&(i, j)| a[i][j]).product::<f64>()).sum();
    let l = n / 2;
    let norm: f64 = (1..=l).map(|k| k as f64).product::<f64>() * 2f64.powi(l as i32);
    let permutation_sum: f64 =
        (0..n).permutations(n).map(|s| s.chunks(2).map(|c| a[c[0]][c[1]]).product::<f64>()).sum();
    Ok((pairing_sum, permutation_sum / norm))
}

// Upper-triangular induced multiplicities of a pairing over vertex labels.
fn induced_matrix(n: usize, labels: &[usize], pairs: &[(usize, usize)]) -> Vec<u32> {
    let mut m = vec![0u32; n * n];
    for &(x, y) in pairs {
        let (a, b) = (labels[x].min(labels[y]), labels[x].max(labels[y]));
        m[a * n + b] += 1;
    }
    m
}

fn flat_labels(degrees: impl IntoIterator<Item = u32>) -> Vec<usize> {
    degrees.into_iter().enumerate().flat_map(|(v, d)| std::iter::repeat_n(v, d as usize)).collect()
}

/// Number of pairings of the flat occurrence multiset (vertex `j` repeated
/// `deg(vⱼ)` times) whose induced multigraph is exactly `g`.
pub fn pairing_count_for_graph(g: &Multigraph) -> Result<u64> {
    let labels = flat_labels(g.degrees());
    if labels.len() > COUNT_MAX_DEGREE {
        return Err(Error::Guard(format!("pairing count limited to total degree {COUNT_MAX_DEGREE}")));
    }
    let target = g.matrix();
    Ok(PairingIndices::new(labels.len())?.filter(|p| induced_matrix(g.n(), &labels, p) == target).count() as u64)
}

/// Histogram of induced multigraphs over all pairings for one degree vector.
pub fn induced_graph_histogram(degrees: &[u32]) -> Result<HashMap<Multigraph, u64>> {
    let n = degrees.len();
    let labels = flat_labels(degrees.iter().copied());
    if labels.len() > COUNT_MAX_DEGREE {
        return Err(Error::Guard(format!("pairing count limited to total degree {COUNT_MAX_DEGREE}")));
    }
    let mut hist = HashMap::new();
    if labels.len() % 2 == 1 {
        return Ok(hist);
    }
    for p in PairingIndices::new(labels.len())? {
        let m = induced_matrix(n, &labels, &p);
        let rows: Vec<Vec<u32>> = m.chunks(n).map(<[u32]>::to_vec).collect();
        *hist.entry(Multigraph::from_upper(&rows)?).or_insert(0) += 1;
    }
    Ok(hist)
}

/// Number of `l`-tuples of pairings, one per column class of `A` (vertex
/// `j` holding `A_{j,k}` occurrences of class `k`), whose induced graphs sum
/// to the upper-triangular `M`.
pub fn pairing_count_for_decomposition(m: &[Vec<u32>], a: &[Vec<u32>]) -> Result<u64> {
    let n = m.len();
    let target = Multigraph::from_upper(m)?;
    if a.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.len() });
    }
    let l = a.first().map_or(0, Vec::len);
    let mut partial: HashMap<Multigraph, u64> = HashMap::from([(Multigraph::empty(n), 1)]);
    for k in 0..l {
        let degrees: Vec<u32> = a.iter().map(|row| row[k]).collect();
        let hist = induced_graph_histogram(&degrees)?;
        let mut next = HashMap::new();
        for (g0, c0) in &partial {
            for (g1, c1) in &hist {
                *next.entry(g0.sum(g1)?).or_insert(0) += c0 * c1;
            }
        }
        partial = next;
    }
    Ok(partial.get(&target).copied().unwrap_or(0))
}
