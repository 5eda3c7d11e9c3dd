//! Monte Carlo estimate of the time-ordered integral: sample times uniformly
//! in the cube, sample the process there, average `∏ Q(X(sₖ))` and divide
//! by `n!`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::CovarianceKernel;
use crate::poly::Polynomial;

/// Samples per reduction block. Blocks are summed in order, so results do
/// not depend on the thread count.
const BLOCK: u64 = 4096;
/// Each failed factorization multiplies the jitter by this, up to three tries.
const JITTER_STEP: f64 = 100.0;
const JITTER_TRIES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: u64,
    pub seed: u64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_jitter() -> f64 {
    1e-12
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { samples: 100_000, seed: 0, jitter: default_jitter() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: u64,
}

/// Lower Cholesky factor of `Gram(times) + jitter·I`, escalating the jitter
/// when the factorization fails.
pub fn gram_factor(kernel: &CovarianceKernel, times: &[f64], jitter: f64) -> Result<DMatrix<f64>> {
    let gram = kernel.gram(times)?;
    let n = times.len();
    let mut eps = jitter;
    for _ in 0..JITTER_TRIES {
        let shifted = &gram + DMatrix::<f64>::identity(n, n) * eps;
        if let Some(ch) = shifted.cholesky() {
            return Ok(ch.l());
        }
        eps *= JITTER_STEP;
    }
    Err(Error::Factorization { jitter: eps / JITTER_STEP })
}

/// An `n×m` matrix whose columns are independent draws of the process at
/// `times`.
pub fn sample_values<R: Rng + ?Sized>(
    kernel: &CovarianceKernel,
    times: &[f64],
    m: usize,
    rng: &mut R,
    jitter: f64,
) -> Result<DMatrix<f64>> {
    let l = gram_factor(kernel, times, jitter)?;
    let z = DMatrix::<f64>::from_fn(times.len(), m, |_, _| rng.sample(StandardNormal));
    Ok(l * z)
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn one_sample(q: &Polynomial, n: usize, kernel: &CovarianceKernel, cfg: &McConfig, index: u64) -> Result<f64> {
    let mut rng = sample_rng(cfg.seed, index);
    let times: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let x = sample_values(kernel, &times, q.dim(), &mut rng, cfg.jitter)?;
    let mut product = 1.0;
    let mut row = vec![0.0; q.dim()];
    for k in 0..n {
        for (i, r) in row.iter_mut().enumerate() {
            *r = x[(k, i)];
        }
        product *= q.eval(&row)?;
    }
    Ok(product)
}

/// Running mean and centered second moment.
#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let d = other.mean - self.mean;
        Moments {
            count,
            mean: self.mean + d * other.count as f64 / count as f64,
            m2: self.m2 + other.m2 + d * d * (self.count as f64 * other.count as f64) / count as f64,
        }
    }
}

pub fn estimate(q: &Polynomial, n: usize, kernel: &CovarianceKernel, cfg: &McConfig) -> Result<McEstimate> {
    if n == 0 {
        return Err(Error::InvalidArgument("Monte Carlo needs n ≥ 1".into()));
    }
    if cfg.samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    if !(cfg.jitter >= 0.0 && cfg.jitter.is_finite()) {
        return Err(Error::InvalidArgument(format!("jitter {} must be finite and non-negative", cfg.jitter)));
    }
    let blocks = cfg.samples.div_ceil(BLOCK);
    let parts: Vec<Moments> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = Moments::default();
            for i in b * BLOCK..((b + 1) * BLOCK).min(cfg.samples) {
                acc.push(one_sample(q, n, kernel, cfg, i)?);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let total = parts.into_iter().fold(Moments::default(), Moments::merge);
    let n_fact: f64 = (1..=n).map(|k| k as f64).product();
    let sd = if total.count > 1 { (total.m2 / (total.count - 1) as f64).sqrt() } else { 0.0 };
    Ok(McEstimate {
        mean: total.mean / n_fact,
        stderr: sd / (total.count as f64).sqrt() / n_fact,
        samples: total.count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::MultiIndex;

    fn mono(terms: &[(u32, f64)]) -> Polynomial {
        Polynomial::from_terms(1, terms.iter().map(|&(a, q)| (MultiIndex::new(vec![a]), q))).unwrap()
    }

    #[test]
    fn constant_kernel_rows_equal() {
        let mut rng = sample_rng(3, 0);
        let x = sample_values(&CovarianceKernel::Constant, &[0.1, 0.5, 0.9], 2, &mut rng, 1e-12).unwrap();
        for col in 0..2 {
            assert!((x[(0, col)] - x[(1, col)]).abs() < 1e-5);
            assert!((x[(0, col)] - x[(2, col)]).abs() < 1e-5);
        }
    }

    #[test]
    fn motion_at_zero_vanishes() {
        let mut rng = sample_rng(5, 0);
        let x = sample_values(&CovarianceKernel::BrownianMotion, &[0.0], 3, &mut rng, 1e-12).unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-4));
    }

    #[test]
    fn sample_covariance_matches_gram() {
        let k = CovarianceKernel::BrownianBridge;
        let times = [0.2, 0.5, 0.7];
        let gram = k.gram(&times).unwrap();
        let draws = 100_000;
        let mut acc = DMatrix::<f64>::zeros(3, 3);
        let mut fourth = DMatrix::<f64>::zeros(3, 3);
        for i in 0..draws {
            let mut rng = sample_rng(11, i);
            let x = sample_values(&k, &times, 1, &mut rng, 1e-12).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    let p = x[(a, 0)] * x[(b, 0)];
                    acc[(a, b)] += p;
                    fourth[(a, b)] += p * p;
                }
            }
        }
        let d = draws as f64;
        for a in 0..3 {
            for b in 0..3 {
                let mean = acc[(a, b)] / d;
                let se = ((fourth[(a, b)] / d - mean * mean) / d).sqrt();
                assert!((mean - gram[(a, b)]).abs() < 3.0 * se, "({a},{b}): {mean} vs {}", gram[(a, b)]);
            }
        }
    }

    #[test]
    fn factorization_failure_reported() {
        // a negative definite table cannot be rescued by jitter
        use crate::kernel::GridKernel;
        let g = GridKernel::new(vec![vec![-1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        let k = CovarianceKernel::grid(g);
        assert!(matches!(gram_factor(&k, &[0.0, 1.0], 1e-12), Err(Error::Factorization { .. })));
    }

    #[test]
    fn estimates_match_closed_forms() {
        let cfg = McConfig { samples: 200_000, seed: 42, jitter: 1e-12 };
        let x = mono(&[(1, 1.0)]);
        let e = estimate(&x, 2, &CovarianceKernel::Product, &cfg).unwrap();
        assert!((e.mean - 0.125).abs() < 3.0 * e.stderr, "{e:?}");
        let sq = mono(&[(2, 1.0)]);
        let e = estimate(&sq, 1, &CovarianceKernel::BrownianMotion, &cfg).unwrap();
        assert!((e.mean - 0.5).abs() < 3.0 * e.stderr, "{e:?}");
        let e = estimate(&x, 1, &CovarianceKernel::BrownianBridge, &cfg).unwrap();
        assert!(e.mean.abs() < 3.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let q = mono(&[(2, 1.0), (1, -0.5)]);
        let cfg = McConfig { samples: 10_000, seed: 7, jitter: 1e-12 };
        let k = CovarianceKernel::BrownianBridge;
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate(&q, 2, &k, &cfg).unwrap())
        };
        let a = run(1);
        assert_eq!(a, run(1));
        assert_eq!(a, run(4));
    }

    #[test]
    fn moments_merge_matches_direct() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let (a, b) = xs.split_at(333);
        let mut ma = Moments::default();
        let mut mb = Moments::default();
        a.iter().for_each(|&x| ma.push(x));
        b.iter().for_each(|&x| mb.push(x));
        let merged = ma.merge(mb);
        assert_eq!(merged.count, whole.count);
        assert!((merged.mean - whole.mean).abs() < 1e-12);
        assert!((merged.m2 - whole.m2).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_config() {
        let x = mono(&[(1, 1.0)]);
        let k = CovarianceKernel::Product;
        assert!(estimate(&x, 0, &k, &McConfig::default()).is_err());
        assert!(estimate(&x, 1, &k, &McConfig { samples: 0, ..Default::default() }).is_err());
    }
}
