//! Randomized and structural checks of the invariants everything else relies
//! on. Each check returns the worst observed slack together with the bound
//! it was held to.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::bratteli::{self, BratteliError};
use crate::linalg::{self, Matrix, SymMatrix};
use crate::models::DisorderModel;
use crate::rankring::{Block, BlockOperator};
use crate::stepfn::sup_distance;
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Largest value of the checked quantity.
    pub observed: f64,
    /// Bound it must not exceed (for identities, the allowed residual).
    pub bound: f64,
    pub trials: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Random `n × n` matrix with Gaussian entries.
pub fn random_matrix(rng: &mut impl Rng, n: usize) -> Matrix {
    let data = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::new(n, data).expect("finite entries")
}

/// `X Yᵀ` with small integer factors of width `r`: exactly representable,
/// and of rank `r` unless the factors are degenerate.
pub fn random_low_rank(rng: &mut impl Rng, n: usize, r: usize) -> Matrix {
    loop {
        let x: Vec<f64> = (0..n * r).map(|_| rng.random_range(-3i32..=3) as f64).collect();
        let y: Vec<f64> = (0..n * r).map(|_| rng.random_range(-3i32..=3) as f64).collect();
        let m = Matrix::from_fn(n, |a, b| (0..r).map(|k| x[a * r + k] * y[b * r + k]).sum());
        if exact_rank(&m) == r.min(n) {
            return m;
        }
    }
}

/// Symmetric positive semidefinite `Σ_k v_k v_kᵀ` of rank `r` with small
/// integer vectors.
pub fn random_psd_low_rank(rng: &mut impl Rng, n: usize, r: usize) -> SymMatrix {
    loop {
        let v: Vec<f64> = (0..n * r).map(|_| rng.random_range(-2i32..=2) as f64).collect();
        let m = Matrix::from_fn(n, |a, b| (0..r).map(|k| v[a * r + k] * v[b * r + k]).sum());
        if exact_rank(&m) == r.min(n) {
            return SymMatrix::from_matrix(m).expect("symmetric by construction");
        }
    }
}

/// `GᵀG/n + I`: symmetric, positive definite.
pub fn random_positive(rng: &mut impl Rng, n: usize) -> SymMatrix {
    let g = random_matrix(rng, n);
    let mut m = g.transpose().mul(&g).expect("square").scale(1.0 / n as f64);
    for a in 0..n {
        for b in 0..a {
            let s = 0.5 * (m.get(a, b) + m.get(b, a));
            m.set(a, b, s);
            m.set(b, a, s);
        }
        m.set(a, a, m.get(a, a) + 1.0);
    }
    SymMatrix::from_matrix(m).expect("symmetrized")
}

/// Rank by fraction-free Gaussian elimination in exact integer arithmetic;
/// entries must be integers of moderate size.
pub fn exact_rank(m: &Matrix) -> usize {
    let n = m.dim();
    let mut a: Vec<Vec<i128>> = (0..n)
        .map(|r| m.row(r).iter().map(|&x| x as i128).collect())
        .collect();
    let mut rank = 0;
    let mut prev = 1i128;
    for col in 0..n {
        let Some(p) = (rank..n).find(|&r| a[r][col] != 0) else {
            continue;
        };
        a.swap(rank, p);
        for r in rank + 1..n {
            for c in col + 1..n {
                a[r][c] = (a[rank][col] * a[r][c] - a[r][col] * a[rank][c]) / prev;
            }
            a[r][col] = 0;
        }
        prev = a[rank][col];
        rank += 1;
    }
    rank
}

fn random_weights(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let rest: f64 = w[1..].iter().sum();
    w[0] = 1.0 - rest;
    w
}

/// Random block operator with up to `max_blocks` blocks of size up to
/// `max_size`; `psd` selects `GᵀG/n + I`-type blocks.
pub fn random_block_operator(rng: &mut impl Rng, max_blocks: usize, max_size: usize, psd: bool) -> BlockOperator {
    let k = rng.random_range(1..=max_blocks);
    let weights = random_weights(rng, k);
    let blocks = weights
        .into_iter()
        .map(|weight| {
            let n = rng.random_range(1..=max_size);
            let matrix = if psd {
                random_positive(rng, n).into_matrix()
            } else {
                random_matrix(rng, n)
            };
            Block { weight, matrix }
        })
        .collect();
    BlockOperator::new(blocks).expect("weights normalized")
}

/// Pair of compatible block operators with prescribed integer block ranks.
pub fn random_low_rank_pair(rng: &mut impl Rng, max_blocks: usize, max_size: usize) -> (BlockOperator, BlockOperator) {
    let k = rng.random_range(1..=max_blocks);
    let weights = random_weights(rng, k);
    let mut a = Vec::with_capacity(k);
    let mut b = Vec::with_capacity(k);
    for weight in weights {
        let n = rng.random_range(1..=max_size);
        let ra = rng.random_range(0..=n);
        let rb = rng.random_range(0..=n);
        let ma = if ra == 0 { Matrix::zeros(n) } else { random_low_rank(rng, n, ra) };
        let mb = if rb == 0 { Matrix::zeros(n) } else { random_low_rank(rng, n, rb) };
        a.push(Block { weight, matrix: ma });
        b.push(Block { weight, matrix: mb });
    }
    (
        BlockOperator::new(a).expect("weights normalized"),
        BlockOperator::new(b).expect("weights normalized"),
    )
}

fn result(name: &str, observed: f64, bound: f64, trials: usize, detail: impl Into<String>) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed: observed <= bound,
        observed,
        bound,
        trials,
        detail: detail.into(),
    }
}

/// `σ + σ̃ = 1` at every breakpoint, and `σ` equals weighted eigenvalue
/// counting on positive inputs.
pub fn check_complement_identity(seed: u64, trials: usize) -> Result<CheckResult, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let psd = t % 2 == 0;
        let op = random_block_operator(&mut rng, 3, 16, psd);
        let s = op.sigma()?;
        let tilde = op.sigma_tilde()?;
        for &b in s.breakpoints() {
            worst = worst.max((s.eval(b) + tilde.eval(b) - 1.0).abs());
        }
        if psd {
            let mut jumps = Vec::new();
            for blk in op.blocks() {
                let sym = SymMatrix::from_matrix(blk.matrix.clone()).map_err(crate::rankring::RankError::from)?;
                let eig = linalg::sym_spectrum(&sym)?;
                let n = eig.len() as f64;
                jumps.extend(eig.into_iter().map(|e| (e, blk.weight / n)));
            }
            let counting = crate::stepfn::StepFunction::from_jumps(jumps);
            worst = worst.max(sup_distance(&s, &counting));
        }
    }
    Ok(result(
        "complement-identity",
        worst,
        1e-8,
        trials,
        "sigma + sigma_tilde = 1; sigma = weighted eigenvalue count on positive inputs",
    ))
}

/// `‖σ_T − σ_S‖∞ ≤ r(T − S)` for `S = T + P` with `P` of known block ranks,
/// and for unrelated pairs of equal shape.
pub fn check_rank_lipschitz(seed: u64, trials: usize, tol: f64) -> Result<CheckResult, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for t in 0..trials {
        let shape = random_block_operator(&mut rng, 3, 12, false);
        let t_op = shape.clone();
        let s_op = if t % 4 == 3 {
            let blocks = shape
                .blocks()
                .iter()
                .map(|b| Block {
                    weight: b.weight,
                    matrix: random_matrix(&mut rng, b.matrix.dim()),
                })
                .collect();
            BlockOperator::new(blocks)?
        } else {
            let blocks = shape
                .blocks()
                .iter()
                .map(|b| {
                    let n = b.matrix.dim();
                    let r = rng.random_range(0..=n.min(3));
                    let p = if r == 0 { Matrix::zeros(n) } else { random_low_rank(&mut rng, n, r) };
                    Ok(Block {
                        weight: b.weight,
                        matrix: b.matrix.add(&p)?,
                    })
                })
                .collect::<Result<Vec<_>, linalg::LinalgError>>()?;
            BlockOperator::new(blocks)?
        };
        let d = sup_distance(&t_op.sigma()?, &s_op.sigma()?);
        let r = t_op.sub(&s_op)?.rank(tol)?;
        worst = worst.max(d - r);
    }
    Ok(result(
        "rank-lipschitz",
        worst,
        1e-8,
        trials,
        "max over trials of sup|sigma_T - sigma_S| - r(T - S)",
    ))
}

/// `‖N_A − N_B‖∞ ≤ Rank(A − B)/n` for positive `A` and `B = A + P`, `P`
/// positive of rank `r ∈ 1..=8`, `n = 64`.
pub fn check_perturbation_bound(seed: u64, trials: usize) -> Result<CheckResult, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 64;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let a = random_positive(&mut rng, n);
        let r = rng.random_range(1..=8);
        let p = random_psd_low_rank(&mut rng, n, r);
        let b = SymMatrix::from_matrix(a.as_matrix().add(p.as_matrix())?)?;
        let d = sup_distance(&linalg::spectral_distribution(&a)?, &linalg::spectral_distribution(&b)?);
        worst = worst.max(d - r as f64 / n as f64);
    }
    Ok(result(
        "perturbation-bound",
        worst,
        1e-8,
        trials,
        "max over trials of sup|N_A - N_B| - r/64",
    ))
}

/// Compatibility residuals of the transition weights at the levels that fit the enumeration cap.
pub fn check_compatibility_residual(model: &DisorderModel, d: usize, levels: &[usize]) -> Result<CheckResult, Error> {
    let mut worst: f64 = 0.0;
    let mut done = Vec::new();
    for &i in levels {
        match bratteli::check_compatibility(model, i, d) {
            Ok(r) => {
                worst = worst.max(r);
                done.push(i);
            }
            Err(BratteliError::Model(crate::models::ModelError::TooManyConfigs { .. })) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(result(
        "compatibility-residual",
        worst,
        1e-12,
        done.len(),
        format!("max_alpha |p_i - sum_beta M p_(i+1)| at levels {done:?}"),
    ))
}

/// `r(Δ̃_j − φ(Δ̃_i)) ≤ β_{i,j}` and the induced IDS distance.
pub fn check_cauchy_bound(model: &DisorderModel, d: usize, pairs: &[(usize, usize)], tol: f64) -> Result<CheckResult, Error> {
    let mut worst = f64::NEG_INFINITY;
    let mut done = Vec::new();
    for &(i, j) in pairs {
        match bratteli::cauchy_report(model, i, j, d, tol) {
            Ok(r) => {
                worst = worst
                    .max(r.rank_distance - r.bound - 1e-9)
                    .max(r.ids_distance - r.rank_distance - 1e-8);
                done.push((i, j));
            }
            Err(BratteliError::Model(crate::models::ModelError::TooManyConfigs { .. })) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(result(
        "cauchy-bound",
        worst.max(if done.is_empty() { 1.0 } else { f64::NEG_INFINITY }),
        0.0,
        done.len(),
        format!("rank <= beta + 1e-9 and ids distance <= rank + 1e-8 at {done:?}"),
    ))
}

/// Subadditivity, submultiplicativity and faithfulness of the rank.
pub fn check_rank_axioms(seed: u64, trials: usize, tol: f64) -> Result<CheckResult, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let mut faithful = true;
    for _ in 0..trials {
        let (a, b) = random_low_rank_pair(&mut rng, 3, 8);
        let (ra, rb) = (a.rank(tol)?, b.rank(tol)?);
        worst = worst
            .max(a.add(&b)?.rank(tol)? - ra - rb)
            .max(a.mul(&b)?.rank(tol)? - ra.min(rb));
        let a_zero = a.blocks().iter().all(|blk| blk.matrix.max_abs() == 0.0);
        faithful &= (ra == 0.0) == a_zero;
    }
    let mut r = result(
        "rank-axioms",
        worst,
        2.0 * tol,
        trials,
        "max of r(A+B) - r(A) - r(B) and r(AB) - min(r(A), r(B)); r(A) = 0 iff A = 0",
    );
    r.passed &= faithful;
    Ok(r)
}

/// The full suite run by `verify`.
pub fn verify_suite(model: &DisorderModel, d: usize, seed: u64, tol: f64) -> Result<VerifyReport, Error> {
    let pairs: &[(usize, usize)] = if d == 1 { &[(1, 2), (2, 3)] } else { &[(0, 1), (1, 2)] };
    Ok(VerifyReport {
        checks: vec![
            check_complement_identity(seed, 100)?,
            check_rank_lipschitz(seed.wrapping_add(1), 60, tol)?,
            check_perturbation_bound(seed.wrapping_add(2), 40)?,
            check_compatibility_residual(model, d, &[0, 1, 2])?,
            check_cauchy_bound(model, d, pairs, tol)?,
            check_rank_axioms(seed.wrapping_add(3), 100, tol)?,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DEFAULT_RANK_TOL;

    #[test]
    fn exact_rank_examples() {
        assert_eq!(exact_rank(&Matrix::zeros(3)), 0);
        assert_eq!(exact_rank(&Matrix::identity(4)), 4);
        let m = Matrix::new(3, vec![1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(exact_rank(&m), 2);
    }

    #[test]
    fn generators_have_the_advertised_ranks() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [1usize, 5, 16] {
            for r in 1..=n.min(6) {
                let m = random_low_rank(&mut rng, n, r);
                assert_eq!(linalg::numerical_rank(&m, DEFAULT_RANK_TOL).unwrap(), r);
                let p = random_psd_low_rank(&mut rng, n, r);
                assert_eq!(linalg::numerical_rank(p.as_matrix(), DEFAULT_RANK_TOL).unwrap(), r);
            }
        }
        let a = random_positive(&mut rng, 10);
        assert!(linalg::sym_spectrum(&a).unwrap()[0] >= 1.0 - 1e-12);
    }

    #[test]
    fn default_suite_passes() {
        let m = DisorderModel::uniform_site_potential(vec![2.0, 3.0]).unwrap();
        let report = verify_suite(&m, 1, 0, DEFAULT_RANK_TOL).unwrap();
        for c in &report.checks {
            assert!(c.passed, "{c:?}");
            assert!(c.trials > 0);
        }
    }

    #[test]
    fn suite_in_two_dimensions_with_percolation() {
        let m = DisorderModel::site_percolation(0.4).unwrap();
        let c = check_compatibility_residual(&m, 2, &[0, 1]).unwrap();
        assert!(c.passed && c.trials == 2, "{c:?}");
        let c = check_cauchy_bound(&m, 2, &[(0, 1)], DEFAULT_RANK_TOL).unwrap();
        assert!(c.passed, "{c:?}");
    }

    #[test]
    fn a_broken_bound_is_reported() {
        let c = result("x", 0.5, 0.25, 1, "");
        assert!(!c.passed);
    }
}
