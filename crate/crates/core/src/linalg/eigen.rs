//! Leading eigenpairs of a symmetric PSD matrix by power iteration with
//! Hotelling deflation.
//!
//! Every run starts from the normalized all-ones vector, so results are
//! reproducible bit for bit. After the requested `k` pairs, one further
//! deflated run estimates λ_{k+1}; its Rayleigh quotient bounds the spectral
//! gap that decides whether the k-th direction is well defined.

use super::{dot, norm, SetStatistics, SymMatrix};
use crate::error::{Error, Result};

/// Iterate stops once ‖A v − μ v‖ falls below this fraction of λ₁, times
/// √n to stay clear of the rounding floor of the matrix-vector product.
const RESIDUAL_TOL: f64 = 1e-13;
/// Relative gap (against λ₁) at or below which a spectrum is degenerate.
const GAP_TOL: f64 = 1e-9;
/// A start vector whose image is this small (relative) is treated as
/// orthogonal to the dominant eigenspace.
const ORTHO_TOL: f64 = 1e-12;
/// Probe runs stop when the Rayleigh quotient gains less than this
/// (relative to λ₁) in one step.
const PROBE_STALL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    /// Unit-norm; first component with magnitude above 1e-12 is positive.
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Return the last iterate instead of failing on a degenerate spectrum.
    pub allow_degenerate: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            allow_degenerate: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    /// Descending by eigenvalue.
    pub pairs: Vec<EigenPair>,
    /// Smallest λᵢ − λᵢ₊₁ over the returned components (λ_{k+1} estimated),
    /// relative to λ₁. `None` when k equals the dimension and k = 1.
    pub min_relative_gap: Option<f64>,
    /// Set when `allow_degenerate` let a degenerate spectrum through.
    pub degenerate: bool,
    pub iterations: Vec<usize>,
}

/// Top `k` eigenpairs of the covariance in `stats`, failing on a degenerate
/// spectrum.
pub fn top_eigenpairs(stats: &SetStatistics, k: usize) -> Result<Vec<EigenPair>> {
    top_eigenpairs_with(stats.cov(), k, &SolverOptions::default()).map(|d| d.pairs)
}

struct Iterate {
    vector: Vec<f64>,
    /// Rayleigh quotient on the matrix that was iterated.
    rq: f64,
    converged: bool,
    iterations: usize,
    /// λ(1 − ρ) with ρ the observed residual contraction; a gap estimate.
    gap_estimate: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Full,
    /// Only the eigenvalue is wanted; stop when the quotient stalls or when
    /// it reaches `ceiling` (the smallest accepted eigenvalue minus the gap
    /// tolerance).
    Probe { ceiling: f64 },
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        for (x, y) in v.iter_mut().zip(b) {
            *x -= c * y;
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

fn start_vector(n: usize, basis: &[Vec<f64>], perturb: usize) -> Option<Vec<f64>> {
    let mut v = vec![1.0; n];
    v.iter_mut().take(perturb).for_each(|x| *x += 1.0);
    normalize(&mut v);
    orthogonalize(&mut v, basis);
    (normalize(&mut v) > ORTHO_TOL).then_some(v)
}

fn power_iterate(
    a: &SymMatrix,
    basis: &[Vec<f64>],
    start: Vec<f64>,
    scale: f64,
    max_iterations: usize,
    mode: Mode,
) -> Iterate {
    let n = a.dim();
    let mut v = start;
    let mut y = vec![0.0; n];
    a.mul_vec(&v, &mut y);
    let mut rq = dot(&v, &y);
    let residual = |v: &[f64], y: &[f64], rq: f64| {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| (yi - rq * vi).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let tol = RESIDUAL_TOL * (n as f64).sqrt().max(1.0);
    let mut res = residual(&v, &y, rq);
    let mut prev_res = f64::INFINITY;
    let mut iterations = 0;

    let converged = loop {
        let scale_now = scale.max(rq.abs());
        if res <= tol * scale_now {
            break true;
        }
        if iterations >= max_iterations {
            break false;
        }
        if let Mode::Probe { ceiling } = mode {
            if rq >= ceiling {
                break false;
            }
        }
        iterations += 1;
        orthogonalize(&mut y, basis);
        if normalize(&mut y) == 0.0 {
            // iterate fell into the null space: v is an eigenvector for 0
            break true;
        }
        std::mem::swap(&mut v, &mut y);
        a.mul_vec(&v, &mut y);
        let next_rq = dot(&v, &y);
        let gained = next_rq - rq;
        rq = next_rq;
        prev_res = res;
        res = residual(&v, &y, rq);
        if matches!(mode, Mode::Probe { .. }) && gained.abs() <= PROBE_STALL * scale_now {
            break false;
        }
    };

    let rho = if prev_res.is_finite() && prev_res > 0.0 {
        (res / prev_res).min(1.0)
    } else {
        0.0
    };
    Iterate {
        vector: v,
        rq,
        converged,
        iterations,
        gap_estimate: rq.abs() * (1.0 - rho),
    }
}

/// Runs power iteration on `work` from the all-ones start, falling back to
/// perturbed starts when the start is (numerically) orthogonal to the
/// dominant eigenspace or is itself an eigenvector that may not be dominant.
fn leading_pair(
    work: &SymMatrix,
    basis: &[Vec<f64>],
    scale: f64,
    opts: &SolverOptions,
    mode: Mode,
) -> Option<Iterate> {
    let n = work.dim();
    let mut best: Option<Iterate> = None;
    for perturb in 0..=n {
        let Some(start) = start_vector(n, basis, perturb) else {
            continue;
        };
        let mut image = vec![0.0; n];
        work.mul_vec(&start, &mut image);
        let image_norm = norm(&image);
        if image_norm <= ORTHO_TOL * scale && perturb < n {
            continue;
        }
        let it = power_iterate(work, basis, start, scale, opts.max_iterations, mode);
        // A start that is already an eigenvector says nothing about dominance,
        // so compare against one perturbed start before accepting it.
        let trivially_converged = it.iterations == 0 && it.converged;
        let better = best.as_ref().is_none_or(|b| it.rq > b.rq);
        if better {
            best = Some(it);
        }
        if !trivially_converged || perturb >= 1 {
            break;
        }
    }
    best
}

fn canonical_sign(v: &mut [f64]) {
    if let Some(&first) = v.iter().find(|c| c.abs() > 1e-12) {
        if first < 0.0 {
            for c in v.iter_mut() {
                *c = -*c;
            }
        }
    }
}

fn degenerate(component: usize, gap: f64, reason: &'static str) -> Error {
    Error::DegenerateSpectrum {
        component,
        gap,
        reason,
    }
}

/// Top `k` eigenpairs of a symmetric positive semidefinite matrix.
pub fn top_eigenpairs_with(
    cov: &SymMatrix,
    k: usize,
    opts: &SolverOptions,
) -> Result<Decomposition> {
    let n = cov.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "component count {k} outside 1..={n}"
        )));
    }
    let trace = cov.trace();
    let floor = (trace * 1e-12).max(f64::MIN_POSITIVE);
    let mut is_degenerate = false;
    let mut flag = |err: Error| -> Result<()> {
        if opts.allow_degenerate {
            is_degenerate = true;
            Ok(())
        } else {
            Err(err)
        }
    };

    if trace.is_nan() || trace <= 0.0 {
        flag(degenerate(1, 0.0, "covariance is zero"))?;
    }

    let mut work = cov.clone();
    let mut pairs: Vec<EigenPair> = Vec::with_capacity(k + 1);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
    let mut iterations = Vec::new();
    let mut lambda1 = floor;
    let mut probe_value: Option<f64> = None;

    loop {
        let sorted_kth = if pairs.len() >= k {
            let mut values: Vec<f64> = pairs.iter().map(|p| p.value).collect();
            values.sort_by(|a, b| b.total_cmp(a));
            Some(values[k - 1])
        } else {
            None
        };
        if pairs.len() == n {
            break;
        }
        let mode = match sorted_kth {
            Some(kth) => Mode::Probe {
                ceiling: kth - GAP_TOL * lambda1,
            },
            None => Mode::Full,
        };

        let Some(mut it) = leading_pair(&work, &basis, lambda1, opts, mode) else {
            // nothing left outside the found subspace
            break;
        };
        iterations.push(it.iterations);

        if let Some(kth) = sorted_kth {
            if it.rq < kth - GAP_TOL * lambda1 {
                probe_value = Some(it.rq);
                break;
            }
            // the quotient reached the k-th eigenvalue: either a tie or a
            // dominant direction the earlier starts missed
            it = power_iterate(
                &work,
                &basis,
                it.vector,
                lambda1,
                opts.max_iterations,
                Mode::Full,
            );
            if it.rq <= kth + GAP_TOL * lambda1 {
                probe_value = Some(it.rq);
                break;
            }
        }

        let component = pairs.len() + 1;
        if !it.converged {
            flag(degenerate(
                component,
                it.gap_estimate / lambda1,
                "power iteration did not converge",
            ))?;
        }

        let mut vector = it.vector;
        canonical_sign(&mut vector);
        let mut image = vec![0.0; n];
        cov.mul_vec(&vector, &mut image);
        let value = dot(&vector, &image);
        if pairs.is_empty() {
            lambda1 = value.max(floor);
        }
        work.rank_one_sub(it.rq, &vector);
        basis.push(vector.clone());
        pairs.push(EigenPair { value, vector });
    }

    pairs.sort_by(|a, b| b.value.total_cmp(&a.value));
    let mut next_values: Vec<Option<f64>> = pairs.iter().skip(1).map(|p| Some(p.value)).collect();
    pairs.truncate(k);
    next_values.truncate(k);
    if next_values.len() < k {
        next_values.push(probe_value);
    }

    let mut min_gap: Option<f64> = None;
    for (i, (pair, next)) in pairs.iter().zip(&next_values).enumerate() {
        let Some(next) = next else { continue };
        let gap = (pair.value - next.max(0.0)) / lambda1;
        min_gap = Some(min_gap.map_or(gap, |g: f64| g.min(gap)));
        if gap <= GAP_TOL {
            flag(degenerate(i + 1, gap, "eigenvalue gap below tolerance"))?;
        }
    }

    Ok(Decomposition {
        pairs,
        min_relative_gap: min_gap,
        degenerate: is_degenerate,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(m: &SymMatrix, k: usize) -> Result<Vec<EigenPair>> {
        top_eigenpairs_with(m, k, &SolverOptions::default()).map(|d| d.pairs)
    }

    #[test]
    fn diagonal_matrix() {
        let p = solve(&SymMatrix::from_diagonal(&[2.0, 1.0]), 1).unwrap();
        assert_eq!(p.len(), 1);
        assert!((p[0].value - 2.0).abs() < 1e-14);
        assert!((p[0].vector[0] - 1.0).abs() < 1e-12 && p[0].vector[1].abs() < 1e-12);
    }

    #[test]
    fn all_ones_two_by_two() {
        let m = SymMatrix::from_row_major(2, vec![1.0, 1.0, 1.0, 1.0]);
        let p = solve(&m, 1).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p[0].value - 2.0).abs() < 1e-14);
        assert!((p[0].vector[0] - s).abs() < 1e-14 && (p[0].vector[1] - s).abs() < 1e-14);
    }

    #[test]
    fn identity_is_degenerate() {
        let err = solve(&SymMatrix::identity(4), 1).unwrap_err();
        assert!(matches!(err, Error::DegenerateSpectrum { .. }), "{err}");
        let d = top_eigenpairs_with(
            &SymMatrix::identity(4),
            1,
            &SolverOptions {
                allow_degenerate: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(d.degenerate);
        assert!((d.pairs[0].value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        let err = solve(&SymMatrix::zeros(3), 1).unwrap_err();
        assert!(matches!(err, Error::DegenerateSpectrum { component: 1, .. }));
    }

    #[test]
    fn start_vector_in_null_space_is_perturbed() {
        // ones is the null vector; dominant direction is (1, -1)/√2
        let m = SymMatrix::from_row_major(2, vec![1.0, -1.0, -1.0, 1.0]);
        let p = solve(&m, 1).unwrap();
        assert!((p[0].value - 2.0).abs() < 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p[0].vector[0] - s).abs() < 1e-10 && (p[0].vector[1] + s).abs() < 1e-10);
    }

    #[test]
    fn start_vector_that_is_a_minor_eigenvector() {
        // ones is an eigenvector for 2, but the top eigenvalue is 4
        let m = SymMatrix::from_row_major(2, vec![3.0, -1.0, -1.0, 3.0]);
        let p = solve(&m, 2).unwrap();
        assert!((p[0].value - 4.0).abs() < 1e-12, "{p:?}");
        assert!((p[1].value - 2.0).abs() < 1e-12);
        assert!(p[0].vector[0] > 0.0 && p[0].vector[1] < 0.0);

        // same trap in 3-d where ones is exactly the middle eigenvector
        let m = SymMatrix::from_row_major(
            3,
            vec![3.0, -1.0, 0.0, -1.0, 3.0, 0.0, 0.0, 0.0, 2.0],
        );
        let p = solve(&m, 1).unwrap();
        assert!((p[0].value - 4.0).abs() < 1e-10, "{p:?}");
    }

    #[test]
    fn rank_deficient_full_spectrum() {
        let m = SymMatrix::from_diagonal(&[5.0, 3.0, 0.0]);
        let p = solve(&m, 3).unwrap();
        let values: Vec<f64> = p.iter().map(|e| e.value).collect();
        assert!((values[0] - 5.0).abs() < 1e-12);
        assert!((values[1] - 3.0).abs() < 1e-12);
        assert!(values[2].abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_k() {
        assert!(solve(&SymMatrix::identity(2), 0).is_err());
        assert!(solve(&SymMatrix::identity(2), 3).is_err());
    }

    #[test]
    fn canonical_sign_skips_tiny_leading_entries() {
        let mut v = vec![1e-13, -0.6, 0.8];
        canonical_sign(&mut v);
        assert_eq!(v, vec![-1e-13, 0.6, -0.8]);
    }
}
