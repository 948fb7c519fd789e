//! Brute-force reference implementations shared by the integration tests.
//! None of these call into the library's numerics.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use ddt_core::{BoundingBox, DescriptorGrid, DescriptorSet};

/// Eigenvalues (descending) and matching unit eigenvectors by cyclic Jacobi
/// rotations, run until every off-diagonal entry is below 1e-14 of the norm.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let off = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j].abs())
            .fold(0.0, f64::max);
        if off < 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|r| v[r][i]).collect())
        .collect();
    (values, vectors)
}

/// Mean and population covariance by explicit double loops over every
/// descriptor, in f64.
pub fn naive_mean_cov(set: &DescriptorSet) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = set.d();
    let rows: Vec<Vec<f64>> = set
        .grids()
        .iter()
        .flat_map(|g| g.descriptors().map(|x| x.iter().map(|&v| f64::from(v)).collect()))
        .collect();
    let k = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in &rows {
        for i in 0..d {
            mean[i] += r[i];
        }
    }
    for m in mean.iter_mut() {
        *m /= k;
    }
    let mut cov = vec![vec![0.0; d]; d];
    for r in &rows {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    for row in cov.iter_mut() {
        for c in row.iter_mut() {
            *c /= k;
        }
    }
    (mean, cov)
}

/// P(clean > noisy) + ½·P(equal) over every (noisy, clean) pair.
pub fn mann_whitney(noisy: &[f64], clean: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &n in noisy {
        for &c in clean {
            acc += if c > n {
                1.0
            } else if c == n {
                0.5
            } else {
                0.0
            };
        }
    }
    acc / (noisy.len() * clean.len()) as f64
}

/// Intersection over union by counting pixels of a rasterized canvas.
pub fn pixel_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = a.xmax.max(b.xmax) as usize + 1;
    let h = a.ymax.max(b.ymax) as usize + 1;
    let (mut inter, mut union) = (0u64, 0u64);
    for y in 0..h as u32 {
        for x in 0..w as u32 {
            let (ia, ib) = (a.contains(x, y), b.contains(x, y));
            inter += u64::from(ia && ib);
            union += u64::from(ia || ib);
        }
    }
    inter as f64 / union as f64
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Random set of `n_grids` grids with random shapes and correlated,
/// anisotropic descriptors.
pub fn random_set(seed: u64, n_grids: usize, max_cells: usize, d: usize) -> DescriptorSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mixing: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..d).map(|_| normal(&mut rng)).collect())
        .collect();
    let offset: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
    let grids = (0..n_grids)
        .map(|g| {
            let h = rng.random_range(1..=max_cells.isqrt().max(1));
            let w = rng.random_range(1..=(max_cells / h).max(1));
            let mut data = Vec::with_capacity(h * w * d);
            for _ in 0..h * w {
                let z: Vec<f64> = (0..d)
                    .map(|i| normal(&mut rng) * (1.0 + i as f64))
                    .collect();
                for i in 0..d {
                    let x: f64 = offset[i] + (0..d).map(|j| mixing[i][j] * z[j]).sum::<f64>() / d as f64;
                    data.push(x as f32);
                }
            }
            DescriptorGrid::new(format!("g{g:03}"), h, w, d, h * 4, w * 4, data).unwrap()
        })
        .collect();
    DescriptorSet::new(grids).unwrap()
}

/// `B·Bᵀ` for a random `n x r` matrix `B` with a spread of column scales.
pub fn random_psd(rng: &mut impl Rng, n: usize, r: usize) -> Vec<Vec<f64>> {
    let b: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..r)
                .map(|j| normal(rng) * 2f64.powi(-(j as i32)))
                .collect::<Vec<f64>>()
        })
        .collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..r).map(|t| b[i][t] * b[j][t]).sum())
                .collect()
        })
        .collect()
}

pub fn rel_frobenius(a: &[f64], b: &[Vec<f64>]) -> f64 {
    let flat: Vec<f64> = b.iter().flatten().copied().collect();
    let diff = a.iter().zip(&flat).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm = flat.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(f64::MIN_POSITIVE)
}
