//! Shared test oracles, independent of the library's implementation
//! paths: scalar prox minimizers by grid/golden-section search, a Jacobi
//! eigensolver driving a nuclear-prox oracle through the symmetric
//! dilation, central finite differences, and the reference synthetic
//! low-rank + sparse instance.

#![allow(dead_code)]

use lrrid::Mat;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// Three-stage brute-force grid minimizer for a scalar function over
/// `[-radius, radius]`; each stage re-grids around the best point. Final
/// spacing is about `radius * 4e-10`.
pub fn grid_min_scalar(f: impl Fn(f64) -> f64, radius: f64) -> f64 {
    let mut center = 0.0;
    let mut half = radius;
    let mut best_x = 0.0;
    for _ in 0..3 {
        let mut best = f64::INFINITY;
        for k in -1000..=1000i64 {
            let x = center + k as f64 * half / 1000.0;
            let v = f(x);
            if v < best {
                best = v;
                best_x = x;
            }
        }
        center = best_x;
        half /= 500.0;
    }
    best_x
}

/// Golden-section search on a convex scalar function.
pub fn golden_min_scalar(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = 0.618_033_988_749_894_9;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..120 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// `(eigenvalues, eigenvectors)` with `A = Q * diag(vals) * Qᵀ`, verified
/// internally so a broken oracle cannot pass silently.
pub fn jacobi_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "jacobi_eigen needs a square matrix");
    let mut d = a.clone();
    let mut q = Mat::identity(n, n);
    let scale = a.norm().max(1e-300);
    for _sweep in 0..60 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += d[(i, j)] * d[(i, j)];
            }
        }
        if off.sqrt() <= 1e-13 * scale {
            break;
        }
        for p in 0..n {
            for qq in (p + 1)..n {
                let apq = d[(p, qq)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = 0.5 * (d[(qq, qq)] - d[(p, p)]) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let dkp = d[(k, p)];
                    let dkq = d[(k, qq)];
                    d[(k, p)] = c * dkp - s * dkq;
                    d[(k, qq)] = s * dkp + c * dkq;
                }
                for k in 0..n {
                    let dpk = d[(p, k)];
                    let dqk = d[(qq, k)];
                    d[(p, k)] = c * dpk - s * dqk;
                    d[(qq, k)] = s * dpk + c * dqk;
                }
                for k in 0..n {
                    let qkp = q[(k, p)];
                    let qkq = q[(k, qq)];
                    q[(k, p)] = c * qkp - s * qkq;
                    q[(k, qq)] = s * qkp + c * qkq;
                }
            }
        }
    }
    let vals: Vec<f64> = (0..n).map(|i| d[(i, i)]).collect();

    // Self-check: decomposition must reconstruct and be orthogonal.
    let lambda = Mat::from_fn(n, n, |i, j| if i == j { vals[i] } else { 0.0 });
    let recon_err = (&q * lambda * q.transpose() - a).norm();
    assert!(
        recon_err <= 1e-9 * scale.max(1.0),
        "jacobi oracle reconstruction error {recon_err}"
    );
    let orth_err = (q.transpose() * &q - Mat::identity(n, n)).norm();
    assert!(orth_err <= 1e-10, "jacobi oracle orthogonality error {orth_err}");

    (vals, q)
}

/// Independent minimizer of `tau*||X||_* + 0.5*||X - A||_F²`.
///
/// Works through the symmetric dilation `S = [[0, A], [Aᵀ, 0]]`, whose
/// eigenvalues are the signed singular values of `A`: shrinking them
/// toward zero by `tau` (odd extension of the scalar prox, minimized here
/// by golden-section search, not by the shrinkage formula) and
/// reassembling gives the prox in the top-right block. Shares no code
/// with the library's SVD route.
pub fn nuclear_prox_oracle(a: &Mat, tau: f64) -> Mat {
    let (m, n) = (a.nrows(), a.ncols());
    let mut s = Mat::zeros(m + n, m + n);
    for i in 0..m {
        for j in 0..n {
            s[(i, m + j)] = a[(i, j)];
            s[(m + j, i)] = a[(i, j)];
        }
    }
    let (vals, q) = jacobi_eigen(&s);
    let shrunk: Vec<f64> = vals
        .iter()
        .map(|&lam| {
            // argmin_x tau*|x| + (x - lam)^2 / 2 by convex search.
            let r = lam.abs() + tau + 1.0;
            golden_min_scalar(|x| tau * x.abs() + 0.5 * (x - lam).powi(2), -r, r)
        })
        .collect();
    let lambda = Mat::from_fn(m + n, m + n, |i, j| if i == j { shrunk[i] } else { 0.0 });
    let g = &q * lambda * q.transpose();
    Mat::from_fn(m, n, |i, j| g[(i, m + j)])
}

/// Central finite-difference gradient of a scalar function of a matrix.
pub fn fd_gradient(f: impl Fn(&Mat) -> f64, at: &Mat, h: f64) -> Mat {
    let mut g = Mat::zeros(at.nrows(), at.ncols());
    for i in 0..at.nrows() {
        for j in 0..at.ncols() {
            let mut plus = at.clone();
            plus[(i, j)] += h;
            let mut minus = at.clone();
            minus[(i, j)] -= h;
            g[(i, j)] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
    }
    g
}

/// Reference low-rank + sparse instance: `Y = D* X* + E*` with unit
/// dictionary columns, `X*` built from three disjoint rank-1 blocks
/// (rank 3, 80% zeros), and `E*` holding 30 random entries (5%).
pub fn synthetic_instance(seed: u64) -> (Mat, Mat, Mat, Mat) {
    let mut rng = seeded(seed);
    let d_star = {
        let g = random_mat(&mut rng, 30, 10);
        lrrid::prox::project_columns_unit_sphere(&g)
    };
    let mut x_star = Mat::zeros(10, 20);
    let blocks: [(std::ops::Range<usize>, std::ops::Range<usize>); 3] =
        [(0..3, 0..5), (3..5, 5..10), (5..8, 10..15)];
    for (rows, cols) in blocks {
        let u: Vec<f64> = rows.clone().map(|_| rng.random_range(0.5..1.5)).collect();
        let v: Vec<f64> = cols.clone().map(|_| rng.random_range(0.5..1.5)).collect();
        for (iu, r) in rows.clone().enumerate() {
            for (iv, c) in cols.clone().enumerate() {
                x_star[(r, c)] = u[iu] * v[iv];
            }
        }
    }
    let mut e_star = Mat::zeros(30, 20);
    let positions = rand::seq::index::sample(&mut rng, 600, 30);
    for p in positions {
        e_star[(p % 30, p / 30)] = rng.random_range(-1.0..1.0);
    }
    let y = &d_star * &x_star + &e_star;
    (y, d_star, x_star, e_star)
}
