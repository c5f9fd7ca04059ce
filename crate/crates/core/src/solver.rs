//! Linear-algebra kernels: restarted GMRES for matrix-free real-linear
//! systems, a dense LU path with transpose solves, and smallest-singular-value
//! estimators.
//!
//! The conjugate-linear integral operators are solved after real-linearization
//! (unknowns split into real and imaginary parts), so every system here is a
//! plain real linear system; the operator is only available as a closure.

/// Matrix-free real linear operator.
pub trait LinOp: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> LinOp for (usize, F) {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.1)(x, y)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    pub tol: f64,
    pub restart: usize,
    pub max_iters: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions {
            tol: 1e-10,
            restart: 60,
            max_iters: 600,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmresReport {
    pub converged: bool,
    /// Relative residual `|b - Ax| / |b|` on exit.
    pub residual: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Restarted GMRES with Givens rotations. Deterministic for fixed inputs.
pub fn gmres(
    op: &dyn LinOp,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: GmresOptions,
) -> (Vec<f64>, GmresReport) {
    let n = op.dim();
    assert_eq!(b.len(), n);
    let bnorm = norm(b).max(f64::MIN_POSITIVE);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut total_iters = 0usize;
    let m = opts.restart;

    let mut r = vec![0.0; n];
    loop {
        // r = b - A x
        op.apply(&x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let beta = norm(&r);
        if beta / bnorm <= opts.tol || total_iters >= opts.max_iters {
            return (
                x,
                GmresReport {
                    converged: beta / bnorm <= opts.tol,
                    residual: beta / bnorm,
                    iterations: total_iters,
                },
            );
        }

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut hess = vec![0.0; (m + 1) * m]; // column-major (i + (m+1)*j)
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;

        let mut k_used = 0;
        let mut w = vec![0.0; n];
        for j in 0..m {
            op.apply(&basis[j], &mut w);
            // modified Gram-Schmidt
            for i in 0..=j {
                let hij = dot(&w, &basis[i]);
                hess[i + (m + 1) * j] = hij;
                for (wv, bv) in w.iter_mut().zip(&basis[i]) {
                    *wv -= hij * bv;
                }
            }
            let hj1 = norm(&w);
            hess[j + 1 + (m + 1) * j] = hj1;

            // apply accumulated rotations to the new column
            for i in 0..j {
                let t = cs[i] * hess[i + (m + 1) * j] + sn[i] * hess[i + 1 + (m + 1) * j];
                hess[i + 1 + (m + 1) * j] =
                    -sn[i] * hess[i + (m + 1) * j] + cs[i] * hess[i + 1 + (m + 1) * j];
                hess[i + (m + 1) * j] = t;
            }
            let (h0, h1) = (hess[j + (m + 1) * j], hess[j + 1 + (m + 1) * j]);
            let denom = (h0 * h0 + h1 * h1).sqrt().max(f64::MIN_POSITIVE);
            cs[j] = h0 / denom;
            sn[j] = h1 / denom;
            hess[j + (m + 1) * j] = denom;
            hess[j + 1 + (m + 1) * j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];

            total_iters += 1;
            k_used = j + 1;
            let res = g[j + 1].abs() / bnorm;
            if res <= opts.tol || total_iters >= opts.max_iters || hj1 == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hj1).collect());
        }

        // back-substitute y from the triangular system, update x
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= hess[i + (m + 1) * j] * y[j];
            }
            y[i] = s / hess[i + (m + 1) * i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, bv) in x.iter_mut().zip(&basis[j]) {
                *xi += yj * bv;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Dense path
// ---------------------------------------------------------------------------

/// Dense row-major matrix with LU factorization (partial pivoting).
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
    pub singular: bool,
}

impl DenseLu {
    pub fn factor(mut a: Vec<f64>, n: usize) -> Self {
        assert_eq!(a.len(), n * n);
        let mut piv = vec![0usize; n];
        let mut singular = false;
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
            }
            let akk = a[k * n + k];
            if akk == 0.0 {
                singular = true;
                continue;
            }
            let inv = 1.0 / akk;
            let (head, tail) = a.split_at_mut((k + 1) * n);
            let row_k = &head[k * n..(k + 1) * n];
            for chunk in tail.chunks_exact_mut(n) {
                let lik = chunk[k] * inv;
                chunk[k] = lik;
                if lik != 0.0 {
                    for j in k + 1..n {
                        chunk[j] -= lik * row_k[j];
                    }
                }
            }
        }
        DenseLu {
            n,
            lu: a,
            piv,
            singular,
        }
    }

    /// Solve `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            b.swap(k, self.piv[k]);
        }
        for k in 0..n {
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..n {
                    b[i] -= self.lu[i * n + k] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            b[k] /= self.lu[k * n + k];
            let bk = b[k];
            if bk != 0.0 {
                for i in 0..k {
                    b[i] -= self.lu[i * n + k] * bk;
                }
            }
        }
    }

    /// Solve `A^T x = b` in place with the same factorization
    /// (`A^T = (P^T L U)^T`, so forward with `U^T`, back with `L^T`, unpivot).
    pub fn solve_transpose(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let mut s = b[k];
            for i in 0..k {
                s -= self.lu[i * n + k] * b[i];
            }
            b[k] = s / self.lu[k * n + k];
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for i in k + 1..n {
                s -= self.lu[i * n + k] * b[i];
            }
            b[k] = s;
        }
        for k in (0..n).rev() {
            b.swap(k, self.piv[k]);
        }
    }
}

/// Assemble the dense matrix of a matrix-free operator column by column, so
/// the dense and Krylov paths factor the identical discretization.
pub fn assemble_dense(op: &dyn LinOp) -> Vec<f64> {
    let n = op.dim();
    let mut a = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        e[j] = 0.0;
        for (i, v) in col.iter().enumerate() {
            a[i * n + j] = *v;
        }
    }
    a
}

/// Smallest singular value by inverse iteration on `A^T A` via the LU of `A`.
pub fn sigma_min_dense(lu: &DenseLu, iters: usize, seed: u64) -> f64 {
    if lu.singular {
        return 0.0;
    }
    let n = lu.n;
    let mut x: Vec<f64> = deterministic_unit_vector(n, seed);
    let mut sigma = 0.0;
    for _ in 0..iters.max(1) {
        // y = (A^T A)^{-1} x = A^{-1} A^{-T} x
        let mut y = x.clone();
        lu.solve_transpose(&mut y);
        lu.solve(&mut y);
        let ny = norm(&y);
        if !ny.is_finite() || ny == 0.0 {
            return 0.0;
        }
        // Rayleigh quotient of (A^T A)^{-1} tends to 1/sigma_min^2
        sigma = dot(&x, &y).abs().sqrt().recip();
        for v in y.iter_mut() {
            *v /= ny;
        }
        x = y;
    }
    sigma
}

/// Operator-norm scale estimate by power iteration (matrix-free). One-sided,
/// so only a scale reference for thresholds, not a tight sigma_max.
pub fn op_norm_estimate(op: &dyn LinOp, iters: usize, seed: u64) -> f64 {
    let n = op.dim();
    let mut x = deterministic_unit_vector(n, seed);
    let mut y = vec![0.0; n];
    let mut s = 0.0;
    for _ in 0..iters {
        op.apply(&x, &mut y);
        let ny = norm(&y);
        if ny == 0.0 {
            return 0.0;
        }
        s = ny;
        for i in 0..n {
            x[i] = y[i] / ny;
        }
    }
    s
}

/// Probe-based smallest-singular-value estimate for a matrix-free operator:
/// solve `A y = g` for a few deterministic unit probes and bound
/// `sigma_min <= min |g|/|y|`. Near singularity `|y|` explodes and the
/// estimate collapses, which is the detection property the scans need.
pub fn sigma_min_probe(op: &dyn LinOp, probes: usize, tol: f64, seed: u64) -> f64 {
    let mut best = f64::INFINITY;
    for p in 0..probes.max(1) {
        let g = deterministic_unit_vector(op.dim(), seed.wrapping_add(p as u64));
        let (y, rep) = gmres(
            op,
            &g,
            None,
            GmresOptions {
                tol,
                restart: 50,
                max_iters: 400,
            },
        );
        if !rep.converged && rep.residual > 0.5 {
            return 0.0;
        }
        let ny = norm(&y);
        if ny > 0.0 {
            best = best.min(1.0 / ny);
        }
    }
    best
}

/// Reproducible pseudo-random unit vector (splitmix64 stream).
pub fn deterministic_unit_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(0x1234567);
    let mut next = move || {
        state = state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    };
    let mut v: Vec<f64> = (0..n)
        .map(|_| (next() >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
        .collect();
    let nv = norm(&v);
    for x in v.iter_mut() {
        *x /= nv;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Mat {
        n: usize,
        a: Vec<f64>,
    }
    impl LinOp for Mat {
        fn dim(&self) -> usize {
            self.n
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for i in 0..self.n {
                y[i] = (0..self.n).map(|j| self.a[i * self.n + j] * x[j]).sum();
            }
        }
    }

    fn test_matrix(n: usize) -> Mat {
        // diagonally dominant, well conditioned
        let mut a = vec![0.0; n * n];
        let mut s = 1u64;
        for v in a.iter_mut() {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            *v = ((s >> 33) as f64 / (1u64 << 31) as f64 - 0.5) * 0.2;
        }
        for i in 0..n {
            a[i * n + i] += 2.0 + (i as f64) * 0.01;
        }
        Mat { n, a }
    }

    #[test]
    fn gmres_solves() {
        let m = test_matrix(80);
        let xstar: Vec<f64> = (0..80).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; 80];
        m.apply(&xstar, &mut b);
        let (x, rep) = gmres(&m, &b, None, GmresOptions::default());
        assert!(rep.converged, "residual {}", rep.residual);
        let err: f64 = x
            .iter()
            .zip(&xstar)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "max err {err}");
    }

    #[test]
    fn gmres_restart_path() {
        let m = test_matrix(60);
        let mut b = vec![0.0; 60];
        b[7] = 1.0;
        let (x, rep) = gmres(
            &m,
            &b,
            None,
            GmresOptions {
                tol: 1e-11,
                restart: 7,
                max_iters: 500,
            },
        );
        assert!(rep.converged);
        let mut ax = vec![0.0; 60];
        m.apply(&x, &mut ax);
        let res: f64 = ax.iter().zip(&b).map(|(a, b)| (a - b).abs()).sum();
        assert!(res < 1e-9);
    }

    #[test]
    fn lu_and_transpose_solve() {
        let m = test_matrix(40);
        let lu = DenseLu::factor(m.a.clone(), 40);
        let xstar: Vec<f64> = (0..40).map(|i| (i as f64 * 0.21).cos()).collect();
        let mut b = vec![0.0; 40];
        m.apply(&xstar, &mut b);
        lu.solve(&mut b);
        for (u, v) in b.iter().zip(&xstar) {
            assert!((u - v).abs() < 1e-10);
        }
        let mut bt = vec![0.0; 40];
        for j in 0..40 {
            bt[j] = (0..40).map(|i| m.a[i * 40 + j] * xstar[i]).sum();
        }
        lu.solve_transpose(&mut bt);
        for (u, v) in bt.iter().zip(&xstar) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn sigma_min_paths_agree() {
        // exact check on a diagonal matrix
        let n = 12;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0 + i as f64;
        }
        a[0] = 0.037;
        let lu = DenseLu::factor(a.clone(), n);
        let got = sigma_min_dense(&lu, 12, 3);
        assert!((got - 0.037).abs() < 1e-6, "got {got}");

        let m = test_matrix(40);
        let lu = DenseLu::factor(m.a.clone(), 40);
        let dense = sigma_min_dense(&lu, 8, 7);
        let probe = sigma_min_probe(&m, 4, 1e-12, 13);
        assert!(probe >= dense * 0.8, "probe {probe} vs dense {dense}");
        assert!(probe <= dense * 15.0, "probe {probe} vs dense {dense}");
    }

    #[test]
    fn identity_sigma_is_one() {
        let n = 30;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        let lu = DenseLu::factor(a, n);
        let s = sigma_min_dense(&lu, 3, 1);
        assert!((s - 1.0).abs() < 1e-12);
    }
}
