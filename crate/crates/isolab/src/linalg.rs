//! Shared numerical kernels: deterministic reductions, sparse symmetric
//! matrices, conjugate gradients, deflated inverse iteration, and a small
//! dense symmetric eigensolver for Rayleigh-Ritz blocks.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("conjugate gradient failed to converge: residual {residual:.3e} after {iters} iterations")]
    CgStagnation { residual: f64, iters: usize },
    #[error("eigeniteration stagnated; residual history {history:?}")]
    EigenStagnation { history: Vec<f64> },
}

/// Pairwise tree sum with a fixed reduction shape.
///
/// The shape depends only on the slice length, so results are bit-stable
/// regardless of how the contributions were produced (serially or by a
/// data-parallel fill).
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BASE: usize = 32;
    if values.len() <= BASE {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Dot product with the same deterministic reduction shape as
/// [`pairwise_sum`].
pub fn pairwise_dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    const BASE: usize = 32;
    if a.len() <= BASE {
        let mut acc = 0.0;
        for (x, y) in a.iter().zip(b) {
            acc += x * y;
        }
        return acc;
    }
    let mid = a.len() / 2;
    pairwise_dot(&a[..mid], &b[..mid]) + pairwise_dot(&a[mid..], &b[mid..])
}

/// Symmetric sparse matrix in CSR form. Both triangles are stored.
#[derive(Debug, Clone)]
pub struct SymCsr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SymCsr {
    /// Build from triplets; duplicate entries are summed. Off-diagonal
    /// triplets are mirrored automatically, so callers provide each
    /// unordered pair once.
    pub fn from_upper_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut full: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            full[i].push((j, v));
            if i != j {
                full[j].push((i, v));
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in &mut full {
            row.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                let mut v = 0.0;
                while k < row.len() && row[k].0 == j {
                    v += row[k].1;
                    k += 1;
                }
                col_idx.push(j);
                vals.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        SymCsr {
            n,
            row_ptr,
            col_idx,
            vals,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] == i {
                    d[i] = self.vals[k];
                }
            }
        }
        d
    }

    /// Quadratic form x' A y.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut tmp = vec![0.0; self.n];
        self.matvec(y, &mut tmp);
        pairwise_dot(x, &tmp)
    }
}

/// Jacobi-preconditioned conjugate gradients for s.p.d. systems, with an
/// optional orthogonality projector applied to iterates (used to solve in
/// the complement of a known null direction).
pub struct Cg<'a> {
    pub mat: &'a SymCsr,
    pub precond_inv_diag: Vec<f64>,
    pub project: Option<&'a dyn Fn(&mut [f64])>,
    pub tol: f64,
    pub max_iters: usize,
}

impl<'a> Cg<'a> {
    pub fn new(mat: &'a SymCsr) -> Self {
        let diag = mat.diagonal();
        let inv = diag
            .iter()
            .map(|&d| if d.abs() > 1e-300 { 1.0 / d } else { 1.0 })
            .collect();
        Cg {
            mat,
            precond_inv_diag: inv,
            project: None,
            tol: 1e-10,
            max_iters: 10_000,
        }
    }

    pub fn solve(&self, b: &[f64], x: &mut [f64]) -> Result<(), LinalgError> {
        let n = self.mat.n;
        let mut r = b.to_vec();
        if let Some(p) = self.project {
            p(&mut r);
        }
        let mut ax = vec![0.0; n];
        self.mat.matvec(x, &mut ax);
        for i in 0..n {
            r[i] -= ax[i];
        }
        if let Some(p) = self.project {
            p(&mut r);
        }
        let mut z: Vec<f64> = r
            .iter()
            .zip(&self.precond_inv_diag)
            .map(|(ri, di)| ri * di)
            .collect();
        if let Some(p) = self.project {
            p(&mut z);
        }
        let mut p_dir = z.clone();
        let mut rz = pairwise_dot(&r, &z);
        let b_norm = pairwise_dot(b, b).sqrt().max(1e-300);
        let mut res = pairwise_dot(&r, &r).sqrt();
        for _ in 0..self.max_iters {
            if res <= self.tol * b_norm {
                return Ok(());
            }
            self.mat.matvec(&p_dir, &mut ax);
            let pap = pairwise_dot(&p_dir, &ax);
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p_dir[i];
                r[i] -= alpha * ax[i];
            }
            if let Some(proj) = self.project {
                proj(&mut r);
            }
            for i in 0..n {
                z[i] = r[i] * self.precond_inv_diag[i];
            }
            if let Some(proj) = self.project {
                proj(&mut z);
            }
            let rz_new = pairwise_dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p_dir[i] = z[i] + beta * p_dir[i];
            }
            res = pairwise_dot(&r, &r).sqrt();
        }
        if res <= self.tol.max(1e-8) * b_norm {
            Ok(())
        } else {
            Err(LinalgError::CgStagnation {
                residual: res / b_norm,
                iters: self.max_iters,
            })
        }
    }
}

/// Result of a generalized symmetric eigensolve `A x = lambda M x`.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
}

/// Smallest eigenpairs of the pencil `(A, M)` with `M` diagonal positive,
/// restricted to the M-orthogonal complement of `deflate` vectors.
///
/// Locally optimal block preconditioned conjugate gradients (LOBPCG)
/// with Jacobi preconditioning and full M-orthonormalization of the
/// trial basis each iteration, which keeps the method stable on the
/// badly scaled grid pencils that arise here.
pub fn smallest_eigenpairs(
    a: &SymCsr,
    m_diag: &[f64],
    deflate: &[Vec<f64>],
    k: usize,
    seed: u64,
    tol: f64,
    max_iters: usize,
) -> Result<Vec<EigenPair>, LinalgError> {
    use rand::{Rng, SeedableRng};
    let n = a.n;
    assert_eq!(m_diag.len(), n);
    let block = (k + 2).min(n);

    let a_diag = a.diagonal();
    let precond: Vec<f64> = a_diag
        .iter()
        .map(|&d| if d.abs() > 1e-300 { 1.0 / d.abs() } else { 1.0 })
        .collect();

    let m_orth_against = |v: &mut Vec<f64>, basis: &[Vec<f64>]| {
        for b in basis {
            let num = pairwise_dot_weighted(v, b, m_diag);
            let den = pairwise_dot_weighted(b, b, m_diag);
            if den > 0.0 {
                let c = num / den;
                for i in 0..v.len() {
                    v[i] -= c * b[i];
                }
            }
        }
    };

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut xs: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    for x in xs.iter_mut() {
        m_orth_against(x, deflate);
    }
    let mut ps: Vec<Vec<f64>> = Vec::new();
    let mut history = Vec::new();
    let mut pairs: Vec<EigenPair> = Vec::new();
    let mut ax = vec![0.0; n];
    let mut best_seen = f64::INFINITY;
    let mut last_improvement = 0usize;

    for _iter in 0..max_iters {
        // Current Ritz values for residuals.
        let mut ritz = Vec::with_capacity(block);
        for x in &xs {
            a.matvec(x, &mut ax);
            let num = pairwise_dot(x, &ax);
            let den = pairwise_dot_weighted(x, x, m_diag);
            ritz.push(num / den.max(1e-300));
        }
        // Preconditioned residuals; convergence is judged on the k
        // requested pairs only (the buffer vectors trail behind).
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&i, &j| ritz[i].partial_cmp(&ritz[j]).unwrap());
        let mut ws: Vec<Vec<f64>> = Vec::with_capacity(block);
        let mut worst = 0.0f64;
        for (rank, (x, &lam)) in xs.iter().zip(&ritz).enumerate() {
            a.matvec(x, &mut ax);
            let mut w = vec![0.0; n];
            let mut res2 = 0.0;
            for i in 0..n {
                let r = ax[i] - lam * m_diag[i] * x[i];
                res2 += r * r / m_diag[i].max(1e-300);
                w[i] = r * precond[i];
            }
            let wanted = order.iter().position(|&o| o == rank).unwrap() < k;
            if wanted {
                worst = worst.max(res2.sqrt() / lam.abs().max(1.0));
            }
            m_orth_against(&mut w, deflate);
            ws.push(w);
        }
        history.push(worst);
        if worst < tol {
            break;
        }
        // Stagnation: the best residual so far stopped improving. Early
        // iterations can grow transiently, so only the windowed best
        // matters; a stalled-but-small residual still counts as
        // converged (the usual soft-locking floor of the method).
        if worst < best_seen * 0.999 {
            best_seen = worst;
            last_improvement = history.len();
        }
        if history.len() > last_improvement + 80 {
            if best_seen < tol.max(1e-5) {
                break;
            }
            return Err(LinalgError::EigenStagnation { history });
        }
        // Trial basis Z = [X, W, P], M-orthonormalized with dropping.
        // Deflation is re-applied to every vector: the deflated subspace
        // has the smallest Rayleigh quotients, so any roundoff leakage
        // would otherwise be amplified by the minimization.
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(3 * block);
        for v in xs.iter().chain(ws.iter()).chain(ps.iter()) {
            let mut u = v.clone();
            m_orth_against(&mut u, deflate);
            for b in &basis {
                let c = pairwise_dot_weighted(&u, b, m_diag);
                for i in 0..n {
                    u[i] -= c * b[i];
                }
            }
            // re-orthogonalize once for stability
            m_orth_against(&mut u, deflate);
            for b in &basis {
                let c = pairwise_dot_weighted(&u, b, m_diag);
                for i in 0..n {
                    u[i] -= c * b[i];
                }
            }
            let norm = pairwise_dot_weighted(&u, &u, m_diag).sqrt();
            if norm > 1e-8 {
                for t in u.iter_mut() {
                    *t /= norm;
                }
                basis.push(u);
            }
        }
        let bsize = basis.len();
        // Rayleigh-Ritz on the basis.
        let mut small = vec![0.0; bsize * bsize];
        let mut abasis: Vec<Vec<f64>> = Vec::with_capacity(bsize);
        for b in &basis {
            a.matvec(b, &mut ax);
            abasis.push(ax.clone());
        }
        for i in 0..bsize {
            for j in i..bsize {
                let v = pairwise_dot(&basis[i], &abasis[j]);
                small[i * bsize + j] = v;
                small[j * bsize + i] = v;
            }
        }
        let (_vals, vecs) = jacobi_eigen(&small, bsize);
        let mut new_xs: Vec<Vec<f64>> = Vec::with_capacity(block);
        let mut new_ps: Vec<Vec<f64>> = Vec::with_capacity(block);
        for r in 0..block.min(bsize) {
            let mut v = vec![0.0; n];
            let mut p = vec![0.0; n];
            for c in 0..bsize {
                let wgt = vecs[r * bsize + c];
                for t in 0..n {
                    v[t] += wgt * basis[c][t];
                }
                // P excludes the X block: the locally optimal direction
                if c >= block {
                    for t in 0..n {
                        p[t] += wgt * basis[c][t];
                    }
                }
            }
            new_xs.push(v);
            new_ps.push(p);
        }
        xs = new_xs;
        ps = new_ps
            .into_iter()
            .filter(|p| pairwise_dot_weighted(p, p, m_diag).sqrt() > 1e-12)
            .collect();
    }

    // Final Ritz values, residuals, and M-normalization.
    pairs.clear();
    let mut finals: Vec<(f64, Vec<f64>, f64)> = Vec::with_capacity(block);
    for x in xs.iter() {
        let mut v = x.clone();
        let norm = pairwise_dot_weighted(&v, &v, m_diag).sqrt();
        for t in v.iter_mut() {
            *t /= norm.max(1e-300);
        }
        a.matvec(&v, &mut ax);
        let lam = pairwise_dot(&v, &ax);
        let mut res2 = 0.0;
        for i in 0..n {
            let r = ax[i] - lam * m_diag[i] * v[i];
            res2 += r * r / m_diag[i].max(1e-300);
        }
        finals.push((lam, v, res2.sqrt() / lam.abs().max(1.0)));
    }
    finals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for (lam, v, res) in finals.into_iter().take(k) {
        pairs.push(EigenPair {
            value: lam,
            vector: v,
            residual: res,
        });
    }
    if pairs.iter().all(|p| p.residual < tol.max(1e-5)) {
        Ok(pairs)
    } else {
        Err(LinalgError::EigenStagnation { history })
    }
}

fn pairwise_dot_weighted(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    let prods: Vec<f64> = (0..a.len()).map(|i| a[i] * b[i] * w[i]).collect();
    pairwise_sum(&prods)
}

/// Cyclic Jacobi eigensolver for small dense symmetric matrices stored
/// row-major. Returns eigenvalues ascending and column eigenvectors.
pub fn jacobi_eigen(mat: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(mat.len(), n * n);
    let mut a = mat.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + frobenius(&a, n)) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].partial_cmp(&a[j * n + j]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vecs = vec![0.0; n * n];
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            vecs[new_col * n + r] = v[r * n + old_col];
        }
    }
    (vals, vecs)
}

fn frobenius(a: &[f64], n: usize) -> f64 {
    a.iter().take(n * n).map(|x| x * x).sum::<f64>().sqrt()
}

/// Thomas algorithm for a tridiagonal system. `lower` and `upper` have
/// length `n-1`. Overwrites nothing; returns the solution.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    assert_eq!(lower.len(), n - 1);
    assert_eq!(upper.len(), n - 1);
    assert_eq!(rhs.len(), n);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper.first().copied().unwrap_or(0.0) / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i - 1] * c[i - 1];
        if i < n - 1 {
            c[i] = upper[i] / m;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = v.iter().sum();
        assert!((pairwise_sum(&v) - naive).abs() < 1e-9);
    }

    #[test]
    fn tridiagonal_solve() {
        // -u'' = f on 5 nodes
        let n = 5;
        let lower = vec![-1.0; n - 1];
        let upper = vec![-1.0; n - 1];
        let diag = vec![2.0; n];
        let rhs = vec![1.0; n];
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs);
        // verify residual
        for i in 0..n {
            let mut ax = 2.0 * x[i];
            if i > 0 {
                ax -= x[i - 1];
            }
            if i < n - 1 {
                ax -= x[i + 1];
            }
            assert!((ax - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobi_small() {
        // [[2,1],[1,2]] has eigenvalues 1, 3
        let (vals, _) = jacobi_eigen(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn cg_solves_laplacian() {
        // 1D Dirichlet Laplacian, 50 nodes
        let n = 50;
        let mut trips = Vec::new();
        for i in 0..n {
            trips.push((i, i, 2.0));
            if i + 1 < n {
                trips.push((i, i + 1, -1.0));
            }
        }
        let a = SymCsr::from_upper_triplets(n, &trips);
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        Cg::new(&a).solve(&b, &mut x).unwrap();
        let mut ax = vec![0.0; n];
        a.matvec(&x, &mut ax);
        for i in 0..n {
            assert!((ax[i] - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn smallest_pairs_of_dirichlet_laplacian() {
        // h = 1/(n+1); eigenvalues 4 sin^2(k pi h / 2) / h^2 scaled by h
        let n = 80;
        let h = 1.0 / (n as f64 + 1.0);
        let mut trips = Vec::new();
        for i in 0..n {
            trips.push((i, i, 2.0 / h));
            if i + 1 < n {
                trips.push((i, i + 1, -1.0 / h));
            }
        }
        let a = SymCsr::from_upper_triplets(n, &trips);
        let m = vec![h; n];
        let pairs = smallest_eigenpairs(&a, &m, &[], 2, 1, 1e-6, 2000).unwrap();
        let exact = |k: f64| 4.0 / (h * h) * (k * std::f64::consts::PI * h / 2.0).sin().powi(2);
        assert!((pairs[0].value - exact(1.0)).abs() / exact(1.0) < 1e-6);
        assert!((pairs[1].value - exact(2.0)).abs() / exact(2.0) < 1e-6);
    }
}
