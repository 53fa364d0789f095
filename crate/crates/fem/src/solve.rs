//! Sparse solvers for the assembled block systems.
//!
//! The direct path factors the saddle matrix `[[A, B^T], [B, -D]]` by a
//! no-pivot LDL^T after symmetric Ruiz equilibration and a tiny
//! quasi-definite regularization (`+delta` on the primal diagonal, `-delta`
//! on the multiplier diagonal), then removes the regularization error by
//! iterative refinement against the unperturbed matrix. Fill is controlled by
//! a geometric nested-dissection ordering when unknown positions are
//! available. The iterative paths are preconditioned MINRES on the full
//! saddle matrix and conjugate gradients on the Schur complement
//! `A + B^T D^{-1} B` when `D` is diagonal and positive.

use crate::sparse::{CsrMatrix, Triplets};
use crate::{FemError, Result};
use nalgebra::Point3;

/// Solution strategy for [`solve_saddle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Direct,
    Minres,
}

/// Tolerance and iteration budget shared by all solvers.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub method: SolveMethod,
    /// Relative residual target, against the right-hand side norm.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: SolveMethod::Direct,
            tol: 1e-10,
            max_iterations: 200_000,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(FemError::InvalidConfig("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Symmetric block system `[[A, B^T], [B, -D]] (u, m) = (f, g)`.
pub struct SaddleSystem {
    /// Symmetric positive semidefinite primal block.
    pub a: CsrMatrix,
    /// Constraint block, `n_multiplier x n_primal`. May have zero rows.
    pub b: CsrMatrix,
    /// Strictly positive diagonal of the (2,2) block, entering as `-D`.
    pub d: Option<Vec<f64>>,
    pub rhs_primal: Vec<f64>,
    pub rhs_multiplier: Vec<f64>,
    /// Geometric location of every unknown (primal first), used by the
    /// fill-reducing ordering. Optional; small systems do fine without it.
    pub positions: Option<Vec<Point3<f64>>>,
}

pub struct SaddleSolution {
    pub primal: Vec<f64>,
    pub multiplier: Vec<f64>,
    /// Final relative residual of the full block system.
    pub residual: f64,
    pub iterations: usize,
}

impl SaddleSystem {
    fn dims(&self) -> Result<(usize, usize)> {
        let np = self.a.nrows();
        let nm = self.b.nrows();
        if self.a.ncols() != np || self.b.ncols() != np {
            return Err(FemError::DimensionMismatch(np, self.b.ncols(), np));
        }
        if let Some(d) = &self.d {
            if d.len() != nm {
                return Err(FemError::DimensionMismatch(nm, nm, d.len()));
            }
        }
        if self.rhs_primal.len() != np || self.rhs_multiplier.len() != nm {
            return Err(FemError::DimensionMismatch(
                np,
                nm,
                self.rhs_primal.len() + self.rhs_multiplier.len(),
            ));
        }
        Ok((np, nm))
    }

    /// Full block matrix in CSR form.
    pub fn block_matrix(&self) -> Result<CsrMatrix> {
        let (np, nm) = self.dims()?;
        let n = np + nm;
        let mut t = Triplets::new(n, n);
        for r in 0..np {
            for (c, v) in self.a.row(r) {
                t.push(r, c, v);
            }
        }
        for r in 0..nm {
            for (c, v) in self.b.row(r) {
                t.push(np + r, c, v);
                t.push(c, np + r, v);
            }
        }
        if let Some(d) = &self.d {
            for (r, v) in d.iter().enumerate() {
                t.push(np + r, np + r, -v);
            }
        }
        let mut k = t.to_csr_sum();
        k.symmetric = true;
        Ok(k)
    }

    fn rhs(&self) -> Vec<f64> {
        let mut rhs = self.rhs_primal.clone();
        rhs.extend_from_slice(&self.rhs_multiplier);
        rhs
    }
}

/// Solves the saddle system to the configured relative residual.
pub fn solve_saddle(sys: &SaddleSystem, config: &SolverConfig) -> Result<SaddleSolution> {
    config.validate()?;
    let (np, nm) = sys.dims()?;
    if let Some(d) = &sys.d {
        if d.iter().any(|v| !(*v > 0.0)) {
            return Err(FemError::InvalidConfig(
                "multiplier block diagonal must be strictly positive".into(),
            ));
        }
    }
    let k = sys.block_matrix()?;
    let rhs = sys.rhs();
    let (x, residual, iterations) = match config.method {
        SolveMethod::Direct => {
            let split = np; // regularization signs flip at the multiplier block
            direct_solve(&k, &rhs, split, sys.positions.as_deref(), config)?
        }
        SolveMethod::Minres => minres(&k, &rhs, config)?,
    };
    Ok(SaddleSolution {
        primal: x[..np].to_vec(),
        multiplier: x[np..np + nm].to_vec(),
        residual,
        iterations,
    })
}

/// Solves a symmetric positive (semi)definite system directly.
pub fn solve_symmetric(
    a: &CsrMatrix,
    rhs: &[f64],
    positions: Option<&[Point3<f64>]>,
    config: &SolverConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let (x, _, _) = direct_solve(a, rhs, a.nrows(), positions, config)?;
    Ok(x)
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn direct_solve(
    k: &CsrMatrix,
    rhs: &[f64],
    primal_len: usize,
    positions: Option<&[Point3<f64>]>,
    config: &SolverConfig,
) -> Result<(Vec<f64>, f64, usize)> {
    let n = k.nrows();
    if n == 0 {
        return Ok((Vec::new(), 0.0, 0));
    }
    // Symmetric Ruiz equilibration.
    let mut scale = vec![1.0f64; n];
    for _ in 0..3 {
        for i in 0..n {
            let mut row_max: f64 = 0.0;
            for (j, v) in k.row(i) {
                row_max = row_max.max((scale[i] * v * scale[j]).abs());
            }
            if row_max > 0.0 {
                scale[i] /= row_max.sqrt();
            }
        }
    }

    const REG: f64 = 1e-8;
    let perm = match positions {
        Some(pos) if n > 256 => nested_dissection(k, pos),
        _ => (0..n).collect(),
    };
    let mut pinv = vec![0usize; n];
    for (new, old) in perm.iter().enumerate() {
        pinv[*old] = new;
    }

    // Permuted, scaled, regularized copy for the factorization.
    let mut t = Triplets::new(n, n);
    for r in 0..n {
        for (c, v) in k.row(r) {
            t.push(pinv[r], pinv[c], scale[r] * v * scale[c]);
        }
    }
    for r in 0..n {
        let reg = if r < primal_len { REG } else { -REG };
        t.push(pinv[r], pinv[r], reg);
    }
    let kp = t.to_csr_sum();
    let factor = LdlFactor::new(&kp)?;

    // Iterative refinement against the unregularized matrix, in scaled space.
    let scaled_rhs: Vec<f64> = rhs.iter().zip(&scale).map(|(b, s)| b * s).collect();
    let rhs_norm = norm2(&scaled_rhs).max(f64::MIN_POSITIVE);
    let mut x = vec![0.0f64; n];
    let mut resid = scaled_rhs.clone();
    let mut best = (f64::INFINITY, x.clone());
    let mut iterations = 0;
    let mut kx = vec![0.0f64; n];
    let scaled_matvec = |x: &[f64], out: &mut [f64]| {
        // (S K S) x
        let xs: Vec<f64> = x.iter().zip(&scale).map(|(v, s)| v * s).collect();
        k.matvec_into(&xs, out);
        for (o, s) in out.iter_mut().zip(&scale) {
            *o *= s;
        }
    };
    for it in 0..60 {
        iterations = it;
        let rel = norm2(&resid) / rhs_norm;
        if rel < best.0 {
            best = (rel, x.clone());
        }
        if rel <= config.tol * 0.5 {
            break;
        }
        if it > 4 && rel > best.0 * 0.9 {
            break; // stalled
        }
        let dx = factor.solve(&resid, &pinv);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        scaled_matvec(&x, &mut kx);
        for i in 0..n {
            resid[i] = scaled_rhs[i] - kx[i];
        }
    }
    let (rel, xs) = best;
    if rel > config.tol {
        return Err(FemError::NoConvergence {
            iterations,
            residual: rel,
        });
    }
    let x: Vec<f64> = xs.iter().zip(&scale).map(|(v, s)| v * s).collect();
    Ok((x, rel, iterations))
}

/// No-pivot LDL^T in compressed-column form (up-looking, elimination-tree
/// based). Valid for quasi-definite input.
struct LdlFactor {
    n: usize,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

impl LdlFactor {
    fn new(a: &CsrMatrix) -> Result<LdlFactor> {
        let n = a.nrows();
        let mut parent = vec![usize::MAX; n];
        let mut lnz = vec![0usize; n];
        let mut flag = vec![usize::MAX; n];
        for i in 0..n {
            flag[i] = i;
            for (j, _) in a.row(i) {
                if j >= i {
                    continue;
                }
                let mut kcol = j;
                while flag[kcol] != i {
                    if parent[kcol] == usize::MAX {
                        parent[kcol] = i;
                    }
                    lnz[kcol] += 1;
                    flag[kcol] = i;
                    kcol = parent[kcol];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let nnz = lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0f64; nnz];
        let mut d = vec![0f64; n];
        let mut y = vec![0f64; n];
        let mut pattern = vec![0usize; n];
        let mut scratch = vec![0usize; n];
        let mut filled = vec![0usize; n];
        let mut flag = vec![usize::MAX; n];
        for i in 0..n {
            let mut top = n;
            flag[i] = i;
            d[i] = 0.0;
            for (j, v) in a.row(i) {
                if j > i {
                    continue;
                }
                if j == i {
                    d[i] += v;
                    continue;
                }
                y[j] += v;
                let mut len = 0usize;
                let mut kcol = j;
                while flag[kcol] != i {
                    scratch[len] = kcol;
                    len += 1;
                    flag[kcol] = i;
                    kcol = parent[kcol];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    pattern[top] = scratch[len];
                }
            }
            for t in top..n {
                let j = pattern[t];
                let yj = y[j];
                y[j] = 0.0;
                let p2 = lp[j] + filled[j];
                for p in lp[j]..p2 {
                    y[li[p]] -= lx[p] * yj;
                }
                let lij = yj / d[j];
                d[i] -= lij * yj;
                li[p2] = i;
                lx[p2] = lij;
                filled[j] += 1;
            }
            if d[i] == 0.0 || !d[i].is_finite() {
                return Err(FemError::FactorizationBreakdown(format!(
                    "zero pivot at index {i}"
                )));
            }
        }
        Ok(LdlFactor { n, lp, li, lx, d })
    }

    /// Solves `P K P^T` with `pinv[old] = new`.
    fn solve(&self, b: &[f64], pinv: &[usize]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0f64; n];
        for (old, bi) in b.iter().enumerate() {
            y[pinv[old]] = *bi;
        }
        for j in 0..n {
            let yj = y[j];
            if yj != 0.0 {
                for p in self.lp[j]..self.lp[j + 1] {
                    y[self.li[p]] -= self.lx[p] * yj;
                }
            }
        }
        for j in 0..n {
            y[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut acc = y[j];
            for p in self.lp[j]..self.lp[j + 1] {
                acc -= self.lx[p] * y[self.li[p]];
            }
            y[j] = acc;
        }
        let mut x = vec![0.0f64; n];
        for (old, xi) in x.iter_mut().enumerate() {
            *xi = y[pinv[old]];
        }
        x
    }
}

/// Geometric nested dissection: recursive coordinate bisection with a vertex
/// separator taken from one side of the cut. Returns `perm[new] = old`.
fn nested_dissection(k: &CsrMatrix, pos: &[Point3<f64>]) -> Vec<usize> {
    let n = k.nrows();
    debug_assert_eq!(pos.len(), n);
    let mut order = Vec::with_capacity(n);
    let mut tag = vec![0u8; n];
    let set: Vec<usize> = (0..n).collect();
    nd_recurse(k, pos, set, &mut order, &mut tag);
    debug_assert_eq!(order.len(), n);
    order
}

fn nd_recurse(
    k: &CsrMatrix,
    pos: &[Point3<f64>],
    mut set: Vec<usize>,
    order: &mut Vec<usize>,
    tag: &mut [u8],
) {
    const LEAF: usize = 96;
    if set.len() <= LEAF {
        order.extend_from_slice(&set);
        return;
    }
    // Split along the axis of largest extent at the median.
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in &set {
        for ax in 0..3 {
            lo[ax] = lo[ax].min(pos[i][ax]);
            hi[ax] = hi[ax].max(pos[i][ax]);
        }
    }
    let axis = (0..3)
        .max_by(|a, b| (hi[*a] - lo[*a]).partial_cmp(&(hi[*b] - lo[*b])).unwrap())
        .unwrap();
    if hi[axis] - lo[axis] <= 0.0 {
        order.extend_from_slice(&set);
        return;
    }
    let mid = set.len() / 2;
    set.select_nth_unstable_by(mid, |a, b| pos[*a][axis].partial_cmp(&pos[*b][axis]).unwrap());
    let (left, right) = set.split_at(mid);
    let (left, right) = (left.to_vec(), right.to_vec());
    for &i in &left {
        tag[i] = 1;
    }
    for &i in &right {
        tag[i] = 2;
    }
    // Right-side vertices adjacent to the left half separate the parts.
    let mut sep = Vec::new();
    let mut interior = Vec::new();
    for &i in &right {
        if k.row(i).any(|(j, _)| tag[j] == 1) {
            sep.push(i);
        } else {
            interior.push(i);
        }
    }
    for &i in left.iter().chain(right.iter()) {
        tag[i] = 0;
    }
    if sep.len() * 2 > right.len() {
        // Separator degenerated; settle for the median split order.
        order.extend_from_slice(&left);
        order.extend_from_slice(&right);
        return;
    }
    nd_recurse(k, pos, left, order, tag);
    nd_recurse(k, pos, interior, order, tag);
    order.extend_from_slice(&sep);
}

/// Preconditioned MINRES on a symmetric (possibly indefinite) system, with a
/// positive diagonal preconditioner built from row maxima.
fn minres(k: &CsrMatrix, rhs: &[f64], config: &SolverConfig) -> Result<(Vec<f64>, f64, usize)> {
    let n = k.nrows();
    let mut precond = vec![0.0f64; n];
    for i in 0..n {
        let mut m: f64 = 0.0;
        for (_, v) in k.row(i) {
            m = m.max(v.abs());
        }
        precond[i] = if m > 0.0 { 1.0 / m } else { 1.0 };
    }
    let apply_m = |r: &[f64]| -> Vec<f64> { r.iter().zip(&precond).map(|(v, p)| v * p).collect() };

    let rhs_norm = norm2(rhs).max(f64::MIN_POSITIVE);
    let mut x = vec![0.0f64; n];
    let mut r1 = rhs.to_vec();
    let mut y = apply_m(&r1);
    let beta1 = r1.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
    if beta1 < 0.0 {
        return Err(FemError::InvalidConfig("preconditioner not positive".into()));
    }
    let beta1 = beta1.sqrt();
    if beta1 == 0.0 {
        return Ok((x, 0.0, 0));
    }
    let mut r2 = r1.clone();
    let (mut oldb, mut beta, mut dbar, mut epsln) = (0.0f64, beta1, 0.0f64, 0.0f64);
    let (mut phibar, mut cs, mut sn) = (beta1, -1.0f64, 0.0f64);
    let mut w = vec![0.0f64; n];
    let mut w2 = vec![0.0f64; n];
    let mut best_rel = f64::INFINITY;
    for it in 1..=config.max_iterations {
        let v: Vec<f64> = y.iter().map(|yi| yi / beta).collect();
        let mut yk = k.matvec(&v)?;
        if it >= 2 {
            let s = beta / oldb;
            for (a, b) in yk.iter_mut().zip(&r1) {
                *a -= s * b;
            }
        }
        let alfa = v.iter().zip(&yk).map(|(a, b)| a * b).sum::<f64>();
        let s = alfa / beta;
        for (a, b) in yk.iter_mut().zip(&r2) {
            *a -= s * b;
        }
        r1 = std::mem::replace(&mut r2, yk);
        y = apply_m(&r2);
        oldb = beta;
        let bb = r2.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
        if bb < 0.0 {
            return Err(FemError::FactorizationBreakdown(
                "lost positivity in the Lanczos recurrence".into(),
            ));
        }
        beta = bb.sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::MIN_POSITIVE);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let w1 = std::mem::replace(&mut w2, std::mem::take(&mut w));
        w = (0..n)
            .map(|i| (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma)
            .collect();
        for (xi, wi) in x.iter_mut().zip(&w) {
            *xi += phi * wi;
        }

        if phibar <= 0.1 * config.tol * beta1 || it == config.max_iterations || it % 200 == 0 {
            let kx = k.matvec(&x)?;
            let rel = (0..n)
                .map(|i| (rhs[i] - kx[i]).powi(2))
                .sum::<f64>()
                .sqrt()
                / rhs_norm;
            best_rel = best_rel.min(rel);
            if rel <= config.tol {
                return Ok((x, rel, it));
            }
        }
    }
    Err(FemError::NoConvergence {
        iterations: config.max_iterations,
        residual: best_rel,
    })
}

/// Conjugate gradients on the Schur complement `(A + B^T D^{-1} B) w = rhs`
/// with a Jacobi preconditioner. `D` must be strictly positive.
pub fn schur_pcg_solve(
    a: &CsrMatrix,
    b: &CsrMatrix,
    d: &[f64],
    rhs: &[f64],
    config: &SolverConfig,
) -> Result<(Vec<f64>, usize)> {
    config.validate()?;
    let n = a.nrows();
    if d.iter().any(|v| !(*v > 0.0)) {
        return Err(FemError::InvalidConfig(
            "Schur path requires a strictly positive diagonal".into(),
        ));
    }
    if b.ncols() != n || b.nrows() != d.len() || rhs.len() != n {
        return Err(FemError::DimensionMismatch(b.nrows(), b.ncols(), n));
    }
    let apply = |w: &[f64], out: &mut Vec<f64>| {
        a.matvec_into(w, out);
        let bw = b.matvec(w).expect("checked dims");
        let scaled: Vec<f64> = bw.iter().zip(d).map(|(v, dk)| v / dk).collect();
        b.matvec_transpose_add(&scaled, 1.0, out);
    };
    // diag(A) + sum_k B_ki^2 / d_k
    let mut jacobi = a.diagonal();
    for r in 0..b.nrows() {
        for (c, v) in b.row(r) {
            jacobi[c] += v * v / d[r];
        }
    }
    for j in &mut jacobi {
        if !(*j > 0.0) {
            *j = 1.0;
        }
    }

    let rhs_norm = norm2(rhs).max(f64::MIN_POSITIVE);
    let mut x = vec![0.0f64; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&jacobi).map(|(v, j)| v / j).collect();
    let mut p = z.clone();
    let mut rz = r.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
    let mut ap = vec![0.0f64; n];
    for it in 1..=config.max_iterations {
        apply(&p, &mut ap);
        let pap = p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        if pap <= 0.0 {
            return Err(FemError::FactorizationBreakdown(
                "Schur operator is not positive definite".into(),
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm2(&r) <= config.tol * rhs_norm {
            return Ok((x, it));
        }
        z = r.iter().zip(&jacobi).map(|(v, j)| v / j).collect();
        let rz_new = r.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
        let betak = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + betak * p[i];
        }
    }
    Err(FemError::NoConvergence {
        iterations: config.max_iterations,
        residual: norm2(&r) / rhs_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_to_csr(m: &DMatrix<f64>) -> CsrMatrix {
        let mut t = Triplets::new(m.nrows(), m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != 0.0 {
                    t.push(r, c, m[(r, c)]);
                }
            }
        }
        t.to_csr_sum()
    }

    fn random_saddle(rng: &mut ChaCha8Rng, np: usize, nm: usize, singular_a: bool) -> SaddleSystem {
        // A = C^T C (+ I unless a singular primal block is requested).
        let rank = if singular_a { np - nm.max(1) } else { np };
        let c = DMatrix::from_fn(rank, np, |_, _| rng.random_range(-1.0..1.0));
        let mut a = c.transpose() * c;
        if !singular_a {
            a += DMatrix::identity(np, np);
        }
        let b = DMatrix::from_fn(nm, np, |_, _| rng.random_range(-1.0..1.0));
        SaddleSystem {
            a: dense_to_csr(&a),
            b: dense_to_csr(&b),
            d: None,
            rhs_primal: (0..np).map(|_| rng.random_range(-1.0..1.0)).collect(),
            rhs_multiplier: (0..nm).map(|_| rng.random_range(-1.0..1.0)).collect(),
            positions: None,
        }
    }

    fn dense_solution(sys: &SaddleSystem) -> DVector<f64> {
        let k = sys.block_matrix().unwrap().to_dense();
        let mut rhs = sys.rhs_primal.clone();
        rhs.extend_from_slice(&sys.rhs_multiplier);
        k.lu().solve(&DVector::from_vec(rhs)).unwrap()
    }

    #[test]
    fn direct_matches_dense_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for singular in [false, true] {
            let sys = random_saddle(&mut rng, 24, 6, singular);
            let want = dense_solution(&sys);
            let sol = solve_saddle(&sys, &SolverConfig::default()).unwrap();
            for i in 0..24 {
                assert!(
                    (sol.primal[i] - want[i]).abs() < 1e-8,
                    "singular={singular}: {} vs {}",
                    sol.primal[i],
                    want[i]
                );
            }
            for i in 0..6 {
                assert!((sol.multiplier[i] - want[24 + i]).abs() < 1e-8);
            }
            assert!(sol.residual <= 1e-10);
        }
    }

    #[test]
    fn minres_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sys = random_saddle(&mut rng, 20, 5, false);
        let direct = solve_saddle(&sys, &SolverConfig::default()).unwrap();
        let it = solve_saddle(
            &sys,
            &SolverConfig {
                method: SolveMethod::Minres,
                tol: 1e-12,
                max_iterations: 20_000,
            },
        )
        .unwrap();
        for i in 0..20 {
            assert!((direct.primal[i] - it.primal[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn schur_pcg_with_zero_b_solves_a() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = DMatrix::from_fn(12, 12, |_, _| rng.random_range(-1.0..1.0));
        let a = c.transpose() * &c + DMatrix::identity(12, 12);
        let a_csr = dense_to_csr(&a);
        let b = CsrMatrix::zeros(4, 12);
        let d = vec![1.0; 4];
        let rhs: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (w, _) = schur_pcg_solve(&a_csr, &b, &d, &rhs, &SolverConfig::default()).unwrap();
        let want = a.lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
        for i in 0..12 {
            assert!((w[i] - want[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn schur_pcg_matches_saddle_with_diagonal_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut sys = random_saddle(&mut rng, 18, 5, false);
        sys.d = Some((0..5).map(|_| rng.random_range(0.5..2.0)).collect());
        sys.rhs_multiplier = vec![0.0; 5];
        let direct = solve_saddle(&sys, &SolverConfig::default()).unwrap();
        let (w, _) = schur_pcg_solve(
            &sys.a,
            &sys.b,
            sys.d.as_ref().unwrap(),
            &sys.rhs_primal,
            &SolverConfig::default(),
        )
        .unwrap();
        for i in 0..18 {
            assert!((w[i] - direct.primal[i]).abs() < 1e-8);
        }
        // Multiplier recovery: m = D^{-1} B w.
        let bw = sys.b.matvec(&w).unwrap();
        for i in 0..5 {
            let m = bw[i] / sys.d.as_ref().unwrap()[i];
            assert!((m - direct.multiplier[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_nonpositive_diagonal() {
        let a = CsrMatrix::zeros(3, 3);
        let b = CsrMatrix::zeros(2, 3);
        let d = vec![1.0, 0.0];
        let err = schur_pcg_solve(&a, &b, &d, &[0.0; 3], &SolverConfig::default());
        assert!(matches!(err, Err(FemError::InvalidConfig(_))));
    }

    #[test]
    fn nested_dissection_is_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 600;
        let mut t = Triplets::new(n, n);
        let pos: Vec<Point3<f64>> = (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.0..1.0),
                )
            })
            .collect();
        for i in 0..n {
            t.push(i, i, 4.0);
            let j = rng.random_range(0..n);
            t.push(i, j, 1.0);
            t.push(j, i, 1.0);
        }
        let k = t.to_csr_sum();
        let perm = nested_dissection(&k, &pos);
        let mut seen = vec![false; n];
        for p in perm {
            assert!(!seen[p]);
            seen[p] = true;
        }
        assert!(seen.iter().all(|s| *s));
    }
}
