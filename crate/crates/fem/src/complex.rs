//! Discrete differential operators between the global spaces, with runtime
//! verification of exactness and of the commuting interpolation diagrams.
//!
//! The main sequence is
//!
//! ```text
//! Lagrange(k+1) --grad--> GradCurlW(k) --curl_h--> CrouzeixRaviart --div_h--> P0
//! ```
//!
//! and the tangential/normal-continuity row
//! `Lagrange(k+1) --grad--> Nedelec(k) --curl--> Rt0` shares its first space.
//! Operator matrices hold the target-space DOF evaluations of the
//! differential of each source basis function; all integrands are polynomial,
//! so the entries are quadrature exact.

use crate::local::LocalDof;
use crate::mesh::{cell_geometry, Mesh};
use crate::par;
use crate::poly::{ScalarPoly, VectorPoly};
use crate::space::{build_space, Bc, FeSpace, SpaceKind};
use crate::sparse::{CsrMatrix, Triplets};
use crate::{FemError, Result};
use std::sync::Arc;

/// The differential carried by a legal operator pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Differential {
    Grad,
    Curl,
    Div,
}

fn arrow(from: SpaceKind, to: SpaceKind) -> Option<Differential> {
    match (from, to) {
        (SpaceKind::Lagrange(d), SpaceKind::GradCurlW(k)) if d == k + 1 => {
            Some(Differential::Grad)
        }
        (SpaceKind::Lagrange(d), SpaceKind::Nedelec(k)) if d == k + 1 => Some(Differential::Grad),
        (SpaceKind::GradCurlW(_), SpaceKind::CrouzeixRaviart) => Some(Differential::Curl),
        (SpaceKind::Nedelec(_), SpaceKind::Rt0) => Some(Differential::Curl),
        (SpaceKind::CrouzeixRaviart, SpaceKind::PiecewiseP0) => Some(Differential::Div),
        _ => None,
    }
}

/// Matrix of the differential mapping `from` into `to`; columns are indexed
/// by source DOFs and hold the target DOF values of the mapped basis
/// functions.
pub fn complex_operator(from: &Arc<FeSpace>, to: &Arc<FeSpace>) -> Result<CsrMatrix> {
    if !Arc::ptr_eq(from.mesh(), to.mesh()) {
        return Err(FemError::MeshMismatch);
    }
    let diff = arrow(from.kind(), to.kind()).ok_or_else(|| FemError::IllegalOperatorPair {
        from: format!("{:?}", from.kind()),
        to: format!("{:?}", to.kind()),
    })?;
    if from.bc() != to.bc() {
        return Err(FemError::IllegalOperatorPair {
            from: format!("{:?}/{:?}", from.kind(), from.bc()),
            to: format!("{:?}/{:?}", to.kind(), to.bc()),
        });
    }
    let mesh = from.mesh();
    let per_cell = par::map_indexed(mesh.num_cells(), |c| {
        let geom = cell_geometry(mesh, c).expect("valid mesh");
        let src_basis = from.local_basis(&geom).expect("basis");
        let dst_dofs = crate::local::local_dof_set(to.kind().family(), &geom);
        let rows = to.cell_dofs(c);
        let cols = from.cell_dofs(c);
        let mut entries = Vec::new();
        for (j, col) in cols.iter().enumerate() {
            let Some(col) = col else { continue };
            // differential of source member j as a polynomial field
            let mapped: MappedField = match diff {
                Differential::Grad => MappedField::Vector(src_basis.scalar_poly(j).gradient()),
                Differential::Curl => MappedField::Vector(src_basis.vector_poly(j).curl()),
                Differential::Div => MappedField::Scalar(src_basis.vector_poly(j).divergence()),
            };
            for (i, row) in rows.iter().enumerate() {
                let Some(row) = row else { continue };
                let val = match (&mapped, &dst_dofs[i]) {
                    (MappedField::Scalar(s), dof) => dof.apply_scalar(s),
                    (MappedField::Vector(v), dof) => dof.apply_vector(v),
                };
                entries.push((*row, *col, val));
            }
        }
        entries
    });
    let mut t = Triplets::new(to.num_dofs(), from.num_dofs());
    for chunk in per_cell {
        t.extend(chunk);
    }
    Ok(t.to_csr_set())
}

enum MappedField {
    Scalar(ScalarPoly),
    Vector(VectorPoly),
}

/// Exactness evidence for one `(k, bc)` configuration of the sequence.
#[derive(Debug, Clone)]
pub struct ComplexReport {
    pub k: usize,
    pub homogeneous: bool,
    pub dim_lagrange: usize,
    pub dim_w: usize,
    pub dim_stokes_velocity: usize,
    pub dim_pressure: usize,
    /// `max |(curl grad)_ij|` and `max |(div curl)_ij|`.
    pub curl_grad_max: f64,
    pub div_curl_max: f64,
    pub rank_grad: usize,
    pub rank_curl: usize,
    pub rank_div: usize,
    pub expected_rank_grad: usize,
    pub expected_rank_curl: usize,
    pub expected_rank_div: usize,
    /// Residual of `curl (edge interpolation) = flux interpolation (curl_h)`
    /// across the tangential/normal-continuity row (homogeneous only).
    pub third_row_commuting_max: Option<f64>,
    pub composition_tol: f64,
}

impl ComplexReport {
    pub fn pass(&self) -> bool {
        self.curl_grad_max < self.composition_tol
            && self.div_curl_max < self.composition_tol
            && self.rank_grad == self.expected_rank_grad
            && self.rank_curl == self.expected_rank_curl
            && self.rank_div == self.expected_rank_div
            // kernel of curl is exactly the range of grad
            && self.dim_w - self.rank_curl == self.rank_grad
            // range of curl is exactly the kernel of div
            && self.dim_stokes_velocity - self.rank_div == self.rank_curl
            && self.third_row_commuting_max.map_or(true, |r| r < 1e-10)
    }
}

impl std::fmt::Display for ComplexReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "k = {}", self.k)?;
        writeln!(f, "homogeneous = {}", self.homogeneous)?;
        writeln!(f, "dim.lagrange = {}", self.dim_lagrange)?;
        writeln!(f, "dim.gradcurl = {}", self.dim_w)?;
        writeln!(f, "dim.stokes_velocity = {}", self.dim_stokes_velocity)?;
        writeln!(f, "dim.pressure = {}", self.dim_pressure)?;
        writeln!(f, "composition.curl_grad_max = {:.3e}", self.curl_grad_max)?;
        writeln!(f, "composition.div_curl_max = {:.3e}", self.div_curl_max)?;
        writeln!(f, "rank.grad = {} (expected {})", self.rank_grad, self.expected_rank_grad)?;
        writeln!(f, "rank.curl = {} (expected {})", self.rank_curl, self.expected_rank_curl)?;
        writeln!(f, "rank.div = {} (expected {})", self.rank_div, self.expected_rank_div)?;
        if let Some(r) = self.third_row_commuting_max {
            writeln!(f, "third_row.commuting_max = {:.3e}", r)?;
        }
        writeln!(f, "pass = {}", self.pass())
    }
}

fn matrix_rank(m: &CsrMatrix) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let dense = m.to_dense();
    let svd = dense.svd(false, false);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return 0;
    }
    svd.singular_values
        .iter()
        .filter(|s| **s > 1e-9 * smax)
        .count()
}

/// Builds the sequence on `mesh` and verifies compositions, ranks and (for
/// the homogeneous variant) the tangential/normal-continuity row. Failures
/// are reported in the result, not raised.
pub fn verify_exactness(mesh: &Arc<Mesh>, k: usize, bc: Bc) -> Result<ComplexReport> {
    let vg = build_space(Arc::clone(mesh), SpaceKind::Lagrange(k + 1), bc);
    let w = build_space(Arc::clone(mesh), SpaceKind::GradCurlW(k), bc);
    let vs = build_space(Arc::clone(mesh), SpaceKind::CrouzeixRaviart, bc);
    let q = build_space(Arc::clone(mesh), SpaceKind::PiecewiseP0, bc);

    let grad = complex_operator(&vg, &w)?;
    let curl = complex_operator(&w, &vs)?;
    let div = complex_operator(&vs, &q)?;

    let curl_grad_max = curl.matmul(&grad)?.max_abs();
    let div_curl_max = div.matmul(&curl)?.max_abs();

    let rank_grad = matrix_rank(&grad);
    let rank_curl = matrix_rank(&curl);
    let rank_div = matrix_rank(&div);

    let homogeneous = bc == Bc::Homogeneous;
    let (expected_rank_grad, expected_rank_div) = if homogeneous {
        (vg.num_dofs(), q.dim())
    } else {
        (vg.num_dofs().saturating_sub(1), q.num_dofs())
    };
    let expected_rank_curl = w.num_dofs() - expected_rank_grad;

    let third_row_commuting_max = if homogeneous {
        Some(third_row_residual(mesh, k)?)
    } else {
        None
    };

    Ok(ComplexReport {
        k,
        homogeneous,
        dim_lagrange: vg.num_dofs(),
        dim_w: w.num_dofs(),
        dim_stokes_velocity: vs.num_dofs(),
        dim_pressure: q.num_dofs(),
        curl_grad_max,
        div_curl_max,
        rank_grad,
        rank_curl,
        rank_div,
        expected_rank_grad,
        expected_rank_curl,
        expected_rank_div,
        third_row_commuting_max,
        composition_tol: 1e-12,
    })
}

/// Edge-moment extraction `GradCurlW(k) -> Nedelec(k)`: the edge DOFs of the
/// two spaces coincide, so the matrix is a 0/1 selection.
pub fn w_to_nedelec(w: &Arc<FeSpace>, vc: &Arc<FeSpace>) -> Result<CsrMatrix> {
    if !Arc::ptr_eq(w.mesh(), vc.mesh()) {
        return Err(FemError::MeshMismatch);
    }
    let mesh = w.mesh();
    let per = match vc.kind() {
        SpaceKind::Nedelec(k) => k + 1,
        _ => {
            return Err(FemError::IllegalOperatorPair {
                from: format!("{:?}", w.kind()),
                to: format!("{:?}", vc.kind()),
            })
        }
    };
    let mut t = Triplets::new(vc.num_dofs(), w.num_dofs());
    for e in 0..mesh.num_edges() {
        for idx in 0..per {
            if let (Some(r), Some(c)) = (vc.global_dof(1, e, idx), w.global_dof(1, e, idx)) {
                t.push(r, c, 1.0);
            }
        }
    }
    Ok(t.to_csr_set())
}

/// Face-flux interpolation `CrouzeixRaviart -> Rt0`: the flux of a face-mean
/// field is `area * (n . mean)`, well defined across faces.
pub fn stokes_to_rt(vs: &Arc<FeSpace>, vd: &Arc<FeSpace>) -> Result<CsrMatrix> {
    if !Arc::ptr_eq(vs.mesh(), vd.mesh()) {
        return Err(FemError::MeshMismatch);
    }
    let mesh = vs.mesh();
    let mut t = Triplets::new(vd.num_dofs(), vs.num_dofs());
    for f in 0..mesh.num_faces() {
        let Some(r) = vd.global_dof(2, f, 0) else {
            continue;
        };
        let n = mesh.face_normal(f);
        let area = mesh.face_area(f);
        for comp in 0..3 {
            if let Some(c) = vs.global_dof(2, f, comp) {
                t.push(r, c, area * n[comp]);
            }
        }
    }
    Ok(t.to_csr_set())
}

/// Residual of the identity `curl(edge interpolation of v) =
/// flux interpolation of curl_h v` over the homogeneous spaces.
fn third_row_residual(mesh: &Arc<Mesh>, k: usize) -> Result<f64> {
    let bc = Bc::Homogeneous;
    let w = build_space(Arc::clone(mesh), SpaceKind::GradCurlW(k), bc);
    let vs = build_space(Arc::clone(mesh), SpaceKind::CrouzeixRaviart, bc);
    let vc = build_space(Arc::clone(mesh), SpaceKind::Nedelec(k), bc);
    let vd = build_space(Arc::clone(mesh), SpaceKind::Rt0, bc);
    let curl_w = complex_operator(&w, &vs)?;
    let curl_c = complex_operator(&vc, &vd)?;
    let p_wc = w_to_nedelec(&w, &vc)?;
    let p_sd = stokes_to_rt(&vs, &vd)?;
    let lhs = curl_c.matmul(&p_wc)?;
    let rhs = p_sd.matmul(&curl_w)?;
    let mut dev: f64 = 0.0;
    let diff_rows = lhs.nrows();
    for r in 0..diff_rows {
        let a: std::collections::HashMap<usize, f64> = lhs.row(r).collect();
        let b: std::collections::HashMap<usize, f64> = rhs.row(r).collect();
        for (c, v) in &a {
            dev = dev.max((v - b.get(c).copied().unwrap_or(0.0)).abs());
        }
        for (c, v) in &b {
            if !a.contains_key(c) {
                dev = dev.max(v.abs());
            }
        }
    }
    Ok(dev)
}

/// Coefficient-space residuals of the three commuting identities for nodal
/// interpolation of polynomial fields.
#[derive(Debug, Clone, Copy)]
pub struct CommutingResiduals {
    /// `grad(I_lagrange v) - I_gradcurl(grad v)` in coefficient max norm.
    pub grad: f64,
    /// `curl_h(I_gradcurl w) - I_stokes(curl w)`.
    pub curl: f64,
    /// `div_h(I_stokes w) - I_p0(div w)`.
    pub div: f64,
}

/// Evaluates the commuting residuals on one mesh for a scalar polynomial `v`
/// and vector polynomial `w` (degree at most two each).
pub fn verify_commuting(
    mesh: &Arc<Mesh>,
    k: usize,
    v: &ScalarPoly,
    w: &VectorPoly,
) -> Result<CommutingResiduals> {
    let bc = Bc::None;
    let vg = build_space(Arc::clone(mesh), SpaceKind::Lagrange(k + 1), bc);
    let wsp = build_space(Arc::clone(mesh), SpaceKind::GradCurlW(k), bc);
    let vs = build_space(Arc::clone(mesh), SpaceKind::CrouzeixRaviart, bc);
    let q = build_space(Arc::clone(mesh), SpaceKind::PiecewiseP0, bc);
    let grad = complex_operator(&vg, &wsp)?;
    let curl = complex_operator(&wsp, &vs)?;
    let div = complex_operator(&vs, &q)?;

    let max_diff = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    };

    let iv = vg.interpolate_scalar(v)?;
    let lhs = grad.matvec(iv.coeffs())?;
    let rhs = wsp.interpolate_vector(&v.gradient())?;
    let grad_res = max_diff(&lhs, rhs.coeffs());

    let iw = wsp.interpolate_vector(w)?;
    let lhs = curl.matvec(iw.coeffs())?;
    let rhs = vs.interpolate_vector(&w.curl())?;
    let curl_res = max_diff(&lhs, rhs.coeffs());

    let is = vs.interpolate_vector(w)?;
    let lhs = div.matvec(is.coeffs())?;
    let rhs = q.interpolate_scalar(&w.divergence())?;
    let div_res = max_diff(&lhs, rhs.coeffs());

    Ok(CommutingResiduals {
        grad: grad_res,
        curl: curl_res,
        div: div_res,
    })
}
