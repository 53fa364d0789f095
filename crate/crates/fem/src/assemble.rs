//! Cellwise assembly of the global bilinear forms and load vectors.
//!
//! Local matrices are computed per cell (in parallel) and scattered with
//! commutative accumulation. Every form integrand is polynomial, so the
//! fixed stiffness quadrature degree is exact; load integrands against
//! analytic right-hand sides get their own, higher degree.

use crate::mesh::cell_geometry;
use crate::par;
use crate::quadrature::cached_rule;
use crate::space::{FeSpace, SpaceKind};
use crate::sparse::{CsrMatrix, Triplets};
use crate::{FemError, Result};
use nalgebra::{Point3, Vector3};
use std::sync::Arc;

/// Bilinear forms of the mixed and decoupled systems. `assemble(form, trial,
/// test)` produces a `test.num_dofs() x trial.num_dofs()` matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BilinearForm {
    /// `(grad_h curl_h u, grad_h curl_h v)` on the grad-curl space.
    GradCurlGradCurl,
    /// `(curl_h u, curl_h v)` on the grad-curl space.
    CurlCurl,
    /// `(grad u, grad v)`, scalar Lagrange or componentwise nonconforming.
    GradGrad,
    /// `(u, v)` within one kind.
    Mass,
    /// Diagonal of the mass matrix, assembled from local diagonals only.
    DiagMass,
    /// `(v, grad q)`: trial in the grad-curl space, test in Lagrange.
    MixedGrad,
    /// `(div_h psi, p)`: trial in the nonconforming linear space, test in P0.
    DivPressure,
    /// `(phi, curl_h chi)`: trial in the nonconforming linear space, test in
    /// the grad-curl space.
    CurlTest,
}

impl BilinearForm {
    fn symmetric(&self) -> bool {
        matches!(
            self,
            BilinearForm::GradCurlGradCurl
                | BilinearForm::CurlCurl
                | BilinearForm::GradGrad
                | BilinearForm::Mass
                | BilinearForm::DiagMass
        )
    }

    fn compatible(&self, trial: &FeSpace, test: &FeSpace) -> bool {
        let same_kind = trial.kind() == test.kind();
        match self {
            BilinearForm::GradCurlGradCurl | BilinearForm::CurlCurl => {
                same_kind && matches!(trial.kind(), SpaceKind::GradCurlW(_))
            }
            BilinearForm::GradGrad => {
                same_kind
                    && matches!(
                        trial.kind(),
                        SpaceKind::Lagrange(_) | SpaceKind::CrouzeixRaviart
                    )
            }
            BilinearForm::Mass => same_kind,
            BilinearForm::DiagMass => same_kind && matches!(trial.kind(), SpaceKind::Lagrange(_)),
            BilinearForm::MixedGrad => {
                matches!(trial.kind(), SpaceKind::GradCurlW(_))
                    && matches!(test.kind(), SpaceKind::Lagrange(_))
            }
            BilinearForm::DivPressure => {
                trial.kind() == SpaceKind::CrouzeixRaviart
                    && test.kind() == SpaceKind::PiecewiseP0
            }
            BilinearForm::CurlTest => {
                trial.kind() == SpaceKind::CrouzeixRaviart
                    && matches!(test.kind(), SpaceKind::GradCurlW(_))
            }
        }
    }
}

/// Quadrature degree for the (polynomial) form integrands.
pub const STIFFNESS_QUAD_DEGREE: usize = 4;

/// Assembles a bilinear form over the common mesh of the two spaces.
pub fn assemble(form: BilinearForm, trial: &Arc<FeSpace>, test: &Arc<FeSpace>) -> Result<CsrMatrix> {
    if !Arc::ptr_eq(trial.mesh(), test.mesh()) {
        return Err(FemError::MeshMismatch);
    }
    if !form.compatible(trial, test) {
        return Err(FemError::IncompatibleForm {
            form: format!("{form:?}"),
            trial: format!("{:?}", trial.kind()),
            test: format!("{:?}", test.kind()),
        });
    }
    let mesh = trial.mesh();
    let rule = cached_rule(3, STIFFNESS_QUAD_DEGREE)?;
    let per_cell = par::map_indexed(mesh.num_cells(), |c| {
        let geom = cell_geometry(mesh, c).expect("valid mesh");
        let tr_basis = trial.local_basis(&geom).expect("basis");
        let te_basis = test.local_basis(&geom).expect("basis");
        let rows = test.cell_dofs(c);
        let cols = trial.cell_dofs(c);
        let nr = rows.len();
        let nc = cols.len();
        let pts: Vec<Point3<f64>> = (0..rule.len())
            .map(|i| geom.point_from_barycentric(rule.point(i)))
            .collect();
        let wts: Vec<f64> = (0..rule.len())
            .map(|i| rule.weight(i) * 6.0 * geom.volume)
            .collect();
        let mut local = vec![0.0f64; nr * nc];
        match form {
            BilinearForm::GradCurlGradCurl => {
                // gradients of curls are constant per member
                for i in 0..nr {
                    let gi = te_basis.grad_curl(i);
                    for j in 0..nc {
                        let gj = tr_basis.grad_curl(j);
                        local[i * nc + j] = geom.volume * gi.dot(&gj);
                    }
                }
            }
            BilinearForm::CurlCurl => {
                for (p, x) in pts.iter().enumerate() {
                    let ci: Vec<Vector3<f64>> = (0..nr).map(|i| te_basis.curl_at(i, x)).collect();
                    let cj: Vec<Vector3<f64>> = (0..nc).map(|j| tr_basis.curl_at(j, x)).collect();
                    for i in 0..nr {
                        for j in 0..nc {
                            local[i * nc + j] += wts[p] * ci[i].dot(&cj[j]);
                        }
                    }
                }
            }
            BilinearForm::GradGrad => {
                let vector = trial.kind() == SpaceKind::CrouzeixRaviart;
                if vector {
                    // Jacobians are constant for the nonconforming linear space.
                    let x0 = geom.barycenter;
                    for i in 0..nr {
                        let ji = te_basis.jacobian_at(i, &x0);
                        for j in 0..nc {
                            let jj = tr_basis.jacobian_at(j, &x0);
                            local[i * nc + j] = geom.volume * ji.dot(&jj);
                        }
                    }
                } else {
                    for (p, x) in pts.iter().enumerate() {
                        let gi: Vec<Vector3<f64>> =
                            (0..nr).map(|i| te_basis.gradient_at(i, x)).collect();
                        let gj: Vec<Vector3<f64>> =
                            (0..nc).map(|j| tr_basis.gradient_at(j, x)).collect();
                        for i in 0..nr {
                            for j in 0..nc {
                                local[i * nc + j] += wts[p] * gi[i].dot(&gj[j]);
                            }
                        }
                    }
                }
            }
            BilinearForm::Mass | BilinearForm::DiagMass => {
                let vector = trial.kind().is_vector_valued();
                for (p, x) in pts.iter().enumerate() {
                    if vector {
                        let vi: Vec<Vector3<f64>> =
                            (0..nr).map(|i| te_basis.value_vector(i, x)).collect();
                        let vj: Vec<Vector3<f64>> =
                            (0..nc).map(|j| tr_basis.value_vector(j, x)).collect();
                        for i in 0..nr {
                            for j in 0..nc {
                                local[i * nc + j] += wts[p] * vi[i].dot(&vj[j]);
                            }
                        }
                    } else {
                        let vi: Vec<f64> = (0..nr).map(|i| te_basis.value_scalar(i, x)).collect();
                        let vj: Vec<f64> = (0..nc).map(|j| tr_basis.value_scalar(j, x)).collect();
                        for i in 0..nr {
                            for j in 0..nc {
                                local[i * nc + j] += wts[p] * vi[i] * vj[j];
                            }
                        }
                    }
                }
            }
            BilinearForm::MixedGrad => {
                for (p, x) in pts.iter().enumerate() {
                    let gi: Vec<Vector3<f64>> =
                        (0..nr).map(|i| te_basis.gradient_at(i, x)).collect();
                    let vj: Vec<Vector3<f64>> =
                        (0..nc).map(|j| tr_basis.value_vector(j, x)).collect();
                    for i in 0..nr {
                        for j in 0..nc {
                            local[i * nc + j] += wts[p] * vj[j].dot(&gi[i]);
                        }
                    }
                }
            }
            BilinearForm::DivPressure => {
                // divergence of the trial members is constant; test is 1.
                let x0 = geom.barycenter;
                for j in 0..nc {
                    local[j] = geom.volume * tr_basis.divergence_at(j, &x0);
                }
            }
            BilinearForm::CurlTest => {
                for (p, x) in pts.iter().enumerate() {
                    let ci: Vec<Vector3<f64>> = (0..nr).map(|i| te_basis.curl_at(i, x)).collect();
                    let vj: Vec<Vector3<f64>> =
                        (0..nc).map(|j| tr_basis.value_vector(j, x)).collect();
                    for i in 0..nr {
                        for j in 0..nc {
                            local[i * nc + j] += wts[p] * vj[j].dot(&ci[i]);
                        }
                    }
                }
            }
        }
        let mut entries = Vec::new();
        let diag_only = form == BilinearForm::DiagMass;
        for (i, row) in rows.iter().enumerate() {
            let Some(row) = row else { continue };
            for (j, col) in cols.iter().enumerate() {
                let Some(col) = col else { continue };
                if diag_only && (i != j || row != col) {
                    continue;
                }
                let v = local[i * nc + j];
                if v != 0.0 {
                    entries.push((*row, *col, v));
                }
            }
        }
        entries
    });
    let mut t = Triplets::new(test.num_dofs(), trial.num_dofs());
    for chunk in per_cell {
        t.extend(chunk);
    }
    let mut m = t.to_csr_sum();
    m.symmetric = form.symmetric() && Arc::ptr_eq(trial, test) && trial.bc() == test.bc();
    Ok(m)
}

/// Default quadrature degree for loads against analytic (non-polynomial)
/// right-hand sides. High enough that a divergence-free load stays numerically
/// orthogonal to the discrete gradients even on the coarsest study level,
/// which is what drives the Lagrange multiplier to zero.
pub const LOAD_QUAD_DEGREE: usize = 15;

/// Assembles `(f, phi_i)` for a vector-valued space by per-cell quadrature of
/// the given degree.
pub fn assemble_load(
    space: &Arc<FeSpace>,
    f: &(dyn Fn(&Point3<f64>) -> Vector3<f64> + Sync),
    degree: usize,
) -> Result<Vec<f64>> {
    let mesh = space.mesh();
    let rule = cached_rule(3, degree)?;
    let per_cell = par::map_indexed(mesh.num_cells(), |c| {
        let geom = cell_geometry(mesh, c).expect("valid mesh");
        let basis = space.local_basis(&geom).expect("basis");
        let dofs = space.cell_dofs(c);
        let mut local = vec![0.0f64; dofs.len()];
        for p in 0..rule.len() {
            let x = geom.point_from_barycentric(rule.point(p));
            let w = rule.weight(p) * 6.0 * geom.volume;
            let fx = f(&x);
            for (j, l) in local.iter_mut().enumerate() {
                *l += w * fx.dot(&basis.value_vector(j, &x));
            }
        }
        (dofs, local)
    });
    let mut out = vec![0.0f64; space.num_dofs()];
    for (dofs, local) in per_cell {
        for (g, v) in dofs.iter().zip(local) {
            if let Some(g) = g {
                out[*g] += v;
            }
        }
    }
    Ok(out)
}
