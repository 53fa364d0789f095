//! Global finite element spaces: DOF numbering, boundary conditions,
//! interpolation and evaluation.
//!
//! Global DOFs are blocked by entity class (vertices, edges, faces, cells)
//! and ordered by entity id within each block. Homogeneous spaces drop the
//! DOFs attached to boundary entities from the numbering entirely, so their
//! coefficient vectors carry interior unknowns only. The zero-mean pressure
//! space keeps all cell DOFs and records the mean constraint as a flag for
//! the solvers.

use crate::field::{ScalarField, VectorField};
use crate::local::{aux_basis, face_tangential_gradients, local_dof_set, Family, LocalBasis, LocalDof};
use crate::mesh::{cell_geometry, classify_boundary, BoundaryInfo, Mesh, LOCAL_EDGES};
use crate::par;
use crate::quadrature::cached_rule;
use crate::{FemError, Result};
use nalgebra::{Matrix3, Point3, Vector3};
use std::sync::Arc;

/// Global space kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    /// Continuous Lagrange of degree 1 or 2.
    Lagrange(usize),
    /// Nonconforming grad-curl space built on `W_k`.
    GradCurlW(usize),
    /// Vector-valued nonconforming linear space with face-mean continuity.
    CrouzeixRaviart,
    /// Piecewise constants.
    PiecewiseP0,
    /// Tangentially continuous edge-element space, `k = 0` or `1`.
    Nedelec(usize),
    /// Normally continuous lowest-order face-flux space.
    Rt0,
}

impl SpaceKind {
    pub fn family(&self) -> Family {
        match self {
            SpaceKind::Lagrange(d) => Family::Lagrange(*d),
            SpaceKind::GradCurlW(k) => Family::W(*k),
            SpaceKind::CrouzeixRaviart => Family::CrouzeixRaviart,
            SpaceKind::PiecewiseP0 => Family::P0,
            SpaceKind::Nedelec(k) => Family::Nedelec(*k),
            SpaceKind::Rt0 => Family::Rt0,
        }
    }

    /// DOF counts per (vertex, edge, face, cell).
    fn dofs_per(&self) -> [usize; 4] {
        match self {
            SpaceKind::Lagrange(1) => [1, 0, 0, 0],
            SpaceKind::Lagrange(_) => [1, 1, 0, 0],
            SpaceKind::GradCurlW(k) => [0, k + 1, 2, 0],
            SpaceKind::CrouzeixRaviart => [0, 0, 3, 0],
            SpaceKind::PiecewiseP0 => [0, 0, 0, 1],
            SpaceKind::Nedelec(k) => [0, k + 1, 0, 0],
            SpaceKind::Rt0 => [0, 0, 1, 0],
        }
    }

    pub fn is_vector_valued(&self) -> bool {
        self.family().is_vector_valued()
    }
}

/// Boundary condition variant of a space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bc {
    None,
    Homogeneous,
}

/// A global finite element space over a mesh.
pub struct FeSpace {
    mesh: Arc<Mesh>,
    kind: SpaceKind,
    bc: Bc,
    boundary: BoundaryInfo,
    dofs_per: [usize; 4],
    /// Entity-to-slot maps for vertices, edges and faces (`None` = dropped).
    slots: [Vec<Option<usize>>; 3],
    offsets: [usize; 4],
    num_dofs: usize,
    zero_mean: bool,
}

impl FeSpace {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }
    pub fn kind(&self) -> SpaceKind {
        self.kind
    }
    pub fn bc(&self) -> Bc {
        self.bc
    }
    pub fn boundary(&self) -> &BoundaryInfo {
        &self.boundary
    }

    /// Length of coefficient vectors over this space.
    pub fn num_dofs(&self) -> usize {
        self.num_dofs
    }

    /// Mathematical dimension: one less than the stored DOFs when the
    /// zero-mean constraint is active.
    pub fn dim(&self) -> usize {
        self.num_dofs - usize::from(self.zero_mean)
    }

    pub fn zero_mean(&self) -> bool {
        self.zero_mean
    }

    fn class_slot(&self, class: usize, entity: usize) -> Option<usize> {
        if class == 3 {
            Some(entity)
        } else {
            self.slots[class][entity]
        }
    }

    /// Global index of DOF `index` on entity `entity` of the given class
    /// (0 = vertex, 1 = edge, 2 = face, 3 = cell); `None` when constrained away.
    pub fn global_dof(&self, class: usize, entity: usize, index: usize) -> Option<usize> {
        debug_assert!(index < self.dofs_per[class]);
        self.class_slot(class, entity)
            .map(|slot| self.offsets[class] + slot * self.dofs_per[class] + index)
    }

    /// Global indices of a cell's DOFs in local member order.
    pub fn cell_dofs(&self, cell: usize) -> Vec<Option<usize>> {
        let mut out = Vec::new();
        let verts = self.mesh.cell(cell);
        for v in 0..4 {
            for idx in 0..self.dofs_per[0] {
                out.push(self.global_dof(0, verts[v], idx));
            }
        }
        let edges = self.mesh.cell_edges(cell);
        for le in 0..6 {
            for idx in 0..self.dofs_per[1] {
                out.push(self.global_dof(1, edges[le], idx));
            }
        }
        let faces = self.mesh.cell_faces(cell);
        for lf in 0..4 {
            for idx in 0..self.dofs_per[2] {
                out.push(self.global_dof(2, faces[lf], idx));
            }
        }
        for idx in 0..self.dofs_per[3] {
            out.push(self.global_dof(3, cell, idx));
        }
        debug_assert_eq!(out.len(), self.kind.family().dim());
        out
    }

    /// Geometric anchor of every DOF, in global DOF order.
    pub fn dof_positions(&self) -> Vec<Point3<f64>> {
        let mut out = vec![Point3::origin(); self.num_dofs];
        let mesh = &self.mesh;
        for v in 0..mesh.num_vertices() {
            for idx in 0..self.dofs_per[0] {
                if let Some(g) = self.global_dof(0, v, idx) {
                    out[g] = *mesh.vertex(v);
                }
            }
        }
        for e in 0..mesh.num_edges() {
            if self.dofs_per[1] == 0 {
                break;
            }
            let [a, b] = *mesh.edge(e);
            let mid = Point3::from(0.5 * (mesh.vertex(a).coords + mesh.vertex(b).coords));
            for idx in 0..self.dofs_per[1] {
                if let Some(g) = self.global_dof(1, e, idx) {
                    out[g] = mid;
                }
            }
        }
        for f in 0..mesh.num_faces() {
            if self.dofs_per[2] == 0 {
                break;
            }
            let [a, b, c] = *mesh.face(f);
            let centroid = Point3::from(
                (mesh.vertex(a).coords + mesh.vertex(b).coords + mesh.vertex(c).coords) / 3.0,
            );
            for idx in 0..self.dofs_per[2] {
                if let Some(g) = self.global_dof(2, f, idx) {
                    out[g] = centroid;
                }
            }
        }
        for cell in 0..mesh.num_cells() {
            if self.dofs_per[3] == 0 {
                break;
            }
            let verts = mesh.cell(cell);
            let centroid = Point3::from(
                verts
                    .iter()
                    .map(|v| mesh.vertex(*v).coords)
                    .sum::<Vector3<f64>>()
                    / 4.0,
            );
            for idx in 0..self.dofs_per[3] {
                if let Some(g) = self.global_dof(3, cell, idx) {
                    out[g] = centroid;
                }
            }
        }
        out
    }

    /// Local dual basis of this space's family on one cell.
    pub fn local_basis(&self, geom: &crate::mesh::CellGeometry) -> Result<LocalBasis> {
        aux_basis(self.kind.family(), geom)
    }

    /// Nodal interpolation of a scalar field (Lagrange and piecewise-constant
    /// kinds). Boundary DOFs of homogeneous spaces are dropped; the caller
    /// guarantees compatibility.
    pub fn interpolate_scalar(self: &Arc<Self>, field: &dyn ScalarField) -> Result<FeFunction> {
        if self.kind.is_vector_valued() {
            return Err(FemError::IncompatibleForm {
                form: "scalar interpolation".into(),
                trial: format!("{:?}", self.kind),
                test: String::new(),
            });
        }
        let coeffs = self.interpolate_entities(&|dof| dof.apply_scalar(field));
        Ok(FeFunction {
            space: Arc::clone(self),
            coeffs,
        })
    }

    /// Nodal interpolation of a vector field (all vector-valued kinds).
    pub fn interpolate_vector(self: &Arc<Self>, field: &dyn VectorField) -> Result<FeFunction> {
        if !self.kind.is_vector_valued() {
            return Err(FemError::IncompatibleForm {
                form: "vector interpolation".into(),
                trial: format!("{:?}", self.kind),
                test: String::new(),
            });
        }
        let coeffs = self.interpolate_entities(&|dof| dof.apply_vector(field));
        Ok(FeFunction {
            space: Arc::clone(self),
            coeffs,
        })
    }

    /// Evaluates every retained DOF functional; entity loops run in parallel.
    fn interpolate_entities(&self, apply: &(dyn Fn(&LocalDof) -> f64 + Sync)) -> Vec<f64> {
        let mesh = &self.mesh;
        let mut coeffs = vec![0.0; self.num_dofs];
        if self.dofs_per[0] > 0 {
            let vals = par::map_indexed(mesh.num_vertices(), |v| {
                apply(&LocalDof::PointValue(*mesh.vertex(v)))
            });
            for (v, val) in vals.into_iter().enumerate() {
                if let Some(g) = self.global_dof(0, v, 0) {
                    coeffs[g] = val;
                }
            }
        }
        if self.dofs_per[1] > 0 {
            let per = self.dofs_per[1];
            let vals = par::map_indexed(mesh.num_edges(), |e| {
                let pts = mesh.edge_points(e);
                let mut local = Vec::with_capacity(per);
                for idx in 0..per {
                    let dof = match self.kind {
                        SpaceKind::Lagrange(_) => LocalDof::PointValue(Point3::from(
                            0.5 * (pts[0].coords + pts[1].coords),
                        )),
                        _ => LocalDof::EdgeMoment {
                            pts,
                            tangent: mesh.edge_tangent(e),
                            length: mesh.edge_length(e),
                            moment: idx,
                        },
                    };
                    local.push(apply(&dof));
                }
                local
            });
            for (e, local) in vals.into_iter().enumerate() {
                for (idx, val) in local.into_iter().enumerate() {
                    if let Some(g) = self.global_dof(1, e, idx) {
                        coeffs[g] = val;
                    }
                }
            }
        }
        if self.dofs_per[2] > 0 {
            let vals = par::map_indexed(mesh.num_faces(), |f| {
                let pts = mesh.face_points(f);
                let area = mesh.face_area(f);
                let normal = mesh.face_normal(f);
                let mut local = Vec::new();
                match self.kind {
                    SpaceKind::GradCurlW(_) => {
                        let tg = face_tangential_gradients(&pts, &normal);
                        let denom = tg[0].cross(&tg[1]).dot(&normal);
                        local.push(apply(&LocalDof::FaceCurlMoment {
                            pts,
                            area,
                            direction: tg[1],
                            normalization: 1.0 / (2.0 * area * denom),
                        }));
                        local.push(apply(&LocalDof::FaceCurlMoment {
                            pts,
                            area,
                            direction: tg[0],
                            normalization: 1.0 / (2.0 * area * -denom),
                        }));
                    }
                    SpaceKind::CrouzeixRaviart => {
                        for comp in 0..3 {
                            local.push(apply(&LocalDof::FaceMeanComponent { pts, area, comp }));
                        }
                    }
                    SpaceKind::Rt0 => {
                        local.push(apply(&LocalDof::FaceFlux { pts, area, normal }));
                    }
                    _ => unreachable!("no face DOFs for {:?}", self.kind),
                }
                local
            });
            for (f, local) in vals.into_iter().enumerate() {
                for (idx, val) in local.into_iter().enumerate() {
                    if let Some(g) = self.global_dof(2, f, idx) {
                        coeffs[g] = val;
                    }
                }
            }
        }
        if self.dofs_per[3] > 0 {
            let vals = par::map_indexed(mesh.num_cells(), |c| {
                let geom = cell_geometry(mesh, c).expect("valid mesh");
                apply(&LocalDof::CellMean {
                    verts: geom.verts,
                    volume: geom.volume,
                })
            });
            for (c, val) in vals.into_iter().enumerate() {
                if let Some(g) = self.global_dof(3, c, 0) {
                    coeffs[g] = val;
                }
            }
        }
        coeffs
    }
}

/// Builds a space over the mesh; the DOF numbering is deterministic.
pub fn build_space(mesh: Arc<Mesh>, kind: SpaceKind, bc: Bc) -> Arc<FeSpace> {
    let boundary = classify_boundary(&mesh);
    let dofs_per = kind.dofs_per();
    let drop_boundary = bc == Bc::Homogeneous;
    let zero_mean = kind == SpaceKind::PiecewiseP0 && bc == Bc::Homogeneous;

    let make_slots = |count: usize, is_boundary: &dyn Fn(usize) -> bool, used: bool| {
        let mut slots = vec![None; count];
        if used {
            let mut next = 0;
            for (e, slot) in slots.iter_mut().enumerate() {
                if !(drop_boundary && is_boundary(e)) {
                    *slot = Some(next);
                    next += 1;
                }
            }
        }
        slots
    };
    let vertex_slots = make_slots(
        mesh.num_vertices(),
        &|v| boundary.vertex[v],
        dofs_per[0] > 0,
    );
    let edge_slots = make_slots(mesh.num_edges(), &|e| boundary.edge[e], dofs_per[1] > 0);
    let face_slots = make_slots(mesh.num_faces(), &|f| boundary.face[f], dofs_per[2] > 0);

    let count = |slots: &Vec<Option<usize>>| slots.iter().filter(|s| s.is_some()).count();
    let counts = [
        count(&vertex_slots),
        count(&edge_slots),
        count(&face_slots),
        mesh.num_cells(),
    ];
    let mut offsets = [0usize; 4];
    let mut acc = 0;
    for class in 0..4 {
        offsets[class] = acc;
        acc += counts[class] * dofs_per[class];
    }

    Arc::new(FeSpace {
        mesh,
        kind,
        bc,
        boundary,
        dofs_per,
        slots: [vertex_slots, edge_slots, face_slots],
        offsets,
        num_dofs: acc,
        zero_mean,
    })
}

/// A coefficient vector over a space.
#[derive(Clone)]
pub struct FeFunction {
    space: Arc<FeSpace>,
    coeffs: Vec<f64>,
}

/// Values of a function on a set of points in one cell.
pub struct EvalData {
    pub scalars: Option<Vec<f64>>,
    pub gradients: Option<Vec<Vector3<f64>>>,
    pub vectors: Option<Vec<Vector3<f64>>>,
    pub curls: Option<Vec<Vector3<f64>>>,
    /// Per-cell constant for the grad-curl kinds.
    pub grad_curls: Option<Vec<Matrix3<f64>>>,
}

impl FeFunction {
    pub fn zeros(space: &Arc<FeSpace>) -> FeFunction {
        FeFunction {
            space: Arc::clone(space),
            coeffs: vec![0.0; space.num_dofs()],
        }
    }

    pub fn from_coeffs(space: &Arc<FeSpace>, coeffs: Vec<f64>) -> FeFunction {
        assert_eq!(coeffs.len(), space.num_dofs());
        FeFunction {
            space: Arc::clone(space),
            coeffs,
        }
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Euclidean norm of the coefficient vector.
    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Evaluates the function (and its derivatives, per kind) at barycentric
    /// points of one cell.
    pub fn evaluate(&self, cell: usize, points: &[[f64; 4]]) -> Result<EvalData> {
        for b in points {
            let sum: f64 = b.iter().sum();
            if b.iter().any(|c| !(-1e-12..=1.0 + 1e-12).contains(c)) || (sum - 1.0).abs() > 1e-9 {
                return Err(FemError::PointOutsideCell);
            }
        }
        let geom = cell_geometry(&self.space.mesh, cell)?;
        let basis = self.space.local_basis(&geom)?;
        let dofs = self.space.cell_dofs(cell);
        let coeffs: Vec<f64> = dofs
            .iter()
            .map(|g| g.map(|i| self.coeffs[i]).unwrap_or(0.0))
            .collect();
        let phys: Vec<Point3<f64>> = points.iter().map(|b| geom.point_from_barycentric(b)).collect();
        if self.space.kind.is_vector_valued() {
            let mut vectors = vec![Vector3::zeros(); phys.len()];
            let mut curls = vec![Vector3::zeros(); phys.len()];
            let mut gc = Matrix3::zeros();
            for (m, c) in coeffs.iter().enumerate() {
                if *c == 0.0 {
                    continue;
                }
                gc += *c * basis.grad_curl(m);
                for (p, x) in phys.iter().enumerate() {
                    vectors[p] += *c * basis.value_vector(m, x);
                    curls[p] += *c * basis.curl_at(m, x);
                }
            }
            Ok(EvalData {
                scalars: None,
                gradients: None,
                vectors: Some(vectors),
                curls: Some(curls),
                grad_curls: Some(vec![gc; phys.len()]),
            })
        } else {
            let mut scalars = vec![0.0; phys.len()];
            let mut gradients = vec![Vector3::zeros(); phys.len()];
            for (m, c) in coeffs.iter().enumerate() {
                if *c == 0.0 {
                    continue;
                }
                for (p, x) in phys.iter().enumerate() {
                    scalars[p] += *c * basis.value_scalar(m, x);
                    gradients[p] += *c * basis.gradient_at(m, x);
                }
            }
            Ok(EvalData {
                scalars: Some(scalars),
                gradients: Some(gradients),
                vectors: None,
                curls: None,
                grad_curls: None,
            })
        }
    }
}

/// Convenience: the spec-level interpolation entry point, dispatching on the
/// field type via the space kind.
pub fn interpolate_scalar(space: &Arc<FeSpace>, field: &dyn ScalarField) -> Result<FeFunction> {
    space.interpolate_scalar(field)
}

pub fn interpolate_vector(space: &Arc<FeSpace>, field: &dyn VectorField) -> Result<FeFunction> {
    space.interpolate_vector(field)
}

pub use crate::local::MemberEntity;
