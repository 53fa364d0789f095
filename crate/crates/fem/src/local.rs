//! Per-cell shape spaces, degrees of freedom and dual bases.
//!
//! The `W` families are the nonconforming spaces
//! `W_k(K) = grad P_{k+1}(K) + (x - x_K) x P_1(K; R^3)` for `k = 0, 1`
//! (14 and 20 members). Their DOFs are tangential edge moments against
//! `P_k(e)` plus, per face, the two tangential components of the face
//! integral of `(curl v) x n`. The `k = 0` dual basis is closed-form; the
//! `k = 1` dual basis is obtained by inverting the DOF matrix over a
//! generator set of the shape space.
//!
//! All orientation-sensitive data (edge tangents, face normals, the two
//! designated face vertices fixing the tangential frame) is taken from the
//! mesh-global conventions recorded in [`CellGeometry`], so DOFs shared by
//! neighboring cells are single-valued with no extra sign bookkeeping.
//!
//! Auxiliary families round out the discrete complexes: continuous Lagrange
//! (degrees 1 and 2), the face-mean nonconforming linear element (vector
//! valued), piecewise constants, tangential edge elements and the lowest
//! order face-flux element.

use crate::field::{ScalarField, VectorField};
use crate::mesh::{CellGeometry, LOCAL_EDGES};
use crate::poly::{ScalarPoly, VectorPoly};
use crate::quadrature::cached_rule;
use crate::{FemError, Result};
use nalgebra::{DMatrix, Matrix3, Point3, Vector3};

/// Element families available per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Nonconforming grad-curl family, `k = 0` or `1`.
    W(usize),
    /// Continuous Lagrange of degree 1 or 2.
    Lagrange(usize),
    /// Vector-valued nonconforming linear element with face-mean DOFs.
    CrouzeixRaviart,
    /// Piecewise constants.
    P0,
    /// Tangential edge element of the discrete de Rham complex, `k = 0` or `1`.
    Nedelec(usize),
    /// Lowest-order face-flux element.
    Rt0,
}

impl Family {
    pub fn dim(&self) -> usize {
        match self {
            Family::W(k) => 6 * (k + 1) + 8,
            Family::Lagrange(1) => 4,
            Family::Lagrange(_) => 10,
            Family::CrouzeixRaviart => 12,
            Family::P0 => 1,
            Family::Nedelec(k) => 6 * (k + 1),
            Family::Rt0 => 4,
        }
    }

    pub fn is_vector_valued(&self) -> bool {
        matches!(
            self,
            Family::W(_) | Family::CrouzeixRaviart | Family::Nedelec(_) | Family::Rt0
        )
    }
}

/// Which cell entity a basis member (equivalently, a DOF) is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemberEntity {
    Vertex(usize),
    Edge { local: usize, moment: usize },
    Face { local: usize, index: usize },
    Cell { index: usize },
}

enum MemberFunc {
    Scalar {
        value: ScalarPoly,
        gradient: VectorPoly,
    },
    Vector {
        value: VectorPoly,
        curl: VectorPoly,
        grad_curl: Matrix3<f64>,
    },
}

pub struct Member {
    pub entity: MemberEntity,
    func: MemberFunc,
}

/// A dual basis on one cell: `dof_i(member_j) = delta_ij` for the family's
/// DOF set in the same ordering.
pub struct LocalBasis {
    pub family: Family,
    members: Vec<Member>,
}

impl LocalBasis {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn entity(&self, i: usize) -> MemberEntity {
        self.members[i].entity
    }

    pub fn value_vector(&self, i: usize, p: &Point3<f64>) -> Vector3<f64> {
        match &self.members[i].func {
            MemberFunc::Vector { value, .. } => value.eval(p),
            MemberFunc::Scalar { .. } => panic!("scalar member"),
        }
    }

    pub fn value_scalar(&self, i: usize, p: &Point3<f64>) -> f64 {
        match &self.members[i].func {
            MemberFunc::Scalar { value, .. } => value.eval(p),
            MemberFunc::Vector { .. } => panic!("vector member"),
        }
    }

    pub fn curl_at(&self, i: usize, p: &Point3<f64>) -> Vector3<f64> {
        match &self.members[i].func {
            MemberFunc::Vector { curl, .. } => curl.eval(p),
            MemberFunc::Scalar { .. } => panic!("scalar member"),
        }
    }

    pub fn grad_curl(&self, i: usize) -> Matrix3<f64> {
        match &self.members[i].func {
            MemberFunc::Vector { grad_curl, .. } => *grad_curl,
            MemberFunc::Scalar { .. } => panic!("scalar member"),
        }
    }

    pub fn gradient_at(&self, i: usize, p: &Point3<f64>) -> Vector3<f64> {
        match &self.members[i].func {
            MemberFunc::Scalar { gradient, .. } => gradient.eval(p),
            MemberFunc::Vector { .. } => panic!("vector member"),
        }
    }

    pub fn jacobian_at(&self, i: usize, p: &Point3<f64>) -> Matrix3<f64> {
        match &self.members[i].func {
            MemberFunc::Vector { value, .. } => value.jacobian_at(p),
            MemberFunc::Scalar { .. } => panic!("scalar member"),
        }
    }

    pub fn divergence_at(&self, i: usize, p: &Point3<f64>) -> f64 {
        match &self.members[i].func {
            MemberFunc::Vector { value, .. } => value.divergence().eval(p),
            MemberFunc::Scalar { .. } => panic!("scalar member"),
        }
    }

    /// The member as a polynomial vector field (vector families only).
    pub fn vector_poly(&self, i: usize) -> &VectorPoly {
        match &self.members[i].func {
            MemberFunc::Vector { value, .. } => value,
            MemberFunc::Scalar { .. } => panic!("scalar member"),
        }
    }

    pub fn scalar_poly(&self, i: usize) -> &ScalarPoly {
        match &self.members[i].func {
            MemberFunc::Scalar { value, .. } => value,
            MemberFunc::Vector { .. } => panic!("vector member"),
        }
    }
}

fn vector_member(entity: MemberEntity, value: VectorPoly) -> Member {
    let curl = value.curl();
    let grad_curl = curl.jacobian_at(&value.center);
    Member {
        entity,
        func: MemberFunc::Vector {
            value,
            curl,
            grad_curl,
        },
    }
}

fn scalar_member(entity: MemberEntity, value: ScalarPoly) -> Member {
    let gradient = value.gradient();
    Member {
        entity,
        func: MemberFunc::Scalar { value, gradient },
    }
}

/// One DOF functional with all geometric data baked in.
#[derive(Debug, Clone)]
pub enum LocalDof {
    /// Scalar point value.
    PointValue(Point3<f64>),
    /// Mean value over the cell.
    CellMean {
        verts: [Point3<f64>; 4],
        volume: f64,
    },
    /// Mean of one Cartesian component over a face.
    FaceMeanComponent {
        pts: [Point3<f64>; 3],
        area: f64,
        comp: usize,
    },
    /// `int_e (v . t) q_m ds` with the global unit tangent; `q_0 = 1`,
    /// `q_1 = 2s - 1` in the arclength parameter from the tail vertex.
    EdgeMoment {
        pts: [Point3<f64>; 2],
        tangent: Vector3<f64>,
        length: f64,
        moment: usize,
    },
    /// `int_F v . n ds` with the global unit normal.
    FaceFlux {
        pts: [Point3<f64>; 3],
        area: f64,
        normal: Vector3<f64>,
    },
    /// `c int_F (curl v) . d ds`; `d` is the in-plane direction fixing one of
    /// the two tangential components of the face curl integral.
    FaceCurlMoment {
        pts: [Point3<f64>; 3],
        area: f64,
        direction: Vector3<f64>,
        normalization: f64,
    },
}

impl LocalDof {
    pub fn apply_scalar(&self, field: &dyn ScalarField) -> f64 {
        match self {
            LocalDof::PointValue(p) => field.eval(p),
            LocalDof::CellMean { verts, volume } => {
                let rule = cached_rule(3, 2).unwrap();
                rule.integrate(verts, *volume, |p| field.eval(p)) / volume
            }
            _ => panic!("vector DOF applied to scalar field"),
        }
    }

    pub fn apply_vector(&self, field: &dyn VectorField) -> f64 {
        match self {
            LocalDof::FaceMeanComponent { pts, area, comp } => {
                let rule = cached_rule(2, 2).unwrap();
                rule.integrate(pts, *area, |p| field.eval(p)[*comp]) / area
            }
            LocalDof::EdgeMoment {
                pts,
                tangent,
                length,
                moment,
            } => {
                let rule = cached_rule(1, 2 + moment).unwrap();
                let scale = length / rule.reference_measure();
                let mut acc = 0.0;
                for i in 0..rule.len() {
                    let b = rule.point(i);
                    let s = b[1];
                    let x = Point3::from((1.0 - s) * pts[0].coords + s * pts[1].coords);
                    let q = if *moment == 0 { 1.0 } else { 2.0 * s - 1.0 };
                    acc += rule.weight(i) * scale * field.eval(&x).dot(tangent) * q;
                }
                acc
            }
            LocalDof::FaceFlux { pts, area, normal } => {
                let rule = cached_rule(2, 2).unwrap();
                rule.integrate(pts, *area, |p| field.eval(p).dot(normal))
            }
            LocalDof::FaceCurlMoment {
                pts,
                area,
                direction,
                normalization,
            } => {
                let rule = cached_rule(2, 3).unwrap();
                normalization * rule.integrate(pts, *area, |p| field.curl(p).dot(direction))
            }
            LocalDof::PointValue(_) | LocalDof::CellMean { .. } => {
                panic!("scalar DOF applied to vector field")
            }
        }
    }
}

/// Ordered DOF values of one cell (edge moments first, then face moments for
/// the `W` families).
#[derive(Debug, Clone)]
pub struct DofValues {
    pub values: Vec<f64>,
}

/// In-plane gradients of the three face barycentric coordinates, intrinsic to
/// the face (cell independent).
pub fn face_tangential_gradients(pts: &[Point3<f64>; 3], n: &Vector3<f64>) -> [Vector3<f64>; 3] {
    let mut out = [Vector3::zeros(); 3];
    for i in 0..3 {
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        let w = n.cross(&(pts[k] - pts[j]));
        out[i] = w / w.dot(&(pts[i] - pts[j]));
    }
    out
}

/// The DOF set of a family on one cell, ordered like the basis members.
pub fn local_dof_set(family: Family, geom: &CellGeometry) -> Vec<LocalDof> {
    let mut dofs = Vec::with_capacity(family.dim());
    match family {
        Family::W(k) => {
            for ce in &geom.edges {
                let pts = [geom.verts[ce.locals.0], geom.verts[ce.locals.1]];
                for moment in 0..=k {
                    dofs.push(LocalDof::EdgeMoment {
                        pts,
                        tangent: ce.tangent,
                        length: ce.length,
                        moment,
                    });
                }
            }
            for cf in &geom.faces {
                let pts = [
                    geom.verts[cf.locals[0]],
                    geom.verts[cf.locals[1]],
                    geom.verts[cf.locals[2]],
                ];
                let tg = face_tangential_gradients(&pts, &cf.normal);
                let denom = tg[0].cross(&tg[1]).dot(&cf.normal);
                dofs.push(LocalDof::FaceCurlMoment {
                    pts,
                    area: cf.area,
                    direction: tg[1],
                    normalization: 1.0 / (2.0 * cf.area * denom),
                });
                dofs.push(LocalDof::FaceCurlMoment {
                    pts,
                    area: cf.area,
                    direction: tg[0],
                    normalization: 1.0 / (2.0 * cf.area * -denom),
                });
            }
        }
        Family::Lagrange(1) => {
            for v in 0..4 {
                dofs.push(LocalDof::PointValue(geom.verts[v]));
            }
        }
        Family::Lagrange(_) => {
            for v in 0..4 {
                dofs.push(LocalDof::PointValue(geom.verts[v]));
            }
            for (i, j) in LOCAL_EDGES {
                let mid = Point3::from(0.5 * (geom.verts[i].coords + geom.verts[j].coords));
                dofs.push(LocalDof::PointValue(mid));
            }
        }
        Family::CrouzeixRaviart => {
            for cf in &geom.faces {
                let pts = [
                    geom.verts[cf.locals[0]],
                    geom.verts[cf.locals[1]],
                    geom.verts[cf.locals[2]],
                ];
                for comp in 0..3 {
                    dofs.push(LocalDof::FaceMeanComponent {
                        pts,
                        area: cf.area,
                        comp,
                    });
                }
            }
        }
        Family::P0 => {
            dofs.push(LocalDof::CellMean {
                verts: geom.verts,
                volume: geom.volume,
            });
        }
        Family::Nedelec(k) => {
            for ce in &geom.edges {
                let pts = [geom.verts[ce.locals.0], geom.verts[ce.locals.1]];
                for moment in 0..=k {
                    dofs.push(LocalDof::EdgeMoment {
                        pts,
                        tangent: ce.tangent,
                        length: ce.length,
                        moment,
                    });
                }
            }
        }
        Family::Rt0 => {
            for cf in &geom.faces {
                let pts = [
                    geom.verts[cf.locals[0]],
                    geom.verts[cf.locals[1]],
                    geom.verts[cf.locals[2]],
                ];
                dofs.push(LocalDof::FaceFlux {
                    pts,
                    area: cf.area,
                    normal: cf.normal,
                });
            }
        }
    }
    debug_assert_eq!(dofs.len(), family.dim());
    dofs
}

/// Applies the `W_k` DOF set to an analytic field, in member order.
pub fn local_dofs_w(k: usize, geom: &CellGeometry, field: &dyn VectorField) -> DofValues {
    let values = local_dof_set(Family::W(k), geom)
        .iter()
        .map(|d| d.apply_vector(field))
        .collect();
    DofValues { values }
}

/// Dual basis of the nonconforming grad-curl family.
pub fn w_basis(k: usize, geom: &CellGeometry) -> Result<LocalBasis> {
    match k {
        0 => Ok(w0_basis(geom)),
        1 => w1_basis(geom),
        _ => unreachable!("only k = 0, 1 are defined"),
    }
}

/// Face member of the closed-form `k = 0` basis: with `l` the vertex opposite
/// the face, `n` the face normal and `g` the barycentric gradient of the
/// designated vertex,
/// `phi = (8 lambda_l - 3)/4 (x - x_K) x (n x g) + ((x_l - x_K) . n)/4 g + n/16`.
fn w0_face_member(geom: &CellGeometry, lf: usize, designated: usize) -> VectorPoly {
    let xk = geom.barycenter;
    let n = geom.faces[lf].normal;
    let g = geom.grads[designated];
    let gl = geom.grads[lf];
    let w = n.cross(&g);
    let scal = ScalarPoly::affine(-1.0, 8.0 * gl, xk); // 8 lambda_l - 3
    let mut phi = VectorPoly::position_cross(&VectorPoly::constant(w, xk)).mul_scalar(&scal);
    phi.scale(0.25);
    let c = 0.25 * (geom.verts[lf] - xk).dot(&n);
    phi.add_scaled(&VectorPoly::constant(g, xk), c);
    phi.add_scaled(&VectorPoly::constant(n, xk), 1.0 / 16.0);
    phi
}

/// The tangential edge field `lambda_p grad lambda_q - lambda_q grad lambda_p`.
fn nedelec_edge_field(geom: &CellGeometry, p: usize, q: usize) -> VectorPoly {
    let xk = geom.barycenter;
    let lp = ScalarPoly::affine(0.25, geom.grads[p], xk);
    let lq = ScalarPoly::affine(0.25, geom.grads[q], xk);
    let mut v = VectorPoly::constant(geom.grads[q], xk).mul_scalar(&lp);
    v.add_scaled(&VectorPoly::constant(geom.grads[p], xk).mul_scalar(&lq), -1.0);
    v
}

fn w0_basis(geom: &CellGeometry) -> LocalBasis {
    let mut face_members: Vec<VectorPoly> = Vec::with_capacity(8);
    for lf in 0..4 {
        let [a, b, _] = geom.faces[lf].locals;
        face_members.push(w0_face_member(geom, lf, a));
        face_members.push(w0_face_member(geom, lf, b));
    }

    let mut members = Vec::with_capacity(14);
    for (le, ce) in geom.edges.iter().enumerate() {
        let (p, q) = ce.locals;
        let mut phi = nedelec_edge_field(geom, p, q);
        let cross = geom.grads[q].cross(&geom.grads[p]);
        for lf in 0..4 {
            let [a, b, _] = geom.faces[lf].locals;
            let n = geom.faces[lf].normal;
            let (ga, gb) = (geom.grads[a], geom.grads[b]);
            let c1 = cross.dot(&n.cross(&gb).cross(&n)) / ga.cross(&gb).dot(&n);
            let c2 = cross.dot(&n.cross(&ga).cross(&n)) / gb.cross(&ga).dot(&n);
            phi.add_scaled(&face_members[2 * lf], c1);
            phi.add_scaled(&face_members[2 * lf + 1], c2);
        }
        members.push(vector_member(
            MemberEntity::Edge {
                local: le,
                moment: 0,
            },
            phi,
        ));
    }
    for lf in 0..4 {
        for idx in 0..2 {
            members.push(vector_member(
                MemberEntity::Face { local: lf, index: idx },
                face_members[2 * lf + idx].clone(),
            ));
        }
    }
    LocalBasis {
        family: Family::W(0),
        members,
    }
}

/// Generator set of `W_1(K)`: gradients of the nine non-constant quadratic
/// monomials plus `(x - x_K) x q` for eleven affine `q` spanning a complement
/// of the radial direction.
fn w1_generators(geom: &CellGeometry) -> Vec<VectorPoly> {
    let xk = geom.barycenter;
    let mut gens = Vec::with_capacity(20);
    for idx in 1..10 {
        let mut s = ScalarPoly::zero(xk);
        s.coeffs[idx] = 1.0;
        gens.push(s.gradient());
    }
    for axis in 0..3 {
        let c = Vector3::ith_axis(axis).into_inner();
        gens.push(VectorPoly::position_cross(&VectorPoly::constant(c, xk)));
    }
    let mut mats = Vec::with_capacity(8);
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                let mut m = Matrix3::zeros();
                m[(i, j)] = 1.0;
                mats.push(m);
            }
        }
    }
    mats.push(Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, 0.0)));
    mats.push(Matrix3::from_diagonal(&Vector3::new(0.0, 1.0, -1.0)));
    for m in mats {
        gens.push(VectorPoly::position_cross(&VectorPoly::from_linear_map(
            &m, xk,
        )));
    }
    gens
}

fn basis_from_generators(
    family: Family,
    geom: &CellGeometry,
    generators: Vec<VectorPoly>,
    entities: Vec<MemberEntity>,
) -> Result<LocalBasis> {
    let dofs = local_dof_set(family, geom);
    let n = generators.len();
    debug_assert_eq!(dofs.len(), n);
    let mut m = DMatrix::zeros(n, n);
    for (j, gen) in generators.iter().enumerate() {
        for (i, dof) in dofs.iter().enumerate() {
            m[(i, j)] = dof.apply_vector(gen);
        }
    }
    let inv = m
        .try_inverse()
        .ok_or(FemError::SingularDofMatrix(geom.cell))?;
    let mut members = Vec::with_capacity(n);
    for (j, entity) in entities.into_iter().enumerate() {
        let mut phi = VectorPoly::zero(geom.barycenter);
        for (mrow, gen) in generators.iter().enumerate() {
            phi.add_scaled(gen, inv[(mrow, j)]);
        }
        members.push(vector_member(entity, phi));
    }
    Ok(LocalBasis { family, members })
}

fn w_entities(k: usize) -> Vec<MemberEntity> {
    let mut entities = Vec::new();
    for le in 0..6 {
        for moment in 0..=k {
            entities.push(MemberEntity::Edge { local: le, moment });
        }
    }
    for lf in 0..4 {
        for index in 0..2 {
            entities.push(MemberEntity::Face { local: lf, index });
        }
    }
    entities
}

fn w1_basis(geom: &CellGeometry) -> Result<LocalBasis> {
    basis_from_generators(Family::W(1), geom, w1_generators(geom), w_entities(1))
}

/// Dual basis of an auxiliary family (anything except the `W` families).
pub fn aux_basis(family: Family, geom: &CellGeometry) -> Result<LocalBasis> {
    let xk = geom.barycenter;
    match family {
        Family::W(k) => w_basis(k, geom),
        Family::Lagrange(1) => {
            let members = (0..4)
                .map(|v| {
                    scalar_member(
                        MemberEntity::Vertex(v),
                        ScalarPoly::affine(0.25, geom.grads[v], xk),
                    )
                })
                .collect();
            Ok(LocalBasis {
                family,
                members,
            })
        }
        Family::Lagrange(_) => {
            let lambda = |v: usize| ScalarPoly::affine(0.25, geom.grads[v], xk);
            let mut members = Vec::with_capacity(10);
            for v in 0..4 {
                // lambda (2 lambda - 1)
                let mut two = lambda(v);
                two.scale(2.0);
                two.coeffs[0] -= 1.0;
                members.push(scalar_member(MemberEntity::Vertex(v), lambda(v).mul(&two)));
            }
            for (le, (i, j)) in LOCAL_EDGES.iter().enumerate() {
                let mut b = lambda(*i).mul(&lambda(*j));
                b.scale(4.0);
                members.push(scalar_member(
                    MemberEntity::Edge {
                        local: le,
                        moment: 0,
                    },
                    b,
                ));
            }
            Ok(LocalBasis { family, members })
        }
        Family::CrouzeixRaviart => {
            let mut members = Vec::with_capacity(12);
            for lf in 0..4 {
                // 1 - 3 lambda_opposite has face mean 1 on this face, 0 elsewhere.
                let mut s = ScalarPoly::affine(0.25, geom.grads[lf], xk);
                s.scale(-3.0);
                s.coeffs[0] += 1.0;
                for comp in 0..3 {
                    let mut v = VectorPoly::zero(xk);
                    v.comp[comp] = s.coeffs;
                    members.push(vector_member(
                        MemberEntity::Face {
                            local: lf,
                            index: comp,
                        },
                        v,
                    ));
                }
            }
            Ok(LocalBasis { family, members })
        }
        Family::P0 => Ok(LocalBasis {
            family,
            members: vec![scalar_member(
                MemberEntity::Cell { index: 0 },
                ScalarPoly::constant(1.0, xk),
            )],
        }),
        Family::Nedelec(0) => {
            let members = geom
                .edges
                .iter()
                .enumerate()
                .map(|(le, ce)| {
                    let (p, q) = ce.locals;
                    vector_member(
                        MemberEntity::Edge {
                            local: le,
                            moment: 0,
                        },
                        nedelec_edge_field(geom, p, q),
                    )
                })
                .collect();
            Ok(LocalBasis { family, members })
        }
        Family::Nedelec(_) => {
            // Full P_1(R^3) with two tangential moments per edge.
            let mut gens = Vec::with_capacity(12);
            for axis in 0..3 {
                let c = Vector3::ith_axis(axis).into_inner();
                gens.push(VectorPoly::constant(c, xk));
                for dir in 0..3 {
                    let mut m = Matrix3::zeros();
                    m[(axis, dir)] = 1.0;
                    gens.push(VectorPoly::from_linear_map(&m, xk));
                }
            }
            let mut entities = Vec::new();
            for le in 0..6 {
                for moment in 0..2 {
                    entities.push(MemberEntity::Edge { local: le, moment });
                }
            }
            basis_from_generators(family, geom, gens, entities)
        }
        Family::Rt0 => {
            let mut members = Vec::with_capacity(4);
            for (lf, cf) in geom.faces.iter().enumerate() {
                let scale = cf.outward / (3.0 * geom.volume);
                let mut v = VectorPoly::from_linear_map(&(Matrix3::identity() * scale), xk);
                v.add_scaled(
                    &VectorPoly::constant((xk - geom.verts[lf]) * scale, xk),
                    1.0,
                );
                members.push(vector_member(
                    MemberEntity::Face {
                        local: lf,
                        index: 0,
                    },
                    v,
                ));
            }
            Ok(LocalBasis { family, members })
        }
    }
}

/// Closed-form Poincare operator on affine vector fields:
/// `K q (x) = -(x - x_K) x (q(x_K)/2 + J (x - x_K)/3)` with `J` the Jacobian
/// of `q`. Right inverse of the curl on the rotational part of the shape
/// space: `curl (K (curl v)) = curl v` on `W_k(K)`.
pub fn poincare_operator(geom: &CellGeometry, q: &VectorPoly) -> VectorPoly {
    assert!(q.degree() <= 1, "input must have affine components");
    let xk = geom.barycenter;
    let q0 = q.eval(&xk);
    let jac = q.jacobian_at(&xk);
    let mut inner = VectorPoly::from_linear_map(&(jac / 3.0), xk);
    inner.add_scaled(&VectorPoly::constant(q0 / 2.0, xk), 1.0);
    let mut out = VectorPoly::position_cross(&inner);
    out.scale(-1.0);
    out
}

/// Nonsingularity evidence for the `W_k` DOF set.
#[derive(Debug)]
pub struct UnisolvenceReport {
    /// DOFs applied to the raw generator set (not the dual basis).
    pub generator_matrix: DMatrix<f64>,
    pub det_magnitude: f64,
    /// 2-norm condition estimate of the generator matrix.
    pub condition: f64,
    /// Max deviation of the dual-basis DOF matrix from the identity.
    pub dual_deviation: f64,
    pub singular: bool,
}

/// Evaluates the DOF matrix on a generator set of `W_k(K)` and checks the
/// dual basis against the identity.
pub fn unisolvence_check(k: usize, geom: &CellGeometry) -> Result<UnisolvenceReport> {
    let gens = match k {
        0 => {
            let xk = geom.barycenter;
            let mut gens = Vec::with_capacity(14);
            for axis in 0..3 {
                gens.push(VectorPoly::constant(
                    Vector3::ith_axis(axis).into_inner(),
                    xk,
                ));
            }
            gens.extend(w1_generators(geom).into_iter().skip(9));
            gens
        }
        _ => w1_generators(geom),
    };
    let dofs = local_dof_set(Family::W(k), geom);
    let n = dofs.len();
    let mut m = DMatrix::zeros(n, n);
    for (j, gen) in gens.iter().enumerate() {
        for (i, dof) in dofs.iter().enumerate() {
            m[(i, j)] = dof.apply_vector(gen);
        }
    }
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let det_magnitude: f64 = svd.singular_values.iter().product();
    let singular = smin <= smax * 1e-12;
    let dual_deviation = if singular {
        f64::INFINITY
    } else {
        let basis = w_basis(k, geom)?;
        let mut dev: f64 = 0.0;
        for (i, dof) in dofs.iter().enumerate() {
            for j in 0..basis.len() {
                let val = dof.apply_vector(basis.vector_poly(j));
                let want = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((val - want).abs());
            }
        }
        dev
    };
    Ok(UnisolvenceReport {
        generator_matrix: m,
        det_magnitude,
        condition: smax / smin,
        dual_deviation,
        singular,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::VectorField;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference_tet() -> CellGeometry {
        CellGeometry::from_vertices([
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ])
        .unwrap()
    }

    pub(crate) fn random_tet(rng: &mut ChaCha8Rng) -> CellGeometry {
        loop {
            let mut v = [Point3::origin(); 4];
            for p in &mut v {
                *p = Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
            }
            let d1 = v[1] - v[0];
            let d2 = v[2] - v[0];
            let d3 = v[3] - v[0];
            let vol: f64 = d1.dot(&d2.cross(&d3)) / 6.0;
            if vol < 0.0 {
                v.swap(2, 3);
            }
            if vol.abs() > 0.02 {
                return CellGeometry::from_vertices(v).unwrap();
            }
        }
    }

    fn random_vector_poly(rng: &mut ChaCha8Rng, center: Point3<f64>) -> VectorPoly {
        let mut v = VectorPoly::zero(center);
        for comp in &mut v.comp {
            for c in comp.iter_mut() {
                *c = rng.random_range(-1.0..1.0);
            }
        }
        v
    }

    fn dof_identity_deviation(k: usize, geom: &CellGeometry) -> f64 {
        let basis = w_basis(k, geom).unwrap();
        let dofs = local_dof_set(Family::W(k), geom);
        let mut dev: f64 = 0.0;
        for (i, dof) in dofs.iter().enumerate() {
            for j in 0..basis.len() {
                let val = dof.apply_vector(basis.vector_poly(j));
                let want = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((val - want).abs());
            }
        }
        dev
    }

    #[test]
    fn w0_face_members_are_dual_on_reference_tet() {
        let geom = reference_tet();
        let dofs = local_dof_set(Family::W(0), &geom);
        let basis = w_basis(0, &geom).unwrap();
        // Face block starts after the six edge members.
        for lf in 0..4 {
            for idx in 0..2 {
                let member = basis.vector_poly(6 + 2 * lf + idx);
                for (i, dof) in dofs.iter().enumerate() {
                    let want = if i == 6 + 2 * lf + idx { 1.0 } else { 0.0 };
                    assert!(
                        (dof.apply_vector(member) - want).abs() < 1e-12,
                        "face ({lf},{idx}) against dof {i}"
                    );
                }
            }
        }
    }

    #[test]
    fn w0_face_member_curl_closed_form() {
        // curl phi = 2 (1 - 3 lambda_l) n x grad(lambda of designated vertex).
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let geom = random_tet(&mut rng);
            let basis = w_basis(0, &geom).unwrap();
            for lf in 0..4 {
                for idx in 0..2 {
                    let designated = geom.faces[lf].locals[idx];
                    let member = 6 + 2 * lf + idx;
                    for _ in 0..5 {
                        let b = [0.3, 0.25, 0.25, 0.2];
                        let p = geom.point_from_barycentric(&b);
                        let lam = geom.lambda(lf, &p);
                        let want = 2.0
                            * (1.0 - 3.0 * lam)
                            * geom.faces[lf].normal.cross(&geom.grads[designated]);
                        assert!((basis.curl_at(member, &p) - want).norm() < 1e-11);
                    }
                }
            }
        }
    }

    #[test]
    fn dof_duality_on_random_tets() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..25 {
            let geom = random_tet(&mut rng);
            assert!(dof_identity_deviation(0, &geom) < 1e-10);
            assert!(dof_identity_deviation(1, &geom) < 1e-10);
        }
    }

    #[test]
    fn aux_duality_on_random_tets() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..10 {
            let geom = random_tet(&mut rng);
            for family in [
                Family::Lagrange(1),
                Family::Lagrange(2),
                Family::CrouzeixRaviart,
                Family::P0,
                Family::Nedelec(0),
                Family::Nedelec(1),
                Family::Rt0,
            ] {
                let basis = aux_basis(family, &geom).unwrap();
                let dofs = local_dof_set(family, &geom);
                for (i, dof) in dofs.iter().enumerate() {
                    for j in 0..basis.len() {
                        let val = if family.is_vector_valued() {
                            dof.apply_vector(basis.vector_poly(j))
                        } else {
                            dof.apply_scalar(basis.scalar_poly(j))
                        };
                        let want = if i == j { 1.0 } else { 0.0 };
                        assert!(
                            (val - want).abs() < 1e-11,
                            "{family:?} dof {i} member {j}: {val}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn crouzeix_raviart_face_means() {
        let geom = reference_tet();
        let basis = aux_basis(Family::CrouzeixRaviart, &geom).unwrap();
        // Member (face 0, comp 0) is 1 - 3 lambda_0 in the x slot: mean 1 on
        // its own face, 0 on the rest.
        let dofs = local_dof_set(Family::CrouzeixRaviart, &geom);
        for lf in 0..4 {
            let val = dofs[3 * lf].apply_vector(basis.vector_poly(0));
            let want = if lf == 0 { 1.0 } else { 0.0 };
            assert!((val - want).abs() < 1e-13);
        }
    }

    #[test]
    fn nedelec_member_moment_and_rt_divergence() {
        let geom = reference_tet();
        let ned = aux_basis(Family::Nedelec(0), &geom).unwrap();
        let dofs = local_dof_set(Family::Nedelec(0), &geom);
        for (i, dof) in dofs.iter().enumerate() {
            for j in 0..6 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dof.apply_vector(ned.vector_poly(j)) - want).abs() < 1e-13);
            }
        }
        let rt = aux_basis(Family::Rt0, &geom).unwrap();
        for j in 0..4 {
            let d0 = rt.divergence_at(j, &geom.verts[0]);
            let d1 = rt.divergence_at(j, &geom.barycenter);
            assert!((d0 - d1).abs() < 1e-13, "divergence is constant");
        }
    }

    #[test]
    fn nedelec_contained_in_w() {
        // Re-expanding an edge-element member through the W DOFs reproduces it.
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for k in [0usize, 1] {
            let geom = random_tet(&mut rng);
            let ned = aux_basis(Family::Nedelec(k), &geom).unwrap();
            let w = w_basis(k, &geom).unwrap();
            for j in 0..ned.len() {
                let dofs = local_dofs_w(k, &geom, ned.vector_poly(j));
                for _ in 0..5 {
                    let b = [0.1, 0.2, 0.3, 0.4];
                    let p = geom.point_from_barycentric(&b);
                    let mut val = Vector3::zeros();
                    for (m, c) in dofs.values.iter().enumerate() {
                        val += *c * w.value_vector(m, &p);
                    }
                    assert!((val - ned.value_vector(j, &p)).norm() < 1e-10);
                }
            }
        }
    }

    struct CubicBubbleGradient {
        geom: CellGeometry,
    }
    impl VectorField for CubicBubbleGradient {
        fn eval(&self, p: &Point3<f64>) -> Vector3<f64> {
            // grad(l1 l2 l3) for a function vanishing on every edge.
            let g = &self.geom;
            let (l1, l2, l3) = (g.lambda(1, p), g.lambda(2, p), g.lambda(3, p));
            g.grads[1] * (l2 * l3) + g.grads[2] * (l1 * l3) + g.grads[3] * (l1 * l2)
        }
        fn curl(&self, _p: &Point3<f64>) -> Vector3<f64> {
            Vector3::zeros()
        }
    }

    #[test]
    fn gradient_fields_have_zero_face_dofs() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let geom = random_tet(&mut rng);
        // Gradient of a random quadratic: face DOFs vanish since curl grad = 0.
        let mut s = ScalarPoly::zero(geom.barycenter);
        for c in &mut s.coeffs {
            *c = rng.random_range(-1.0..1.0);
        }
        let grad = s.gradient();
        let dofs = local_dofs_w(0, &geom, &grad);
        for v in &dofs.values[6..] {
            assert!(v.abs() < 1e-13);
        }
        // A gradient of a function vanishing on all edges has zero edge DOFs.
        let field = CubicBubbleGradient { geom: geom.clone() };
        let dofs = local_dofs_w(1, &geom, &field);
        for v in &dofs.values[..12] {
            assert!(v.abs() < 1e-13, "edge moment {v}");
        }
    }

    #[test]
    fn constant_field_edge_moment() {
        let geom = reference_tet();
        let c = Vector3::new(0.3, -1.2, 0.7);
        let field = VectorPoly::constant(c, geom.barycenter);
        let dofs = local_dofs_w(0, &geom, &field);
        for (le, ce) in geom.edges.iter().enumerate() {
            let want = ce.length * c.dot(&ce.tangent);
            assert!((dofs.values[le] - want).abs() < 1e-13);
        }
    }

    #[test]
    fn poincare_closed_forms() {
        let geom = reference_tet();
        let xk = geom.barycenter;
        let c = Vector3::new(1.0, -2.0, 0.5);
        let kq = poincare_operator(&geom, &VectorPoly::constant(c, xk));
        let p = Point3::new(0.2, 0.1, 0.3);
        let want = -(p - xk).cross(&c) / 2.0;
        assert!((kq.eval(&p) - want).norm() < 1e-14);

        let m = Matrix3::new(1.0, 0.5, 0.0, -0.5, 2.0, 1.0, 0.0, 0.3, -1.0);
        let kq = poincare_operator(&geom, &VectorPoly::from_linear_map(&m, xk));
        let want = -(p - xk).cross(&(m * (p - xk))) / 3.0;
        assert!((kq.eval(&p) - want).norm() < 1e-14);
    }

    #[test]
    fn poincare_right_inverse_and_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        for k in [0usize, 1] {
            let geom = random_tet(&mut rng);
            let basis = w_basis(k, &geom).unwrap();
            // Random element of the shape space.
            let mut v = VectorPoly::zero(geom.barycenter);
            for j in 0..basis.len() {
                v.add_scaled(basis.vector_poly(j), rng.random_range(-1.0..1.0));
            }
            let curl_v = v.curl();
            let kc = poincare_operator(&geom, &curl_v);
            let back = kc.curl();
            let mut remainder = v.clone();
            remainder.add_scaled(&kc, -1.0);
            let rem_curl = remainder.curl();
            let rule = cached_rule(3, 4).unwrap();
            for i in 0..rule.len() {
                let p = geom.point_from_barycentric(rule.point(i));
                assert!((back.eval(&p) - curl_v.eval(&p)).norm() < 1e-12);
                assert!(rem_curl.eval(&p).norm() < 1e-12, "curl-free remainder");
            }
        }
    }

    #[test]
    fn unisolvence_reports() {
        let geom = reference_tet();
        for k in [0usize, 1] {
            let rep = unisolvence_check(k, &geom).unwrap();
            assert!(!rep.singular, "k = {k}");
            assert!(rep.det_magnitude > 0.0);
            assert!(rep.condition < 1e6);
            assert!(rep.dual_deviation < 1e-10);
            let n = 6 * (k + 1) + 8;
            assert_eq!(rep.generator_matrix.nrows(), n);
        }
    }

    #[test]
    fn shared_entity_dofs_are_single_valued() {
        // The same smooth field must produce identical DOF values from both
        // sides of every shared entity of a mesh.
        use crate::mesh::{build_uniform_cube_mesh, cell_geometry};
        let mesh = build_uniform_cube_mesh(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let field = random_vector_poly(&mut rng, Point3::new(0.5, 0.5, 0.5));
        for k in [0usize, 1] {
            let mut edge_vals: Vec<Vec<(usize, f64)>> = vec![Vec::new(); mesh.num_edges()];
            let mut face_vals: Vec<Vec<(usize, f64)>> = vec![Vec::new(); mesh.num_faces()];
            for c in 0..mesh.num_cells() {
                let geom = cell_geometry(&mesh, c).unwrap();
                let dofs = local_dofs_w(k, &geom, &field);
                for (le, ce) in geom.edges.iter().enumerate() {
                    for m in 0..=k {
                        edge_vals[ce.global_id].push((m, dofs.values[(k + 1) * le + m]));
                    }
                }
                for (lf, cf) in geom.faces.iter().enumerate() {
                    let base = 6 * (k + 1);
                    face_vals[cf.global_id].push((0, dofs.values[base + 2 * lf]));
                    face_vals[cf.global_id].push((1, dofs.values[base + 2 * lf + 1]));
                }
            }
            for vals in edge_vals.iter().chain(face_vals.iter()) {
                for m in [0usize, 1] {
                    let of_moment: Vec<f64> = vals
                        .iter()
                        .filter(|(mm, _)| *mm == m)
                        .map(|(_, v)| *v)
                        .collect();
                    for w in of_moment.windows(2) {
                        assert!(
                            (w[0] - w[1]).abs() < 1e-11,
                            "k={k} shared DOF disagrees: {} vs {}",
                            w[0],
                            w[1]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn norm_equivalence_interval_on_reference_tet() {
        // Ratio ||v||_0^2 / N(v) where N collects the squared edge projections
        // (scaled by h^2) and squared face means of (curl v) x n (scaled by
        // h^3), h = 1. The interval below was computed by the generalized
        // eigenvalue oracle on the reference tet and is re-derived here; the
        // frozen bounds guard against regressions in either path.
        for (k, frozen_min, frozen_max) in [(0usize, 4.7836e-4, 1.7045e-1), (1usize, 3.1945e-4, 5.5232e-1)] {
            let geom = reference_tet();
            let basis = w_basis(k, &geom).unwrap();
            let n = basis.len();
            let rule = cached_rule(3, 4).unwrap();
            let mut mass = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let mut acc = 0.0;
                    for qp in 0..rule.len() {
                        let p = geom.point_from_barycentric(rule.point(qp));
                        acc += rule.weight(qp)
                            * 6.0
                            * geom.volume
                            * basis.value_vector(i, &p).dot(&basis.value_vector(j, &p));
                    }
                    mass[(i, j)] = acc;
                    mass[(j, i)] = acc;
                }
            }
            // Edge projections against an orthonormal basis of P_k(e), plus
            // face means of (curl v) x n.
            let mut rows: Vec<Vec<f64>> = Vec::new();
            for ce in &geom.edges {
                let pts = [geom.verts[ce.locals.0], geom.verts[ce.locals.1]];
                let erule = cached_rule(1, 4).unwrap();
                for m in 0..=k {
                    let mut row = vec![0.0; n];
                    for (j, r) in row.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for qp in 0..erule.len() {
                            let s = erule.point(qp)[1];
                            let x =
                                Point3::from((1.0 - s) * pts[0].coords + s * pts[1].coords);
                            let q = if m == 0 {
                                1.0 / ce.length.sqrt()
                            } else {
                                (3.0 / ce.length).sqrt() * (2.0 * s - 1.0)
                            };
                            acc += erule.weight(qp)
                                * ce.length
                                * basis.value_vector(j, &x).dot(&ce.tangent)
                                * q;
                        }
                        *r = acc;
                    }
                    rows.push(row);
                }
            }
            for cf in &geom.faces {
                let pts = [
                    geom.verts[cf.locals[0]],
                    geom.verts[cf.locals[1]],
                    geom.verts[cf.locals[2]],
                ];
                let frule = cached_rule(2, 3).unwrap();
                for comp in 0..3 {
                    let mut row = vec![0.0; n];
                    for (j, r) in row.iter_mut().enumerate() {
                        let mean = frule.integrate(&pts, cf.area, |p| {
                            basis.curl_at(j, p).cross(&cf.normal)[comp]
                        }) / cf.area;
                        *r = mean * cf.area.sqrt();
                    }
                    rows.push(row);
                }
            }
            let mut nmat = DMatrix::zeros(n, n);
            for row in &rows {
                for i in 0..n {
                    for j in 0..n {
                        nmat[(i, j)] += row[i] * row[j];
                    }
                }
            }
            // Generalized eigenvalue oracle via Cholesky whitening.
            let chol = nmat.clone().cholesky().expect("N is positive definite");
            let li = chol.l().try_inverse().unwrap();
            let sym = &li * &mass * li.transpose();
            let eig = nalgebra::SymmetricEigen::new(sym);
            let lam_min = eig.eigenvalues.min();
            let lam_max = eig.eigenvalues.max();
            assert!(
                lam_min > frozen_min * 0.9 && lam_min < frozen_min * 1.1,
                "k={k}: lam_min {lam_min:.4e} vs frozen {frozen_min:.4e}"
            );
            assert!(
                lam_max > frozen_max * 0.9 && lam_max < frozen_max * 1.1,
                "k={k}: lam_max {lam_max:.4e} vs frozen {frozen_max:.4e}"
            );
            // Random members stay inside the frozen interval.
            let mut rng = ChaCha8Rng::seed_from_u64(48);
            for _ in 0..20 {
                let coeffs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let x = DMatrix::from_vec(n, 1, coeffs);
                let num = (x.transpose() * &mass * &x)[(0, 0)];
                let den = (x.transpose() * &nmat * &x)[(0, 0)];
                let ratio = num / den;
                assert!(ratio >= frozen_min * 0.9 && ratio <= frozen_max * 1.1);
            }
        }
    }
}
