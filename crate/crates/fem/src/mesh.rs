//! Tetrahedral meshes of the unit cube with globally consistent entity tables.
//!
//! Each cube of an `n x n x n` grid is split into the six tetrahedra that
//! share its main diagonal, one per ordering of the three axes. Edges and
//! faces are global entities, stored once as vertex tuples sorted by vertex
//! id and numbered lexicographically, so two builds with the same `n` produce
//! identical tables. Orientation conventions:
//!
//! * an edge points from its lower to its higher vertex id;
//! * a face normal follows the right-hand rule over its ascending-id
//!   vertex ordering.
//!
//! DOFs attached to shared entities are single-valued under these
//! conventions without any per-pair negotiation.

use crate::{FemError, Result};
use nalgebra::{Point3, Vector3};
use std::collections::HashMap;

/// Local edges of a tetrahedron as pairs of local vertex indices.
pub const LOCAL_EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Local faces, `FACE_VERTICES[l]` lists the local vertices of the face
/// opposite local vertex `l`.
pub const FACE_VERTICES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

/// A conforming tetrahedral mesh.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point3<f64>>,
    cells: Vec<[usize; 4]>,
    edges: Vec<[usize; 2]>,
    faces: Vec<[usize; 3]>,
    cell_edges: Vec<[usize; 6]>,
    cell_faces: Vec<[usize; 4]>,
    face_cells: Vec<(usize, Option<usize>)>,
}

/// Boundary membership masks for every entity class.
#[derive(Debug, Clone)]
pub struct BoundaryInfo {
    pub vertex: Vec<bool>,
    pub edge: Vec<bool>,
    pub face: Vec<bool>,
}

impl BoundaryInfo {
    pub fn num_interior_vertices(&self) -> usize {
        self.vertex.iter().filter(|b| !**b).count()
    }
    pub fn num_interior_edges(&self) -> usize {
        self.edge.iter().filter(|b| !**b).count()
    }
    pub fn num_interior_faces(&self) -> usize {
        self.face.iter().filter(|b| !**b).count()
    }
}

impl Mesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }
    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }
    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn vertex(&self, v: usize) -> &Point3<f64> {
        &self.vertices[v]
    }
    pub fn cell(&self, c: usize) -> &[usize; 4] {
        &self.cells[c]
    }
    pub fn edge(&self, e: usize) -> &[usize; 2] {
        &self.edges[e]
    }
    pub fn face(&self, f: usize) -> &[usize; 3] {
        &self.faces[f]
    }
    pub fn cell_edges(&self, c: usize) -> &[usize; 6] {
        &self.cell_edges[c]
    }
    pub fn cell_faces(&self, c: usize) -> &[usize; 4] {
        &self.cell_faces[c]
    }
    /// Cells adjacent to a face (one for boundary faces, two for interior).
    pub fn face_cells(&self, f: usize) -> (usize, Option<usize>) {
        self.face_cells[f]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        (self.vertices[b] - self.vertices[a]).norm()
    }

    /// Unit tangent of an edge, pointing from the lower to the higher vertex id.
    pub fn edge_tangent(&self, e: usize) -> Vector3<f64> {
        let [a, b] = self.edges[e];
        (self.vertices[b] - self.vertices[a]).normalize()
    }

    pub fn edge_points(&self, e: usize) -> [Point3<f64>; 2] {
        let [a, b] = self.edges[e];
        [self.vertices[a], self.vertices[b]]
    }

    pub fn face_points(&self, f: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [pa, pb, pc] = self.face_points(f);
        0.5 * (pb - pa).cross(&(pc - pa)).norm()
    }

    /// Unit normal of a face under the ascending-id right-hand rule.
    pub fn face_normal(&self, f: usize) -> Vector3<f64> {
        let [pa, pb, pc] = self.face_points(f);
        (pb - pa).cross(&(pc - pa)).normalize()
    }
}

/// Builds the six-tetrahedra-per-cube triangulation of `(0,1)^3` with `n`
/// subdivisions per axis. Rejects `n = 0`.
pub fn build_uniform_cube_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(FemError::ZeroSubdivisions);
    }
    let np = n + 1;
    let vid = |i: usize, j: usize, k: usize| i + np * (j + np * k);
    let h = 1.0 / n as f64;

    // Filled x-fastest so that vertex `vid(i, j, k)` sits at index `vid(i, j, k)`.
    let mut vertices = Vec::with_capacity(np * np * np);
    for k in 0..np {
        for j in 0..np {
            for i in 0..np {
                vertices.push(Point3::new(i as f64 * h, j as f64 * h, k as f64 * h));
            }
        }
    }

    // Axis orderings of the six tetrahedra sharing the cube diagonal,
    // paired with the permutation parity.
    const AXIS_ORDERS: [([usize; 3], bool); 6] = [
        ([0, 1, 2], true),
        ([0, 2, 1], false),
        ([1, 0, 2], false),
        ([1, 2, 0], true),
        ([2, 0, 1], true),
        ([2, 1, 0], false),
    ];

    let mut cells = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                for (axes, even) in AXIS_ORDERS {
                    let mut corner = [i, j, k];
                    let mut tet = [vid(corner[0], corner[1], corner[2]), 0, 0, 0];
                    for (step, &ax) in axes.iter().enumerate() {
                        corner[ax] += 1;
                        tet[step + 1] = vid(corner[0], corner[1], corner[2]);
                    }
                    if !even {
                        tet.swap(2, 3);
                    }
                    cells.push(tet);
                }
            }
        }
    }

    build_from_cells(vertices, cells)
}

fn build_from_cells(vertices: Vec<Point3<f64>>, cells: Vec<[usize; 4]>) -> Result<Mesh> {
    let mut edges: Vec<[usize; 2]> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for cell in &cells {
        for (a, b) in LOCAL_EDGES {
            let mut e = [cell[a], cell[b]];
            e.sort_unstable();
            edges.push(e);
        }
        for fv in FACE_VERTICES {
            let mut f = [cell[fv[0]], cell[fv[1]], cell[fv[2]]];
            f.sort_unstable();
            faces.push(f);
        }
    }
    edges.sort_unstable();
    edges.dedup();
    faces.sort_unstable();
    faces.dedup();

    let edge_index: HashMap<[usize; 2], usize> =
        edges.iter().enumerate().map(|(i, e)| (*e, i)).collect();
    let face_index: HashMap<[usize; 3], usize> =
        faces.iter().enumerate().map(|(i, f)| (*f, i)).collect();

    let mut cell_edges = Vec::with_capacity(cells.len());
    let mut cell_faces = Vec::with_capacity(cells.len());
    let mut face_cells: Vec<(usize, Option<usize>)> = vec![(usize::MAX, None); faces.len()];
    for (c, cell) in cells.iter().enumerate() {
        let mut ce = [0usize; 6];
        for (le, (a, b)) in LOCAL_EDGES.iter().enumerate() {
            let mut e = [cell[*a], cell[*b]];
            e.sort_unstable();
            ce[le] = edge_index[&e];
        }
        cell_edges.push(ce);
        let mut cf = [0usize; 4];
        for (lf, fv) in FACE_VERTICES.iter().enumerate() {
            let mut f = [cell[fv[0]], cell[fv[1]], cell[fv[2]]];
            f.sort_unstable();
            let id = face_index[&f];
            cf[lf] = id;
            let slot = &mut face_cells[id];
            if slot.0 == usize::MAX {
                slot.0 = c;
            } else {
                debug_assert!(slot.1.is_none(), "face shared by more than two cells");
                slot.1 = Some(c);
            }
        }
        cell_faces.push(cf);
    }

    let mesh = Mesh {
        vertices,
        cells,
        edges,
        faces,
        cell_edges,
        cell_faces,
        face_cells,
    };
    // Fail fast on inverted cells; downstream geometry assumes positive volume.
    for c in 0..mesh.num_cells() {
        cell_geometry(&mesh, c)?;
    }
    Ok(mesh)
}

/// Boundary classification: a face is boundary iff it has one adjacent cell;
/// edges and vertices inherit membership from their faces.
pub fn classify_boundary(mesh: &Mesh) -> BoundaryInfo {
    let mut info = BoundaryInfo {
        vertex: vec![false; mesh.num_vertices()],
        edge: vec![false; mesh.num_edges()],
        face: vec![false; mesh.num_faces()],
    };
    let mut edge_index: HashMap<[usize; 2], usize> = HashMap::new();
    for (i, e) in mesh.edges.iter().enumerate() {
        edge_index.insert(*e, i);
    }
    for f in 0..mesh.num_faces() {
        if mesh.face_cells(f).1.is_none() {
            info.face[f] = true;
            let [a, b, c] = *mesh.face(f);
            for v in [a, b, c] {
                info.vertex[v] = true;
            }
            for mut pair in [[a, b], [a, c], [b, c]] {
                pair.sort_unstable();
                info.edge[edge_index[&pair]] = true;
            }
        }
    }
    info
}

/// Edge of a cell with its global orientation data.
#[derive(Debug, Clone, Copy)]
pub struct CellEdge {
    pub global_id: usize,
    /// Local tail/head indices: the tail carries the smaller global vertex id.
    pub locals: (usize, usize),
    /// Unit tangent in the global (lower id to higher id) direction.
    pub tangent: Vector3<f64>,
    pub length: f64,
    /// `+1` when the local index order agrees with the global direction.
    pub sign: f64,
}

/// Face of a cell with its global orientation data.
#[derive(Debug, Clone, Copy)]
pub struct CellFace {
    pub global_id: usize,
    /// Local index of the vertex opposite this face.
    pub opposite: usize,
    /// Local vertex indices sorted by ascending global vertex id.
    pub locals: [usize; 3],
    /// Unit normal under the global ascending-id right-hand rule.
    pub normal: Vector3<f64>,
    pub area: f64,
    /// `+1` when `normal` points out of this cell.
    pub outward: f64,
}

/// Affine geometry of one tetrahedron.
#[derive(Debug, Clone)]
pub struct CellGeometry {
    pub cell: usize,
    pub vertex_ids: [usize; 4],
    pub verts: [Point3<f64>; 4],
    /// Gradients of the barycentric coordinates.
    pub grads: [Vector3<f64>; 4],
    pub volume: f64,
    pub barycenter: Point3<f64>,
    pub edges: [CellEdge; 6],
    pub faces: [CellFace; 4],
}

impl CellGeometry {
    /// Geometry of a standalone tetrahedron; entity ids are the local indices
    /// and global orientations coincide with the local vertex order.
    pub fn from_vertices(verts: [Point3<f64>; 4]) -> Result<CellGeometry> {
        geometry_impl(0, [0, 1, 2, 3], verts, [0, 1, 2, 3, 4, 5], [0, 1, 2, 3])
    }

    /// Barycentric coordinates of a physical point.
    pub fn barycentric(&self, p: &Point3<f64>) -> [f64; 4] {
        let mut b = [0.0; 4];
        for i in 0..4 {
            b[i] = self.lambda(i, p);
        }
        b
    }

    /// Value of the barycentric coordinate `i` at `p`.
    pub fn lambda(&self, i: usize, p: &Point3<f64>) -> f64 {
        // lambda_i is affine with lambda_i(barycenter) = 1/4.
        0.25 + self.grads[i].dot(&(p - self.barycenter))
    }

    pub fn point_from_barycentric(&self, b: &[f64; 4]) -> Point3<f64> {
        let mut x = Vector3::zeros();
        for i in 0..4 {
            x += b[i] * self.verts[i].coords;
        }
        Point3::from(x)
    }

    /// In-plane outward normal of edge `le` within face `lf` and the induced
    /// tangent `t = n_F x n_{F,e}`.
    pub fn face_edge_frame(&self, lf: usize, le: usize) -> (Vector3<f64>, Vector3<f64>) {
        let face = &self.faces[lf];
        let (i, j) = LOCAL_EDGES[le];
        debug_assert!(FACE_VERTICES[lf].contains(&i) && FACE_VERTICES[lf].contains(&j));
        let other = FACE_VERTICES[lf]
            .into_iter()
            .find(|v| *v != i && *v != j)
            .unwrap();
        let mid = Point3::from(0.5 * (self.verts[i].coords + self.verts[j].coords));
        let t_edge = (self.verts[j] - self.verts[i]).normalize();
        let mut n_fe = t_edge.cross(&face.normal);
        if n_fe.dot(&(self.verts[other] - mid)) > 0.0 {
            n_fe = -n_fe;
        }
        (n_fe, face.normal.cross(&n_fe))
    }
}

/// Computes the affine geometry of cell `cell`, with orientation data tied to
/// the mesh-global conventions.
pub fn cell_geometry(mesh: &Mesh, cell: usize) -> Result<CellGeometry> {
    if cell >= mesh.num_cells() {
        return Err(FemError::InvalidCell(cell));
    }
    let ids = *mesh.cell(cell);
    let verts = [
        mesh.vertices[ids[0]],
        mesh.vertices[ids[1]],
        mesh.vertices[ids[2]],
        mesh.vertices[ids[3]],
    ];
    geometry_impl(
        cell,
        ids,
        verts,
        *mesh.cell_edges(cell),
        *mesh.cell_faces(cell),
    )
}

fn geometry_impl(
    cell: usize,
    vertex_ids: [usize; 4],
    verts: [Point3<f64>; 4],
    edge_ids: [usize; 6],
    face_ids: [usize; 4],
) -> Result<CellGeometry> {
    let d1 = verts[1] - verts[0];
    let d2 = verts[2] - verts[0];
    let d3 = verts[3] - verts[0];
    let det = d1.dot(&d2.cross(&d3));
    let volume = det / 6.0;
    if !(volume > 1e-300) || !volume.is_finite() {
        return Err(FemError::DegenerateCell { cell, volume });
    }

    // Rows of the inverse Jacobian are the gradients of lambda_1..3.
    let g1 = d2.cross(&d3) / det;
    let g2 = d3.cross(&d1) / det;
    let g3 = d1.cross(&d2) / det;
    let grads = [-(g1 + g2 + g3), g1, g2, g3];

    let barycenter = Point3::from(
        0.25 * (verts[0].coords + verts[1].coords + verts[2].coords + verts[3].coords),
    );

    let mut edges = [CellEdge {
        global_id: 0,
        locals: (0, 0),
        tangent: Vector3::zeros(),
        length: 0.0,
        sign: 1.0,
    }; 6];
    for (le, (i, j)) in LOCAL_EDGES.iter().enumerate() {
        let (tail, head) = if vertex_ids[*i] < vertex_ids[*j] {
            (*i, *j)
        } else {
            (*j, *i)
        };
        let d = verts[head] - verts[tail];
        edges[le] = CellEdge {
            global_id: edge_ids[le],
            locals: (tail, head),
            tangent: d.normalize(),
            length: d.norm(),
            sign: if tail == *i { 1.0 } else { -1.0 },
        };
    }

    let mut faces = [CellFace {
        global_id: 0,
        opposite: 0,
        locals: [0; 3],
        normal: Vector3::zeros(),
        area: 0.0,
        outward: 1.0,
    }; 4];
    for lf in 0..4 {
        let mut locals = FACE_VERTICES[lf];
        locals.sort_unstable_by_key(|v| vertex_ids[*v]);
        let [a, b, c] = locals;
        let cross = (verts[b] - verts[a]).cross(&(verts[c] - verts[a]));
        let area = 0.5 * cross.norm();
        let normal = cross.normalize();
        // The gradient of the opposite barycentric coordinate points inward.
        let outward = if normal.dot(&grads[lf]) < 0.0 { 1.0 } else { -1.0 };
        faces[lf] = CellFace {
            global_id: face_ids[lf],
            opposite: lf,
            locals,
            normal,
            area,
            outward,
        };
    }

    Ok(CellGeometry {
        cell,
        vertex_ids,
        verts,
        grads,
        volume,
        barycenter,
        edges,
        faces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference_tet() -> CellGeometry {
        CellGeometry::from_vertices([
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_zero_subdivisions() {
        assert!(matches!(
            build_uniform_cube_mesh(0),
            Err(FemError::ZeroSubdivisions)
        ));
    }

    #[test]
    fn unit_mesh_entity_counts() {
        // Frozen by enumerating the six-tet split of one cube: 12 cube edges,
        // 6 face diagonals and the body diagonal; 2 triangles per cube face
        // plus 6 diagonal-plane triangles.
        let mesh = build_uniform_cube_mesh(1).unwrap();
        assert_eq!(mesh.num_vertices(), 8);
        assert_eq!(mesh.num_edges(), 19);
        assert_eq!(mesh.num_faces(), 18);
        assert_eq!(mesh.num_cells(), 6);
    }

    #[test]
    fn two_cube_entity_counts() {
        // 54 axis edges + 36 face diagonals + 8 body diagonals = 98,
        // faces then fixed by the Euler count.
        let mesh = build_uniform_cube_mesh(2).unwrap();
        assert_eq!(mesh.num_vertices(), 27);
        assert_eq!(mesh.num_edges(), 98);
        assert_eq!(mesh.num_faces(), 120);
        assert_eq!(mesh.num_cells(), 48);
    }

    #[test]
    fn euler_formula_and_adjacency() {
        for n in 1..=4 {
            let mesh = build_uniform_cube_mesh(n).unwrap();
            let euler = mesh.num_vertices() as i64 - mesh.num_edges() as i64
                + mesh.num_faces() as i64
                - mesh.num_cells() as i64;
            assert_eq!(euler, 1, "n = {n}");
            for f in 0..mesh.num_faces() {
                let (c0, _) = mesh.face_cells(f);
                assert!(c0 != usize::MAX);
            }
        }
    }

    #[test]
    fn uniform_cell_volumes() {
        for n in [1, 2, 3] {
            let mesh = build_uniform_cube_mesh(n).unwrap();
            let expected = 1.0 / (6.0 * (n * n * n) as f64);
            for c in 0..mesh.num_cells() {
                let g = cell_geometry(&mesh, c).unwrap();
                assert!((g.volume - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn boundary_classification_unit_mesh() {
        let mesh = build_uniform_cube_mesh(1).unwrap();
        let info = classify_boundary(&mesh);
        let bdry_edges = info.edge.iter().filter(|b| **b).count();
        let bdry_faces = info.face.iter().filter(|b| **b).count();
        assert_eq!(bdry_edges, 18);
        assert_eq!(info.num_interior_edges(), 1);
        assert_eq!(bdry_faces, 12);
        assert_eq!(info.num_interior_faces(), 6);
        assert!(info.vertex.iter().all(|b| *b));
        for f in 0..mesh.num_faces() {
            if info.face[f] {
                assert!(mesh.face_cells(f).1.is_none());
            } else {
                assert!(mesh.face_cells(f).1.is_some());
            }
        }
        // The single interior edge is the cube diagonal.
        let int_edge = (0..mesh.num_edges()).find(|e| !info.edge[*e]).unwrap();
        assert_eq!(*mesh.edge(int_edge), [0, 7]);
    }

    #[test]
    fn reference_tet_geometry() {
        let g = reference_tet();
        assert!((g.volume - 1.0 / 6.0).abs() < 1e-15);
        assert!((g.barycenter - Point3::new(0.25, 0.25, 0.25)).norm() < 1e-15);
        assert!((g.grads[0] - Vector3::new(-1.0, -1.0, -1.0)).norm() < 1e-14);
        let sum: Vector3<f64> = g.grads.iter().sum();
        assert!(sum.norm() < 1e-14);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g.lambda(i, &g.verts[j]) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn orientation_coherence_across_interior_faces() {
        let mesh = build_uniform_cube_mesh(2).unwrap();
        for f in 0..mesh.num_faces() {
            let (c0, c1) = mesh.face_cells(f);
            let Some(c1) = c1 else { continue };
            let g0 = cell_geometry(&mesh, c0).unwrap();
            let g1 = cell_geometry(&mesh, c1).unwrap();
            let f0 = g0.faces.iter().find(|cf| cf.global_id == f).unwrap();
            let f1 = g1.faces.iter().find(|cf| cf.global_id == f).unwrap();
            // Both sides store the same global normal and opposite outward signs.
            assert!((f0.normal - f1.normal).norm() < 1e-14);
            assert!((f0.normal - mesh.face_normal(f)).norm() < 1e-14);
            assert_eq!(f0.outward, -f1.outward);
            let out0 = f0.outward * f0.normal;
            let out1 = f1.outward * f1.normal;
            assert!((out0 + out1).norm() < 1e-14);
        }
    }

    #[test]
    fn edge_orientation_signs_match_tangents() {
        let mesh = build_uniform_cube_mesh(2).unwrap();
        for c in 0..mesh.num_cells() {
            let g = cell_geometry(&mesh, c).unwrap();
            for (le, ce) in g.edges.iter().enumerate() {
                assert!((ce.tangent - mesh.edge_tangent(ce.global_id)).norm() < 1e-14);
                let (i, j) = LOCAL_EDGES[le];
                let local_dir = (g.verts[j] - g.verts[i]).normalize();
                assert!((local_dir - ce.sign * ce.tangent).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn face_edge_frame_identity() {
        let g = reference_tet();
        for lf in 0..4 {
            for (le, (i, j)) in LOCAL_EDGES.iter().enumerate() {
                if !(FACE_VERTICES[lf].contains(i) && FACE_VERTICES[lf].contains(j)) {
                    continue;
                }
                let (n_fe, t_fe) = g.face_edge_frame(lf, le);
                let n = g.faces[lf].normal;
                assert!(n_fe.dot(&n).abs() < 1e-14, "in-plane");
                assert!((t_fe - n.cross(&n_fe)).norm() < 1e-14);
                // t_fe runs along the edge.
                let t_edge = (g.verts[*j] - g.verts[*i]).normalize();
                assert!(t_fe.cross(&t_edge).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn determinism() {
        let a = build_uniform_cube_mesh(3).unwrap();
        let b = build_uniform_cube_mesh(3).unwrap();
        assert_eq!(a.cells, b.cells);
        assert_eq!(a.edges, b.edges);
        assert_eq!(a.faces, b.faces);
    }

    #[test]
    fn degenerate_cell_is_an_error() {
        let flat = CellGeometry::from_vertices([
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.5, 0.5, 0.0),
        ]);
        assert!(matches!(flat, Err(FemError::DegenerateCell { .. })));
    }

    proptest! {
        #[test]
        fn interior_faces_have_two_cells(n in 1usize..=3) {
            let mesh = build_uniform_cube_mesh(n).unwrap();
            let info = classify_boundary(&mesh);
            for f in 0..mesh.num_faces() {
                let (_, c1) = mesh.face_cells(f);
                prop_assert_eq!(info.face[f], c1.is_none());
            }
        }
    }
}
