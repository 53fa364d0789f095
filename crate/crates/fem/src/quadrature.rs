//! Quadrature rules on the reference segment, triangle and tetrahedron.
//!
//! Rules are conical products of Gauss-Jacobi formulas (Duffy substitution),
//! so a rule of requested degree `d` uses `ceil((d+1)/2)` points per collapsed
//! direction and is exact for all polynomials of total degree `<= d`. Points
//! are stored as barycentric coordinates and weights sum to the reference
//! measure (1 for the segment on [0,1], 1/2 for the triangle, 1/6 for the
//! tetrahedron), so one rule serves every affine image of the reference
//! simplex after scaling by the measure ratio.

use crate::{FemError, Result};
use nalgebra::{DMatrix, Point3, SymmetricEigen, Vector3};
use std::sync::OnceLock;

/// Largest supported polynomial exactness degree.
pub const MAX_DEGREE: usize = 20;

static RULE_CACHE: [[OnceLock<QuadratureRule>; MAX_DEGREE + 1]; 3] =
    [const { [const { OnceLock::new() }; MAX_DEGREE + 1] }; 3];

/// Shared, lazily built rule; cheaper than [`simplex_rule`] in per-cell loops.
pub fn cached_rule(dim: usize, degree: usize) -> Result<&'static QuadratureRule> {
    if !(1..=3).contains(&dim) || degree > MAX_DEGREE {
        return Err(FemError::UnsupportedQuadrature { dim, degree });
    }
    Ok(RULE_CACHE[dim - 1][degree].get_or_init(|| simplex_rule(dim, degree).unwrap()))
}

/// Quadrature points and weights on a reference simplex.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    dim: usize,
    /// Barycentric coordinates, `dim + 1` entries per point.
    points: Vec<[f64; 4]>,
    weights: Vec<f64>,
    exactness_degree: usize,
}

impl QuadratureRule {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn exactness_degree(&self) -> usize {
        self.exactness_degree
    }

    /// Barycentric coordinates of point `i` (entries past `dim + 1` are zero).
    pub fn point(&self, i: usize) -> &[f64; 4] {
        &self.points[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Measure of the reference simplex of this dimension.
    pub fn reference_measure(&self) -> f64 {
        reference_measure(self.dim)
    }

    /// Integrates `f` (given barycentric coordinates) over the reference simplex.
    pub fn integrate_reference<F: FnMut(&[f64; 4]) -> f64>(&self, mut f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .sum()
    }

    /// Integrates `f` over the simplex spanned by `verts`, where `f` receives
    /// the physical point. `measure` is the length/area/volume of the simplex.
    pub fn integrate<F: FnMut(&Point3<f64>) -> f64>(
        &self,
        verts: &[Point3<f64>],
        measure: f64,
        mut f: F,
    ) -> f64 {
        debug_assert_eq!(verts.len(), self.dim + 1);
        let scale = measure / self.reference_measure();
        let mut acc = 0.0;
        for (p, w) in self.points.iter().zip(&self.weights) {
            let x = barycentric_to_point(verts, p);
            acc += w * scale * f(&x);
        }
        acc
    }

    /// Physical points of the rule on the simplex spanned by `verts`.
    pub fn mapped_points(&self, verts: &[Point3<f64>]) -> Vec<Point3<f64>> {
        self.points
            .iter()
            .map(|p| barycentric_to_point(verts, p))
            .collect()
    }
}

/// Affine map from barycentric coordinates to the physical simplex.
pub fn barycentric_to_point(verts: &[Point3<f64>], bary: &[f64; 4]) -> Point3<f64> {
    let mut x = Vector3::zeros();
    for (v, b) in verts.iter().zip(bary.iter()) {
        x += *b * v.coords;
    }
    Point3::from(x)
}

pub fn reference_measure(dim: usize) -> f64 {
    match dim {
        1 => 1.0,
        2 => 0.5,
        3 => 1.0 / 6.0,
        _ => unreachable!("simplex dimension out of range"),
    }
}

/// Builds a rule on the reference simplex of dimension `dim` (1, 2 or 3) that
/// is exact for polynomials of total degree `<= degree`.
pub fn simplex_rule(dim: usize, degree: usize) -> Result<QuadratureRule> {
    if !(1..=3).contains(&dim) || degree > MAX_DEGREE {
        return Err(FemError::UnsupportedQuadrature { dim, degree });
    }
    let m = degree / 2 + 1; // Gauss with m points is exact to degree 2m - 1
    let (mut points, mut weights) = (Vec::new(), Vec::new());
    match dim {
        1 => {
            let (x, w) = gauss_jacobi_01(m, 0);
            for i in 0..m {
                points.push([1.0 - x[i], x[i], 0.0, 0.0]);
                weights.push(w[i]);
            }
        }
        2 => {
            // x = u, y = v (1 - u); Jacobian (1 - u).
            let (u, wu) = gauss_jacobi_01(m, 1);
            let (v, wv) = gauss_jacobi_01(m, 0);
            for i in 0..m {
                for j in 0..m {
                    let x = u[i];
                    let y = v[j] * (1.0 - u[i]);
                    points.push([1.0 - x - y, x, y, 0.0]);
                    weights.push(wu[i] * wv[j]);
                }
            }
        }
        3 => {
            // x = u, y = v (1 - u), z = w (1 - u)(1 - v); Jacobian (1-u)^2 (1-v).
            let (u, wu) = gauss_jacobi_01(m, 2);
            let (v, wv) = gauss_jacobi_01(m, 1);
            let (t, wt) = gauss_jacobi_01(m, 0);
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        let x = u[i];
                        let y = v[j] * (1.0 - u[i]);
                        let z = t[k] * (1.0 - u[i]) * (1.0 - v[j]);
                        points.push([1.0 - x - y - z, x, y, z]);
                        weights.push(wu[i] * wv[j] * wt[k]);
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    Ok(QuadratureRule {
        dim,
        points,
        weights,
        exactness_degree: 2 * m - 1,
    })
}

/// Gauss-Jacobi nodes/weights on [0,1] for the weight `(1-x)^alpha`, via
/// Golub-Welsch on the symmetric Jacobi recurrence matrix.
fn gauss_jacobi_01(m: usize, alpha: usize) -> (Vec<f64>, Vec<f64>) {
    let a = alpha as f64;
    // Recurrence coefficients of monic Jacobi polynomials on [-1,1], beta = 0.
    let mut diag = vec![0.0; m];
    let mut off = vec![0.0; m.saturating_sub(1)];
    for n in 0..m {
        let nf = n as f64;
        let denom = (2.0 * nf + a) * (2.0 * nf + a + 2.0);
        diag[n] = if denom == 0.0 {
            -a / (a + 2.0)
        } else {
            -(a * a) / denom
        };
        if n + 1 < m {
            let k = (n + 1) as f64;
            let num = 4.0 * k * (k + a) * (k + a) * k;
            let den = (2.0 * k + a).powi(2) * (2.0 * k + a + 1.0) * (2.0 * k + a - 1.0);
            off[n] = (num / den).sqrt();
        }
    }
    let mut j = DMatrix::zeros(m, m);
    for i in 0..m {
        j[(i, i)] = diag[i];
        if i + 1 < m {
            j[(i, i + 1)] = off[i];
            j[(i + 1, i)] = off[i];
        }
    }
    let eig = SymmetricEigen::new(j);
    // mu0 = integral of (1-x)^alpha over [-1,1]
    let mu0 = 2f64.powf(a + 1.0) / (a + 1.0);
    let mut nodes: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let x = eig.eigenvalues[i];
            let w = mu0 * eig.eigenvectors[(0, i)].powi(2);
            (x, w)
        })
        .collect();
    nodes.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    // Map [-1,1] with weight (1-x)^a onto [0,1] with weight (1-t)^a:
    // t = (x+1)/2, dx = 2 dt, (1-x)^a = (2(1-t))^a.
    let scale = 2f64.powf(-(a + 1.0));
    let xs = nodes.iter().map(|p| 0.5 * (p.0 + 1.0)).collect();
    let ws = nodes.iter().map(|p| p.1 * scale).collect();
    (xs, ws)
}
