//! Exact polynomial algebra up to total degree two.
//!
//! Every shape function used in this crate lives in `P_2`, so basis members
//! are stored as coefficient tables over the ten monomials in `x - c` for a
//! cell-local center `c`. Values, gradients, curls and the (constant)
//! gradient of the curl are then exact, which keeps assembly quadrature exact
//! for polynomial integrands.

use nalgebra::{Matrix3, Point3, Vector3};

/// Exponent triples of the monomial basis `1, x, y, z, x^2, xy, xz, y^2, yz, z^2`.
pub const MONOMIALS: [(usize, usize, usize); 10] = [
    (0, 0, 0),
    (1, 0, 0),
    (0, 1, 0),
    (0, 0, 1),
    (2, 0, 0),
    (1, 1, 0),
    (1, 0, 1),
    (0, 2, 0),
    (0, 1, 1),
    (0, 0, 2),
];

fn monomial_index(e: (usize, usize, usize)) -> usize {
    MONOMIALS
        .iter()
        .position(|m| *m == e)
        .expect("monomial degree exceeds two")
}

/// Scalar polynomial of total degree at most two, centered at `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarPoly {
    pub coeffs: [f64; 10],
    pub center: Point3<f64>,
}

impl ScalarPoly {
    pub fn zero(center: Point3<f64>) -> Self {
        ScalarPoly {
            coeffs: [0.0; 10],
            center,
        }
    }

    pub fn constant(value: f64, center: Point3<f64>) -> Self {
        let mut p = Self::zero(center);
        p.coeffs[0] = value;
        p
    }

    /// `value_at_center + g . (x - center)`.
    pub fn affine(value_at_center: f64, g: Vector3<f64>, center: Point3<f64>) -> Self {
        let mut p = Self::zero(center);
        p.coeffs[0] = value_at_center;
        p.coeffs[1] = g.x;
        p.coeffs[2] = g.y;
        p.coeffs[3] = g.z;
        p
    }

    pub fn degree(&self) -> usize {
        let mut deg = 0;
        for (c, (a, b, g)) in self.coeffs.iter().zip(MONOMIALS.iter()) {
            if *c != 0.0 {
                deg = deg.max(a + b + g);
            }
        }
        deg
    }

    pub fn eval(&self, p: &Point3<f64>) -> f64 {
        let y = p - self.center;
        let c = &self.coeffs;
        c[0] + c[1] * y.x
            + c[2] * y.y
            + c[3] * y.z
            + c[4] * y.x * y.x
            + c[5] * y.x * y.y
            + c[6] * y.x * y.z
            + c[7] * y.y * y.y
            + c[8] * y.y * y.z
            + c[9] * y.z * y.z
    }

    pub fn gradient_at(&self, p: &Point3<f64>) -> Vector3<f64> {
        let y = p - self.center;
        let c = &self.coeffs;
        Vector3::new(
            c[1] + 2.0 * c[4] * y.x + c[5] * y.y + c[6] * y.z,
            c[2] + c[5] * y.x + 2.0 * c[7] * y.y + c[8] * y.z,
            c[3] + c[6] * y.x + c[8] * y.y + 2.0 * c[9] * y.z,
        )
    }

    /// Partial derivative along axis `axis` (0, 1, 2), one degree lower.
    pub fn derivative(&self, axis: usize) -> ScalarPoly {
        let c = &self.coeffs;
        let mut d = ScalarPoly::zero(self.center);
        match axis {
            0 => {
                d.coeffs[0] = c[1];
                d.coeffs[1] = 2.0 * c[4];
                d.coeffs[2] = c[5];
                d.coeffs[3] = c[6];
            }
            1 => {
                d.coeffs[0] = c[2];
                d.coeffs[1] = c[5];
                d.coeffs[2] = 2.0 * c[7];
                d.coeffs[3] = c[8];
            }
            2 => {
                d.coeffs[0] = c[3];
                d.coeffs[1] = c[6];
                d.coeffs[2] = c[8];
                d.coeffs[3] = 2.0 * c[9];
            }
            _ => unreachable!(),
        }
        d
    }

    pub fn gradient(&self) -> VectorPoly {
        VectorPoly {
            comp: [
                self.derivative(0).coeffs,
                self.derivative(1).coeffs,
                self.derivative(2).coeffs,
            ],
            center: self.center,
        }
    }

    /// Exact product; panics if the result would exceed degree two.
    pub fn mul(&self, other: &ScalarPoly) -> ScalarPoly {
        assert_eq!(self.center, other.center, "center mismatch");
        assert!(
            self.degree() + other.degree() <= 2,
            "product exceeds degree two"
        );
        let mut out = ScalarPoly::zero(self.center);
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.coeffs.iter().enumerate() {
                if b == 0.0 {
                    continue;
                }
                let (e1, e2) = (MONOMIALS[i], MONOMIALS[j]);
                let e = (e1.0 + e2.0, e1.1 + e2.1, e1.2 + e2.2);
                out.coeffs[monomial_index(e)] += a * b;
            }
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        for c in &mut self.coeffs {
            *c *= s;
        }
    }

    pub fn add_scaled(&mut self, other: &ScalarPoly, s: f64) {
        debug_assert_eq!(self.center, other.center);
        for (a, b) in self.coeffs.iter_mut().zip(other.coeffs.iter()) {
            *a += s * b;
        }
    }
}

/// Vector polynomial of total degree at most two, centered at `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorPoly {
    pub comp: [[f64; 10]; 3],
    pub center: Point3<f64>,
}

impl VectorPoly {
    pub fn zero(center: Point3<f64>) -> Self {
        VectorPoly {
            comp: [[0.0; 10]; 3],
            center,
        }
    }

    pub fn constant(v: Vector3<f64>, center: Point3<f64>) -> Self {
        let mut p = Self::zero(center);
        for i in 0..3 {
            p.comp[i][0] = v[i];
        }
        p
    }

    /// The field `x -> m (x - center)`.
    pub fn from_linear_map(m: &Matrix3<f64>, center: Point3<f64>) -> Self {
        let mut p = Self::zero(center);
        for i in 0..3 {
            p.comp[i][1] = m[(i, 0)];
            p.comp[i][2] = m[(i, 1)];
            p.comp[i][3] = m[(i, 2)];
        }
        p
    }

    pub fn from_components(c: [ScalarPoly; 3]) -> Self {
        let center = c[0].center;
        debug_assert!(c.iter().all(|p| p.center == center));
        VectorPoly {
            comp: [c[0].coeffs, c[1].coeffs, c[2].coeffs],
            center,
        }
    }

    pub fn component(&self, i: usize) -> ScalarPoly {
        ScalarPoly {
            coeffs: self.comp[i],
            center: self.center,
        }
    }

    pub fn degree(&self) -> usize {
        (0..3).map(|i| self.component(i).degree()).max().unwrap()
    }

    pub fn eval(&self, p: &Point3<f64>) -> Vector3<f64> {
        Vector3::new(
            self.component(0).eval(p),
            self.component(1).eval(p),
            self.component(2).eval(p),
        )
    }

    /// Jacobian `J_ij = d v_i / d x_j`.
    pub fn jacobian_at(&self, p: &Point3<f64>) -> Matrix3<f64> {
        let mut m = Matrix3::zeros();
        for i in 0..3 {
            let g = self.component(i).gradient_at(p);
            for j in 0..3 {
                m[(i, j)] = g[j];
            }
        }
        m
    }

    pub fn divergence(&self) -> ScalarPoly {
        let mut d = self.component(0).derivative(0);
        d.add_scaled(&self.component(1).derivative(1), 1.0);
        d.add_scaled(&self.component(2).derivative(2), 1.0);
        d
    }

    pub fn curl(&self) -> VectorPoly {
        let (c0, c1, c2) = (self.component(0), self.component(1), self.component(2));
        let mut x = c2.derivative(1);
        x.add_scaled(&c1.derivative(2), -1.0);
        let mut y = c0.derivative(2);
        y.add_scaled(&c2.derivative(0), -1.0);
        let mut z = c1.derivative(0);
        z.add_scaled(&c0.derivative(1), -1.0);
        VectorPoly::from_components([x, y, z])
    }

    /// Jacobian of the curl. Constant whenever the field has degree `<= 2`.
    pub fn grad_curl(&self) -> Matrix3<f64> {
        self.curl().jacobian_at(&self.center)
    }

    /// The field `x -> (x - center) x q(x)` for `q` of degree at most one.
    pub fn position_cross(q: &VectorPoly) -> VectorPoly {
        assert!(q.degree() <= 1, "cross factor must be affine");
        let center = q.center;
        let y = |axis: usize| ScalarPoly::affine(0.0, Vector3::ith_axis(axis).into_inner(), center);
        let qc = |i: usize| q.component(i);
        let x = y(1).mul(&qc(2));
        let x2 = y(2).mul(&qc(1));
        let yy = y(2).mul(&qc(0));
        let y2 = y(0).mul(&qc(2));
        let z = y(0).mul(&qc(1));
        let z2 = y(1).mul(&qc(0));
        let mut cx = x;
        cx.add_scaled(&x2, -1.0);
        let mut cy = yy;
        cy.add_scaled(&y2, -1.0);
        let mut cz = z;
        cz.add_scaled(&z2, -1.0);
        VectorPoly::from_components([cx, cy, cz])
    }

    /// Componentwise product with a scalar polynomial.
    pub fn mul_scalar(&self, s: &ScalarPoly) -> VectorPoly {
        VectorPoly::from_components([
            self.component(0).mul(s),
            self.component(1).mul(s),
            self.component(2).mul(s),
        ])
    }

    pub fn scale(&mut self, s: f64) {
        for comp in &mut self.comp {
            for c in comp.iter_mut() {
                *c *= s;
            }
        }
    }

    pub fn add_scaled(&mut self, other: &VectorPoly, s: f64) {
        debug_assert_eq!(self.center, other.center);
        for (a, b) in self.comp.iter_mut().zip(other.comp.iter()) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += s * y;
            }
        }
    }

    /// Re-centers the polynomial without changing the represented function.
    pub fn recenter(&self, new_center: Point3<f64>) -> VectorPoly {
        let d = self.center - new_center;
        let mut out = VectorPoly::zero(new_center);
        for i in 0..3 {
            out.comp[i] = recenter_coeffs(&self.comp[i], &d);
        }
        out
    }
}

// Expands p(y - d) over monomials in y, where y = x - new_center.
fn recenter_coeffs(c: &[f64; 10], d: &Vector3<f64>) -> [f64; 10] {
    let mut out = [0.0; 10];
    let dxyz = [-d.x, -d.y, -d.z];
    for (i, &coef) in c.iter().enumerate() {
        if coef == 0.0 {
            continue;
        }
        let (a, b, g) = MONOMIALS[i];
        // (y_0 + s_0)^a (y_1 + s_1)^b (y_2 + s_2)^g with s = -d... here s = dxyz.
        let expand = |e: usize, s: f64| -> Vec<(usize, f64)> {
            match e {
                0 => vec![(0, 1.0)],
                1 => vec![(1, 1.0), (0, s)],
                2 => vec![(2, 1.0), (1, 2.0 * s), (0, s * s)],
                _ => unreachable!(),
            }
        };
        for (ea, ca) in expand(a, dxyz[0]) {
            for (eb, cb) in expand(b, dxyz[1]) {
                for (eg, cg) in expand(g, dxyz[2]) {
                    out[monomial_index((ea, eb, eg))] += coef * ca * cb * cg;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn center() -> Point3<f64> {
        Point3::new(0.3, -0.2, 0.1)
    }

    #[test]
    fn eval_and_gradient_match_closed_form() {
        let mut p = ScalarPoly::zero(center());
        // 2 + x - 3z + x^2 + 2yz (in shifted coordinates)
        p.coeffs[0] = 2.0;
        p.coeffs[1] = 1.0;
        p.coeffs[3] = -3.0;
        p.coeffs[4] = 1.0;
        p.coeffs[8] = 2.0;
        let x = Point3::new(1.0, 2.0, 3.0);
        let y = x - center();
        let want = 2.0 + y.x - 3.0 * y.z + y.x * y.x + 2.0 * y.y * y.z;
        assert!((p.eval(&x) - want).abs() < 1e-14);
        let g = p.gradient_at(&x);
        assert!((g - Vector3::new(1.0 + 2.0 * y.x, 2.0 * y.z, -3.0 + 2.0 * y.y)).norm() < 1e-14);
    }

    #[test]
    fn curl_of_gradient_vanishes() {
        let mut p = ScalarPoly::zero(center());
        for (i, c) in p.coeffs.iter_mut().enumerate() {
            *c = (i as f64 + 1.0) * 0.37;
        }
        let curl = p.gradient().curl();
        assert!(curl.comp.iter().flatten().all(|c| c.abs() < 1e-14));
    }

    #[test]
    fn divergence_of_curl_vanishes() {
        let mut v = VectorPoly::zero(center());
        let mut s = 0.11;
        for comp in &mut v.comp {
            for c in comp.iter_mut() {
                *c = s;
                s = (s * 7.3).sin();
            }
        }
        let div = v.curl().divergence();
        assert!(div.coeffs.iter().all(|c| c.abs() < 1e-13));
    }

    #[test]
    fn position_cross_matches_pointwise() {
        let q = VectorPoly::from_linear_map(
            &Matrix3::new(1.0, 2.0, 0.0, -1.0, 0.5, 3.0, 0.0, 1.0, -2.0),
            center(),
        );
        let pc = VectorPoly::position_cross(&q);
        let x = Point3::new(0.9, 0.4, -0.7);
        let y = x - center();
        let want = y.cross(&q.eval(&x));
        assert!((pc.eval(&x) - want).norm() < 1e-14);
        assert_eq!(pc.degree(), 2);
    }

    #[test]
    fn grad_curl_constant_for_quadratics() {
        let mut v = VectorPoly::zero(center());
        v.comp[0][5] = 2.0; // xy
        v.comp[1][9] = -1.0; // z^2
        v.comp[2][4] = 0.5; // x^2
        let g = v.grad_curl();
        for p in [Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, -1.0, 2.0)] {
            let j = v.curl().jacobian_at(&p);
            assert!((g - j).norm() < 1e-14);
        }
    }

    #[test]
    fn recenter_preserves_values() {
        let mut v = VectorPoly::zero(center());
        let mut s: f64 = 0.41;
        for comp in &mut v.comp {
            for c in comp.iter_mut() {
                *c = s.cos();
                s += 1.0;
            }
        }
        let moved = v.recenter(Point3::new(-1.0, 0.5, 2.0));
        for p in [Point3::new(0.2, 0.8, -0.3), Point3::new(1.5, -0.5, 0.0)] {
            assert!((v.eval(&p) - moved.eval(&p)).norm() < 1e-12);
        }
    }
}
