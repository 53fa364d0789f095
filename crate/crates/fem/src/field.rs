//! Analytic field abstractions consumed by interpolation and error norms.

use crate::poly::{ScalarPoly, VectorPoly};
use nalgebra::{Matrix3, Point3, Vector3};

/// A scalar field smooth enough for nodal and mean-value DOFs.
pub trait ScalarField: Sync {
    fn eval(&self, p: &Point3<f64>) -> f64;
}

/// A vector field with an evaluable curl (needed by the tangential-moment
/// and face curl DOFs).
pub trait VectorField: Sync {
    fn eval(&self, p: &Point3<f64>) -> Vector3<f64>;
    fn curl(&self, p: &Point3<f64>) -> Vector3<f64>;
}

/// A vector field whose curl has an evaluable Jacobian, `J_ij = d(curl v)_i / dx_j`.
pub trait GradCurlField: VectorField {
    fn grad_curl(&self, p: &Point3<f64>) -> Matrix3<f64>;
}

impl ScalarField for ScalarPoly {
    fn eval(&self, p: &Point3<f64>) -> f64 {
        ScalarPoly::eval(self, p)
    }
}

impl VectorField for VectorPoly {
    fn eval(&self, p: &Point3<f64>) -> Vector3<f64> {
        VectorPoly::eval(self, p)
    }
    fn curl(&self, p: &Point3<f64>) -> Vector3<f64> {
        VectorPoly::curl(self).eval(p)
    }
}

impl GradCurlField for VectorPoly {
    fn grad_curl(&self, _p: &Point3<f64>) -> Matrix3<f64> {
        VectorPoly::grad_curl(self)
    }
}
