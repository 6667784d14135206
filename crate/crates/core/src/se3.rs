//! The special Euclidean algebra and group in the representation used for rod
//! shapes.
//!
//! A placement is the stacked state `(x, d3, d1, d2)`. An algebra element acts
//! on that stack through a 4x4 scalar matrix (tensored with the 3x3 identity),
//! whose first row carries the translation densities and whose lower-right
//! block is the skew rotation part. The group element produced by exponentiating
//! it is stored compactly as a body-frame rotation `R` and translation `t`:
//! the frame matrix `[d1 d2 d3]` is right-multiplied by `R` and the position is
//! advanced by `[d1 d2 d3] t`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{Matrix3, Matrix4, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::shape::Placement;

/// Below this rotation angle the exponential uses Taylor expansions of its
/// trigonometric coefficients.
pub const SMALL_ANGLE: f64 = 1e-4;

/// The derivative coefficients cancel much harder than the exponential ones,
/// so they switch to series at a larger angle (series carried through θ⁶).
const SMALL_ANGLE_DERIVATIVE: f64 = 5e-2;

/// The six strain densities of a Cosserat rod at one point.
///
/// `u` holds the differential rotations about `(d1, d2, d3)` (flexure, flexure,
/// twist) and `v` the differential translations along them (shear, shear,
/// stretch).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 6]", into = "[f64; 6]")]
pub struct StrainVector {
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl StrainVector {
    pub const ZERO: StrainVector = StrainVector {
        u: Vector3::new(0.0, 0.0, 0.0),
        v: Vector3::new(0.0, 0.0, 0.0),
    };

    pub fn new(u1: f64, u2: f64, u3: f64, v1: f64, v2: f64, v3: f64) -> Self {
        Self {
            u: Vector3::new(u1, u2, u3),
            v: Vector3::new(v1, v2, v3),
        }
    }

    /// Unstrained straight rod: `v3 = 1`, everything else zero.
    pub fn straight() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.u.x, self.u.y, self.u.z, self.v.x, self.v.y, self.v.z]
    }

    /// Component `k` in the order `(u1, u2, u3, v1, v2, v3)`, zero-based.
    pub fn component(&self, k: usize) -> f64 {
        if k < 3 {
            self.u[k]
        } else {
            self.v[k - 3]
        }
    }

    pub fn set_component(&mut self, k: usize, value: f64) {
        if k < 3 {
            self.u[k] = value;
        } else {
            self.v[k - 3] = value;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|c| c.is_finite())
    }

    /// Adjacent cross sections must not collapse onto each other.
    pub fn is_physical(&self) -> bool {
        self.is_finite() && self.v.z > 0.0
    }

    /// The se(3) bracket expressed in strain coordinates.
    pub fn bracket(&self, other: &StrainVector) -> StrainVector {
        StrainVector {
            u: self.u.cross(&other.u),
            v: self.u.cross(&other.v) - other.u.cross(&self.v),
        }
    }
}

impl From<[f64; 6]> for StrainVector {
    fn from(a: [f64; 6]) -> Self {
        Self::from_array(a)
    }
}

impl From<StrainVector> for [f64; 6] {
    fn from(s: StrainVector) -> Self {
        s.to_array()
    }
}

impl Add for StrainVector {
    type Output = StrainVector;
    fn add(self, rhs: StrainVector) -> StrainVector {
        StrainVector {
            u: self.u + rhs.u,
            v: self.v + rhs.v,
        }
    }
}

impl Sub for StrainVector {
    type Output = StrainVector;
    fn sub(self, rhs: StrainVector) -> StrainVector {
        StrainVector {
            u: self.u - rhs.u,
            v: self.v - rhs.v,
        }
    }
}

impl Mul<StrainVector> for f64 {
    type Output = StrainVector;
    fn mul(self, rhs: StrainVector) -> StrainVector {
        StrainVector {
            u: rhs.u * self,
            v: rhs.v * self,
        }
    }
}

/// The six generators, indexed in strain-component order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Generator {
    U1,
    U2,
    U3,
    V1,
    V2,
    V3,
}

impl Generator {
    pub const ALL: [Generator; 6] = [
        Generator::U1,
        Generator::U2,
        Generator::U3,
        Generator::V1,
        Generator::V2,
        Generator::V3,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn matrix(self) -> AlgebraMatrix {
        let mut s = StrainVector::ZERO;
        s.set_component(self.index(), 1.0);
        strain_to_algebra(&s)
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// An element of se(3) as a 4x4 matrix acting on the stacked rows
/// `(x, d3, d1, d2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlgebraMatrix(pub Matrix4<f64>);

impl AlgebraMatrix {
    pub fn zero() -> Self {
        AlgebraMatrix(Matrix4::zeros())
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    /// Reads the strain coordinates back off the matrix entries.
    pub fn to_strain(&self) -> StrainVector {
        let m = &self.0;
        StrainVector::new(m[(3, 1)], m[(1, 2)], m[(2, 3)], m[(0, 2)], m[(0, 3)], m[(0, 1)])
    }

    /// Distance (max-norm) from the span of the six generators.
    pub fn span_defect(&self) -> f64 {
        (self.0 - strain_to_algebra(&self.to_strain()).0).amax()
    }

    /// The 12x12 block operator: each scalar entry times the 3x3 identity.
    pub fn operator12(&self) -> SMatrix<f64, 12, 12> {
        kron_identity(&self.0)
    }
}

impl Add for AlgebraMatrix {
    type Output = AlgebraMatrix;
    fn add(self, rhs: AlgebraMatrix) -> AlgebraMatrix {
        AlgebraMatrix(self.0 + rhs.0)
    }
}

impl Mul<AlgebraMatrix> for f64 {
    type Output = AlgebraMatrix;
    fn mul(self, rhs: AlgebraMatrix) -> AlgebraMatrix {
        AlgebraMatrix(rhs.0 * self)
    }
}

fn kron_identity(m: &Matrix4<f64>) -> SMatrix<f64, 12, 12> {
    let mut out = SMatrix::<f64, 12, 12>::zeros();
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..3 {
                out[(3 * i + k, 3 * j + k)] = m[(i, j)];
            }
        }
    }
    out
}

/// `Σ u_i U_i + Σ v_i V_i`.
pub fn strain_to_algebra(s: &StrainVector) -> AlgebraMatrix {
    let (u, v) = (&s.u, &s.v);
    #[rustfmt::skip]
    let m = Matrix4::new(
        0.0, v.z,  v.x,  v.y,
        0.0, 0.0,  u.y, -u.x,
        0.0, -u.y, 0.0,  u.z,
        0.0, u.x, -u.z,  0.0,
    );
    AlgebraMatrix(m)
}

pub fn commutator(a: &AlgebraMatrix, b: &AlgebraMatrix) -> AlgebraMatrix {
    AlgebraMatrix(a.0 * b.0 - b.0 * a.0)
}

/// Skew matrix with `hat(w) * x == w × x`.
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Maps a body rotation/translation pair onto the 4x4 stacked-row matrix.
/// `affine` is 1 for group elements and 0 for their derivatives.
fn block_from_parts(r: &Matrix3<f64>, t: &Vector3<f64>, affine: f64) -> Matrix4<f64> {
    #[rustfmt::skip]
    let m = Matrix4::new(
        affine, t.z,         t.x,         t.y,
        0.0,    r[(2, 2)],   r[(0, 2)],   r[(1, 2)],
        0.0,    r[(2, 0)],   r[(0, 0)],   r[(1, 0)],
        0.0,    r[(2, 1)],   r[(0, 1)],   r[(1, 1)],
    );
    m
}

/// A rigid motion in SE(3), stored as body-frame rotation plus translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Propagator {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Propagator {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// `self` followed by `next` (further along the rod).
    pub fn then(&self, next: &Propagator) -> Propagator {
        Propagator {
            rotation: self.rotation * next.rotation,
            translation: self.translation + self.rotation * next.translation,
        }
    }

    pub fn inverse(&self) -> Propagator {
        let rt = self.rotation.transpose();
        Propagator {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply(&self, p: &Placement) -> Placement {
        Placement::from_parts_unchecked(p.x + p.frame * self.translation, p.frame * self.rotation)
    }

    /// Position of a body-frame point after the motion.
    pub fn transform_point(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.translation + self.rotation * local
    }

    /// 4x4 matrix acting on the stacked rows `(x, d3, d1, d2)`.
    pub fn to_block_matrix(&self) -> Matrix4<f64> {
        block_from_parts(&self.rotation, &self.translation, 1.0)
    }

    /// The full 12x12 operator on flattened placements.
    pub fn operator12(&self) -> SMatrix<f64, 12, 12> {
        kron_identity(&self.to_block_matrix())
    }

    /// `(‖RᵀR − I‖_∞, |det R − 1|)`.
    pub fn orthogonality_defect(&self) -> (f64, f64) {
        let r = &self.rotation;
        (
            (r.transpose() * r - Matrix3::identity()).amax(),
            (r.determinant() - 1.0).abs(),
        )
    }
}

/// Derivative of a propagator with respect to one scalar parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagatorDerivative {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl PropagatorDerivative {
    pub fn zero() -> Self {
        Self {
            rotation: Matrix3::zeros(),
            translation: Vector3::zeros(),
        }
    }

    pub fn to_block_matrix(&self) -> Matrix4<f64> {
        block_from_parts(&self.rotation, &self.translation, 0.0)
    }
}

/// Coefficients of the Rodrigues-type formulas,
/// `a = sinθ/θ`, `b = (1 − cosθ)/θ²`, `c = (θ − sinθ)/θ³`.
#[derive(Clone, Copy, Debug)]
struct Coefficients {
    a: f64,
    b: f64,
    c: f64,
}

impl Coefficients {
    fn at(theta: f64) -> Self {
        let t2 = theta * theta;
        if theta < SMALL_ANGLE {
            Self {
                a: 1.0 - t2 / 6.0 * (1.0 - t2 / 20.0),
                b: 0.5 - t2 / 24.0 * (1.0 - t2 / 30.0),
                c: 1.0 / 6.0 - t2 / 120.0 * (1.0 - t2 / 42.0),
            }
        } else {
            let s = theta.sin();
            let half = (0.5 * theta).sin();
            Self {
                a: s / theta,
                b: 2.0 * half * half / t2,
                c: (theta - s) / (t2 * theta),
            }
        }
    }
}

/// `(dA/dθ)/θ`, `(dB/dθ)/θ`, `(dC/dθ)/θ` for the coefficients above.
#[derive(Clone, Copy, Debug)]
struct CoefficientSlopes {
    a: f64,
    b: f64,
    c: f64,
}

impl CoefficientSlopes {
    fn at(theta: f64) -> Self {
        let t2 = theta * theta;
        if theta < SMALL_ANGLE_DERIVATIVE {
            Self {
                a: -1.0 / 3.0 + t2 * (1.0 / 30.0 + t2 * (-1.0 / 840.0 + t2 / 45_360.0)),
                b: -1.0 / 12.0 + t2 * (1.0 / 180.0 + t2 * (-1.0 / 6_720.0 + t2 / 453_600.0)),
                c: -1.0 / 60.0 + t2 * (1.0 / 1_260.0 + t2 * (-1.0 / 60_480.0 + t2 / 4_989_600.0)),
            }
        } else {
            let (s, co) = theta.sin_cos();
            let one_minus_cos = 2.0 * (0.5 * theta).sin().powi(2);
            Self {
                a: (theta * co - s) / (t2 * theta),
                b: (theta * s - 2.0 * one_minus_cos) / (t2 * t2),
                c: (theta * one_minus_cos - 3.0 * (theta - s)) / (t2 * t2 * theta),
            }
        }
    }
}

/// Exact exponential of `delta * strain_to_algebra(s)`.
pub fn exp_se3(s: &StrainVector, delta: f64) -> Propagator {
    let phi = s.u * delta;
    let rho = s.v * delta;
    let k = Coefficients::at(phi.norm());
    let w = hat(&phi);
    let w2 = w * w;
    let rotation = Matrix3::identity() + w * k.a + w2 * k.b;
    let left_jacobian = Matrix3::identity() + w * k.b + w2 * k.c;
    Propagator {
        rotation,
        translation: left_jacobian * rho,
    }
}

/// Derivatives of [`exp_se3`] with respect to all six strain components.
pub fn dexp_se3_all(s: &StrainVector, delta: f64) -> [PropagatorDerivative; 6] {
    let phi = s.u * delta;
    let rho = s.v * delta;
    let theta = phi.norm();
    let k = Coefficients::at(theta);
    let dk = CoefficientSlopes::at(theta);
    let w = hat(&phi);
    let w2 = w * w;
    let left_jacobian = Matrix3::identity() + w * k.b + w2 * k.c;

    let mut out = [PropagatorDerivative::zero(); 6];
    for i in 0..3 {
        let e = hat(&Vector3::ith(i, 1.0));
        let sym = e * w + w * e;
        let dr = w * (dk.a * phi[i]) + e * k.a + w2 * (dk.b * phi[i]) + sym * k.b;
        let dj = w * (dk.b * phi[i]) + e * k.b + w2 * (dk.c * phi[i]) + sym * k.c;
        out[i] = PropagatorDerivative {
            rotation: dr * delta,
            translation: dj * rho * delta,
        };
        out[i + 3] = PropagatorDerivative {
            rotation: Matrix3::zeros(),
            translation: left_jacobian.column(i) * delta,
        };
    }
    out
}

/// Derivative of [`exp_se3`] with respect to strain component `k`
/// (zero-based, order `u1, u2, u3, v1, v2, v3`).
pub fn dexp_se3(s: &StrainVector, delta: f64, k: usize) -> PropagatorDerivative {
    assert!(k < 6, "strain component index out of range: {k}");
    dexp_se3_all(s, delta)[k]
}
