//! Minimal fixed-size vectors and matrices for the observer algebra.
//!
//! Everything here is 2- or 3-dimensional and dense, so hand-rolled types
//! beat pulling in a linear-algebra crate. Symmetric 2x2 eigenvalues have a
//! closed form, which is all the persistency-of-excitation test needs.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2(pub f64, pub f64);

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3(pub f64, pub f64, pub f64);

/// Row-major 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[f64; 2]; 2]);

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Vec2 {
    pub const ZERO: Vec2 = Vec2(0.0, 0.0);

    pub fn dot(self, rhs: Vec2) -> f64 {
        self.0 * rhs.0 + self.1 * rhs.1
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Outer product `self * rhs^T`.
    pub fn outer(self, rhs: Vec2) -> Mat2 {
        Mat2([
            [self.0 * rhs.0, self.0 * rhs.1],
            [self.1 * rhs.0, self.1 * rhs.1],
        ])
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3(0.0, 0.0, 0.0);

    pub fn dot(self, rhs: Vec3) -> f64 {
        self.0 * rhs.0 + self.1 * rhs.1 + self.2 * rhs.2
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// First component plus trailing 2-vector, the split the observer uses.
    pub fn split(self) -> (f64, Vec2) {
        (self.0, Vec2(self.1, self.2))
    }

    pub fn join(head: f64, tail: Vec2) -> Vec3 {
        Vec3(head, tail.0, tail.1)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2(self.0 + rhs.0, self.1 + rhs.1)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2(self.0 - rhs.0, self.1 - rhs.1)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2(-self.0, -self.1)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2(self.0 * s, self.1 * s)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3(self.0 + rhs.0, self.1 + rhs.1, self.2 + rhs.2)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3(self.0 - rhs.0, self.1 - rhs.1, self.2 - rhs.2)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3(self.0 * s, self.1 * s, self.2 * s)
    }
}

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[0.0; 2]; 2]);

    pub fn identity() -> Mat2 {
        Mat2([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn diag(d0: f64, d1: f64) -> Mat2 {
        Mat2([[d0, 0.0], [0.0, d1]])
    }

    pub fn scale(self, s: f64) -> Mat2 {
        Mat2([
            [self.0[0][0] * s, self.0[0][1] * s],
            [self.0[1][0] * s, self.0[1][1] * s],
        ])
    }

    pub fn transpose(self) -> Mat2 {
        Mat2([
            [self.0[0][0], self.0[1][0]],
            [self.0[0][1], self.0[1][1]],
        ])
    }

    pub fn det(self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn inverse(self) -> Option<Mat2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(Mat2([
            [self.0[1][1] / d, -self.0[0][1] / d],
            [-self.0[1][0] / d, self.0[0][0] / d],
        ]))
    }

    pub fn is_symmetric(self, tol: f64) -> bool {
        (self.0[0][1] - self.0[1][0]).abs() <= tol
    }

    /// Eigenvalues of a symmetric matrix, (min, max). Only valid when the
    /// matrix is symmetric; the off-diagonal entries are averaged first.
    pub fn sym_eigenvalues(self) -> (f64, f64) {
        let a = self.0[0][0];
        let c = self.0[1][1];
        let b = 0.5 * (self.0[0][1] + self.0[1][0]);
        let mean = 0.5 * (a + c);
        let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        (mean - r, mean + r)
    }

    /// Symmetric positive definite: symmetric within `tol` and both
    /// eigenvalues strictly positive.
    pub fn is_spd(self, tol: f64) -> bool {
        self.is_symmetric(tol) && self.sym_eigenvalues().0 > 0.0
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        Mat2([
            [self.0[0][0] + rhs.0[0][0], self.0[0][1] + rhs.0[0][1]],
            [self.0[1][0] + rhs.0[1][0], self.0[1][1] + rhs.0[1][1]],
        ])
    }
}

impl Mul<Vec2> for Mat2 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        Vec2(
            self.0[0][0] * v.0 + self.0[0][1] * v.1,
            self.0[1][0] * v.0 + self.0[1][1] * v.1,
        )
    }
}

impl Mul<Mat2> for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.0[i][0] * rhs.0[0][j] + self.0[i][1] * rhs.0[1][j];
            }
        }
        Mat2(out)
    }
}

impl Mat3 {
    pub const ZERO: Mat3 = Mat3([[0.0; 3]; 3]);

    /// Assemble from the 1+2 block split used throughout the observer:
    /// scalar top-left, row/column 2-vectors, 2x2 bottom-right block.
    pub fn from_blocks(a11: f64, a12: Vec2, a21: Vec2, a22: Mat2) -> Mat3 {
        Mat3([
            [a11, a12.0, a12.1],
            [a21.0, a22.0[0][0], a22.0[0][1]],
            [a21.1, a22.0[1][0], a22.0[1][1]],
        ])
    }

    pub fn scale(self, s: f64) -> Mat3 {
        let mut out = self.0;
        for row in &mut out {
            for cell in row {
                *cell *= s;
            }
        }
        Mat3(out)
    }
}

impl Mul<Vec3> for Mat3 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        Vec3(
            self.0[0][0] * v.0 + self.0[0][1] * v.1 + self.0[0][2] * v.2,
            self.0[1][0] * v.0 + self.0[1][1] * v.1 + self.0[1][2] * v.2,
            self.0[2][0] * v.0 + self.0[2][1] * v.1 + self.0[2][2] * v.2,
        )
    }
}
