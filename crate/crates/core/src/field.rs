//! Closed-form smooth fields used as exact solutions, exterior data and test
//! inputs.

use crate::grid::{Point, SymMat};

/// A twice-differentiable function with known derivatives.
pub trait SmoothField {
    fn value(&self, x: &Point) -> f64;
    fn gradient(&self, x: &Point) -> Point;
    fn hessian(&self, x: &Point, dim: usize) -> SymMat;
}

/// Separable model fields. Sums run over all axes; padded components are
/// zero, so each form is dimension-agnostic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModelField {
    Constant(f64),
    /// `c0 + Σ b_i x_i + Σ a_i x_i²`.
    Quadratic {
        c0: f64,
        linear: Point,
        quad: Point,
    },
    /// `coef · Σ x_i⁴`.
    Quartic {
        coef: f64,
    },
    /// `amp · Σ sin(freq · x_i)`.
    Sine {
        amp: f64,
        freq: f64,
    },
}

impl SmoothField for ModelField {
    fn value(&self, x: &Point) -> f64 {
        match *self {
            ModelField::Constant(c) => c,
            ModelField::Quadratic { c0, linear, quad } => {
                c0 + (0..2).map(|i| linear[i] * x[i] + quad[i] * x[i] * x[i]).sum::<f64>()
            }
            ModelField::Quartic { coef } => coef * x.iter().map(|v| v * v * v * v).sum::<f64>(),
            ModelField::Sine { amp, freq } => amp * x.iter().map(|v| libm::sin(freq * v)).sum::<f64>(),
        }
    }

    fn gradient(&self, x: &Point) -> Point {
        match *self {
            ModelField::Constant(_) => [0.0; 2],
            ModelField::Quadratic { linear, quad, .. } => {
                [linear[0] + 2.0 * quad[0] * x[0], linear[1] + 2.0 * quad[1] * x[1]]
            }
            ModelField::Quartic { coef } => [4.0 * coef * x[0] * x[0] * x[0], 4.0 * coef * x[1] * x[1] * x[1]],
            ModelField::Sine { amp, freq } => {
                [amp * freq * libm::cos(freq * x[0]), amp * freq * libm::cos(freq * x[1])]
            }
        }
    }

    fn hessian(&self, x: &Point, dim: usize) -> SymMat {
        let d = match *self {
            ModelField::Constant(_) => [0.0; 2],
            ModelField::Quadratic { quad, .. } => [2.0 * quad[0], 2.0 * quad[1]],
            ModelField::Quartic { coef } => [12.0 * coef * x[0] * x[0], 12.0 * coef * x[1] * x[1]],
            ModelField::Sine { amp, freq } => {
                [-amp * freq * freq * libm::sin(freq * x[0]), -amp * freq * freq * libm::sin(freq * x[1])]
            }
        };
        SymMat::new(dim, [[d[0], 0.0], [0.0, d[1]]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Central finite differences of the value against the closed-form derivatives.
    #[test]
    fn derivatives_match_finite_differences() {
        let fields = [
            ModelField::Constant(2.0),
            ModelField::Quadratic { c0: 1.0, linear: [0.5, -1.0], quad: [-1.0, 2.0] },
            ModelField::Quartic { coef: 0.7 },
            ModelField::Sine { amp: 1.3, freq: 2.0 },
        ];
        let x = [0.3, -0.4];
        let e = 1e-4;
        for f in fields {
            let g = f.gradient(&x);
            let h = f.hessian(&x, 2);
            for i in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[i] += e;
                xm[i] -= e;
                let fd = (f.value(&xp) - f.value(&xm)) / (2.0 * e);
                assert!((fd - g[i]).abs() < 1e-6, "{f:?} grad {i}");
                let fd2 = (f.value(&xp) - 2.0 * f.value(&x) + f.value(&xm)) / (e * e);
                assert!((fd2 - h.get(i, i)).abs() < 1e-4, "{f:?} hess {i}");
            }
        }
    }
}
