//! Symmetric quadrature rules on triangles in barycentric form.

use crate::error::{FemError, Result};
use crate::mesh::ElementGeometry;

/// Barycentric points and area-normalised weights (summing to one).
#[derive(Clone, Debug)]
pub struct QuadRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadRule {
    /// `∫_T g dx` for an element.
    pub fn integrate<F: FnMut([f64; 3]) -> f64>(&self, geo: &ElementGeometry, mut g: F) -> f64 {
        geo.area * self.points.iter().zip(&self.weights).map(|(&b, &w)| w * g(b)).sum::<f64>()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn orbit3(a: f64) -> [[f64; 3]; 3] {
    let b = 1.0 - 2.0 * a;
    [[b, a, a], [a, b, a], [a, a, b]]
}

/// `∫ x^a y^b` over the reference triangle `(0,0), (1,0), (0,1)`: `a! b! / (a+b+2)!`.
pub fn reference_monomial_integral(a: u32, b: u32) -> f64 {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    fact(a) * fact(b) / fact(a + b + 2)
}

/// Rule of the requested exactness: 3-point edge-midpoint rule (2), 6-point (4) or
/// 7-point (5). Exactness is checked against monomial integrals before returning.
pub fn make_quad_rule(degree: usize) -> Result<QuadRule> {
    let (points, weights): (Vec<[f64; 3]>, Vec<f64>) = match degree {
        2 => (
            vec![[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]],
            vec![1.0 / 3.0; 3],
        ),
        4 => {
            let (a1, w1) = (0.445_948_490_915_964_886_32, 0.223_381_589_678_011_465_70);
            let (a2, w2) = (0.091_576_213_509_770_743_46, 0.109_951_743_655_321_867_64);
            let mut p = orbit3(a1).to_vec();
            p.extend(orbit3(a2));
            (p, vec![w1, w1, w1, w2, w2, w2])
        }
        5 => {
            let s15 = 15f64.sqrt();
            let (a1, w1) = ((6.0 - s15) / 21.0, (155.0 - s15) / 1200.0);
            let (a2, w2) = ((6.0 + s15) / 21.0, (155.0 + s15) / 1200.0);
            let mut p = vec![[1.0 / 3.0; 3]];
            p.extend(orbit3(a1));
            p.extend(orbit3(a2));
            (p, vec![0.225, w1, w1, w1, w2, w2, w2])
        }
        d => {
            return Err(FemError::InvalidArgument(format!(
                "no quadrature rule of degree {d}; supported: 2, 4, 5"
            )))
        }
    };
    let rule = QuadRule { points, weights, degree };
    let reference = ElementGeometry::new([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
    for total in 0..=degree as u32 {
        for a in 0..=total {
            let b = total - a;
            let exact = reference_monomial_integral(a, b);
            let q = rule.integrate(&reference, |l| l[1].powi(a as i32) * l[2].powi(b as i32));
            if (q - exact).abs() > 1e-13 * exact {
                return Err(FemError::Inconsistent(format!(
                    "degree-{degree} rule misintegrates x^{a} y^{b}: {q} vs {exact}"
                )));
            }
        }
    }
    Ok(rule)
}
