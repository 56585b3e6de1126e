//! Chebyshev–Lobatto collocation on an interval.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Chebyshev–Lobatto nodes on `[a, b]` in increasing order with the first-derivative
/// matrix and barycentric weights.
#[derive(Clone, Debug)]
pub struct ChebGrid {
    pub a: f64,
    pub b: f64,
    pub nodes: Vec<f64>,
    weights: Vec<f64>,
    pub d: DMatrix<f64>,
}

impl ChebGrid {
    pub fn new(count: usize, a: f64, b: f64) -> Result<Self> {
        if count < 3 || !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidInput(format!("Chebyshev grid needs ≥ 3 nodes on a ≤ b, got {count} on [{a}, {b}]")));
        }
        let n = count - 1;
        let half = 0.5 * (b - a);
        let nodes: Vec<f64> = (0..count)
            .map(|j| {
                if j == 0 {
                    a
                } else if j == n {
                    b
                } else {
                    a + half * (1.0 - (PI * j as f64 / n as f64).cos())
                }
            })
            .collect();
        let weights: Vec<f64> = (0..count)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n {
                    0.5 * sign
                } else {
                    sign
                }
            })
            .collect();
        // node differences from the sine identity, in reference coordinates
        let diff = |i: usize, j: usize| {
            let p = PI / (2.0 * n as f64);
            2.0 * ((i + j) as f64 * p).sin() * ((i as f64 - j as f64) * p).sin() * half
        };
        let mut d = DMatrix::zeros(count, count);
        for i in 0..count {
            let mut row_sum = 0.0;
            for j in 0..count {
                if i != j {
                    let v = weights[j] / weights[i] / diff(i, j);
                    d[(i, j)] = v;
                    row_sum += v;
                }
            }
            d[(i, i)] = -row_sum;
        }
        Ok(Self { a, b, nodes, weights, d })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn diff(&self, values: &[f64]) -> Vec<f64> {
        (&self.d * DVector::from_column_slice(values)).as_slice().to_vec()
    }

    /// Barycentric interpolation of nodal values at `x`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, (&xj, &wj)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let dx = x - xj;
            if dx == 0.0 {
                return values[j];
            }
            let c = wj / dx;
            num += c * values[j];
            den += c;
        }
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differentiates_polynomials_exactly() {
        let g = ChebGrid::new(9, 0.0, 0.8).unwrap();
        let f: Vec<f64> = g.nodes.iter().map(|s| s.powi(5) - 2.0 * s * s + 1.0).collect();
        let df = g.diff(&f);
        for (s, d) in g.nodes.iter().zip(&df) {
            assert!((d - (5.0 * s.powi(4) - 4.0 * s)).abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_accuracy_for_smooth_functions() {
        let g = ChebGrid::new(33, 0.0, 1.0).unwrap();
        let f: Vec<f64> = g.nodes.iter().map(|s| (2.0 * s).exp()).collect();
        let df = g.diff(&f);
        let worst = g.nodes.iter().zip(&df).map(|(s, d)| (d - 2.0 * (2.0 * s).exp()).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-11, "{worst}");
        let x = 0.3711;
        assert!((g.interpolate(&f, x) - (2.0 * x).exp()).abs() < 1e-14);
    }

    #[test]
    fn endpoints_are_exact() {
        let g = ChebGrid::new(5, 0.25, 1.0).unwrap();
        assert_eq!(g.nodes[0], 0.25);
        assert_eq!(g.nodes[4], 1.0);
        assert!((g.nodes[2] - 0.625).abs() < 1e-15);
    }
}
