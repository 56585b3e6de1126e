//! Closed-form metric fields with analytic derivatives.

use std::sync::Arc;

use super::{CMatrix, ComplexPoint, DerivativeMode, MetricField, MetricJet, C64};
use crate::error::{Error, Result};

fn cz(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Jet of a one-variable radial coefficient `g(z) = G(|z|²)` given `G, G', G''` at `s = |z|²`.
pub fn radial_jet_1d(z: C64, g: f64, g1: f64, g2: f64) -> MetricJet {
    let s = z.norm_sqr();
    MetricJet {
        g: CMatrix::from_element(1, 1, cz(g)),
        dz: vec![CMatrix::from_element(1, 1, z.conj() * g1)],
        dzdzbar: vec![CMatrix::from_element(1, 1, cz(g2 * s + g1))],
    }
}

/// The flat metric `g = I`.
#[derive(Clone, Debug)]
pub struct Euclidean {
    dim: usize,
}

impl Euclidean {
    pub fn new(dim: usize) -> Self {
        Self { dim: dim.max(1) }
    }
}

impl MetricField for Euclidean {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, _z: &ComplexPoint) -> Result<CMatrix> {
        Ok(CMatrix::identity(self.dim, self.dim))
    }

    fn analytic_jet(&self, _z: &ComplexPoint) -> Option<Result<MetricJet>> {
        let n = self.dim;
        Some(Ok(MetricJet {
            g: CMatrix::identity(n, n),
            dz: vec![CMatrix::zeros(n, n); n],
            dzdzbar: vec![CMatrix::zeros(n, n); n * n],
        }))
    }

    fn derivative_mode(&self) -> DerivativeMode {
        DerivativeMode::Analytic
    }

    fn name(&self) -> String {
        "euclidean".into()
    }
}

/// `g = scale · ∂∂̄(−log(r² − |z|²))` on the ball `B(r) ⊂ C^n`.
///
/// `scale = 2` has holomorphic sectional curvature −1 (for `n = 1` this is the Poincaré
/// disk `2r²/(r² − |z|²)²`); `scale = n + 1` is the Bergman metric of the ball.
#[derive(Clone, Debug)]
pub struct BallHyperbolic {
    dim: usize,
    radius: f64,
    scale: f64,
}

impl BallHyperbolic {
    pub fn new(dim: usize, radius: f64, scale: f64) -> Result<Self> {
        if dim == 0 || !(radius > 0.0) || !(scale > 0.0) {
            return Err(Error::InvalidInput(format!(
                "ball metric needs dim ≥ 1, radius > 0, scale > 0 (got {dim}, {radius}, {scale})"
            )));
        }
        Ok(Self { dim, radius, scale })
    }

    /// `2/(1 − |z|²)²` on the unit disk.
    pub fn poincare_disk() -> Self {
        Self { dim: 1, radius: 1.0, scale: 2.0 }
    }

    fn gap(&self, z: &ComplexPoint) -> Result<f64> {
        let q = self.radius * self.radius - z.norm_sqr();
        if q > 0.0 {
            Ok(q)
        } else {
            Err(Error::ExteriorPoint { point: z.to_string(), domain: format!("ball of radius {}", self.radius) })
        }
    }
}

impl MetricField for BallHyperbolic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, z: &ComplexPoint) -> Result<CMatrix> {
        let q = self.gap(z)?;
        let n = self.dim;
        let w = z.coords();
        Ok(CMatrix::from_fn(n, n, |i, j| {
            let delta = if i == j { 1.0 / q } else { 0.0 };
            (w[i].conj() * w[j] / (q * q) + delta) * self.scale
        }))
    }

    fn analytic_jet(&self, z: &ComplexPoint) -> Option<Result<MetricJet>> {
        let q = match self.gap(z) {
            Ok(q) => q,
            Err(e) => return Some(Err(e)),
        };
        let n = self.dim;
        let w = z.coords();
        let zb: Vec<C64> = w.iter().map(|c| c.conj()).collect();
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let (q2, q3, q4) = (q * q, q * q * q, q * q * q * q);
        let c = self.scale;
        let g = self.eval(z).ok()?;
        let dz = (0..n)
            .map(|k| {
                CMatrix::from_fn(n, n, |i, j| {
                    (zb[k] * d(i, j) / q2 + zb[i] * d(j, k) / q2 + zb[i] * w[j] * zb[k] * (2.0 / q3)) * c
                })
            })
            .collect();
        let mut dzdzbar = Vec::with_capacity(n * n);
        for k in 0..n {
            for l in 0..n {
                dzdzbar.push(CMatrix::from_fn(n, n, |i, j| {
                    let t = cz(d(i, j) * d(k, l) / q2 + d(i, l) * d(j, k) / q2)
                        + zb[k] * w[l] * (2.0 * d(i, j) / q3)
                        + zb[i] * w[l] * (2.0 * d(j, k) / q3)
                        + w[j] * zb[k] * (2.0 * d(i, l) / q3)
                        + zb[i] * w[j] * (2.0 * d(k, l) / q3)
                        + zb[i] * w[j] * zb[k] * w[l] * (6.0 / q4);
                    t * c
                }));
            }
        }
        Some(Ok(MetricJet { g, dz, dzdzbar }))
    }

    fn derivative_mode(&self) -> DerivativeMode {
        DerivativeMode::Analytic
    }

    fn regularity_radius(&self) -> f64 {
        self.radius
    }

    fn boundary_distance(&self, z: &ComplexPoint) -> Option<f64> {
        Some(self.radius - z.norm())
    }

    fn name(&self) -> String {
        format!("ball_hyperbolic(n={}, r={}, scale={})", self.dim, self.radius, self.scale)
    }
}

/// Complete Poincaré metric of the punctured disk, `2/(|z|² (log|z|²)²)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct PuncturedDiskPoincare;

impl PuncturedDiskPoincare {
    fn radial(z: &ComplexPoint) -> Result<(f64, f64, f64)> {
        let s = z.norm_sqr();
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::ExteriorPoint { point: z.to_string(), domain: "punctured_disk".into() });
        }
        let l = s.ln();
        let g = 2.0 / (s * l * l);
        let g1 = -2.0 * (l + 2.0) / (s * s * l * l * l);
        let g2 = (4.0 / (l * l) + 12.0 / (l * l * l) + 12.0 / (l * l * l * l)) / (s * s * s);
        Ok((g, g1, g2))
    }
}

impl MetricField for PuncturedDiskPoincare {
    fn dim(&self) -> usize {
        1
    }

    fn eval(&self, z: &ComplexPoint) -> Result<CMatrix> {
        let (g, _, _) = Self::radial(z)?;
        Ok(CMatrix::from_element(1, 1, cz(g)))
    }

    fn analytic_jet(&self, z: &ComplexPoint) -> Option<Result<MetricJet>> {
        Some(Self::radial(z).map(|(g, g1, g2)| radial_jet_1d(z.coords()[0], g, g1, g2)))
    }

    fn derivative_mode(&self) -> DerivativeMode {
        DerivativeMode::Analytic
    }

    fn boundary_distance(&self, z: &ComplexPoint) -> Option<f64> {
        let r = z.norm();
        Some(r.min(1.0 - r))
    }

    fn name(&self) -> String {
        "punctured_disk_poincare".into()
    }
}

/// Product of Poincaré disks `Σ 2r_i²/(r_i² − |z_i|²)² |dz_i|²` on a polydisk.
#[derive(Clone, Debug)]
pub struct PolydiskPoincare {
    radii: Vec<f64>,
}

impl PolydiskPoincare {
    pub fn new(radii: Vec<f64>) -> Result<Self> {
        if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidInput("polydisk radii must be positive".into()));
        }
        Ok(Self { radii })
    }

    fn factor(&self, i: usize, z: &ComplexPoint) -> Result<(f64, f64, f64)> {
        let r2 = self.radii[i] * self.radii[i];
        let q = r2 - z.coords()[i].norm_sqr();
        if !(q > 0.0) {
            return Err(Error::ExteriorPoint { point: z.to_string(), domain: "polydisk".into() });
        }
        Ok((2.0 * r2 / (q * q), 4.0 * r2 / (q * q * q), 12.0 * r2 / (q * q * q * q)))
    }
}

impl MetricField for PolydiskPoincare {
    fn dim(&self) -> usize {
        self.radii.len()
    }

    fn eval(&self, z: &ComplexPoint) -> Result<CMatrix> {
        let n = self.dim();
        let mut g = CMatrix::zeros(n, n);
        for i in 0..n {
            g[(i, i)] = cz(self.factor(i, z)?.0);
        }
        Ok(g)
    }

    fn analytic_jet(&self, z: &ComplexPoint) -> Option<Result<MetricJet>> {
        let n = self.dim();
        let mut g = CMatrix::zeros(n, n);
        let mut dz = vec![CMatrix::zeros(n, n); n];
        let mut dzdzbar = vec![CMatrix::zeros(n, n); n * n];
        for i in 0..n {
            let (g0, g1, g2) = match self.factor(i, z) {
                Ok(v) => v,
                Err(e) => return Some(Err(e)),
            };
            let zi = z.coords()[i];
            g[(i, i)] = cz(g0);
            dz[i][(i, i)] = zi.conj() * g1;
            dzdzbar[i * n + i][(i, i)] = cz(g2 * zi.norm_sqr() + g1);
        }
        Some(Ok(MetricJet { g, dz, dzdzbar }))
    }

    fn derivative_mode(&self) -> DerivativeMode {
        DerivativeMode::Analytic
    }

    fn regularity_radius(&self) -> f64 {
        self.radii.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn boundary_distance(&self, z: &ComplexPoint) -> Option<f64> {
        Some(
            self.radii
                .iter()
                .zip(z.coords())
                .map(|(r, c)| r - c.norm())
                .fold(f64::INFINITY, f64::min),
        )
    }

    fn name(&self) -> String {
        "polydisk_poincare".into()
    }
}

/// `λ · g` for a fixed positive `λ`.
#[derive(Clone, Debug)]
pub struct Scaled<M> {
    inner: M,
    lambda: f64,
}

impl<M: MetricField> Scaled<M> {
    pub fn new(inner: M, lambda: f64) -> Self {
        Self { inner, lambda }
    }
}

impl<M: MetricField> MetricField for Scaled<M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, z: &ComplexPoint) -> Result<CMatrix> {
        Ok(self.inner.eval(z)? * cz(self.lambda))
    }

    fn analytic_jet(&self, z: &ComplexPoint) -> Option<Result<MetricJet>> {
        let l = cz(self.lambda);
        self.inner.analytic_jet(z).map(|jet| {
            jet.map(|j| MetricJet {
                g: j.g * l,
                dz: j.dz.into_iter().map(|m| m * l).collect(),
                dzdzbar: j.dzdzbar.into_iter().map(|m| m * l).collect(),
            })
        })
    }

    fn derivative_mode(&self) -> DerivativeMode {
        self.inner.derivative_mode()
    }

    fn regularity_radius(&self) -> f64 {
        self.inner.regularity_radius()
    }

    fn boundary_distance(&self, z: &ComplexPoint) -> Option<f64> {
        self.inner.boundary_distance(z)
    }

    fn name(&self) -> String {
        format!("{}*{}", self.lambda, self.inner.name())
    }
}

macro_rules! forward_metric_field {
    ($ty:ty) => {
        impl<M: MetricField + ?Sized> MetricField for $ty {
            fn dim(&self) -> usize {
                (**self).dim()
            }
            fn eval(&self, z: &ComplexPoint) -> Result<CMatrix> {
                (**self).eval(z)
            }
            fn analytic_jet(&self, z: &ComplexPoint) -> Option<Result<MetricJet>> {
                (**self).analytic_jet(z)
            }
            fn derivative_mode(&self) -> DerivativeMode {
                (**self).derivative_mode()
            }
            fn regularity_radius(&self) -> f64 {
                (**self).regularity_radius()
            }
            fn boundary_distance(&self, z: &ComplexPoint) -> Option<f64> {
                (**self).boundary_distance(z)
            }
            fn name(&self) -> String {
                (**self).name()
            }
        }
    };
}

forward_metric_field!(Box<M>);
forward_metric_field!(Arc<M>);

#[cfg(test)]
mod tests {
    use super::super::{curvature_tensor, fd_jet, holo_sectional_curvature, metric_jet, TangentVector};
    use super::*;

    fn max_rel(a: &CMatrix, b: &CMatrix) -> f64 {
        let scale = b.iter().map(|c| c.norm()).fold(1e-12, f64::max);
        (a - b).iter().map(|c| c.norm()).fold(0.0, f64::max) / scale
    }

    fn assert_jets_agree(metric: &dyn MetricField, z: &ComplexPoint, tol: f64) {
        let a = metric_jet(metric, z).unwrap();
        let f = fd_jet(metric, z).unwrap();
        assert!(max_rel(&a.g, &f.g) < tol);
        for k in 0..a.dim() {
            assert!(max_rel(&a.dz[k], &f.dz[k]) < tol, "dz[{k}] at {z}");
        }
        for kl in 0..a.dzdzbar.len() {
            assert!(max_rel(&a.dzdzbar[kl], &f.dzdzbar[kl]) < tol, "dzdzbar[{kl}] at {z}");
        }
    }

    #[test]
    fn analytic_jets_match_finite_differences() {
        let pts1 = [C64::new(0.0, 0.0), C64::new(0.3, -0.2), C64::new(-0.55, 0.4)];
        for z in pts1 {
            let p = ComplexPoint::scalar(z).unwrap();
            assert_jets_agree(&BallHyperbolic::poincare_disk(), &p, 1e-6);
            assert_jets_agree(&Scaled::new(BallHyperbolic::poincare_disk(), 3.0), &p, 1e-6);
            if z.norm() > 0.1 {
                assert_jets_agree(&PuncturedDiskPoincare, &p, 1e-6);
            }
        }
        let z2 = ComplexPoint::new(vec![C64::new(0.2, 0.1), C64::new(-0.3, 0.25)]).unwrap();
        assert_jets_agree(&BallHyperbolic::new(2, 1.0, 3.0).unwrap(), &z2, 1e-6);
        assert_jets_agree(&BallHyperbolic::new(2, 2.0, 2.0).unwrap(), &z2, 1e-6);
        assert_jets_agree(&PolydiskPoincare::new(vec![1.0, 0.8]).unwrap(), &z2, 1e-6);
    }

    #[test]
    fn ball_bergman_metric_has_constant_holomorphic_curvature() {
        // scale n+1 gives H = -2/(n+1)
        let g = BallHyperbolic::new(2, 1.0, 3.0).unwrap();
        let z = ComplexPoint::new(vec![C64::new(0.2, 0.1), C64::new(-0.3, 0.25)]).unwrap();
        for dir in [[1.0, 0.0], [0.0, 1.0], [0.6, -0.3]] {
            let eta = TangentVector::new(z.clone(), vec![C64::new(dir[0], 0.1), C64::new(dir[1], 0.0)]).unwrap();
            let h = holo_sectional_curvature(&g, &eta).unwrap();
            assert!((h + 2.0 / 3.0).abs() < 1e-10, "{h}");
        }
        let rm = curvature_tensor(&g, &z).unwrap();
        assert!(rm.symmetry_defect() < 1e-12);
    }

    #[test]
    fn punctured_disk_poincare_is_einstein() {
        for r in [0.01, 0.2, 0.7] {
            let z = ComplexPoint::scalar(C64::new(r, 0.0)).unwrap();
            let eta = TangentVector::coordinate(z.clone(), 0).unwrap();
            let h = holo_sectional_curvature(&PuncturedDiskPoincare, &eta).unwrap();
            assert!((h + 1.0).abs() < 1e-10, "H = {h} at {r}");
        }
    }

    #[test]
    fn exterior_points_rejected() {
        let p = ComplexPoint::scalar(C64::new(1.0, 0.0)).unwrap();
        assert!(BallHyperbolic::poincare_disk().eval(&p).is_err());
        assert!(PuncturedDiskPoincare.eval(&ComplexPoint::origin(1)).is_err());
    }
}
