use super::{CMatrix, ComplexPoint, MetricField, MetricJet, C64};
use crate::error::{Error, Result};

/// Finite-difference step as a fraction of the field's regularity radius.
pub const FD_RELATIVE_STEP: f64 = 1e-4;

/// Real direction `x_k` (`imag = false`) or `y_k` (`imag = true`).
#[derive(Clone, Copy)]
struct RealDir {
    coord: usize,
    imag: bool,
}

impl RealDir {
    fn unit(self) -> C64 {
        if self.imag {
            C64::new(0.0, 1.0)
        } else {
            C64::new(1.0, 0.0)
        }
    }
}

fn shift(z: &ComplexPoint, moves: &[(RealDir, f64)]) -> ComplexPoint {
    let mut p = z.clone();
    for &(d, t) in moves {
        p = p.shifted(d.coord, d.unit() * t);
    }
    p
}

struct Differences {
    first: Vec<CMatrix>,
    /// Real Hessian over the 2n real directions, row-major.
    hessian: Vec<CMatrix>,
}

fn differences(metric: &dyn MetricField, z: &ComplexPoint, h: f64, center: &CMatrix) -> Result<Differences> {
    let n = z.dim();
    let dirs: Vec<RealDir> = (0..n)
        .flat_map(|coord| [RealDir { coord, imag: false }, RealDir { coord, imag: true }])
        .collect();
    let m = dirs.len();
    let mut first = Vec::with_capacity(m);
    let mut plus = Vec::with_capacity(m);
    let mut minus = Vec::with_capacity(m);
    for &d in &dirs {
        let fp = metric.eval(&shift(z, &[(d, h)]))?;
        let fm = metric.eval(&shift(z, &[(d, -h)]))?;
        first.push((&fp - &fm) / C64::new(2.0 * h, 0.0));
        plus.push(fp);
        minus.push(fm);
    }
    let mut hessian = vec![CMatrix::zeros(n, n); m * m];
    for a in 0..m {
        hessian[a * m + a] = (&plus[a] - center * C64::new(2.0, 0.0) + &minus[a]) / C64::new(h * h, 0.0);
        for b in (a + 1)..m {
            let (da, db) = (dirs[a], dirs[b]);
            let fpp = metric.eval(&shift(z, &[(da, h), (db, h)]))?;
            let fpm = metric.eval(&shift(z, &[(da, h), (db, -h)]))?;
            let fmp = metric.eval(&shift(z, &[(da, -h), (db, h)]))?;
            let fmm = metric.eval(&shift(z, &[(da, -h), (db, -h)]))?;
            let mixed = (fpp - fpm - fmp + fmm) / C64::new(4.0 * h * h, 0.0);
            hessian[b * m + a] = mixed.clone();
            hessian[a * m + b] = mixed;
        }
    }
    Ok(Differences { first, hessian })
}

/// Central differences at steps `h` and `h/2` combined by one Richardson step.
///
/// Refuses to probe when the field reports a boundary closer than `4h`.
pub fn fd_jet(metric: &dyn MetricField, z: &ComplexPoint) -> Result<MetricJet> {
    let n = z.dim();
    let h = FD_RELATIVE_STEP * metric.regularity_radius();
    if !(h > f64::MIN_POSITIVE) {
        return Err(Error::InsufficientRegularity { distance: 0.0, required: 0.0 });
    }
    if let Some(dist) = metric.boundary_distance(z) {
        if dist < 4.0 * h {
            return Err(Error::InsufficientRegularity { distance: dist, required: 4.0 * h });
        }
    }
    let g = metric.eval(z)?;
    let coarse = differences(metric, z, h, &g)?;
    let fine = differences(metric, z, 0.5 * h, &g)?;
    let extrapolate =
        |f: &CMatrix, c: &CMatrix| -> CMatrix { (f * C64::new(4.0, 0.0) - c) / C64::new(3.0, 0.0) };
    let first: Vec<CMatrix> = fine.first.iter().zip(&coarse.first).map(|(f, c)| extrapolate(f, c)).collect();
    let hess: Vec<CMatrix> = fine.hessian.iter().zip(&coarse.hessian).map(|(f, c)| extrapolate(f, c)).collect();

    let m = 2 * n;
    let i = C64::new(0.0, 1.0);
    let half = C64::new(0.5, 0.0);
    let quarter = C64::new(0.25, 0.0);
    // ∂_k = (∂_{x_k} - i ∂_{y_k}) / 2
    let dz = (0..n)
        .map(|k| (&first[2 * k] - &first[2 * k + 1] * i) * half)
        .collect();
    // ∂_k ∂̄_l = ¼ (∂x_k∂x_l + ∂y_k∂y_l + i(∂x_k∂y_l − ∂y_k∂x_l))
    let mut dzdzbar = Vec::with_capacity(n * n);
    for k in 0..n {
        for l in 0..n {
            let (xk, yk, xl, yl) = (2 * k, 2 * k + 1, 2 * l, 2 * l + 1);
            let re = &hess[xk * m + xl] + &hess[yk * m + yl];
            let im = &hess[xk * m + yl] - &hess[yk * m + xl];
            dzdzbar.push((re + im * i) * quarter);
        }
    }
    Ok(MetricJet { g, dz, dzdzbar })
}
