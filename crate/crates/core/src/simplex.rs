//! Derivative-free Nelder-Mead minimisation.

/// Nelder-Mead with dimension-adaptive coefficients (Gao & Han).
#[derive(Clone, Debug)]
pub struct NelderMead {
    pub max_evals: usize,
    /// Stop once the spread of simplex values falls below this.
    pub f_tol: f64,
    /// Stop once every vertex is within this distance of the best one.
    pub x_tol: f64,
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self { max_evals: 2000, f_tol: 1e-12, x_tol: 1e-10, initial_step: 0.1 }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
}

impl NelderMead {
    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, mut f: F, x0: &[f64]) -> Minimum {
        let d = x0.len();
        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        if d == 0 {
            let v = eval(x0, &mut evals);
            return Minimum { x: vec![], f: v, evals };
        }
        let df = d as f64;
        let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / df, 0.75 - 0.5 / df, 1.0 - 1.0 / df);

        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
        let v0 = eval(x0, &mut evals);
        simplex.push((x0.to_vec(), v0));
        for i in 0..d {
            let mut x = x0.to_vec();
            x[i] += self.initial_step;
            let v = eval(&x, &mut evals);
            simplex.push((x, v));
        }

        while evals < self.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[d].1;
            let spread = if best.is_finite() && worst.is_finite() { (worst - best).abs() } else { f64::INFINITY };
            let size = simplex[1..]
                .iter()
                .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if spread <= self.f_tol && size <= self.x_tol {
                break;
            }
            if size <= self.x_tol * 1e-3 {
                break;
            }

            let mut centroid = vec![0.0; d];
            for (x, _) in &simplex[..d] {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c += xi / df;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                centroid.iter().zip(&simplex[d].0).map(|(c, w)| c + t * (c - w)).collect()
            };

            let xr = along(alpha);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(beta);
                let fe = eval(&xe, &mut evals);
                simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[d - 1].1 {
                simplex[d] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < simplex[d].1 {
                let xc = along(gamma);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-gamma);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < simplex[d].1.min(fr) {
                simplex[d] = (xc, fc);
                continue;
            }
            // shrink towards the best vertex
            let x_best = simplex[0].0.clone();
            for vertex in simplex.iter_mut().skip(1) {
                let x: Vec<f64> = x_best.iter().zip(&vertex.0).map(|(b, v)| b + delta * (v - b)).collect();
                let v = eval(&x, &mut evals);
                *vertex = (x, v);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, fx) = simplex.swap_remove(0);
        Minimum { x, f: fx, evals }
    }
}
