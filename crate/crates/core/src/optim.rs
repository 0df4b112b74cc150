//! Derivative-free Nelder–Mead simplex minimisation.

#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    /// Relative tolerance on the spread of objective values in the simplex.
    pub tolerance: f64,
    /// Relative tolerance on the simplex diameter; equal objective values at
    /// distinct vertices do not end the search on their own.
    pub point_tolerance: f64,
    pub max_evaluations: usize,
    /// Initial simplex edge, per coordinate, relative to `|x|` (absolute when `x = 0`).
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            tolerance: 1e-8,
            point_tolerance: 1e-6,
            max_evaluations: 4000,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

impl NelderMead {
    pub fn minimize<F>(&self, mut objective: F, start: &[f64]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let n = start.len();
        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = objective(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };

        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        let f0 = eval(start, &mut evals);
        simplex.push((start.to_vec(), f0));
        for i in 0..n {
            let mut x = start.to_vec();
            let step = if x[i] != 0.0 {
                self.initial_step * x[i].abs()
            } else {
                self.initial_step
            };
            x[i] += step;
            let f = eval(&x, &mut evals);
            simplex.push((x, f));
        }

        let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
        let mut converged = false;
        while evals < self.max_evaluations {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[n].1;
            let spread = simplex[1..]
                .iter()
                .flat_map(|(x, _)| {
                    x.iter()
                        .zip(&simplex[0].0)
                        .map(|(a, b)| (a - b).abs() / (1.0 + b.abs()))
                })
                .fold(0.0, f64::max);
            if best.is_finite()
                && (worst - best).abs() <= self.tolerance * (best.abs() + self.tolerance)
                && spread <= self.point_tolerance
            {
                converged = true;
                break;
            }

            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c += xi / n as f64;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };

            let xr = along(alpha);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(gamma);
                let fe = eval(&xe, &mut evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(rho * alpha);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-rho);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
                continue;
            }
            // shrink towards the best vertex
            let best_x = simplex[0].0.clone();
            for (x, f) in simplex.iter_mut().skip(1) {
                for (xi, bi) in x.iter_mut().zip(&best_x) {
                    *xi = bi + sigma * (*xi - bi);
                }
                *f = eval(x, &mut evals);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (point, value) = simplex.swap_remove(0);
        Minimum {
            point,
            value,
            evaluations: evals,
            converged,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_rosenbrock_minimum() {
        let nm = NelderMead {
            tolerance: 1e-14,
            max_evaluations: 20_000,
            ..Default::default()
        };
        let m = nm.minimize(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
        );
        assert!(m.converged);
        assert!(
            (m.point[0] - 1.0).abs() < 1e-4 && (m.point[1] - 1.0).abs() < 1e-4,
            "{:?}",
            m.point
        );
    }

    #[test]
    fn tolerates_infinite_regions() {
        let m = NelderMead::default().minimize(
            |x| {
                if x[0] < 0.0 {
                    f64::INFINITY
                } else {
                    (x[0] - 2.0).powi(2) + 1.0
                }
            },
            &[0.5],
        );
        assert!((m.point[0] - 2.0).abs() < 1e-3, "{m:?}");
    }
}
