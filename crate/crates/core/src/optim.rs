//! Box-constrained limited-memory quasi-Newton minimisation.
//!
//! A projected L-BFGS: variables sitting on a bound whose gradient points
//! outward are frozen for the step, the two-loop recursion runs on the free
//! variables, and a backtracking Armijo search walks the projected path.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: Status,
}

#[derive(Debug, Clone)]
pub struct BoxLbfgs {
    pub max_iter: usize,
    pub memory: usize,
    /// Stop when the largest free gradient component falls below this.
    pub pg_tol: f64,
    /// Stop when a step improves the objective by less than this (relative).
    pub f_rel_tol: f64,
    pub max_line_search: usize,
}

impl Default for BoxLbfgs {
    fn default() -> Self {
        Self {
            max_iter: 200,
            memory: 10,
            pg_tol: 1e-8,
            f_rel_tol: 1e-12,
            max_line_search: 40,
        }
    }
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl BoxLbfgs {
    /// Minimises `f` over the box `[lower, upper]` starting from `x0`.
    ///
    /// `f` returns `None` where the objective cannot be evaluated; such points
    /// are treated as infinitely bad. Returns `None` only if `x0` itself fails.
    pub fn minimize<F>(&self, mut f: F, x0: &[f64], lower: &[f64], upper: &[f64]) -> Option<Minimum>
    where
        F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
    {
        let n = x0.len();
        let mut x = x0.to_vec();
        project(&mut x, lower, upper);
        let (mut fx, mut g) = f(&x)?;
        if !fx.is_finite() {
            return None;
        }
        let mut evaluations = 1;
        let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(self.memory);
        let mut status = Status::MaxIterations;
        let mut iterations = 0;

        for _ in 0..self.max_iter {
            iterations += 1;
            let free: Vec<bool> = (0..n)
                .map(|i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
                .collect();
            let pg = (0..n)
                .filter(|&i| free[i])
                .map(|i| g[i].abs())
                .fold(0.0, f64::max);
            if pg <= self.pg_tol {
                status = Status::Converged;
                break;
            }

            let masked: Vec<f64> = (0..n).map(|i| if free[i] { g[i] } else { 0.0 }).collect();
            let mut d = self.two_loop(&masked, &hist, &free);
            for i in 0..n {
                if !free[i] {
                    d[i] = 0.0;
                }
            }
            if dot(&d, &masked) >= 0.0 || d.iter().any(|v| !v.is_finite()) {
                hist.clear();
                d = masked.iter().map(|v| -v).collect();
            }
            if hist.is_empty() {
                let norm = dot(&d, &d).sqrt();
                if norm > 1.0 {
                    d.iter_mut().for_each(|v| *v /= norm);
                }
            }

            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..self.max_line_search {
                let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                project(&mut xn, lower, upper);
                let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
                if step.iter().all(|s| *s == 0.0) {
                    break;
                }
                evaluations += 1;
                if let Some((fnew, gnew)) = f(&xn) {
                    if fnew.is_finite() && fnew <= fx + 1e-4 * dot(&g, &step) {
                        accepted = Some((xn, fnew, gnew, step));
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some((xn, fnew, gnew, s)) = accepted else {
                status = Status::LineSearchFailed;
                break;
            };

            let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * dot(&y, &y).max(1e-300).sqrt() * dot(&s, &s).sqrt() {
                if hist.len() == self.memory {
                    hist.pop_front();
                }
                hist.push_back((s, y, 1.0 / sy));
            }
            let improvement = fx - fnew;
            x = xn;
            g = gnew;
            fx = fnew;
            if improvement.abs() <= self.f_rel_tol * fx.abs().max(1.0) {
                status = Status::Converged;
                break;
            }
        }

        Some(Minimum {
            x,
            value: fx,
            iterations,
            evaluations,
            status,
        })
    }

    fn two_loop(&self, g: &[f64], hist: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, free: &[bool]) -> Vec<f64> {
        let restrict = |v: &[f64]| -> Vec<f64> {
            v.iter().zip(free).map(|(a, &f)| if f { *a } else { 0.0 }).collect()
        };
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let s = restrict(s);
            let a = rho * dot(&s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            if gamma.is_finite() && gamma > 0.0 {
                q.iter_mut().for_each(|v| *v *= gamma);
            }
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let y = restrict(y);
            let b = rho * dot(&y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        q.iter().map(|v| -v).collect()
    }
}

/// Central finite-difference gradient, falling back to one-sided differences
/// at the box boundary.
pub fn fd_gradient<F>(mut f: F, x: &[f64], lower: &[f64], upper: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let hi = (x[i] + h).min(upper[i]);
            let lo = (x[i] - h).max(lower[i]);
            if hi <= lo {
                return 0.0;
            }
            probe[i] = hi;
            let fp = f(&probe);
            probe[i] = lo;
            let fm = f(&probe);
            probe[i] = x[i];
            (fp - fm) / (hi - lo)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Some((f, g))
    }

    #[test]
    fn unconstrained_rosenbrock() {
        let m = BoxLbfgs::default()
            .minimize(rosenbrock, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0])
            .unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{m:?}");
    }

    #[test]
    fn active_bound() {
        // minimum of (x-3)^2 + (y+1)^2 over [0,2]x[0,2] is (2,0)
        let f = |x: &[f64]| {
            Some((
                (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2),
                vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 1.0)],
            ))
        };
        let m = BoxLbfgs::default().minimize(f, &[0.5, 1.5], &[0.0, 0.0], &[2.0, 2.0]).unwrap();
        assert_eq!(m.x, vec![2.0, 0.0]);
        assert_eq!(m.status, Status::Converged);
    }

    #[test]
    fn infeasible_region_is_avoided() {
        let f = |x: &[f64]| {
            if x[0] < 0.5 {
                None
            } else {
                Some((x[0] * x[0], vec![2.0 * x[0]]))
            }
        };
        let m = BoxLbfgs::default().minimize(f, &[2.0], &[-1.0], &[3.0]).unwrap();
        assert!(m.x[0] >= 0.5 && m.x[0] < 0.6, "{m:?}");
    }

    #[test]
    fn fd_matches_analytic() {
        let x = [0.3, -0.7];
        let g = fd_gradient(|x| rosenbrock(x).unwrap().0, &x, &[-2.0; 2], &[2.0; 2], 1e-6);
        let exact = rosenbrock(&x).unwrap().1;
        for (a, b) in g.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-5 * b.abs().max(1.0));
        }
    }
}
