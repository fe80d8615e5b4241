//! Small box-constrained solvers used by the estimators: a Levenberg–Marquardt
//! root finder for square systems and a Nelder–Mead minimiser.

#[derive(Debug, Clone, Copy)]
pub struct Bounds<const N: usize> {
    pub lower: [f64; N],
    pub upper: [f64; N],
}

impl<const N: usize> Bounds<N> {
    pub fn clamp(&self, x: &mut [f64; N]) {
        for i in 0..N {
            x[i] = x[i].clamp(self.lower[i], self.upper[i]);
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Solution<const N: usize> {
    pub x: [f64; N],
    /// Euclidean norm of the residual (root finder) or objective value (minimiser).
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn norm<const N: usize>(r: &[f64; N]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve_linear<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    for col in 0..N {
        let pivot = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if !(a[pivot][col].abs() > 0.0) || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..N {
            let factor = a[row][col] / a[col][col];
            for k in col..N {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let tail: f64 = (row + 1..N).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Finds `x` in the box with `residual(x) = 0` by damped Gauss–Newton steps.
///
/// `residual` returns `None` where the system is undefined; such points are
/// treated as infinitely bad. Convergence means the residual norm fell below
/// `tol`.
pub fn levenberg_marquardt<const N: usize, F>(
    mut residual: F,
    start: [f64; N],
    bounds: &Bounds<N>,
    tol: f64,
    max_iter: usize,
) -> Solution<N>
where
    F: FnMut(&[f64; N]) -> Option<[f64; N]>,
{
    let mut x = start;
    bounds.clamp(&mut x);
    let Some(mut r) = residual(&x) else {
        return Solution { x, value: f64::INFINITY, iterations: 0, converged: false };
    };
    let mut r_norm = norm(&r);
    let mut lambda = 1e-3;
    let mut iterations = 0;

    while iterations < max_iter && r_norm >= tol {
        iterations += 1;

        // Forward-difference Jacobian, stepping inward at the box faces.
        let mut jac = [[0.0; N]; N];
        let mut ok = true;
        for j in 0..N {
            let mut h = 1e-7 * x[j].abs().max(1.0);
            if x[j] + h > bounds.upper[j] {
                h = -h;
            }
            let mut xh = x;
            xh[j] += h;
            match residual(&xh) {
                Some(rh) => {
                    for i in 0..N {
                        jac[i][j] = (rh[i] - r[i]) / h;
                    }
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }

        let mut jtj = [[0.0; N]; N];
        let mut grad = [0.0; N];
        for a in 0..N {
            for i in 0..N {
                grad[a] += jac[i][a] * r[i];
                for b in 0..N {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }

        let mut improved = false;
        for _ in 0..30 {
            let mut damped = jtj;
            for i in 0..N {
                damped[i][i] += lambda * jtj[i][i].max(1e-12);
            }
            let Some(step) = solve_linear(damped, grad.map(|g| -g)) else {
                lambda *= 10.0;
                continue;
            };
            let mut candidate = x;
            for i in 0..N {
                candidate[i] += step[i];
            }
            bounds.clamp(&mut candidate);
            if candidate == x {
                break;
            }
            if let Some(rc) = residual(&candidate) {
                let rc_norm = norm(&rc);
                if rc_norm < r_norm {
                    x = candidate;
                    r = rc;
                    r_norm = rc_norm;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = true;
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }

    Solution { x, value: r_norm, iterations, converged: r_norm < tol }
}

/// Nelder–Mead minimisation with vertices clamped to the box.
pub fn nelder_mead<const N: usize, F>(
    mut objective: F,
    start: [f64; N],
    scale: [f64; N],
    bounds: &Bounds<N>,
    tol: f64,
    max_iter: usize,
) -> Solution<N>
where
    F: FnMut(&[f64; N]) -> f64,
{
    let mut eval = |x: &[f64; N]| {
        let v = objective(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    let mut x0 = start;
    bounds.clamp(&mut x0);
    simplex.push((x0, eval(&x0)));
    for i in 0..N {
        let mut xi = x0;
        xi[i] += scale[i];
        if xi[i] > bounds.upper[i] {
            xi[i] = x0[i] - scale[i];
        }
        bounds.clamp(&mut xi);
        simplex.push((xi, eval(&xi)));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[N].1;
        if best.is_finite() && (worst - best).abs() <= tol * (best.abs() + tol) {
            converged = true;
            break;
        }

        let mut centroid = [0.0; N];
        for (x, _) in &simplex[..N] {
            for i in 0..N {
                centroid[i] += x[i] / N as f64;
            }
        }
        let along = |coef: f64| {
            let mut p = [0.0; N];
            for i in 0..N {
                p[i] = centroid[i] + coef * (simplex[N].0[i] - centroid[i]);
            }
            bounds.clamp(&mut p);
            p
        };

        let reflected = along(-1.0);
        let fr = eval(&reflected);
        if fr < simplex[0].1 {
            let expanded = along(-2.0);
            let fe = eval(&expanded);
            simplex[N] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[N - 1].1 {
            simplex[N] = (reflected, fr);
        } else {
            let contracted = if fr < simplex[N].1 { along(-0.5) } else { along(0.5) };
            let fc = eval(&contracted);
            if fc < simplex[N].1.min(fr) {
                simplex[N] = (contracted, fc);
            } else {
                let best_x = simplex[0].0;
                for vertex in simplex.iter_mut().skip(1) {
                    for i in 0..N {
                        vertex.0[i] = best_x[i] + 0.5 * (vertex.0[i] - best_x[i]);
                    }
                    vertex.1 = eval(&vertex.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    Solution { x: simplex[0].0, value: simplex[0].1, iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_solve_with_pivoting() {
        let x = solve_linear([[0.0, 2.0], [3.0, 1.0]], [4.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        assert!(solve_linear([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0]).is_none());
    }

    #[test]
    fn lm_solves_nonlinear_system() {
        // x^2 + y^2 = 4, x - y = 0  ->  x = y = sqrt(2)
        let bounds = Bounds { lower: [0.0, 0.0], upper: [10.0, 10.0] };
        let sol = levenberg_marquardt(
            |p| Some([p[0] * p[0] + p[1] * p[1] - 4.0, p[0] - p[1]]),
            [3.0, 0.5],
            &bounds,
            1e-12,
            100,
        );
        assert!(sol.converged);
        assert!((sol.x[0] - 2f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn lm_reports_failure_when_root_is_outside_box() {
        let bounds = Bounds { lower: [1.0], upper: [5.0] };
        let sol = levenberg_marquardt(|p| Some([p[0] + 1.0]), [3.0], &bounds, 1e-10, 50);
        assert!(!sol.converged);
        assert_eq!(sol.x[0], 1.0);
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let bounds = Bounds { lower: [-5.0, -5.0], upper: [5.0, 5.0] };
        let sol = nelder_mead(
            |p| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2),
            [-1.2, 1.0],
            [0.5, 0.5],
            &bounds,
            1e-14,
            5000,
        );
        assert!((sol.x[0] - 1.0).abs() < 1e-4 && (sol.x[1] - 1.0).abs() < 1e-4, "{:?}", sol.x);
    }
}
