//! Tanh-sinh (double exponential) quadrature on the unit interval.
//!
//! The integrand receives both `t` and `1 - t` so that callers with a
//! singularity at the right end can evaluate it without cancellation.

use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

const MAX_LEVEL: usize = 8;
const T_MAX: f64 = 6.1;

#[derive(Clone, Copy)]
struct Node {
    x: f64,
    one_minus_x: f64,
    weight: f64,
}

/// Nodes added at each refinement level, sorted by distance from the centre.
fn levels() -> &'static [Vec<Node>] {
    static LEVELS: OnceLock<Vec<Vec<Node>>> = OnceLock::new();
    LEVELS.get_or_init(|| {
        (0..=MAX_LEVEL)
            .map(|level| {
                let h = 0.5f64.powi(level as i32);
                let mut nodes = Vec::new();
                let mut k = if level == 0 { 0 } else { 1 };
                let step = if level == 0 { 1 } else { 2 };
                loop {
                    let t = k as f64 * h;
                    if t > T_MAX {
                        break;
                    }
                    for sign in [1.0, -1.0] {
                        if t == 0.0 && sign < 0.0 {
                            continue;
                        }
                        let s = FRAC_PI_2 * (sign * t).sinh();
                        let e = (2.0 * s).exp();
                        let x = e / (1.0 + e);
                        let one_minus_x = 1.0 / (1.0 + e);
                        let weight = std::f64::consts::PI * t.cosh() * x * one_minus_x;
                        if weight > 0.0 && weight.is_finite() && x > 0.0 && one_minus_x > 0.0 {
                            nodes.push(Node { x, one_minus_x, weight });
                        }
                    }
                    k += step;
                }
                nodes
            })
            .collect()
    })
}

/// Integrates a vector-valued `f(t, 1 - t)` over `[0, 1]` to relative tolerance `tol`.
pub fn integrate_unit<const N: usize, F>(mut f: F, tol: f64) -> [f64; N]
where
    F: FnMut(f64, f64) -> [f64; N],
{
    let levels = levels();
    let mut sum = [0.0; N];
    let mut previous = [f64::NAN; N];
    let mut estimate = [0.0; N];
    for (level, nodes) in levels.iter().enumerate() {
        for node in nodes {
            let value = f(node.x, node.one_minus_x);
            for i in 0..N {
                let term = node.weight * value[i];
                if term.is_finite() {
                    sum[i] += term;
                }
            }
        }
        let h = 0.5f64.powi(level as i32);
        for i in 0..N {
            estimate[i] = sum[i] * h;
        }
        if level >= 3 {
            let converged = (0..N).all(|i| {
                let scale = estimate[i].abs().max(f64::MIN_POSITIVE);
                (estimate[i] - previous[i]).abs() <= tol * scale
            });
            if converged {
                break;
            }
        }
        previous = estimate;
    }
    estimate
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial() {
        let [v] = integrate_unit(|t, _| [3.0 * t * t], 1e-14);
        assert!((v - 1.0).abs() < 1e-13);
    }

    #[test]
    fn right_endpoint_singularity() {
        // ∫ (1-t)^(-0.9) dt = 10
        let [v] = integrate_unit(|_, s| [s.powf(-0.9)], 1e-12);
        assert!((v - 10.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn log_singularity() {
        // ∫ -ln(1-t) dt = 1
        let [v] = integrate_unit(|_, s| [-s.ln()], 1e-13);
        assert!((v - 1.0).abs() < 1e-11);
    }

    #[test]
    fn vector_valued() {
        let [a, b] = integrate_unit(|t, _| [1.0, t], 1e-14);
        assert!((a - 1.0).abs() < 1e-13);
        assert!((b - 0.5).abs() < 1e-13);
    }
}
