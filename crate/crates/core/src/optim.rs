//! Derivative-free minimization.

use rand::Rng;

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the simplex spread in f falls below this (absolute + relative).
    pub f_tol: f64,
    /// Stop when every simplex vertex is within this distance of the best.
    pub x_tol: f64,
    /// Initial simplex step as a fraction of the box width (or absolute when unbounded).
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            f_tol: 1e-12,
            x_tol: 1e-10,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
    /// Relative improvement of the best value over the last `n + 1` iterations.
    pub final_gap: f64,
}

/// Axis-aligned box; `None` leaves the problem unbounded.
pub type Bounds<'a> = Option<&'a [(f64, f64)]>;

fn project(x: &mut [f64], bounds: Bounds<'_>) {
    if let Some(b) = bounds {
        for (xi, (lo, hi)) in x.iter_mut().zip(b) {
            *xi = xi.clamp(*lo, *hi);
        }
    }
}

/// Minimizes `f` from `x0`. Trial points are projected onto `bounds`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], bounds: Bounds<'_>, opts: &NelderMeadOptions) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
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
    let mut start = x0.to_vec();
    project(&mut start, bounds);
    if n == 0 {
        let v = eval(&start, &mut evals);
        return NelderMeadResult {
            x: start,
            f: v,
            evals,
            converged: true,
            final_gap: 0.0,
        };
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(&start, &mut evals);
    simplex.push((start.clone(), f0));
    for i in 0..n {
        let mut v = start.clone();
        let step = match bounds {
            Some(b) => {
                let w = b[i].1 - b[i].0;
                let s = opts.initial_step * w;
                // step away from the nearer bound so the vertex stays distinct
                if v[i] + s <= b[i].1 {
                    s
                } else {
                    -s
                }
            }
            None => {
                if v[i] != 0.0 {
                    opts.initial_step * v[i].abs()
                } else {
                    opts.initial_step
                }
            }
        };
        v[i] += step;
        project(&mut v, bounds);
        let fv = eval(&v, &mut evals);
        simplex.push((v, fv));
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        history.push(simplex[0].1);
        let (fb, fw) = (simplex[0].1, simplex[n].1);
        let spread_f = (fw - fb).abs();
        let spread_x = simplex[1..]
            .iter()
            .map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if fb.is_finite() && spread_f <= opts.f_tol * (1.0 + fb.abs()) && spread_x <= opts.x_tol.max(1e-300) {
            converged = true;
            break;
        }
        if fb.is_finite() && spread_f <= opts.f_tol * (1.0 + fb.abs()) * 1e-3 {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect();
            project(&mut p, bounds);
            p
        };
        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(gamma);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let p = along(rho);
                let v = eval(&p, &mut evals);
                (p, v)
            } else {
                let p = along(-rho);
                let v = eval(&p, &mut evals);
                (p, v)
            };
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for (v, fv) in simplex.iter_mut().skip(1) {
                    for (x, b) in v.iter_mut().zip(&best) {
                        *x = b + sigma * (*x - b);
                    }
                    project(v, bounds);
                    *fv = eval(v, &mut evals);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let best = simplex[0].1;
    let lag = n + 1;
    let final_gap = if history.len() > lag {
        let old = history[history.len() - 1 - lag];
        if old.is_finite() && best.is_finite() {
            ((old - best) / best.abs().max(1e-300)).abs()
        } else {
            0.0
        }
    } else {
        0.0
    };
    let (x, f) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        f,
        evals,
        converged,
        final_gap,
    }
}

/// `n` Latin-hypercube points in the unit cube of dimension `d`.
pub fn latin_hypercube<R: Rng>(rng: &mut R, n: usize, d: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; d]; n];
    for j in 0..d {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let k = rng.random_range(0..=i);
            perm.swap(i, k);
        }
        for (i, p) in pts.iter_mut().enumerate() {
            p[j] = (perm[i] as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rosenbrock_unbounded() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions {
            max_evals: 20_000,
            f_tol: 1e-16,
            x_tol: 1e-12,
            initial_step: 0.5,
        };
        let r = nelder_mead(f, &[-1.2, 1.0], None, &opts);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn bound_active_minimum() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2);
        let b = [(0.0, 2.0), (0.0, 2.0)];
        let r = nelder_mead(f, &[1.0, 1.0], Some(&b), &NelderMeadOptions::default());
        assert!((r.x[0] - 2.0).abs() < 1e-8 && r.x[1].abs() < 1e-8, "{:?}", r.x);
    }

    #[test]
    fn latin_hypercube_strata() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 16;
        let pts = latin_hypercube(&mut rng, n, 3);
        for j in 0..3 {
            let mut bins: Vec<usize> = pts.iter().map(|p| (p[j] * n as f64) as usize).collect();
            bins.sort();
            assert_eq!(bins, (0..n).collect::<Vec<_>>());
        }
    }
}
