use super::freq::{sigma_max, ResponseEvaluator};
use super::{invert_checked, StateSpace, C64};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, Schur};

const SCHUR_EPS: f64 = 1e-14;
const SCHUR_MAX_ITER: usize = 10_000;

pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<C64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(a.clone(), SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Numerical("eigenvalue iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

fn spectral_radius(eig: &[C64]) -> f64 {
    eig.iter().map(|l| l.norm()).fold(0.0, f64::max)
}

/// Stability tolerance `1e-12 * max(1, spectral radius)`.
pub fn stability_margin(eig: &[C64]) -> f64 {
    1e-12 * spectral_radius(eig).max(1.0)
}

pub fn max_real_pole(g: &StateSpace) -> Result<f64> {
    Ok(eigenvalues(&g.a)?
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn is_stable(g: &StateSpace) -> Result<bool> {
    let eig = eigenvalues(&g.a)?;
    let eps = stability_margin(&eig);
    Ok(eig.iter().all(|l| l.re < -eps))
}

fn require_stable(g: &StateSpace, context: &str) -> Result<()> {
    let eig = eigenvalues(&g.a)?;
    let eps = stability_margin(&eig);
    let max_real = eig.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    if eig.iter().any(|l| l.re >= -eps) {
        return Err(Error::Unstable {
            context: context.into(),
            max_real,
        });
    }
    Ok(())
}

/// `D - C A⁻¹ B`.
pub fn dc_gain(g: &StateSpace) -> Result<DMatrix<f64>> {
    if g.nstates() == 0 {
        return Ok(g.d.clone());
    }
    let ainv = invert_checked(&g.a).ok_or_else(|| Error::Singular("dc gain: A has a pole at the origin".into()))?;
    Ok(&g.d - &g.c * ainv * &g.b)
}

/// Solves `A X + X Aᵀ + Q = 0` for stable `A`.
///
/// Bartels-Stewart on the complex Schur form `A = U T Uᴴ`: the transformed
/// equation `T Y + Y Tᴴ = -Uᴴ Q U` is solved by back substitution.
pub fn lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if q.shape() != (n, n) {
        return Err(Error::Dimension("lyapunov: Q shape differs from A".into()));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let ac = a.map(|v| C64::new(v, 0.0));
    let schur = Schur::try_new(ac, SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let (u, t) = schur.unpack();
    let uh = u.adjoint();
    let rhs = -(&uh * q.map(|v| C64::new(v, 0.0)) * &u);
    let mut y = DMatrix::<C64>::zeros(n, n);
    for i in (0..n).rev() {
        for j in (0..n).rev() {
            let mut acc = rhs[(i, j)];
            for k in i + 1..n {
                acc -= t[(i, k)] * y[(k, j)];
            }
            for k in j + 1..n {
                acc -= y[(i, k)] * t[(j, k)].conj();
            }
            let den = t[(i, i)] + t[(j, j)].conj();
            if den.norm() < 1e-300 {
                return Err(Error::Singular("lyapunov: A has eigenvalues with λi + conj(λj) = 0".into()));
            }
            y[(i, j)] = acc / den;
        }
    }
    let x = &u * y * uh;
    let x = x.map(|v| v.re);
    Ok((&x + x.transpose()) * 0.5)
}

/// `sqrt(trace(C Wc Cᵀ))` with `A Wc + Wc Aᵀ + B Bᵀ = 0`.
pub fn h2_norm(g: &StateSpace) -> Result<f64> {
    if !g.is_strictly_proper() {
        return Err(Error::NotStrictlyProper);
    }
    if g.nstates() == 0 {
        return Ok(0.0);
    }
    require_stable(g, "h2 norm")?;
    let wc = lyapunov(&g.a, &(&g.b * g.b.transpose()))?;
    let tr = (&g.c * wc * g.c.transpose()).trace();
    if !tr.is_finite() {
        return Err(Error::Numerical("h2 norm: non-finite trace".into()));
    }
    Ok(tr.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HinfResult {
    pub norm: f64,
    /// Peak frequency in rad/s; infinity when the peak is the feedthrough.
    pub peak_rad: f64,
    /// True when the Hamiltonian iteration failed and a dense sweep was used.
    pub sweep_fallback: bool,
}

pub fn hinf_norm(g: &StateSpace, rel_tol: f64) -> Result<f64> {
    Ok(hinf_norm_with_peak(g, rel_tol)?.norm)
}

/// Peak gain over frequency.
///
/// The lower bound from a logarithmic sweep is raised by level-set iteration:
/// at each trial level the imaginary-axis eigenvalues of the Hamiltonian mark
/// the frequencies where the gain crosses the level, and the gain at their
/// midpoints becomes the next lower bound. When no crossing exists the
/// current level is an upper bound and the iteration stops.
pub fn hinf_norm_with_peak(g: &StateSpace, rel_tol: f64) -> Result<HinfResult> {
    let rel_tol = rel_tol.max(1e-12);
    let d_norm = sigma_max(&g.d.map(|v| C64::new(v, 0.0)));
    if g.nstates() == 0 {
        return Ok(HinfResult {
            norm: d_norm,
            peak_rad: f64::INFINITY,
            sweep_fallback: false,
        });
    }
    require_stable(g, "hinf norm")?;
    let eig = eigenvalues(&g.a)?;
    let eval = ResponseEvaluator::new(g);
    let rho = spectral_radius(&eig).max(1e-12);

    let mut best = d_norm;
    let mut peak = f64::INFINITY;
    let probe = |w: f64, best: &mut f64, peak: &mut f64| -> Result<()> {
        let s = eval.sigma_max_rad(w)?;
        if s > *best {
            *best = s;
            *peak = w;
        }
        Ok(())
    };
    probe(0.0, &mut best, &mut peak)?;
    let n_sweep = 400;
    for i in 0..n_sweep {
        let e = -3.0 + 6.0 * i as f64 / (n_sweep - 1) as f64;
        probe(rho * 10f64.powf(e), &mut best, &mut peak)?;
    }
    for l in &eig {
        if l.im.abs() > 0.0 {
            probe(l.im.abs(), &mut best, &mut peak)?;
        }
    }
    if best == 0.0 {
        return Ok(HinfResult {
            norm: 0.0,
            peak_rad: 0.0,
            sweep_fallback: false,
        });
    }

    for _ in 0..60 {
        let gamma = best * (1.0 + 2.0 * rel_tol);
        let crossings = match hamiltonian_crossings(g, gamma) {
            Some(c) => c,
            None => return dense_sweep(&eval, rho, &eig, best, peak),
        };
        if crossings.is_empty() {
            return Ok(HinfResult {
                norm: best,
                peak_rad: peak,
                sweep_fallback: false,
            });
        }
        let before = best;
        let mut candidates = crossings.clone();
        for w in crossings.windows(2) {
            candidates.push(0.5 * (w[0] + w[1]));
            candidates.push((w[0] * w[1]).sqrt());
        }
        for w in candidates {
            probe(w, &mut best, &mut peak)?;
        }
        if best <= before * (1.0 + 0.5 * rel_tol) {
            // Crossings found but no higher gain between them: the level set
            // is numerically degenerate. Refine locally around the peak.
            return dense_sweep(&eval, rho, &eig, best, peak);
        }
    }
    dense_sweep(&eval, rho, &eig, best, peak)
}

/// Nonnegative frequencies (rad/s) where `σ_max(G(iω)) = γ`, or `None` if the
/// Hamiltonian is ill-conditioned.
fn hamiltonian_crossings(g: &StateSpace, gamma: f64) -> Option<Vec<f64>> {
    let n = g.nstates();
    let (p, m) = g.d.shape();
    let r = DMatrix::<f64>::identity(m, m) * (gamma * gamma) - g.d.transpose() * &g.d;
    let rinv = invert_checked(&r)?;
    let dt = g.d.transpose();
    let ak = &g.a + &g.b * &rinv * &dt * &g.c;
    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&ak);
    h.view_mut((0, n), (n, n)).copy_from(&(&g.b * &rinv * g.b.transpose()));
    let inner = DMatrix::<f64>::identity(p, p) + &g.d * &rinv * &dt;
    h.view_mut((n, 0), (n, n)).copy_from(&(-(g.c.transpose() * inner * &g.c)));
    h.view_mut((n, n), (n, n)).copy_from(&(-ak.transpose()));
    if h.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let eig = eigenvalues(&h).ok()?;
    let scale = spectral_radius(&eig).max(1.0);
    let mut ws: Vec<f64> = eig
        .iter()
        .filter(|l| l.re.abs() <= 1e-7 * scale.max(l.norm()) && l.im >= 0.0)
        .map(|l| l.im)
        .collect();
    ws.sort_by(|a, b| a.total_cmp(b));
    ws.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    Some(ws)
}

fn dense_sweep(eval: &ResponseEvaluator, rho: f64, eig: &[C64], best: f64, peak: f64) -> Result<HinfResult> {
    let mut best = best;
    let mut peak = peak;
    let n = 20_000;
    for i in 0..n {
        let e = -4.0 + 8.0 * i as f64 / (n - 1) as f64;
        let w = rho * 10f64.powf(e);
        let s = eval.sigma_max_rad(w)?;
        if s > best {
            best = s;
            peak = w;
        }
    }
    for l in eig {
        let w = l.im.abs();
        if w > 0.0 {
            let s = eval.sigma_max_rad(w)?;
            if s > best {
                best = s;
                peak = w;
            }
        }
    }
    if peak.is_finite() && peak > 0.0 {
        // golden-section polish in log frequency
        let f = |lw: f64| eval.sigma_max_rad(lw.exp()).unwrap_or(0.0);
        let (mut lo, mut hi) = (peak.ln() - 0.01, peak.ln() + 0.01);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let x1 = hi - phi * (hi - lo);
            let x2 = lo + phi * (hi - lo);
            if f(x1) > f(x2) {
                hi = x2;
            } else {
                lo = x1;
            }
        }
        let w = (0.5 * (lo + hi)).exp();
        let s = eval.sigma_max_rad(w)?;
        if s > best {
            best = s;
            peak = w;
        }
    }
    Ok(HinfResult {
        norm: best,
        peak_rad: peak,
        sweep_fallback: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsys::{rad_to_hz, FrequencyGrid};

    fn tf(num: &[f64], den: &[f64]) -> StateSpace {
        StateSpace::from_transfer_function(num, den).unwrap()
    }

    /// Squared-magnitude integral over positive frequency in Hz, trapezoid rule.
    fn grid_h2_sq(g: &StateSpace) -> f64 {
        let grid = FrequencyGrid::logspace(1e-6, 1e5, 200_000).unwrap();
        let eval = ResponseEvaluator::new(g);
        let v: Vec<f64> = grid
            .points
            .iter()
            .map(|&f| eval.at_hz(f).unwrap().iter().map(|h| h.norm_sqr()).sum())
            .collect();
        2.0 * grid.trapezoid(&v)
    }

    #[test]
    fn stability_examples() {
        assert!(is_stable(&tf(&[1.0], &[1.0, 1.0])).unwrap());
        assert!(!is_stable(&tf(&[1.0], &[1.0, 0.0])).unwrap());
        assert!(!is_stable(&tf(&[1.0], &[1.0, 0.0, 1.0])).unwrap());
    }

    #[test]
    fn dc_gain_examples() {
        assert!((dc_gain(&tf(&[1.0], &[1.0, 2.0])).unwrap()[(0, 0)] - 0.5).abs() < 1e-15);
        let g = tf(&[4.0], &[1.0, 2.0 * 0.3 * 2.0, 4.0]);
        assert!((dc_gain(&g).unwrap()[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(matches!(dc_gain(&tf(&[1.0], &[1.0, 0.0])), Err(Error::Singular(_))));
    }

    #[test]
    fn h2_first_order() {
        let h = h2_norm(&tf(&[1.0], &[1.0, 1.0])).unwrap();
        assert!((h - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn h2_first_order_a2_against_grid_oracle() {
        let g = tf(&[1.0], &[1.0, 2.0]);
        let h = h2_norm(&g).unwrap();
        assert!((h - 0.5).abs() < 1e-12);
        assert!((grid_h2_sq(&g).sqrt() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn h2_second_order() {
        let (w, z) = (1.0, 0.5);
        let g = tf(&[w * w], &[1.0, 2.0 * z * w, w * w]);
        let expect = (w / (4.0 * z)).sqrt();
        assert!((h2_norm(&g).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn h2_rejects_feedthrough_and_instability() {
        assert!(matches!(h2_norm(&tf(&[1.0, 0.0], &[1.0, 1.0])), Err(Error::NotStrictlyProper)));
        assert!(matches!(h2_norm(&tf(&[1.0], &[1.0, -1.0])), Err(Error::Unstable { .. })));
    }

    #[test]
    fn lyapunov_residual_is_small() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 5.0, 0.0, -5.0, -0.1, 2.0, 0.0, 0.3, -4.0]);
        let q = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.1, 0.0, 0.1, 3.0]);
        let x = lyapunov(&a, &q).unwrap();
        let res = &a * &x + &x * a.transpose() + &q;
        assert!(res.norm() < 1e-12);
    }

    #[test]
    fn hinf_examples() {
        assert!((hinf_norm(&StateSpace::scalar_gain(3.0), 1e-8).unwrap() - 3.0).abs() < 1e-15);
        let z: f64 = 0.1;
        let g = tf(&[1.0], &[1.0, 2.0 * z, 1.0]);
        let expect = 1.0 / (2.0 * z * (1.0 - z * z).sqrt());
        let r = hinf_norm_with_peak(&g, 1e-8).unwrap();
        assert!((r.norm - expect).abs() / expect < 1e-6, "{} vs {expect}", r.norm);
        assert!(!r.sweep_fallback);
        assert!((r.peak_rad - (1.0 - 2.0 * z * z).sqrt()).abs() < 1e-3);
        let h1 = hinf_norm_with_peak(&tf(&[1.0], &[1.0, 1.0]), 1e-8).unwrap();
        assert!((h1.norm - 1.0).abs() < 1e-9);
        assert!(h1.peak_rad < 1e-3);
    }

    #[test]
    fn hinf_finds_very_light_resonance() {
        let (w, z) = (35.4, 0.001);
        let g = tf(&[w * w], &[1.0, 2.0 * z * w, w * w]);
        let expect = 1.0 / (2.0 * z * (1.0 - z * z).sqrt());
        let h = hinf_norm(&g, 1e-8).unwrap();
        assert!((h - expect).abs() / expect < 1e-6);
        let s = g.response_at_hz(rad_to_hz(w)).unwrap()[(0, 0)].norm();
        assert!(h >= s);
    }
}
