use super::{hz_to_rad, StateSpace, C64};
use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Fast repeated evaluation of `C (sI - A)^-1 B + D`.
///
/// `A` is reduced once to upper Hessenberg form `H = Qᵀ A Q`, so each
/// frequency costs one O(n²) Hessenberg solve per input column.
#[derive(Debug, Clone)]
pub struct ResponseEvaluator {
    h: DMatrix<f64>,
    qb: DMatrix<f64>,
    cq: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl ResponseEvaluator {
    pub fn new(g: &StateSpace) -> Self {
        let n = g.nstates();
        if n == 0 {
            return Self {
                h: DMatrix::zeros(0, 0),
                qb: DMatrix::zeros(0, g.ninputs()),
                cq: DMatrix::zeros(g.noutputs(), 0),
                d: g.d.clone(),
            };
        }
        let dscale = balance(&g.a);
        let a = DMatrix::from_fn(n, n, |i, j| g.a[(i, j)] * dscale[j] / dscale[i]);
        let b = DMatrix::from_fn(n, g.ninputs(), |i, j| g.b[(i, j)] / dscale[i]);
        let c = DMatrix::from_fn(g.noutputs(), n, |i, j| g.c[(i, j)] * dscale[j]);
        let hess = a.hessenberg();
        let q = hess.q();
        let h = hess.unpack_h();
        Self {
            qb: q.transpose() * b,
            cq: c * &q,
            h,
            d: g.d.clone(),
        }
    }

    pub fn at_hz(&self, f: f64) -> Result<DMatrix<C64>> {
        self.at_s(C64::new(0.0, hz_to_rad(f)))
    }

    pub fn at_rad(&self, w: f64) -> Result<DMatrix<C64>> {
        self.at_s(C64::new(0.0, w))
    }

    pub fn at_s(&self, s: C64) -> Result<DMatrix<C64>> {
        let n = self.h.nrows();
        let (p, m) = self.d.shape();
        let mut out = self.d.map(|v| C64::new(v, 0.0));
        if n == 0 {
            return Ok(out);
        }
        let x = self.solve(s)?;
        for i in 0..p {
            for j in 0..m {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..n {
                    acc += x[(k, j)] * self.cq[(i, k)];
                }
                out[(i, j)] += acc;
            }
        }
        Ok(out)
    }

    /// Largest singular value of the response at `w` rad/s.
    pub fn sigma_max_rad(&self, w: f64) -> Result<f64> {
        let h = self.at_rad(w)?;
        Ok(sigma_max(&h))
    }

    /// Solves `(sI - H) X = QᵀB` by Gaussian elimination with adjacent-row
    /// pivoting, which keeps the Hessenberg structure.
    fn solve(&self, s: C64) -> Result<DMatrix<C64>> {
        let n = self.h.nrows();
        let m = self.qb.ncols();
        let mut t = DMatrix::<C64>::from_fn(n, n, |i, j| {
            let v = C64::new(-self.h[(i, j)], 0.0);
            if i == j {
                v + s
            } else {
                v
            }
        });
        let mut x = self.qb.map(|v| C64::new(v, 0.0));
        let scale = self.h.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(s.norm()).max(1.0);
        for k in 0..n {
            if k + 1 < n && t[(k + 1, k)].norm() > t[(k, k)].norm() {
                t.swap_rows(k, k + 1);
                x.swap_rows(k, k + 1);
            }
            let piv = t[(k, k)];
            if piv.norm() <= 1e-14 * scale {
                return Err(Error::Singular(format!("sI - A singular at s = {s}")));
            }
            if k + 1 < n {
                let l = t[(k + 1, k)] / piv;
                if l != C64::new(0.0, 0.0) {
                    for j in k..n {
                        let v = t[(k, j)];
                        t[(k + 1, j)] -= l * v;
                    }
                    for j in 0..m {
                        let v = x[(k, j)];
                        x[(k + 1, j)] -= l * v;
                    }
                }
            }
        }
        for j in 0..m {
            for i in (0..n).rev() {
                let mut acc = x[(i, j)];
                for k in i + 1..n {
                    acc -= t[(i, k)] * x[(k, j)];
                }
                x[(i, j)] = acc / t[(i, i)];
            }
        }
        if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Singular(format!("sI - A singular at s = {s}")));
        }
        Ok(x)
    }
}

/// Power-of-two diagonal `D` making the row and column norms of `D⁻¹ A D`
/// comparable (the usual eigenvalue balancing sweep).
fn balance(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut d = vec![1.0f64; n];
    let mut done = false;
    let mut sweeps = 0;
    while !done && sweeps < 100 {
        done = true;
        sweeps += 1;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += (a[(j, i)] * d[i] / d[j]).abs();
                    r += (a[(i, j)] * d[j] / d[i]).abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let total = c + r;
            let mut f = 1.0;
            let (mut cc, mut rr) = (c, r);
            while cc < rr / 2.0 {
                cc *= 2.0;
                rr /= 2.0;
                f *= 2.0;
            }
            while cc >= rr * 2.0 {
                cc /= 2.0;
                rr *= 2.0;
                f /= 2.0;
            }
            if (cc + rr) < 0.95 * total {
                d[i] *= f;
                done = false;
            }
        }
    }
    d
}

pub(crate) fn sigma_max(h: &DMatrix<C64>) -> f64 {
    if h.nrows() == 1 || h.ncols() == 1 {
        return h.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    }
    h.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsys::{rad_to_hz, FrequencyGrid};

    #[test]
    fn first_order_half_power_point() {
        let g = StateSpace::from_transfer_function(&[1.0], &[1.0, 1.0]).unwrap();
        let h = g.response_at_hz(rad_to_hz(1.0)).unwrap();
        assert!((h[(0, 0)].norm() - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn static_gain_is_flat() {
        let g = StateSpace::scalar_gain(2.0);
        let grid = FrequencyGrid::logspace(1e-3, 1e3, 5).unwrap();
        for h in g.frequency_response(&grid).unwrap() {
            assert_eq!(h[(0, 0)], C64::new(2.0, 0.0));
        }
    }

    #[test]
    fn hessenberg_solve_matches_dense_solve() {
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                -1.0, 2.0, 0.5, 0.0, -3.0, -0.2, 1.0, 0.1, 0.4, 0.0, -2.0, 1.0, 0.0, 1.5, -1.0, -0.7,
            ],
        );
        let b = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, -1.0, 0.5]);
        let c = DMatrix::from_row_slice(1, 4, &[0.3, -1.0, 2.0, 0.1]);
        let g = StateSpace::new(a.clone(), b.clone(), c.clone(), DMatrix::zeros(1, 2)).unwrap();
        let s = C64::new(0.0, 0.77);
        let m = DMatrix::<C64>::identity(4, 4) * s - a.map(|v| C64::new(v, 0.0));
        let x = m.lu().solve(&b.map(|v| C64::new(v, 0.0))).unwrap();
        let expect = c.map(|v| C64::new(v, 0.0)) * x;
        let got = ResponseEvaluator::new(&g).at_s(s).unwrap();
        assert!((got - expect).norm() < 1e-12);
    }

    #[test]
    fn undamped_pole_on_grid_is_reported() {
        let g = StateSpace::from_transfer_function(&[1.0], &[1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(g.response_at_hz(rad_to_hz(1.0)), Err(Error::Singular(_))));
    }
}
