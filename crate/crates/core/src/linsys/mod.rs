//! Continuous-time LTI state-space models.
//!
//! Frequencies are in Hz at every public boundary and converted to rad/s
//! internally through [`hz_to_rad`] and [`rad_to_hz`].

mod freq;
mod norms;

pub use freq::ResponseEvaluator;
pub use norms::{
    dc_gain, eigenvalues, h2_norm, hinf_norm, hinf_norm_with_peak, is_stable, lyapunov,
    max_real_pole, stability_margin, HinfResult,
};

use crate::error::{Error, Result};
use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type C64 = Complex<f64>;

pub fn hz_to_rad(f: f64) -> f64 {
    2.0 * PI * f
}

pub fn rad_to_hz(w: f64) -> f64 {
    w / (2.0 * PI)
}

/// Realization `x' = Ax + Bu`, `y = Cx + Du` with named channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

fn default_names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let m = b.ncols();
        let p = c.nrows();
        Self::with_names(a, b, c, d, default_names("u", m), default_names("y", p))
    }

    pub fn with_names(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        inputs: Vec<String>,
        outputs: Vec<String>,
    ) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() {
            return Err(Error::Dimension(format!("A is {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!("B has {} rows, expected {n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::Dimension(format!("C has {} cols, expected {n}", c.ncols())));
        }
        let (p, m) = (c.nrows(), b.ncols());
        if d.nrows() != p || d.ncols() != m {
            return Err(Error::Dimension(format!(
                "D is {}x{}, expected {p}x{m}",
                d.nrows(),
                d.ncols()
            )));
        }
        if inputs.len() != m || outputs.len() != p {
            return Err(Error::Dimension(format!(
                "{} input names for {m} inputs, {} output names for {p} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        for (name, mat) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} has non-finite entries")));
            }
        }
        Ok(Self {
            a,
            b,
            c,
            d,
            inputs,
            outputs,
        })
    }

    /// Static gain with no states.
    pub fn gain(k: DMatrix<f64>) -> Self {
        let (p, m) = k.shape();
        Self {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, m),
            c: DMatrix::zeros(p, 0),
            d: k,
            inputs: default_names("u", m),
            outputs: default_names("y", p),
        }
    }

    pub fn scalar_gain(k: f64) -> Self {
        Self::gain(DMatrix::from_element(1, 1, k))
    }

    /// SISO realization of `num(s)/den(s)` in controllable canonical form.
    ///
    /// Coefficients are given highest power first. The numerator degree must
    /// not exceed the denominator degree.
    pub fn from_transfer_function(num: &[f64], den: &[f64]) -> Result<Self> {
        let den: Vec<f64> = den.iter().copied().skip_while(|v| *v == 0.0).collect();
        let num: Vec<f64> = num.iter().copied().skip_while(|v| *v == 0.0).collect();
        if den.is_empty() {
            return Err(Error::InvalidInput("zero denominator".into()));
        }
        let n = den.len() - 1;
        if num.len() > den.len() {
            return Err(Error::InvalidInput("improper transfer function".into()));
        }
        let lead = den[0];
        let a_coef: Vec<f64> = den.iter().map(|v| v / lead).collect();
        let mut b_coef = vec![0.0; n + 1];
        for (i, v) in num.iter().enumerate() {
            b_coef[n + 1 - num.len() + i] = v / lead;
        }
        let d = b_coef[0];
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n.saturating_sub(1) {
            a[(i, i + 1)] = 1.0;
        }
        for j in 0..n {
            if n > 0 {
                a[(n - 1, j)] = -a_coef[n - j];
            }
        }
        let mut b = DMatrix::zeros(n, 1);
        if n > 0 {
            b[(n - 1, 0)] = 1.0;
        }
        let mut c = DMatrix::zeros(1, n);
        for j in 0..n {
            c[(0, j)] = b_coef[n - j] - a_coef[n - j] * d;
        }
        Self::new(a, b, c, DMatrix::from_element(1, 1, d))
    }

    pub fn nstates(&self) -> usize {
        self.a.nrows()
    }

    pub fn ninputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn noutputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.d.iter().all(|v| *v == 0.0)
    }

    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.inputs.iter().position(|n| n == name)
    }

    pub fn output_index(&self, name: &str) -> Option<usize> {
        self.outputs.iter().position(|n| n == name)
    }

    pub fn renamed(mut self, inputs: Vec<String>, outputs: Vec<String>) -> Result<Self> {
        if inputs.len() != self.ninputs() || outputs.len() != self.noutputs() {
            return Err(Error::Dimension("channel name count mismatch".into()));
        }
        self.inputs = inputs;
        self.outputs = outputs;
        Ok(self)
    }

    /// Subsystem restricted to the given input and output indices.
    pub fn select(&self, inputs: &[usize], outputs: &[usize]) -> Result<Self> {
        let m = self.ninputs();
        let p = self.noutputs();
        if let Some(i) = inputs.iter().find(|&&i| i >= m) {
            return Err(Error::Dimension(format!("input index {i} >= {m}")));
        }
        if let Some(o) = outputs.iter().find(|&&o| o >= p) {
            return Err(Error::Dimension(format!("output index {o} >= {p}")));
        }
        let b = self.b.select_columns(inputs);
        let c = self.c.select_rows(outputs);
        let d = self.d.select_rows(outputs).select_columns(inputs);
        Self::with_names(
            self.a.clone(),
            b,
            c,
            d,
            inputs.iter().map(|&i| self.inputs[i].clone()).collect(),
            outputs.iter().map(|&o| self.outputs[o].clone()).collect(),
        )
    }

    /// SISO channel between two named ports.
    pub fn channel(&self, input: &str, output: &str) -> Result<Self> {
        let i = self
            .input_index(input)
            .ok_or_else(|| Error::InvalidInput(format!("unknown input channel `{input}`")))?;
        let o = self
            .output_index(output)
            .ok_or_else(|| Error::InvalidInput(format!("unknown output channel `{output}`")))?;
        self.select(&[i], &[o])
    }

    /// Multiplies every output by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.c *= k;
        out.d *= k;
        out
    }

    pub fn frequency_response(&self, grid: &FrequencyGrid) -> Result<Vec<DMatrix<C64>>> {
        let eval = ResponseEvaluator::new(self);
        grid.points.iter().map(|&f| eval.at_hz(f)).collect()
    }

    pub fn response_at_hz(&self, f: f64) -> Result<DMatrix<C64>> {
        ResponseEvaluator::new(self).at_hz(f)
    }
}

/// Realization of `g2 * g1` (g1 drives g2).
pub fn series(g1: &StateSpace, g2: &StateSpace) -> Result<StateSpace> {
    if g1.noutputs() != g2.ninputs() {
        return Err(Error::Dimension(format!(
            "series: g1 has {} outputs, g2 has {} inputs",
            g1.noutputs(),
            g2.ninputs()
        )));
    }
    let (n1, n2) = (g1.nstates(), g2.nstates());
    let n = n1 + n2;
    let m = g1.ninputs();
    let p = g2.noutputs();
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (n1, n1)).copy_from(&g1.a);
    a.view_mut((n1, 0), (n2, n1)).copy_from(&(&g2.b * &g1.c));
    a.view_mut((n1, n1), (n2, n2)).copy_from(&g2.a);
    let mut b = DMatrix::zeros(n, m);
    b.view_mut((0, 0), (n1, m)).copy_from(&g1.b);
    b.view_mut((n1, 0), (n2, m)).copy_from(&(&g2.b * &g1.d));
    let mut c = DMatrix::zeros(p, n);
    c.view_mut((0, 0), (p, n1)).copy_from(&(&g2.d * &g1.c));
    c.view_mut((0, n1), (p, n2)).copy_from(&g2.c);
    let d = &g2.d * &g1.d;
    StateSpace::with_names(a, b, c, d, g1.inputs.clone(), g2.outputs.clone())
}

/// Closed loop of `plant` with `controller` in the return path:
/// `u = r + sign * K y`, `y = G u`. Returns the map `r -> y`.
pub fn feedback(plant: &StateSpace, controller: &StateSpace, sign: f64) -> Result<StateSpace> {
    if sign != 1.0 && sign != -1.0 {
        return Err(Error::InvalidInput(format!("feedback sign must be +1 or -1, got {sign}")));
    }
    let (m, p) = (plant.ninputs(), plant.noutputs());
    if controller.ninputs() != p || controller.noutputs() != m {
        return Err(Error::Dimension(format!(
            "feedback: plant is {p}x{m}, controller is {}x{}",
            controller.noutputs(),
            controller.ninputs()
        )));
    }
    let (ng, nk) = (plant.nstates(), controller.nstates());
    let e = DMatrix::<f64>::identity(m, m) - sign * &controller.d * &plant.d;
    let f = invert_checked(&e).ok_or_else(|| Error::Singular("algebraic loop: I - sign*Dk*Dg".into()))?;
    // u = F r + F s Dk Cg xg + F s Ck xk
    let u_r = f.clone();
    let u_xg = sign * &f * &controller.d * &plant.c;
    let u_xk = sign * &f * &controller.c;
    // y = Cg xg + Dg u
    let y_r = &plant.d * &u_r;
    let y_xg = &plant.c + &plant.d * &u_xg;
    let y_xk = &plant.d * &u_xk;

    let n = ng + nk;
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (ng, ng)).copy_from(&(&plant.a + &plant.b * &u_xg));
    a.view_mut((0, ng), (ng, nk)).copy_from(&(&plant.b * &u_xk));
    a.view_mut((ng, 0), (nk, ng)).copy_from(&(&controller.b * &y_xg));
    a.view_mut((ng, ng), (nk, nk)).copy_from(&(&controller.a + &controller.b * &y_xk));
    let mut b = DMatrix::zeros(n, m);
    b.view_mut((0, 0), (ng, m)).copy_from(&(&plant.b * &u_r));
    b.view_mut((ng, 0), (nk, m)).copy_from(&(&controller.b * &y_r));
    let mut c = DMatrix::zeros(p, n);
    c.view_mut((0, 0), (p, ng)).copy_from(&y_xg);
    c.view_mut((0, ng), (p, nk)).copy_from(&y_xk);
    StateSpace::with_names(a, b, c, y_r, plant.inputs.clone(), plant.outputs.clone())
}

/// Sum of two systems sharing inputs and outputs.
pub fn parallel(g1: &StateSpace, g2: &StateSpace) -> Result<StateSpace> {
    if g1.ninputs() != g2.ninputs() || g1.noutputs() != g2.noutputs() {
        return Err(Error::Dimension("parallel: channel counts differ".into()));
    }
    let (n1, n2) = (g1.nstates(), g2.nstates());
    let a = block_diag(&g1.a, &g2.a);
    let mut b = DMatrix::zeros(n1 + n2, g1.ninputs());
    b.view_mut((0, 0), (n1, g1.ninputs())).copy_from(&g1.b);
    b.view_mut((n1, 0), (n2, g1.ninputs())).copy_from(&g2.b);
    let mut c = DMatrix::zeros(g1.noutputs(), n1 + n2);
    c.view_mut((0, 0), (g1.noutputs(), n1)).copy_from(&g1.c);
    c.view_mut((0, n1), (g1.noutputs(), n2)).copy_from(&g2.c);
    StateSpace::with_names(a, b, c, &g1.d + &g2.d, g1.inputs.clone(), g1.outputs.clone())
}

/// Block-diagonal stacking: independent inputs and outputs.
pub fn append(g1: &StateSpace, g2: &StateSpace) -> Result<StateSpace> {
    let mut inputs = g1.inputs.clone();
    inputs.extend(g2.inputs.iter().cloned());
    let mut outputs = g1.outputs.clone();
    outputs.extend(g2.outputs.iter().cloned());
    StateSpace::with_names(
        block_diag(&g1.a, &g2.a),
        block_diag(&g1.b, &g2.b),
        block_diag(&g1.c, &g2.c),
        block_diag(&g1.d, &g2.d),
        inputs,
        outputs,
    )
}

pub(crate) fn block_diag(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows() + y.nrows(), x.ncols() + y.ncols());
    out.view_mut((0, 0), x.shape()).copy_from(x);
    out.view_mut((x.nrows(), x.ncols()), y.shape()).copy_from(y);
    out
}

/// LU inverse that rejects numerically singular matrices.
pub(crate) fn invert_checked(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Some(m.clone());
    }
    let lu = m.clone().lu();
    let u = lu.u();
    let diag: Vec<f64> = (0..u.nrows()).map(|i| u[(i, i)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == 0.0 || min <= 1e-14 * max.max(1.0) {
        return None;
    }
    lu.try_inverse()
}

/// Strictly increasing positive frequencies in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub points: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput("frequency grid needs at least 2 points".into()));
        }
        if points.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::InvalidInput("frequency grid points must be positive".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("frequency grid must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    pub fn logspace(f_min: f64, f_max: f64, n: usize) -> Result<Self> {
        if !(f_min > 0.0 && f_max > f_min) || n < 2 {
            return Err(Error::InvalidInput(format!("bad log grid [{f_min}, {f_max}] x {n}")));
        }
        let (l0, l1) = (f_min.log10(), f_max.log10());
        let pts = (0..n)
            .map(|i| 10f64.powf(l0 + (l1 - l0) * i as f64 / (n - 1) as f64))
            .collect();
        Self::new(pts)
    }

    /// Merges extra points, dropping near-duplicates.
    pub fn merged(&self, extra: &[f64]) -> Result<Self> {
        let mut pts: Vec<f64> = self.points.iter().chain(extra).copied().filter(|f| *f > 0.0).collect();
        pts.sort_by(|a, b| a.total_cmp(b));
        pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
        Self::new(pts)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Trapezoid rule of `values` sampled on this grid.
    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        self.points
            .windows(2)
            .zip(values.windows(2))
            .map(|(f, v)| 0.5 * (f[1] - f[0]) * (v[0] + v[1]))
            .sum()
    }
}
