//! Rigid central body with flexible appendages under PD attitude control.
//!
//! The mechanical model keeps the three attitude coordinates and the modal
//! coordinates of every appendage:
//!
//! ```text
//! J θ̈ + Σ Lₐ η̈ₐ = T
//! Lₐᵀ θ̈ + η̈ₐ + 2ζω η̇ₐ + ω² ηₐ = 0
//! ```
//!
//! `Lₐ` maps the modal participation factors given at the appendage
//! attachment point to the spacecraft centre of mass: `R l_rot + r × R l_trans`.

use crate::error::{Error, Result};
use crate::linsys::{self, hz_to_rad, StateSpace};
use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub type Mat3 = [[f64; 3]; 3];
pub type Vec3 = [f64; 3];

fn m3(a: &Mat3) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| a[i][j])
}

fn v3(a: &Vec3) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    pub mass: f64,
    /// Inertia about the body CG, row-major, kg·m².
    pub inertia: Mat3,
    /// Body CG in the body reference frame, m.
    pub cg: Vec3,
}

impl BodyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::InvalidInput("body mass must be > 0".into()));
        }
        check_inertia(&self.inertia, "body", true)
    }

    /// Positive mass and symmetric positive-definite inertia only; used for
    /// points of the uncertainty box, where moments vary independently.
    pub fn validate_definite(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::InvalidInput("body mass must be > 0".into()));
        }
        check_inertia(&self.inertia, "body", false)
    }
}

fn check_inertia(i: &Mat3, what: &str, triangle: bool) -> Result<()> {
    let m = m3(i);
    if (m - m.transpose()).abs().max() > 1e-9 * m.abs().max().max(1.0) {
        return Err(Error::InvalidInput(format!("{what} inertia is not symmetric")));
    }
    let eig = m.symmetric_eigenvalues();
    if eig.iter().any(|l| *l <= 0.0) {
        return Err(Error::InvalidInput(format!("{what} inertia is not positive definite")));
    }
    if !triangle {
        return Ok(());
    }
    let (a, b, c) = (eig[0], eig[1], eig[2]);
    let tol = 1e-9 * (a + b + c);
    if a + b < c - tol || a + c < b - tol || b + c < a - tol {
        return Err(Error::InvalidInput(format!("{what} principal moments violate the triangle inequality")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendageParams {
    pub name: String,
    pub mass: f64,
    /// Inertia about the appendage CG in the appendage frame, row-major.
    pub inertia: Mat3,
    /// Appendage CG relative to the attachment point, appendage frame, m.
    pub cg_offset: Vec3,
    /// Attachment point in the body reference frame, m.
    pub attachment: Vec3,
    /// Rotation from appendage frame to body frame at zero drive angle, row-major.
    pub frame: Mat3,
    /// Cantilever mode frequencies, rad/s.
    pub mode_freqs: Vec<f64>,
    pub damping: Vec<f64>,
    /// Participation factors per mode: [tx, ty, tz, rx, ry, rz] at the attachment point.
    pub participation: Vec<[f64; 6]>,
}

impl AppendageParams {
    pub fn validate(&self) -> Result<()> {
        let ctx = |m: &str| Error::InvalidInput(format!("appendage `{}`: {m}", self.name));
        if !(self.mass > 0.0) {
            return Err(ctx("mass must be > 0"));
        }
        check_inertia(&self.inertia, &self.name, true)?;
        let nm = self.mode_freqs.len();
        if self.damping.len() != nm || self.participation.len() != nm {
            return Err(ctx("mode frequency, damping and participation counts differ"));
        }
        if self.mode_freqs.iter().any(|w| !(*w > 0.0)) {
            return Err(ctx("mode frequencies must be > 0"));
        }
        if self.damping.iter().any(|z| !(*z > 0.0 && *z < 1.0)) {
            return Err(ctx("damping ratios must lie in (0, 1)"));
        }
        if self.participation.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ctx("participation factors must be finite"));
        }
        let r = m3(&self.frame);
        if (r.transpose() * r - Matrix3::identity()).abs().max() > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(ctx("frame is not a proper rotation"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacecraftParams {
    pub body: BodyParams,
    pub arrays: Vec<AppendageParams>,
    /// Drive angle parameter tan(θ_r/4); all arrays rotate by θ_r about body z.
    pub sadm_tan_quarter_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AocsParams {
    pub rwa_bandwidth_hz: f64,
    pub rwa_damping: f64,
    pub star_tracker_cutoff_hz: f64,
    pub gyro_cutoff_hz: f64,
    pub gamma: f64,
    pub zeta_des: f64,
    /// Design disturbance torque per axis, N·m.
    pub t_pert: Vec3,
    /// Absolute pointing requirement per axis, rad.
    pub theta_ape: Vec3,
}

impl AocsParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.rwa_bandwidth_hz,
            self.rwa_damping,
            self.star_tracker_cutoff_hz,
            self.gyro_cutoff_hz,
            self.gamma,
            self.zeta_des,
        ];
        if pos.iter().chain(&self.t_pert).chain(&self.theta_ape).any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidInput("AOCS parameters must be positive".into()));
        }
        if self.zeta_des > 1.0 {
            return Err(Error::InvalidInput("zeta_des must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub kp: Vec3,
    pub kv: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertainParameter {
    pub name: String,
    pub nominal: f64,
    pub lower: f64,
    pub upper: f64,
}

impl UncertainParameter {
    pub fn new(name: impl Into<String>, nominal: f64, lower: f64, upper: f64) -> Result<Self> {
        let p = Self {
            name: name.into(),
            nominal,
            lower,
            upper,
        };
        p.validate()?;
        Ok(p)
    }

    /// Symmetric relative interval around `nominal`.
    pub fn relative(name: impl Into<String>, nominal: f64, frac: f64) -> Result<Self> {
        let (a, b) = (nominal * (1.0 - frac), nominal * (1.0 + frac));
        Self::new(name, nominal, a.min(b), a.max(b))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower <= self.nominal && self.nominal <= self.upper) || !self.lower.is_finite() || !self.upper.is_finite() {
            return Err(Error::InvalidInput(format!(
                "uncertain parameter `{}`: need lower <= nominal <= upper",
                self.name
            )));
        }
        Ok(())
    }

    pub fn check(&self, value: f64) -> Result<()> {
        let tol = 1e-12 * (self.upper - self.lower).abs().max(self.upper.abs()).max(1.0);
        if !(value >= self.lower - tol && value <= self.upper + tol) {
            return Err(Error::OutOfBounds {
                name: self.name.clone(),
                value,
                lower: self.lower,
                upper: self.upper,
            });
        }
        Ok(())
    }
}

fn rot_z(t: f64) -> Matrix3<f64> {
    let (s, c) = t.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn parallel_axis(m: f64, r: &Vector3<f64>) -> Matrix3<f64> {
    (Matrix3::identity() * r.dot(r) - r * r.transpose()) * m
}

/// Inertia, coupling matrices and modal data about the composite CG.
#[derive(Debug, Clone)]
pub struct MechanicalModel {
    pub j_tot: Matrix3<f64>,
    pub cg: Vector3<f64>,
    /// One 3 × modes coupling matrix per appendage.
    pub couplings: Vec<DMatrix<f64>>,
    pub freqs: Vec<Vec<f64>>,
    pub damping: Vec<Vec<f64>>,
    pub mass_matrix: DMatrix<f64>,
}

pub fn drive_angle(tan_quarter: f64) -> f64 {
    4.0 * tan_quarter.atan()
}

pub fn mechanical_model(sc: &SpacecraftParams) -> Result<MechanicalModel> {
    sc.body.validate_definite()?;
    for a in &sc.arrays {
        a.validate()?;
    }
    let rz = rot_z(drive_angle(sc.sadm_tan_quarter_angle));
    let frames: Vec<Matrix3<f64>> = sc.arrays.iter().map(|a| rz * m3(&a.frame)).collect();
    let cgs: Vec<Vector3<f64>> = sc
        .arrays
        .iter()
        .zip(&frames)
        .map(|(a, r)| v3(&a.attachment) + r * v3(&a.cg_offset))
        .collect();
    let m_tot = sc.body.mass + sc.arrays.iter().map(|a| a.mass).sum::<f64>();
    let mut cg = v3(&sc.body.cg) * sc.body.mass;
    for (a, c) in sc.arrays.iter().zip(&cgs) {
        cg += c * a.mass;
    }
    cg /= m_tot;

    let mut j = m3(&sc.body.inertia) + parallel_axis(sc.body.mass, &(v3(&sc.body.cg) - cg));
    let mut couplings = Vec::new();
    for ((a, r), c) in sc.arrays.iter().zip(&frames).zip(&cgs) {
        j += r * m3(&a.inertia) * r.transpose() + parallel_axis(a.mass, &(c - cg));
        let arm = v3(&a.attachment) - cg;
        let nm = a.mode_freqs.len();
        let mut l = DMatrix::zeros(3, nm);
        for (k, p) in a.participation.iter().enumerate() {
            let lt = r * Vector3::new(p[0], p[1], p[2]);
            let lr = r * Vector3::new(p[3], p[4], p[5]);
            let col = lr + arm.cross(&lt);
            l.set_column(k, &DMatrix::from_column_slice(3, 1, col.as_slice()).column(0));
        }
        couplings.push(l);
    }

    let jt: Mat3 = std::array::from_fn(|r| std::array::from_fn(|c| j[(r, c)]));
    check_inertia(&jt, "assembled spacecraft", true)?;

    let nm: usize = couplings.iter().map(|l| l.ncols()).sum();
    let n = 3 + nm;
    let mut mm = DMatrix::zeros(n, n);
    for r in 0..3 {
        for c in 0..3 {
            mm[(r, c)] = j[(r, c)];
        }
    }
    let mut off = 3;
    for l in &couplings {
        let k = l.ncols();
        mm.view_mut((0, off), (3, k)).copy_from(l);
        mm.view_mut((off, 0), (k, 3)).copy_from(&l.transpose());
        mm.view_mut((off, off), (k, k)).fill_with_identity();
        off += k;
    }
    if mm.clone().cholesky().is_none() {
        return Err(Error::InvalidInput(
            "assembled mass matrix is not positive definite (participation factors too large for the inertia)".into(),
        ));
    }
    Ok(MechanicalModel {
        j_tot: j,
        cg,
        couplings,
        freqs: sc.arrays.iter().map(|a| a.mode_freqs.clone()).collect(),
        damping: sc.arrays.iter().map(|a| a.damping.clone()).collect(),
        mass_matrix: mm,
    })
}

pub const PLANT_INPUTS: [&str; 3] = ["torque_x", "torque_y", "torque_z"];
pub const PLANT_OUTPUTS: [&str; 6] = ["theta_x", "theta_y", "theta_z", "rate_x", "rate_y", "rate_z"];

/// Open-loop attitude plant. Inputs: body torque (3) then one SADM torque per
/// appendage about body z. Outputs: attitude (3), rate (3).
pub fn assemble_plant(sc: &SpacecraftParams) -> Result<StateSpace> {
    let mech = mechanical_model(sc)?;
    let n = mech.mass_matrix.nrows();
    let mut k = DMatrix::zeros(n, n);
    let mut d = DMatrix::zeros(n, n);
    let mut off = 3;
    for (ws, zs) in mech.freqs.iter().zip(&mech.damping) {
        for (w, z) in ws.iter().zip(zs) {
            k[(off, off)] = w * w;
            d[(off, off)] = 2.0 * z * w;
            off += 1;
        }
    }
    let minv = mech
        .mass_matrix
        .clone()
        .cholesky()
        .expect("checked positive definite")
        .inverse();
    let na = sc.arrays.len();
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, n), (n, n)).fill_with_identity();
    a.view_mut((n, 0), (n, n)).copy_from(&(-(&minv * &k)));
    a.view_mut((n, n), (n, n)).copy_from(&(-(&minv * &d)));
    let mut f = DMatrix::zeros(n, 3 + na);
    for i in 0..3 {
        f[(i, i)] = 1.0;
    }
    for s in 0..na {
        f[(2, 3 + s)] = 1.0;
    }
    let mut b = DMatrix::zeros(2 * n, 3 + na);
    b.view_mut((n, 0), (n, 3 + na)).copy_from(&(&minv * f));
    let mut c = DMatrix::zeros(6, 2 * n);
    for i in 0..3 {
        c[(i, i)] = 1.0;
        c[(3 + i, n + i)] = 1.0;
    }
    let mut inputs: Vec<String> = PLANT_INPUTS.iter().map(|s| s.to_string()).collect();
    inputs.extend((0..na).map(|s| format!("sadm{}", s + 1)));
    StateSpace::with_names(
        a,
        b,
        c,
        DMatrix::zeros(6, 3 + na),
        inputs,
        PLANT_OUTPUTS.iter().map(|s| s.to_string()).collect(),
    )
}

/// `K_p = γ T / θ_APE`, `ω_des = sqrt(K_p / J_ii)`, `K_v = 2 ζ_des ω_des J_ii`.
pub fn size_controller(j_tot: &Matrix3<f64>, aocs: &AocsParams) -> Result<Gains> {
    aocs.validate()?;
    let mut kp = [0.0; 3];
    let mut kv = [0.0; 3];
    for i in 0..3 {
        let jii = j_tot[(i, i)];
        if !(jii > 0.0) {
            return Err(Error::InvalidInput("inertia diagonal must be positive".into()));
        }
        kp[i] = aocs.gamma * aocs.t_pert[i] / aocs.theta_ape[i];
        let w = (kp[i] / jii).sqrt();
        kv[i] = 2.0 * aocs.zeta_des * w * jii;
    }
    Ok(Gains { kp, kv })
}

pub const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

pub fn closed_loop_inputs(n_sadm: usize) -> Vec<String> {
    let mut v = Vec::new();
    for p in ["orbital", "star", "gyro"] {
        for a in AXIS_NAMES {
            v.push(format!("{p}_{a}"));
        }
    }
    v.extend((0..n_sadm).map(|s| format!("sadm{}", s + 1)));
    v
}

pub fn closed_loop_outputs() -> Vec<String> {
    AXIS_NAMES.iter().map(|a| format!("theta_{a}")).collect()
}

/// Closed loop with first-order star tracker and gyro (noise added at their
/// input), second-order wheel dynamics and the PD law
/// `T = -K_p θ_st - K_v ω_gyro`. Outputs are attitude errors divided by `e_r`.
pub fn assemble_closed_loop(plant: &StateSpace, gains: &Gains, aocs: &AocsParams, e_r: &[f64]) -> Result<StateSpace> {
    aocs.validate()?;
    if plant.noutputs() != 6 || plant.ninputs() < 3 || !plant.is_strictly_proper() {
        return Err(Error::Dimension(
            "plant must have torque inputs first, outputs [theta(3), rate(3)] and no feedthrough".into(),
        ));
    }
    if e_r.len() != 3 || e_r.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidInput("requirement normalization needs 3 positive values".into()));
    }
    let np = plant.nstates();
    let n_sadm = plant.ninputs() - 3;
    let ws = hz_to_rad(aocs.star_tracker_cutoff_hz);
    let wg = hz_to_rad(aocs.gyro_cutoff_hz);
    let wr = hz_to_rad(aocs.rwa_bandwidth_hz);
    let zr = aocs.rwa_damping;
    let (s0, g0, r0) = (np, np + 3, np + 6);
    let n = np + 12;
    let m = 9 + n_sadm;
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    let mut c = DMatrix::zeros(3, n);
    let bt = plant.b.columns(0, 3).into_owned();
    let c_theta = plant.c.rows(0, 3).into_owned();
    let c_rate = plant.c.rows(3, 3).into_owned();
    a.view_mut((0, 0), (np, np)).copy_from(&plant.a);
    a.view_mut((0, r0), (np, 3)).copy_from(&bt);
    b.view_mut((0, 0), (np, 3)).copy_from(&bt);
    for s in 0..n_sadm {
        b.view_mut((0, 9 + s), (np, 1)).copy_from(&plant.b.column(3 + s));
    }
    a.view_mut((s0, 0), (3, np)).copy_from(&(&c_theta * ws));
    a.view_mut((g0, 0), (3, np)).copy_from(&(&c_rate * wg));
    for i in 0..3 {
        a[(s0 + i, s0 + i)] = -ws;
        b[(s0 + i, 3 + i)] = ws;
        a[(g0 + i, g0 + i)] = -wg;
        b[(g0 + i, 6 + i)] = wg;
        a[(r0 + i, r0 + 3 + i)] = 1.0;
        a[(r0 + 3 + i, r0 + i)] = -wr * wr;
        a[(r0 + 3 + i, r0 + 3 + i)] = -2.0 * zr * wr;
        a[(r0 + 3 + i, s0 + i)] = -wr * wr * gains.kp[i];
        a[(r0 + 3 + i, g0 + i)] = -wr * wr * gains.kv[i];
    }
    for i in 0..3 {
        for j in 0..np {
            c[(i, j)] = c_theta[(i, j)] / e_r[i];
        }
    }
    let g = StateSpace::with_names(a, b, c, DMatrix::zeros(3, m), closed_loop_inputs(n_sadm), closed_loop_outputs())?;
    let eig = linsys::eigenvalues(&g.a)?;
    let eps = linsys::stability_margin(&eig);
    let max_real = eig.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    if max_real >= -eps {
        let mut bad: Vec<String> = eig
            .iter()
            .filter(|l| l.re >= -eps)
            .map(|l| format!("{:.4e}{:+.4e}i", l.re, l.im))
            .collect();
        bad.truncate(6);
        return Err(Error::Unstable {
            context: format!("closed loop, poles {}", bad.join(", ")),
            max_real,
        });
    }
    Ok(g)
}

pub const PARAM_NAMES: [&str; 8] = [
    "mass",
    "inertia_xx",
    "inertia_yy",
    "inertia_zz",
    "sadm_tan_quarter_angle",
    "mode_freq_1",
    "mode_freq_2",
    "mode_freq_3",
];

/// Parameterized closed loop with gains fixed at the nominal design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudy {
    pub spacecraft: SpacecraftParams,
    pub aocs: AocsParams,
    /// Output normalization e_r per axis, rad.
    pub requirement: Vec<f64>,
    pub parameters: Vec<UncertainParameter>,
    pub gains: Gains,
}

impl CaseStudy {
    pub fn new(
        spacecraft: SpacecraftParams,
        aocs: AocsParams,
        requirement: Vec<f64>,
        parameters: Vec<UncertainParameter>,
    ) -> Result<Self> {
        for p in &parameters {
            p.validate()?;
            if !PARAM_NAMES.contains(&p.name.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "unknown uncertain parameter `{}` (expected one of {})",
                    p.name,
                    PARAM_NAMES.join(", ")
                )));
            }
        }
        spacecraft.body.validate()?;
        let mech = mechanical_model(&spacecraft)?;
        let gains = size_controller(&mech.j_tot, &aocs)?;
        Ok(Self {
            spacecraft,
            aocs,
            requirement,
            parameters,
            gains,
        })
    }

    pub fn nominal_point(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.nominal).collect()
    }

    pub fn point_from_map(&self, values: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        for k in values.keys() {
            if !self.parameters.iter().any(|p| &p.name == k) {
                return Err(Error::InvalidInput(format!("unknown parameter `{k}`")));
            }
        }
        Ok(self
            .parameters
            .iter()
            .map(|p| values.get(&p.name).copied().unwrap_or(p.nominal))
            .collect())
    }

    /// Spacecraft data with the uncertain parameters set to `point`.
    pub fn spacecraft_at(&self, point: &[f64]) -> Result<SpacecraftParams> {
        if point.len() != self.parameters.len() {
            return Err(Error::Dimension(format!(
                "{} values for {} parameters",
                point.len(),
                self.parameters.len()
            )));
        }
        let mut sc = self.spacecraft.clone();
        for (p, &v) in self.parameters.iter().zip(point) {
            p.check(v)?;
            match p.name.as_str() {
                "mass" => sc.body.mass = v,
                "inertia_xx" => sc.body.inertia[0][0] = v,
                "inertia_yy" => sc.body.inertia[1][1] = v,
                "inertia_zz" => sc.body.inertia[2][2] = v,
                "sadm_tan_quarter_angle" => sc.sadm_tan_quarter_angle = v,
                name => {
                    let k: usize = name.trim_start_matches("mode_freq_").parse().expect("validated name");
                    for a in &mut sc.arrays {
                        if let Some(w) = a.mode_freqs.get_mut(k - 1) {
                            *w = v;
                        }
                    }
                }
            }
        }
        Ok(sc)
    }

    pub fn instantiate(&self, point: &[f64]) -> Result<StateSpace> {
        let sc = self.spacecraft_at(point)?;
        let plant = assemble_plant(&sc)?;
        assemble_closed_loop(&plant, &self.gains, &self.aocs, &self.requirement)
    }

    pub fn instantiate_map(&self, values: &BTreeMap<String, f64>) -> Result<StateSpace> {
        self.instantiate(&self.point_from_map(values)?)
    }

    pub fn nominal_model(&self) -> Result<StateSpace> {
        self.instantiate(&self.nominal_point())
    }
}

/// Data of the two-array reference spacecraft.
pub mod reference {
    use super::*;

    pub const TORSION_FREE: f64 = 0.0;

    pub fn body() -> BodyParams {
        BodyParams {
            mass: 1000.0,
            inertia: [[75.0, 1.0, 2.0], [1.0, 40.0, -1.0], [2.0, -1.0, 80.0]],
            cg: [0.0, 0.0, 0.0],
        }
    }

    pub fn participation() -> Vec<[f64; 6]> {
        vec![
            [0.0, 0.0, -5.12, 0.0, 12.5, 0.0],
            [0.0, 0.0, 0.0, -3.84, 0.0, 0.0],
            [0.0, 0.0, -2.97, 0.0, 2.51, 0.0],
        ]
    }

    /// Array along +z (`sign = 1`) or -z (`sign = -1`) with its span axis on
    /// the drive axis and its y axis on body x.
    pub fn array(name: &str, sign: f64) -> AppendageParams {
        AppendageParams {
            name: name.into(),
            mass: 43.0,
            inertia: [[17.0, 0.0, 0.0], [0.0, 62.0, 0.0], [0.0, 0.0, 79.0]],
            cg_offset: [2.07, 0.0, 0.0],
            attachment: [0.0, 0.0, 0.58 * sign],
            frame: [[0.0, 1.0, 0.0], [0.0, 0.0, sign], [sign, 0.0, 0.0]],
            mode_freqs: vec![5.6, 19.3, 35.4],
            damping: vec![0.005; 3],
            participation: participation(),
        }
    }

    pub fn spacecraft() -> SpacecraftParams {
        SpacecraftParams {
            body: body(),
            arrays: vec![array("array1", 1.0), array("array2", -1.0)],
            sadm_tan_quarter_angle: TORSION_FREE,
        }
    }

    pub fn aocs() -> AocsParams {
        AocsParams {
            rwa_bandwidth_hz: 100.0,
            rwa_damping: 0.7,
            star_tracker_cutoff_hz: 8.0,
            gyro_cutoff_hz: 200.0,
            gamma: 1.3,
            zeta_des: 0.7,
            t_pert: [0.03, 0.01, 0.02],
            theta_ape: ape_requirement(),
        }
    }

    pub fn ape_requirement() -> Vec3 {
        [0.1745e-3, 0.1745e-3, 0.873e-3]
    }

    pub fn rpe_requirement() -> Vec3 {
        [6e-8, 6e-8, 6e-8]
    }

    pub fn uncertainty() -> Vec<UncertainParameter> {
        vec![
            UncertainParameter::new("mass", 1000.0, 800.0, 1200.0).unwrap(),
            UncertainParameter::relative("inertia_xx", 75.0, 0.2).unwrap(),
            UncertainParameter::relative("inertia_yy", 40.0, 0.2).unwrap(),
            UncertainParameter::relative("inertia_zz", 80.0, 0.2).unwrap(),
            UncertainParameter::new("sadm_tan_quarter_angle", 0.0, -1.0, 1.0).unwrap(),
            UncertainParameter::relative("mode_freq_1", 5.6, 0.2).unwrap(),
            UncertainParameter::relative("mode_freq_2", 19.3, 0.2).unwrap(),
            UncertainParameter::relative("mode_freq_3", 35.4, 0.2).unwrap(),
        ]
    }

    pub fn case_study(requirement: Vec3) -> CaseStudy {
        CaseStudy::new(spacecraft(), aocs(), requirement.to_vec(), uncertainty()).expect("reference data is valid")
    }
}
