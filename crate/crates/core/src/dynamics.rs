//! Right-hand sides and integrators: nonlinear J2 gravity, the linearized
//! relative dynamics in the LVLH frame, and the averaged parameter-space
//! dynamics.

use nalgebra::{DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::frames::J2Context;
use crate::relorbit::{OrbitalParams, RelState};

/// Gravity gradient in the LVLH components of `P = [r_ref + x; y; z]` with
/// the two-body term along the first axis and the J2 term written for
/// argument of latitude `theta` and inclination `i`.
pub fn j2_accel(p: &Vector3<f64>, i: f64, theta: f64, ctx: &J2Context) -> Result<Vector3<f64>> {
    let r2 = p.norm_squared();
    if r2 == 0.0 {
        return Err(Error::Domain("zero-norm position".into()));
    }
    let si = i.sin();
    let (st, _) = theta.sin_cos();
    let k = ctx.k_j2 / (r2 * r2);
    Ok(Vector3::new(
        -ctx.mu_g / r2 - k * (1.0 - 3.0 * si * si * st * st),
        -k * si * si * (2.0 * theta).sin(),
        -k * (2.0 * i).sin() * st,
    ))
}

/// Two-body plus zonal J2 acceleration at `p` for a pole direction `pole`
/// (unit vector), all in one frame.
pub fn gravity_with_pole(p: &Vector3<f64>, pole: &Vector3<f64>, ctx: &J2Context) -> Vector3<f64> {
    let r2 = p.norm_squared();
    let r = r2.sqrt();
    let u = p / r;
    let s = u.dot(pole);
    let two_body = -ctx.mu_g / (r2 * r) * p;
    let j2 = -ctx.k_j2 / (r2 * r2) * ((1.0 - 5.0 * s * s) * u + 2.0 * s * pole);
    two_body + j2
}

/// Pole direction seen from an LVLH frame at argument of latitude `theta`
/// on an orbit of inclination `i`.
pub fn pole_in_lvlh(i: f64, theta: f64) -> Vector3<f64> {
    let (si, ci) = i.sin_cos();
    let (st, ct) = theta.sin_cos();
    Vector3::new(si * st, si * ct, ci)
}

/// Gravity in the Earth-centered inertial frame (pole along `z`).
pub fn gravity_eci(p: &Vector3<f64>, ctx: &J2Context) -> Vector3<f64> {
    gravity_with_pole(p, &Vector3::z(), ctx)
}

/// Linearized relative dynamics in the LVLH frame. `u` and `d` are applied
/// and disturbance accelerations (m/s^2); `l_z`, `theta_z` feed the
/// cross-track compensation forcing at time `t`.
#[allow(clippy::too_many_arguments)]
pub fn linearized_rhs(
    s: &RelState,
    u: &Vector3<f64>,
    d: &Vector3<f64>,
    t: f64,
    l_z: f64,
    theta_z: f64,
    ctx: &J2Context,
) -> RelState {
    let w = ctx.omega_xy;
    let cp = ctx.c_plus;
    let cm = ctx.c_minus;
    let wz = ctx.omega_zref;
    let xb = cp * s.x;
    let vxb = cp * s.vx;
    let vyb = cm * s.vy;
    let axb = 2.0 * w * vyb
        + 3.0 * w * w * xb
        + 4.0 * w * w * ctx.s_j2 / (cm * cm) * (2.0 * xb + vyb / w)
        + cp * (u.x + d.x);
    let ayb = -2.0 * w * vxb + cm * (u.y + d.y);
    let az = -wz * wz * s.z + 2.0 * l_z * wz * (wz * t + theta_z).cos() + u.z + d.z;
    RelState {
        x: s.vx,
        y: s.vy,
        z: s.vz,
        vx: axb / cp,
        vy: ayb / cm,
        vz: az,
    }
}

/// Stacked per-satellite parameter blocks `[C1],[C4],[C2],[C3],[C5],[C6]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub c1: DVector<f64>,
    pub c4: DVector<f64>,
    pub c2: DVector<f64>,
    pub c3: DVector<f64>,
    pub c5: DVector<f64>,
    pub c6: DVector<f64>,
}

impl ParamVector {
    pub fn zeros(n: usize) -> Self {
        let z = DVector::zeros(n);
        Self {
            c1: z.clone(),
            c4: z.clone(),
            c2: z.clone(),
            c3: z.clone(),
            c5: z.clone(),
            c6: z,
        }
    }

    pub fn n(&self) -> usize {
        self.c1.len()
    }

    pub fn from_params(ps: &[OrbitalParams]) -> Self {
        let mut pv = Self::zeros(ps.len());
        for (j, p) in ps.iter().enumerate() {
            pv.set(j, p);
        }
        pv
    }

    pub fn set(&mut self, j: usize, p: &OrbitalParams) {
        self.c1[j] = p.c1;
        self.c2[j] = p.c2;
        self.c3[j] = p.c3;
        self.c4[j] = p.c4;
        self.c5[j] = p.c5;
        self.c6[j] = p.c6;
    }

    pub fn get(&self, j: usize) -> OrbitalParams {
        OrbitalParams::from_c([
            self.c1[j], self.c2[j], self.c3[j], self.c4[j], self.c5[j], self.c6[j],
        ])
    }

    pub fn to_params(&self) -> Vec<OrbitalParams> {
        (0..self.n()).map(|j| self.get(j)).collect()
    }

    fn blocks(&self) -> [&DVector<f64>; 6] {
        [&self.c1, &self.c4, &self.c2, &self.c3, &self.c5, &self.c6]
    }

    /// Flattened in block order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|b| b.iter().copied()).collect()
    }

    pub fn from_flat(v: &[f64]) -> Result<Self> {
        if v.len() % 6 != 0 {
            return Err(Error::Dimension(format!("flat length {} not a multiple of 6", v.len())));
        }
        let n = v.len() / 6;
        let b = |k: usize| DVector::from_column_slice(&v[k * n..(k + 1) * n]);
        Ok(Self {
            c1: b(0),
            c4: b(1),
            c2: b(2),
            c3: b(3),
            c5: b(4),
            c6: b(5),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Per-axis N-vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisVectors {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
}

impl AxisVectors {
    pub fn zeros(n: usize) -> Self {
        Self {
            x: DVector::zeros(n),
            y: DVector::zeros(n),
            z: DVector::zeros(n),
        }
    }

    pub fn from_rows(rows: &[Vector3<f64>]) -> Self {
        let n = rows.len();
        Self {
            x: DVector::from_fn(n, |j, _| rows[j].x),
            y: DVector::from_fn(n, |j, _| rows[j].y),
            z: DVector::from_fn(n, |j, _| rows[j].z),
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }
}

/// Averaged parameter-space dynamics for `N` satellites.
pub fn param_rhs(
    pv: &ParamVector,
    u: &AxisVectors,
    d: &AxisVectors,
    ctx: &J2Context,
) -> Result<ParamVector> {
    let n = pv.n();
    for (name, m) in [("U", u.n()), ("d", d.n())] {
        if m != n {
            return Err(Error::Dimension(format!("{name} has {m} entries, params have {n}")));
        }
    }
    for b in pv.blocks() {
        if b.len() != n {
            return Err(Error::Dimension("parameter blocks differ in length".into()));
        }
    }
    let ux = &u.x + &d.x;
    let uy = &u.y + &d.y;
    let uz = &u.z + &d.z;
    let k0 = ctx.k_0;
    let w = ctx.omega_xy;
    let wz = ctx.omega_zref;
    Ok(ParamVector {
        c1: &uy * (k0 / 2.0),
        c4: &pv.c1 * (-ctx.epsilon_2) - &ux * k0,
        c2: &pv.c3 * (-w) + &ux * (ctx.c_minus * k0 / 2.0),
        c3: &pv.c2 * w - &uy * (ctx.c_plus * k0),
        c5: &pv.c6 * (-wz) + &uz / wz,
        c6: &pv.c5 * wz,
    })
}

/// Scratch buffers for [`rk4_step`].
#[derive(Debug, Clone, Default)]
pub struct Rk4Work {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

/// One classical RK4 step of `y' = f(t, y)` in place.
pub fn rk4_step<F>(f: &mut F, t: f64, y: &mut [f64], h: f64, w: &mut Rk4Work)
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    for b in [&mut w.k1, &mut w.k2, &mut w.k3, &mut w.k4, &mut w.tmp] {
        b.resize(n, 0.0);
    }
    f(t, y, &mut w.k1);
    for i in 0..n {
        w.tmp[i] = y[i] + 0.5 * h * w.k1[i];
    }
    f(t + 0.5 * h, &w.tmp, &mut w.k2);
    for i in 0..n {
        w.tmp[i] = y[i] + 0.5 * h * w.k2[i];
    }
    f(t + 0.5 * h, &w.tmp, &mut w.k3);
    for i in 0..n {
        w.tmp[i] = y[i] + h * w.k3[i];
    }
    f(t + h, &w.tmp, &mut w.k4);
    for i in 0..n {
        y[i] += h / 6.0 * (w.k1[i] + 2.0 * w.k2[i] + 2.0 * w.k3[i] + w.k4[i]);
    }
}

/// Fixed-step RK4 from `t0` to `t1`; the last step is shortened to land on
/// `t1`. Returns every `(t, y)` including the initial point.
pub fn rk4_propagate<F>(mut f: F, y0: &[f64], t0: f64, t1: f64, dt: f64) -> Result<Vec<(f64, Vec<f64>)>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(dt > 0.0) {
        return Err(Error::Precondition(format!("dt={dt} must be positive")));
    }
    let mut out = vec![(t0, y0.to_vec())];
    let mut y = y0.to_vec();
    let mut w = Rk4Work::default();
    let mut k: u64 = 0;
    let mut t = t0;
    while t < t1 {
        let next = (t0 + (k + 1) as f64 * dt).min(t1);
        let h = next - t;
        if h <= 0.0 {
            break;
        }
        rk4_step(&mut f, t, &mut y, h, &mut w);
        k += 1;
        t = next;
        out.push((t, y.clone()));
    }
    Ok(out)
}

/// Final state only; see [`rk4_propagate`].
pub fn rk4_final<F>(mut f: F, y0: &[f64], t0: f64, t1: f64, dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(dt > 0.0) {
        return Err(Error::Precondition(format!("dt={dt} must be positive")));
    }
    let mut y = y0.to_vec();
    let mut w = Rk4Work::default();
    let mut k: u64 = 0;
    let mut t = t0;
    while t < t1 {
        let next = (t0 + (k + 1) as f64 * dt).min(t1);
        rk4_step(&mut f, t, &mut y, next - t, &mut w);
        k += 1;
        t = next;
    }
    Ok(y)
}

/// LVLH basis (rows x̂, ŷ, ẑ) and the frame's inertial angular velocity for
/// a chief at `(r, v)` with acceleration `a`.
pub fn lvlh_frame(r: &Vector3<f64>, v: &Vector3<f64>, a: &Vector3<f64>) -> (Matrix3<f64>, Vector3<f64>) {
    let h = r.cross(v);
    let hn = h.norm();
    let rn = r.norm();
    let ex = r / rn;
    let ez = h / hn;
    let ey = ez.cross(&ex);
    let c = Matrix3::from_rows(&[ex.transpose(), ey.transpose(), ez.transpose()]);
    let omega = ex * (rn * a.dot(&ez) / hn) + ez * (hn / (rn * rn));
    (c, omega)
}

/// Relative LVLH state of a deputy offset `(dr, dv)` (inertial) from the
/// chief.
pub fn eci_offset_to_lvlh(
    c: &Matrix3<f64>,
    omega: &Vector3<f64>,
    dr: &Vector3<f64>,
    dv: &Vector3<f64>,
) -> RelState {
    let p = c * dr;
    let v = c * (dv - omega.cross(dr));
    RelState::new(p, v)
}

/// Inverse of [`eci_offset_to_lvlh`].
pub fn lvlh_to_eci_offset(
    c: &Matrix3<f64>,
    omega: &Vector3<f64>,
    s: &RelState,
) -> (Vector3<f64>, Vector3<f64>) {
    let dr = c.transpose() * s.position();
    let dv = c.transpose() * s.velocity() + omega.cross(&dr);
    (dr, dv)
}

/// Initial inertial state of the reference chief: on the ascending node at
/// `r_ref`, speed `c+ ω0 r_ref`, inclination `i_ref`.
pub fn chief_initial_state(ctx: &J2Context) -> (Vector3<f64>, Vector3<f64>) {
    let (si, ci) = ctx.i_ref.sin_cos();
    let r = Vector3::new(ctx.r_ref, 0.0, 0.0);
    let v = Vector3::new(0.0, ci, si) * (ctx.c_plus * ctx.omega_0 * ctx.r_ref);
    (r, v)
}
