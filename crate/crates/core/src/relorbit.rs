//! Averaged J2 relative-orbit parameters, the closed-form relative
//! trajectory, and escape / connectable time estimators.

use std::ops::{Add, Sub};

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::J2Context;

/// Relative position (m) and velocity (m/s) in the LVLH frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RelState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
}

impl RelState {
    pub fn new(p: Vector3<f64>, v: Vector3<f64>) -> Self {
        Self {
            x: p.x,
            y: p.y,
            z: p.z,
            vx: v.x,
            vy: v.y,
            vz: v.z,
        }
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            x: a[0],
            y: a[1],
            z: a[2],
            vx: a[3],
            vy: a[4],
            vz: a[5],
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.vx, self.vy, self.vz]
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn velocity(&self) -> Vector3<f64> {
        Vector3::new(self.vx, self.vy, self.vz)
    }

    /// Scaled radial coordinate `x̄ = c+ x`.
    pub fn x_bar(&self, ctx: &J2Context) -> f64 {
        ctx.c_plus * self.x
    }

    /// Scaled along-track coordinate `ȳ = c- y`.
    pub fn y_bar(&self, ctx: &J2Context) -> f64 {
        ctx.c_minus * self.y
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl Sub for RelState {
    type Output = RelState;
    fn sub(self, o: RelState) -> RelState {
        RelState::new(self.position() - o.position(), self.velocity() - o.velocity())
    }
}

impl Add for RelState {
    type Output = RelState;
    fn add(self, o: RelState) -> RelState {
        RelState::new(self.position() + o.position(), self.velocity() + o.velocity())
    }
}

/// Averaged J2 relative orbital parameters and their polar views.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OrbitalParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub r_xy: f64,
    pub r_z: f64,
    pub theta_xy: f64,
    pub theta_z: f64,
    /// Cross-track amplitude growth rate, m/s.
    pub l_z: f64,
}

impl OrbitalParams {
    /// From `[C1, C2, C3, C4, C5, C6]`; derived fields recomputed, `l_z = 0`.
    pub fn from_c(c: [f64; 6]) -> Self {
        let [c1, c2, c3, c4, c5, c6] = c;
        Self {
            c1,
            c2,
            c3,
            c4,
            c5,
            c6,
            r_xy: c2.hypot(c3),
            r_z: c5.hypot(c6),
            theta_xy: c3.atan2(c2),
            theta_z: c6.atan2(c5),
            l_z: 0.0,
        }
    }

    pub fn c(&self) -> [f64; 6] {
        [self.c1, self.c2, self.c3, self.c4, self.c5, self.c6]
    }

    /// Parameters of `self` relative to `other` (`self - other`).
    pub fn relative_to(&self, other: &OrbitalParams) -> OrbitalParams {
        let a = self.c();
        let b = other.c();
        let mut p = OrbitalParams::from_c(std::array::from_fn(|i| a[i] - b[i]));
        p.l_z = self.l_z - other.l_z;
        p
    }
}

/// Escape / connectable time estimates; `f64::INFINITY` marks "never".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeTimes {
    pub t_out_min: f64,
    pub t_out_max: f64,
    pub t_conn: f64,
    pub t_conn_relaxed: f64,
}

/// Orbital indices at estimation time `t = 0`, with `ω_z = ω_zref`.
pub fn params_from_state(s: &RelState, ctx: &J2Context) -> OrbitalParams {
    let w = ctx.omega_xy;
    let xb = ctx.c_plus * s.x;
    let yb = ctx.c_minus * s.y;
    let vxb = ctx.c_plus * s.vx;
    let vyb = ctx.c_minus * s.vy;
    let c1 = ctx.c_plus / (ctx.c_minus * ctx.c_minus) * (2.0 * xb + vyb / w);
    let c3 = xb - 2.0 * ctx.c_plus * c1;
    let c4 = (yb - 2.0 * vxb / w) / ctx.c_minus;
    let c2 = (yb - ctx.c_minus * c4) / 2.0;
    let c5 = s.vz / ctx.omega_zref;
    let c6 = s.z;
    OrbitalParams::from_c([c1, c2, c3, c4, c5, c6])
}

/// Closed-form trajectory predicted from parameters estimated at `t = 0`.
pub fn state_from_params(p: &OrbitalParams, t: f64, ctx: &J2Context) -> RelState {
    let w = ctx.omega_xy;
    let wz = ctx.omega_zref;
    let (s, c) = (w * t).sin_cos();
    let (sz, cz) = (wz * t).sin_cos();
    // r_xy sin(wt + θ_xy) and r_xy cos(wt + θ_xy) written through C2, C3.
    let a_sin = p.c3 * c + p.c2 * s;
    let a_cos = p.c2 * c - p.c3 * s;
    let x = 2.0 * p.c1 + a_sin / ctx.c_plus;
    let y = p.c4 - ctx.epsilon_2 * p.c1 * t + 2.0 * a_cos / ctx.c_minus;
    let vx = w * a_cos / ctx.c_plus;
    let vy = -ctx.epsilon_2 * p.c1 - 2.0 * w * a_sin / ctx.c_minus;
    let mut z = p.c6 * cz + p.c5 * sz;
    let mut vz = wz * (p.c5 * cz - p.c6 * sz);
    if p.l_z != 0.0 {
        let ph = wz * t + p.theta_z;
        z += p.l_z * t * ph.sin();
        vz += p.l_z * ph.sin() + p.l_z * t * wz * ph.cos();
    }
    RelState {
        x,
        y,
        z,
        vx,
        vy,
        vz,
    }
}

/// Center of the relative ellipse at time `t`: `[2 C1, C4 - ε2 C1 t]`.
pub fn orbit_center(p: &OrbitalParams, t: f64, ctx: &J2Context) -> (f64, f64) {
    (2.0 * p.c1, p.c4 - ctx.epsilon_2 * p.c1 * t)
}

/// Relaxed connectable time: when the drifting ellipse center leaves the
/// disc of radius `r_s`. Returns `+inf` for `C1 = 0` and `0` when the
/// center can never be inside (`(2 C1)^2 > r_s^2`).
pub fn connectable_time_relaxed(c1: f64, c4: f64, r_s: f64, ctx: &J2Context) -> Result<f64> {
    if !(r_s > 0.0) {
        return Err(Error::Precondition(format!("r_s={r_s} must be positive")));
    }
    if c1 == 0.0 {
        return Ok(f64::INFINITY);
    }
    let disc = r_s * r_s - 4.0 * c1 * c1;
    if disc < 0.0 {
        return Ok(0.0);
    }
    let sq = disc.sqrt();
    let den = ctx.epsilon_2 * c1;
    let t = ((c4 + sq) / den).max((c4 - sq) / den);
    Ok(t.max(0.0))
}

/// Connectable time composed from an intermediate horizon `t0`: the time
/// spent reaching `t0` plus the remaining time from the shifted center
/// `δC4 = C4 - ε2 C1 t0`. Requires `C1 δC4 <= 0` (center moving outward).
pub fn connectable_time_shifted(
    c1: f64,
    c4: f64,
    r_s: f64,
    t0: f64,
    ctx: &J2Context,
) -> Result<f64> {
    if !(r_s > 0.0) {
        return Err(Error::Precondition(format!("r_s={r_s} must be positive")));
    }
    if c1 == 0.0 {
        return Ok(f64::INFINITY);
    }
    if t0 < 0.0 {
        return Err(Error::Precondition(format!("t0={t0} must be non-negative")));
    }
    let disc = r_s * r_s - 4.0 * c1 * c1;
    if disc < 0.0 {
        return Err(Error::Precondition("(2 C1)^2 exceeds r_s^2".into()));
    }
    let dc4 = c4 - ctx.epsilon_2 * c1 * t0;
    if c1 * dc4 > 0.0 {
        return Err(Error::Precondition(format!(
            "C1*dC4={} > 0: center still approaching at t0",
            c1 * dc4
        )));
    }
    Ok(t0 + (-dc4.abs() + disc.sqrt()) / (ctx.epsilon_2 * c1.abs()))
}

/// Intermediate horizon for [`connectable_time_shifted`]: relaxed
/// connectable time for a smaller radius `r_s0`.
pub fn shift_horizon(c1: f64, c4: f64, r_s0: f64, ctx: &J2Context) -> Result<f64> {
    if 4.0 * c1 * c1 > r_s0 * r_s0 {
        return Err(Error::Precondition(format!(
            "r_s0={r_s0} smaller than |2 C1|={}",
            2.0 * c1.abs()
        )));
    }
    connectable_time_relaxed(c1, c4, r_s0, ctx)
}

const SCAN_STEP: f64 = 1.0;
const BISECT_TOL: f64 = 1e-6;

fn bisect<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Escape and connectable times from the closed-form trajectory, by a 1 s
/// scan refined with bisection to 1e-6 s.
pub fn escape_times_numeric(
    p: &OrbitalParams,
    r_s: f64,
    horizon: f64,
    ctx: &J2Context,
) -> Result<EscapeTimes> {
    if !(horizon > 0.0) {
        return Err(Error::Precondition(format!("horizon={horizon} must be positive")));
    }
    let rs2 = r_s * r_s;
    let g = |t: f64| state_from_params(p, t, ctx).position().norm_squared() - rs2;
    let relaxed = connectable_time_relaxed(p.c1, p.c4, r_s, ctx)?;

    let mut crossings = Vec::new();
    let n = (horizon / SCAN_STEP).ceil() as usize;
    let mut t_prev = 0.0;
    let mut g_prev = g(0.0);
    let inside0 = g_prev <= 0.0;
    for k in 1..=n {
        let t = (k as f64 * SCAN_STEP).min(horizon);
        let gv = g(t);
        if (gv > 0.0) != (g_prev > 0.0) {
            crossings.push(bisect(&g, t_prev, t, BISECT_TOL));
        }
        t_prev = t;
        g_prev = gv;
    }

    if crossings.is_empty() {
        let (t_out, t_conn) = if inside0 {
            (f64::INFINITY, horizon)
        } else {
            (0.0, 0.0)
        };
        return Ok(EscapeTimes {
            t_out_min: t_out,
            t_out_max: t_out,
            t_conn,
            t_conn_relaxed: relaxed,
        });
    }

    // Inside-measure over [0, last crossing]: intervals alternate starting
    // from the initial inside/outside state.
    let mut t_conn = 0.0;
    let mut inside = inside0;
    let mut last = 0.0;
    for &tc in &crossings {
        if inside {
            t_conn += tc - last;
        }
        inside = !inside;
        last = tc;
    }
    Ok(EscapeTimes {
        t_out_min: crossings[0],
        t_out_max: *crossings.last().unwrap(),
        t_conn,
        t_conn_relaxed: relaxed,
    })
}

/// Real roots of `sum coeffs[k] t^k` via companion-matrix eigenvalues.
fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let mut deg = coeffs.len() - 1;
    while deg > 0 && coeffs[deg].abs() <= 1e-13 * scale {
        deg -= 1;
    }
    if deg == 0 {
        return Vec::new();
    }
    let lead = coeffs[deg];
    let mut m = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        m[(i, deg - 1)] = -coeffs[i] / lead;
    }
    m.complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-6 * (1.0 + z.re.abs()))
        .map(|z| z.re)
        .collect()
}

/// Maximum distance from the origin to the ellipse `c + P cos φ + Q sin φ`.
pub fn ellipse_max_distance(c: &Vector3<f64>, p: &Vector3<f64>, q: &Vector3<f64>) -> f64 {
    // Principal semi-axes: rotate the conjugate pair so that P' ⟂ Q'.
    let phi0 = 0.5 * (2.0 * p.dot(q)).atan2(p.norm_squared() - q.norm_squared());
    let (s0, c0) = phi0.sin_cos();
    let pa = p * c0 + q * s0;
    let qa = -p * s0 + q * c0;
    let a = pa.norm();
    let b = qa.norm();
    if a == 0.0 && b == 0.0 {
        return c.norm();
    }
    let (a, b, e1, e2) = if a >= b {
        (a, b, pa / a, if b > 0.0 { qa / b } else { Vector3::zeros() })
    } else {
        (b, a, qa / b, if a > 0.0 { pa / a } else { Vector3::zeros() })
    };
    // Center expressed in the ellipse frame; the out-of-plane part is constant.
    let x0 = c.dot(&e1);
    let y0 = c.dot(&e2);
    let z0sq = (c.norm_squared() - x0 * x0 - y0 * y0).max(0.0);
    let f = |phi: f64| {
        let (s, co) = phi.sin_cos();
        (x0 + a * co).powi(2) + (y0 + b * s).powi(2) + z0sq
    };
    // Stationary points of f with t = tan(φ/2):
    // B Y0 t^4 + (2 A X0 + 2(B^2 - A^2)) t^3 + (2 A X0 + 2(A^2 - B^2)) t - B Y0 = 0.
    let d = b * b - a * a;
    let coeffs = [
        -b * y0,
        2.0 * a * x0 - 2.0 * d,
        0.0,
        2.0 * a * x0 + 2.0 * d,
        b * y0,
    ];
    let mut best = f(std::f64::consts::PI).max(f(0.0));
    for t in real_roots(&coeffs) {
        let mut phi = 2.0 * t.atan();
        // Newton polish on the stationarity condition.
        for _ in 0..3 {
            let (s, co) = phi.sin_cos();
            let g = -a * x0 * s + d * s * co + b * y0 * co;
            let dg = -a * x0 * co + d * (co * co - s * s) - b * y0 * s;
            if dg.abs() > 1e-300 {
                let step = g / dg;
                if step.abs() < 0.5 {
                    phi -= step;
                }
            }
        }
        best = best.max(f(phi));
    }
    best.sqrt()
}

/// Lower bound on the first escape time, from the frozen ellipse at each
/// candidate time: the first `t` at which the farthest point of the ellipse
/// reaches `r_s`. Returns `+inf` when that never happens.
pub fn escape_time_lower_bound(p: &OrbitalParams, r_s: f64, ctx: &J2Context) -> f64 {
    let dwz = ctx.omega_zref - ctx.omega_xy;
    let d_max = |t: f64| {
        let (xo, yo) = orbit_center(p, t, ctx);
        let c = Vector3::new(xo, yo, 0.0);
        let th_z = p.theta_z + dwz * t;
        let rz = p.r_z + p.l_z * t;
        // r_xy sin(φ+θ_xy) = C3 cos φ + C2 sin φ, same pattern for z.
        let (szt, czt) = th_z.sin_cos();
        let pc = Vector3::new(p.c3 / ctx.c_plus, 2.0 * p.c2 / ctx.c_minus, rz * szt);
        let qs = Vector3::new(p.c2 / ctx.c_plus, -2.0 * p.c3 / ctx.c_minus, rz * czt);
        ellipse_max_distance(&c, &pc, &qs)
    };
    let d0 = d_max(0.0);
    if d0 >= r_s {
        return 0.0;
    }
    // Lipschitz constant of d_max(t) w.r.t. t.
    let lip = ctx.epsilon_2 * p.c1.abs() + dwz.abs() * p.r_z.abs() + p.l_z.abs();
    if lip == 0.0 {
        return f64::INFINITY;
    }
    let t_max = if p.c1 != 0.0 {
        // Beyond this the center alone is outside r_s.
        (p.c4.abs() + r_s) / (ctx.epsilon_2 * p.c1.abs()) + 1.0
    } else if dwz != 0.0 && p.l_z == 0.0 {
        2.0 * std::f64::consts::PI / dwz.abs()
    } else {
        1e9
    };
    let mut t = 0.0;
    let mut d = d0;
    let min_step = 1e-3;
    while t < t_max {
        let step = ((r_s - d) / lip).max(min_step);
        let tn = t + step;
        let dn = d_max(tn);
        if dn >= r_s {
            let g = |s: f64| d_max(s) - r_s;
            // Keep the lower end so the result stays a lower bound.
            let mut lo = t;
            let mut hi = tn;
            while hi - lo > BISECT_TOL {
                let mid = 0.5 * (lo + hi);
                if g(mid) >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return lo;
        }
        t = tn;
        d = dn;
    }
    f64::INFINITY
}
