//! Target geometry of the coplanar equidistant swarm: plane angles,
//! hierarchical z-targets, the z feedforward, desired trajectories and the
//! shape factor relating `r_avg` to `r_xyd`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::J2Context;
use crate::relorbit::RelState;

/// Swarm plane `Φ(Θ_P, Θ_z-xy)` plus the distance targets derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwarmPlane {
    pub theta_p: f64,
    pub theta_zxy: f64,
    pub r_avg: f64,
    pub r_xyd: f64,
    pub delta_theta: f64,
}

impl SwarmPlane {
    /// Builds the plane and its derived targets. `theta_p` must lie in
    /// `(0, π/2)` for `r_xyd` to be meaningful; use [`SwarmPlane::try_new`]
    /// to get an error instead of a NaN target.
    pub fn new(theta_p: f64, theta_zxy: f64, r_avg: f64, ctx: &J2Context) -> Self {
        let s = shape_factor_unchecked(theta_p, theta_zxy, ctx);
        Self {
            theta_p,
            theta_zxy,
            r_avg,
            r_xyd: r_avg / s,
            delta_theta: phase_offset(theta_zxy),
        }
    }

    pub fn try_new(theta_p: f64, theta_zxy: f64, r_avg: f64, ctx: &J2Context) -> Result<Self> {
        let plane = Self::new(theta_p, theta_zxy, r_avg, ctx);
        plane.check_theta_p()?;
        if !(r_avg > 0.0) {
            return Err(Error::Domain(format!("r_avg={r_avg} must be positive")));
        }
        Ok(plane)
    }

    pub fn check_theta_p(&self) -> Result<()> {
        if self.theta_p > 0.0 && self.theta_p < FRAC_PI_2 {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "theta_P={} rad outside the open interval (0, pi/2)",
                self.theta_p
            )))
        }
    }

    /// Ratio `r_z / r_xy` on the target plane.
    pub fn z_amplitude_ratio(&self) -> Result<f64> {
        self.check_theta_p()?;
        let cd = self.delta_theta.cos();
        if cd.abs() < 1e-12 {
            return Err(Error::Degenerate(
                "cos(delta_theta) = 0: r_zd undefined at theta_zxy = 90 deg".into(),
            ));
        }
        Ok(self.theta_zxy.cos() / (self.theta_p.tan() * cd))
    }

    /// Unit normal of the plane in LVLH coordinates, oriented with a
    /// non-negative z component.
    pub fn normal_o(&self, ctx: &J2Context) -> Vector3<f64> {
        let n = Vector3::new(
            -ctx.c_plus * self.theta_zxy.cos(),
            -ctx.c_minus * self.theta_zxy.sin(),
            self.theta_p.tan(),
        );
        n.normalize()
    }
}

/// `δθ = atan(2 tan Θ_z-xy)`, continuous through ±90°.
pub fn phase_offset(theta_zxy: f64) -> f64 {
    let c = theta_zxy.cos();
    if c.abs() < 1e-300 {
        FRAC_PI_2.copysign(theta_zxy.sin())
    } else {
        (2.0 * theta_zxy.tan()).atan()
    }
}

fn shape_factor_unchecked(theta_p: f64, theta_zxy: f64, ctx: &J2Context) -> f64 {
    let s = ctx.s_j2;
    let sz = theta_zxy.sin();
    let tp = theta_p.tan();
    (0.5 * ((1.0 + 3.0 * sz * sz) / (tp * tp) + (3.0 * s + 5.0) / (1.0 - s * s))).sqrt()
}

/// Shape factor `S` with `r_xyd = r_avg / S`.
pub fn shape_factor(theta_p: f64, theta_zxy: f64, ctx: &J2Context) -> Result<f64> {
    if !(theta_p > 0.0 && theta_p < FRAC_PI_2) {
        return Err(Error::Domain(format!(
            "theta_P={theta_p} rad outside (0, pi/2)"
        )));
    }
    Ok(shape_factor_unchecked(theta_p, theta_zxy, ctx))
}

/// Hierarchical z-target for a satellite whose in-plane amplitude and phase
/// are `(r_xy, theta_xy)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZTarget {
    pub theta_zd: f64,
    pub r_zd: f64,
    pub c5d: f64,
    pub c6d: f64,
}

pub fn target_z(r_xy: f64, theta_xy: f64, plane: &SwarmPlane) -> Result<ZTarget> {
    let ratio = plane.z_amplitude_ratio()?;
    let theta_zd = theta_xy + plane.delta_theta;
    let r_zd = r_xy * ratio;
    Ok(ZTarget {
        theta_zd,
        r_zd,
        c5d: r_zd * theta_zd.cos(),
        c6d: r_zd * theta_zd.sin(),
    })
}

/// Same target expressed directly in `(C2, C3)`, which is linear and avoids
/// the phase singularity at `r_xy = 0`.
pub fn target_z_from_c23(c2: f64, c3: f64, plane: &SwarmPlane) -> Result<(f64, f64)> {
    let ratio = plane.z_amplitude_ratio()?;
    let (sd, cd) = plane.delta_theta.sin_cos();
    Ok((ratio * (c2 * cd - c3 * sd), ratio * (c3 * cd + c2 * sd)))
}

/// Open-loop z-axis feedforward: difference between the cross-track
/// accelerations of a target-frequency and a free oscillation of amplitude
/// `r_zd`. Not used in closed loop; see [`frequency_correction_uz`].
pub fn feedforward_uz(t: f64, r_zd: f64, theta_z: f64, ctx: &J2Context) -> f64 {
    let wz = ctx.omega_zref;
    let wxy = ctx.omega_xy;
    -r_zd * wz * wz * (wz * t + theta_z).sin() + r_zd * wxy * wxy * (wxy * t + theta_z).sin()
}

/// Cross-track acceleration that turns `z'' = -omega_z^2 z` into
/// `z'' = -omega_xy^2 z`.
pub fn frequency_correction_uz(z: f64, ctx: &J2Context) -> f64 {
    (ctx.omega_zref * ctx.omega_zref - ctx.omega_xy * ctx.omega_xy) * z
}

/// Desired periodic trajectory on the swarm plane.
pub fn desired_position(
    t: f64,
    plane: &SwarmPlane,
    theta_xy0: f64,
    ctx: &J2Context,
) -> Result<Vector3<f64>> {
    Ok(desired_state(t, plane, theta_xy0, ctx)?.position())
}

/// Desired trajectory with its analytic velocity.
pub fn desired_state(
    t: f64,
    plane: &SwarmPlane,
    theta_xy0: f64,
    ctx: &J2Context,
) -> Result<RelState> {
    let ratio = plane.z_amplitude_ratio()?;
    let r = plane.r_xyd;
    let w = ctx.omega_xy;
    let phi = w * t + theta_xy0;
    let phz = phi + plane.delta_theta;
    let (sp, cp) = phi.sin_cos();
    let (sz, cz) = phz.sin_cos();
    Ok(RelState {
        x: r * sp / ctx.c_plus,
        y: 2.0 * r * cp / ctx.c_minus,
        z: r * ratio * sz,
        vx: r * w * cp / ctx.c_plus,
        vy: -2.0 * r * w * sp / ctx.c_minus,
        vz: r * ratio * w * cz,
    })
}

/// Small-angle inclination difference implied by the cross-track rate,
/// `δi = ż / (ω_zref r_ref)`.
pub fn delta_inclination(vz: f64, ctx: &J2Context) -> f64 {
    vz / (ctx.omega_zref * ctx.r_ref)
}
