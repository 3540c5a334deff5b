//! Orbit-level constants and the transforms between the LVLH frame and the
//! J2-scaled, swarm and normalized-swarm frames.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::targets::SwarmPlane;

/// Gravitational parameter of the Earth, m^3/s^2.
pub const MU_EARTH: f64 = 3.986e14;
/// J2 coefficient 2.633e10 km^5/s^2 expressed in m^5/s^2.
pub const K_J2_EARTH: f64 = 2.633e10 * 1e15;
/// Equatorial radius of the Earth, m.
pub const R_EARTH: f64 = 6_378_137.0;
/// Default reference radius: 500 km altitude.
pub const R_REF_DEFAULT: f64 = R_EARTH + 500_000.0;
/// Default reference inclination, rad (51.7 deg).
pub const I_REF_DEFAULT: f64 = 51.7 * std::f64::consts::PI / 180.0;

/// Constants derived from the reference orbit `(r_ref, i_ref)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct J2Context {
    pub mu_g: f64,
    pub k_j2: f64,
    pub r_ref: f64,
    pub i_ref: f64,
    pub s_j2: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub omega_0: f64,
    pub omega_xy: f64,
    pub omega_zref: f64,
    pub epsilon_2: f64,
    /// s
    pub k_0: f64,
    pub k_1: f64,
    /// Reference-orbit offset constant, evaluated as printed.
    pub c_1c: f64,
}

impl J2Context {
    /// Earth constants at the given reference radius (m) and inclination (rad).
    pub fn build(r_ref: f64, i_ref: f64) -> Result<Self> {
        if r_ref <= R_EARTH {
            return Err(Error::Domain(format!(
                "r_ref={r_ref} m is not above the Earth radius"
            )));
        }
        Self::with_constants(MU_EARTH, K_J2_EARTH, r_ref, i_ref)
    }

    /// Same as [`J2Context::build`] with explicit `mu` and `k_J2` (e.g. `k_J2 = 0`
    /// for the Clohessy-Wiltshire limit).
    pub fn with_constants(mu_g: f64, k_j2: f64, r_ref: f64, i_ref: f64) -> Result<Self> {
        if !(r_ref > 0.0) || !r_ref.is_finite() {
            return Err(Error::Domain(format!("r_ref={r_ref} must be positive")));
        }
        if !(0.0..=std::f64::consts::PI).contains(&i_ref) {
            return Err(Error::Domain(format!("i_ref={i_ref} outside [0, pi]")));
        }
        if !(mu_g > 0.0) {
            return Err(Error::Domain("mu must be positive".into()));
        }
        let r2 = r_ref * r_ref;
        let s_j2 = k_j2 * (1.0 + 3.0 * (2.0 * i_ref).cos()) / (4.0 * mu_g * r2);
        if s_j2.abs() >= 1.0 {
            return Err(Error::Domain(format!("|s_J2|={} >= 1", s_j2.abs())));
        }
        let c_plus = (1.0 + s_j2).sqrt();
        let c_minus = (1.0 - s_j2).sqrt();
        let omega_0 = (mu_g / (r2 * r_ref)).sqrt();
        let omega_xy = c_minus * omega_0;
        let cos_i = i_ref.cos();
        let sin_i = i_ref.sin();
        let omega_zref = omega_0 * (c_plus + k_j2 * cos_i * cos_i / (mu_g * r2));
        let epsilon_2 = omega_xy * (4.0 * c_plus * c_plus - c_minus * c_minus) / (c_plus * c_minus);
        let k_0 = 2.0 * c_plus / (omega_xy * c_minus);
        let k_1 = c_minus * epsilon_2 / (4.0 * c_plus * omega_xy);
        let c_1c = c_plus / (c_minus * c_minus) * c_minus * k_j2 * sin_i * sin_i
            / (2.0 * omega_zref * r2 * r2);
        Ok(Self {
            mu_g,
            k_j2,
            r_ref,
            i_ref,
            s_j2,
            c_plus,
            c_minus,
            omega_0,
            omega_xy,
            omega_zref,
            epsilon_2,
            k_0,
            k_1,
            c_1c,
        })
    }

    /// Default orbit used throughout the simulations (500 km, 51.7 deg).
    pub fn leo_default() -> Self {
        Self::build(R_REF_DEFAULT, I_REF_DEFAULT).expect("default orbit is valid")
    }

    /// Period of the in-plane relative motion, s.
    pub fn period_xy(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega_xy
    }
}

/// Frames named by the formation geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Frame {
    /// LVLH: x radial, z orbit normal.
    O,
    /// LVLH with J2 scaling `diag(c+, c-, 1)` applied.
    OJ2,
    /// Swarm frame, x normal to the swarm plane.
    S,
    /// Normalized swarm frame: desired trajectories have constant norm.
    SHat,
    /// Normalized swarm frame with the orbital rotation removed.
    SBar,
    /// Ellipse frame used by the escape-time bound.
    E,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRotation {
    pub matrix: Matrix3<f64>,
    pub from_frame: Frame,
    pub to_frame: Frame,
}

impl FrameRotation {
    pub fn new(matrix: Matrix3<f64>, from_frame: Frame, to_frame: Frame) -> Self {
        Self {
            matrix,
            from_frame,
            to_frame,
        }
    }

    /// `self ∘ inner`: first `inner`, then `self`.
    pub fn compose(&self, inner: &FrameRotation) -> Result<FrameRotation> {
        if inner.to_frame != self.from_frame {
            return Err(Error::FrameMismatch {
                lhs_from: self.from_frame,
                lhs_to: self.to_frame,
                rhs_from: inner.from_frame,
                rhs_to: inner.to_frame,
            });
        }
        Ok(FrameRotation::new(
            self.matrix * inner.matrix,
            inner.from_frame,
            self.to_frame,
        ))
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.matrix * v
    }
}

/// Rotation about the first axis in the passive convention
/// `[[1,0,0],[0,c,s],[0,-s,c]]`.
pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, s, 0.0, -s, c)
}

/// `[[c,0,-s],[0,1,0],[s,0,c]]`.
pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, -s, 0.0, 1.0, 0.0, s, 0.0, c)
}

/// `[[c,s,0],[-s,c,0],[0,0,1]]`.
pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn rot_oj2_from_o(ctx: &J2Context) -> FrameRotation {
    FrameRotation::new(
        Matrix3::from_diagonal(&Vector3::new(ctx.c_plus, ctx.c_minus, 1.0)),
        Frame::O,
        Frame::OJ2,
    )
}

pub fn rot_s_from_oj2(plane: &SwarmPlane) -> FrameRotation {
    FrameRotation::new(
        rot_y(plane.theta_p) * rot_z(plane.theta_zxy),
        Frame::OJ2,
        Frame::S,
    )
}

pub fn rot_shat_from_s(plane: &SwarmPlane) -> FrameRotation {
    let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 2.0))
        * rot_x(plane.theta_zxy)
        * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, plane.theta_p.sin()));
    FrameRotation::new(m, Frame::S, Frame::SHat)
}

/// `C^{Ŝ/O} = C^{Ŝ/S} C^{S/O_J2} C^{O_J2/O}`.
pub fn rot_shat_from_o(plane: &SwarmPlane, ctx: &J2Context) -> Result<FrameRotation> {
    plane.check_theta_p()?;
    let s_from_o = rot_s_from_oj2(plane).compose(&rot_oj2_from_o(ctx))?;
    rot_shat_from_s(plane).compose(&s_from_o)
}

/// `C^{S̄/Ŝ}(t)`: removes the orbital rotation at `omega_xy`.
pub fn rot_sbar_from_shat(t: f64, ctx: &J2Context) -> FrameRotation {
    FrameRotation::new(rot_x(ctx.omega_xy * t), Frame::SHat, Frame::SBar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn deg(d: f64) -> f64 {
        d.to_radians()
    }

    #[test]
    fn cw_limit_when_kj2_is_zero() {
        let ctx = J2Context::with_constants(MU_EARTH, 0.0, R_REF_DEFAULT, deg(30.0)).unwrap();
        assert_eq!(ctx.c_plus, 1.0);
        assert_eq!(ctx.c_minus, 1.0);
        assert_relative_eq!(ctx.epsilon_2, 3.0 * ctx.omega_xy, max_relative = 1e-14);
        assert_eq!(ctx.omega_xy, ctx.omega_0);
    }

    #[test]
    fn epsilon_identity_holds_at_default_orbit() {
        let ctx = J2Context::leo_default();
        let lhs = ctx.epsilon_2 * ctx.c_plus * ctx.c_minus;
        let rhs = (3.0 + 5.0 * ctx.s_j2) * ctx.omega_xy;
        assert_relative_eq!(lhs, rhs, max_relative = 1e-14);
        assert_relative_eq!(
            ctx.k_1 * 4.0 * ctx.c_plus * ctx.omega_xy,
            ctx.c_minus * ctx.epsilon_2,
            max_relative = 1e-14
        );
        assert!(ctx.s_j2.abs() < 1.0);
        assert!(ctx.s_j2 > 0.0);
    }

    #[test]
    fn magic_inclination_zeroes_s_j2() {
        let i = 0.5 * (-1.0f64 / 3.0).acos();
        let ctx = J2Context::build(R_REF_DEFAULT, i).unwrap();
        assert!(ctx.s_j2.abs() < 1e-15);
        assert!((i.to_degrees() - 54.7356).abs() < 1e-3);
    }

    #[test]
    fn build_rejects_bad_inputs() {
        assert!(J2Context::build(1000.0, 0.5).is_err());
        assert!(J2Context::build(R_REF_DEFAULT, -0.1).is_err());
        assert!(J2Context::with_constants(MU_EARTH, 1e40, R_REF_DEFAULT, 0.0).is_err());
    }

    #[test]
    fn build_is_bit_reproducible() {
        let a = J2Context::build(7.0e6, 0.9).unwrap();
        let b = J2Context::build(7.0e6, 0.9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn z_frequency_exceeds_xy_frequency() {
        let ctx = J2Context::leo_default();
        assert!(ctx.omega_zref > ctx.omega_xy);
        assert!(ctx.omega_xy < ctx.omega_0);
    }

    #[test]
    fn sbar_rotation_periodic_and_involutive_at_half_period() {
        let ctx = J2Context::leo_default();
        let id = Matrix3::identity();
        assert_relative_eq!(rot_sbar_from_shat(0.0, &ctx).matrix, id, epsilon = 1e-15);
        let p = ctx.period_xy();
        assert_relative_eq!(rot_sbar_from_shat(p, &ctx).matrix, id, epsilon = 1e-12);
        let half = rot_sbar_from_shat(0.5 * p, &ctx).matrix;
        assert_relative_eq!(half * half, id, epsilon = 1e-12);
        assert_relative_eq!(half[(1, 1)], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn pure_rotation_factors_are_orthonormal() {
        for a in [0.1, 0.7, 2.0, -1.3] {
            for m in [rot_x(a), rot_y(a), rot_z(a)] {
                assert_relative_eq!(m * m.transpose(), Matrix3::identity(), epsilon = 1e-12);
                assert_relative_eq!(m.determinant(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn compose_rejects_mismatched_frames() {
        let ctx = J2Context::leo_default();
        let a = rot_oj2_from_o(&ctx);
        let b = rot_sbar_from_shat(0.0, &ctx);
        assert!(matches!(a.compose(&b), Err(Error::FrameMismatch { .. })));
    }

    #[test]
    fn shat_guard_on_theta_p() {
        let ctx = J2Context::leo_default();
        let ok = SwarmPlane::new(std::f64::consts::FRAC_PI_2 - 1e-9, 0.0, 0.5, &ctx);
        assert!(rot_shat_from_o(&ok, &ctx).is_ok());
        let bad = SwarmPlane {
            theta_p: std::f64::consts::FRAC_PI_2,
            ..ok
        };
        assert!(rot_shat_from_o(&bad, &ctx).is_err());
        let zero = SwarmPlane { theta_p: 0.0, ..ok };
        assert!(rot_shat_from_o(&zero, &ctx).is_err());
    }

    #[test]
    fn shat_factors_reduce_without_j2_and_tilt() {
        let ctx = J2Context::with_constants(MU_EARTH, 0.0, R_REF_DEFAULT, 0.3).unwrap();
        let plane = SwarmPlane::new(deg(30.0), 0.0, 0.5, &ctx);
        assert_relative_eq!(rot_oj2_from_o(&ctx).matrix, Matrix3::identity());
        assert_relative_eq!(rot_s_from_oj2(&plane).matrix, rot_y(deg(30.0)), epsilon = 1e-15);
    }
}
