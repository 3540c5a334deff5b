//! Distance-based orbital stabilizer: the main and opposing networked
//! controllers, gain derivation/validation and Lyapunov diagnostics.
//!
//! Units: `k_a`, `k_b` and `k_z` are rates (1/s); `lambda_0`, `gamma_*`,
//! `psi`, `f_0`, `g_0` are dimensionless once `k_a` is in 1/s.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{AxisVectors, ParamVector};
use crate::error::{Error, Result};
use crate::frames::J2Context;
use crate::graph::SwarmGraph;
use crate::relorbit::OrbitalParams;

pub const DEFAULT_SIGMA_EPS: f64 = 0.1;
pub const DEFAULT_BARRIER_CLAMP: f64 = 1e6;

/// Twice the half-diagonal of a 0.1 m cube.
pub fn default_r_xy_min() -> f64 {
    0.1 * 3f64.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub k_a: f64,
    pub k_b: f64,
    pub k_z: f64,
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub lambda_0: f64,
    pub psi: f64,
    pub f_0: f64,
    pub g_0: f64,
    pub sigma_eps: f64,
    pub r_xy_min: f64,
    pub r_xyd: f64,
    /// Magnitude that `s(.)` is clamped to outside the barrier interval.
    pub barrier_clamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Main,
    Opp,
    None,
}

impl GainSet {
    /// Upper barrier `2 r_xyd - r_xy_min`.
    pub fn r_xy_max(&self) -> f64 {
        2.0 * self.r_xyd - self.r_xy_min
    }
}

/// `psi`, `f_0`, `g_0` from `lambda_0`, `gamma_b` (smaller-|psi| root).
pub fn coefficients(lambda_0: f64, gamma_b: f64, ctx: &J2Context) -> Result<(f64, f64, f64)> {
    let k1 = ctx.k_1;
    if (1.0 - k1).abs() < 1e-12 {
        return Err(Error::Degenerate("k_1 = 1 makes psi singular".into()));
    }
    if !(lambda_0 >= 2.0 * gamma_b && gamma_b >= 0.0) {
        return Err(Error::Precondition(format!(
            "need lambda_0 >= 2 gamma_B >= 0, got lambda_0={lambda_0}, gamma_B={gamma_b}"
        )));
    }
    let disc = (lambda_0 * lambda_0 - 4.0 * gamma_b * gamma_b).max(0.0).sqrt();
    let den = k1 / (1.0 - k1);
    let a = (-lambda_0 + disc) / den;
    let b = (-lambda_0 - disc) / den;
    let psi = if a.abs() <= b.abs() { a } else { b };
    let f_0 = psi / 2.0 - lambda_0;
    let g_0 = -k1 * f_0 - lambda_0;
    Ok((psi, f_0, g_0))
}

/// Gains whose eigenvalue sandwich endpoints are `2δ/|V|` and `2Δ`.
pub fn derive_gains(delta_min: usize, delta_max: usize, n: usize, k_a: f64, ctx: &J2Context) -> Result<GainSet> {
    if !(k_a > 0.0) {
        return Err(Error::Precondition(format!("k_A={k_a} must be positive")));
    }
    if delta_min == 0 || delta_max < delta_min || n < 2 {
        return Err(Error::Precondition(format!(
            "invalid degree bounds delta={delta_min}, Delta={delta_max}, n={n}"
        )));
    }
    let a = n as f64 / (2.0 * delta_min as f64);
    let b = 1.0 / (2.0 * delta_max as f64);
    let lambda_0 = ctx.epsilon_2 / (2.0 * k_a) * (a + b);
    let gamma_b = ctx.epsilon_2 / (4.0 * k_a) * (a - b);
    assert!(lambda_0 >= 2.0 * gamma_b, "degree bounds give lambda_0 < 2 gamma_B");
    let (psi, f_0, g_0) = coefficients(lambda_0, gamma_b, ctx)?;
    Ok(GainSet {
        k_a,
        k_b: 0.0,
        k_z: 0.0,
        gamma_a: 1.0,
        gamma_b,
        lambda_0,
        psi,
        f_0,
        g_0,
        sigma_eps: DEFAULT_SIGMA_EPS,
        r_xy_min: default_r_xy_min(),
        r_xyd: 0.0,
        barrier_clamp: DEFAULT_BARRIER_CLAMP,
    })
}

/// Gain profile used to compare the two controllers with similar input
/// magnitudes: `k_B = 0`, `f_0 = -ε2/(2k_A)`, `ψ = 0`, `γ_A = γ_B = 1`, `g_0 = 0`.
pub fn comparison_preset(k_a: f64, ctx: &J2Context) -> GainSet {
    let f_0 = -ctx.epsilon_2 / (2.0 * k_a);
    GainSet {
        k_a,
        k_b: 0.0,
        k_z: 0.0,
        gamma_a: 1.0,
        gamma_b: 1.0,
        lambda_0: -f_0,
        psi: 0.0,
        f_0,
        g_0: 0.0,
        sigma_eps: DEFAULT_SIGMA_EPS,
        r_xy_min: default_r_xy_min(),
        r_xyd: 0.0,
        barrier_clamp: DEFAULT_BARRIER_CLAMP,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub pass: bool,
    pub lower: f64,
    /// `f64::INFINITY` when `lambda_0 = 2 gamma_B`.
    pub upper: f64,
    /// Nonzero Laplacian eigenvalues outside `[lower, upper]`.
    pub violations: Vec<f64>,
}

/// Checks `(ε2/k_A)/(λ0+2γB) ≤ D+ ≤ (ε2/k_A)/(λ0-2γB)`.
pub fn check_gain_condition(g: &SwarmGraph, gains: &GainSet, ctx: &J2Context) -> GainReport {
    let num = ctx.epsilon_2 / gains.k_a;
    let lower = num / (gains.lambda_0 + 2.0 * gains.gamma_b);
    let gap = gains.lambda_0 - 2.0 * gains.gamma_b;
    let upper = if gap <= 0.0 { f64::INFINITY } else { num / gap };
    let tol = 1e-12;
    let violations: Vec<f64> = g
        .dplus
        .iter()
        .copied()
        .filter(|&d| d < lower * (1.0 - tol) || d > upper * (1.0 + tol))
        .collect();
    GainReport {
        pass: violations.is_empty(),
        lower,
        upper,
        violations,
    }
}

/// Amplitude error with barrier poles at `r_xy_min` and `2 r_xyd - r_xy_min`.
pub fn amplitude_error(r: f64, gains: &GainSet) -> Result<f64> {
    if r.is_nan() {
        return Err(Error::Domain("amplitude_error of NaN".into()));
    }
    let lo = gains.r_xy_min;
    let hi = gains.r_xy_max();
    if !(r > lo && r < hi) {
        return Err(Error::Barrier { r, lower: lo, upper: hi });
    }
    let d = r - gains.r_xyd;
    Ok(d / (r - lo) + d / (hi - r))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierEval {
    pub value: f64,
    pub clamped: bool,
}

/// [`amplitude_error`] clamped to `±barrier_clamp` (flagged) outside the
/// interval or when the pole overshoots the clamp.
pub fn amplitude_error_clamped(r: f64, gains: &GainSet) -> BarrierEval {
    let c = gains.barrier_clamp;
    match amplitude_error(r, gains) {
        Ok(v) if v.abs() <= c => BarrierEval { value: v, clamped: false },
        Ok(v) => BarrierEval { value: v.signum() * c, clamped: true },
        Err(_) => {
            let sign = if r.is_nan() {
                0.0
            } else if r >= gains.r_xyd {
                1.0
            } else {
                -1.0
            };
            BarrierEval { value: sign * c, clamped: true }
        }
    }
}

/// `sqrt((ϱ C1 + C3)^2 + τ (ς (C4 - ψ C1) + C2)^2)` of relative parameters.
pub fn rbar_xy(p: &OrbitalParams, varrho: f64, varsigma: f64, tau: f64, psi: f64) -> f64 {
    let a = varrho * p.c1 + p.c3;
    let b = varsigma * (p.c4 - psi * p.c1) + p.c2;
    (a * a + tau * b * b).sqrt()
}

/// The distance used inside both controllers, `r̄(2c+, 0, 1, ·)`.
pub fn control_distance(rel: &[f64; 6], ctx: &J2Context) -> f64 {
    let a = 2.0 * ctx.c_plus * rel[0] + rel[2];
    a.hypot(rel[1])
}

/// Relative parameters `[C1..C6]` of satellite `j` with respect to `k`
/// plus the cross-track error difference `(C5-C5d)_j - (C5-C5d)_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborTerm {
    pub rel: [f64; 6],
    pub dz_err: f64,
}

impl NeighborTerm {
    pub fn new(own: &OrbitalParams, own_c5d: f64, other: &OrbitalParams, other_c5d: f64) -> Self {
        let a = own.c();
        let b = other.c();
        Self {
            rel: std::array::from_fn(|i| a[i] - b[i]),
            dz_err: (own.c5 - own_c5d) - (other.c5 - other_c5d),
        }
    }
}

/// Input contributed by one neighbor; odd in `term`.
fn edge_input(kind: ControllerKind, term: &NeighborTerm, gains: &GainSet, ctx: &J2Context) -> (Vector3<f64>, bool) {
    let [c1, c2, _, c4, _, _] = term.rel;
    let k0 = ctx.k_0;
    let k1 = ctx.k_1;
    let e2 = ctx.epsilon_2;
    let ka = gains.k_a;
    let uz = -gains.k_z * ctx.omega_zref * term.dz_err;
    let (mut ux, mut uy) = match kind {
        ControllerKind::None => return (Vector3::zeros(), false),
        ControllerKind::Main => {
            let gg = gains.gamma_a * gains.gamma_b * gains.gamma_b;
            let coef = if gg != 0.0 {
                gg * (c4 - gains.psi * c1) + 2.0 * gains.f_0 * c1
            } else {
                2.0 * gains.f_0 * c1
            };
            (ka / (2.0 * k0) * coef, -ka / (2.0 * k0) * 2.0 * c1)
        }
        ControllerKind::Opp => (
            ka / (2.0 * k0) * gains.gamma_a * c4,
            ka / (2.0 * k0) * (-2.0 * c1 + gains.gamma_a * e2 / ka * c4),
        ),
    };
    let mut flag = false;
    if gains.k_b != 0.0 {
        let b = amplitude_error_clamped(control_distance(&term.rel, ctx), gains);
        flag = b.clamped;
        let w = ctx.c_minus / (2.0 * k0 * k1 * k1) * gains.k_b * b.value;
        match kind {
            ControllerKind::Main => {
                ux += w * (-gains.gamma_b * gains.gamma_b * c2);
                uy += w * (k1 * gains.g_0 * c2);
            }
            ControllerKind::Opp => {
                ux += w * (-k1 * k1 * c2);
                uy += w * (-k1 * e2 / ka * c2);
            }
            ControllerKind::None => unreachable!(),
        }
    }
    (Vector3::new(ux, uy, uz), flag)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub u: Vector3<f64>,
    /// At least one barrier evaluation was clamped.
    pub barrier_flag: bool,
}

fn control_sum(kind: ControllerKind, neighbors: &[NeighborTerm], gains: &GainSet, ctx: &J2Context) -> ControlOutput {
    let mut u = Vector3::zeros();
    let mut flag = false;
    for t in neighbors {
        let (du, f) = edge_input(kind, t, gains, ctx);
        u += du;
        flag |= f;
    }
    ControlOutput { u, barrier_flag: flag }
}

/// Main controller for one satellite (z feedforward excluded).
pub fn control_main(neighbors: &[NeighborTerm], gains: &GainSet, ctx: &J2Context) -> ControlOutput {
    control_sum(ControllerKind::Main, neighbors, gains, ctx)
}

/// Opposing controller for one satellite (z feedforward excluded).
pub fn control_opp(neighbors: &[NeighborTerm], gains: &GainSet, ctx: &J2Context) -> ControlOutput {
    control_sum(ControllerKind::Opp, neighbors, gains, ctx)
}

/// Inputs of all satellites over an undirected edge list. Returns the
/// per-axis inputs and the number of clamped barrier evaluations.
pub fn control_all(
    kind: ControllerKind,
    pv: &ParamVector,
    c5d: &DVector<f64>,
    edges: &[(usize, usize)],
    gains: &GainSet,
    ctx: &J2Context,
) -> (AxisVectors, usize) {
    let n = pv.n();
    let mut u = AxisVectors::zeros(n);
    let mut clamped = 0;
    for &(j, k) in edges {
        let t = NeighborTerm::new(&pv.get(j), c5d[j], &pv.get(k), c5d[k]);
        let (du, f) = edge_input(kind, &t, gains, ctx);
        clamped += f as usize;
        for (s, v) in [(j, du), (k, -du)] {
            u.x[s] += v.x;
            u.y[s] += v.y;
            u.z[s] += v.z;
        }
    }
    (u, clamped)
}

/// Per-edge weights `k_B s(r̄)` and the weighted Laplacian they assemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeightState {
    pub weights: Vec<f64>,
    pub laplacian: DMatrix<f64>,
}

pub fn edge_weights(g: &SwarmGraph, pv: &ParamVector, gains: &GainSet, ctx: &J2Context) -> EdgeWeightState {
    let mut weights = Vec::with_capacity(g.n_edges());
    let mut lap = DMatrix::zeros(g.n_vertices, g.n_vertices);
    for &(a, b) in &g.edges {
        let pa = pv.get(a).c();
        let pb = pv.get(b).c();
        let rel: [f64; 6] = std::array::from_fn(|i| pa[i] - pb[i]);
        let w = gains.k_b * amplitude_error_clamped(control_distance(&rel, ctx), gains).value;
        weights.push(w);
        lap[(a, b)] -= w;
        lap[(b, a)] -= w;
        lap[(a, a)] += w;
        lap[(b, b)] += w;
    }
    EdgeWeightState { weights, laplacian: lap }
}

fn sigma_norm(r: f64, eps: f64) -> f64 {
    ((1.0 + eps * r * r).sqrt() - 1.0) / eps
}

fn sigma_inverse(u: f64, eps: f64) -> f64 {
    let q = eps * u + 1.0;
    ((q * q - 1.0) / eps).max(0.0).sqrt()
}

// 8-point Gauss-Legendre on [-1, 1].
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// `∫ s(r) sqrt(1+ε r²) du` over the σ-norm variable `u` from `‖r_xyd‖σ` to
/// `‖r‖σ`.
pub fn potential_integral(r: f64, gains: &GainSet) -> Result<f64> {
    amplitude_error(r, gains)?;
    let eps = gains.sigma_eps;
    let u0 = sigma_norm(gains.r_xyd, eps);
    let u1 = sigma_norm(r, eps);
    let panels = 64;
    let h = (u1 - u0) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = u0 + (p as f64 + 0.5) * h;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let u = mid + 0.5 * h * x;
            let rr = sigma_inverse(u, eps);
            let s = amplitude_error(rr, gains)?;
            acc += w * 0.5 * h * s * (1.0 + eps * rr * rr).sqrt();
        }
    }
    Ok(acc)
}

/// Collective potential `(V_all, V_delta)` with `Ê = E`. `V_delta` sums over
/// ordered neighbor pairs, i.e. twice per undirected edge.
pub fn lyapunov_value(pv: &ParamVector, g: &SwarmGraph, gains: &GainSet, ctx: &J2Context) -> Result<(f64, f64)> {
    if pv.n() != g.n_vertices {
        return Err(Error::Dimension(format!("{} params for {} vertices", pv.n(), g.n_vertices)));
    }
    let et = g.incidence.transpose();
    let a = &et * (&pv.c1 * 2.0);
    let b = &et * (&pv.c4 - &pv.c1 * gains.psi);
    let quad = gains.k_a / 2.0 * (a.norm_squared() + gains.gamma_a * b.norm_squared());
    let mut v_delta = 0.0;
    if gains.k_b != 0.0 {
        for &(j, k) in &g.edges {
            let pj = pv.get(j).c();
            let pk = pv.get(k).c();
            let rel: [f64; 6] = std::array::from_fn(|i| pj[i] - pk[i]);
            v_delta += 2.0 * gains.k_b * potential_integral(control_distance(&rel, ctx), gains)?;
        }
    }
    Ok((quad + v_delta, v_delta))
}

/// Caps a force at `f_bar` (direction kept) and converts it to acceleration.
/// The returned acceleration never exceeds `f_bar / mass` in floating point.
pub fn saturate(f: &Vector3<f64>, f_bar: f64, mass: f64) -> Vector3<f64> {
    let cap = f_bar / mass;
    let mut a = f / mass;
    let n = a.norm();
    if n > cap {
        a *= cap / n;
        while a.norm() > cap {
            a *= 1.0 - f64::EPSILON;
        }
    }
    a
}
