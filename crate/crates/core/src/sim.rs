//! Scenario orchestration: seeded initialization, closed-loop propagation,
//! grouping schedule, metrics.

use nalgebra::{DVector, Matrix3, SymmetricEigen, Vector3};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    chief_initial_state, eci_offset_to_lvlh, gravity_eci, linearized_rhs, lvlh_frame, lvlh_to_eci_offset,
    param_rhs, rk4_step, AxisVectors, ParamVector, Rk4Work,
};
use crate::error::{Error, Result};
use crate::frames::J2Context;
use crate::graph::{build_graph, MultiLeaderDigraph};
use crate::grouping::{centralized_grouping, scheduled_interval, GroupingConfig};
use crate::relorbit::{connectable_time_relaxed, params_from_state, state_from_params, OrbitalParams, RelState};
use crate::stabilizer::{
    coefficients, comparison_preset, control_all, derive_gains, lyapunov_value, saturate, ControllerKind, GainSet,
    DEFAULT_BARRIER_CLAMP, DEFAULT_SIGMA_EPS,
};
use crate::targets::{frequency_correction_uz, target_z_from_c23, SwarmPlane};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    TruthJ2,
    Linearized,
    AveragedParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// `|C1| <= r_s/2`, `|C4| <= r_s`.
    Dense,
    /// `|C1| <= r_s/2`, `|C4| <= 2.5 r_s`.
    LargeC1,
    /// `|C1| <= r_s/40`, `|C4| <= 2.5 r_s`.
    SmallC1,
}

impl InitKind {
    pub fn bounds(self, r_s: f64) -> (f64, f64) {
        match self {
            InitKind::Dense => (r_s / 2.0, r_s),
            InitKind::LargeC1 => (r_s / 2.0, 2.5 * r_s),
            InitKind::SmallC1 => (r_s / 40.0, 2.5 * r_s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Regroup on the grouping schedule.
    Scheduled,
    /// Group once at `t = 0` and keep it.
    FixedInitial,
    /// Fixed undirected edge list.
    Edges(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMode {
    /// Re-derived from the current graph's degree bounds at each regrouping.
    Derived,
    /// `lambda_0`, `gamma_b` given; `psi`, `f_0`, `g_0` follow.
    Explicit,
    /// The equal-magnitude comparison preset (`k_B` forced to 0).
    Comparison,
}

/// Barrier clamp used by scenarios. Under the force cap a larger clamp lets
/// out-of-interval pairs swamp the drift block and the swarm fragments.
pub const SCENARIO_BARRIER_CLAMP: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainConfig {
    pub mode: GainMode,
    pub k_a: f64,
    pub k_b: f64,
    pub k_z: f64,
    pub gamma_a: f64,
    pub lambda_0: f64,
    pub gamma_b: f64,
    pub sigma_eps: f64,
    /// `None`: `sat_side * sqrt(3)` (twice the half-diagonal).
    pub r_xy_min: Option<f64>,
    pub barrier_clamp: f64,
}

impl Default for GainConfig {
    fn default() -> Self {
        Self {
            mode: GainMode::Derived,
            k_a: 1.5e-2,
            k_b: 5e-4,
            k_z: 2e-3,
            gamma_a: 1.0,
            lambda_0: 0.0,
            gamma_b: 0.0,
            sigma_eps: DEFAULT_SIGMA_EPS,
            r_xy_min: None,
            barrier_clamp: SCENARIO_BARRIER_CLAMP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_sats: usize,
    pub model: Model,
    pub controller: ControllerKind,
    pub gains: GainConfig,
    pub theta_p: f64,
    pub theta_zxy: f64,
    pub r_avg: f64,
    pub r_s: f64,
    /// Force cap, N.
    pub f_bar: f64,
    pub mass: f64,
    pub sat_side: f64,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub init: InitKind,
    pub grouping: GroupingConfig,
    pub topology: Topology,
    /// Record spacing, s (rounded to a multiple of `dt`).
    pub log_interval: f64,
    pub r_ref: f64,
    pub i_ref: f64,
    pub compute_lyapunov: bool,
}

impl ScenarioConfig {
    /// Θ₁ plane (30°, 0°) with the constants of the deployment experiments.
    pub fn theta1(n_sats: usize, seed: u64) -> Self {
        let ctx = J2Context::leo_default();
        Self {
            n_sats,
            model: Model::TruthJ2,
            controller: ControllerKind::Main,
            gains: GainConfig::default(),
            theta_p: 30f64.to_radians(),
            theta_zxy: 0.0,
            r_avg: 0.5,
            r_s: 1.0,
            f_bar: 0.5e-6,
            mass: 0.5,
            sat_side: 0.1,
            dt: 1.0,
            t_end: 120.0 * 3600.0,
            seed,
            init: InitKind::Dense,
            grouping: GroupingConfig::new(1.0, 6, 5, 5),
            topology: Topology::Scheduled,
            log_interval: 60.0,
            r_ref: ctx.r_ref,
            i_ref: ctx.i_ref,
            compute_lyapunov: false,
        }
    }

    pub fn context(&self) -> Result<J2Context> {
        J2Context::build(self.r_ref, self.i_ref)
    }

    pub fn plane(&self, ctx: &J2Context) -> Result<SwarmPlane> {
        SwarmPlane::try_new(self.theta_p, self.theta_zxy, self.r_avg, ctx)
    }

    pub fn r_xy_min(&self) -> f64 {
        self.gains.r_xy_min.unwrap_or(self.sat_side * 3f64.sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sats < 2 {
            return Err(Error::Config(format!("n_sats={} must be at least 2", self.n_sats)));
        }
        for (name, v) in [
            ("r_avg", self.r_avg),
            ("r_s", self.r_s),
            ("f_bar", self.f_bar),
            ("mass", self.mass),
            ("sat_side", self.sat_side),
            ("dt", self.dt),
            ("log_interval", self.log_interval),
            ("k_a", self.gains.k_a),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name}={v} must be positive")));
            }
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::Config(format!("t_end={} must be non-negative", self.t_end)));
        }
        if !(self.gains.sigma_eps > 0.0 && self.gains.sigma_eps < 1.0) {
            return Err(Error::Config("sigma_eps must lie in (0, 1)".into()));
        }
        let ctx = self.context()?;
        let plane = self.plane(&ctx)?;
        if self.r_xy_min() >= plane.r_xyd {
            return Err(Error::Config(format!(
                "minimum separation {} m is not below the target distance {} m",
                self.r_xy_min(),
                plane.r_xyd
            )));
        }
        if let Topology::Edges(es) = &self.topology {
            build_graph(self.n_sats, es)?;
        }
        self.grouping.validate(&ctx)
    }
}

/// Initial parameters, relative to the reference satellite at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialSwarm {
    pub ref_index: usize,
    pub params: Vec<OrbitalParams>,
}

const MAX_INIT_ATTEMPTS: usize = 10_000;

pub fn init_swarm(cfg: &ScenarioConfig) -> Result<InitialSwarm> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ref_index = rng.random_range(0..cfg.n_sats);
    let (b1, b4) = cfg.init.bounds(cfg.r_s);
    let b = cfg.r_s / 10.0;
    let mut params = Vec::with_capacity(cfg.n_sats);
    for j in 0..cfg.n_sats {
        if j == ref_index {
            params.push(OrbitalParams::default());
            continue;
        }
        let c1 = rng.random_range(-b1..=b1);
        let c4 = rng.random_range(-b4..=b4);
        let mut found = None;
        for _ in 0..MAX_INIT_ATTEMPTS {
            let c: [f64; 4] = std::array::from_fn(|_| rng.random_range(-b..=b));
            let rxy2 = c[0] * c[0] + c[1] * c[1];
            let rz2 = c[2] * c[2] + c[3] * c[3];
            if 4.0 * rxy2 + rz2 <= cfg.r_s * cfg.r_s {
                found = Some(c);
                break;
            }
        }
        let [c2, c3, c5, c6] = found.ok_or_else(|| {
            Error::Config(format!("no admissible C2,C3,C5,C6 after {MAX_INIT_ATTEMPTS} draws"))
        })?;
        params.push(OrbitalParams::from_c([c1, c2, c3, c4, c5, c6]));
    }
    Ok(InitialSwarm { ref_index, params })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub states: Vec<RelState>,
    /// Parameters relative to the reference satellite.
    pub params: Vec<OrbitalParams>,
    /// Applied accelerations, m/s^2 (LVLH).
    pub u: Vec<Vector3<f64>>,
    /// Relaxed connectable time vs the reference satellite.
    pub t_conn: Vec<f64>,
    pub v_all: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSnapshot {
    pub t: f64,
    pub digraph: MultiLeaderDigraph,
    pub edges: Vec<(usize, usize)>,
    pub gains: GainSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub config: ScenarioConfig,
    pub ref_index: usize,
    pub r_xyd: f64,
    pub records: Vec<TickRecord>,
    pub groups: Vec<GroupSnapshot>,
    pub barrier_clamps: u64,
}

enum Propagator {
    Truth {
        y: Vec<f64>,
        work: Rk4Work,
    },
    Linear {
        states: Vec<RelState>,
        work: Rk4Work,
    },
    Averaged {
        pv: ParamVector,
        work: Rk4Work,
    },
}

fn chief_frame(y: &[f64], ctx: &J2Context) -> (Matrix3<f64>, Vector3<f64>) {
    let r = Vector3::new(y[0], y[1], y[2]);
    let v = Vector3::new(y[3], y[4], y[5]);
    lvlh_frame(&r, &v, &gravity_eci(&r, ctx))
}

impl Propagator {
    fn new(model: Model, init: &[RelState], ctx: &J2Context) -> Self {
        match model {
            Model::TruthJ2 => {
                let (r, v) = chief_initial_state(ctx);
                let mut y = vec![r.x, r.y, r.z, v.x, v.y, v.z];
                let (c, w) = lvlh_frame(&r, &v, &gravity_eci(&r, ctx));
                for s in init {
                    let (dr, dv) = lvlh_to_eci_offset(&c, &w, s);
                    y.extend([dr.x, dr.y, dr.z, dv.x, dv.y, dv.z]);
                }
                Propagator::Truth { y, work: Rk4Work::default() }
            }
            Model::Linearized => Propagator::Linear {
                states: init.to_vec(),
                work: Rk4Work::default(),
            },
            Model::AveragedParams => {
                let ps: Vec<OrbitalParams> = init.iter().map(|s| params_from_state(s, ctx)).collect();
                Propagator::Averaged {
                    pv: ParamVector::from_params(&ps),
                    work: Rk4Work::default(),
                }
            }
        }
    }

    fn states(&self, ctx: &J2Context) -> Vec<RelState> {
        match self {
            Propagator::Truth { y, .. } => {
                let (c, w) = chief_frame(y, ctx);
                y[6..]
                    .chunks_exact(6)
                    .map(|d| {
                        let dr = Vector3::new(d[0], d[1], d[2]);
                        let dv = Vector3::new(d[3], d[4], d[5]);
                        eci_offset_to_lvlh(&c, &w, &dr, &dv)
                    })
                    .collect()
            }
            Propagator::Linear { states, .. } => states.clone(),
            Propagator::Averaged { pv, .. } => pv.to_params().iter().map(|p| state_from_params(p, 0.0, ctx)).collect(),
        }
    }

    fn params(&self, states: &[RelState], ctx: &J2Context) -> ParamVector {
        match self {
            Propagator::Averaged { pv, .. } => pv.clone(),
            _ => {
                let ps: Vec<OrbitalParams> = states.iter().map(|s| params_from_state(s, ctx)).collect();
                ParamVector::from_params(&ps)
            }
        }
    }

    fn step(&mut self, t: f64, dt: f64, u: &[Vector3<f64>], ctx: &J2Context) {
        match self {
            Propagator::Truth { y, work } => {
                let (c, _) = chief_frame(y, ctx);
                let ct = c.transpose();
                let u_eci: Vec<Vector3<f64>> = u.iter().map(|a| ct * a).collect();
                let mut f = |_t: f64, y: &[f64], o: &mut [f64]| {
                    let r = Vector3::new(y[0], y[1], y[2]);
                    let g = gravity_eci(&r, ctx);
                    o[..3].copy_from_slice(&y[3..6]);
                    o[3..6].copy_from_slice(g.as_slice());
                    for (j, d) in y[6..].chunks_exact(6).enumerate() {
                        let dr = Vector3::new(d[0], d[1], d[2]);
                        let a = gravity_eci(&(r + dr), ctx) - g + u_eci[j];
                        let k = 6 + 6 * j;
                        o[k..k + 3].copy_from_slice(&d[3..6]);
                        o[k + 3..k + 6].copy_from_slice(a.as_slice());
                    }
                };
                rk4_step(&mut f, t, y, dt, work);
            }
            Propagator::Linear { states, work } => {
                let zero = Vector3::zeros();
                for (s, a) in states.iter_mut().zip(u) {
                    let mut y = s.to_array();
                    let mut f = |t: f64, y: &[f64], o: &mut [f64]| {
                        let st = RelState::from_array([y[0], y[1], y[2], y[3], y[4], y[5]]);
                        o.copy_from_slice(&linearized_rhs(&st, a, &zero, t, 0.0, 0.0, ctx).to_array());
                    };
                    rk4_step(&mut f, t, &mut y, dt, work);
                    *s = RelState::from_array(y);
                }
            }
            Propagator::Averaged { pv, work } => {
                let ua = AxisVectors::from_rows(u);
                let d = AxisVectors::zeros(u.len());
                let mut y = pv.to_flat();
                let mut f = |_t: f64, y: &[f64], o: &mut [f64]| {
                    let p = ParamVector::from_flat(y).expect("flat length is a multiple of 6");
                    let r = param_rhs(&p, &ua, &d, ctx).expect("matching dimensions");
                    o.copy_from_slice(&r.to_flat());
                };
                rk4_step(&mut f, t, &mut y, dt, work);
                *pv = ParamVector::from_flat(&y).expect("flat length is a multiple of 6");
            }
        }
    }
}

/// Gains for the current graph (degree bounds matter in derived mode).
pub fn resolve_gains(cfg: &ScenarioConfig, edges: &[(usize, usize)], plane: &SwarmPlane, ctx: &J2Context) -> Result<GainSet> {
    let gc = &cfg.gains;
    let mut g = match gc.mode {
        GainMode::Comparison => comparison_preset(gc.k_a, ctx),
        GainMode::Explicit => {
            let (psi, f_0, g_0) = coefficients(gc.lambda_0, gc.gamma_b, ctx)?;
            GainSet {
                k_a: gc.k_a,
                k_b: 0.0,
                k_z: 0.0,
                gamma_a: 1.0,
                gamma_b: gc.gamma_b,
                lambda_0: gc.lambda_0,
                psi,
                f_0,
                g_0,
                sigma_eps: DEFAULT_SIGMA_EPS,
                r_xy_min: 0.0,
                r_xyd: 0.0,
                barrier_clamp: DEFAULT_BARRIER_CLAMP,
            }
        }
        GainMode::Derived => {
            let mut deg = vec![0usize; cfg.n_sats];
            for &(a, b) in edges {
                deg[a] += 1;
                deg[b] += 1;
            }
            let nz: Vec<usize> = deg.into_iter().filter(|&d| d > 0).collect();
            let dmin = nz.iter().copied().min().unwrap_or(1);
            let dmax = nz.iter().copied().max().unwrap_or(1);
            derive_gains(dmin, dmax, cfg.n_sats, gc.k_a, ctx)?
        }
    };
    g.k_b = if gc.mode == GainMode::Comparison { 0.0 } else { gc.k_b };
    g.k_z = gc.k_z;
    g.gamma_a = gc.gamma_a;
    g.sigma_eps = gc.sigma_eps;
    g.r_xy_min = cfg.r_xy_min();
    g.r_xyd = plane.r_xyd;
    g.barrier_clamp = gc.barrier_clamp;
    Ok(g)
}

/// Cross-track C5 targets in the `C5 = ż/ω_z` convention used by the
/// parameter extraction.
pub fn c5_targets(pv: &ParamVector, plane: &SwarmPlane, ctx: &J2Context) -> Result<DVector<f64>> {
    let scale = ctx.omega_xy / ctx.omega_zref;
    let mut out = DVector::zeros(pv.n());
    for j in 0..pv.n() {
        let (c5d, _) = target_z_from_c23(pv.c2[j], pv.c3[j], plane)?;
        out[j] = c5d * scale;
    }
    Ok(out)
}

fn relative_to_ref(pv: &ParamVector, r: usize) -> Vec<OrbitalParams> {
    let pr = pv.get(r);
    (0..pv.n()).map(|j| pv.get(j).relative_to(&pr)).collect()
}

fn check_finite(t: f64, states: &[RelState], limit: f64) -> Result<()> {
    for (j, s) in states.iter().enumerate() {
        let a = s.to_array();
        if a.iter().any(|v| !v.is_finite() || v.abs() > limit) {
            return Err(Error::NumericalAbort {
                t,
                reason: format!("satellite {j} state {a:?} exceeds {limit:e}"),
            });
        }
    }
    Ok(())
}

/// Seeded run from the scenario's own initialization.
pub fn run(cfg: &ScenarioConfig) -> Result<RunLog> {
    let init = init_swarm(cfg)?;
    run_from(cfg, &init)
}

/// Closed-loop run from given initial parameters.
pub fn run_from(cfg: &ScenarioConfig, init: &InitialSwarm) -> Result<RunLog> {
    cfg.validate()?;
    let ctx = cfg.context()?;
    let plane = cfg.plane(&ctx)?;
    let n = cfg.n_sats;
    if init.params.len() != n || init.ref_index >= n {
        return Err(Error::Dimension(format!(
            "{} initial params / reference {} for {n} satellites",
            init.params.len(),
            init.ref_index
        )));
    }
    let init_states: Vec<RelState> = init.params.iter().map(|p| state_from_params(p, 0.0, &ctx)).collect();
    let mut prop = Propagator::new(cfg.model, &init_states, &ctx);
    let n_steps = (cfg.t_end / cfg.dt).round() as u64;
    let log_every = ((cfg.log_interval / cfg.dt).round() as u64).max(1);
    let u_max = cfg.f_bar / cfg.mass;
    let limit = 1e6 * cfg.r_s;

    let mut log = RunLog {
        config: cfg.clone(),
        ref_index: init.ref_index,
        r_xyd: plane.r_xyd,
        records: Vec::new(),
        groups: Vec::new(),
        barrier_clamps: 0,
    };
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut gains = resolve_gains(cfg, &edges, &plane, &ctx)?;
    let mut next_group_t = 0.0;

    for k in 0..=n_steps {
        let t = k as f64 * cfg.dt;
        let states = prop.states(&ctx);
        check_finite(t, &states, limit)?;
        let pv = prop.params(&states, &ctx);

        let regroup = match &cfg.topology {
            Topology::Scheduled => t >= next_group_t,
            Topology::FixedInitial | Topology::Edges(_) => k == 0,
        };
        if regroup {
            let digraph = match &cfg.topology {
                Topology::Edges(es) => {
                    let mut d = MultiLeaderDigraph::new(n);
                    let mut es: Vec<(usize, usize)> = es.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
                    es.sort_unstable();
                    d.group_edges.insert(0, es);
                    d
                }
                _ => centralized_grouping(&states, &pv.to_params(), &cfg.grouping, &plane, &ctx)?,
            };
            edges = digraph.undirected_edges();
            gains = resolve_gains(cfg, &edges, &plane, &ctx)?;
            log::debug!("t={t}: regrouped into {} edges", edges.len());
            log.groups.push(GroupSnapshot {
                t,
                digraph,
                edges: edges.clone(),
                gains,
            });
            next_group_t = t + scheduled_interval(t, cfg.t_end, &cfg.grouping.schedule);
        }

        let c5d = c5_targets(&pv, &plane, &ctx)?;
        let (ua, clamped) = control_all(cfg.controller, &pv, &c5d, &edges, &gains, &ctx);
        log.barrier_clamps += clamped as u64;
        let u: Vec<Vector3<f64>> = (0..n)
            .map(|j| {
                let mut a = Vector3::new(ua.x[j], ua.y[j], ua.z[j]);
                if cfg.controller != ControllerKind::None {
                    a.z += frequency_correction_uz(states[j].z, &ctx);
                }
                saturate(&(a * cfg.mass), cfg.f_bar, cfg.mass)
            })
            .collect();
        debug_assert!(u.iter().all(|a| a.norm() <= u_max));

        if k % log_every == 0 || k == n_steps {
            let params = relative_to_ref(&pv, init.ref_index);
            let t_conn = params
                .iter()
                .map(|p| connectable_time_relaxed(p.c1, p.c4, cfg.r_s, &ctx))
                .collect::<Result<Vec<f64>>>()?;
            let v_all = if cfg.compute_lyapunov && !edges.is_empty() {
                let g = build_graph(n, &edges)?;
                lyapunov_value(&pv, &g, &gains, &ctx).ok().map(|v| v.0)
            } else {
                None
            };
            log.records.push(TickRecord {
                t,
                states: states.clone(),
                params,
                u: u.clone(),
                t_conn,
                v_all,
            });
        }
        if k == n_steps {
            break;
        }
        prop.step(t, cfg.dt, &u, &ctx);
    }
    Ok(log)
}

/// `(‖Eᵀ[C1]‖, ‖Eᵀ[C4]‖)` over an edge list.
pub fn drift_norms(params: &[OrbitalParams], edges: &[(usize, usize)]) -> (f64, f64) {
    let mut s1 = 0.0;
    let mut s4 = 0.0;
    for &(a, b) in edges {
        s1 += (params[a].c1 - params[b].c1).powi(2);
        s4 += (params[a].c4 - params[b].c4).powi(2);
    }
    (s1.sqrt(), s4.sqrt())
}

/// Relative in-plane amplitude `r_xy` of every edge.
pub fn pair_rxy(params: &[OrbitalParams], edges: &[(usize, usize)]) -> Vec<f64> {
    edges
        .iter()
        .map(|&(a, b)| params[a].relative_to(&params[b]).r_xy)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneFit {
    pub theta_p: f64,
    pub theta_zxy: f64,
    pub rms_offplane: f64,
    /// Off-plane spread is not small against the in-plane spread.
    pub low_confidence: bool,
}

/// Best-fit plane through positions sampled at several times. Each
/// snapshot is centered on its own centroid; angles come from matching the
/// normal against `[-c+ cosΘ, -c- sinΘ, tanΘP]`.
pub fn metrics_plane_fit(snapshots: &[Vec<Vector3<f64>>], ctx: &J2Context) -> Result<PlaneFit> {
    let mut scatter = Matrix3::zeros();
    let mut count = 0usize;
    for snap in snapshots {
        if snap.len() < 3 {
            return Err(Error::Degenerate(format!("plane fit needs 3 satellites, got {}", snap.len())));
        }
        let c = snap.iter().fold(Vector3::zeros(), |a, p| a + p) / snap.len() as f64;
        for p in snap {
            let d = p - c;
            scatter += d * d.transpose();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Degenerate("no samples for plane fit".into()));
    }
    let eig = SymmetricEigen::new(scatter / count as f64);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l0, l1, l2) = (
        eig.eigenvalues[idx[0]].max(0.0),
        eig.eigenvalues[idx[1]].max(0.0),
        eig.eigenvalues[idx[2]].max(0.0),
    );
    if l2 <= 0.0 || l1 <= 1e-12 * l2 {
        return Err(Error::Degenerate("positions are collinear or coincident".into()));
    }
    let mut nrm: Vector3<f64> = eig.eigenvectors.column(idx[0]).into_owned();
    if nrm.z < 0.0 {
        nrm = -nrm;
    }
    let nb = Vector3::new(nrm.x / ctx.c_plus, nrm.y / ctx.c_minus, nrm.z);
    let theta_zxy = (-nb.y).atan2(-nb.x);
    let theta_p = nb.z.atan2(nb.x.hypot(nb.y));
    Ok(PlaneFit {
        theta_p,
        theta_zxy,
        rms_offplane: l0.sqrt(),
        low_confidence: l0 > 0.01 * l1,
    })
}
