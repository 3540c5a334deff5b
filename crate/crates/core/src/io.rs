//! Run configuration files and the schema=1 run-log format.
//!
//! A run directory holds `states.csv`, `params.csv`, `groups.json` and
//! `summary.json`. Floats are written with 17 significant digits so every
//! value round-trips exactly; angles are in degrees.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::ParamVector;
use crate::error::{Error, Result};
use crate::frames::J2Context;
use crate::graph::{build_graph, component_labels};
use crate::grouping::{default_schedule, GroupingConfig, ScheduleStep};
use crate::relorbit::{OrbitalParams, RelState};
use crate::sim::{
    drift_norms, metrics_plane_fit, pair_rxy, GainConfig, GainMode, InitKind, Model, RunLog, ScenarioConfig, Topology,
};
use crate::stabilizer::{lyapunov_value, ControllerKind, GainSet};

pub const SCHEMA_VERSION: u32 = 1;

pub const STATES_HEADER: [&str; 11] = [
    "t_s", "sat", "x_m", "y_m", "z_m", "vx_m_s", "vy_m_s", "vz_m_s", "ux_m_s2", "uy_m_s2", "uz_m_s2",
];

pub const PARAMS_HEADER: [&str; 14] = [
    "t_s",
    "sat",
    "c1_m",
    "c2_m",
    "c3_m",
    "c4_m",
    "c5_m",
    "c6_m",
    "r_xy_m",
    "r_z_m",
    "theta_xy_deg",
    "theta_z_deg",
    "t_conn_s",
    "v_all",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub n_sats: usize,
    pub model: Model,
    pub controller: ControllerKind,
    pub seed: u64,
    pub init: InitKind,
    pub dt_s: f64,
    pub t_end_h: f64,
    pub log_interval_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneSection {
    pub theta_p_deg: f64,
    pub theta_zxy_deg: f64,
    pub r_avg_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrbitSection {
    pub r_ref_m: f64,
    pub i_ref_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardwareSection {
    #[serde(rename = "f_bar_N")]
    pub f_bar_n: f64,
    pub mass_kg: f64,
    pub sat_side_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainsSection {
    pub mode: GainMode,
    pub k_a_per_s: f64,
    pub k_b_per_s: f64,
    pub k_z_per_s: f64,
    pub gamma_a: f64,
    pub lambda_0: f64,
    pub gamma_b: f64,
    pub sigma_eps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_xy_min_m: Option<f64>,
    pub barrier_clamp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub from_fraction: f64,
    pub interval_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Scheduled,
    FixedInitial,
    Edges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroupingSection {
    pub r_s_m: f64,
    pub n_f_max: usize,
    pub n_lf_max: usize,
    pub n_fl_max: usize,
    pub schedule: Vec<ScheduleEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trim_outer_quantile: Option<f64>,
    pub topology: TopologyKind,
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub compute_lyapunov: bool,
}

/// The TOML run configuration, `schema = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub schema: u32,
    pub scenario: ScenarioSection,
    pub plane: PlaneSection,
    #[serde(default)]
    pub orbit: OrbitSection,
    #[serde(default)]
    pub hardware: HardwareSection,
    #[serde(default)]
    pub gains: GainsSection,
    #[serde(default)]
    pub grouping: GroupingSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn preset() -> ScenarioConfig {
    ScenarioConfig::theta1(20, 1)
}

impl Default for OrbitSection {
    fn default() -> Self {
        RunConfigFile::from_scenario(&preset()).orbit
    }
}

impl Default for HardwareSection {
    fn default() -> Self {
        RunConfigFile::from_scenario(&preset()).hardware
    }
}

impl Default for GainsSection {
    fn default() -> Self {
        RunConfigFile::from_scenario(&preset()).gains
    }
}

impl Default for GroupingSection {
    fn default() -> Self {
        RunConfigFile::from_scenario(&preset()).grouping
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { compute_lyapunov: false }
    }
}

impl RunConfigFile {
    pub fn from_scenario(c: &ScenarioConfig) -> Self {
        let (topology, edges) = match &c.topology {
            Topology::Scheduled => (TopologyKind::Scheduled, Vec::new()),
            Topology::FixedInitial => (TopologyKind::FixedInitial, Vec::new()),
            Topology::Edges(es) => (TopologyKind::Edges, es.iter().map(|&(a, b)| [a, b]).collect()),
        };
        Self {
            schema: SCHEMA_VERSION,
            scenario: ScenarioSection {
                n_sats: c.n_sats,
                model: c.model,
                controller: c.controller,
                seed: c.seed,
                init: c.init,
                dt_s: c.dt,
                t_end_h: c.t_end / 3600.0,
                log_interval_s: c.log_interval,
            },
            plane: PlaneSection {
                theta_p_deg: c.theta_p.to_degrees(),
                theta_zxy_deg: c.theta_zxy.to_degrees(),
                r_avg_m: c.r_avg,
            },
            orbit: OrbitSection {
                r_ref_m: c.r_ref,
                i_ref_deg: c.i_ref.to_degrees(),
            },
            hardware: HardwareSection {
                f_bar_n: c.f_bar,
                mass_kg: c.mass,
                sat_side_m: c.sat_side,
            },
            gains: GainsSection {
                mode: c.gains.mode,
                k_a_per_s: c.gains.k_a,
                k_b_per_s: c.gains.k_b,
                k_z_per_s: c.gains.k_z,
                gamma_a: c.gains.gamma_a,
                lambda_0: c.gains.lambda_0,
                gamma_b: c.gains.gamma_b,
                sigma_eps: c.gains.sigma_eps,
                r_xy_min_m: c.gains.r_xy_min,
                barrier_clamp: c.gains.barrier_clamp,
            },
            grouping: GroupingSection {
                r_s_m: c.grouping.r_s,
                n_f_max: c.grouping.n_f_max,
                n_lf_max: c.grouping.n_lf_max,
                n_fl_max: c.grouping.n_fl_max,
                schedule: c
                    .grouping
                    .schedule
                    .iter()
                    .map(|s| ScheduleEntry {
                        from_fraction: s.from_fraction,
                        interval_s: s.interval_s,
                    })
                    .collect(),
                trim_outer_quantile: c.grouping.trim_outer_quantile,
                topology,
                edges,
            },
            output: OutputSection {
                compute_lyapunov: c.compute_lyapunov,
            },
        }
    }

    pub fn to_scenario(&self) -> Result<ScenarioConfig> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "config schema {} is not supported (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        let g = &self.grouping;
        let topology = match g.topology {
            TopologyKind::Scheduled => Topology::Scheduled,
            TopologyKind::FixedInitial => Topology::FixedInitial,
            TopologyKind::Edges => Topology::Edges(g.edges.iter().map(|e| (e[0], e[1])).collect()),
        };
        if g.topology != TopologyKind::Edges && !g.edges.is_empty() {
            return Err(Error::Config("grouping.edges is only valid with topology = \"edges\"".into()));
        }
        let schedule = if g.schedule.is_empty() {
            default_schedule()
        } else {
            g.schedule
                .iter()
                .map(|s| ScheduleStep {
                    from_fraction: s.from_fraction,
                    interval_s: s.interval_s,
                })
                .collect()
        };
        let cfg = ScenarioConfig {
            n_sats: self.scenario.n_sats,
            model: self.scenario.model,
            controller: self.scenario.controller,
            gains: GainConfig {
                mode: self.gains.mode,
                k_a: self.gains.k_a_per_s,
                k_b: self.gains.k_b_per_s,
                k_z: self.gains.k_z_per_s,
                gamma_a: self.gains.gamma_a,
                lambda_0: self.gains.lambda_0,
                gamma_b: self.gains.gamma_b,
                sigma_eps: self.gains.sigma_eps,
                r_xy_min: self.gains.r_xy_min_m,
                barrier_clamp: self.gains.barrier_clamp,
            },
            theta_p: self.plane.theta_p_deg.to_radians(),
            theta_zxy: self.plane.theta_zxy_deg.to_radians(),
            r_avg: self.plane.r_avg_m,
            r_s: g.r_s_m,
            f_bar: self.hardware.f_bar_n,
            mass: self.hardware.mass_kg,
            sat_side: self.hardware.sat_side_m,
            dt: self.scenario.dt_s,
            t_end: self.scenario.t_end_h * 3600.0,
            seed: self.scenario.seed,
            init: self.scenario.init,
            grouping: GroupingConfig {
                r_s: g.r_s_m,
                n_f_max: g.n_f_max,
                n_lf_max: g.n_lf_max,
                n_fl_max: g.n_fl_max,
                schedule,
                trim_outer_quantile: g.trim_outer_quantile,
            },
            topology,
            log_interval: self.scenario.log_interval_s,
            r_ref: self.orbit.r_ref_m,
            i_ref: self.orbit.i_ref_deg.to_radians(),
            compute_lyapunov: self.output.compute_lyapunov,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses and validates a TOML run configuration.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let file: RunConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    file.to_scenario()
}

pub fn config_to_toml(cfg: &ScenarioConfig) -> String {
    toml::to_string(&RunConfigFile::from_scenario(cfg)).expect("config serializes")
}

/// 17 significant digits; `inf`, `-inf`, `NaN` for non-finite values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn parse_f64(s: &str, what: &str, line: u64) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Schema(format!("line {line}: bad {what} value {s:?}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub leader: usize,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotOut {
    pub t_s: f64,
    pub edges: Vec<[usize; 2]>,
    pub groups: Vec<GroupEntry>,
    pub skipped: Vec<[usize; 2]>,
    pub gains: GainSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupsFile {
    pub schema: u32,
    pub config: RunConfigFile,
    pub n_sats: usize,
    pub ref_index: usize,
    pub r_xyd_m: f64,
    pub barrier_clamps: u64,
    pub snapshots: Vec<SnapshotOut>,
}

impl GroupsFile {
    pub fn from_log(log: &RunLog) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            config: RunConfigFile::from_scenario(&log.config),
            n_sats: log.config.n_sats,
            ref_index: log.ref_index,
            r_xyd_m: log.r_xyd,
            barrier_clamps: log.barrier_clamps,
            snapshots: log
                .groups
                .iter()
                .map(|g| SnapshotOut {
                    t_s: g.t,
                    edges: g.edges.iter().map(|&(a, b)| [a, b]).collect(),
                    groups: g
                        .digraph
                        .groups
                        .iter()
                        .map(|(&leader, m)| GroupEntry {
                            leader,
                            members: m.clone(),
                        })
                        .collect(),
                    skipped: g.digraph.skipped.iter().map(|&(a, b)| [a, b]).collect(),
                    gains: g.gains,
                })
                .collect(),
        }
    }

    /// Snapshot in force at time `t`.
    pub fn active(&self, t: f64) -> Option<&SnapshotOut> {
        self.snapshots.iter().rev().find(|s| s.t_s <= t)
    }
}

/// A run directory loaded back into memory.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRun {
    pub groups: GroupsFile,
    pub times: Vec<f64>,
    pub states: Vec<Vec<RelState>>,
    pub u: Vec<Vec<[f64; 3]>>,
    pub params: Vec<Vec<OrbitalParams>>,
    pub t_conn: Vec<Vec<f64>>,
    pub v_all: Vec<Option<f64>>,
}

impl LoadedRun {
    pub fn from_log(log: &RunLog) -> Self {
        Self {
            groups: GroupsFile::from_log(log),
            times: log.records.iter().map(|r| r.t).collect(),
            states: log.records.iter().map(|r| r.states.clone()).collect(),
            u: log
                .records
                .iter()
                .map(|r| r.u.iter().map(|a| [a.x, a.y, a.z]).collect())
                .collect(),
            params: log.records.iter().map(|r| r.params.clone()).collect(),
            t_conn: log.records.iter().map(|r| r.t_conn.clone()).collect(),
            v_all: log.records.iter().map(|r| r.v_all).collect(),
        }
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        k => Error::Schema(format!("{k:?}")),
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Schema(e.to_string()))?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Writes `states.csv`, `params.csv` and `groups.json`.
pub fn write_run_logs(dir: &Path, run: &LoadedRun) -> Result<()> {
    fs::create_dir_all(dir)?;
    let n = run.groups.n_sats;
    let states_rows = run.times.iter().enumerate().flat_map(|(k, &t)| {
        (0..n).map(move |j| {
            let s = run.states[k][j].to_array();
            let u = run.u[k][j];
            let mut row = vec![fmt_f64(t), j.to_string()];
            row.extend(s.iter().chain(u.iter()).map(|&v| fmt_f64(v)));
            row
        })
    });
    write_csv(&dir.join("states.csv"), &STATES_HEADER, states_rows)?;
    let params_rows = run.times.iter().enumerate().flat_map(|(k, &t)| {
        (0..n).map(move |j| {
            let p = &run.params[k][j];
            let mut row = vec![fmt_f64(t), j.to_string()];
            row.extend(p.c().iter().map(|&v| fmt_f64(v)));
            row.push(fmt_f64(p.r_xy));
            row.push(fmt_f64(p.r_z));
            row.push(fmt_f64(p.theta_xy.to_degrees()));
            row.push(fmt_f64(p.theta_z.to_degrees()));
            row.push(fmt_f64(run.t_conn[k][j]));
            row.push(run.v_all[k].map(fmt_f64).unwrap_or_default());
            row
        })
    });
    write_csv(&dir.join("params.csv"), &PARAMS_HEADER, params_rows)?;
    write_json(&dir.join("groups.json"), &run.groups)
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let h = r.headers().map_err(csv_err)?.clone();
    if h.iter().ne(header.iter().copied()) {
        return Err(Error::Schema(format!(
            "{}: header {:?} does not match schema {SCHEMA_VERSION}",
            path.display(),
            h.iter().collect::<Vec<_>>()
        )));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        out.push((line, rec));
    }
    Ok(out)
}

/// Splits rows into ticks of `n` satellites, checking `sat` order and
/// monotone time.
fn ticks(rows: &[(u64, csv::StringRecord)], n: usize, file: &str) -> Result<Vec<f64>> {
    if n == 0 || rows.len() % n != 0 || rows.is_empty() {
        return Err(Error::Schema(format!(
            "{file}: {} rows is not a positive multiple of {n} satellites",
            rows.len()
        )));
    }
    let mut times = Vec::with_capacity(rows.len() / n);
    for (k, chunk) in rows.chunks(n).enumerate() {
        let t = parse_f64(&chunk[0].1[0], "t_s", chunk[0].0)?;
        for (j, (line, rec)) in chunk.iter().enumerate() {
            if parse_f64(&rec[0], "t_s", *line)? != t || rec[1].parse::<usize>().ok() != Some(j) {
                return Err(Error::Schema(format!("{file} line {line}: expected satellite {j} at t={t}")));
            }
        }
        if k > 0 && t <= times[k - 1] {
            return Err(Error::Schema(format!("{file}: time not increasing at t={t}")));
        }
        times.push(t);
    }
    Ok(times)
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let text = fs::read_to_string(dir.join("groups.json"))?;
    let groups: GroupsFile = serde_json::from_str(&text).map_err(|e| Error::Schema(format!("groups.json: {e}")))?;
    if groups.schema != SCHEMA_VERSION {
        return Err(Error::Schema(format!("groups.json schema {} != {SCHEMA_VERSION}", groups.schema)));
    }
    let n = groups.n_sats;
    let srows = read_rows(&dir.join("states.csv"), &STATES_HEADER)?;
    let prows = read_rows(&dir.join("params.csv"), &PARAMS_HEADER)?;
    let times = ticks(&srows, n, "states.csv")?;
    if ticks(&prows, n, "params.csv")? != times {
        return Err(Error::Schema("states.csv and params.csv have different ticks".into()));
    }
    let mut states = Vec::with_capacity(times.len());
    let mut u = Vec::with_capacity(times.len());
    for chunk in srows.chunks(n) {
        let mut s_k = Vec::with_capacity(n);
        let mut u_k = Vec::with_capacity(n);
        for (line, rec) in chunk {
            let v: Vec<f64> = (2..11).map(|i| parse_f64(&rec[i], STATES_HEADER[i], *line)).collect::<Result<_>>()?;
            s_k.push(RelState::from_array([v[0], v[1], v[2], v[3], v[4], v[5]]));
            u_k.push([v[6], v[7], v[8]]);
        }
        states.push(s_k);
        u.push(u_k);
    }
    let mut params = Vec::with_capacity(times.len());
    let mut t_conn = Vec::with_capacity(times.len());
    let mut v_all = Vec::with_capacity(times.len());
    for chunk in prows.chunks(n) {
        let mut p_k = Vec::with_capacity(n);
        let mut tc_k = Vec::with_capacity(n);
        for (line, rec) in chunk {
            let c: Vec<f64> = (2..8).map(|i| parse_f64(&rec[i], PARAMS_HEADER[i], *line)).collect::<Result<_>>()?;
            p_k.push(OrbitalParams::from_c([c[0], c[1], c[2], c[3], c[4], c[5]]));
            tc_k.push(parse_f64(&rec[12], "t_conn_s", *line)?);
        }
        let (line, rec) = &chunk[0];
        v_all.push(if rec[13].is_empty() {
            None
        } else {
            Some(parse_f64(&rec[13], "v_all", *line)?)
        });
        params.push(p_k);
        t_conn.push(tc_k);
    }
    Ok(LoadedRun {
        groups,
        times,
        states,
        u,
        params,
        t_conn,
        v_all,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    /// `None` encodes an infinite value.
    pub min: Option<f64>,
    pub median: Option<f64>,
    pub max: Option<f64>,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let fin = |x: Option<&f64>| x.copied().filter(|x| x.is_finite());
        Self {
            min: fin(v.first()),
            median: fin(v.get(v.len() / 2)),
            max: fin(v.last()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneFitOut {
    pub theta_p_deg: f64,
    pub theta_zxy_deg: f64,
    pub rms_offplane_m: f64,
    pub low_confidence: bool,
    pub window_start_s: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftOut {
    pub initial_c1_m: f64,
    pub initial_c4_m: f64,
    pub final_c1_m: f64,
    pub final_c4_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairOut {
    pub r_xyd_m: f64,
    pub n_pairs: usize,
    pub min_m: Option<f64>,
    pub max_m: Option<f64>,
    pub max_rel_error: Option<f64>,
}

/// Final metrics of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: u32,
    pub n_sats: usize,
    pub ref_index: usize,
    pub t_final_s: f64,
    pub plane_fit: Option<PlaneFitOut>,
    pub plane_fit_error: Option<String>,
    /// Over the final edge set, at the first and last record.
    pub drift_norms: DriftOut,
    /// Relaxed connectable time of the non-reference satellites.
    pub t_conn_initial_s: Stats,
    pub t_conn_final_s: Stats,
    pub pair_rxy: PairOut,
    pub final_edges: usize,
    pub final_components: usize,
    pub barrier_clamps: u64,
}

fn non_ref(v: &[f64], r: usize) -> Vec<f64> {
    v.iter().enumerate().filter(|&(j, _)| j != r).map(|(_, &x)| x).collect()
}

fn context_of(run: &LoadedRun) -> Result<J2Context> {
    let o = &run.groups.config.orbit;
    J2Context::build(o.r_ref_m, o.i_ref_deg.to_radians())
}

fn plane_fit_window(run: &LoadedRun, from: f64, to: f64, ctx: &J2Context) -> (Option<PlaneFitOut>, Option<String>) {
    let idx: Vec<usize> = (0..run.times.len())
        .filter(|&k| run.times[k] >= from && run.times[k] <= to)
        .collect();
    let snaps: Vec<Vec<nalgebra::Vector3<f64>>> = idx
        .iter()
        .map(|&k| run.states[k].iter().map(|s| s.position()).collect())
        .collect();
    match metrics_plane_fit(&snaps, ctx) {
        Ok(f) => (
            Some(PlaneFitOut {
                theta_p_deg: f.theta_p.to_degrees(),
                theta_zxy_deg: f.theta_zxy.to_degrees(),
                rms_offplane_m: f.rms_offplane,
                low_confidence: f.low_confidence,
                window_start_s: run.times[idx[0]],
                samples: idx.len(),
            }),
            None,
        ),
        Err(e) => (None, Some(e.to_string())),
    }
}

/// Summary computed from the logged data only.
pub fn summarize(run: &LoadedRun) -> Result<Summary> {
    let ctx = context_of(run)?;
    let n = run.groups.n_sats;
    let r = run.groups.ref_index;
    let last = run.times.len() - 1;
    let t_final = run.times[last];
    let (plane_fit, plane_fit_error) = plane_fit_window(run, t_final - ctx.period_xy(), t_final, &ctx);
    let snap = run
        .groups
        .active(t_final)
        .ok_or_else(|| Error::Schema("no grouping snapshot".into()))?;
    let edges: Vec<(usize, usize)> = snap.edges.iter().map(|e| (e[0], e[1])).collect();
    let (i1, i4) = drift_norms(&run.params[0], &edges);
    let (f1, f4) = drift_norms(&run.params[last], &edges);
    let rxy = pair_rxy(&run.params[last], &edges);
    let r_xyd = run.groups.r_xyd_m;
    let fold = |init: f64, f: fn(f64, f64) -> f64| {
        if rxy.is_empty() {
            None
        } else {
            Some(rxy.iter().copied().fold(init, f))
        }
    };
    let max_rel = if rxy.is_empty() {
        None
    } else {
        Some(rxy.iter().map(|&d| (d - r_xyd).abs() / r_xyd).fold(0.0, f64::max))
    };
    let labels = component_labels(n, &edges);
    let mut uniq = labels.clone();
    uniq.sort_unstable();
    uniq.dedup();
    Ok(Summary {
        schema: SCHEMA_VERSION,
        n_sats: n,
        ref_index: r,
        t_final_s: t_final,
        plane_fit,
        plane_fit_error,
        drift_norms: DriftOut {
            initial_c1_m: i1,
            initial_c4_m: i4,
            final_c1_m: f1,
            final_c4_m: f4,
        },
        t_conn_initial_s: Stats::of(&non_ref(&run.t_conn[0], r)),
        t_conn_final_s: Stats::of(&non_ref(&run.t_conn[last], r)),
        pair_rxy: PairOut {
            r_xyd_m: r_xyd,
            n_pairs: rxy.len(),
            min_m: fold(f64::INFINITY, f64::min),
            max_m: fold(f64::NEG_INFINITY, f64::max),
            max_rel_error: max_rel,
        },
        final_edges: edges.len(),
        final_components: uniq.len(),
        barrier_clamps: run.groups.barrier_clamps,
    })
}

/// Writes the run directory: logs first, then the summary computed from the
/// logs as read back.
pub fn write_run(dir: &Path, log: &RunLog) -> Result<Summary> {
    write_run_logs(dir, &LoadedRun::from_log(log))?;
    let summary = summarize(&load_run(dir)?)?;
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Recomputes `summary.json` plus `lyapunov.csv`, `tconn.csv` and
/// `plane_fit.csv` from a run directory.
pub fn analyze(dir: &Path) -> Result<Summary> {
    let run = load_run(dir)?;
    let ctx = context_of(&run)?;
    let n = run.groups.n_sats;
    let summary = summarize(&run)?;
    write_json(&dir.join("summary.json"), &summary)?;

    let mut graphs = BTreeMap::new();
    let lyap_rows = run
        .times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut row = vec![fmt_f64(t), String::new(), String::new()];
            if let Some((i, snap)) = run.groups.snapshots.iter().enumerate().rev().find(|(_, s)| s.t_s <= t) {
                if !snap.edges.is_empty() {
                    let g = graphs.entry(i).or_insert_with(|| {
                        let es: Vec<(usize, usize)> = snap.edges.iter().map(|e| (e[0], e[1])).collect();
                        build_graph(n, &es)
                    });
                    if let Ok(g) = g {
                        let pv = ParamVector::from_params(&run.params[k]);
                        if let Ok((v, vd)) = lyapunov_value(&pv, g, &snap.gains, &ctx) {
                            row[1] = fmt_f64(v);
                            row[2] = fmt_f64(vd);
                        }
                    }
                }
            }
            row
        })
        .collect::<Vec<_>>();
    write_csv(&dir.join("lyapunov.csv"), &["t_s", "v_all", "v_delta"], lyap_rows.into_iter())?;

    let r = run.groups.ref_index;
    let tc_rows = run.times.iter().enumerate().map(|(k, &t)| {
        let s = Stats::of(&non_ref(&run.t_conn[k], r));
        let f = |x: Option<f64>| fmt_f64(x.unwrap_or(f64::INFINITY));
        vec![fmt_f64(t), f(s.min), f(s.median), f(s.max)]
    });
    write_csv(&dir.join("tconn.csv"), &["t_s", "min_s", "median_s", "max_s"], tc_rows)?;

    let period = ctx.period_xy();
    let t_final = *run.times.last().expect("load_run rejects empty logs");
    let mut fit_rows = Vec::new();
    let mut start = run.times[0];
    while start + period <= t_final + 1e-9 {
        let (fit, _) = plane_fit_window(&run, start, start + period, &ctx);
        let mut row = vec![fmt_f64(start), fmt_f64(start + period)];
        match fit {
            Some(f) => row.extend([
                fmt_f64(f.theta_p_deg),
                fmt_f64(f.theta_zxy_deg),
                fmt_f64(f.rms_offplane_m),
                f.low_confidence.to_string(),
            ]),
            None => row.extend([String::new(), String::new(), String::new(), String::new()]),
        }
        fit_rows.push(row);
        start += period;
    }
    write_csv(
        &dir.join("plane_fit.csv"),
        &[
            "t_start_s",
            "t_end_s",
            "theta_p_deg",
            "theta_zxy_deg",
            "rms_offplane_m",
            "low_confidence",
        ],
        fit_rows.into_iter(),
    )?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::run;

    fn small_cfg() -> ScenarioConfig {
        let mut c = ScenarioConfig::theta1(5, 7);
        c.model = Model::Linearized;
        c.t_end = 1800.0;
        c.log_interval = 30.0;
        c.compute_lyapunov = true;
        c
    }

    #[test]
    fn f64_format_round_trips() {
        for x in [0.0, -0.0, 1.0 / 3.0, 6.02e23, -1.2345678901234567e-300, f64::MIN_POSITIVE, f64::MAX] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(fmt_f64(f64::INFINITY).parse::<f64>().unwrap(), f64::INFINITY);
        assert!(fmt_f64(f64::NAN).parse::<f64>().unwrap().is_nan());
    }

    #[test]
    fn config_round_trip_and_unknown_keys() {
        let cfg = small_cfg();
        let text = config_to_toml(&cfg);
        assert_eq!(parse_config(&text).unwrap(), cfg);
        let bad = text.replace("r_s_m", "r_s");
        assert!(matches!(parse_config(&bad), Err(Error::Config(_))));
        let bad = text.replace("schema = 1", "schema = 2");
        assert!(matches!(parse_config(&bad), Err(Error::Schema(_))));
    }

    #[test]
    fn malformed_config_reports_line() {
        let e = parse_config("schema = 1\n[scenario\nn_sats = 3\n").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn log_round_trip_is_exact() {
        let log = run(&small_cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let s1 = write_run(dir.path(), &log).unwrap();
        let loaded = load_run(dir.path()).unwrap();
        let mem = LoadedRun::from_log(&log);
        assert_eq!(loaded.groups, mem.groups);
        assert_eq!(loaded.times, mem.times);
        assert_eq!(loaded.states, mem.states);
        assert_eq!(loaded.u, mem.u);
        assert_eq!(loaded.params, mem.params);
        assert_eq!(loaded.t_conn, mem.t_conn);
        assert_eq!(loaded.v_all, mem.v_all);
        let first = fs::read(dir.path().join("summary.json")).unwrap();
        let s2 = analyze(dir.path()).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(first, fs::read(dir.path().join("summary.json")).unwrap());
        let lyap = fs::read(dir.path().join("lyapunov.csv")).unwrap();
        analyze(dir.path()).unwrap();
        assert_eq!(lyap, fs::read(dir.path().join("lyapunov.csv")).unwrap());
    }

    #[test]
    fn truncated_csv_is_a_schema_error() {
        let log = run(&small_cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_run(dir.path(), &log).unwrap();
        let p = dir.path().join("states.csv");
        let text = fs::read_to_string(&p).unwrap();
        let cut: Vec<&str> = text.lines().collect();
        fs::write(&p, cut[..cut.len() - 2].join("\n") + "\n").unwrap();
        assert!(matches!(load_run(dir.path()), Err(Error::Schema(_))));
        fs::write(&p, text.replacen("x_m", "x", 1)).unwrap();
        assert!(matches!(load_run(dir.path()), Err(Error::Schema(_))));
    }
}
