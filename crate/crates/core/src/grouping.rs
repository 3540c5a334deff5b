//! Centralized multi-leader grouping: Delaunay neighbors in the normalized
//! swarm frame, connectable-time-ordered follower selection and the
//! resulting multi-leader digraph.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use spade::{DelaunayTriangulation, Point2, Triangulation};

use crate::error::{Error, Result};
use crate::frames::{rot_shat_from_o, J2Context};
use crate::graph::MultiLeaderDigraph;
use crate::relorbit::{connectable_time_relaxed, OrbitalParams, RelState};
use crate::targets::SwarmPlane;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleStep {
    /// Start of the step as a fraction of the run length.
    pub from_fraction: f64,
    pub interval_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingConfig {
    pub r_s: f64,
    /// Maximum group size including the leader.
    pub n_f_max: usize,
    /// Maximum number of leaders one satellite follows.
    pub n_lf_max: usize,
    /// Maximum number of followers of one leader.
    pub n_fl_max: usize,
    pub schedule: Vec<ScheduleStep>,
    /// Drop convex-hull edges longer than this quantile of all DT edge
    /// lengths; `None` keeps every edge.
    pub trim_outer_quantile: Option<f64>,
}

pub fn default_schedule() -> Vec<ScheduleStep> {
    [(0.0, 300.0), (0.25, 600.0), (0.5, 1200.0), (0.75, 2400.0)]
        .into_iter()
        .map(|(from_fraction, interval_s)| ScheduleStep { from_fraction, interval_s })
        .collect()
}

impl GroupingConfig {
    pub fn new(r_s: f64, n_f_max: usize, n_lf_max: usize, n_fl_max: usize) -> Self {
        Self {
            r_s,
            n_f_max,
            n_lf_max,
            n_fl_max,
            schedule: default_schedule(),
            trim_outer_quantile: None,
        }
    }

    pub fn validate(&self, ctx: &J2Context) -> Result<()> {
        if !(self.r_s > 0.0) {
            return Err(Error::Config(format!("r_s={} must be positive", self.r_s)));
        }
        if self.n_f_max < 3 {
            return Err(Error::Config(format!("n_f_max={} must be at least 3", self.n_f_max)));
        }
        if self.n_lf_max == 0 || self.n_fl_max == 0 {
            return Err(Error::Config("follower caps must be positive".into()));
        }
        if self.schedule.is_empty() {
            return Err(Error::Config("empty grouping schedule".into()));
        }
        let mut prev = -1.0;
        for s in &self.schedule {
            if !(s.interval_s > 0.0) {
                return Err(Error::Config(format!("interval {} must be positive", s.interval_s)));
            }
            if !(s.from_fraction > prev && (0.0..=1.0).contains(&s.from_fraction)) {
                return Err(Error::Config("schedule fractions must increase within [0, 1]".into()));
            }
            prev = s.from_fraction;
        }
        let period = ctx.period_xy();
        if (self.schedule[0].interval_s - period).abs() < 0.01 * period {
            return Err(Error::Config(format!(
                "initial grouping interval {} s coincides with the orbital period {period:.0} s",
                self.schedule[0].interval_s
            )));
        }
        if let Some(q) = self.trim_outer_quantile {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::Config(format!("trim quantile {q} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Regrouping interval in effect at time `t` of a run of length `t_end`.
pub fn scheduled_interval(t: f64, t_end: f64, schedule: &[ScheduleStep]) -> f64 {
    let frac = if t_end > 0.0 { t / t_end } else { 1.0 };
    schedule
        .iter()
        .rev()
        .find(|s| frac >= s.from_fraction)
        .or(schedule.first())
        .map_or(f64::INFINITY, |s| s.interval_s)
}

/// 300 / 600 / 1200 / 2400 s in the four quarters of the run.
pub fn grouping_scheduler(t: f64, t_end: f64) -> f64 {
    scheduled_interval(t, t_end, &default_schedule())
}

/// Symmetric adjacency of the planar Delaunay triangulation.
#[derive(Debug, Clone, PartialEq)]
pub struct DelaunayGraph {
    pub adjacency: Vec<Vec<bool>>,
    /// Undirected edges `(min, max)`, sorted.
    pub edges: Vec<(usize, usize)>,
    /// Convex-hull edges (subset of `edges`).
    pub hull_edges: Vec<(usize, usize)>,
}

impl DelaunayGraph {
    fn from_edges(n: usize, edges: BTreeSet<(usize, usize)>, hull: BTreeSet<(usize, usize)>) -> Self {
        let mut adjacency = vec![vec![false; n]; n];
        for &(a, b) in &edges {
            adjacency[a][b] = true;
            adjacency[b][a] = true;
        }
        Self {
            adjacency,
            edges: edges.into_iter().collect(),
            hull_edges: hull.into_iter().collect(),
        }
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].iter().filter(|&&a| a).count()
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Delaunay triangulation of 2-D points. Exact duplicates are shifted by a
/// small lexicographic offset; fewer than three points give a chain.
pub fn delaunay_2d(points: &[[f64; 2]]) -> Result<DelaunayGraph> {
    let n = points.len();
    if n < 3 {
        let edges: BTreeSet<_> = (1..n).map(|i| (i - 1, i)).collect();
        let hull = edges.clone();
        return Ok(DelaunayGraph::from_edges(n, edges, hull));
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::Domain("non-finite point in Delaunay input".into()));
    }
    let scale = points
        .iter()
        .flat_map(|p| p.iter().map(|v| v.abs()))
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points[a][0]
            .total_cmp(&points[b][0])
            .then(points[a][1].total_cmp(&points[b][1]))
            .then(a.cmp(&b))
    });
    let mut run = 0usize;
    for w in 1..n {
        if points[order[w]] == points[order[w - 1]] {
            run += 1;
            let d = run as f64 * 1e-9 * scale;
            pts[order[w]] = [points[order[w]][0] + d, points[order[w]][1] + 0.5 * d];
        } else {
            run = 0;
        }
    }
    let mut tri: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
    let mut handle_to_idx = BTreeMap::new();
    for (i, p) in pts.iter().enumerate() {
        let h = tri
            .insert(Point2::new(p[0], p[1]))
            .map_err(|e| Error::Domain(format!("Delaunay insertion failed: {e:?}")))?;
        if handle_to_idx.insert(h.index(), i).is_some() {
            return Err(Error::Degenerate("duplicate point survived perturbation".into()));
        }
    }
    let idx = |h: spade::handles::FixedVertexHandle| handle_to_idx[&h.index()];
    let mut edges = BTreeSet::new();
    for e in tri.undirected_edges() {
        let [a, b] = e.vertices();
        edges.insert(ordered(idx(a.fix()), idx(b.fix())));
    }
    let mut hull = BTreeSet::new();
    if tri.all_vertices_on_line() {
        hull = edges.clone();
    } else {
        for e in tri.convex_hull() {
            hull.insert(ordered(idx(e.from().fix()), idx(e.to().fix())));
        }
    }
    Ok(DelaunayGraph::from_edges(n, edges, hull))
}

/// Positions mapped into the normalized swarm frame.
pub fn shat_positions(positions: &[Vector3<f64>], plane: &SwarmPlane, ctx: &J2Context) -> Result<Vec<Vector3<f64>>> {
    let c = rot_shat_from_o(plane, ctx)?;
    Ok(positions.iter().map(|p| c.apply(p)).collect())
}

/// Delaunay adjacency of the y-z components of normalized-frame positions.
pub fn delaunay_yz(positions_shat: &[Vector3<f64>]) -> Result<DelaunayGraph> {
    let pts: Vec<[f64; 2]> = positions_shat.iter().map(|p| [p.y, p.z]).collect();
    delaunay_2d(&pts)
}

/// Removes hull edges longer than the given quantile of all edge lengths.
pub fn trim_outer_edges(dt: &DelaunayGraph, positions_2d: &[[f64; 2]], quantile: f64) -> DelaunayGraph {
    let len = |(a, b): (usize, usize)| {
        let p = positions_2d[a];
        let q = positions_2d[b];
        (p[0] - q[0]).hypot(p[1] - q[1])
    };
    let mut lens: Vec<f64> = dt.edges.iter().map(|&e| len(e)).collect();
    if lens.is_empty() {
        return dt.clone();
    }
    lens.sort_by(f64::total_cmp);
    let k = ((lens.len() - 1) as f64 * quantile).round() as usize;
    let thr = lens[k.min(lens.len() - 1)];
    let hull: BTreeSet<_> = dt.hull_edges.iter().copied().collect();
    let keep: BTreeSet<_> = dt
        .edges
        .iter()
        .copied()
        .filter(|e| !(hull.contains(e) && len(*e) > thr))
        .collect();
    let kept_hull = hull.intersection(&keep).copied().collect();
    DelaunayGraph::from_edges(dt.adjacency.len(), keep, kept_hull)
}

/// Connectable times beyond this are round-off of a drift-free pair and
/// sort as "never escapes".
pub const NEVER_ESCAPES_S: f64 = 1e10;

/// Multi-leader grouping from LVLH states and parameters vs the reference.
pub fn centralized_grouping(
    states: &[RelState],
    params: &[OrbitalParams],
    cfg: &GroupingConfig,
    plane: &SwarmPlane,
    ctx: &J2Context,
) -> Result<MultiLeaderDigraph> {
    let n = states.len();
    if params.len() != n {
        return Err(Error::Dimension(format!("{n} states but {} params", params.len())));
    }
    let pos: Vec<Vector3<f64>> = states.iter().map(|s| s.position()).collect();
    let shat = shat_positions(&pos, plane, ctx)?;
    let mut dt = delaunay_yz(&shat)?;
    if let Some(q) = cfg.trim_outer_quantile {
        let p2: Vec<[f64; 2]> = shat.iter().map(|p| [p.y, p.z]).collect();
        dt = trim_outer_edges(&dt, &p2, q);
    }
    group_with_adjacency(&dt, &pos, params, cfg, ctx)
}

/// Algorithm core on a given neighbor adjacency.
pub fn group_with_adjacency(
    dt: &DelaunayGraph,
    pos: &[Vector3<f64>],
    params: &[OrbitalParams],
    cfg: &GroupingConfig,
    ctx: &J2Context,
) -> Result<MultiLeaderDigraph> {
    let n = pos.len();
    let mut out = MultiLeaderDigraph::new(n);
    let mut leaders: Vec<usize> = (0..n).collect();
    leaders.sort_by(|&a, &b| dt.degree(b).cmp(&dt.degree(a)).then(a.cmp(&b)));
    let mut owned: BTreeSet<(usize, usize)> = BTreeSet::new();
    let max_followers = cfg.n_fl_max.min(cfg.n_f_max.saturating_sub(1));
    for &l in &leaders {
        out.leaders.push(l);
        let mut cands: Vec<(f64, usize)> = Vec::new();
        for f in 0..n {
            if f == l || !dt.adjacency[l][f] || (pos[l] - pos[f]).norm() > cfg.r_s {
                continue;
            }
            let rel = params[f].relative_to(&params[l]);
            let mut t = connectable_time_relaxed(rel.c1, rel.c4, cfg.r_s, ctx)?;
            if t > NEVER_ESCAPES_S {
                t = f64::INFINITY;
            }
            cands.push((t, f));
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut group = vec![l];
        for &(_, f) in &cands {
            if group.len() - 1 >= max_followers {
                break;
            }
            if owned.contains(&ordered(l, f)) {
                continue;
            }
            if out.following_count(f) >= cfg.n_lf_max {
                out.skipped.push((l, f));
                continue;
            }
            group.push(f);
            out.adjacency[l][f] = 1;
        }
        let mut gedges = Vec::new();
        for i in 0..group.len() {
            for j in i + 1..group.len() {
                let e = ordered(group[i], group[j]);
                if dt.adjacency[e.0][e.1] && !owned.contains(&e) {
                    owned.insert(e);
                    gedges.push(e);
                }
            }
        }
        gedges.sort_unstable();
        out.groups.insert(l, group);
        out.group_edges.insert(l, gedges);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::J2Context;
    use crate::graph::delta_bound;
    use crate::targets::desired_position;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Circumcircle test for triangle (a, b, c) and point d.
    fn in_circumcircle(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
        let m = |p: [f64; 2]| [p[0] - d[0], p[1] - d[1]];
        let (a, b, c) = (m(a), m(b), m(c));
        let det = (a[0] * a[0] + a[1] * a[1]) * (b[0] * c[1] - c[0] * b[1])
            - (b[0] * b[0] + b[1] * b[1]) * (a[0] * c[1] - c[0] * a[1])
            + (c[0] * c[0] + c[1] * c[1]) * (a[0] * b[1] - b[0] * a[1]);
        let orient = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        det * orient.signum() > 1e-12
    }

    fn in_triangle(a: [f64; 2], b: [f64; 2], c: [f64; 2], p: [f64; 2]) -> bool {
        let cr = |o: [f64; 2], u: [f64; 2], v: [f64; 2]| (u[0] - o[0]) * (v[1] - o[1]) - (u[1] - o[1]) * (v[0] - o[0]);
        let (d1, d2, d3) = (cr(a, b, p), cr(b, c, p), cr(c, a, p));
        (d1 > 0.0 && d2 > 0.0 && d3 > 0.0) || (d1 < 0.0 && d2 < 0.0 && d3 < 0.0)
    }

    // Monotone-chain convex hull vertex count (collinear hull points excluded).
    fn hull_count(p: &[[f64; 2]]) -> usize {
        let mut pts = p.to_vec();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
        let mut h: Vec<[f64; 2]> = Vec::new();
        for pass in 0..2 {
            let start = h.len();
            let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
                if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
            for &q in iter {
                while h.len() >= start + 2 && cross(h[h.len() - 2], h[h.len() - 1], q) <= 0.0 {
                    h.pop();
                }
                h.push(q);
            }
            h.pop();
        }
        h.len()
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 2]> {
        (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect()
    }

    #[test]
    fn triangle_is_complete() {
        let dt = delaunay_2d(&[[0.0, 0.0], [1.0, 0.0], [0.2, 0.9]]).unwrap();
        assert_eq!(dt.edges, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn fewer_than_three_points_chain() {
        assert!(delaunay_2d(&[]).unwrap().edges.is_empty());
        assert_eq!(delaunay_2d(&[[0.0, 0.0], [1.0, 1.0]]).unwrap().edges, vec![(0, 1)]);
    }

    #[test]
    fn unit_square_has_one_diagonal() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let dt = delaunay_2d(&pts).unwrap();
        assert_eq!(dt.edges.len(), 5);
        let diag = dt.edges.contains(&(0, 2)) as usize + dt.edges.contains(&(1, 3)) as usize;
        assert_eq!(diag, 1);
        // Slightly squashed square: only the short diagonal is Delaunay.
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.1, 1.0], [0.0, 1.0]];
        let dt = delaunay_2d(&pts).unwrap();
        let tri_ok = |t: [usize; 3], other: usize| !in_circumcircle(pts[t[0]], pts[t[1]], pts[t[2]], pts[other]);
        if dt.edges.contains(&(0, 2)) {
            assert!(tri_ok([0, 1, 2], 3) && tri_ok([0, 2, 3], 1));
        } else {
            assert!(tri_ok([0, 1, 3], 2) && tri_ok([1, 2, 3], 0));
        }
    }

    #[test]
    fn collinear_input_gives_path() {
        let pts: Vec<[f64; 2]> = [3.0, 0.0, 2.0, 1.0].iter().map(|&x| [x, 2.0 * x]).collect();
        let dt = delaunay_2d(&pts).unwrap();
        assert_eq!(dt.edges, vec![(0, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn duplicates_are_perturbed() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 0.0]];
        let dt = delaunay_2d(&pts).unwrap();
        for v in 0..5 {
            assert!(dt.degree(v) >= 1);
        }
    }

    #[test]
    fn edge_count_identity_and_empty_circumcircles() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [5usize, 12, 30, 50] {
            let pts = random_points(&mut rng, n);
            let dt = delaunay_2d(&pts).unwrap();
            let h = hull_count(&pts);
            assert_eq!(dt.edges.len(), 3 * (n - 1) - h, "n={n}");
            assert_eq!(dt.hull_edges.len(), h);
            // Faces (3-cycles with no vertex inside) have empty circumcircles.
            for &(a, b) in &dt.edges {
                for c in b + 1..n {
                    if !(dt.adjacency[a][c] && dt.adjacency[b][c]) {
                        continue;
                    }
                    let others = (0..n).filter(|&d| d != a && d != b && d != c);
                    if others.clone().any(|d| in_triangle(pts[a], pts[b], pts[c], pts[d])) {
                        continue;
                    }
                    for d in others {
                        assert!(!in_circumcircle(pts[a], pts[b], pts[c], pts[d]), "n={n} face {a},{b},{c} holds {d}");
                    }
                }
            }
        }
    }

    #[test]
    fn scheduler_quarters() {
        let t_end = 4000.0;
        assert_eq!(grouping_scheduler(0.0, t_end), 300.0);
        assert_eq!(grouping_scheduler(0.3 * t_end, t_end), 600.0);
        assert_eq!(grouping_scheduler(0.5 * t_end, t_end), 1200.0);
        assert_eq!(grouping_scheduler(t_end, t_end), 2400.0);
    }

    #[test]
    fn config_validation() {
        let ctx = J2Context::leo_default();
        assert!(GroupingConfig::new(1.0, 6, 5, 5).validate(&ctx).is_ok());
        assert!(GroupingConfig::new(1.0, 2, 5, 5).validate(&ctx).is_err());
        let mut c = GroupingConfig::new(1.0, 6, 5, 5);
        c.schedule[0].interval_s = ctx.period_xy();
        assert!(c.validate(&ctx).is_err());
    }

    fn states_at(points: &[[f64; 3]]) -> (Vec<RelState>, Vec<OrbitalParams>) {
        let s: Vec<RelState> = points
            .iter()
            .map(|p| RelState::new(Vector3::new(p[0], p[1], p[2]), Vector3::zeros()))
            .collect();
        let ctx = J2Context::leo_default();
        let p = s.iter().map(|x| crate::relorbit::params_from_state(x, &ctx)).collect();
        (s, p)
    }

    #[test]
    fn square_is_grouped_and_connected() {
        let ctx = J2Context::leo_default();
        let dt = delaunay_2d(&[[0.0, 0.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]).unwrap();
        let pos: Vec<Vector3<f64>> = [[0.0, 0.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]
            .iter()
            .map(|p| Vector3::new(0.0, p[0], p[1]))
            .collect();
        let params = vec![OrbitalParams::default(); 4];
        let cfg = GroupingConfig::new(1.0, 6, 5, 5);
        let d = group_with_adjacency(&dt, &pos, &params, &cfg, &ctx).unwrap();
        let g = d.to_graph().unwrap();
        assert!(g.connected);
        assert_eq!(d.undirected_edges(), dt.edges);
        assert!(d.max_degree() <= delta_bound(cfg.n_lf_max, cfg.n_fl_max));
        assert!(d.check_invariants(cfg.n_fl_max, cfg.n_lf_max).is_ok());
        // Highest-degree vertex leads first and claims all its DT neighbors.
        let first = d.leaders[0];
        assert_eq!(dt.degree(first), 3);
        assert_eq!(d.follower_count(first), 3);
    }

    #[test]
    fn distant_clusters_stay_separate() {
        let ctx = J2Context::leo_default();
        let plane = SwarmPlane::new(30f64.to_radians(), 0.0, 0.5, &ctx);
        let mut pts = Vec::new();
        for k in 0..2 {
            let off = k as f64 * 20.0;
            for p in [[0.0, 0.0, 0.0], [0.0, 0.4, 0.1], [0.1, 0.0, 0.4], [0.2, 0.3, 0.3]] {
                pts.push([p[0], p[1] + off, p[2]]);
            }
        }
        let (s, p) = states_at(&pts);
        let d = centralized_grouping(&s, &p, &GroupingConfig::new(1.0, 6, 5, 5), &plane, &ctx).unwrap();
        for (a, b) in d.undirected_edges() {
            assert_eq!(a / 4, b / 4, "cross edge {a}-{b}");
        }
        assert_eq!(d.to_graph().unwrap().n_components, 2);
    }

    #[test]
    fn random_clouds_respect_caps() {
        let ctx = J2Context::leo_default();
        let plane = SwarmPlane::new(30f64.to_radians(), 0.0, 0.5, &ctx);
        let cfg = GroupingConfig::new(1.0, 6, 5, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let pts: Vec<[f64; 3]> = (0..50)
                .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
                .collect();
            let (s, p) = states_at(&pts);
            let d = centralized_grouping(&s, &p, &cfg, &plane, &ctx).unwrap();
            d.check_invariants(cfg.n_fl_max, cfg.n_lf_max).unwrap();
            assert!(d.max_degree() <= delta_bound(cfg.n_lf_max, cfg.n_fl_max));
            let again = centralized_grouping(&s, &p, &cfg, &plane, &ctx).unwrap();
            assert_eq!(d, again);
        }
    }

    #[test]
    fn target_formation_neighbors_are_time_invariant() {
        let ctx = J2Context::leo_default();
        let plane = SwarmPlane::new(40f64.to_radians(), 50f64.to_radians(), 0.5, &ctx);
        // Wide gate: LVLH pair distances oscillate along the orbit.
        let cfg = GroupingConfig::new(50.0, 6, 5, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Random amplitudes/phases on the target plane.
        let sats: Vec<(f64, f64)> = (0..15)
            .map(|_| (rng.random_range(0.2..1.0), rng.random_range(0.0..std::f64::consts::TAU)))
            .collect();
        let at = |t: f64| {
            let s: Vec<RelState> = sats
                .iter()
                .map(|&(scale, ph)| {
                    let mut pl = plane;
                    pl.r_xyd *= scale;
                    crate::targets::desired_state(t, &pl, ph, &ctx).unwrap()
                })
                .collect();
            let p: Vec<OrbitalParams> = s.iter().map(|x| crate::relorbit::params_from_state(x, &ctx)).collect();
            (s, p)
        };
        let (s0, p0) = at(0.0);
        let base = centralized_grouping(&s0, &p0, &cfg, &plane, &ctx).unwrap();
        for t in [700.0, 1900.0, 4100.0] {
            let (s, p) = at(t);
            let d = centralized_grouping(&s, &p, &cfg, &plane, &ctx).unwrap();
            assert_eq!(d.undirected_edges(), base.undirected_edges(), "t={t}");
        }
        // The target orbit lies in the y-z plane of the normalized frame.
        let c = rot_shat_from_o(&plane, &ctx).unwrap();
        for t in [0.0, 1234.0] {
            let q = c.apply(&desired_position(t, &plane, 0.7, &ctx).unwrap());
            assert!(q.x.abs() < 1e-12, "{q}");
        }
    }

    #[test]
    fn outer_trimming_only_drops_hull_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts = random_points(&mut rng, 25);
        let dt = delaunay_2d(&pts).unwrap();
        let t = trim_outer_edges(&dt, &pts, 0.5);
        let removed: Vec<_> = dt.edges.iter().filter(|e| !t.edges.contains(e)).collect();
        assert!(!removed.is_empty());
        assert!(removed.iter().all(|e| dt.hull_edges.contains(e)));
        assert_eq!(trim_outer_edges(&dt, &pts, 1.0).edges, dt.edges);
    }
}
