//! Incidence matrices, Laplacians, spanning-tree decomposition, spectra and
//! the multi-leader digraph produced by grouping.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected communication graph with arbitrary-but-fixed edge orientation
/// (tail = smaller index).
#[derive(Debug, Clone)]
pub struct SwarmGraph {
    pub n_vertices: usize,
    pub edges: Vec<(usize, usize)>,
    /// n × p, column j has -1 at the tail and +1 at the head of edge j.
    pub incidence: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
    pub edge_laplacian: DMatrix<f64>,
    /// All Laplacian eigenvalues, ascending.
    pub eigenvalues: DVector<f64>,
    /// Nonzero Laplacian eigenvalues (diagonal of D+), ascending.
    pub dplus: DVector<f64>,
    /// Vertex-space eigenvectors for `dplus` (n × r).
    pub uplus: DMatrix<f64>,
    /// Edge-space singular vectors for `dplus` (p × r).
    pub vplus: DMatrix<f64>,
    pub connected: bool,
    pub n_components: usize,
}

fn components(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        let mut q = VecDeque::from([s]);
        comp[s] = next;
        while let Some(v) = q.pop_front() {
            for &w in &adj[v] {
                if comp[w] == usize::MAX {
                    comp[w] = next;
                    q.push_back(w);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Connected-component label of every vertex.
pub fn component_labels(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    components(n, edges)
}

/// Builds the incidence matrix, Laplacians and spectra.
pub fn build_graph(n: usize, edges: &[(usize, usize)]) -> Result<SwarmGraph> {
    let mut seen = BTreeSet::new();
    let mut oriented = Vec::with_capacity(edges.len());
    for &(a, b) in edges {
        for v in [a, b] {
            if v >= n {
                return Err(Error::VertexOutOfRange { vertex: v, n });
            }
        }
        if a == b {
            return Err(Error::SelfLoop(a));
        }
        let e = (a.min(b), a.max(b));
        if !seen.insert(e) {
            return Err(Error::DuplicateEdge(e.0, e.1));
        }
        oriented.push(e);
    }
    let p = oriented.len();
    let mut inc = DMatrix::zeros(n, p);
    for (j, &(t, h)) in oriented.iter().enumerate() {
        inc[(t, j)] = -1.0;
        inc[(h, j)] = 1.0;
    }
    let lap = &inc * inc.transpose();
    let elap = inc.transpose() * &inc;

    let comp = components(n, &oriented);
    let n_components = comp.iter().copied().max().map_or(0, |m| m + 1);

    let (eigenvalues, dplus, uplus, vplus) = if n == 0 {
        (DVector::zeros(0), DVector::zeros(0), DMatrix::zeros(0, 0), DMatrix::zeros(p, 0))
    } else {
        let eig: SymmetricEigen<f64, nalgebra::Dyn> = SymmetricEigen::new(lap.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let vals = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]].max(0.0));
        let scale = vals.max().max(1.0);
        let tol = 1e-9 * scale;
        // The zero eigenvalue has multiplicity = number of components.
        let nz: Vec<usize> = (n_components..n).filter(|&i| vals[i] > tol).collect();
        let dplus = DVector::from_fn(nz.len(), |i, _| vals[nz[i]]);
        let uplus = DMatrix::from_fn(n, nz.len(), |r, c| eig.eigenvectors[(r, order[nz[c]])]);
        let mut vplus = inc.transpose() * &uplus;
        for (c, &lam) in dplus.iter().enumerate() {
            let s = lam.sqrt();
            vplus.column_mut(c).scale_mut(1.0 / s);
        }
        (vals, dplus, uplus, vplus)
    };

    Ok(SwarmGraph {
        n_vertices: n,
        edges: oriented,
        incidence: inc,
        laplacian: lap,
        edge_laplacian: elap,
        eigenvalues,
        dplus,
        uplus,
        vplus,
        connected: n_components <= 1,
        n_components,
    })
}

impl SwarmGraph {
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.laplacian[(v, v)].round() as usize
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.n_vertices];
        for &(a, b) in &self.edges {
            nb[a].push(b);
            nb[b].push(a);
        }
        for l in &mut nb {
            l.sort_unstable();
        }
        nb
    }

    /// Algebraic connectivity λ2 (0 for disconnected graphs).
    pub fn lambda2(&self) -> f64 {
        if self.connected && self.n_vertices > 1 {
            self.dplus[0]
        } else {
            0.0
        }
    }
}

/// `E = E_τ [I, T_τ^c]` with the tree chosen by breadth-first search from
/// vertex 0, neighbors visited in ascending order.
#[derive(Debug, Clone)]
pub struct TreeDecomposition {
    /// Indices into `SwarmGraph::edges`.
    pub tree_edges: Vec<usize>,
    pub cotree_edges: Vec<usize>,
    pub e_tau: DMatrix<f64>,
    pub t_tau_c: DMatrix<f64>,
    /// `[I, T_τ^c]`, columns ordered as `tree_edges` then `cotree_edges`.
    pub r: DMatrix<f64>,
}

pub fn spanning_tree_decomposition(g: &SwarmGraph) -> Result<TreeDecomposition> {
    if !g.connected {
        return Err(Error::Disconnected);
    }
    let n = g.n_vertices;
    let mut edge_of = BTreeMap::new();
    for (j, &e) in g.edges.iter().enumerate() {
        edge_of.insert(e, j);
    }
    let nb = g.neighbors();
    let mut visited = vec![false; n];
    let mut tree = Vec::new();
    if n > 0 {
        visited[0] = true;
        let mut q = VecDeque::from([0usize]);
        while let Some(v) = q.pop_front() {
            for &w in &nb[v] {
                if !visited[w] {
                    visited[w] = true;
                    tree.push(edge_of[&(v.min(w), v.max(w))]);
                    q.push_back(w);
                }
            }
        }
    }
    let in_tree: BTreeSet<usize> = tree.iter().copied().collect();
    let cotree: Vec<usize> = (0..g.n_edges()).filter(|j| !in_tree.contains(j)).collect();
    let e_tau = g.incidence.select_columns(&tree);
    let e_c = g.incidence.select_columns(&cotree);
    let gram = e_tau.transpose() * &e_tau;
    let t_tau_c = if cotree.is_empty() {
        DMatrix::zeros(tree.len(), 0)
    } else {
        let inv = gram
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("tree Gram matrix singular".into()))?;
        inv * e_tau.transpose() * e_c
    };
    let k = tree.len();
    let mut r = DMatrix::zeros(k, g.n_edges());
    for i in 0..k {
        r[(i, i)] = 1.0;
    }
    if !cotree.is_empty() {
        r.view_mut((0, k), (k, cotree.len())).copy_from(&t_tau_c);
    }
    Ok(TreeDecomposition {
        tree_edges: tree,
        cotree_edges: cotree,
        e_tau,
        t_tau_c,
        r,
    })
}

/// Minimum and maximum vertex degree.
pub fn degree_bounds(g: &SwarmGraph) -> (usize, usize) {
    let degs: Vec<usize> = (0..g.n_vertices).map(|v| g.degree(v)).collect();
    (
        degs.iter().copied().min().unwrap_or(0),
        degs.iter().copied().max().unwrap_or(0),
    )
}

/// Parses `tail head` pairs, one per line; blank lines and `#` comments
/// are ignored.
pub fn parse_edge_list(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(Error::Config(format!(
                "edge list line {}: expected `tail head`, got {line:?}",
                ln + 1
            )));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::Config(format!("edge list line {}: {e}", ln + 1)))
        };
        out.push((parse(parts[0])?, parse(parts[1])?));
    }
    Ok(out)
}

/// Leaders, their groups and the follower→leader adjacency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLeaderDigraph {
    pub n: usize,
    pub leaders: Vec<usize>,
    /// Leader → members (leader first, then followers in join order).
    pub groups: BTreeMap<usize, Vec<usize>>,
    /// Leader → undirected group edges `(min, max)`.
    pub group_edges: BTreeMap<usize, Vec<(usize, usize)>>,
    /// `adjacency[l][f] = 1` when `f` follows `l`.
    pub adjacency: Vec<Vec<u8>>,
    /// Candidates rejected because a cap was reached: `(leader, candidate)`.
    pub skipped: Vec<(usize, usize)>,
}

impl MultiLeaderDigraph {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            leaders: Vec::new(),
            groups: BTreeMap::new(),
            group_edges: BTreeMap::new(),
            adjacency: vec![vec![0; n]; n],
            skipped: Vec::new(),
        }
    }

    /// Followers of `l` (row sum).
    pub fn follower_count(&self, l: usize) -> usize {
        self.adjacency[l].iter().map(|&v| v as usize).sum()
    }

    /// Number of leaders `f` follows (column sum).
    pub fn following_count(&self, f: usize) -> usize {
        self.adjacency.iter().map(|row| row[f] as usize).sum()
    }

    /// Union of all group edges, sorted.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        let set: BTreeSet<(usize, usize)> = self.group_edges.values().flatten().copied().collect();
        set.into_iter().collect()
    }

    pub fn to_graph(&self) -> Result<SwarmGraph> {
        build_graph(self.n, &self.undirected_edges())
    }

    /// Maximum vertex degree of the induced undirected graph.
    pub fn max_degree(&self) -> usize {
        let mut deg = vec![0usize; self.n];
        for (a, b) in self.undirected_edges() {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg.into_iter().max().unwrap_or(0)
    }

    /// Satellites that belong to no group with at least one edge.
    pub fn isolated(&self) -> Vec<usize> {
        let mut touched = vec![false; self.n];
        for (a, b) in self.undirected_edges() {
            touched[a] = true;
            touched[b] = true;
        }
        (0..self.n).filter(|&v| !touched[v]).collect()
    }

    /// Checks caps and the no-shared-edge rule; returns a description of the
    /// first violation.
    pub fn check_invariants(&self, n_fl_max: usize, n_lf_max: usize) -> std::result::Result<(), String> {
        for v in 0..self.n {
            if self.follower_count(v) > n_fl_max {
                return Err(format!("satellite {v} leads {} > {n_fl_max}", self.follower_count(v)));
            }
            if self.following_count(v) > n_lf_max {
                return Err(format!("satellite {v} follows {} > {n_lf_max}", self.following_count(v)));
            }
        }
        let mut owner: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (&l, es) in &self.group_edges {
            for &e in es {
                if e.0 >= e.1 {
                    return Err(format!("edge {e:?} not normalized"));
                }
                if let Some(prev) = owner.insert(e, l) {
                    return Err(format!("edge {e:?} in groups {prev} and {l}"));
                }
            }
        }
        Ok(())
    }
}

/// Degree bound `(n_{l←f} + 1) n_{f←l}`.
pub fn delta_bound(n_lf_max: usize, n_fl_max: usize) -> usize {
    (n_lf_max + 1) * n_fl_max
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn path(n: usize) -> Vec<(usize, usize)> {
        (0..n - 1).map(|i| (i, i + 1)).collect()
    }

    fn complete(n: usize) -> Vec<(usize, usize)> {
        let mut e = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                e.push((i, j));
            }
        }
        e
    }

    #[test]
    fn incidence_columns_have_one_tail_one_head() {
        let g = build_graph(4, &[(2, 0), (1, 2), (3, 1)]).unwrap();
        for j in 0..g.n_edges() {
            let col = g.incidence.column(j);
            assert_eq!(col.iter().filter(|&&v| v == -1.0).count(), 1);
            assert_eq!(col.iter().filter(|&&v| v == 1.0).count(), 1);
            let (t, h) = g.edges[j];
            assert!(t < h);
            assert_eq!(col[t], -1.0);
        }
    }

    #[test]
    fn path_three_spectrum() {
        let g = build_graph(3, &path(3)).unwrap();
        assert_relative_eq!(g.eigenvalues[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(g.eigenvalues[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(g.eigenvalues[2], 3.0, epsilon = 1e-12);
        assert_eq!(degree_bounds(&g), (1, 2));
    }

    #[test]
    fn single_vertex() {
        let g = build_graph(1, &[]).unwrap();
        assert_eq!(g.incidence.ncols(), 0);
        assert_eq!(g.laplacian, DMatrix::zeros(1, 1));
        assert!(g.connected);
        assert_eq!(g.dplus.len(), 0);
    }

    #[test]
    fn complete_k4_spectra() {
        let g = build_graph(4, &complete(4)).unwrap();
        for &l in g.dplus.iter() {
            assert_relative_eq!(l, 4.0, epsilon = 1e-12);
        }
        assert_eq!(degree_bounds(&g), (3, 3));
        let eig = SymmetricEigen::new(g.edge_laplacian.clone());
        let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        for (k, x) in v.iter().enumerate() {
            let want = if k < 3 { 0.0 } else { 4.0 };
            assert_relative_eq!(*x, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn star_degree_bounds() {
        let g = build_graph(6, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]).unwrap();
        assert_eq!(degree_bounds(&g), (1, 5));
    }

    #[test]
    fn build_errors() {
        assert!(matches!(build_graph(2, &[(0, 2)]), Err(Error::VertexOutOfRange { .. })));
        assert!(matches!(build_graph(2, &[(1, 1)]), Err(Error::SelfLoop(1))));
        assert!(matches!(build_graph(3, &[(0, 1), (1, 0)]), Err(Error::DuplicateEdge(0, 1))));
        let g = build_graph(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(!g.connected);
        assert_eq!(g.n_components, 2);
        assert!(matches!(spanning_tree_decomposition(&g), Err(Error::Disconnected)));
    }

    #[test]
    fn tree_decomposition_of_tree_is_identity() {
        let g = build_graph(5, &path(5)).unwrap();
        let d = spanning_tree_decomposition(&g).unwrap();
        assert_eq!(d.t_tau_c.ncols(), 0);
        assert_eq!(d.r, DMatrix::identity(4, 4));
    }

    #[test]
    fn tree_decomposition_reconstructs_cotree() {
        for edges in [complete(3), complete(4), vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (3, 4)]] {
            let n = edges.iter().map(|e| e.1.max(e.0)).max().unwrap() + 1;
            let g = build_graph(n, &edges).unwrap();
            let d = spanning_tree_decomposition(&g).unwrap();
            let e_c = g.incidence.select_columns(&d.cotree_edges);
            assert!((&d.e_tau * &d.t_tau_c - &e_c).amax() < 1e-12);
            let mut order = d.tree_edges.clone();
            order.extend(&d.cotree_edges);
            let e_perm = g.incidence.select_columns(&order);
            assert!((&d.e_tau * &d.r - e_perm).amax() < 1e-12);
        }
    }

    #[test]
    fn vplus_projects_range_of_incidence_transpose() {
        let g = build_graph(5, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 1)]).unwrap();
        let et = g.incidence.transpose();
        let proj = &g.vplus * g.vplus.transpose() * &et;
        assert!((proj - et).amax() < 1e-10);
    }

    #[test]
    fn edge_list_parsing() {
        let e = parse_edge_list("# K3\n0 1\n1 2 # tail\n\n0 2\n").unwrap();
        assert_eq!(e, vec![(0, 1), (1, 2), (0, 2)]);
        assert!(parse_edge_list("0 1 2\n").is_err());
        assert!(parse_edge_list("a b\n").is_err());
    }

    #[test]
    fn digraph_invariants_detect_shared_edges() {
        let mut d = MultiLeaderDigraph::new(3);
        d.group_edges.insert(0, vec![(0, 1)]);
        d.group_edges.insert(2, vec![(0, 1)]);
        assert!(d.check_invariants(5, 5).is_err());
        assert_eq!(delta_bound(2, 2), 6);
    }
}
