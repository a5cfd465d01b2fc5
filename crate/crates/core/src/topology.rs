//! Network topologies and row-stochastic weights.
//!
//! An edge `(j, i)` means node `j` sends to node `i`, i.e. `j` is an
//! in-neighbor of `i`. Generators add a self-loop `(i, i)` on every node.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl DirectedGraph {
    /// Builds a graph from `(from, to)` pairs. Self-loops are NOT added.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (j, i) in edges {
            if j >= n || i >= n {
                return Err(Error::InvalidGraph(format!("edge {j} -> {i} out of range for n = {n}")));
            }
            set.insert((j, i));
        }
        Ok(Self { n, edges: set })
    }

    fn with_self_loops(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut set: BTreeSet<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        set.extend(edges);
        Self { n, edges: set }
    }

    fn undirected(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let edges = pairs.into_iter().flat_map(|(a, b)| [(a, b), (b, a)]);
        Self::with_self_loops(n, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// All edges including self-loops, ordered by `(from, to)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn has_self_loops(&self) -> bool {
        (0..self.n).all(|i| self.has_edge(i, i))
    }

    /// In-neighbors of `i`, excluding `i` itself.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        self.edges.iter().filter(|&&(j, t)| t == i && j != i).map(|&(j, _)| j).collect()
    }

    /// In-degree of `i` excluding the self-loop.
    pub fn in_degree(&self, i: usize) -> usize {
        self.edges.iter().filter(|&&(j, t)| t == i && j != i).count()
    }

    pub fn is_strongly_connected(&self) -> bool {
        let mut fwd = vec![Vec::new(); self.n];
        let mut bwd = vec![Vec::new(); self.n];
        for &(j, i) in &self.edges {
            fwd[j].push(i);
            bwd[i].push(j);
        }
        reaches_all(&fwd) && reaches_all(&bwd)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.has_self_loops() {
            return Err(Error::InvalidGraph("every node needs a self-loop".into()));
        }
        if !self.is_strongly_connected() {
            return Err(Error::InvalidGraph("graph is not strongly connected".into()));
        }
        Ok(())
    }

    /// One `"j i"` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (j, i) in self.edges() {
            let _ = writeln!(out, "{j} {i}");
        }
        out
    }

    /// Parses an edge list; `n` is inferred as `1 + max index`.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut n = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(j)), Some(Ok(i)), None) => {
                    n = n.max(j + 1).max(i + 1);
                    edges.push((j, i));
                }
                _ => return Err(Error::Parse(format!("edge list line {}: {line:?}", lineno + 1))),
            }
        }
        Self::from_edges(n, edges)
    }
}

fn reaches_all(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == adj.len()
}

/// Directed exponential graph: node `i` receives from `i − 2^j mod n` for every
/// `2^j < n`.
pub fn build_exponential(n: usize) -> Result<DirectedGraph> {
    if n == 0 {
        return Err(Error::InvalidSize("exponential graph needs n ≥ 1".into()));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        let mut offset = 1;
        while offset < n {
            edges.push(((i + n - offset) % n, i));
            offset <<= 1;
        }
    }
    Ok(DirectedGraph::with_self_loops(n, edges))
}

/// Directed ring `i → i+1 mod n`.
pub fn build_directed_ring(n: usize) -> Result<DirectedGraph> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("directed ring needs n ≥ 2, got {n}")));
    }
    Ok(DirectedGraph::with_self_loops(n, (0..n).map(|i| (i, (i + 1) % n))))
}

/// Undirected 4-neighbour lattice, row-major node numbering.
pub fn build_grid(rows: usize, cols: usize) -> Result<DirectedGraph> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidSize(format!("grid {rows}x{cols} is empty")));
    }
    let id = |r: usize, c: usize| r * cols + c;
    let mut pairs = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                pairs.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < rows {
                pairs.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    Ok(DirectedGraph::undirected(rows * cols, pairs))
}

const MAX_RADIUS_ESCALATIONS: usize = 50;

fn unit_square_points(n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = rng::seeded(seed);
    (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect()
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Random geometric graph in the unit square. The radius grows by 10% until
/// the graph is connected.
pub fn build_geometric(n: usize, radius: f64, seed: u64) -> Result<DirectedGraph> {
    if n == 0 {
        return Err(Error::InvalidSize("geometric graph needs n ≥ 1".into()));
    }
    if !(radius > 0.0 && radius <= std::f64::consts::SQRT_2) {
        return Err(Error::InvalidParameter(format!("radius {radius} outside (0, √2]")));
    }
    let pts = unit_square_points(n, seed);
    let mut r = radius;
    for _ in 0..=MAX_RADIUS_ESCALATIONS {
        let mut pairs = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if dist2(pts[a], pts[b]) <= r * r {
                    pairs.push((a, b));
                }
            }
        }
        let g = DirectedGraph::undirected(n, pairs);
        if g.is_strongly_connected() {
            return Ok(g);
        }
        r *= 1.1;
    }
    Err(Error::GenerationFailure(format!(
        "geometric graph (n = {n}, radius = {radius}) still disconnected after {MAX_RADIUS_ESCALATIONS} escalations"
    )))
}

/// Each node links to its `k` Euclidean-nearest peers; links are symmetrized.
pub fn build_nearest_neighbor(n: usize, k: usize, seed: u64) -> Result<DirectedGraph> {
    if n == 0 {
        return Err(Error::InvalidSize("nearest-neighbour graph needs n ≥ 1".into()));
    }
    if k >= n && n > 1 {
        return Err(Error::InvalidParameter(format!("k = {k} must be below n = {n}")));
    }
    let pts = unit_square_points(n, seed);
    let mut pairs = Vec::new();
    for a in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&b| b != a).collect();
        others.sort_by(|&x, &y| dist2(pts[a], pts[x]).total_cmp(&dist2(pts[a], pts[y])).then(x.cmp(&y)));
        pairs.extend(others.into_iter().take(k).map(|b| (a, b)));
    }
    let g = DirectedGraph::undirected(n, pairs);
    if !g.is_strongly_connected() {
        return Err(Error::GenerationFailure(format!(
            "{k}-nearest-neighbour graph with n = {n}, seed = {seed} is disconnected"
        )));
    }
    Ok(g)
}

/// Dense row-stochastic mixing matrix with cached in-neighbour lists.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    entries: DMatrix<f64>,
    /// `support[i]` lists `(j, a_ij)` for every `a_ij > 0`, including `j = i`.
    support: Vec<Vec<(usize, f64)>>,
}

impl MixingMatrix {
    /// Validates with default tolerances.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerances(entries, &Tolerances::default())
    }

    pub fn with_tolerances(entries: DMatrix<f64>, tol: &Tolerances) -> Result<Self> {
        let m = Self::row_stochastic_with(entries, tol)?;
        if !m.is_primitive() {
            return Err(Error::InvalidMatrix("matrix is not primitive".into()));
        }
        Ok(m)
    }

    /// Checks non-negativity and row sums only. Gossip steps accept such
    /// matrices; spectral metrics and the optimizers need [`MixingMatrix::new`].
    pub fn row_stochastic(entries: DMatrix<f64>) -> Result<Self> {
        Self::row_stochastic_with(entries, &Tolerances::default())
    }

    fn row_stochastic_with(entries: DMatrix<f64>, tol: &Tolerances) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(Error::Shape(format!(
                "mixing matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let mut support = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = Vec::new();
            let mut sum = 0.0;
            for j in 0..n {
                let a = entries[(i, j)];
                if !a.is_finite() || a < 0.0 {
                    return Err(Error::InvalidMatrix(format!("entry ({i}, {j}) = {a} is not a non-negative number")));
                }
                if a > 0.0 {
                    row.push((j, a));
                }
                sum += a;
            }
            if (sum - 1.0).abs() > tol.row_sum {
                return Err(Error::NotRowStochastic { row: i, sum });
            }
            support.push(row);
        }
        Ok(Self { entries, support })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Positive entries of row `i` as `(j, a_ij)`.
    pub fn row_support(&self, i: usize) -> &[(usize, f64)] {
        &self.support[i]
    }

    /// Boolean powering: primitive iff `A^m > 0` for `m = 2^s ≥ (n−1)² + 1`
    /// (Wielandt's bound).
    fn is_primitive(&self) -> bool {
        let n = self.n();
        let words = n.div_ceil(64);
        let mut p: Vec<Vec<u64>> = (0..n)
            .map(|i| {
                let mut bits = vec![0u64; words];
                for &(j, _) in &self.support[i] {
                    bits[j / 64] |= 1 << (j % 64);
                }
                bits
            })
            .collect();
        let target = (n - 1) * (n - 1) + 1;
        let mut power = 1;
        while power < target {
            let mut next = vec![vec![0u64; words]; n];
            for i in 0..n {
                for k in 0..n {
                    if p[i][k / 64] >> (k % 64) & 1 == 1 {
                        for w in 0..words {
                            next[i][w] |= p[k][w];
                        }
                    }
                }
            }
            p = next;
            power *= 2;
        }
        let full_last = if n % 64 == 0 { u64::MAX } else { (1u64 << (n % 64)) - 1 };
        p.iter().all(|row| {
            row.iter()
                .enumerate()
                .all(|(w, &bits)| bits == if w + 1 == words { full_last } else { u64::MAX })
        })
    }

    /// Text export: `n` on the first line, then `n` rows of comma-separated
    /// values with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.n();
        let mut out = format!("{n}\n");
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{:.16e}", self.entries[(i, j)])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        Self::new(parse_matrix_csv(text)?)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Parses the text export into a dense matrix without validating it.
pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let n: usize = lines
        .next()
        .ok_or_else(|| Error::Parse("empty matrix file".into()))?
        .parse()
        .map_err(|e| Error::Parse(format!("matrix header: {e}")))?;
    let mut entries = DMatrix::zeros(n, n);
    for i in 0..n {
        let line = lines.next().ok_or_else(|| Error::Parse(format!("missing row {i}")))?;
        let vals: Vec<&str> = line.split(',').collect();
        if vals.len() != n {
            return Err(Error::Parse(format!("row {i} has {} entries, expected {n}", vals.len())));
        }
        for (j, v) in vals.iter().enumerate() {
            entries[(i, j)] = v.trim().parse().map_err(|e| Error::Parse(format!("entry ({i}, {j}): {e}")))?;
        }
    }
    if lines.next().is_some() {
        return Err(Error::Parse(format!("more than {n} rows")));
    }
Ok(entries)
}

/// `a_ij = 1 / (1 + d_i^in)` on the in-neighbourhood of `i` (self included).
pub fn weights_from_indegree(g: &DirectedGraph) -> Result<MixingMatrix> {
    if !g.has_self_loops() {
        return Err(Error::InvalidGraph("in-degree weighting needs a self-loop on every node".into()));
    }
    let n = g.n();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let neighbors = g.in_neighbors(i);
        let w = 1.0 / (1.0 + neighbors.len() as f64);
        a[(i, i)] = w;
        for j in neighbors {
            a[(i, j)] = w;
        }
    }
    MixingMatrix::new(a).map_err(|e| match e {
        Error::InvalidMatrix(msg) => Error::InvalidGraph(format!("{msg} (is the graph strongly connected?)")),
        other => other,
    })
}
