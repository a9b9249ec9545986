//! Boxes and dyadic cubes in `ℤᵈ`, their nearest-neighbour graphs and
//! combinatorial Laplacians.
//!
//! Vertices of a box are enumerated lexicographically with coordinate 0 most
//! significant, so vertex `x` of a box with sides `s` has index
//! `Σ_a (x_a − origin_a) · Π_{b>a} s_b`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::SymMatrix;

/// Default cap on vertex counts of assembled regions.
pub const MAX_VERTICES: usize = 1 << 20;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("expected {expected} sides, got {got}")]
    SideCount { expected: usize, got: usize },
    #[error("box sides must be positive")]
    ZeroSide,
    #[error("region has {vertices} vertices, above the cap of {cap}")]
    TooLarge { vertices: usize, cap: usize },
    #[error("potential has {got} values for {expected} vertices")]
    PotentialLength { expected: usize, got: usize },
    #[error("dyadic levels must satisfy 0 <= i <= j (got i = {i}, j = {j})")]
    LevelOrder { i: usize, j: usize },
    #[error("sides must be ascending")]
    NotAscending,
    #[error("duplicate point {0:?}")]
    DuplicatePoint(Vec<i64>),
}

/// An axis-aligned box `origin + Π [0, sides_a)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub origin: Vec<i64>,
    pub sides: Vec<usize>,
}

impl Region {
    pub fn new(origin: Vec<i64>, sides: Vec<usize>) -> Result<Self, LatticeError> {
        if sides.is_empty() {
            return Err(LatticeError::ZeroDimension);
        }
        if origin.len() != sides.len() {
            return Err(LatticeError::SideCount {
                expected: sides.len(),
                got: origin.len(),
            });
        }
        if sides.contains(&0) {
            return Err(LatticeError::ZeroSide);
        }
        Ok(Self { origin, sides })
    }

    /// The dyadic cube `C_i = {0, …, 2^i − 1}^d`.
    pub fn cube(level: usize, d: usize) -> Self {
        Self {
            origin: vec![0; d],
            sides: vec![1 << level; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.sides.len()
    }

    pub fn volume(&self) -> usize {
        self.sides.iter().product()
    }

    pub fn coords(&self, index: usize) -> Vec<i64> {
        let mut out = vec![0; self.dim()];
        let mut rest = index;
        for a in (0..self.dim()).rev() {
            out[a] = self.origin[a] + (rest % self.sides[a]) as i64;
            rest /= self.sides[a];
        }
        out
    }

    pub fn index_of(&self, point: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for (a, &x) in point.iter().enumerate() {
            let off = x - self.origin[a];
            if off < 0 || off as usize >= self.sides[a] {
                return None;
            }
            idx = idx * self.sides[a] + off as usize;
        }
        Some(idx)
    }
}

/// Finite simple undirected graph with edges stored as sorted `(u, v)`,
/// `u < v`, in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleGraph {
    vertices: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl SimpleGraph {
    /// Builds the graph, dropping self-loops and duplicate edges.
    pub fn new(vertices: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut list: Vec<(usize, usize)> = edges
            .into_iter()
            .filter(|&(u, v)| u != v && u < vertices && v < vertices)
            .map(|(u, v)| (u.min(v), u.max(v)))
            .collect();
        list.sort_unstable();
        list.dedup();
        let mut adjacency = vec![Vec::new(); vertices];
        for &(u, v) in &list {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        Self {
            vertices,
            edges: list,
            adjacency,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Index of edge `{u, v}` in [`SimpleGraph::edges`].
    pub fn edge_index(&self, u: usize, v: usize) -> Option<usize> {
        self.edges.binary_search(&(u.min(v), u.max(v))).ok()
    }

    pub fn subgraph_keeping(&self, keep: impl Fn(usize, (usize, usize)) -> bool) -> Self {
        Self::new(
            self.vertices,
            self.edges
                .iter()
                .enumerate()
                .filter(|&(k, &e)| keep(k, e))
                .map(|(_, &e)| e),
        )
    }

    pub fn is_connected(&self) -> bool {
        if self.vertices == 0 {
            return true;
        }
        let mut seen = vec![false; self.vertices];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.vertices
    }
}

/// Nearest-neighbour graph of a box (or of an arbitrary point set).
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGraph {
    pub region: Region,
    pub graph: SimpleGraph,
}

impl RegionGraph {
    pub fn vertex_count(&self) -> usize {
        self.graph.vertex_count()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        self.graph.edges()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.graph.degrees()
    }
}

pub fn box_graph(d: usize, sides: &[usize]) -> Result<RegionGraph, LatticeError> {
    box_graph_capped(d, sides, MAX_VERTICES)
}

pub fn box_graph_capped(d: usize, sides: &[usize], cap: usize) -> Result<RegionGraph, LatticeError> {
    if d == 0 {
        return Err(LatticeError::ZeroDimension);
    }
    if sides.len() != d {
        return Err(LatticeError::SideCount {
            expected: d,
            got: sides.len(),
        });
    }
    let region = Region::new(vec![0; d], sides.to_vec())?;
    region_graph_capped(&region, cap)
}

pub fn region_graph(region: &Region) -> Result<RegionGraph, LatticeError> {
    region_graph_capped(region, MAX_VERTICES)
}

fn region_graph_capped(region: &Region, cap: usize) -> Result<RegionGraph, LatticeError> {
    let vertices = region
        .sides
        .iter()
        .try_fold(1usize, |acc, &s| acc.checked_mul(s))
        .unwrap_or(usize::MAX);
    if vertices > cap {
        return Err(LatticeError::TooLarge { vertices, cap });
    }
    let d = region.dim();
    let mut strides = vec![1usize; d];
    for a in (0..d.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * region.sides[a + 1];
    }
    let mut edges = Vec::new();
    for v in 0..vertices {
        let mut rest = v;
        for a in (0..d).rev() {
            let x = rest % region.sides[a];
            rest /= region.sides[a];
            if x + 1 < region.sides[a] {
                edges.push((v, v + strides[a]));
            }
        }
    }
    Ok(RegionGraph {
        region: region.clone(),
        graph: SimpleGraph::new(vertices, edges),
    })
}

/// Nearest-neighbour graph on an arbitrary finite set of lattice points,
/// taken in the given order.
pub fn point_set_graph(points: &[Vec<i64>]) -> Result<SimpleGraph, LatticeError> {
    let mut index: HashMap<&[i64], usize> = HashMap::with_capacity(points.len());
    for (k, p) in points.iter().enumerate() {
        if index.insert(p.as_slice(), k).is_some() {
            return Err(LatticeError::DuplicatePoint(p.clone()));
        }
    }
    let mut edges = Vec::new();
    for (k, p) in points.iter().enumerate() {
        let mut q = p.clone();
        for a in 0..p.len() {
            q[a] += 1;
            if let Some(&m) = index.get(q.as_slice()) {
                edges.push((k, m));
            }
            q[a] -= 1;
        }
    }
    Ok(SimpleGraph::new(points.len(), edges))
}

/// Partition of `C_j` into the `2^{d(j−i)}` dyadic subcubes of side `2^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicPartition {
    /// Subcube of each vertex of `C_j`.
    pub cell_of: Vec<usize>,
    /// Vertices of `C_j` in each subcube, listed in the subcube's own
    /// lexicographic order, so position `m` is local vertex `m` of `C_i`.
    pub cells: Vec<Vec<usize>>,
    /// Vertices adjacent (inside `C_j`) to a vertex of another subcube.
    pub boundary: Vec<bool>,
}

impl DyadicPartition {
    pub fn boundary_count(&self) -> usize {
        self.boundary.iter().filter(|&&b| b).count()
    }
}

pub fn dyadic_partition(j: usize, i: usize, d: usize) -> Result<DyadicPartition, LatticeError> {
    if i > j {
        return Err(LatticeError::LevelOrder { i, j });
    }
    if d == 0 {
        return Err(LatticeError::ZeroDimension);
    }
    let outer = Region::cube(j, d);
    let cell_side = 1usize << i;
    let per_axis = 1usize << (j - i);
    let cells_region = Region::new(vec![0; d], vec![per_axis; d])?;
    let local = Region::cube(i, d);
    let n = outer.volume();
    let mut cell_of = vec![0; n];
    let mut cells = Vec::with_capacity(cells_region.volume());
    for c in 0..cells_region.volume() {
        let offset = cells_region.coords(c);
        let mut members = Vec::with_capacity(local.volume());
        for m in 0..local.volume() {
            let p: Vec<i64> = local
                .coords(m)
                .iter()
                .zip(&offset)
                .map(|(&x, &o)| x + o * cell_side as i64)
                .collect();
            let v = outer.index_of(&p).expect("subcube lies inside C_j");
            cell_of[v] = c;
            members.push(v);
        }
        cells.push(members);
    }
    let graph = region_graph(&outer)?;
    let mut boundary = vec![false; n];
    for &(u, v) in graph.edges() {
        if cell_of[u] != cell_of[v] {
            boundary[u] = true;
            boundary[v] = true;
        }
    }
    Ok(DyadicPartition {
        cell_of,
        cells,
        boundary,
    })
}

/// Fraction of boundary points of the level-`i` dyadic partition of `C_j`.
pub fn boundary_fraction(j: usize, i: usize, d: usize) -> Result<f64, LatticeError> {
    let part = dyadic_partition(j, i, d)?;
    Ok(part.boundary_count() as f64 / part.cell_of.len() as f64)
}

/// Combinatorial Laplacian `deg(x) f(x) − Σ_{y∼x} f(y)`, or with a potential
/// `ω` the operator `deg(x) ω(x) f(x) − Σ_{y∼x} f(y)`. Degrees are taken in
/// `g` itself.
pub fn laplacian(g: &SimpleGraph, potential: Option<&[f64]>) -> Result<SymMatrix, LatticeError> {
    let n = g.vertex_count();
    if let Some(w) = potential {
        if w.len() != n {
            return Err(LatticeError::PotentialLength {
                expected: n,
                got: w.len(),
            });
        }
    }
    let mut m = SymMatrix::zeros(n.max(1));
    for v in 0..n {
        let deg = g.degree(v) as f64;
        let diag = match potential {
            Some(w) => deg * w[v],
            None => deg,
        };
        m.set(v, v, diag);
    }
    for &(u, v) in g.edges() {
        m.set(u, v, -1.0);
    }
    Ok(m)
}

/// A centered box with its measured boundary ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct FolnerBox {
    pub region: Region,
    /// `|∂Q| / |Q|`, where `∂Q` are vertices with a lattice neighbour
    /// outside `Q`.
    pub boundary_ratio: f64,
}

pub fn folner_boxes(d: usize, sides: &[usize]) -> Result<Vec<FolnerBox>, LatticeError> {
    if d == 0 {
        return Err(LatticeError::ZeroDimension);
    }
    if sides.windows(2).any(|w| w[0] > w[1]) {
        return Err(LatticeError::NotAscending);
    }
    sides
        .iter()
        .map(|&s| {
            if s == 0 {
                return Err(LatticeError::ZeroSide);
            }
            let origin = vec![-((s / 2) as i64); d];
            let region = Region::new(origin, vec![s; d])?;
            Ok(FolnerBox {
                boundary_ratio: outer_boundary_ratio(&region),
                region,
            })
        })
        .collect()
}

/// Counts vertices on the box surface, those with some coordinate at an
/// extreme; every such vertex has a lattice neighbour outside.
fn outer_boundary_ratio(region: &Region) -> f64 {
    let vol = region.volume() as f64;
    // Interior (side − 2)^d when every side exceeds 2.
    let interior: f64 = region
        .sides
        .iter()
        .map(|&s| s.saturating_sub(2) as f64)
        .product();
    (vol - interior) / vol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn box_graph_examples() {
        let g = box_graph(1, &[2]).unwrap();
        assert_eq!((g.vertex_count(), g.edges().len()), (2, 1));
        let g = box_graph(2, &[2, 2]).unwrap();
        assert_eq!((g.vertex_count(), g.edges().len()), (4, 4));
        let g = box_graph(1, &[4]).unwrap();
        assert_eq!(g.degrees(), vec![1, 2, 2, 1]);
    }

    #[test]
    fn box_edge_count_formula() {
        for sides in [vec![3usize, 4], vec![2, 3, 5], vec![7]] {
            let g = box_graph(sides.len(), &sides).unwrap();
            let expected: usize = (0..sides.len())
                .map(|a| {
                    (sides[a] - 1)
                        * sides
                            .iter()
                            .enumerate()
                            .filter(|&(b, _)| b != a)
                            .map(|(_, &s)| s)
                            .product::<usize>()
                })
                .sum();
            assert_eq!(g.edges().len(), expected);
            for &(u, v) in g.edges() {
                let (pu, pv) = (g.region.coords(u), g.region.coords(v));
                let l1: i64 = pu.iter().zip(&pv).map(|(a, b)| (a - b).abs()).sum();
                assert_eq!(l1, 1);
            }
        }
    }

    #[test]
    fn box_graph_rejects_oversized_and_malformed() {
        assert!(matches!(
            box_graph_capped(2, &[100, 100], 1000),
            Err(LatticeError::TooLarge { vertices: 10000, .. })
        ));
        assert_eq!(box_graph(0, &[]), Err(LatticeError::ZeroDimension));
        assert_eq!(box_graph(1, &[0]), Err(LatticeError::ZeroSide));
        assert!(matches!(box_graph(2, &[3]), Err(LatticeError::SideCount { .. })));
    }

    #[test]
    fn coordinates_round_trip() {
        let r = Region::new(vec![-2, 5, 0], vec![3, 2, 4]).unwrap();
        for v in 0..r.volume() {
            assert_eq!(r.index_of(&r.coords(v)), Some(v));
        }
        assert_eq!(r.coords(0), vec![-2, 5, 0]);
        assert_eq!(r.coords(1), vec![-2, 5, 1]);
        assert_eq!(r.index_of(&[10, 0, 0]), None);
    }

    #[test]
    fn dyadic_partition_examples() {
        let p = dyadic_partition(3, 3, 2).unwrap();
        assert_eq!(p.cells.len(), 1);
        assert_eq!(p.boundary_count(), 0);

        let p = dyadic_partition(2, 1, 1).unwrap();
        assert_eq!(p.cells, vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(p.boundary, vec![false, true, true, false]);

        let p = dyadic_partition(3, 2, 1).unwrap();
        let b: Vec<usize> = (0..8).filter(|&v| p.boundary[v]).collect();
        assert_eq!(b, vec![3, 4]);

        assert_eq!(dyadic_partition(1, 2, 1), Err(LatticeError::LevelOrder { i: 2, j: 1 }));
    }

    #[test]
    fn dyadic_cells_in_two_dimensions() {
        let p = dyadic_partition(1, 0, 2).unwrap();
        assert_eq!(p.cells, vec![vec![0], vec![1], vec![2], vec![3]]);
        let p = dyadic_partition(2, 1, 2).unwrap();
        // C_2 is 4x4; the first 2x2 subcube holds vertices 0, 1, 4, 5.
        assert_eq!(p.cells[0], vec![0, 1, 4, 5]);
        assert_eq!(p.cells[3], vec![10, 11, 14, 15]);
        assert_eq!(p.boundary_count(), 12);
    }

    #[test]
    fn boundary_fraction_examples() {
        assert_eq!(boundary_fraction(2, 1, 1).unwrap(), 0.5);
        assert_eq!(boundary_fraction(3, 2, 1).unwrap(), 0.25);
        assert_eq!(boundary_fraction(4, 4, 2).unwrap(), 0.0);
    }

    #[test]
    fn boundary_fraction_monotone_and_small_for_large_cells() {
        for d in 1..=2 {
            for j in 0..=5 {
                let fr: Vec<f64> = (0..=j).map(|i| boundary_fraction(j, i, d).unwrap()).collect();
                assert!(fr.windows(2).all(|w| w[1] <= w[0]), "d={d} j={j}: {fr:?}");
                assert_eq!(fr[j], 0.0);
            }
            // Cells of side 2^i have at most 2d·2^{i(d−1)} boundary vertices
            // out of 2^{id}, so the fraction stays below 2d/2^i for every j.
            for i in 0..=5 {
                for j in i..=5 {
                    let b = boundary_fraction(j, i, d).unwrap();
                    assert!(b <= 2.0 * d as f64 / (1u64 << i) as f64 + 1e-15);
                }
            }
        }
    }

    #[test]
    fn laplacian_examples() {
        let g = box_graph(1, &[2]).unwrap();
        let l = laplacian(&g.graph, None).unwrap();
        assert_eq!(l.as_matrix().as_slice(), &[1.0, -1.0, -1.0, 1.0]);
        let l = laplacian(&g.graph, Some(&[2.0, 3.0])).unwrap();
        assert_eq!(l.as_matrix().as_slice(), &[2.0, -1.0, -1.0, 3.0]);
        let single = box_graph(1, &[1]).unwrap();
        let l = laplacian(&single.graph, Some(&[7.0])).unwrap();
        assert_eq!(l.as_matrix().as_slice(), &[0.0]);
        assert!(matches!(
            laplacian(&g.graph, Some(&[1.0])),
            Err(LatticeError::PotentialLength { .. })
        ));
    }

    #[test]
    fn laplacian_is_positive_semidefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for sides in [vec![6usize], vec![3, 4], vec![2, 2, 3]] {
            let g = box_graph(sides.len(), &sides).unwrap();
            let l = laplacian(&g.graph, None).unwrap();
            let spec = linalg::sym_spectrum(&l).unwrap();
            assert!(spec[0].abs() < 1e-8);
            let n = l.dim();
            let ones = vec![1.0; n];
            for r in 0..n {
                let row: f64 = l.row(r).iter().zip(&ones).map(|(a, b)| a * b).sum();
                assert_eq!(row, 0.0);
            }
            for _ in 0..20 {
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let q: f64 = (0..n)
                    .map(|r| x[r] * l.row(r).iter().zip(&x).map(|(a, b)| a * b).sum::<f64>())
                    .sum();
                assert!(q >= -1e-12);
            }
        }
    }

    #[test]
    fn rebuilt_region_gives_identical_matrix() {
        let g = box_graph(2, &[3, 5]).unwrap();
        let json = serde_json::to_string(&g.region).unwrap();
        let region: Region = serde_json::from_str(&json).unwrap();
        let h = region_graph(&region).unwrap();
        let a = laplacian(&g.graph, None).unwrap();
        let b = laplacian(&h.graph, None).unwrap();
        let bits = |m: &SymMatrix| m.as_matrix().as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn point_set_matches_box() {
        let g = box_graph(2, &[3, 3]).unwrap();
        let points: Vec<Vec<i64>> = (0..9).map(|v| g.region.coords(v)).collect();
        let h = point_set_graph(&points).unwrap();
        assert_eq!(h.edges(), g.edges());
        // An L-shaped set: three corners of a 2x2 square.
        let l = point_set_graph(&[vec![0, 0], vec![0, 1], vec![1, 0]]).unwrap();
        assert_eq!(l.edges(), &[(0, 1), (0, 2)]);
        assert!(point_set_graph(&[vec![0], vec![0]]).is_err());
    }

    #[test]
    fn folner_box_ratios() {
        let b = folner_boxes(1, &[4, 1024]).unwrap();
        assert_eq!(b[0].boundary_ratio, 2.0 / 4.0);
        assert_eq!(b[1].boundary_ratio, 2.0 / 1024.0);
        assert!(b[1].boundary_ratio < 0.002);
        let b = folner_boxes(2, &[4]).unwrap();
        assert_eq!(b[0].boundary_ratio, 12.0 / 16.0);
        assert_eq!(b[0].region.origin, vec![-2, -2]);
        assert_eq!(folner_boxes(1, &[8, 4]), Err(LatticeError::NotAscending));
    }

    #[test]
    fn folner_ratio_matches_neighbour_count() {
        for (d, s) in [(1usize, 5usize), (2, 4), (2, 7), (3, 3)] {
            let b = &folner_boxes(d, &[s]).unwrap()[0];
            let r = &b.region;
            let mut count = 0;
            for v in 0..r.volume() {
                let p = r.coords(v);
                let outside = (0..d).any(|a| {
                    let mut q = p.clone();
                    q[a] += 1;
                    let up = r.index_of(&q).is_none();
                    q[a] -= 2;
                    up || r.index_of(&q).is_none()
                });
                count += outside as usize;
            }
            assert_eq!(b.boundary_ratio, count as f64 / r.volume() as f64);
            assert!(b.boundary_ratio <= 2.0 * d as f64 / s as f64 + 1e-15);
        }
    }
}
