//! Self-similar graphs built from a seed graph by repeated gluing of copies,
//! finite-propagation operators that depend only on local isomorphism
//! classes, and the spectral tower they generate.
//!
//! `G_{n+1}` consists of `k` copies of `G_n`; copy `c` holds vertex `v` of
//! `G_n` at index `c·|V(G_n)| + v`, so copy 0 is `G_n` itself. The
//! connecting vertices available for gluing are the images of `S_n` in every
//! copy, addressed as `(copy, slot)` with `slot` an index into `S_n`.

pub mod canon;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::SimpleGraph;
use crate::linalg::{self, LinalgError, Matrix, SymMatrix};
use crate::stepfn::{sup_distance, StepFunction};

pub use canon::{canonical_form, CanonicalForm};

/// Default vertex cap for constructed levels.
pub const MAX_VERTICES: usize = 1 << 20;
/// Largest level handed to the dense eigensolver.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum SelfSimilarError {
    #[error("level must be at least 1")]
    ZeroLevel,
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("glue edge {edge:?} at level {level}: {reason}")]
    BadGlue {
        level: usize,
        edge: [[usize; 2]; 2],
        reason: String,
    },
    #[error("level {level} has {vertices} vertices, above the cap of {cap}")]
    TooLarge {
        level: usize,
        vertices: usize,
        cap: usize,
    },
    #[error("kernel is not symmetric at ({row}, {col})")]
    Asymmetric { row: usize, col: usize },
    #[error("kernel must be declared symmetric to build a self-adjoint operator")]
    NotSymmetric,
    #[error("{rule} kernel needs radius at least {min}")]
    RadiusTooSmall { rule: &'static str, min: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Choice of `S_{n+1}` among the vertices of `G_{n+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Selection {
    /// The listed `(copy, slot)` images of `S_n`, in order.
    Slots { slots: Vec<[usize; 2]> },
    /// Images of `S_n` in every copy.
    All,
    /// Images of `S_n` in copies `1..k`.
    New,
    /// Every vertex outside `V(G_n)`.
    AllNew,
}

/// Seed graph, connecting set, copy count and gluing rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfSimilarSpec {
    pub vertices: usize,
    pub edges: Vec<[usize; 2]>,
    pub connecting: Vec<usize>,
    pub copies: usize,
    pub max_degree: usize,
    /// Edges `[[copy, slot], [copy, slot]]` added at every level.
    pub glue: Vec<[[usize; 2]; 2]>,
    /// Optional per-level overrides: entry `n − 1` replaces `glue` when
    /// building `G_{n+1}`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub glue_by_level: Vec<Vec<[[usize; 2]; 2]>>,
    pub select: Selection,
}

impl SelfSimilarSpec {
    /// Path seed `0 − 1` doubled at each level by joining the right end of
    /// copy 0 to the left end of copy 1; `G_n` is the path on `2^n` vertices.
    pub fn path() -> Self {
        Self {
            vertices: 2,
            edges: vec![[0, 1]],
            connecting: vec![0, 1],
            copies: 2,
            max_degree: 2,
            glue: vec![[[0, 1], [1, 0]]],
            glue_by_level: vec![],
            select: Selection::Slots {
                slots: vec![[0, 0], [1, 1]],
            },
        }
    }

    pub fn validate(&self) -> Result<(), SelfSimilarError> {
        let bad = |m: String| Err(SelfSimilarError::InvalidSpec(m));
        if self.vertices == 0 {
            return bad("seed graph has no vertices".into());
        }
        if self.copies < 2 {
            return bad(format!("copies must be at least 2, got {}", self.copies));
        }
        for e in &self.edges {
            if e[0] >= self.vertices || e[1] >= self.vertices || e[0] == e[1] {
                return bad(format!("seed edge {e:?} is not a valid edge"));
            }
        }
        let seed = self.seed_graph();
        if seed.edges().len() != self.edges.len() {
            return bad("seed edge list has duplicates".into());
        }
        if let Some(v) = (0..self.vertices).find(|&v| seed.degree(v) > self.max_degree) {
            return bad(format!("seed vertex {v} exceeds the degree bound"));
        }
        for (k, &s) in self.connecting.iter().enumerate() {
            if s >= self.vertices || self.connecting[..k].contains(&s) {
                return bad(format!("connecting vertex {s} is out of range or repeated"));
            }
        }
        if let Selection::Slots { slots } = &self.select {
            if let Some(s) = slots.iter().find(|s| s[0] >= self.copies) {
                return bad(format!("selected slot {s:?} names a missing copy"));
            }
        }
        Ok(())
    }

    fn seed_graph(&self) -> SimpleGraph {
        SimpleGraph::new(self.vertices, self.edges.iter().map(|e| (e[0], e[1])))
    }

    fn glue_for(&self, n: usize) -> &[[[usize; 2]; 2]] {
        self.glue_by_level.get(n - 1).map_or(&self.glue, Vec::as_slice)
    }
}

/// `G_n` together with its connecting set `S_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLevel {
    pub level: usize,
    pub graph: SimpleGraph,
    pub connecting: Vec<usize>,
    /// Endpoints of the edges glued in when this level was built.
    pub glue_endpoints: Vec<usize>,
}

fn next_level(spec: &SelfSimilarSpec, prev: &GraphLevel, cap: usize) -> Result<GraphLevel, SelfSimilarError> {
    let n = prev.level;
    let size = prev.graph.vertex_count();
    let k = spec.copies;
    let vertices = size
        .checked_mul(k)
        .filter(|&v| v <= cap)
        .ok_or(SelfSimilarError::TooLarge {
            level: n + 1,
            vertices: size.saturating_mul(k),
            cap,
        })?;
    let slots = prev.connecting.len();
    let at = |c: usize, s: usize| c * size + prev.connecting[s];
    let mut edges: Vec<(usize, usize)> = (0..k)
        .flat_map(|c| prev.graph.edges().iter().map(move |&(u, v)| (c * size + u, c * size + v)))
        .collect();
    let mut present: HashSet<(usize, usize)> = edges.iter().copied().collect();
    let mut endpoints = Vec::new();
    for &edge in spec.glue_for(n) {
        let err = |reason: &str| SelfSimilarError::BadGlue {
            level: n + 1,
            edge,
            reason: reason.into(),
        };
        let [[ca, sa], [cb, sb]] = edge;
        if ca >= k || cb >= k {
            return Err(err("copy index out of range"));
        }
        if sa >= slots || sb >= slots {
            return Err(err("endpoint is not a connecting vertex"));
        }
        let (u, v) = (at(ca, sa), at(cb, sb));
        if u == v {
            return Err(err("self-loop"));
        }
        if !present.insert((u.min(v), u.max(v))) {
            return Err(err("duplicate edge"));
        }
        edges.push((u, v));
        endpoints.extend([u, v]);
    }
    let graph = SimpleGraph::new(vertices, edges);
    for &edge in spec.glue_for(n) {
        let [[ca, sa], [cb, sb]] = edge;
        for v in [at(ca, sa), at(cb, sb)] {
            if graph.degree(v) > spec.max_degree {
                return Err(SelfSimilarError::BadGlue {
                    level: n + 1,
                    edge,
                    reason: format!("vertex {v} exceeds degree bound {}", spec.max_degree),
                });
            }
        }
    }
    let connecting = match &spec.select {
        Selection::Slots { slots: chosen } => {
            if let Some(s) = chosen.iter().find(|s| s[1] >= slots) {
                return Err(SelfSimilarError::InvalidSpec(format!(
                    "selected slot {s:?} exceeds |S_{n}| = {slots}"
                )));
            }
            chosen.iter().map(|s| at(s[0], s[1])).collect()
        }
        Selection::All => (0..k).flat_map(|c| (0..slots).map(move |s| at(c, s))).collect(),
        Selection::New => (1..k).flat_map(|c| (0..slots).map(move |s| at(c, s))).collect(),
        Selection::AllNew => (size..vertices).collect(),
    };
    endpoints.sort_unstable();
    endpoints.dedup();
    Ok(GraphLevel {
        level: n + 1,
        graph,
        connecting,
        glue_endpoints: endpoints,
    })
}

/// Levels `G_1, …, G_n`.
pub fn build_tower(spec: &SelfSimilarSpec, n: usize) -> Result<Vec<GraphLevel>, SelfSimilarError> {
    build_tower_capped(spec, n, MAX_VERTICES)
}

pub fn build_tower_capped(
    spec: &SelfSimilarSpec,
    n: usize,
    cap: usize,
) -> Result<Vec<GraphLevel>, SelfSimilarError> {
    if n == 0 {
        return Err(SelfSimilarError::ZeroLevel);
    }
    spec.validate()?;
    if spec.vertices > cap {
        return Err(SelfSimilarError::TooLarge {
            level: 1,
            vertices: spec.vertices,
            cap,
        });
    }
    let mut levels = vec![GraphLevel {
        level: 1,
        graph: spec.seed_graph(),
        connecting: spec.connecting.clone(),
        glue_endpoints: vec![],
    }];
    while levels.len() < n {
        let next = next_level(spec, levels.last().expect("nonempty"), cap)?;
        levels.push(next);
    }
    Ok(levels)
}

pub fn build_level(spec: &SelfSimilarSpec, n: usize) -> Result<GraphLevel, SelfSimilarError> {
    Ok(build_tower(spec, n)?.pop().expect("n >= 1 levels"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfSimilarityReport {
    /// `|S_n| / |V(G_n)|` for `n = 1..=levels`.
    pub ratios: Vec<f64>,
    /// `|∂V(G_n)| / |V(G_n)|` inside `G_levels`: vertices of `G_n` with a
    /// neighbour outside it.
    pub folner_defects: Vec<f64>,
    /// Heuristic verdict from the finite ratio sequence: nonincreasing,
    /// still strictly decreasing at the last level, and at most half its
    /// first value there.
    pub looks_self_similar: bool,
}

pub fn check_self_similar(spec: &SelfSimilarSpec, levels: usize) -> Result<SelfSimilarityReport, SelfSimilarError> {
    let tower = build_tower(spec, levels)?;
    let top = &tower.last().expect("nonempty").graph;
    let ratios: Vec<f64> = tower
        .iter()
        .map(|l| l.connecting.len() as f64 / l.graph.vertex_count() as f64)
        .collect();
    let folner_defects = tower
        .iter()
        .map(|l| {
            let size = l.graph.vertex_count();
            let boundary = (0..size)
                .filter(|&v| top.neighbors(v).iter().any(|&w| w >= size))
                .count();
            boundary as f64 / size as f64
        })
        .collect();
    let nonincreasing = ratios.windows(2).all(|w| w[1] <= w[0]);
    let l = ratios.len();
    let decayed = l >= 2 && ratios[l - 1] < ratios[l - 2] && ratios[l - 1] <= 0.5 * ratios[0];
    Ok(SelfSimilarityReport {
        ratios,
        folner_defects,
        looks_self_similar: nonincreasing && decayed,
    })
}

/// The radius-`r` ball around `x` with `x` and `y` marked, as seen by a
/// kernel rule. The graph is given in canonical labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedBall {
    pub graph: SimpleGraph,
    pub x: usize,
    pub y: usize,
    /// `d_G(x, y)`.
    pub distance: usize,
}

pub type CustomRule = Arc<dyn Fn(&MarkedBall) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum KernelRule {
    /// 1 on neighbouring pairs.
    Adjacency,
    /// Degree on the diagonal, −1 on edges.
    Laplacian,
    /// `c` on the diagonal.
    Constant(f64),
    Custom(CustomRule),
}

impl fmt::Debug for KernelRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelRule::Adjacency => write!(f, "Adjacency"),
            KernelRule::Laplacian => write!(f, "Laplacian"),
            KernelRule::Constant(c) => write!(f, "Constant({c})"),
            KernelRule::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Finite-propagation kernel evaluated on isomorphism classes of marked
/// balls.
#[derive(Debug, Clone)]
pub struct PatternKernel {
    pub radius: usize,
    pub rule: KernelRule,
    pub symmetric: bool,
}

impl PatternKernel {
    pub fn adjacency() -> Self {
        Self {
            radius: 1,
            rule: KernelRule::Adjacency,
            symmetric: true,
        }
    }

    pub fn laplacian() -> Self {
        Self {
            radius: 1,
            rule: KernelRule::Laplacian,
            symmetric: true,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            radius: 0,
            rule: KernelRule::Constant(c),
            symmetric: true,
        }
    }

    fn check(&self) -> Result<(), SelfSimilarError> {
        if !self.symmetric {
            return Err(SelfSimilarError::NotSymmetric);
        }
        let need = |rule, min| {
            if self.radius < min {
                Err(SelfSimilarError::RadiusTooSmall { rule, min })
            } else {
                Ok(())
            }
        };
        match self.rule {
            KernelRule::Adjacency => need("adjacency", 1),
            KernelRule::Laplacian => need("laplacian", 1),
            _ => Ok(()),
        }
    }

    fn evaluate(&self, ball: &MarkedBall) -> f64 {
        match &self.rule {
            KernelRule::Adjacency => f64::from(u8::from(ball.distance == 1)),
            KernelRule::Laplacian => match ball.distance {
                0 => ball.graph.degree(ball.x) as f64,
                1 => -1.0,
                _ => 0.0,
            },
            KernelRule::Constant(c) => {
                if ball.distance == 0 {
                    *c
                } else {
                    0.0
                }
            }
            KernelRule::Custom(f) => f(ball),
        }
    }
}

/// Serializable description of the built-in kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelSpec {
    Adjacency,
    Laplacian,
    Constant { value: f64 },
}

impl From<&KernelSpec> for PatternKernel {
    fn from(k: &KernelSpec) -> Self {
        match k {
            KernelSpec::Adjacency => PatternKernel::adjacency(),
            KernelSpec::Laplacian => PatternKernel::laplacian(),
            KernelSpec::Constant { value } => PatternKernel::constant(*value),
        }
    }
}

/// Breadth-first distances from `x`, cut off beyond `r`.
fn ball(g: &SimpleGraph, x: usize, r: usize) -> Vec<(usize, usize)> {
    let mut dist = HashMap::from([(x, 0usize)]);
    let mut order = vec![(x, 0)];
    let mut queue = VecDeque::from([x]);
    while let Some(v) = queue.pop_front() {
        let dv = dist[&v];
        if dv == r {
            continue;
        }
        for &w in g.neighbors(v) {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(w) {
                e.insert(dv + 1);
                order.push((w, dv + 1));
                queue.push_back(w);
            }
        }
    }
    order
}

/// Induced subgraph on `members` in the given order.
fn induced(g: &SimpleGraph, members: &[usize]) -> SimpleGraph {
    let local: HashMap<usize, usize> = members.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    SimpleGraph::new(
        members.len(),
        members.iter().enumerate().flat_map(|(k, &v)| {
            g.neighbors(v)
                .iter()
                .filter_map(|w| local.get(w).map(|&m| (k, m)))
                .collect::<Vec<_>>()
        }),
    )
}

/// Matrix of the kernel on `g`. Each entry `A(x, y)` with `d(x, y) ≤ r` is
/// the rule applied to the canonical form of the marked ball around `x`;
/// equal forms share one evaluation.
pub fn pattern_operator(kernel: &PatternKernel, g: &SimpleGraph) -> Result<SymMatrix, SelfSimilarError> {
    kernel.check()?;
    let n = g.vertex_count();
    let mut cache: HashMap<CanonicalForm, f64> = HashMap::new();
    let mut m = Matrix::zeros(n.max(1));
    for x in 0..n {
        let around = ball(g, x, kernel.radius);
        let members: Vec<usize> = around.iter().map(|&(v, _)| v).collect();
        let local = induced(g, &members);
        for (y_local, &(y, distance)) in around.iter().enumerate() {
            let form = canonical_form(&local, &[0, y_local]);
            let value = *cache.entry(form).or_insert_with_key(|form| {
                kernel.evaluate(&MarkedBall {
                    graph: form.graph(),
                    x: form.marks[0],
                    y: form.marks[1],
                    distance,
                })
            });
            m.set(x, y, value);
        }
    }
    for r in 0..n {
        for c in r + 1..n {
            if m.get(r, c) != m.get(c, r) {
                return Err(SelfSimilarError::Asymmetric { row: r, col: c });
            }
        }
    }
    Ok(SymMatrix::from_matrix(m)?)
}

/// Rooted-ball classes of radius `r` with their vertex frequencies.
pub fn pattern_census(g: &SimpleGraph, r: usize) -> BTreeMap<CanonicalForm, f64> {
    let n = g.vertex_count();
    let mut counts: BTreeMap<CanonicalForm, usize> = BTreeMap::new();
    for x in 0..n {
        let members: Vec<usize> = ball(g, x, r).iter().map(|&(v, _)| v).collect();
        *counts.entry(canonical_form(&induced(g, &members), &[0])).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / n as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TowerLevel {
    pub level: usize,
    pub vertices: usize,
    pub ids: StepFunction,
    /// `Σ_{m ≥ level} structural_bound(m → m+1)` over the computed levels.
    pub certified_tail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TowerStep {
    pub from: usize,
    /// `‖N_{A_{n+1}} − N_{A_n}‖_∞`.
    pub distance: f64,
    /// Fraction of rows where `A_{G_{n+1}}` differs from the `k`-fold block
    /// copy of `A_{G_n}`.
    pub measured_defect: f64,
    /// Fraction of vertices within the kernel radius of a glue endpoint.
    pub structural_bound: f64,
}

impl TowerStep {
    pub fn holds(&self) -> bool {
        self.distance <= self.measured_defect + 1e-8 && self.measured_defect <= self.structural_bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TowerReport {
    pub levels: Vec<TowerLevel>,
    pub steps: Vec<TowerStep>,
}

pub fn tower_ids(
    spec: &SelfSimilarSpec,
    kernel: &PatternKernel,
    max_level: usize,
) -> Result<TowerReport, SelfSimilarError> {
    let tower = build_tower_capped(spec, max_level, DENSE_LIMIT)?;
    let operators: Vec<SymMatrix> = tower
        .iter()
        .map(|l| pattern_operator(kernel, &l.graph))
        .collect::<Result<_, _>>()?;
    let mut levels = Vec::with_capacity(tower.len());
    for (l, op) in tower.iter().zip(&operators) {
        levels.push(TowerLevel {
            level: l.level,
            vertices: l.graph.vertex_count(),
            ids: linalg::spectral_distribution(op)?,
            certified_tail: 0.0,
        });
    }
    let mut steps = Vec::new();
    for w in 0..tower.len().saturating_sub(1) {
        let (small, big) = (&operators[w], &operators[w + 1]);
        let size = small.dim();
        let n = big.dim();
        let differing = (0..n)
            .filter(|&x| {
                let (c, xl) = (x / size, x % size);
                (0..n).any(|y| {
                    let copy = if y / size == c { small.get(xl, y % size) } else { 0.0 };
                    big.get(x, y) != copy
                })
            })
            .count();
        let near = near_set(&tower[w + 1].graph, &tower[w + 1].glue_endpoints, kernel.radius);
        steps.push(TowerStep {
            from: tower[w].level,
            distance: sup_distance(&levels[w].ids, &levels[w + 1].ids),
            measured_defect: differing as f64 / n as f64,
            structural_bound: near as f64 / n as f64,
        });
    }
    let mut tail = 0.0;
    for (k, l) in levels.iter_mut().enumerate().rev() {
        if let Some(s) = steps.get(k) {
            tail += s.structural_bound;
        }
        l.certified_tail = tail;
    }
    Ok(TowerReport { levels, steps })
}

/// Number of vertices within distance `r` of `sources`.
fn near_set(g: &SimpleGraph, sources: &[usize], r: usize) -> usize {
    let mut dist = vec![usize::MAX; g.vertex_count()];
    let mut queue = VecDeque::new();
    for &s in sources {
        dist[s] = 0;
        queue.push_back(s);
    }
    while let Some(v) = queue.pop_front() {
        if dist[v] == r {
            continue;
        }
        for &w in g.neighbors(v) {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    dist.iter().filter(|&&d| d != usize::MAX).count()
}
