//! Levelwise configuration algebras on dyadic cubes and the approximants of
//! the integrated density of states built from them.
//!
//! Level `i` lives on the cube `C_i = {0, …, 2^i − 1}^d`. Its algebra has one
//! block per configuration `α` on `C_i`, weighted by the configuration's
//! probability and holding the model operator with in-cube degrees. Level
//! `i` embeds into level `j ≥ i` by cutting each level-`j` configuration into
//! its `2^{d(j−i)}` dyadic subcubes.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::lattice::{self, DyadicPartition, LatticeError, Region, RegionGraph};
use crate::linalg::{self, LinalgError, Matrix};
use crate::models::{
    self, carrier_len, sparse_operator, Carrier, ConfigSpace, Configuration, DisorderModel,
    ModelError, SparseOperator, MAX_CONFIGS,
};
use crate::rankring::{weighted_counting, Block, BlockOperator, RankError};
use crate::stepfn::{sup_distance, Neumaier, StepFunction};

/// Largest region handed to the dense eigensolver.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum BratteliError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("levels must satisfy i <= j (got i = {i}, j = {j})")]
    LevelOrder { i: usize, j: usize },
    #[error("at least one sample is required")]
    NoSamples,
    #[error("region has {vertices} vertices, above the dense eigensolver limit of {limit}")]
    TooLarge { vertices: usize, limit: usize },
    #[error("box side {side} is smaller than the tile side {tile}")]
    TileTooLarge { side: usize, tile: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Configuration space of one level together with its cube graph.
struct Level {
    model: DisorderModel,
    graph: RegionGraph,
    space: ConfigSpace,
}

impl Level {
    fn new(model: &DisorderModel, i: usize, d: usize) -> Result<Self, BratteliError> {
        let graph = cube_graph(i, d)?;
        let space = ConfigSpace::new(model, carrier_len(model, &graph), MAX_CONFIGS)?;
        Ok(Self {
            model: model.clone(),
            graph,
            space,
        })
    }

    fn count(&self) -> usize {
        self.space.count()
    }

    fn dim(&self) -> usize {
        self.graph.vertex_count()
    }

    fn probability(&self, index: usize) -> f64 {
        self.space.probability(&self.space.symbols(index))
    }

    fn operator(&self, index: usize) -> SparseOperator {
        sparse_operator(&self.model, &self.graph.graph, &self.space.symbols(index))
    }
}

fn cube_graph(i: usize, d: usize) -> Result<RegionGraph, BratteliError> {
    if d == 0 {
        return Err(BratteliError::ZeroDimension);
    }
    let exp = i.saturating_mul(d);
    let vertices = if exp < usize::BITS as usize { 1usize << exp } else { usize::MAX };
    if vertices > DENSE_LIMIT {
        return Err(BratteliError::TooLarge {
            vertices,
            limit: DENSE_LIMIT,
        });
    }
    Ok(lattice::region_graph(&Region::cube(i, d))?)
}

/// For each dyadic subcube of `C_j`, the carrier index in `C_j` of every
/// carrier element of `C_i`, in `C_i` order.
fn carrier_maps(
    model: &DisorderModel,
    part: &DyadicPartition,
    coarse: &RegionGraph,
    fine: &RegionGraph,
) -> Vec<Vec<usize>> {
    match model.carrier() {
        Carrier::Sites => part.cells.clone(),
        Carrier::Edges => part
            .cells
            .iter()
            .map(|cell| {
                coarse
                    .edges()
                    .iter()
                    .map(|&(u, v)| {
                        fine.graph
                            .edge_index(cell[u], cell[v])
                            .expect("subcube edges are lattice edges of C_j")
                    })
                    .collect()
            })
            .collect(),
    }
}

/// Level-`i` configuration indices of the dyadic restrictions of one
/// level-`j` configuration.
fn restrict(coarse: &ConfigSpace, maps: &[Vec<usize>], fine_symbols: &[u8]) -> Vec<usize> {
    maps.iter()
        .map(|map| coarse.index(map.iter().map(|&e| fine_symbols[e])))
        .collect()
}

/// The refinement of level `i` inside level `j`.
struct Refinement {
    coarse: Level,
    fine: Level,
    part: DyadicPartition,
    maps: Vec<Vec<usize>>,
}

impl Refinement {
    fn new(model: &DisorderModel, i: usize, j: usize, d: usize) -> Result<Self, BratteliError> {
        if i > j {
            return Err(BratteliError::LevelOrder { i, j });
        }
        let coarse = Level::new(model, i, d)?;
        let fine = Level::new(model, j, d)?;
        let part = lattice::dyadic_partition(j, i, d)?;
        let maps = carrier_maps(model, &part, &coarse.graph, &fine.graph);
        Ok(Self {
            coarse,
            fine,
            part,
            maps,
        })
    }

    fn restrictions(&self, beta: usize) -> Vec<usize> {
        restrict(&self.coarse.space, &self.maps, &self.fine.space.symbols(beta))
    }

    /// Block of `φ(Δ̃_i)` for configuration `beta`: the level-`i` blocks of
    /// the restrictions placed on the vertices of their subcubes.
    fn embedded_block(&self, blocks: &[Matrix], beta: usize) -> Matrix {
        let mut out = Matrix::zeros(self.fine.dim());
        for (cell, alpha) in self.part.cells.iter().zip(self.restrictions(beta)) {
            let a = &blocks[alpha];
            for (u, &x) in cell.iter().enumerate() {
                for (v, &y) in cell.iter().enumerate() {
                    out.set(x, y, a.get(u, v));
                }
            }
        }
        out
    }
}

/// `Δ̃_i` for a model on `C_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelAlgebra {
    pub model: DisorderModel,
    pub level: usize,
    pub d: usize,
    /// Probability of each configuration, in enumeration order.
    pub probabilities: Vec<f64>,
    pub delta: BlockOperator,
}

impl LevelAlgebra {
    /// The enumerated configurations with their probabilities.
    pub fn configs(&self) -> Result<Vec<(Configuration, f64)>, BratteliError> {
        Ok(models::enumerate_configs(&self.model, &Region::cube(self.level, self.d))?)
    }

    pub fn block_count(&self) -> usize {
        self.delta.len()
    }

    pub fn block_size(&self) -> usize {
        1 << (self.level * self.d)
    }
}

pub fn level_algebra(model: &DisorderModel, i: usize, d: usize) -> Result<LevelAlgebra, BratteliError> {
    model.validate()?;
    let level = Level::new(model, i, d)?;
    let blocks: Vec<Block> = (0..level.count())
        .into_par_iter()
        .map(|idx| Block {
            weight: level.probability(idx),
            matrix: level.operator(idx).to_dense().into_matrix(),
        })
        .collect();
    let probabilities = blocks.iter().map(|b| b.weight).collect();
    Ok(LevelAlgebra {
        model: model.clone(),
        level: i,
        d,
        probabilities,
        delta: BlockOperator::new(blocks)?.with_level(i),
    })
}

/// Occurrence counts `w_{α,β}` between levels `i` and `i + 1`, stored as the
/// list of restrictions of each level-`(i+1)` configuration `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionWeights {
    pub level: usize,
    pub d: usize,
    pub coarse_count: usize,
    pub fine_count: usize,
    restrictions: Vec<Vec<usize>>,
}

impl TransitionWeights {
    /// Level-`i` configurations of the `2^d` subcubes of `β`, in subcube order.
    pub fn restrictions(&self, beta: usize) -> &[usize] {
        &self.restrictions[beta]
    }

    pub fn w(&self, alpha: usize, beta: usize) -> usize {
        self.restrictions[beta].iter().filter(|&&a| a == alpha).count()
    }

    /// `M(β, α) = w_{α,β} n_{i,α} / n_{i+1,β}`.
    pub fn m(&self, beta: usize, alpha: usize) -> f64 {
        self.w(alpha, beta) as f64 / (1usize << self.d) as f64
    }

    /// Dense `w`, indexed `[α][β]`.
    pub fn w_matrix(&self) -> Vec<Vec<usize>> {
        let mut w = vec![vec![0; self.fine_count]; self.coarse_count];
        for (beta, r) in self.restrictions.iter().enumerate() {
            for &alpha in r {
                w[alpha][beta] += 1;
            }
        }
        w
    }

    /// Dense `M`, indexed `[β][α]`.
    pub fn m_matrix(&self) -> Vec<Vec<f64>> {
        let scale = 1.0 / (1usize << self.d) as f64;
        self.restrictions
            .iter()
            .map(|r| {
                let mut row = vec![0.0; self.coarse_count];
                for &alpha in r {
                    row[alpha] += scale;
                }
                row
            })
            .collect()
    }
}

pub fn transition_weights(model: &DisorderModel, i: usize, d: usize) -> Result<TransitionWeights, BratteliError> {
    model.validate()?;
    let refinement = Refinement::new(model, i, i + 1, d)?;
    let restrictions = (0..refinement.fine.count())
        .into_par_iter()
        .map(|beta| refinement.restrictions(beta))
        .collect();
    Ok(TransitionWeights {
        level: i,
        d,
        coarse_count: refinement.coarse.count(),
        fine_count: refinement.fine.count(),
        restrictions,
    })
}

/// `max_α |p_{i,α} − Σ_β M(β,α) p_{i+1,β}|`.
pub fn check_compatibility(model: &DisorderModel, i: usize, d: usize) -> Result<f64, BratteliError> {
    let weights = transition_weights(model, i, d)?;
    let coarse = Level::new(model, i, d)?;
    let fine = Level::new(model, i + 1, d)?;
    let share = 1.0 / (1usize << d) as f64;
    let mut acc = vec![Neumaier::default(); weights.coarse_count];
    for beta in 0..weights.fine_count {
        let p = fine.probability(beta);
        for &alpha in weights.restrictions(beta) {
            acc[alpha].add(share * p);
        }
    }
    Ok(acc
        .iter()
        .enumerate()
        .map(|(alpha, s)| (coarse.probability(alpha) - s.value()).abs())
        .fold(0.0, f64::max))
}

/// The image of `Δ̃_i` in the level-`j` algebra.
pub fn embed_level(source: &LevelAlgebra, j: usize) -> Result<BlockOperator, BratteliError> {
    if j == source.level {
        return Ok(source.delta.clone());
    }
    let refinement = Refinement::new(&source.model, source.level, j, source.d)?;
    let coarse: Vec<Matrix> = source.delta.blocks().iter().map(|b| b.matrix.clone()).collect();
    let blocks: Vec<Block> = (0..refinement.fine.count())
        .into_par_iter()
        .map(|beta| Block {
            weight: refinement.fine.probability(beta),
            matrix: refinement.embedded_block(&coarse, beta),
        })
        .collect();
    Ok(BlockOperator::new(blocks)?.with_level(j))
}

/// Probability-weighted mixture of the level-`i` configuration spectral
/// distributions, `Σ_α p_{i,α} N_{Δ_α}`.
///
/// This is `σ(Δ̃_i)` whenever the model is positive (percolation, or site
/// values all ≥ 1); for other site potentials it keeps the signed
/// eigenvalues, which `σ` would fold onto their absolute values.
pub fn ids_approx(model: &DisorderModel, i: usize, d: usize) -> Result<StepFunction, BratteliError> {
    model.validate()?;
    let level = Level::new(model, i, d)?;
    let parts: Vec<(f64, Vec<f64>)> = (0..level.count())
        .into_par_iter()
        .map(|idx| Ok((level.probability(idx), level.operator(idx).spectrum()?)))
        .collect::<Result<_, LinalgError>>()?;
    Ok(weighted_counting(parts.iter().map(|(w, s)| (*w, s.as_slice()))))
}

/// Average of the spectral distributions of `samples` independent
/// configurations on `C_i`. Sample `m` uses stream `m` of the seed.
pub fn ids_monte_carlo(
    model: &DisorderModel,
    i: usize,
    d: usize,
    samples: usize,
    seed: u64,
) -> Result<StepFunction, BratteliError> {
    model.validate()?;
    if samples == 0 {
        return Err(BratteliError::NoSamples);
    }
    let graph = cube_graph(i, d)?;
    let len = carrier_len(model, &graph);
    let spectra: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|m| {
            let symbols = models::sample_symbols(model, len, seed, m as u64);
            sparse_operator(model, &graph.graph, &symbols).spectrum()
        })
        .collect::<Result<_, LinalgError>>()?;
    let n = graph.vertex_count();
    Ok(StepFunction::from_counts(spectra.concat(), samples * n))
}

/// With probability at least `1 − α`, the sup distance between the average
/// of `samples` independent spectral distributions and their mean is below
/// this radius. The expectation of the sup is at most `√(π/2N)` (integrated
/// DKW tail, applied eigenvalue by eigenvalue), and the sup concentrates with
/// bounded differences `1/N`.
pub fn monte_carlo_radius(samples: usize, alpha: f64) -> f64 {
    let n = samples as f64;
    (std::f64::consts::PI / (2.0 * n)).sqrt() + ((1.0 / alpha).ln() / (2.0 * n)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CauchyReport {
    pub i: usize,
    pub j: usize,
    pub d: usize,
    /// `r(Δ̃_j − φ(Δ̃_i))`.
    pub rank_distance: f64,
    /// Boundary fraction of the level-`i` partition of `C_j`.
    pub bound: f64,
    /// `‖ids_approx(i) − ids_approx(j)‖_∞`.
    pub ids_distance: f64,
}

impl CauchyReport {
    pub fn holds(&self) -> bool {
        self.rank_distance <= self.bound + 1e-9 && self.ids_distance <= self.rank_distance + 1e-8
    }
}

pub fn cauchy_report(
    model: &DisorderModel,
    i: usize,
    j: usize,
    d: usize,
    tol: f64,
) -> Result<CauchyReport, BratteliError> {
    model.validate()?;
    let refinement = Refinement::new(model, i, j, d)?;
    let coarse: Vec<Matrix> = (0..refinement.coarse.count())
        .map(|alpha| refinement.coarse.operator(alpha).to_dense().into_matrix())
        .collect();
    let n = refinement.fine.dim() as f64;
    let terms: Vec<f64> = (0..refinement.fine.count())
        .into_par_iter()
        .map(|beta| {
            let fine = refinement.fine.operator(beta).to_dense().into_matrix();
            let diff = fine.sub(&refinement.embedded_block(&coarse, beta))?;
            let r = linalg::numerical_rank(&diff, tol)?;
            Ok(refinement.fine.probability(beta) * r as f64 / n)
        })
        .collect::<Result<_, LinalgError>>()?;
    let mut sum = Neumaier::default();
    terms.iter().for_each(|&t| sum.add(t));
    let ids_distance = if i == j {
        0.0
    } else {
        sup_distance(&ids_approx(model, i, d)?, &ids_approx(model, j, d)?)
    };
    Ok(CauchyReport {
        i,
        j,
        d,
        rank_distance: sum.value().clamp(0.0, 1.0),
        bound: lattice::boundary_fraction(j, i, d)?,
        ids_distance,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainLevel {
    pub level: usize,
    pub ids: StepFunction,
    /// Comparison with the next level, absent at the last level.
    pub step: Option<CauchyReport>,
    /// `Σ_{m ≥ level} bound(m, m+1)` over the computed levels.
    pub certified_tail: f64,
}

/// Levels `first..=last` with their successive Cauchy reports. The tails
/// are truncated at `last`, the deepest level computed.
#[derive(Debug, Clone, PartialEq)]
pub struct CertifiedChain {
    pub levels: Vec<ChainLevel>,
    pub truncated_at: usize,
}

pub fn certified_chain(
    model: &DisorderModel,
    d: usize,
    first: usize,
    last: usize,
    tol: f64,
) -> Result<CertifiedChain, BratteliError> {
    if first > last {
        return Err(BratteliError::LevelOrder { i: first, j: last });
    }
    let mut levels = Vec::new();
    for level in first..=last {
        let step = if level < last {
            Some(cauchy_report(model, level, level + 1, d, tol)?)
        } else {
            None
        };
        levels.push(ChainLevel {
            level,
            ids: ids_approx(model, level, d)?,
            step,
            certified_tail: 0.0,
        });
    }
    let mut tail = 0.0;
    for l in levels.iter_mut().rev() {
        if let Some(s) = &l.step {
            tail += s.bound;
        }
        l.certified_tail = tail;
    }
    Ok(CertifiedChain {
        levels,
        truncated_at: last,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalReport {
    pub d: usize,
    pub side: usize,
    pub tile_level: usize,
    pub seed: u64,
    pub configuration: Configuration,
    /// Spectral distribution of the truncated operator on the box.
    pub n_box: StepFunction,
    /// Spectral distribution of the direct sum of the tile operators, with
    /// zero rows on vertices outside every full tile.
    pub n_tiles: StepFunction,
    pub ids_approx: StepFunction,
    pub tile_count: usize,
    /// Tile-configuration frequencies `R_{j,α}`, in enumeration order.
    pub frequencies: Vec<f64>,
    /// Level-`j` configuration probabilities `p_{j,α}`.
    pub probabilities: Vec<f64>,
    pub dist_box_tiles: f64,
    pub dist_box_ids: f64,
    /// Fraction of rows where the box and tile operators differ; bounds
    /// `Rank(Δ_Q − Δ_Q^j)/|Q|`.
    pub rank_defect: f64,
    /// Fraction of box vertices adjacent to another tile or outside every
    /// full tile.
    pub tile_boundary_fraction: f64,
}

pub fn empirical_run(
    model: &DisorderModel,
    d: usize,
    side: usize,
    j: usize,
    seed: u64,
) -> Result<EmpiricalReport, BratteliError> {
    model.validate()?;
    if d == 0 {
        return Err(BratteliError::ZeroDimension);
    }
    let tile = 1usize << j;
    if side < tile {
        return Err(BratteliError::TileTooLarge { side, tile });
    }
    let vertices = side.checked_pow(d as u32).unwrap_or(usize::MAX);
    if vertices > DENSE_LIMIT {
        return Err(BratteliError::TooLarge {
            vertices,
            limit: DENSE_LIMIT,
        });
    }
    let level = Level::new(model, j, d)?;
    let region = Region::new(vec![0; d], vec![side; d])?;
    let boxg = lattice::region_graph(&region)?;
    let configuration = models::sample_config(model, &region, seed)?;
    let symbols = models::sample_symbols(model, carrier_len(model, &boxg), seed, 0);

    // Tiles: full translates of C_j at multiples of 2^j.
    let per_axis = side / tile;
    let tiles = Region::new(vec![0; d], vec![per_axis; d])?;
    let local = Region::cube(j, d);
    let tile_cells: Vec<Vec<usize>> = (0..tiles.volume())
        .map(|t| {
            let offset = tiles.coords(t);
            (0..local.volume())
                .map(|m| {
                    let p: Vec<i64> = local
                        .coords(m)
                        .iter()
                        .zip(&offset)
                        .map(|(&x, &o)| x + o * tile as i64)
                        .collect();
                    region.index_of(&p).expect("tile inside box")
                })
                .collect()
        })
        .collect();
    let mut tile_of = vec![usize::MAX; vertices];
    for (t, cell) in tile_cells.iter().enumerate() {
        for &v in cell {
            tile_of[v] = t;
        }
    }
    let part = DyadicPartition {
        cell_of: tile_of.clone(),
        cells: tile_cells,
        boundary: vec![],
    };
    let maps = carrier_maps(model, &part, &level.graph, &boxg);
    let alphas = restrict(&level.space, &maps, &symbols);

    let mut counts = vec![0usize; level.count()];
    for &a in &alphas {
        counts[a] += 1;
    }
    let tile_count = alphas.len();
    let frequencies = counts.iter().map(|&c| c as f64 / tile_count as f64).collect();
    let probabilities = (0..level.count()).map(|a| level.probability(a)).collect();

    let full = sparse_operator(model, &boxg.graph, &symbols);
    let tile_graph = boxg
        .graph
        .subgraph_keeping(|_, (u, v)| tile_of[u] != usize::MAX && tile_of[u] == tile_of[v]);
    let tile_symbols: Vec<u8> = match model.carrier() {
        Carrier::Sites => symbols.clone(),
        Carrier::Edges => boxg
            .edges()
            .iter()
            .zip(&symbols)
            .filter(|&(&(u, v), _)| tile_of[u] != usize::MAX && tile_of[u] == tile_of[v])
            .map(|(_, &s)| s)
            .collect(),
    };
    let blocks = sparse_operator(model, &tile_graph, &tile_symbols);

    let differing = (0..vertices).filter(|&v| full.row_differs(&blocks, v)).count();
    let boundary = (0..vertices)
        .filter(|&v| {
            tile_of[v] == usize::MAX || boxg.graph.neighbors(v).iter().any(|&w| tile_of[w] != tile_of[v])
        })
        .count();

    let n_box = StepFunction::from_counts(full.spectrum()?, vertices);
    let mut tile_eigs: Vec<Vec<f64>> = alphas
        .par_iter()
        .map(|&a| level.operator(a).spectrum())
        .collect::<Result<_, LinalgError>>()?;
    tile_eigs.push(vec![0.0; vertices - tile_count * local.volume()]);
    let n_tiles = StepFunction::from_counts(tile_eigs.concat(), vertices);
    let approx = ids_approx(model, j, d)?;

    Ok(EmpiricalReport {
        d,
        side,
        tile_level: j,
        seed,
        configuration,
        dist_box_tiles: sup_distance(&n_box, &n_tiles),
        dist_box_ids: sup_distance(&n_box, &approx),
        n_box,
        n_tiles,
        ids_approx: approx,
        tile_count,
        frequencies,
        probabilities,
        rank_defect: differing as f64 / vertices as f64,
        tile_boundary_fraction: boundary as f64 / vertices as f64,
    })
}
