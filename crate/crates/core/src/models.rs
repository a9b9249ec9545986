//! Disorder models: finite-valued random site potentials, bond percolation and
//! site percolation on boxes of `ℤᵈ`.
//!
//! Configurations are vectors of symbols over a carrier (the sites or the
//! edges of a region, both in lattice order). For a site potential, symbol
//! `m` stands for `values[m]`; for percolation, symbol 0 is the open state
//! (probability `p`) and symbol 1 the closed one.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{self, LatticeError, Region, RegionGraph, SimpleGraph};
use crate::linalg::{self, LinalgError, SymMatrix};
use crate::stepfn::{self, MASS_TOL};

/// Default cap on the number of enumerated configurations.
pub const MAX_CONFIGS: usize = 1 << 16;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("site potential needs at least one value")]
    NoValues,
    #[error("{values} values but {probabilities} probabilities")]
    LengthMismatch { values: usize, probabilities: usize },
    #[error("probability {0} is not in (0, 1]")]
    BadProbability(f64),
    #[error("probabilities sum to {0}, expected 1")]
    ProbabilitySum(f64),
    #[error("potential value {0} is not finite")]
    NonFinite(f64),
    #[error("potential value {0} is listed twice")]
    DuplicateValue(f64),
    #[error("percolation parameter {0} is not in (0, 1)")]
    BadParameter(f64),
    #[error("{count} configurations exceed the cap of {cap}; use Monte Carlo sampling instead")]
    TooManyConfigs { count: String, cap: usize },
    #[error("configuration does not fit the model: {0}")]
    CarrierMismatch(String),
    #[error("positivity shift only applies to site potentials")]
    NotSitePotential,
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DisorderModel {
    SitePotential {
        values: Vec<f64>,
        probabilities: Vec<f64>,
    },
    BondPercolation {
        p: f64,
    },
    SitePercolation {
        p: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Carrier {
    Sites,
    Edges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfigValues {
    Potential(Vec<f64>),
    Bits(Vec<u8>),
}

impl ConfigValues {
    pub fn len(&self) -> usize {
        match self {
            ConfigValues::Potential(v) => v.len(),
            ConfigValues::Bits(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub region: Region,
    pub carrier: Carrier,
    pub values: ConfigValues,
}

impl DisorderModel {
    pub fn site_potential(values: Vec<f64>, probabilities: Vec<f64>) -> Result<Self, ModelError> {
        let m = DisorderModel::SitePotential {
            values,
            probabilities,
        };
        m.validate()?;
        Ok(m)
    }

    /// Site potential with equal probabilities on each value.
    pub fn uniform_site_potential(values: Vec<f64>) -> Result<Self, ModelError> {
        let k = values.len().max(1);
        Self::site_potential(values, vec![1.0 / k as f64; k])
    }

    pub fn bond_percolation(p: f64) -> Result<Self, ModelError> {
        let m = DisorderModel::BondPercolation { p };
        m.validate()?;
        Ok(m)
    }

    pub fn site_percolation(p: f64) -> Result<Self, ModelError> {
        let m = DisorderModel::SitePercolation { p };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            DisorderModel::SitePotential {
                values,
                probabilities,
            } => {
                if values.is_empty() {
                    return Err(ModelError::NoValues);
                }
                if values.len() != probabilities.len() {
                    return Err(ModelError::LengthMismatch {
                        values: values.len(),
                        probabilities: probabilities.len(),
                    });
                }
                for (a, &v) in values.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(ModelError::NonFinite(v));
                    }
                    if values[..a].contains(&v) {
                        return Err(ModelError::DuplicateValue(v));
                    }
                }
                for &p in probabilities {
                    if !(p > 0.0 && p <= 1.0) {
                        return Err(ModelError::BadProbability(p));
                    }
                }
                let sum = stepfn::neumaier_sum(probabilities.iter().copied());
                if (sum - 1.0).abs() > MASS_TOL {
                    return Err(ModelError::ProbabilitySum(sum));
                }
                Ok(())
            }
            DisorderModel::BondPercolation { p } | DisorderModel::SitePercolation { p } => {
                if *p > 0.0 && *p < 1.0 {
                    Ok(())
                } else {
                    Err(ModelError::BadParameter(*p))
                }
            }
        }
    }

    pub fn carrier(&self) -> Carrier {
        match self {
            DisorderModel::BondPercolation { .. } => Carrier::Edges,
            _ => Carrier::Sites,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            DisorderModel::SitePotential { .. } => "site-potential",
            DisorderModel::BondPercolation { .. } => "bond-percolation",
            DisorderModel::SitePercolation { .. } => "site-percolation",
        }
    }

    /// Per-element symbol probabilities.
    pub fn symbol_probabilities(&self) -> Vec<f64> {
        match self {
            DisorderModel::SitePotential { probabilities, .. } => probabilities.clone(),
            DisorderModel::BondPercolation { p } | DisorderModel::SitePercolation { p } => {
                vec![*p, 1.0 - *p]
            }
        }
    }

    pub fn alphabet_size(&self) -> usize {
        match self {
            DisorderModel::SitePotential { values, .. } => values.len(),
            _ => 2,
        }
    }

    /// Whether every truncated operator is positive semidefinite. Site
    /// potentials qualify when every value is at least 1, since then each
    /// diagonal entry `deg·c` dominates the off-diagonal row sum `deg`.
    pub fn is_positive(&self) -> bool {
        match self {
            DisorderModel::SitePotential { values, .. } => values.iter().all(|&c| c >= 1.0),
            _ => true,
        }
    }

    fn values_of(&self, symbols: &[u8]) -> ConfigValues {
        match self {
            DisorderModel::SitePotential { values, .. } => {
                ConfigValues::Potential(symbols.iter().map(|&s| values[s as usize]).collect())
            }
            _ => ConfigValues::Bits(symbols.to_vec()),
        }
    }

    fn symbols_of(&self, values: &ConfigValues) -> Result<Vec<u8>, ModelError> {
        match (self, values) {
            (DisorderModel::SitePotential { values: j, .. }, ConfigValues::Potential(v)) => v
                .iter()
                .map(|x| {
                    j.iter()
                        .position(|c| c == x)
                        .map(|s| s as u8)
                        .ok_or_else(|| ModelError::CarrierMismatch(format!("value {x} not in J")))
                })
                .collect(),
            (DisorderModel::SitePotential { .. }, ConfigValues::Bits(_)) => Err(
                ModelError::CarrierMismatch("site potential needs real values".into()),
            ),
            (_, ConfigValues::Bits(b)) => {
                if let Some(&x) = b.iter().find(|&&x| x > 1) {
                    return Err(ModelError::CarrierMismatch(format!("bit value {x}")));
                }
                Ok(b.clone())
            }
            (_, ConfigValues::Potential(_)) => Err(ModelError::CarrierMismatch(
                "percolation needs bit values".into(),
            )),
        }
    }
}

/// Mixed-radix indexing of all configurations over a carrier, with the first
/// carrier element most significant.
#[derive(Debug, Clone)]
pub(crate) struct ConfigSpace {
    radix: usize,
    len: usize,
    count: usize,
    probs: Vec<f64>,
}

impl ConfigSpace {
    pub(crate) fn new(model: &DisorderModel, carrier_len: usize, cap: usize) -> Result<Self, ModelError> {
        let radix = model.alphabet_size();
        let count = u32::try_from(carrier_len)
            .ok()
            .and_then(|l| radix.checked_pow(l))
            .filter(|&c| c <= cap)
            .ok_or_else(|| ModelError::TooManyConfigs {
                count: format!("{radix}^{carrier_len}"),
                cap,
            })?;
        Ok(Self {
            radix,
            len: carrier_len,
            count,
            probs: model.symbol_probabilities(),
        })
    }

    pub(crate) fn count(&self) -> usize {
        self.count
    }

    pub(crate) fn symbols(&self, mut index: usize) -> Vec<u8> {
        let mut out = vec![0u8; self.len];
        for slot in out.iter_mut().rev() {
            *slot = (index % self.radix) as u8;
            index /= self.radix;
        }
        out
    }

    pub(crate) fn index(&self, symbols: impl IntoIterator<Item = u8>) -> usize {
        symbols
            .into_iter()
            .fold(0, |acc, s| acc * self.radix + s as usize)
    }

    pub(crate) fn probability(&self, symbols: &[u8]) -> f64 {
        symbols.iter().map(|&s| self.probs[s as usize]).product()
    }
}

pub(crate) fn carrier_len(model: &DisorderModel, graph: &RegionGraph) -> usize {
    match model.carrier() {
        Carrier::Sites => graph.vertex_count(),
        Carrier::Edges => graph.edges().len(),
    }
}

/// All configurations on `region` in lexicographic order, with their
/// product-measure probabilities.
pub fn enumerate_configs(
    model: &DisorderModel,
    region: &Region,
) -> Result<Vec<(Configuration, f64)>, ModelError> {
    enumerate_configs_capped(model, region, MAX_CONFIGS)
}

pub fn enumerate_configs_capped(
    model: &DisorderModel,
    region: &Region,
    cap: usize,
) -> Result<Vec<(Configuration, f64)>, ModelError> {
    model.validate()?;
    let graph = lattice::region_graph(region)?;
    let space = ConfigSpace::new(model, carrier_len(model, &graph), cap)?;
    Ok((0..space.count())
        .map(|idx| {
            let symbols = space.symbols(idx);
            let prob = space.probability(&symbols);
            (
                Configuration {
                    region: region.clone(),
                    carrier: model.carrier(),
                    values: model.values_of(&symbols),
                },
                prob,
            )
        })
        .collect())
}

/// Draws one symbol per carrier element. Element `m` consumes the `m`-th
/// 64-bit word of the ChaCha8 stream `(seed, stream)`, so the result depends
/// only on those keys and the element index.
pub(crate) fn sample_symbols(model: &DisorderModel, len: usize, seed: u64, stream: u64) -> Vec<u8> {
    let probs = model.symbol_probabilities();
    let mut cum = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cum.push(acc);
    }
    let last = probs.len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..len)
        .map(|_| {
            let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            cum.iter().position(|&c| u < c).unwrap_or(last) as u8
        })
        .collect()
}

pub fn sample_config(
    model: &DisorderModel,
    region: &Region,
    seed: u64,
) -> Result<Configuration, ModelError> {
    sample_config_stream(model, region, seed, 0)
}

/// As [`sample_config`], drawing from the independent stream `stream`.
pub fn sample_config_stream(
    model: &DisorderModel,
    region: &Region,
    seed: u64,
    stream: u64,
) -> Result<Configuration, ModelError> {
    model.validate()?;
    let graph = lattice::region_graph(region)?;
    let symbols = sample_symbols(model, carrier_len(model, &graph), seed, stream);
    Ok(Configuration {
        region: region.clone(),
        carrier: model.carrier(),
        values: model.values_of(&symbols),
    })
}

/// The truncated operator of the model for one configuration on its region.
pub fn model_operator(model: &DisorderModel, config: &Configuration) -> Result<SymMatrix, ModelError> {
    if config.carrier != model.carrier() {
        return Err(ModelError::CarrierMismatch(format!(
            "{} model on a {:?} configuration",
            model.kind_name(),
            config.carrier
        )));
    }
    let graph = lattice::region_graph(&config.region)?;
    let expected = carrier_len(model, &graph);
    if config.values.len() != expected {
        return Err(ModelError::CarrierMismatch(format!(
            "{} values for a carrier of size {expected}",
            config.values.len()
        )));
    }
    let symbols = model.symbols_of(&config.values)?;
    operator_from_symbols(model, &graph.graph, &symbols)
}

/// A truncated model operator kept as its diagonal plus the edges carrying
/// the off-diagonal `−1` entries.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SparseOperator {
    pub(crate) diag: Vec<f64>,
    pub(crate) graph: SimpleGraph,
}

impl SparseOperator {
    pub(crate) fn dim(&self) -> usize {
        self.diag.len()
    }

    pub(crate) fn to_dense(&self) -> SymMatrix {
        let n = self.dim();
        let mut m = SymMatrix::zeros(n.max(1));
        for (v, &x) in self.diag.iter().enumerate() {
            m.set(v, v, x);
        }
        for &(u, v) in self.graph.edges() {
            m.set(u, v, -1.0);
        }
        m
    }

    fn is_tridiagonal(&self) -> bool {
        self.graph.edges().iter().all(|&(u, v)| v == u + 1)
    }

    /// Eigenvalues ascending; path-shaped operators skip dense storage.
    pub(crate) fn spectrum(&self) -> Result<Vec<f64>, LinalgError> {
        if self.is_tridiagonal() && self.dim() > 0 {
            let mut off = vec![0.0; self.dim() - 1];
            for &(u, _) in self.graph.edges() {
                off[u] = -1.0;
            }
            linalg::tridiagonal_spectrum(&self.diag, &off)
        } else {
            linalg::sym_spectrum(&self.to_dense())
        }
    }

    /// Whether row `v` of the two operators differs.
    pub(crate) fn row_differs(&self, other: &Self, v: usize) -> bool {
        self.diag[v] != other.diag[v] || self.graph.neighbors(v) != other.graph.neighbors(v)
    }
}

pub(crate) fn sparse_operator(model: &DisorderModel, graph: &SimpleGraph, symbols: &[u8]) -> SparseOperator {
    let open = match model {
        DisorderModel::SitePotential { .. } => graph.clone(),
        DisorderModel::BondPercolation { .. } => graph.subgraph_keeping(|k, _| symbols[k] == 0),
        DisorderModel::SitePercolation { .. } => {
            graph.subgraph_keeping(|_, (u, v)| symbols[u] == 0 && symbols[v] == 0)
        }
    };
    let diag = match model {
        DisorderModel::SitePotential { values, .. } => (0..open.vertex_count())
            .map(|v| open.degree(v) as f64 * values[symbols[v] as usize])
            .collect(),
        _ => open.degrees().into_iter().map(|g| g as f64).collect(),
    };
    SparseOperator { diag, graph: open }
}

/// Operator for a symbol vector on an already assembled graph.
pub(crate) fn operator_from_symbols(
    model: &DisorderModel,
    graph: &SimpleGraph,
    symbols: &[u8],
) -> Result<SymMatrix, ModelError> {
    let m = match model {
        DisorderModel::SitePotential { values, .. } => {
            let omega: Vec<f64> = symbols.iter().map(|&s| values[s as usize]).collect();
            lattice::laplacian(graph, Some(&omega))?
        }
        _ => lattice::laplacian(&sparse_operator(model, graph, symbols).graph, None)?,
    };
    Ok(m)
}

/// Shifts every potential value by `s = max(0, −min c) + 2d`.
pub fn shift_to_positive(model: &DisorderModel, d: usize) -> Result<(DisorderModel, f64), ModelError> {
    match model {
        DisorderModel::SitePotential {
            values,
            probabilities,
        } => {
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let shift = (-min).max(0.0) + 2.0 * d as f64;
            let shifted = DisorderModel::site_potential(
                values.iter().map(|c| c + shift).collect(),
                probabilities.clone(),
            )?;
            Ok((shifted, shift))
        }
        _ => Err(ModelError::NotSitePotential),
    }
}
