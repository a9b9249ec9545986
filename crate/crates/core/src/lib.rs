//! Integrated density of states for random lattice operators, percolation
//! Hamiltonians and pattern-invariant operators on self-similar graphs,
//! computed through finite block-diagonal approximants under the normalized
//! rank metric.

pub mod bratteli;
pub mod checks;
pub mod cli;
pub mod lattice;
pub mod linalg;
pub mod models;
pub mod rankring;
pub mod selfsimilar;
pub mod stepfn;

/// Any error raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Step(#[from] stepfn::StepError),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
    #[error(transparent)]
    Rank(#[from] rankring::RankError),
    #[error(transparent)]
    Lattice(#[from] lattice::LatticeError),
    #[error(transparent)]
    Model(#[from] models::ModelError),
    #[error(transparent)]
    Bratteli(#[from] bratteli::BratteliError),
    #[error(transparent)]
    SelfSimilar(#[from] selfsimilar::SelfSimilarError),
}

impl Error {
    /// True when the failure is a size cap rather than bad input.
    pub fn is_cap(&self) -> bool {
        use bratteli::BratteliError as B;
        use models::ModelError as M;
        matches!(
            self,
            Error::Model(M::TooManyConfigs { .. })
                | Error::Bratteli(B::Model(M::TooManyConfigs { .. }) | B::TooLarge { .. } | B::TileTooLarge { .. })
                | Error::Lattice(lattice::LatticeError::TooLarge { .. })
                | Error::SelfSimilar(selfsimilar::SelfSimilarError::TooLarge { .. })
        )
    }
}
