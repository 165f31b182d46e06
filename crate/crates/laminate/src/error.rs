//! Crate-wide error type. Solver and simulator failures carry enough context
//! to be rendered as machine-readable reports by a front end.

/// Everything that can go wrong across market evaluation, model assembly,
/// root-finding, and simulation.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// A depth left the open domain of the price density.
    #[error("depth {depth} outside market domain ({lo}, {hi})")]
    Domain { depth: f64, lo: f64, hi: f64 },

    /// Numerical integration could not reach the requested tolerance.
    #[error("quadrature stalled at error {achieved:e} (requested {requested:e})")]
    Quadrature { requested: f64, achieved: f64 },

    /// An iterative routine converged geometrically but missed its target
    /// tolerance.
    #[error("tolerance not met: achieved {achieved:e}, requested {requested:e}")]
    Tolerance { requested: f64, achieved: f64 },

    /// Conditional slot coupling b_{i,k} is 0/0: the player never holds slot k.
    #[error("secondary weight undefined: player {player} has zero probability of slot {slot}")]
    UndefinedCoupling { player: usize, slot: usize },

    /// The utility derivative has no sign change inside the action space.
    #[error("no sign change of the utility derivative inside [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    /// The geometric-series closed form has no finite value.
    #[error("pole: effective weight times impact = {product} >= 1")]
    Pole { product: f64 },

    /// The player is never allocated a slot, so no first-order condition exists.
    #[error("player {player} is never allocated a slot")]
    NoParticipation { player: usize },

    /// A model constructor rejected its inputs.
    #[error("invalid model: {0}")]
    Invalid(String),

    /// A Monte Carlo replica aborted; the index identifies the failing stream.
    #[error("replica {replica} failed: {source}")]
    Replica {
        replica: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Shorthand for [`Error::Invalid`] from any string-ish message.
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
