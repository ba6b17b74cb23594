use thiserror::Error;

/// Errors surfaced by the library.
///
/// Variants are grouped by layer: curve/reduction problems, invariant domain
/// violations, data I/O, and the opt-in network client.
#[derive(Debug, Error)]
pub enum Error {
    #[error("singular curve: discriminant is zero")]
    SingularCurve,

    #[error("bad reduction at p = {0}: operation requires good reduction")]
    BadReduction(u64),

    #[error("Hasse bound violated: a = {a} with q = {q} (a^2 > 4q)")]
    HasseViolation { a: i64, q: u64 },

    #[error("invalid field size q = {0}: expected a prime power >= 2")]
    InvalidQ(u64),

    #[error("{0} is not prime")]
    NotPrime(u64),

    #[error("rank n = {n} out of domain for {what}")]
    RankDomain { n: u32, what: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("internal invariant violated: {0}")]
    InternalInvariant(String),

    #[error("{path}:{line}: {msg}")]
    Csv {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("cache conflict for ({label}, {q}): stored {stored}, attempted {attempted}")]
    CacheConflict {
        label: String,
        q: u64,
        stored: i64,
        attempted: i64,
    },

    #[error("offline mode: pass --online to query the curve database, or supply a curve CSV")]
    Offline,

    #[error("database query failed: {0}")]
    Fetch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
