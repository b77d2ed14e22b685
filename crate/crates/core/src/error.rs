use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("D must be squarefree (got {0})")]
    NotSquarefree(u64),
    #[error("D must be at least 2 (got {0})")]
    InvalidDiscriminant(u64),
    #[error("zero element has no logarithmic embedding")]
    ZeroElement,
    #[error("zero denominator")]
    ZeroDenominator,
    #[error("ideal ({p}, {q}) is not reduced")]
    NotReduced { p: i64, q: i64 },
    #[error("accumulated distance error {0:e} exceeds precision budget")]
    PrecisionExhausted(f64),
    #[error("lattice is singular")]
    Singular,
    #[error("samples span fewer than {0} dimensions")]
    RankDeficient(usize),
    #[error("periodicity test failed; restart required")]
    RestartRequired,
    #[error("domain of size 2^{0} exceeds the exhaustive limit")]
    DomainTooLarge(u32),
    #[error("lattice is ill-conditioned: {0}")]
    IllConditioned(String),
    #[error("empty point set")]
    EmptySet,
    #[error("first coordinates {0} and {1} are not coprime")]
    NotCoprime(i64, i64),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}

pub type Result<T> = std::result::Result<T, Error>;
