use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite argument: {0}")]
    NonFinite(f64),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("message {m} outside 1..={max}")]
    MessageOutOfRange { m: u64, max: u64 },
    #[error("closed-form oracle limited to t <= {max}, got t = {t}")]
    OracleRange { t: usize, max: usize },
    #[error("backward power cannot cover noise amplitude: requires P_Q > σ̄_S (P_Q = {p_q}, σ̄_S = {sigma_s_bar})")]
    BackwardPower { p_q: f64, sigma_s_bar: f64 },
}
