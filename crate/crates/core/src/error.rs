use thiserror::Error;

/// Errors produced while building scenarios, allocating resources, or
/// reading and writing experiment files.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The airtimes of all classes do not fit in the shortest packet
    /// duration, so a slot cannot host one transmission of every class.
    #[error("airtime budget exceeded: sum of airtimes {airtime_sum:.6} s >= shortest packet duration {packet_duration:.6} s")]
    AirtimeBudget {
        airtime_sum: f64,
        packet_duration: f64,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// The causality ledger went negative. Only reachable when a caller
    /// spends more than the available power.
    #[error("node {node} slot {slot}: available power {value:e} W is negative")]
    NegativeBudget { node: usize, slot: usize, value: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
