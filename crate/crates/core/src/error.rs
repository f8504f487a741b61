use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    Parameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// The coordinator cycle cannot guarantee a positive idle dwell.
    #[error(
        "dwell-time constraint violated: t_step = {t_step} must exceed 1.5 * t_adj_max = {bound} (margin {margin:.9})"
    )]
    DwellTime {
        t_step: f64,
        bound: f64,
        margin: f64,
    },

    #[error("scenario generation failed: {0}")]
    Scenario(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("malformed record at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
