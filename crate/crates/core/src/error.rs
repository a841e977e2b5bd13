use thiserror::Error;

/// Budget levels reported when no signaling equilibrium is guaranteed.
#[derive(Debug, Clone, PartialEq)]
pub struct NonexistenceError {
    pub budget: f64,
    pub threshold_general: f64,
    pub threshold_two_type: Option<f64>,
    pub threshold_coalition: f64,
    pub num_users: usize,
}

impl std::fmt::Display for NonexistenceError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "no signaling equilibrium is guaranteed with {} users at budget {}: ",
            self.num_users, self.budget
        )?;
        match self.threshold_two_type {
            Some(t) => write!(
                f,
                "the two-type budget threshold is {t} and the coalition threshold is {}",
                self.threshold_coalition
            ),
            None => write!(
                f,
                "the sufficient budget threshold is {} (coalition threshold {})",
                self.threshold_general, self.threshold_coalition
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum GameError {
    /// Malformed or inconsistent input.
    #[error("invalid input: {0}")]
    Input(String),
    #[error("unknown type label `{0}`")]
    UnknownType(String),
    /// The requested construction does not apply in this budget regime.
    #[error("regime error: {0}")]
    Regime(String),
    #[error("{0}")]
    Nonexistence(NonexistenceError),
    /// Internal invariant violated; always a bug.
    #[error("internal error: {0}")]
    Internal(String),
}

impl GameError {
    /// True for errors that stem from the budget regime rather than bad input.
    pub fn is_regime(&self) -> bool {
        matches!(self, GameError::Regime(_) | GameError::Nonexistence(_))
    }
}

pub type Result<T, E = GameError> = std::result::Result<T, E>;
