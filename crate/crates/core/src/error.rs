use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("network schema violation: {0}")]
    Schema(String),
    #[error("edge endpoint references unknown node {0:?}")]
    DanglingEndpoint(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("consecutive path nodes at position {0} are not adjacent")]
    NonAdjacentPair(usize),
    #[error("item is not on the train's path")]
    NotOnPath,
    #[error("invalid system state: {0}")]
    InvalidState(String),
    #[error("timetable reference addresses a stage outside the horizon")]
    UnknownStage,
    #[error("solution variables do not match the problem: {0}")]
    VariableMismatch(String),
    #[error("shifting would make a pending departure negative")]
    NegativeTime,
    #[error("forced assignment is infeasible on its own")]
    ForcedInfeasible,
    #[error("too many binary variables for exhaustive enumeration ({0})")]
    TooLarge(usize),
    #[error("partial assignment already implies infeasibility")]
    InfeasiblePartial,
    #[error("boundary configuration is not a safe state: {0}")]
    UnsafeBoundary(String),
    #[error("target horizons are not componentwise successors of the source horizons")]
    NonMonotoneHorizons,
    #[error("previous terminal node is not on the current path of train {0:?}")]
    PathMismatch(String),
    #[error("no safe horizon admits a feasible schedule: state is deadlocked")]
    Deadlocked,
    #[error("previous solution cannot be re-indexed into the new problem: {0}")]
    IndexingMismatch(String),
    #[error("could not generate a valid instance after {0} attempts")]
    Unsatisfiable(usize),
    #[error("train {0:?} never touches the requested corridor")]
    ProjectionMismatch(String),
}
