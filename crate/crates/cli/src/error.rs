use std::fmt;

/// A failed command and the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub const USAGE: i32 = 1;
    pub const DATA: i32 = 2;
    pub const NUMERIC: i32 = 3;

    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: Self::USAGE, message: message.into() }
    }

    pub fn data(message: impl fmt::Display) -> Self {
        Self { code: Self::DATA, message: message.to_string() }
    }

    pub fn numeric(message: impl fmt::Display) -> Self {
        Self { code: Self::NUMERIC, message: message.to_string() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<irlplan::prediction::PredictionError> for Failure {
    fn from(e: irlplan::prediction::PredictionError) -> Self {
        use irlplan::prediction::PredictionError as E;
        match e {
            E::NonFiniteLoss { .. } => Self::numeric(e),
            E::MissingParams => Self::usage(format!("{e}; pass --params")),
            _ => Self::data(e),
        }
    }
}

impl From<irlplan::irl::IrlError> for Failure {
    fn from(e: irlplan::irl::IrlError) -> Self {
        match e {
            irlplan::irl::IrlError::NonFiniteLoss { .. } => Self::numeric(e),
            _ => Self::data(e),
        }
    }
}

impl From<irlplan::pipeline::PlanError> for Failure {
    fn from(e: irlplan::pipeline::PlanError) -> Self {
        match e {
            irlplan::pipeline::PlanError::Prediction(p) => p.into(),
            other => Self::data(other),
        }
    }
}

impl From<irlplan::scenario::DataError> for Failure {
    fn from(e: irlplan::scenario::DataError) -> Self {
        Self::data(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::data(e)
    }
}
