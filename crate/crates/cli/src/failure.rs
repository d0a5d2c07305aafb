use std::path::Path;

use thiserror::Error;

/// Command failure, classified by process exit code.
#[derive(Debug, Error)]
pub enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Numeric(_) => 4,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::Data(format!("I/O error on {}: {e}", path.display()))
    }
}

impl From<pillarmatch::Error> for Failure {
    fn from(e: pillarmatch::Error) -> Self {
        use pillarmatch::Error as E;
        if e.is_numeric() {
            return Failure::Numeric(e.to_string());
        }
        match e {
            E::Argument(_) | E::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pillarmatch::Error;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(Failure::from(Error::Config("x".into())).exit_code(), 2);
        assert_eq!(Failure::from(Error::Argument("x".into())).exit_code(), 2);
        assert_eq!(Failure::from(Error::Format("x".into())).exit_code(), 3);
        assert_eq!(Failure::from(Error::InsufficientCorrespondences(1)).exit_code(), 3);
        assert_eq!(Failure::from(Error::Numeric("nan".into())).exit_code(), 4);
    }
}
