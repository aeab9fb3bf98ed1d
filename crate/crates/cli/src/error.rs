use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Parse(String),
    Config(String),
    Fit(penglm::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Parse(_) => 4,
            CliError::Config(_) => 5,
            CliError::Fit(_) => 6,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io(_) => "io",
            CliError::Parse(_) => "parse",
            CliError::Config(_) => "config",
            CliError::Fit(_) => "fit",
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Parse(m) | CliError::Config(m) => m.clone(),
            CliError::Fit(e) => e.to_string(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "schema_version": 1,
            "error": {
                "kind": self.kind(),
                "exit_code": self.exit_code(),
                "message": self.message(),
            }
        })
    }
}

impl From<penglm::Error> for CliError {
    fn from(e: penglm::Error) -> Self {
        match e {
            penglm::Error::InvalidInput(_)
            | penglm::Error::DimensionMismatch { .. }
            | penglm::Error::Unsupported(_)
            | penglm::Error::ZeroWeights => CliError::Config(e.to_string()),
            _ => CliError::Fit(e),
        }
    }
}
