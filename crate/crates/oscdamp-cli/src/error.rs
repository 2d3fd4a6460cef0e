use serde_json::json;

/// Failure of a CLI run, mapped onto the process exit code.
#[derive(Clone, Debug, PartialEq)]
pub enum CliError {
    /// Unparseable configuration or violated preconditions; all are listed.
    Config(Vec<String>),
    /// Truncation, underflow or another numerical failure.
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::Io(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Numerical(_) => "numerical",
            Self::Io(_) => "io",
        }
    }

    /// One-line JSON report for stderr.
    pub fn to_json(&self) -> String {
        let messages = match self {
            Self::Config(m) => m.clone(),
            Self::Numerical(m) | Self::Io(m) => vec![m.clone()],
        };
        json!({ "error": self.kind(), "exit_code": self.exit_code(), "messages": messages }).to_string()
    }
}

impl From<oscdamp::Error> for CliError {
    fn from(e: oscdamp::Error) -> Self {
        use oscdamp::Error as E;
        match e {
            E::Domain(_) | E::DimensionMismatch { .. } => Self::Config(vec![e.to_string()]),
            _ => Self::Numerical(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_exit_codes() {
        let t: CliError = oscdamp::Error::Truncation { required: 90, reason: "tail".into() }.into();
        assert_eq!(t.exit_code(), 3);
        let d: CliError = oscdamp::Error::Domain("bad".into()).into();
        assert_eq!(d.exit_code(), 2);
        let v: serde_json::Value = serde_json::from_str(&CliError::Io("disk".into()).to_json()).unwrap();
        assert_eq!(v["exit_code"], 4);
        assert_eq!(v["messages"][0], "disk");
    }
}
