use std::fmt;

use treetune::harness::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Data,
    Runtime,
    Exists,
}

/// A failure with the component it came from and its exit-code class.
#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub component: &'static str,
    pub message: String,
}

impl CliError {
    pub fn config(component: &'static str, message: impl Into<String>) -> Self {
        Self { kind: Kind::Config, component, message: message.into() }
    }

    pub fn data(component: &'static str, message: impl Into<String>) -> Self {
        Self { kind: Kind::Data, component, message: message.into() }
    }

    pub fn runtime(component: &'static str, message: impl Into<String>) -> Self {
        Self { kind: Kind::Runtime, component, message: message.into() }
    }

    pub fn exists(path: &std::path::Path) -> Self {
        Self {
            kind: Kind::Exists,
            component: "output",
            message: format!("{} already exists; pass --force to overwrite", path.display()),
        }
    }

    pub fn code(&self) -> u8 {
        match self.kind {
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Runtime => 4,
            Kind::Exists => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.component, self.message)
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        let message = e.to_string();
        match e {
            HarnessError::Plan(_) => Self::config("plan", message),
            HarnessError::Space(_) => Self::config("space", message),
            HarnessError::Tuner(_) => Self::config("tuner", message),
            HarnessError::Data(_) => Self::data("data", message),
            HarnessError::OutputExists(p) => Self::exists(&p),
            HarnessError::Tree(_) | HarnessError::Fitness { .. } => Self::runtime("trees", message),
            HarnessError::Stats(_) => Self::runtime("stats", message),
            HarnessError::Leakage(_) => Self::runtime("harness", message),
            HarnessError::Io { .. } | HarnessError::Json { .. } => Self::runtime("io", message),
        }
    }
}
