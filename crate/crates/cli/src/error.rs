use serde_json::json;
use thiserror::Error;

use permassist_core::cf::CfError;
use permassist_core::config::ConfigError;
use permassist_core::eval::EvalError;
use permassist_core::icl::IclError;
use permassist_core::service::ServiceError;
use permassist_core::DatasetError;

/// Every failure the binary reports. Usage errors exit with 2, everything
/// else with 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{message}")]
    Component { code: &'static str, message: String, context: Option<String> },
}

impl CliError {
    pub fn component(code: &'static str, message: impl Into<String>) -> Self {
        CliError::Component { code, message: message.into(), context: None }
    }

    pub fn with_context(self, ctx: impl Into<String>) -> Self {
        match self {
            CliError::Component { code, message, context } => {
                let ctx = ctx.into();
                let context = Some(match context {
                    Some(inner) => format!("{ctx}\n{inner}"),
                    None => ctx,
                });
                CliError::Component { code, message, context }
            }
            other => other,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Component { .. } => 1,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Component { code, .. } => code,
        }
    }

    /// The machine-readable envelope written to stderr.
    pub fn envelope(&self) -> serde_json::Value {
        let context = match self {
            CliError::Component { context, .. } => context.clone(),
            CliError::Usage(_) => None,
        };
        json!({ "error": { "code": self.code(), "message": self.to_string(), "context": context } })
    }
}

macro_rules! component_from {
    ($($ty:ty => $code:expr),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::component($code, e.to_string())
            }
        })*
    };
}

component_from! {
    DatasetError => "dataset",
    CfError => "cf",
    EvalError => "eval",
    ConfigError => "config",
    IclError => "provider",
    std::io::Error => "io",
    serde_json::Error => "json",
    crate::store::StoreError => "storage",
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        CliError::component(e.code(), e.to_string())
    }
}
