//! The MUIT engine: accepts SOAP task requests from a process engine,
//! serves compiled task pages to devices, and returns results to the
//! caller as SOAP responses.

pub mod bpel;
pub mod config;
pub mod deploy;
mod engine;
pub mod http;
pub mod notify;
pub mod result;

pub use config::{ConfigError, DeploymentConfig, EngineConfig, NotifierKind, RouteConfig};
pub use deploy::{DeployError, Deployment};
pub use engine::{ApiError, Engine, EngineError, Reply, SoapOutcome, TaskPage};
pub use http::{router, serve};
