//! Core of the MUIT middleware: language front end, WSDL ingestion, bundle
//! generation, the SOAP/JSON bridge, the instance manager and the load
//! simulator. Nothing in here performs network I/O.

pub mod bridge;
pub mod codegen;
pub mod dsl;
pub mod instance;
pub mod sim;
pub mod wire;
pub mod wsdl;
pub mod value;

pub use value::Value;
