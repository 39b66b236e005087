//! Scenario documents and the `solve`, `properties` and `trace` commands.

pub mod config;
pub mod error;
pub mod expr;
pub mod run;

pub use config::{Overrides, ScenarioConfig};
pub use error::CliError;
pub use run::{Outcome, Status};
