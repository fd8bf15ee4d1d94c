pub mod config;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod gaussian;
pub mod jj;
pub mod linreg;
pub mod metrics;
pub mod model_io;
pub mod moments;
pub mod oracle;
pub mod site;

pub use error::{Result, VepError};
