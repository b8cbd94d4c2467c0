pub mod bilasso;
pub mod chain;
pub mod data;
pub mod diagnostics;
pub mod effects;
pub mod error;
pub mod gmm;
pub mod metrics;
pub mod ptg;
pub mod randkit;
pub mod simulate;
pub mod study;

pub use chain::{ChainConfig, PosteriorSummary, Trace};
pub use data::MediationDataset;
pub use error::{Error, Result};
