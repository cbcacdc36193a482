//! One-pass private release of frequency statistics (noisy heavy-coordinate
//! estimates plus noisy level-set sizes) from which (1+alpha)-approximations
//! to arbitrary symmetric norms can be computed by post-processing, under
//! (epsilon, delta)-differential privacy.

pub mod error;
pub mod hashing;
pub mod levels;
pub mod norms;
pub mod oracle;
pub mod params;
pub mod pipeline;
pub mod privacy;
pub mod release;
pub mod sketch;
pub mod stream;

pub use error::{Error, Result};
