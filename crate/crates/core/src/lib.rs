mod dd;
pub mod error;
pub mod gauss;
pub mod markov;
pub mod mixing;
pub mod oracle;
pub mod representations;
pub mod specfun;
pub mod spherical;

pub use error::{Error, Result};
