pub mod channels;
pub mod cli;
pub mod dataio;
pub mod entropy;
pub mod error;
pub mod protocol;
pub mod statespace;
pub mod sweep;
pub mod validation;
