pub mod chartrec;
pub mod datatable;
pub mod diffcore;
pub mod drattacks;
pub mod paradr;
pub mod substitute;
pub mod error;
pub mod harness;

pub use error::{Error, Result};
