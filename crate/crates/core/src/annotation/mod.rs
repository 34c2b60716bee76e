//! Label mathematics and the machine-in-the-loop workflow.

mod consensus;
mod mitl;
mod reliability;

pub use consensus::*;
pub use mitl::*;
pub use reliability::*;
