//! HTTP service over a corpus: timelines and pre-annotations, human
//! corrections, and background annotation rounds.

mod api;
mod lock;
mod store;

pub use api::{router, serve};
pub use lock::{WriterGuard, WriterLock, LOCK_FILE};
pub use store::*;
