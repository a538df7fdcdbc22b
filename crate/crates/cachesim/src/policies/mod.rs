//! Cache policies: the popularity-keyed min-heap policy and the LRU and ARC
//! baselines.

mod arc;
mod heap;
mod lru;

pub use arc::ArcState;
pub use heap::{CacheHeap, HeapOutcome, HeapPolicy};
pub use lru::LruState;

/// Result of one cache access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Hit,
    Miss { evicted: Option<u64> },
}

impl Access {
    pub fn is_hit(&self) -> bool {
        matches!(self, Access::Hit)
    }
}
