//! Independent reference models used as oracles by the integration and
//! acceptance suites. These deliberately use naive data structures and are
//! written against the published algorithm descriptions, not against the
//! library implementations they check.
//!
//! Each test binary compiles its own copy and uses a different subset, so
//! unused helpers are expected.
#![allow(dead_code)]

use std::collections::HashMap;

use cachesim::policies::HeapOutcome;

/// List-based LRU: vector ordered most-recent-first, linear scans only.
pub struct NaiveLru {
    capacity: usize,
    order: Vec<u64>,
}

impl NaiveLru {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            order: Vec::new(),
        }
    }

    /// Returns (hit, evicted).
    pub fn request(&mut self, id: u64) -> (bool, Option<u64>) {
        if self.capacity == 0 {
            return (false, None);
        }
        if let Some(pos) = self.order.iter().position(|&x| x == id) {
            self.order.remove(pos);
            self.order.insert(0, id);
            return (true, None);
        }
        let evicted = if self.order.len() == self.capacity {
            self.order.pop()
        } else {
            None
        };
        self.order.insert(0, id);
        (false, evicted)
    }

    pub fn residents(&self) -> Vec<u64> {
        let mut v = self.order.clone();
        v.sort_unstable();
        v
    }
}

/// Second transcription of the adaptive replacement cache algorithm.
/// Lists are vectors with the LRU element at index 0 and the MRU at the end;
/// membership is by linear scan.
pub struct RefArc {
    c: usize,
    p: f64,
    t1: Vec<u64>,
    t2: Vec<u64>,
    b1: Vec<u64>,
    b2: Vec<u64>,
}

impl RefArc {
    pub fn new(c: usize) -> Self {
        Self {
            c,
            p: 0.0,
            t1: Vec::new(),
            t2: Vec::new(),
            b1: Vec::new(),
            b2: Vec::new(),
        }
    }

    fn replace(&mut self, requested_in_b2: bool) {
        let t1_len = self.t1.len() as f64;
        let prefer_t1 = if requested_in_b2 {
            t1_len >= self.p
        } else {
            t1_len > self.p
        };
        if !self.t1.is_empty() && prefer_t1 {
            let lru = self.t1.remove(0);
            self.b1.push(lru);
        } else {
            let lru = self.t2.remove(0);
            self.b2.push(lru);
        }
    }

    fn remove(list: &mut Vec<u64>, id: u64) {
        let pos = list.iter().position(|&x| x == id).unwrap();
        list.remove(pos);
    }

    /// Returns true on a cache hit.
    pub fn request(&mut self, x: u64) -> bool {
        if self.c == 0 {
            return false;
        }
        if self.t1.contains(&x) {
            Self::remove(&mut self.t1, x);
            self.t2.push(x);
            true
        } else if self.t2.contains(&x) {
            Self::remove(&mut self.t2, x);
            self.t2.push(x);
            true
        } else if self.b1.contains(&x) {
            let delta = if self.b1.len() >= self.b2.len() {
                1.0
            } else {
                self.b2.len() as f64 / self.b1.len() as f64
            };
            self.p = (self.p + delta).min(self.c as f64);
            self.replace(false);
            Self::remove(&mut self.b1, x);
            self.t2.push(x);
            false
        } else if self.b2.contains(&x) {
            let delta = if self.b2.len() >= self.b1.len() {
                1.0
            } else {
                self.b1.len() as f64 / self.b2.len() as f64
            };
            self.p = (self.p - delta).max(0.0);
            self.replace(true);
            Self::remove(&mut self.b2, x);
            self.t2.push(x);
            false
        } else {
            let l1 = self.t1.len() + self.b1.len();
            let l2 = self.t2.len() + self.b2.len();
            if l1 == self.c {
                if self.t1.len() < self.c {
                    self.b1.remove(0);
                    self.replace(false);
                } else {
                    self.t1.remove(0);
                }
            } else if l1 < self.c && l1 + l2 >= self.c {
                if l1 + l2 == 2 * self.c {
                    self.b2.remove(0);
                }
                self.replace(false);
            }
            self.t1.push(x);
            false
        }
    }

    pub fn residents(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self.t1.iter().chain(self.t2.iter()).copied().collect();
        v.sort_unstable();
        v
    }
}

/// Naive model of the bounded min-heap policy: a flat map plus linear scans.
pub struct ShadowHeap {
    pub capacity: usize,
    pub keys: HashMap<u64, f64>,
}

impl ShadowHeap {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            keys: HashMap::new(),
        }
    }

    pub fn min_entry(&self) -> Option<(u64, f64)> {
        self.keys
            .iter()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(&id, &k)| (id, k))
    }

    pub fn update_or_insert(&mut self, id: u64, key: f64) -> HeapOutcome {
        if let Some(k) = self.keys.get_mut(&id) {
            *k = key;
            return HeapOutcome::Updated;
        }
        if self.capacity == 0 {
            return HeapOutcome::Bypass;
        }
        if self.keys.len() < self.capacity {
            self.keys.insert(id, key);
            return HeapOutcome::Inserted;
        }
        let (victim, min_key) = self.min_entry().unwrap();
        if key > min_key {
            self.keys.remove(&victim);
            self.keys.insert(id, key);
            HeapOutcome::Evicted(victim)
        } else {
            HeapOutcome::Bypass
        }
    }
}
