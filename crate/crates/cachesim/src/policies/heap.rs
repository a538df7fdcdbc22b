//! Bounded min-heap of cached contents keyed by estimated popularity, with a
//! position index for in-place key updates, plus the admission/eviction
//! policy built on top of it.

use std::collections::HashMap;

use rand::Rng;

use super::Access;

/// What `update_or_insert` did with the offered content.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeapOutcome {
    /// Content was resident; its key was updated in place.
    Updated,
    /// Content was admitted into free space.
    Inserted,
    /// Content was admitted, displacing the heap minimum.
    Evicted(u64),
    /// Key did not beat the minimum; cache unchanged.
    Bypass,
}

#[derive(Debug, Clone)]
pub struct CacheHeap {
    capacity: usize,
    /// (content id, key), heap-ordered with the minimum key at index 0.
    entries: Vec<(u64, f64)>,
    /// content id -> index into `entries`.
    positions: HashMap<u64, usize>,
}

impl CacheHeap {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: Vec::with_capacity(capacity),
            positions: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn contains(&self, content_id: u64) -> bool {
        self.positions.contains_key(&content_id)
    }

    pub fn min_key(&self) -> Option<f64> {
        self.entries.first().map(|&(_, k)| k)
    }

    pub fn key_of(&self, content_id: u64) -> Option<f64> {
        self.positions.get(&content_id).map(|&i| self.entries[i].1)
    }

    pub fn resident_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|&(id, _)| id)
    }

    fn set_position(&mut self, index: usize) {
        let id = self.entries[index].0;
        self.positions.insert(id, index);
    }

    fn sift_up(&mut self, mut index: usize) {
        while index > 0 {
            let parent = (index - 1) / 2;
            if self.entries[index].1 < self.entries[parent].1 {
                self.entries.swap(index, parent);
                self.set_position(index);
                index = parent;
            } else {
                break;
            }
        }
        self.set_position(index);
    }

    fn sift_down(&mut self, mut index: usize) {
        loop {
            let left = 2 * index + 1;
            let right = left + 1;
            let mut smallest = index;
            if left < self.entries.len() && self.entries[left].1 < self.entries[smallest].1 {
                smallest = left;
            }
            if right < self.entries.len() && self.entries[right].1 < self.entries[smallest].1 {
                smallest = right;
            }
            if smallest == index {
                break;
            }
            self.entries.swap(index, smallest);
            self.set_position(index);
            index = smallest;
        }
        self.set_position(index);
    }

    /// Restore the heap property around an entry whose key just changed.
    fn reposition(&mut self, index: usize) {
        let id = self.entries[index].0;
        self.sift_up(index);
        let index = self.positions[&id];
        self.sift_down(index);
    }

    /// Update a resident key, admit a new content into free space, displace
    /// the minimum when the key beats it, or bypass.
    pub fn update_or_insert(&mut self, content_id: u64, key: f64) -> HeapOutcome {
        if let Some(&index) = self.positions.get(&content_id) {
            self.entries[index].1 = key;
            self.reposition(index);
            return HeapOutcome::Updated;
        }
        if self.capacity == 0 {
            return HeapOutcome::Bypass;
        }
        if self.entries.len() < self.capacity {
            self.entries.push((content_id, key));
            self.sift_up(self.entries.len() - 1);
            return HeapOutcome::Inserted;
        }
        if key > self.entries[0].1 {
            let (victim, _) = self.entries[0];
            self.positions.remove(&victim);
            self.entries[0] = (content_id, key);
            self.sift_down(0);
            return HeapOutcome::Evicted(victim);
        }
        HeapOutcome::Bypass
    }

    /// Structural invariants: heap order, capacity bound, index consistency.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.entries.len() > self.capacity {
            return Err(format!(
                "occupancy {} exceeds capacity {}",
                self.entries.len(),
                self.capacity
            ));
        }
        if self.entries.len() != self.positions.len() {
            return Err("position index out of sync".into());
        }
        for (i, &(id, key)) in self.entries.iter().enumerate() {
            if self.positions.get(&id) != Some(&i) {
                return Err(format!("content {id} misindexed"));
            }
            if i > 0 && self.entries[(i - 1) / 2].1 > key {
                return Err(format!("heap property violated at index {i}"));
            }
        }
        Ok(())
    }

    /// Re-evaluate the keys of up to `sample_size` distinct residents chosen
    /// uniformly at random.
    pub fn refresh<R: Rng, F: FnMut(u64) -> f64>(
        &mut self,
        sample_size: usize,
        mut reevaluate: F,
        rng: &mut R,
    ) {
        let n = self.entries.len();
        if n == 0 || sample_size == 0 {
            return;
        }
        let amount = sample_size.min(n);
        let ids: Vec<u64> = rand::seq::index::sample(rng, n, amount)
            .into_iter()
            .map(|i| self.entries[i].0)
            .collect();
        for id in ids {
            let key = reevaluate(id);
            let index = self.positions[&id];
            self.entries[index].1 = key;
            self.reposition(index);
        }
    }
}

/// The popularity-driven caching policy: predicted popularity as the heap
/// key, admission when the prediction beats the cache minimum, and random
/// key refresh on every request.
#[derive(Debug, Clone)]
pub struct HeapPolicy {
    pub heap: CacheHeap,
    pub refresh_size: usize,
}

impl HeapPolicy {
    pub fn new(capacity: usize, refresh_size: usize) -> Self {
        Self {
            heap: CacheHeap::new(capacity),
            refresh_size,
        }
    }

    /// Serve one request whose popularity estimate is `key`, then refresh a
    /// few random residents through `reevaluate`.
    pub fn on_request<R: Rng, F: FnMut(u64) -> f64>(
        &mut self,
        content_id: u64,
        key: f64,
        reevaluate: F,
        rng: &mut R,
    ) -> Access {
        let access = match self.heap.update_or_insert(content_id, key) {
            HeapOutcome::Updated => Access::Hit,
            HeapOutcome::Inserted => Access::Miss { evicted: None },
            HeapOutcome::Evicted(victim) => Access::Miss { evicted: Some(victim) },
            HeapOutcome::Bypass => Access::Miss { evicted: None },
        };
        self.heap.refresh(self.refresh_size, reevaluate, rng);
        access
    }
}
