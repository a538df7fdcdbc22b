//! LRU baseline: recency list as an intrusive doubly linked list over a slab,
//! with a hash index for O(1) access.

use std::collections::HashMap;

use super::Access;

const NIL: usize = usize::MAX;

#[derive(Debug, Clone)]
struct Node {
    content_id: u64,
    prev: usize,
    next: usize,
}

#[derive(Debug, Clone)]
pub struct LruState {
    capacity: usize,
    nodes: Vec<Node>,
    index: HashMap<u64, usize>,
    head: usize,
    tail: usize,
    free: Vec<usize>,
}

impl LruState {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            nodes: Vec::with_capacity(capacity),
            index: HashMap::new(),
            head: NIL,
            tail: NIL,
            free: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, content_id: u64) -> bool {
        self.index.contains_key(&content_id)
    }

    fn unlink(&mut self, slot: usize) {
        let (prev, next) = (self.nodes[slot].prev, self.nodes[slot].next);
        if prev == NIL {
            self.head = next;
        } else {
            self.nodes[prev].next = next;
        }
        if next == NIL {
            self.tail = prev;
        } else {
            self.nodes[next].prev = prev;
        }
    }

    fn push_front(&mut self, slot: usize) {
        self.nodes[slot].prev = NIL;
        self.nodes[slot].next = self.head;
        if self.head != NIL {
            self.nodes[self.head].prev = slot;
        }
        self.head = slot;
        if self.tail == NIL {
            self.tail = slot;
        }
    }

    pub fn access(&mut self, content_id: u64) -> Access {
        if self.capacity == 0 {
            return Access::Miss { evicted: None };
        }
        if let Some(&slot) = self.index.get(&content_id) {
            self.unlink(slot);
            self.push_front(slot);
            return Access::Hit;
        }
        let evicted = if self.index.len() == self.capacity {
            let victim_slot = self.tail;
            let victim = self.nodes[victim_slot].content_id;
            self.unlink(victim_slot);
            self.index.remove(&victim);
            self.free.push(victim_slot);
            Some(victim)
        } else {
            None
        };
        let slot = match self.free.pop() {
            Some(s) => {
                self.nodes[s].content_id = content_id;
                s
            }
            None => {
                self.nodes.push(Node {
                    content_id,
                    prev: NIL,
                    next: NIL,
                });
                self.nodes.len() - 1
            }
        };
        self.index.insert(content_id, slot);
        self.push_front(slot);
        Access::Miss { evicted }
    }

    /// Resident ids from most to least recently used.
    pub fn recency_order(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.index.len());
        let mut slot = self.head;
        while slot != NIL {
            out.push(self.nodes[slot].content_id);
            slot = self.nodes[slot].next;
        }
        out
    }
}
