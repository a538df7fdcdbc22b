//! Adaptive Replacement Cache, following the FAST'03 algorithm: resident
//! lists T1 (recency) and T2 (frequency), ghost lists B1 and B2, and the
//! adaptation parameter p steering the T1 target size.

use std::collections::{HashMap, VecDeque};

use super::Access;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Loc {
    T1,
    T2,
    B1,
    B2,
}

#[derive(Debug, Clone)]
pub struct ArcState {
    capacity: usize,
    /// Target size of T1, adapted on ghost hits. 0 <= p <= capacity.
    p: f64,
    /// Front is MRU for all four lists.
    t1: VecDeque<u64>,
    t2: VecDeque<u64>,
    b1: VecDeque<u64>,
    b2: VecDeque<u64>,
    loc: HashMap<u64, Loc>,
}

impl ArcState {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            p: 0.0,
            t1: VecDeque::new(),
            t2: VecDeque::new(),
            b1: VecDeque::new(),
            b2: VecDeque::new(),
            loc: HashMap::new(),
        }
    }

    pub fn contains(&self, content_id: u64) -> bool {
        matches!(self.loc.get(&content_id), Some(Loc::T1) | Some(Loc::T2))
    }

    pub fn resident_len(&self) -> usize {
        self.t1.len() + self.t2.len()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn resident_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.t1.iter().chain(self.t2.iter()).copied().collect();
        ids.sort_unstable();
        ids
    }

    pub fn list_lens(&self) -> (usize, usize, usize, usize) {
        (self.t1.len(), self.t2.len(), self.b1.len(), self.b2.len())
    }

    fn remove_from(list: &mut VecDeque<u64>, content_id: u64) {
        let pos = list
            .iter()
            .position(|&id| id == content_id)
            .expect("location map out of sync with list");
        list.remove(pos);
    }

    /// Move the LRU of T1 or T2 to the head of its ghost list and return the
    /// evicted resident.
    fn replace(&mut self, requested_in_b2: bool) -> Option<u64> {
        let t1_len = self.t1.len() as f64;
        if !self.t1.is_empty() && (t1_len > self.p || (requested_in_b2 && t1_len >= self.p)) {
            let victim = self.t1.pop_back().unwrap();
            self.b1.push_front(victim);
            self.loc.insert(victim, Loc::B1);
            Some(victim)
        } else if let Some(victim) = self.t2.pop_back() {
            self.b2.push_front(victim);
            self.loc.insert(victim, Loc::B2);
            Some(victim)
        } else {
            None
        }
    }

    pub fn access(&mut self, content_id: u64) -> Access {
        if self.capacity == 0 {
            return Access::Miss { evicted: None };
        }
        let c = self.capacity as f64;
        match self.loc.get(&content_id).copied() {
            Some(Loc::T1) => {
                Self::remove_from(&mut self.t1, content_id);
                self.t2.push_front(content_id);
                self.loc.insert(content_id, Loc::T2);
                Access::Hit
            }
            Some(Loc::T2) => {
                Self::remove_from(&mut self.t2, content_id);
                self.t2.push_front(content_id);
                Access::Hit
            }
            Some(Loc::B1) => {
                let delta = (self.b2.len() as f64 / self.b1.len() as f64).max(1.0);
                self.p = (self.p + delta).min(c);
                let evicted = self.replace(false);
                Self::remove_from(&mut self.b1, content_id);
                self.t2.push_front(content_id);
                self.loc.insert(content_id, Loc::T2);
                Access::Miss { evicted }
            }
            Some(Loc::B2) => {
                let delta = (self.b1.len() as f64 / self.b2.len() as f64).max(1.0);
                self.p = (self.p - delta).max(0.0);
                let evicted = self.replace(true);
                Self::remove_from(&mut self.b2, content_id);
                self.t2.push_front(content_id);
                self.loc.insert(content_id, Loc::T2);
                Access::Miss { evicted }
            }
            None => {
                let l1 = self.t1.len() + self.b1.len();
                let total = l1 + self.t2.len() + self.b2.len();
                let mut evicted = None;
                if l1 == self.capacity {
                    if self.t1.len() < self.capacity {
                        let ghost = self.b1.pop_back().unwrap();
                        self.loc.remove(&ghost);
                        evicted = self.replace(false);
                    } else {
                        // B1 is empty and T1 holds the whole cache.
                        let victim = self.t1.pop_back().unwrap();
                        self.loc.remove(&victim);
                        evicted = Some(victim);
                    }
                } else if total >= self.capacity {
                    if total == 2 * self.capacity {
                        let ghost = self.b2.pop_back().unwrap();
                        self.loc.remove(&ghost);
                    }
                    evicted = self.replace(false);
                }
                self.t1.push_front(content_id);
                self.loc.insert(content_id, Loc::T1);
                Access::Miss { evicted }
            }
        }
    }

    /// Structural invariants of the four lists and the adaptation parameter.
    pub fn check_invariants(&self) -> Result<(), String> {
        let (t1, t2, b1, b2) = self.list_lens();
        let c = self.capacity;
        if t1 + t2 > c {
            return Err(format!("|T1|+|T2| = {} > c = {c}", t1 + t2));
        }
        if t1 + b1 > c {
            return Err(format!("|T1|+|B1| = {} > c = {c}", t1 + b1));
        }
        if t1 + t2 + b1 + b2 > 2 * c {
            return Err(format!("directory size {} > 2c = {}", t1 + t2 + b1 + b2, 2 * c));
        }
        if !(0.0 <= self.p && self.p <= c as f64) {
            return Err(format!("p = {} outside [0, {c}]", self.p));
        }
        if self.loc.len() != t1 + t2 + b1 + b2 {
            return Err("location map out of sync".into());
        }
        for (list, which) in [
            (&self.t1, Loc::T1),
            (&self.t2, Loc::T2),
            (&self.b1, Loc::B1),
            (&self.b2, Loc::B2),
        ] {
            for id in list {
                if self.loc.get(id) != Some(&which) {
                    return Err(format!("content {id} misfiled"));
                }
            }
        }
        Ok(())
    }
}
