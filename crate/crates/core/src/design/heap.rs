//! Addressable binary min-heap over a fixed set of item ids.

/// Min-heap keyed by `(value, rank)` with per-item handles, so keys can be
/// changed or items removed in `O(log n)`.
#[derive(Debug, Clone)]
pub struct IndexedHeap {
    heap: Vec<usize>,
    pos: Vec<usize>,
    value: Vec<f64>,
    rank: Vec<u32>,
}

const ABSENT: usize = usize::MAX;

impl IndexedHeap {
    /// Builds a heap holding the items yielded by `active`. `value` and
    /// `rank` are indexed by item id.
    pub fn new(value: Vec<f64>, rank: Vec<u32>, active: impl IntoIterator<Item = usize>) -> Self {
        assert_eq!(value.len(), rank.len());
        let mut h = IndexedHeap {
            heap: active.into_iter().collect(),
            pos: vec![ABSENT; value.len()],
            value,
            rank,
        };
        for (i, &id) in h.heap.iter().enumerate() {
            h.pos[id] = i;
        }
        for i in (0..h.heap.len() / 2).rev() {
            h.sift_down(i);
        }
        h
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.pos[id] != ABSENT
    }

    pub fn value(&self, id: usize) -> f64 {
        self.value[id]
    }

    pub fn peek(&self) -> Option<usize> {
        self.heap.first().copied()
    }

    pub fn pop(&mut self) -> Option<usize> {
        let top = self.peek()?;
        self.remove(top);
        Some(top)
    }

    pub fn remove(&mut self, id: usize) {
        let i = self.pos[id];
        if i == ABSENT {
            return;
        }
        let last = self.heap.len() - 1;
        self.swap(i, last);
        self.heap.pop();
        self.pos[id] = ABSENT;
        if i < self.heap.len() {
            self.sift_down(i);
            self.sift_up(i);
        }
    }

    /// Sets the key of `id`; items not in the heap just record the value.
    pub fn set(&mut self, id: usize, value: f64) {
        let old = self.value[id];
        self.value[id] = value;
        let i = self.pos[id];
        if i == ABSENT {
            return;
        }
        if value > old {
            self.sift_down(i);
        } else {
            self.sift_up(i);
        }
    }

    #[inline]
    fn less(&self, a: usize, b: usize) -> bool {
        let (x, y) = (self.value[a], self.value[b]);
        x < y || (x == y && self.rank[a] < self.rank[b])
    }

    fn swap(&mut self, i: usize, j: usize) {
        self.heap.swap(i, j);
        self.pos[self.heap[i]] = i;
        self.pos[self.heap[j]] = j;
    }

    fn sift_up(&mut self, mut i: usize) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if self.less(self.heap[i], self.heap[parent]) {
                self.swap(i, parent);
                i = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut i: usize) {
        let n = self.heap.len();
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut best = i;
            if l < n && self.less(self.heap[l], self.heap[best]) {
                best = l;
            }
            if r < n && self.less(self.heap[r], self.heap[best]) {
                best = r;
            }
            if best == i {
                break;
            }
            self.swap(i, best);
            i = best;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn top_is_the_minimum(
            init in prop::collection::vec(0u8..20, 1..60),
            ops in prop::collection::vec((0usize..60, 0u8..20, any::<bool>()), 0..100),
        ) {
            let n = init.len();
            let value: Vec<f64> = init.iter().map(|&v| v as f64).collect();
            let rank: Vec<u32> = (0..n as u32).rev().collect();
            let mut heap = IndexedHeap::new(value.clone(), rank.clone(), 0..n);
            let mut live = vec![true; n];
            let mut vals = value;
            for (id, v, del) in ops {
                let id = id % n;
                if del {
                    heap.remove(id);
                    live[id] = false;
                } else {
                    heap.set(id, v as f64);
                    vals[id] = v as f64;
                }
                let want = (0..n)
                    .filter(|&i| live[i])
                    .min_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(rank[a].cmp(&rank[b])));
                prop_assert_eq!(heap.peek(), want);
                prop_assert_eq!(heap.len(), live.iter().filter(|&&l| l).count());
            }
        }
    }

    #[test]
    fn pops_in_order() {
        let mut h = IndexedHeap::new(vec![3.0, 1.0, 1.0, 2.0], vec![0, 2, 1, 3], 0..4);
        let order: Vec<_> = std::iter::from_fn(|| h.pop()).collect();
        assert_eq!(order, vec![2, 1, 3, 0]);
    }
}
