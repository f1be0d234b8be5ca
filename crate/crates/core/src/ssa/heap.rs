/// Indexed binary min-heap keyed by putative firing time, supporting
/// in-place key updates as required by the next-reaction method.
#[derive(Debug, Clone)]
pub(crate) struct IndexedHeap {
    keys: Vec<f64>,
    heap: Vec<usize>,
    pos: Vec<usize>,
}

impl IndexedHeap {
    pub fn new(keys: Vec<f64>) -> Self {
        let n = keys.len();
        let mut h = IndexedHeap {
            keys,
            heap: (0..n).collect(),
            pos: (0..n).collect(),
        };
        for i in (0..n / 2).rev() {
            h.sift_down(i);
        }
        h
    }

    #[inline]
    pub fn min(&self) -> (usize, f64) {
        let r = self.heap[0];
        (r, self.keys[r])
    }

    #[inline]
    pub fn key(&self, item: usize) -> f64 {
        self.keys[item]
    }

    pub fn update(&mut self, item: usize, key: f64) {
        self.keys[item] = key;
        let p = self.pos[item];
        self.sift_up(p);
        self.sift_down(self.pos[item]);
    }

    #[inline]
    fn before(&self, a: usize, b: usize) -> bool {
        let (ka, kb) = (self.keys[a], self.keys[b]);
        ka < kb || (ka == kb && a < b)
    }

    fn sift_up(&mut self, mut i: usize) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if self.before(self.heap[i], self.heap[parent]) {
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
            let l = 2 * i + 1;
            if l >= n {
                break;
            }
            let r = l + 1;
            let mut m = l;
            if r < n && self.before(self.heap[r], self.heap[l]) {
                m = r;
            }
            if self.before(self.heap[m], self.heap[i]) {
                self.swap(i, m);
                i = m;
            } else {
                break;
            }
        }
    }

    fn swap(&mut self, i: usize, j: usize) {
        self.heap.swap(i, j);
        self.pos[self.heap[i]] = i;
        self.pos[self.heap[j]] = j;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn min_tracks_updates(init in prop::collection::vec(0.0f64..100.0, 1..20),
                              ops in prop::collection::vec((0usize..20, 0.0f64..100.0), 0..60)) {
            let n = init.len();
            let mut h = IndexedHeap::new(init.clone());
            let mut keys = init;
            for (i, k) in ops {
                let i = i % n;
                h.update(i, k);
                keys[i] = k;
                let best = keys.iter().cloned().fold(f64::INFINITY, f64::min);
                prop_assert_eq!(h.min().1, best);
                prop_assert_eq!(h.key(h.min().0), best);
            }
        }
    }

    #[test]
    fn infinite_keys_sink() {
        let mut h = IndexedHeap::new(vec![f64::INFINITY, 3.0, f64::INFINITY]);
        assert_eq!(h.min(), (1, 3.0));
        h.update(1, f64::INFINITY);
        assert!(h.min().1.is_infinite());
        h.update(2, 0.5);
        assert_eq!(h.min(), (2, 0.5));
    }
}
