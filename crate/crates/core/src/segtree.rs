//! Range-add / range-min segment tree with lazy propagation, plus a Fenwick
//! tree for prefix sums. Both are sized once and indexed `0..len`.

pub(crate) struct MinAddTree {
    size: usize,
    min: Vec<i64>,
    lazy: Vec<i64>,
}

impl MinAddTree {
    pub fn new(len: usize, fill: i64) -> Self {
        let size = len.max(1).next_power_of_two();
        Self {
            size,
            min: vec![fill; 2 * size],
            lazy: vec![0; 2 * size],
        }
    }

    fn apply(&mut self, node: usize, delta: i64) {
        self.min[node] += delta;
        if node < self.size {
            self.lazy[node] += delta;
        }
    }

    fn push(&mut self, node: usize) {
        let d = self.lazy[node];
        if d != 0 {
            self.apply(2 * node, d);
            self.apply(2 * node + 1, d);
            self.lazy[node] = 0;
        }
    }

    fn pull(&mut self, node: usize) {
        self.min[node] = self.min[2 * node].min(self.min[2 * node + 1]);
    }

    /// Adds `delta` to every position in `lo..hi`.
    pub fn add(&mut self, lo: usize, hi: usize, delta: i64) {
        if lo < hi {
            self.add_rec(1, 0, self.size, lo, hi, delta);
        }
    }

    fn add_rec(&mut self, node: usize, nl: usize, nr: usize, lo: usize, hi: usize, delta: i64) {
        if hi <= nl || nr <= lo {
            return;
        }
        if lo <= nl && nr <= hi {
            self.apply(node, delta);
            return;
        }
        self.push(node);
        let mid = (nl + nr) / 2;
        self.add_rec(2 * node, nl, mid, lo, hi, delta);
        self.add_rec(2 * node + 1, mid, nr, lo, hi, delta);
        self.pull(node);
    }

    pub fn set(&mut self, pos: usize, value: i64) {
        self.set_rec(1, 0, self.size, pos, value);
    }

    fn set_rec(&mut self, node: usize, nl: usize, nr: usize, pos: usize, value: i64) {
        if nr - nl == 1 {
            self.min[node] = value;
            return;
        }
        self.push(node);
        let mid = (nl + nr) / 2;
        if pos < mid {
            self.set_rec(2 * node, nl, mid, pos, value);
        } else {
            self.set_rec(2 * node + 1, mid, nr, pos, value);
        }
        self.pull(node);
    }

    /// Minimum over `lo..hi`; `i64::MAX` for an empty range.
    pub fn min(&mut self, lo: usize, hi: usize) -> i64 {
        if lo >= hi {
            return i64::MAX;
        }
        self.min_rec(1, 0, self.size, lo, hi)
    }

    fn min_rec(&mut self, node: usize, nl: usize, nr: usize, lo: usize, hi: usize) -> i64 {
        if hi <= nl || nr <= lo {
            return i64::MAX;
        }
        if lo <= nl && nr <= hi {
            return self.min[node];
        }
        self.push(node);
        let mid = (nl + nr) / 2;
        self.min_rec(2 * node, nl, mid, lo, hi)
            .min(self.min_rec(2 * node + 1, mid, nr, lo, hi))
    }
}

pub(crate) struct Fenwick {
    tree: Vec<u64>,
}

impl Fenwick {
    pub fn new(len: usize) -> Self {
        Self {
            tree: vec![0; len + 1],
        }
    }

    pub fn add(&mut self, pos: usize, delta: u64) {
        let mut i = pos + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over `0..end`.
    pub fn prefix(&self, end: usize) -> u64 {
        let mut i = end;
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}
