//! Binary sum tree over event rates: O(log N) single-entry update and
//! O(log N) proportional sampling.

/// Complete binary segment tree; leaves hold rates, internal nodes hold
/// subtree sums recomputed on every update (no incremental drift).
#[derive(Debug, Clone)]
pub struct RateTree {
    len: usize,
    cap: usize,
    nodes: Vec<f64>,
}

impl RateTree {
    pub fn new(rates: &[f64]) -> Self {
        let len = rates.len();
        let cap = len.next_power_of_two().max(1);
        let mut nodes = vec![0.0; 2 * cap];
        nodes[cap..cap + len].copy_from_slice(rates);
        let mut tree = Self { len, cap, nodes };
        tree.rebuild();
        tree
    }

    pub fn len(&self) -> usize {
        self.len
    }

    /// Recompute all internal sums from the leaves.
    pub fn rebuild(&mut self) {
        for i in (1..self.cap).rev() {
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.cap + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: f64) {
        debug_assert!(i < self.len);
        debug_assert!(value >= 0.0);
        let mut node = self.cap + i;
        self.nodes[node] = value;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
    }

    /// Write a small contiguous block of leaves and recompute the shared
    /// ancestor path once.
    #[inline]
    pub fn set_block(&mut self, lo: usize, values: &[f64]) {
        debug_assert!(lo + values.len() <= self.len);
        // the tree is sized at construction; positions stay in bounds
        unsafe {
            for (j, &v) in values.iter().enumerate() {
                *self.nodes.get_unchecked_mut(self.cap + lo + j) = v;
            }
            let mut a = (self.cap + lo) / 2;
            let mut b = (self.cap + lo + values.len().max(1) - 1) / 2;
            loop {
                for n in a..=b {
                    *self.nodes.get_unchecked_mut(n) =
                        self.nodes.get_unchecked(2 * n) + self.nodes.get_unchecked(2 * n + 1);
                }
                if a <= 1 {
                    break;
                }
                a /= 2;
                b /= 2;
            }
        }
    }

    /// Index of the leaf selected by `r ∈ [0, total)`: the unique `i` with
    /// `Σ_{j<i} rate_j <= r < Σ_{j<=i} rate_j` (up to float rounding, which
    /// can shift the pick by one ulp at a leaf boundary).
    #[inline]
    pub fn sample(&self, mut r: f64) -> usize {
        debug_assert!(r >= 0.0 && r < self.total());
        let mut node = 1;
        // node < cap implies 2*node + 1 < 2*cap = nodes.len()
        while node < self.cap {
            let left = unsafe { *self.nodes.get_unchecked(2 * node) };
            if r < left {
                node = 2 * node;
            } else {
                r -= left;
                node = 2 * node + 1;
            }
        }
        (node - self.cap).min(self.len - 1)
    }

    /// Plain sum over the leaves, for consistency checks.
    pub fn leaf_sum(&self) -> f64 {
        self.nodes[self.cap..self.cap + self.len].iter().sum()
    }
}
