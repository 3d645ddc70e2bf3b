//! Binary sum-tree over leaf priorities with O(log n) prefix-sum descent.
//!
//! The node array is 1-based: node 1 is the root, leaves occupy
//! `capacity..2*capacity`. Updates recompute ancestor sums from both children
//! rather than adding deltas, which keeps accumulated float error bounded.

/// Fixed-capacity sum-tree; capacity is rounded up to a power of two.
#[derive(Debug, Clone)]
pub struct SumTree {
    capacity: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(min_capacity: usize) -> Self {
        let capacity = min_capacity.max(1).next_power_of_two();
        Self {
            capacity,
            nodes: vec![0.0; 2 * capacity],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total priority mass (the root).
    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, leaf: usize) -> f64 {
        self.nodes[self.capacity + leaf]
    }

    /// Leaf priorities as a slice (including never-written zeros).
    pub fn leaves(&self) -> &[f64] {
        &self.nodes[self.capacity..]
    }

    /// Sets one leaf priority and repairs every ancestor sum.
    pub fn set(&mut self, leaf: usize, priority: f64) {
        assert!(leaf < self.capacity, "leaf {} out of range", leaf);
        assert!(
            priority >= 0.0 && priority.is_finite(),
            "priority must be finite and non-negative"
        );
        let mut node = self.capacity + leaf;
        self.nodes[node] = priority;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
    }

    /// Finds the leaf whose cumulative-priority interval contains `u`.
    ///
    /// Descends from the root: go left when `u <= left child sum`, otherwise
    /// subtract it and go right. With leaves (1,2,3,4) the cumulative bounds
    /// are 1, 3, 6, 10, so u=2.5 lands on leaf 1.
    pub fn find_prefix(&self, mut u: f64) -> usize {
        let mut node = 1;
        while node < self.capacity {
            let left = 2 * node;
            if u <= self.nodes[left] {
                node = left;
            } else {
                u -= self.nodes[left];
                node = left + 1;
            }
        }
        node - self.capacity
    }

    /// Largest deviation between any internal node and the sum of its
    /// children; a consistency diagnostic for tests.
    pub fn max_node_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for node in 1..self.capacity {
            let err = (self.nodes[node] - (self.nodes[2 * node] + self.nodes[2 * node + 1])).abs();
            worst = worst.max(err);
        }
        worst
    }
}
