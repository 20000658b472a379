//! Lock-free disjoint sets for parallel component labeling.
//!
//! Unions always link the larger root under the smaller one, so once all
//! unions finish every element's root is the minimum index of its component,
//! whatever order the unions ran in.

use std::sync::atomic::{AtomicU32, Ordering};

pub struct ConcurrentDisjointSet {
    parent: Vec<AtomicU32>,
}

impl ConcurrentDisjointSet {
    pub fn new(n: usize) -> Self {
        assert!(n <= u32::MAX as usize, "too many elements");
        Self {
            parent: (0..n as u32).map(AtomicU32::new).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&self, mut x: u32) -> u32 {
        loop {
            let p = self.parent[x as usize].load(Ordering::Acquire);
            if p == x {
                return x;
            }
            let gp = self.parent[p as usize].load(Ordering::Acquire);
            if gp != p {
                // path halving; losing the race only skips the shortcut
                let _ =
                    self.parent[x as usize].compare_exchange_weak(p, gp, Ordering::AcqRel, Ordering::Relaxed);
            }
            x = gp;
        }
    }

    pub fn union(&self, a: u32, b: u32) {
        let (mut a, mut b) = (a, b);
        loop {
            a = self.find(a);
            b = self.find(b);
            if a == b {
                return;
            }
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if self.parent[hi as usize]
                .compare_exchange(hi, lo, Ordering::AcqRel, Ordering::Acquire)
                .is_ok()
            {
                return;
            }
        }
    }

    /// Root (= minimum member index) of every element.
    pub fn roots(&self) -> Vec<u32> {
        (0..self.parent.len() as u32).map(|x| self.find(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rayon::prelude::*;

    #[test]
    fn roots_are_component_minima() {
        let ds = ConcurrentDisjointSet::new(8);
        ds.union(5, 7);
        ds.union(7, 3);
        ds.union(1, 2);
        assert_eq!(ds.roots(), vec![0, 1, 1, 3, 4, 3, 6, 3]);
    }

    #[test]
    fn parallel_unions_agree_with_sequential() {
        let n = 20_000u32;
        let pairs: Vec<(u32, u32)> = (0..n)
            .map(|i| (i, (i.wrapping_mul(2_654_435_761) >> 7) % n))
            .filter(|&(a, b)| (a ^ b) % 3 != 0)
            .collect();
        let seq = ConcurrentDisjointSet::new(n as usize);
        for &(a, b) in &pairs {
            seq.union(a, b);
        }
        let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let par = ConcurrentDisjointSet::new(n as usize);
        pool.install(|| pairs.par_iter().for_each(|&(a, b)| par.union(a, b)));
        assert_eq!(seq.roots(), par.roots());
    }
}
