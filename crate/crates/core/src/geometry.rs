//! Tree geometry and path arithmetic over the level-order (heap) layout.
//!
//! Buckets are stored as a flat array: the root has index 0 and the nodes of
//! level `l` occupy indices `2^l - 1 .. 2^(l+1) - 1`, left to right. The path to
//! leaf `p` therefore visits `(2^l - 1) + (p >> (L - l))` at every level `l`.

use alloc::vec::Vec;
use core::fmt;

use rand_core::RngCore;

use crate::error::OramError;

/// Largest supported tree height. Keeps bucket indices and leaf counts well
/// inside `u64`.
pub const MAX_HEIGHT: u32 = 40;

/// A leaf of the bucket tree, in `[0, 2^L)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Leaf(pub u64);

impl fmt::Display for Leaf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "leaf {}", self.0)
    }
}

/// Static parameters of one ORAM instance.
///
/// `capacity` (N) and `height` (L) are independent; [`TreeGeometry::for_capacity`]
/// picks `L = ceil(log2 N)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TreeGeometry {
    height: u32,
    bucket_size: u32,
    block_size: u32,
    capacity: u64,
}

impl TreeGeometry {
    pub fn new(
        height: u32,
        bucket_size: u32,
        block_size: u32,
        capacity: u64,
    ) -> Result<Self, OramError> {
        if height > MAX_HEIGHT {
            return Err(OramError::Config(
                "tree height exceeds the supported maximum",
            ));
        }
        if bucket_size == 0 {
            return Err(OramError::Config("bucket size Z must be at least 1"));
        }
        if block_size == 0 {
            return Err(OramError::Config("block size B must be at least 1"));
        }
        if capacity == 0 {
            return Err(OramError::Config("capacity N must be at least 1"));
        }
        Ok(Self {
            height,
            bucket_size,
            block_size,
            capacity,
        })
    }

    /// Geometry with the default height `ceil(log2 N)`.
    pub fn for_capacity(
        capacity: u64,
        bucket_size: u32,
        block_size: u32,
    ) -> Result<Self, OramError> {
        Self::new(default_height(capacity), bucket_size, block_size, capacity)
    }

    /// L: the leaves sit at level L, the root at level 0.
    pub fn height(&self) -> u32 {
        self.height
    }

    /// Z: slots per bucket.
    pub fn bucket_size(&self) -> u32 {
        self.bucket_size
    }

    /// B: bytes per block.
    pub fn block_size(&self) -> u32 {
        self.block_size
    }

    /// N: number of addressable blocks.
    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn leaf_count(&self) -> u64 {
        1u64 << self.height
    }

    pub fn bucket_count(&self) -> u64 {
        2 * self.leaf_count() - 1
    }

    /// Number of buckets on any root-to-leaf path.
    pub fn path_len(&self) -> usize {
        self.height as usize + 1
    }

    pub fn check_leaf(&self, leaf: Leaf) -> Result<(), OramError> {
        if leaf.0 < self.leaf_count() {
            Ok(())
        } else {
            Err(OramError::LeafOutOfRange {
                leaf: leaf.0,
                leaf_count: self.leaf_count(),
            })
        }
    }

    /// Index of the level-`level` bucket on the path to `leaf`.
    pub fn path_bucket_index(&self, leaf: Leaf, level: u32) -> Result<u64, OramError> {
        self.check_leaf(leaf)?;
        if level > self.height {
            return Err(OramError::LevelOutOfRange {
                level,
                height: self.height,
            });
        }
        Ok(self.bucket_index_unchecked(leaf, level))
    }

    #[inline]
    pub(crate) fn bucket_index_unchecked(&self, leaf: Leaf, level: u32) -> u64 {
        ((1u64 << level) - 1) + (leaf.0 >> (self.height - level))
    }

    /// Bucket indices from the root (position 0) down to the leaf bucket.
    pub fn path(&self, leaf: Leaf) -> Result<Vec<u64>, OramError> {
        self.check_leaf(leaf)?;
        Ok((0..=self.height)
            .map(|level| self.bucket_index_unchecked(leaf, level))
            .collect())
    }

    /// Deepest level at which the paths to `a` and `b` share a bucket.
    ///
    /// `path(a, l) == path(b, l)` holds exactly for `l <= shared_depth(a, b)`.
    #[inline]
    pub fn shared_depth(&self, a: Leaf, b: Leaf) -> u32 {
        let differing = 64 - (a.0 ^ b.0).leading_zeros();
        self.height - differing.min(self.height)
    }

    /// Uniform leaf in `[0, 2^L)`.
    pub fn sample_leaf<R: RngCore + ?Sized>(&self, rng: &mut R) -> Leaf {
        if self.height == 0 {
            return Leaf(0);
        }
        // 2^L divides 2^64, so masking a uniform word is exactly uniform.
        Leaf(rng.next_u64() & (self.leaf_count() - 1))
    }

    /// Level of a bucket index in the heap layout.
    pub fn level_of(&self, index: u64) -> u32 {
        63 - (index + 1).leading_zeros()
    }

    /// The off-path child of the level-`level - 1` node on the path to `leaf`.
    pub(crate) fn sibling_unchecked(&self, leaf: Leaf, level: u32) -> u64 {
        let on_path = self.bucket_index_unchecked(leaf, level);
        // Children of node i are 2i+1 (odd) and 2i+2 (even).
        if on_path % 2 == 1 {
            on_path + 1
        } else {
            on_path - 1
        }
    }
}

/// `ceil(log2 n)`, with `n <= 1` mapping to 0.
pub fn default_height(capacity: u64) -> u32 {
    if capacity <= 1 {
        0
    } else {
        64 - (capacity - 1).leading_zeros()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    /// Walks from the root choosing children by the bits of `leaf`,
    /// most significant first.
    fn walk(height: u32, leaf: u64) -> Vec<u64> {
        let mut node = 0u64;
        let mut out = vec![node];
        for depth in 0..height {
            let bit = (leaf >> (height - 1 - depth)) & 1;
            node = 2 * node + 1 + bit;
            out.push(node);
        }
        out
    }

    fn geo(height: u32) -> TreeGeometry {
        TreeGeometry::new(height, 4, 16, 1).unwrap()
    }

    #[test]
    fn spot_values() {
        let g = geo(3);
        assert_eq!(g.path_bucket_index(Leaf(5), 0).unwrap(), 0);
        assert_eq!(g.path_bucket_index(Leaf(5), 3).unwrap(), 12);
        assert_eq!(g.path_bucket_index(Leaf(5), 2).unwrap(), 5);
        assert_eq!(walk(3, 5)[2], 5);

        assert_eq!(geo(1).path(Leaf(0)).unwrap(), vec![0, 1]);
        assert_eq!(geo(2).path(Leaf(3)).unwrap(), vec![0, 2, 6]);
        assert_eq!(walk(2, 3), vec![0, 2, 6]);

        let a = g.path(Leaf(0)).unwrap();
        let b = g.path(Leaf(7)).unwrap();
        let common = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
        assert_eq!(common, 1);
    }

    #[test]
    fn counts() {
        let g = geo(3);
        assert_eq!(g.leaf_count(), 8);
        assert_eq!(g.bucket_count(), 15);
        assert_eq!(geo(0).bucket_count(), 1);
    }

    #[test]
    fn closed_form_matches_traversal() {
        for height in 0..=8 {
            let g = geo(height);
            for leaf in 0..g.leaf_count() {
                assert_eq!(g.path(Leaf(leaf)).unwrap(), walk(height, leaf));
            }
        }
    }

    #[test]
    fn membership_matches_shared_prefix() {
        for height in 0..=6 {
            let g = geo(height);
            for p in 0..g.leaf_count() {
                for q in 0..g.leaf_count() {
                    let depth = g.shared_depth(Leaf(p), Leaf(q));
                    for level in 0..=height {
                        let same = g.bucket_index_unchecked(Leaf(p), level)
                            == g.bucket_index_unchecked(Leaf(q), level);
                        let top_bits_agree = (p >> (height - level)) == (q >> (height - level));
                        assert_eq!(same, top_bits_agree);
                        assert_eq!(same, level <= depth);
                    }
                }
            }
        }
    }

    #[test]
    fn coverage_of_buckets() {
        let g = geo(5);
        let mut hits = vec![0u32; g.bucket_count() as usize];
        for leaf in 0..g.leaf_count() {
            for idx in g.path(Leaf(leaf)).unwrap() {
                hits[idx as usize] += 1;
            }
        }
        for (idx, &n) in hits.iter().enumerate() {
            assert!(n >= 1);
            if g.level_of(idx as u64) == g.height() {
                assert_eq!(n, 1);
            }
        }
    }

    #[test]
    fn siblings_are_off_path_children() {
        let g = geo(4);
        for leaf in 0..g.leaf_count() {
            let path = walk(4, leaf);
            for level in 1..=4 {
                let sib = g.sibling_unchecked(Leaf(leaf), level);
                assert_ne!(sib, path[level as usize]);
                assert_eq!((sib - 1) / 2, path[level as usize - 1]);
            }
        }
    }

    #[test]
    fn range_errors() {
        let g = geo(3);
        assert!(matches!(
            g.path_bucket_index(Leaf(8), 0),
            Err(OramError::LeafOutOfRange { .. })
        ));
        assert!(matches!(
            g.path_bucket_index(Leaf(1), 4),
            Err(OramError::LevelOutOfRange { .. })
        ));
        assert!(g.path(Leaf(8)).is_err());
    }

    #[test]
    fn default_heights() {
        assert_eq!(default_height(1), 0);
        assert_eq!(default_height(2), 1);
        assert_eq!(default_height(1024), 10);
        assert_eq!(default_height(1025), 11);
    }

    #[test]
    fn sampling() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let g0 = geo(0);
        for _ in 0..100 {
            assert_eq!(g0.sample_leaf(&mut rng), Leaf(0));
        }
        let g2 = geo(2);
        let a: Vec<_> = {
            let mut r = ChaCha20Rng::seed_from_u64(9);
            (0..32).map(|_| g2.sample_leaf(&mut r)).collect()
        };
        let b: Vec<_> = {
            let mut r = ChaCha20Rng::seed_from_u64(9);
            (0..32).map(|_| g2.sample_leaf(&mut r)).collect()
        };
        assert_eq!(a, b);
        assert!(a.iter().all(|l| l.0 < 4));
    }
}
