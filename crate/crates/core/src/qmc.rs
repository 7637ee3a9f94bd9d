//! Owen-scrambled Sobol points in a box.
//!
//! The underlying generator yields at most 2^16 points per scramble seed, so
//! longer sequences are stitched together from consecutive scramble seeds.

use crate::problems::Bounds;

const BLOCK: u64 = 1 << 16;

/// A seeded low-discrepancy sequence over `bounds`.
#[derive(Debug, Clone)]
pub struct SobolSequence {
    bounds: Vec<Bounds>,
    seed: u32,
}

impl SobolSequence {
    pub fn new(bounds: &[Bounds], seed: u64) -> Self {
        Self {
            bounds: bounds.to_vec(),
            seed: (seed ^ (seed >> 32)) as u32,
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// The `index`-th point of the sequence.
    pub fn point(&self, index: u64) -> Vec<f64> {
        let block = (index / BLOCK) as u32;
        let i = (index % BLOCK) as u32;
        let seed = self.seed.wrapping_add(block.wrapping_mul(0x9E37_79B9));
        self.bounds
            .iter()
            .enumerate()
            .map(|(d, b)| {
                let u = sobol_burley::sample(i, d as u32, seed) as f64;
                b.lower + u * (b.upper - b.lower)
            })
            .collect()
    }

    /// Points `start..start + count`.
    pub fn points(&self, start: u64, count: usize) -> Vec<Vec<f64>> {
        (start..start + count as u64).map(|i| self.point(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_stay_in_bounds_and_are_seeded() {
        let b = vec![Bounds::new(-3.0, 3.0), Bounds::new(1.0, 5.0)];
        let s = SobolSequence::new(&b, 11);
        for p in s.points(0, 500) {
            assert!(p[0] >= -3.0 && p[0] <= 3.0);
            assert!(p[1] >= 1.0 && p[1] <= 5.0);
        }
        let other = SobolSequence::new(&b, 12);
        assert_ne!(s.point(3), other.point(3));
        assert_eq!(s.point(3), SobolSequence::new(&b, 11).point(3));
    }

    #[test]
    fn crosses_block_boundary() {
        let b = vec![Bounds::new(0.0, 1.0)];
        let s = SobolSequence::new(&b, 0);
        assert_ne!(s.point(BLOCK - 1), s.point(BLOCK));
        assert_ne!(s.point(0), s.point(BLOCK));
    }
}
