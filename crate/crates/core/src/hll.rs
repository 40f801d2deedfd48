use std::hash::{Hash, Hasher};

use rustc_hash::FxHasher;

/// HyperLogLog cardinality sketch used by the approximate counting mode.
#[derive(Debug, Clone)]
pub(crate) struct HyperLogLog {
    precision: u8,
    registers: Vec<u8>,
}

impl HyperLogLog {
    pub(crate) const MIN_PRECISION: u8 = 4;
    pub(crate) const MAX_PRECISION: u8 = 18;

    pub(crate) fn new(precision: u8) -> Self {
        let precision = precision.clamp(Self::MIN_PRECISION, Self::MAX_PRECISION);
        Self { precision, registers: vec![0; 1 << precision] }
    }

    /// Relative standard error of the estimate, `1.04 / sqrt(m)`.
    pub(crate) fn relative_standard_error(precision: u8) -> f64 {
        let p = precision.clamp(Self::MIN_PRECISION, Self::MAX_PRECISION);
        1.04 / ((1u64 << p) as f64).sqrt()
    }

    pub(crate) fn precision(&self) -> u8 {
        self.precision
    }

    pub(crate) fn insert<Q: Hash + ?Sized>(&mut self, item: &Q) {
        let mut h = FxHasher::default();
        item.hash(&mut h);
        let x = mix64(h.finish());
        let p = self.precision as u32;
        let idx = (x >> (64 - p)) as usize;
        let rest = (x << p) | (1 << (p - 1));
        let rank = rest.leading_zeros() as u8 + 1;
        if rank > self.registers[idx] {
            self.registers[idx] = rank;
        }
    }

    pub(crate) fn estimate(&self) -> f64 {
        let m = self.registers.len() as f64;
        let alpha = match self.registers.len() {
            16 => 0.673,
            32 => 0.697,
            64 => 0.709,
            _ => 0.7213 / (1.0 + 1.079 / m),
        };
        let mut sum = 0.0;
        let mut zeros = 0usize;
        for &r in &self.registers {
            sum += (-(r as f64)).exp2();
            if r == 0 {
                zeros += 1;
            }
        }
        let raw = alpha * m * m / sum;
        if raw <= 2.5 * m && zeros > 0 {
            m * (m / zeros as f64).ln()
        } else {
            raw
        }
    }
}

// splitmix64 finalizer; FxHash alone has weak high bits.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_within_a_few_standard_errors() {
        for &n in &[100u64, 10_000, 1_000_000] {
            let mut hll = HyperLogLog::new(14);
            for i in 0..n {
                hll.insert(&i);
                hll.insert(&i);
            }
            let rel = (hll.estimate() - n as f64).abs() / n as f64;
            assert!(rel < 4.0 * HyperLogLog::relative_standard_error(14), "n={n} rel={rel}");
        }
    }
}
