use rand::Rng;

/// Sampler for a law on `1, 2, ...` given by explicit weights for the first
/// `K` values and a power tail `coef * n^(-exponent)` beyond them.
///
/// The head is inverted exactly from a cumulative table. The tail uses the
/// midpoint approximation `Σ_{m >= n} m^(-a) ≈ (n - 1/2)^(1-a) / (a - 1)`,
/// which inverts in closed form.
#[derive(Debug, Clone)]
pub struct DiscreteTailSampler {
    cumulative: Vec<f64>,
    tail_coef: f64,
    tail_exponent: f64,
    tail_mass: f64,
    total: f64,
}

impl DiscreteTailSampler {
    /// `head[i]` is the weight of value `i + 1`. A zero `tail_coef` gives a
    /// finite law on `1..=head.len()`.
    pub fn new(head: &[f64], tail_coef: f64, tail_exponent: f64) -> Self {
        let mut acc = 0.0;
        let cumulative: Vec<f64> = head
            .iter()
            .map(|&w| {
                acc += w;
                acc
            })
            .collect();
        let k = head.len() as f64;
        let tail_mass =
            if tail_coef > 0.0 { tail_coef * (k + 0.5).powf(1.0 - tail_exponent) / (tail_exponent - 1.0) } else { 0.0 };
        Self { total: acc + tail_mass, cumulative, tail_coef, tail_exponent, tail_mass }
    }

    /// Unnormalized weight of the whole tail beyond the head.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn total_weight(&self) -> f64 {
        self.total
    }

    pub fn head_len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u = rng.gen::<f64>() * self.total;
        let head = self.cumulative.last().copied().unwrap_or(0.0);
        if u < head || self.tail_mass == 0.0 {
            let i = self.cumulative.partition_point(|&c| c <= u);
            return (i.min(self.cumulative.len() - 1) + 1) as u64;
        }
        // remaining tail weight, in (0, tail_mass]
        let w = (self.total - u).max(f64::MIN_POSITIVE) / self.tail_coef;
        let a = self.tail_exponent;
        let x = ((a - 1.0) * w).powf(-1.0 / (a - 1.0));
        let r = (x + 0.5).floor();
        let k = self.cumulative.len() as u64;
        if r.is_finite() && r < u64::MAX as f64 {
            (r as u64).max(k + 1)
        } else {
            u64::MAX
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn finite_law_frequencies() {
        let s = DiscreteTailSampler::new(&[1.0, 2.0, 1.0], 0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0u32; 3];
        for _ in 0..40_000 {
            counts[s.sample(&mut rng) as usize - 1] += 1;
        }
        assert!((counts[1] as f64 / 40_000.0 - 0.5).abs() < 0.01, "{counts:?}");
        assert!((counts[0] as f64 / 40_000.0 - 0.25).abs() < 0.01, "{counts:?}");
    }

    #[test]
    fn tail_starts_after_head() {
        let head: Vec<f64> = (1..=4).map(|r| (r as f64).powf(-1.5)).collect();
        let s = DiscreteTailSampler::new(&head, 1.0, 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws: Vec<u64> = (0..10_000).map(|_| s.sample(&mut rng)).collect();
        assert!(draws.iter().all(|&d| d >= 1));
        let tail = draws.iter().filter(|&&d| d > 4).count() as f64 / 10_000.0;
        let expect = s.tail_mass() / s.total_weight();
        assert!((tail - expect).abs() < 0.02, "{tail} vs {expect}");
    }
}
