use rand::Rng;

/// Outcome of one proposed Pitman-Yor seating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Seat {
    New,
    Existing(u32),
}

/// Chinese-restaurant representation of a Pitman-Yor process with O(1)
/// exact draws.
///
/// With `t` customers at `K` tables the weight `θ + t` splits into
/// `θ + dK` for a new table, `1 - d` per table, and one unit per customer
/// beyond the first at each table. `extra` lists the table of every such
/// customer, so a uniform pick from it selects a table with weight
/// `n_j - 1`, and table `j` ends up with the required `n_j - d`.
#[derive(Debug, Clone)]
pub struct Restaurant {
    discount: f64,
    strength: f64,
    tables: u32,
    extra: Vec<u32>,
}

impl Restaurant {
    pub fn new(discount: f64, strength: f64) -> Self {
        Self { discount, strength, tables: 0, extra: Vec::new() }
    }

    pub fn tables(&self) -> u32 {
        self.tables
    }

    pub fn customers(&self) -> u64 {
        self.tables as u64 + self.extra.len() as u64
    }

    /// Draws a seat without changing the state.
    pub fn propose<R: Rng + ?Sized>(&self, rng: &mut R) -> Seat {
        if self.tables == 0 {
            return Seat::New;
        }
        let k = self.tables as f64;
        let new_weight = self.strength + self.discount * k;
        let u = rng.gen::<f64>() * (self.strength + self.customers() as f64);
        if u < new_weight {
            return Seat::New;
        }
        let v = u - new_weight;
        let spread = k * (1.0 - self.discount);
        if v < spread || self.extra.is_empty() {
            let j = (v / (1.0 - self.discount)) as u32;
            Seat::Existing(j.min(self.tables - 1))
        } else {
            let i = (v - spread) as usize;
            Seat::Existing(self.extra[i.min(self.extra.len() - 1)])
        }
    }

    /// Records a seating; returns the table index.
    pub fn commit(&mut self, seat: Seat) -> u32 {
        match seat {
            Seat::New => {
                self.tables += 1;
                self.tables - 1
            }
            Seat::Existing(j) => {
                self.extra.push(j);
                j
            }
        }
    }

    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> u32 {
        let seat = self.propose(rng);
        self.commit(seat)
    }
}

/// `E[K_n]` for a Pitman-Yor process, from the recursion
/// `E[K_{t+1}] = E[K_t] + (θ + d E[K_t]) / (θ + t)`.
pub fn expected_tables(discount: f64, strength: f64, n: u64) -> f64 {
    let mut k = 0.0;
    for t in 0..n {
        k += if t == 0 { 1.0 } else { (strength + discount * k) / (strength + t as f64) };
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn table_sizes_follow_seating_weights() {
        // two tables of sizes 1 and 3: weights θ + 2d, 1 - d, 3 - d
        let (d, theta) = (0.5, 1.0);
        let mut r = Restaurant::new(d, theta);
        r.commit(Seat::New);
        r.commit(Seat::New);
        r.commit(Seat::Existing(1));
        r.commit(Seat::Existing(1));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0u32; 3];
        let n = 200_000;
        for _ in 0..n {
            match r.propose(&mut rng) {
                Seat::New => counts[0] += 1,
                Seat::Existing(j) => counts[1 + j as usize] += 1,
            }
        }
        let total = theta + 4.0;
        let expect = [(theta + 2.0 * d) / total, (1.0 - d) / total, (3.0 - d) / total];
        for i in 0..3 {
            assert!((counts[i] as f64 / n as f64 - expect[i]).abs() < 0.005, "{counts:?}");
        }
    }

    #[test]
    fn expected_tables_small_cases() {
        assert_eq!(expected_tables(0.3, 2.0, 1), 1.0);
        // second draw is new with probability (θ + d) / (θ + 1)
        assert!((expected_tables(0.3, 2.0, 2) - (1.0 + 2.3 / 3.0)).abs() < 1e-12);
    }
}
