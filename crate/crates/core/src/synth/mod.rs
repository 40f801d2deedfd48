//! Seeded generators of tagging streams with known growth behaviour.
//!
//! [`gen_zipf_stream`] and [`gen_pitman_yor_stream`] produce tag sequences
//! whose vocabulary grows as `τ^(1/α)` and `τ^d` respectively. They are
//! exponent oracles for the measurement code. [`FolksonomyGenerator`] builds
//! whole post streams (users, resources, variable post lengths) with
//! hierarchical Pitman-Yor tags.
//!
//! All generators use ChaCha8 seeded from the config, so a fixed config
//! always yields the same byte stream.

mod folksonomy;
mod py;
mod sampler;

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use folksonomy::{write_folksonomy, Census, FolksonomyGenConfig, FolksonomyGenerator, GenPost, PostLengthModel};
pub use py::{expected_tables, Restaurant, Seat};
pub use sampler::DiscreteTailSampler;

/// First timestamp of generated streams (2004-11-11 UTC); each post
/// advances the clock by one second.
pub const SYNTH_EPOCH: i64 = 1_100_131_200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("Zipf exponent {alpha} <= 1 is not normalizable without a vocabulary cap")]
    Unnormalizable { alpha: f64 },
    #[error("invalid Zipf exponent {alpha}")]
    InvalidAlpha { alpha: f64 },
    #[error("vocabulary cap must be at least 1")]
    EmptyVocabulary,
    #[error(
        "invalid Pitman-Yor parameters: discount {discount} must be in [0, 1) and strength {strength} > -discount"
    )]
    InvalidPitmanYor { discount: f64, strength: f64 },
    #[error("stream length must be at least 1")]
    EmptyStream,
    #[error("invalid folksonomy config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipfConfig {
    pub alpha: f64,
    /// Restricts ranks to `1..=cap`; `None` samples the unbounded law.
    pub vocabulary_cap: Option<u64>,
    pub seed: u64,
}

impl ZipfConfig {
    pub fn new(alpha: f64, seed: u64) -> Self {
        Self { alpha, vocabulary_cap: None, seed }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(SynthError::InvalidAlpha { alpha: self.alpha });
        }
        match self.vocabulary_cap {
            Some(0) => Err(SynthError::EmptyVocabulary),
            None if self.alpha <= 1.0 => Err(SynthError::Unnormalizable { alpha: self.alpha }),
            _ => Ok(()),
        }
    }
}

/// Ranks tabulated exactly before switching to the closed-form tail.
const ZIPF_HEAD: u64 = 4096;

/// I.i.d. Zipf ranks, `p(r) ∝ r^(-α)`, starting at 1.
#[derive(Debug, Clone)]
pub struct ZipfStream {
    sampler: DiscreteTailSampler,
    rng: ChaCha8Rng,
    remaining: u64,
}

impl Iterator for ZipfStream {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(self.sampler.sample(&mut self.rng))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = usize::try_from(self.remaining).unwrap_or(usize::MAX);
        (n, Some(n))
    }
}

pub fn gen_zipf_stream(cfg: &ZipfConfig, length: u64) -> Result<ZipfStream, SynthError> {
    cfg.validate()?;
    if length == 0 {
        return Err(SynthError::EmptyStream);
    }
    let weight = |r: u64| (r as f64).powf(-cfg.alpha);
    let sampler = match cfg.vocabulary_cap {
        Some(cap) => DiscreteTailSampler::new(&(1..=cap).map(weight).collect::<Vec<_>>(), 0.0, 0.0),
        None => DiscreteTailSampler::new(&(1..=ZIPF_HEAD).map(weight).collect::<Vec<_>>(), 1.0, cfg.alpha),
    };
    Ok(ZipfStream { sampler, rng: ChaCha8Rng::seed_from_u64(cfg.seed), remaining: length })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitmanYorParams {
    pub discount: f64,
    pub strength: f64,
}

impl PitmanYorParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let PitmanYorParams { discount, strength } = *self;
        let ok = discount.is_finite() && strength.is_finite() && (0.0..1.0).contains(&discount) && strength > -discount;
        if ok {
            Ok(())
        } else {
            Err(SynthError::InvalidPitmanYor { discount, strength })
        }
    }

    pub fn restaurant(&self) -> Restaurant {
        Restaurant::new(self.discount, self.strength)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitmanYorConfig {
    pub discount: f64,
    pub strength: f64,
    pub seed: u64,
}

impl PitmanYorConfig {
    pub fn new(discount: f64, strength: f64, seed: u64) -> Self {
        Self { discount, strength, seed }
    }

    pub fn params(&self) -> PitmanYorParams {
        PitmanYorParams { discount: self.discount, strength: self.strength }
    }
}

/// Pitman-Yor tag sequence; tag `k` is the k-th table opened (1-based).
#[derive(Debug, Clone)]
pub struct PitmanYorStream {
    restaurant: Restaurant,
    rng: ChaCha8Rng,
    remaining: u64,
}

impl PitmanYorStream {
    pub fn distinct(&self) -> u64 {
        self.restaurant.tables() as u64
    }
}

impl Iterator for PitmanYorStream {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(self.restaurant.draw(&mut self.rng) as u64 + 1)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = usize::try_from(self.remaining).unwrap_or(usize::MAX);
        (n, Some(n))
    }
}

pub fn gen_pitman_yor_stream(cfg: &PitmanYorConfig, length: u64) -> Result<PitmanYorStream, SynthError> {
    cfg.params().validate()?;
    if length == 0 {
        return Err(SynthError::EmptyStream);
    }
    Ok(PitmanYorStream {
        restaurant: cfg.params().restaurant(),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        remaining: length,
    })
}

/// Writes a tag sequence as single-tag posts by user `u1` on resource `r1`,
/// in the ingest line format.
pub fn write_stream_posts<W: Write>(tags: impl IntoIterator<Item = u64>, mut out: W) -> io::Result<()> {
    for (i, tag) in tags.into_iter().enumerate() {
        writeln!(out, "{}\tu1\tr1\t{}", SYNTH_EPOCH + i as i64, tag)?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_post_line;

    #[test]
    fn zipf_validation() {
        assert_eq!(ZipfConfig::new(1.0, 0).validate(), Err(SynthError::Unnormalizable { alpha: 1.0 }));
        assert!(ZipfConfig { alpha: 0.8, vocabulary_cap: Some(100), seed: 0 }.validate().is_ok());
        assert_eq!(
            ZipfConfig { alpha: 2.0, vocabulary_cap: Some(0), seed: 0 }.validate(),
            Err(SynthError::EmptyVocabulary)
        );
        assert!(gen_zipf_stream(&ZipfConfig::new(2.0, 0), 0).is_err());
    }

    #[test]
    fn capped_zipf_stays_in_range() {
        let cfg = ZipfConfig { alpha: 0.5, vocabulary_cap: Some(7), seed: 4 };
        assert!(gen_zipf_stream(&cfg, 10_000).unwrap().all(|r| (1..=7).contains(&r)));
    }

    #[test]
    fn streams_are_deterministic() {
        let a: Vec<u64> = gen_zipf_stream(&ZipfConfig::new(2.0, 11), 1000).unwrap().collect();
        let b: Vec<u64> = gen_zipf_stream(&ZipfConfig::new(2.0, 11), 1000).unwrap().collect();
        let c: Vec<u64> = gen_zipf_stream(&ZipfConfig::new(2.0, 12), 1000).unwrap().collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let p = PitmanYorConfig::new(0.5, 1.0, 3);
        let a: Vec<u64> = gen_pitman_yor_stream(&p, 1000).unwrap().collect();
        let b: Vec<u64> = gen_pitman_yor_stream(&p, 1000).unwrap().collect();
        assert_eq!(a, b);
    }

    #[test]
    fn pitman_yor_first_draw_is_new() {
        let mut s = gen_pitman_yor_stream(&PitmanYorConfig::new(0.8, 10.0, 0), 1).unwrap();
        assert_eq!(s.next(), Some(1));
        assert_eq!(s.distinct(), 1);
        assert_eq!(s.next(), None);
    }

    #[test]
    fn pitman_yor_validation() {
        for (d, t) in [(1.0, 1.0), (-0.1, 1.0), (0.5, -0.5), (0.5, f64::NAN)] {
            assert!(gen_pitman_yor_stream(&PitmanYorConfig::new(d, t, 0), 10).is_err(), "{d} {t}");
        }
        assert!(gen_pitman_yor_stream(&PitmanYorConfig::new(0.5, -0.4, 0), 10).is_ok());
    }

    #[test]
    fn stream_posts_parse() {
        let mut buf = Vec::new();
        write_stream_posts([3, 1, 3], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let posts: Vec<_> = text.lines().enumerate().map(|(i, l)| parse_post_line(l, i as u64 + 1).unwrap()).collect();
        assert_eq!(posts[2].tags, vec!["3"]);
        assert_eq!(posts[1].timestamp, SYNTH_EPOCH + 1);
    }
}
