//! Empirical distributions: linear and log-binned histograms, the post-length
//! distribution `P(n)` and least-squares tail slopes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fit::linear_fit;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("invalid bin edges: {0}")]
    InvalidEdges(String),
    #[error("empty input")]
    EmptyInput,
    #[error("post length 0 in a cleaned stream")]
    ZeroLength,
    #[error("histograms have different bin edges")]
    EdgeMismatch,
    #[error("empty tail: no counts at or above {n_min}")]
    EmptyTail { n_min: f64 },
    #[error("too few non-empty tail bins: found {found}, need {needed}")]
    TooFewBins { found: usize, needed: usize },
}

/// Counts over half-open bins `[e_i, e_{i+1})`; the last bin also holds its
/// right edge. Values outside the edges are tallied in `excluded`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram<T> {
    edges: Vec<T>,
    counts: Vec<u64>,
    total: u64,
    excluded: u64,
    /// Bins hold integers; a bin `[a, b)` covers `b - a` integer values.
    discrete: bool,
}

impl<T: Scalar> Histogram<T> {
    pub fn with_edges(edges: Vec<T>) -> Result<Self, StatsError> {
        if edges.len() < 2 {
            return Err(StatsError::InvalidEdges("need at least two edges".into()));
        }
        if edges.iter().any(|e| !e.is_finite()) {
            return Err(StatsError::InvalidEdges("non-finite edge".into()));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(StatsError::InvalidEdges("edges must be strictly increasing".into()));
        }
        let bins = edges.len() - 1;
        Ok(Self { edges, counts: vec![0; bins], total: 0, excluded: 0, discrete: false })
    }

    pub fn uniform(lo: T, hi: T, bins: usize) -> Result<Self, StatsError> {
        if bins == 0 || !(hi > lo) {
            return Err(StatsError::InvalidEdges(format!("uniform range [{lo}, {hi}] with {bins} bins")));
        }
        let width = (hi - lo) / T::of_u64(bins as u64);
        let mut edges: Vec<T> = (0..bins).map(|i| lo + width * T::of_u64(i as u64)).collect();
        edges.push(hi);
        Self::with_edges(edges)
    }

    /// Unit-width bins for the integers `lo..=hi`.
    pub fn unit_integer(lo: u64, hi: u64) -> Result<Self, StatsError> {
        if hi < lo {
            return Err(StatsError::InvalidEdges(format!("integer range {lo}..={hi}")));
        }
        let mut h = Self::with_edges((lo..=hi + 1).map(T::of_u64).collect())?;
        h.discrete = true;
        Ok(h)
    }

    pub fn from_samples<I: IntoIterator<Item = T>>(edges: Vec<T>, samples: I) -> Result<Self, StatsError> {
        let mut h = Self::with_edges(edges)?;
        for x in samples {
            h.add(x);
        }
        Ok(h)
    }

    pub fn bin_of(&self, x: T) -> Option<usize> {
        let last = *self.edges.last().unwrap();
        if x.is_nan() || x < self.edges[0] || x > last {
            return None;
        }
        if x == last {
            return Some(self.counts.len() - 1);
        }
        Some(self.edges.partition_point(|&e| e <= x) - 1)
    }

    /// Adds one observation; returns `false` if it fell outside the edges.
    pub fn add(&mut self, x: T) -> bool {
        self.add_count(x, 1)
    }

    pub fn add_count(&mut self, x: T, n: u64) -> bool {
        match self.bin_of(x) {
            Some(i) => {
                self.counts[i] += n;
                self.total += n;
                true
            }
            None => {
                self.excluded += n;
                false
            }
        }
    }

    /// Bin-wise sum; edges must be identical.
    pub fn merge(&mut self, other: &Self) -> Result<(), StatsError> {
        if self.edges != other.edges {
            return Err(StatsError::EdgeMismatch);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        self.excluded += other.excluded;
        Ok(())
    }

    pub fn edges(&self) -> &[T] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn excluded(&self) -> u64 {
        self.excluded
    }

    pub fn is_discrete(&self) -> bool {
        self.discrete
    }

    pub fn width(&self, i: usize) -> T {
        self.edges[i + 1] - self.edges[i]
    }

    pub fn center(&self, i: usize) -> T {
        (self.edges[i] + self.edges[i + 1]) / T::of_f64(2.0)
    }

    /// Value a bin stands for: its integer for unit integer bins, the
    /// midpoint otherwise.
    pub fn representative(&self, i: usize) -> T {
        if self.discrete && self.width(i) == T::one() {
            self.edges[i]
        } else {
            self.center(i)
        }
    }

    pub fn probability(&self, i: usize) -> T {
        if self.total == 0 {
            return T::zero();
        }
        T::of_u64(self.counts[i]) / T::of_u64(self.total)
    }

    /// `count / (total * width)`; zero for an empty histogram.
    pub fn density(&self, i: usize) -> T {
        if self.total == 0 {
            return T::zero();
        }
        T::of_u64(self.counts[i]) / (T::of_u64(self.total) * self.width(i))
    }

    pub fn densities(&self) -> Vec<T> {
        (0..self.bins()).map(|i| self.density(i)).collect()
    }

    pub fn mean(&self) -> Option<T> {
        if self.total == 0 {
            return None;
        }
        let s = (0..self.bins()).fold(T::zero(), |acc, i| acc + T::of_u64(self.counts[i]) * self.representative(i));
        Some(s / T::of_u64(self.total))
    }

    pub fn non_empty_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Index of the bin with the highest density (first on ties).
    pub fn mode_bin(&self) -> Option<usize> {
        if self.total == 0 {
            return None;
        }
        let d = self.densities();
        let mut best = 0;
        for i in 1..d.len() {
            if d[i] > d[best] {
                best = i;
            }
        }
        Some(best)
    }
}

/// Histogram with geometrically growing bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogBinnedHistogram<T> {
    hist: Histogram<T>,
    bins_per_decade: u32,
}

impl<T: Scalar> LogBinnedHistogram<T> {
    /// Edges `lo * 10^(k / bins_per_decade)` up to the first edge `>= hi`;
    /// the ratio between consecutive edges is constant.
    pub fn geometric(lo: T, hi: T, bins_per_decade: u32) -> Result<Self, StatsError> {
        if !(lo > T::zero()) || !(hi > lo) || bins_per_decade == 0 {
            return Err(StatsError::InvalidEdges(format!("log range [{lo}, {hi}] with {bins_per_decade} bins/decade")));
        }
        let ratio = T::of_f64(10f64.powf(1.0 / bins_per_decade as f64));
        let mut edges = vec![lo];
        let mut k = 0u64;
        while *edges.last().unwrap() < hi {
            k += 1;
            let e = lo * ratio.powf(T::of_u64(k));
            edges.push(e);
        }
        Ok(Self { hist: Histogram::with_edges(edges)?, bins_per_decade })
    }

    /// Integer-aligned log bins covering `1..=max`: edges are
    /// `round(10^(k / bins_per_decade))` with duplicates removed, so small
    /// values get unit bins and the ratio is constant up to rounding.
    pub fn integer(max: u64, bins_per_decade: u32) -> Result<Self, StatsError> {
        if bins_per_decade == 0 || max == 0 {
            return Err(StatsError::InvalidEdges(format!(
                "integer log bins up to {max} with {bins_per_decade} bins/decade"
            )));
        }
        let mut edges: Vec<u64> = vec![1];
        let mut k = 0u32;
        loop {
            k += 1;
            let e = 10f64.powf(k as f64 / bins_per_decade as f64).round() as u64;
            if e > max {
                break;
            }
            if e > *edges.last().unwrap() {
                edges.push(e);
            }
        }
        // the last bin is cut at max so its width counts only integers in range
        edges.push(max + 1);
        let mut hist = Histogram::with_edges(edges.into_iter().map(T::of_u64).collect())?;
        hist.discrete = true;
        Ok(Self { hist, bins_per_decade })
    }

    pub fn histogram(&self) -> &Histogram<T> {
        &self.hist
    }

    pub fn bins_per_decade(&self) -> u32 {
        self.bins_per_decade
    }

    pub fn add(&mut self, x: T) -> bool {
        self.hist.add(x)
    }

    pub fn add_count(&mut self, x: T, n: u64) -> bool {
        self.hist.add_count(x, n)
    }

    pub fn merge(&mut self, other: &Self) -> Result<(), StatsError> {
        self.hist.merge(&other.hist)
    }

    /// Geometric centre of a bin; for integer bins `[a, b)` the geometric
    /// mean of `a` and `b - 1`.
    pub fn representative(&self, i: usize) -> T {
        let e = self.hist.edges();
        if self.hist.discrete {
            (e[i] * (e[i + 1] - T::one())).sqrt()
        } else {
            (e[i] * e[i + 1]).sqrt()
        }
    }
}

/// Least-squares slope of log-density against log-value over a tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit<T> {
    pub slope: T,
    pub intercept: T,
    /// RMS residual in log10 units.
    pub residual: T,
    pub bins_used: usize,
    pub n_min: T,
    /// A normalizable power-law tail needs a slope below -1.
    pub heavy_tailed: bool,
}

pub const MIN_TAIL_BINS: usize = 5;
/// Default minimum count for a tail bin to enter the fit.
pub const MIN_TAIL_COUNT: u64 = 10;

/// [`tail_exponent_with`] using [`MIN_TAIL_COUNT`].
pub fn tail_exponent<T: Scalar>(hist: &LogBinnedHistogram<T>, n_min: T) -> Result<TailFit<T>, StatsError> {
    tail_exponent_with(hist, n_min, MIN_TAIL_COUNT)
}

/// Fits `log10 density = intercept + slope * log10 n` over the bins whose
/// left edge is at least `n_min`, up to the first bin holding fewer than
/// `min_count` observations.
///
/// Stopping there keeps the sparse far end out of the fit: only the lucky
/// non-empty bins survive at low counts, which flattens the slope.
pub fn tail_exponent_with<T: Scalar>(
    hist: &LogBinnedHistogram<T>,
    n_min: T,
    min_count: u64,
) -> Result<TailFit<T>, StatsError> {
    let h = hist.histogram();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut tail_total = 0u64;
    let mut open = true;
    for i in 0..h.bins() {
        if h.edges()[i] < n_min {
            continue;
        }
        let c = h.counts()[i];
        tail_total += c;
        open &= c >= min_count.max(1);
        if open {
            xs.push(hist.representative(i).log10());
            ys.push(h.density(i).log10());
        }
    }
    if tail_total == 0 {
        return Err(StatsError::EmptyTail { n_min: n_min.as_f64() });
    }
    if xs.len() < MIN_TAIL_BINS {
        return Err(StatsError::TooFewBins { found: xs.len(), needed: MIN_TAIL_BINS });
    }
    let line = linear_fit(&xs, &ys).expect("at least five distinct points");
    Ok(TailFit {
        slope: line.slope,
        intercept: line.intercept,
        residual: line.residual,
        bins_used: xs.len(),
        n_min,
        heavy_tailed: line.slope < -T::one(),
    })
}

/// `P(n)` of post lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostLengthDistribution<T> {
    /// Unit bins for every length from 1 to the longest post.
    pub unit: Histogram<T>,
    /// Integer log bins, for the tail.
    pub log_binned: LogBinnedHistogram<T>,
    pub mean: T,
    pub posts: u64,
}

pub const DEFAULT_TAIL_BINS_PER_DECADE: u32 = 10;

pub fn post_length_distribution<T, I>(lengths: I) -> Result<PostLengthDistribution<T>, StatsError>
where
    T: Scalar,
    I: IntoIterator<Item = u64>,
{
    let mut freq: Vec<u64> = Vec::new();
    let mut sum: u128 = 0;
    let mut posts = 0u64;
    for n in lengths {
        if n == 0 {
            return Err(StatsError::ZeroLength);
        }
        let n_us = n as usize;
        if freq.len() <= n_us {
            freq.resize(n_us + 1, 0);
        }
        freq[n_us] += 1;
        sum += n as u128;
        posts += 1;
    }
    if posts == 0 {
        return Err(StatsError::EmptyInput);
    }
    let max = (freq.len() - 1) as u64;
    let mut unit = Histogram::unit_integer(1, max)?;
    let mut log_binned = LogBinnedHistogram::integer(max, DEFAULT_TAIL_BINS_PER_DECADE)?;
    for (n, &c) in freq.iter().enumerate().skip(1) {
        if c > 0 {
            unit.add_count(T::of_u64(n as u64), c);
            log_binned.add_count(T::of_u64(n as u64), c);
        }
    }
    // exact mean: integer sum divided once
    let mean = T::of_f64(sum as f64 / posts as f64);
    Ok(PostLengthDistribution { unit, log_binned, mean, posts })
}
