//! Computations shared by the single-purpose subcommands and `report`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use tagvocab::fit::{
    default_gamma_edges, default_regression_window, endpoint_exponent, gaussian_fit, loglog_regression_exponent,
    FitError, GaussianFit,
};
use tagvocab::io::{write_histogram, ExponentRow};
use tagvocab::stats::{post_length_distribution, tail_exponent, PostLengthDistribution, TailFit};
use tagvocab::{GrowthCurve, Histogram64};

use crate::args::Range;
use crate::error::Result;

/// Tallies post lengths from the post ordinals of consecutive records.
#[derive(Debug, Default)]
pub struct PostLengthCounter {
    freq: Vec<u64>,
    last: Option<u64>,
    current: u64,
}

impl PostLengthCounter {
    pub fn observe(&mut self, post: u64) {
        if self.last != Some(post) {
            self.flush();
            self.last = Some(post);
        }
        self.current += 1;
    }

    fn flush(&mut self) {
        if self.current > 0 {
            let n = self.current as usize;
            if self.freq.len() <= n {
                self.freq.resize(n + 1, 0);
            }
            self.freq[n] += 1;
            self.current = 0;
        }
    }

    pub fn distribution(mut self) -> Result<PostLengthDistribution<f64>> {
        self.flush();
        let freq = self.freq;
        let lengths = freq.iter().enumerate().flat_map(|(n, &c)| std::iter::repeat_n(n as u64, c as usize));
        Ok(post_length_distribution(lengths)?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PostLengthReport {
    pub posts: u64,
    pub mean: f64,
    pub max_length: u64,
    pub n_min: u64,
    pub tail: Option<TailFit<f64>>,
    pub tail_error: Option<String>,
}

impl PostLengthReport {
    pub fn new(d: &PostLengthDistribution<f64>, n_min: u64) -> Self {
        let (tail, tail_error) = match tail_exponent(&d.log_binned, n_min as f64) {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let max_length = d.unit.edges().last().map_or(0, |&e| e as u64 - 1);
        Self { posts: d.posts, mean: d.mean, max_length, n_min, tail, tail_error }
    }
}

/// Log-log ready: empty bins are left out.
pub fn write_post_lengths<W: Write + ?Sized>(
    out: &mut W,
    d: &PostLengthDistribution<f64>,
    log_binned: bool,
) -> Result<()> {
    if log_binned {
        write_histogram(out, d.log_binned.histogram(), true)?;
    } else {
        write_histogram(out, &d.unit, true)?;
    }
    Ok(())
}

/// Endpoint exponent for every curve with `τ_max >= 2`, plus the log-log
/// regression over `window` (default: last two decades) where there are
/// enough samples. Curves without an exponent are returned by label.
pub fn exponent_rows(curves: &[(String, GrowthCurve)], window: Option<Range>) -> (Vec<ExponentRow<f64>>, Vec<String>) {
    let rows: Vec<Option<ExponentRow<f64>>> = curves
        .par_iter()
        .map(|(id, c)| {
            let endpoint = endpoint_exponent::<f64, _>(c).ok()?;
            let w = window.map_or_else(|| default_regression_window(c.tau_max), |r| (r.0, r.1));
            let regression = loglog_regression_exponent::<f64, _>(c, w).ok();
            Some(ExponentRow { id: id.clone(), endpoint, regression })
        })
        .collect();
    let mut out = Vec::new();
    let mut undefined = Vec::new();
    for (row, (id, _)) in rows.into_iter().zip(curves) {
        match row {
            Some(r) => out.push(r),
            None => undefined.push(id.clone()),
        }
    }
    (out, undefined)
}

/// Shape of one `P(γ)` population.
#[derive(Debug, Clone, Serialize)]
pub struct PGammaSummary {
    pub entities: usize,
    pub mean_gamma: f64,
    /// Center of the most populated bin.
    pub peak: Option<f64>,
    pub above_one: usize,
    pub gaussian: Option<GaussianFit<f64>>,
    pub gaussian_error: Option<String>,
    /// Converged with a residual under the limit.
    pub gaussian_ok: bool,
}

pub fn pgamma(gammas: &[f64]) -> Result<(Histogram64, PGammaSummary)> {
    let hist = Histogram64::from_samples(default_gamma_edges(), gammas.iter().copied())?;
    let (gaussian, gaussian_error, gaussian_ok) = match gaussian_fit(&hist) {
        Ok(g) => (Some(g), None, !g.high_residual),
        Err(FitError::NoConvergence { iterations, fallback }) => {
            (Some(fallback), Some(format!("no convergence after {iterations} iterations")), false)
        }
        Err(e) => (None, Some(e.to_string()), false),
    };
    let mean_gamma = if gammas.is_empty() { f64::NAN } else { gammas.iter().sum::<f64>() / gammas.len() as f64 };
    let summary = PGammaSummary {
        entities: gammas.len(),
        mean_gamma,
        peak: hist.mode_bin().map(|i| hist.center(i)),
        above_one: gammas.iter().filter(|&&g| g > 1.0).count(),
        gaussian,
        gaussian_error,
        gaussian_ok,
    };
    Ok((hist, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tagvocab::ContextSelector;

    #[test]
    fn post_lengths_from_ordinals() {
        let mut c = PostLengthCounter::default();
        for p in [0, 0, 1, 1, 1, 2] {
            c.observe(p);
        }
        let d = c.distribution().unwrap();
        assert_eq!(d.posts, 3);
        assert!((d.mean - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rows_skip_single_assignment_curves() {
        let a = GrowthCurve::from_samples(ContextSelector::Global, vec![(1, 1)]).unwrap();
        let b = GrowthCurve::from_samples(ContextSelector::Global, vec![(1, 1), (4, 2)]).unwrap();
        let (rows, undefined) = exponent_rows(&[("a".into(), a), ("b".into(), b)], None);
        assert_eq!(undefined, ["a"]);
        assert_eq!(rows.len(), 1);
        assert!((rows[0].endpoint.gamma - 0.5).abs() < 1e-12);
        assert!(rows[0].regression.is_none());
    }
}
