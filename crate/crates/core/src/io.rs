//! TSV artifacts: growth curves, user accumulation, histograms, exponent
//! tables and collapse plots. Every file starts with a header row.

use std::fmt::Display;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::fit::{ExponentEstimate, RescaledCurve};
use crate::growth::{GrowthCurve, UserAccumulationCurve};
use crate::scalar::Scalar;
use crate::stats::Histogram;

pub const CURVE_HEADER: &str = "tau\tn_distinct";
pub const CONTEXT_CURVE_HEADER: &str = "context\ttau\tn_distinct";
pub const USERS_HEADER: &str = "tau\tusers";
pub const HISTOGRAM_HEADER: &str = "bin_left\tbin_right\tcount\tdensity";
pub const EXPONENTS_HEADER: &str = "id\ttau_max\tn_final\tgamma_endpoint\tgamma_regression\tresidual";
pub const COLLAPSE_HEADER: &str = "x\ty";

/// Placeholder for a value that could not be computed.
pub const MISSING: &str = "NA";

#[derive(Debug, Error)]
pub enum TsvError {
    #[error("line {line}: {reason}")]
    Format { line: u64, reason: String },
    #[error("no header row")]
    MissingHeader,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_curve<W: Write + ?Sized, Id>(out: &mut W, curve: &GrowthCurve<Id>) -> io::Result<()> {
    writeln!(out, "{CURVE_HEADER}")?;
    for (tau, n) in &curve.samples {
        writeln!(out, "{tau}\t{n}")?;
    }
    Ok(())
}

/// Several curves in one table, tagged with a context label such as
/// `resource:r12`.
pub fn write_context_curves<'a, W: Write + ?Sized, Id: 'a + Display>(
    out: &mut W,
    curves: impl IntoIterator<Item = &'a GrowthCurve<Id>>,
) -> io::Result<()> {
    writeln!(out, "{CONTEXT_CURVE_HEADER}")?;
    for c in curves {
        let label = context_label(c);
        for (tau, n) in &c.samples {
            writeln!(out, "{label}\t{tau}\t{n}")?;
        }
    }
    Ok(())
}

pub fn context_label<Id: Display>(curve: &GrowthCurve<Id>) -> String {
    match (curve.context.kind(), curve.context.id()) {
        (Some(kind), Some(id)) => format!("{kind}:{id}"),
        _ => "global".to_string(),
    }
}

/// A curve label with its `(τ, N)` samples.
pub type LabeledSamples = (String, Vec<(u64, u64)>);

/// Reads a curve table written by [`write_curve`] or
/// [`write_context_curves`]; single-curve tables get the label `global`.
pub fn read_curves<R: BufRead>(input: R) -> Result<Vec<LabeledSamples>, TsvError> {
    let mut lines = input.lines();
    let header = lines.next().ok_or(TsvError::MissingHeader)??;
    let with_context = match header.trim_end_matches('\r') {
        CURVE_HEADER => false,
        CONTEXT_CURVE_HEADER => true,
        other => {
            return Err(TsvError::Format { line: 1, reason: format!("unexpected header {other:?}") });
        }
    };
    let mut curves: Vec<(String, Vec<(u64, u64)>)> = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line_no = i as u64 + 2;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let (label, rest) = match (with_context, fields.as_slice()) {
            (false, [t, n]) => ("global", [*t, *n]),
            (true, [c, t, n]) => (*c, [*t, *n]),
            _ => {
                return Err(TsvError::Format {
                    line: line_no,
                    reason: format!("expected {} fields", 2 + with_context as usize),
                });
            }
        };
        let parse = |s: &str| {
            s.parse::<u64>().map_err(|_| TsvError::Format { line: line_no, reason: format!("bad integer {s:?}") })
        };
        let sample = (parse(rest[0])?, parse(rest[1])?);
        match curves.last_mut() {
            Some((l, samples)) if l == label => samples.push(sample),
            _ => curves.push((label.to_string(), vec![sample])),
        }
    }
    Ok(curves)
}

pub fn write_user_curve<W: Write + ?Sized, Id>(out: &mut W, curve: &UserAccumulationCurve<Id>) -> io::Result<()> {
    writeln!(out, "{USERS_HEADER}")?;
    for (tau, u) in &curve.samples {
        writeln!(out, "{tau}\t{u}")?;
    }
    Ok(())
}

/// With `skip_empty`, empty bins are left out so log-scale plots see no
/// zero densities.
pub fn write_histogram<W: Write + ?Sized, T: Scalar>(
    out: &mut W,
    hist: &Histogram<T>,
    skip_empty: bool,
) -> io::Result<()> {
    writeln!(out, "{HISTOGRAM_HEADER}")?;
    for i in 0..hist.bins() {
        let count = hist.counts()[i];
        if skip_empty && count == 0 {
            continue;
        }
        let e = hist.edges();
        writeln!(out, "{}\t{}\t{}\t{}", e[i], e[i + 1], count, hist.density(i))?;
    }
    Ok(())
}

/// One row of an exponent table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentRow<T> {
    pub id: String,
    pub endpoint: ExponentEstimate<T>,
    pub regression: Option<ExponentEstimate<T>>,
}

pub fn write_exponents<W: Write + ?Sized, T: Scalar>(out: &mut W, rows: &[ExponentRow<T>]) -> io::Result<()> {
    writeln!(out, "{EXPONENTS_HEADER}")?;
    for r in rows {
        let (g, res) = match &r.regression {
            Some(e) => (e.gamma.to_string(), e.residual.map_or(MISSING.to_string(), |x| x.to_string())),
            None => (MISSING.to_string(), MISSING.to_string()),
        };
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.id, r.endpoint.tau_max, r.endpoint.n_final, r.endpoint.gamma, g, res
        )?;
    }
    Ok(())
}

pub fn write_collapse<W: Write + ?Sized, T: Scalar>(out: &mut W, curve: &RescaledCurve<T>) -> io::Result<()> {
    writeln!(out, "{COLLAPSE_HEADER}")?;
    for (x, y) in &curve.samples {
        writeln!(out, "{x}\t{y}")?;
    }
    Ok(())
}

/// `[A-Za-z0-9._-]` rendering of an id for use in file names; other
/// characters become `_`.
pub fn file_stem(id: &str) -> String {
    let s: String =
        id.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' }).collect();
    if s.is_empty() || s.starts_with('.') {
        format!("_{s}")
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::{endpoint_exponent, rescale_curve};
    use crate::growth::ContextSelector;

    #[test]
    fn curve_round_trip() {
        let c: GrowthCurve =
            GrowthCurve::from_samples(ContextSelector::Global, vec![(1, 1), (2, 2), (3, 2), (4, 3)]).unwrap();
        let mut buf = Vec::new();
        write_curve(&mut buf, &c).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "tau\tn_distinct\n1\t1\n2\t2\n3\t2\n4\t3\n");
        let back = read_curves(&buf[..]).unwrap();
        assert_eq!(back, vec![("global".to_string(), c.samples.clone())]);
    }

    #[test]
    fn context_curves_round_trip() {
        let a = GrowthCurve::from_samples(ContextSelector::resource("r1".to_string()), vec![(1, 1), (2, 2)]).unwrap();
        let b = GrowthCurve::from_samples(ContextSelector::user("u 7".to_string()), vec![(1, 1), (5, 1)]).unwrap();
        let mut buf = Vec::new();
        write_context_curves(&mut buf, [&a, &b]).unwrap();
        let back = read_curves(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0, "resource:r1");
        assert_eq!(back[1], ("user:u 7".to_string(), vec![(1, 1), (5, 1)]));
    }

    #[test]
    fn read_rejects_garbage() {
        assert!(matches!(read_curves(&b""[..]), Err(TsvError::MissingHeader)));
        assert!(matches!(read_curves(&b"a\tb\n"[..]), Err(TsvError::Format { line: 1, .. })));
        assert!(matches!(read_curves(&b"tau\tn_distinct\n1\tx\n"[..]), Err(TsvError::Format { line: 2, .. })));
    }

    #[test]
    fn histogram_rows() {
        let mut h = Histogram::<f64>::uniform(0.0, 1.0, 4).unwrap();
        h.add(0.1);
        h.add(0.6);
        let mut buf = Vec::new();
        write_histogram(&mut buf, &h, true).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "bin_left\tbin_right\tcount\tdensity\n0\t0.25\t1\t2\n0.5\t0.75\t1\t2\n"
        );
    }

    #[test]
    fn exponent_and_collapse_rows() {
        let c: GrowthCurve = GrowthCurve::from_samples(ContextSelector::Global, vec![(1, 1), (4, 2), (16, 4)]).unwrap();
        let row = ExponentRow { id: "r1".into(), endpoint: endpoint_exponent::<f64, _>(&c).unwrap(), regression: None };
        let mut buf = Vec::new();
        write_exponents(&mut buf, &[row]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().nth(1), Some("r1\t16\t4\t0.5\tNA\tNA"));
        let mut buf = Vec::new();
        write_collapse(&mut buf, &rescale_curve::<f64, _>(&c)).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x\ty\n0.0625\t0.25\n0.25\t0.5\n1\t1\n");
    }

    #[test]
    fn stems_are_safe() {
        assert_eq!(file_stem("http://a.b/c?d"), "http___a.b_c_d");
        assert_eq!(file_stem("..x"), "_..x");
        assert_eq!(file_stem(""), "_");
    }
}
