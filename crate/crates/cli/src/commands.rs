use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, Write};

use serde::Serialize;
use tagvocab::fit::{rescale_curve, EntityRanker, RankSelection};
use tagvocab::growth::{
    track_entity_vocabularies, track_global_vocabulary_with, track_user_accumulation, CountingMode,
};
use tagvocab::ingest::{build_tas, parse_post_line, Ordering, SummaryAccumulator};
use tagvocab::io::{
    file_stem, read_curves, write_collapse, write_context_curves, write_curve, write_exponents, write_histogram,
    write_user_curve, CONTEXT_CURVE_HEADER,
};
use tagvocab::{CleaningPolicy, ContextSelector, DatasetSummary, EntityKind, GrowthCurve};

use crate::analysis::{exponent_rows, pgamma, write_post_lengths, PostLengthCounter, PostLengthReport};
use crate::args::*;
use crate::error::{CliError, Result};
use crate::input::{create_output, Checksum, InputFormat, RecordStream, Source, StreamStats};
use crate::run_report::{InputInfo, RunReport};

/// Opens the record stream for one pass. With `hash`, the input checksum
/// becomes available once the pass is complete.
pub fn records(src: &mut Source, input: &InputArgs, hash: bool) -> Result<(RecordStream, Option<Checksum>)> {
    let (reader, sum) = if hash {
        let (r, s) = src.hashed_reader()?;
        (r, Some(s))
    } else {
        (src.reader()?, None)
    };
    Ok((RecordStream::new(reader, &input.read_options())?, sum))
}

/// Records input details and stream totals in the run report.
pub fn note_input(
    report: &mut RunReport,
    src: &Source,
    input: &InputArgs,
    sum: Option<&Checksum>,
    stats: &StreamStats,
) {
    report.input = Some(InputInfo { path: src.label().to_string(), sha256: sum.map(Checksum::hex) });
    if stats.format != Some(InputFormat::Tas) {
        report.cleaning_policy = Some(input.policy());
    }
    report.param("input_format", stats.format);
    report.param("on_parse_error", input.on_parse_error);
    if stats.skipped_lines > 0 {
        report.warn(format!("{} malformed input lines skipped", stats.skipped_lines));
    }
}

fn write_file(path: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut out = create_output(path)?;
    f(&mut out)?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    policy: Option<&'a CleaningPolicy>,
    summary: &'a DatasetSummary,
    skipped_lines: u64,
}

fn summary_json(policy: Option<&CleaningPolicy>, summary: &DatasetSummary, skipped_lines: u64) -> String {
    serde_json::to_string_pretty(&SummaryDocument { policy, summary, skipped_lines }).expect("summary serializes")
        + "\n"
}

pub fn ingest(args: &IngestArgs, report: &mut RunReport, hash: bool) -> Result<()> {
    let mut src = Source::open(&args.input.input, 1)?;
    let mut out = create_output(&args.out)?;
    let mut acc = SummaryAccumulator::new();
    let (stats, sum) = if args.sort {
        if args.input.input_format == InputFormat::Tas {
            return Err(CliError::Usage("--sort applies to post input only".into()));
        }
        let (reader, sum) = if hash {
            let (r, s) = src.hashed_reader()?;
            (r, Some(s))
        } else {
            (src.reader()?, None)
        };
        let (posts, stats) = read_posts(reader, &args.input)?;
        for r in build_tas(&posts, Ordering::Sort)? {
            acc.observe(&r.tag, &r.user, &r.resource, r.post);
            writeln!(out, "{}", r.to_line())?;
        }
        (stats, sum)
    } else {
        let (mut stream, sum) = records(&mut src, &args.input, hash)?;
        for r in stream.by_ref() {
            acc.observe(&r.tag, &r.user, &r.resource, r.post);
            writeln!(out, "{}", r.to_line())?;
        }
        (stream.finish()?, sum)
    };
    out.flush()?;
    note_input(report, &src, &args.input, sum.as_ref(), &stats);
    let summary = acc.finish(stats.drops);
    report.summary = Some(summary);
    report.artifact(args.out.clone(), "tas_table");
    let summary_path = match (&args.summary, args.out.as_str()) {
        (Some(p), _) => Some(p.clone()),
        (None, "-") => None,
        (None, out) => Some(format!("{out}.summary.json")),
    };
    if let Some(p) = summary_path {
        let policy = report.cleaning_policy;
        write_file(&p, |w| Ok(w.write_all(summary_json(policy.as_ref(), &summary, stats.skipped_lines).as_bytes())?))?;
        report.artifact(p, "dataset_summary");
    }
    Ok(())
}

/// Reads and cleans every post into memory (for `ingest --sort`).
fn read_posts(reader: Box<dyn BufRead>, input: &InputArgs) -> Result<(Vec<tagvocab::Post>, StreamStats)> {
    let mut cleaner = input.policy().cleaner()?;
    let mut posts = Vec::new();
    let mut stats = StreamStats { format: Some(InputFormat::Posts), ..StreamStats::default() };
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        stats.lines += 1;
        if line.trim().is_empty() {
            continue;
        }
        match parse_post_line(&line, i as u64 + 1) {
            Ok(p) => {
                if let Ok(p) = cleaner.clean(p) {
                    posts.push(p);
                }
            }
            Err(_) if input.on_parse_error == crate::input::OnParseError::Skip => stats.skipped_lines += 1,
            Err(e) => return Err(e.into()),
        }
    }
    stats.drops = cleaner.counts();
    stats.records = posts.iter().map(|p| p.tags.len() as u64).sum();
    Ok((posts, stats))
}

pub fn summary(args: &SummaryArgs, report: &mut RunReport, hash: bool) -> Result<()> {
    let mut src = Source::open(&args.input.input, 1)?;
    let (mut stream, sum) = records(&mut src, &args.input, hash)?;
    let mut acc = SummaryAccumulator::new();
    for r in stream.by_ref() {
        acc.observe(&r.tag, &r.user, &r.resource, r.post);
    }
    let stats = stream.finish()?;
    note_input(report, &src, &args.input, sum.as_ref(), &stats);
    let summary = acc.finish(stats.drops);
    report.summary = Some(summary);
    let policy = report.cleaning_policy;
    write_file(&args.out, |w| {
        Ok(w.write_all(summary_json(policy.as_ref(), &summary, stats.skipped_lines).as_bytes())?)
    })?;
    report.artifact(args.out.clone(), "dataset_summary");
    Ok(())
}

pub fn growth(args: &GrowthArgs, report: &mut RunReport, hash: bool) -> Result<()> {
    let mut src = Source::open(&args.input.input, 1)?;
    let (mut stream, sum) = records(&mut src, &args.input, hash)?;
    let mode = args.approximate.map_or(CountingMode::Exact, |precision| CountingMode::Approximate { precision });
    let curve = track_global_vocabulary_with(stream.by_ref(), args.sampling.0, mode);
    let stats = stream.finish()?;
    let curve = curve?;
    note_input(report, &src, &args.input, sum.as_ref(), &stats);
    report.param("sampling", args.sampling.to_string());
    report.param("counting", mode);
    if let Some(a) = curve.approximation {
        report.warn(format!(
            "approximate distinct counting: relative standard error {:.4} (2^{} registers)",
            a.relative_standard_error, a.precision
        ));
    }
    write_file(&args.out, |w| Ok(write_curve(w, &curve)?))?;
    report.artifact(args.out.clone(), "global_growth");
    Ok(())
}

/// Explicit ids, or a rank selection resolved by a counting pass.
enum Selection {
    Ids(Vec<String>),
    Ranks(RankSelection),
}

fn selection(sel: &SelectionArgs, default: RankSelection) -> Selection {
    if !sel.ids.is_empty() {
        Selection::Ids(sel.ids.clone())
    } else if let Some(k) = sel.top {
        Selection::Ranks(RankSelection::top(k))
    } else {
        Selection::Ranks(sel.ranks.map_or(default, |r| r.0))
    }
}

/// Ranks one entity kind by post count over a full pass.
pub fn rank_pass(src: &mut Source, input: &InputArgs, kind: EntityKind) -> Result<Vec<(String, u64)>> {
    let (mut stream, _) = records(src, input, false)?;
    let mut ranker = EntityRanker::<String>::new();
    for r in stream.by_ref() {
        let key = match kind {
            EntityKind::Resource => &r.resource,
            EntityKind::User => &r.user,
        };
        ranker.observe(key.as_str(), r.post);
    }
    stream.finish()?;
    Ok(ranker.finish())
}

/// Resolves a selection to ids, with one extra pass for ranks.
fn resolve(
    sel: Selection,
    src: &mut Source,
    input: &InputArgs,
    kind: EntityKind,
    report: &mut RunReport,
) -> Result<Vec<String>> {
    match sel {
        Selection::Ids(ids) => Ok(ids),
        Selection::Ranks(ranks) => {
            let ranked = rank_pass(src, input, kind)?;
            let picked = ranks.apply(&ranked);
            report.param("ranks", ranks);
            let wanted = ranks.ranks().len();
            if picked.len() < wanted {
                report.warn(format!(
                    "only {} {kind}s; {} of {wanted} selected ranks exist",
                    ranked.len(),
                    picked.len()
                ));
            }
            Ok(picked.into_iter().map(|(_, id, _)| id.clone()).collect())
        }
    }
}

/// File-name stems for ids, made unique by a numeric suffix.
pub fn unique_stems<'a>(ids: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut used = HashSet::new();
    ids.into_iter()
        .map(|id| {
            let base = file_stem(id);
            let mut stem = base.clone();
            let mut k = 2;
            while !used.insert(stem.clone()) {
                stem = format!("{base}-{k}");
                k += 1;
            }
            stem
        })
        .collect()
}

pub fn local_growth(args: &LocalGrowthArgs, report: &mut RunReport, hash: bool) -> Result<()> {
    let kind: EntityKind = args.kind.into();
    let sel = selection(&args.select, RankSelection::top(10));
    let passes = if matches!(sel, Selection::Ids(_)) { 1 } else { 2 };
    let mut src = Source::open(&args.input.input, passes)?;
    let ids = resolve(sel, &mut src, &args.input, kind, report)?;
    let selectors: Vec<ContextSelector> = ids.iter().map(|id| ContextSelector::Entity(kind, id.clone())).collect();
    let (mut stream, sum) = records(&mut src, &args.input, hash)?;
    let curves = track_entity_vocabularies(stream.by_ref(), &selectors, args.sampling.0);
    let stats = stream.finish()?;
    let curves = curves?;
    note_input(report, &src, &args.input, sum.as_ref(), &stats);
    report.param("kind", kind);
    report.param("sampling", args.sampling.to_string());
    for m in &curves.missing {
        report.warn(format!("{kind} {} does not occur in the stream", m.id().map_or("", String::as_str)));
    }
    let low = curves.curves.iter().filter(|c| c.is_low_sample()).count();
    if low > 0 {
        report.warn(format!("{low} curves have fewer than 10 assignments"));
    }
    match &args.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let stems = unique_stems(curves.curves.iter().map(|c| c.context.id().map_or("", String::as_str)));
            for (c, stem) in curves.curves.iter().zip(stems) {
                let name = format!("growth_{kind}_{stem}.tsv");
                write_file(&dir.join(&name).to_string_lossy(), |w| Ok(write_curve(w, c)?))?;
                report.artifact(dir.join(name).to_string_lossy(), "local_growth");
            }
        }
        None => {
            if curves.curves.is_empty() {
                write_file(&args.out, |w| Ok(writeln!(w, "{CONTEXT_CURVE_HEADER}")?))?;
            } else {
                write_file(&args.out, |w| Ok(write_context_curves(w, &curves.curves)?))?;
            }
            report.artifact(args.out.clone(), "local_growth");
        }
    }
    Ok(())
}

pub const USERS_CONTEXT_HEADER: &str = "resource\ttau\tusers";

pub fn users(args: &UsersArgs, report: &mut RunReport, hash: bool) -> Result<()> {
    let sel = selection(&args.select, RankSelection { start: 100, end: 1000, step: 100 });
    let passes = if matches!(sel, Selection::Ids(_)) { 1 } else { 2 };
    let mut src = Source::open(&args.input.input, passes)?;
    let ids = resolve(sel, &mut src, &args.input, EntityKind::Resource, report)?;
    let (mut stream, sum) = records(&mut src, &args.input, hash)?;
    let (curves, missing) = track_user_accumulation(stream.by_ref(), &ids);
    let stats = stream.finish()?;
    note_input(report, &src, &args.input, sum.as_ref(), &stats);
    for m in &missing {
        report.warn(format!("resource {m} does not occur in the stream"));
    }
    match &args.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let stems = unique_stems(curves.iter().map(|c| c.resource.as_str()));
            for (c, stem) in curves.iter().zip(stems) {
                let name = format!("users_{stem}.tsv");
                write_file(&dir.join(&name).to_string_lossy(), |w| Ok(write_user_curve(w, c)?))?;
                report.artifact(dir.join(name).to_string_lossy(), "user_accumulation");
            }
        }
        None => {
            write_file(&args.out, |w| {
                writeln!(w, "{USERS_CONTEXT_HEADER}")?;
                for c in &curves {
                    for (tau, u) in &c.samples {
                        writeln!(w, "{}\t{tau}\t{u}", c.resource)?;
                    }
                }
                Ok(())
            })?;
            report.artifact(args.out.clone(), "user_accumulation");
        }
    }
    Ok(())
}

pub fn postlen(args: &PostlenArgs, report: &mut RunReport, hash: bool) -> Result<()> {
    let mut src = Source::open(&args.input.input, 1)?;
    let (mut stream, sum) = records(&mut src, &args.input, hash)?;
    let mut counter = PostLengthCounter::default();
    for r in stream.by_ref() {
        counter.observe(r.post);
    }
    let stats = stream.finish()?;
    note_input(report, &src, &args.input, sum.as_ref(), &stats);
    let d = counter.distribution()?;
    let pl = PostLengthReport::new(&d, args.n_min);
    if let Some(e) = &pl.tail_error {
        report.warn(format!("tail fit: {e}"));
    }
    report.param("n_min", args.n_min);
    write_file(&args.out, |w| write_post_lengths(w, &d, false))?;
    report.artifact(args.out.clone(), "post_length_distribution");
    if let Some(p) = &args.log_out {
        write_file(p, |w| write_post_lengths(w, &d, true))?;
        report.artifact(p.clone(), "post_length_distribution");
    }
    if let Some(p) = &args.json {
        write_file(
            p,
            |w| Ok(w.write_all((serde_json::to_string_pretty(&pl).expect("serializes") + "\n").as_bytes())?),
        )?;
        report.artifact(p.clone(), "post_length_fit");
    }
    Ok(())
}

fn read_curve_table(input: &str, report: &mut RunReport) -> Result<Vec<(String, GrowthCurve)>> {
    let mut src = Source::open(input, 1)?;
    let (reader, sum) = src.hashed_reader()?;
    let tables = read_curves(reader)?;
    report.input = Some(InputInfo { path: src.label().to_string(), sha256: Some(sum.hex()) });
    tables
        .into_iter()
        .map(|(label, samples)| {
            let c = GrowthCurve::from_samples(ContextSelector::Global, samples)?;
            Ok((label, c))
        })
        .collect()
}

#[derive(Serialize)]
struct ExponentsDocument<'a> {
    window: Option<String>,
    curves: usize,
    undefined: &'a [String],
    pgamma: Option<crate::analysis::PGammaSummary>,
}

pub fn exponents(args: &ExponentsArgs, report: &mut RunReport) -> Result<()> {
    let curves = read_curve_table(&args.input, report)?;
    if curves.is_empty() {
        return Err(CliError::Analysis("curve table has no curves".into()));
    }
    let (rows, undefined) = exponent_rows(&curves, args.window);
    report.param("window", args.window.map_or("last two decades".to_string(), |w| w.to_string()));
    if !undefined.is_empty() {
        report.warn(format!("{} curves with tau_max < 2 have no exponent", undefined.len()));
    }
    let need_pgamma = args.pgamma.is_some() || args.json.is_some();
    let pg = if need_pgamma && !rows.is_empty() {
        let gammas: Vec<f64> = rows.iter().map(|r| r.endpoint.gamma).collect();
        Some(pgamma(&gammas)?)
    } else {
        None
    };
    if let Some(p) = &args.pgamma {
        let (hist, _) = pg.as_ref().ok_or_else(|| CliError::Analysis("no exponents to bin".into()))?;
        write_file(p, |w| Ok(write_histogram(w, hist, false)?))?;
        report.artifact(p.clone(), "exponent_distribution");
    }
    if let Some(p) = &args.json {
        let doc = ExponentsDocument {
            window: args.window.map(|w| w.to_string()),
            curves: curves.len(),
            undefined: &undefined,
            pgamma: pg.map(|(_, s)| s),
        };
        write_file(p, |w| {
            Ok(w.write_all((serde_json::to_string_pretty(&doc).expect("serializes") + "\n").as_bytes())?)
        })?;
        report.artifact(p.clone(), "exponent_fit");
    }
    write_file(&args.out, |w| Ok(write_exponents(w, &rows)?))?;
    report.artifact(args.out.clone(), "exponents");
    Ok(())
}

pub const COLLAPSE_CONTEXT_HEADER: &str = "context\tx\ty";

pub fn collapse(args: &CollapseArgs, report: &mut RunReport) -> Result<()> {
    let curves = read_curve_table(&args.input, report)?;
    if curves.is_empty() {
        return Err(CliError::Analysis("curve table has no curves".into()));
    }
    let rescaled: Vec<_> = curves.iter().map(|(label, c)| (label, rescale_curve::<f64, _>(c))).collect();
    match &args.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let stems = unique_stems(rescaled.iter().map(|(l, _)| l.as_str()));
            for ((_, r), stem) in rescaled.iter().zip(stems) {
                let name = format!("collapse_{stem}.tsv");
                write_file(&dir.join(&name).to_string_lossy(), |w| Ok(write_collapse(w, r)?))?;
                report.artifact(dir.join(name).to_string_lossy(), "collapse");
            }
        }
        None if rescaled.len() == 1 => {
            write_file(&args.out, |w| Ok(write_collapse(w, &rescaled[0].1)?))?;
            report.artifact(args.out.clone(), "collapse");
        }
        None => {
            write_file(&args.out, |w| {
                writeln!(w, "{COLLAPSE_CONTEXT_HEADER}")?;
                for (label, r) in &rescaled {
                    for (x, y) in &r.samples {
                        writeln!(w, "{label}\t{x}\t{y}")?;
                    }
                }
                Ok(())
            })?;
            report.artifact(args.out.clone(), "collapse");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems_are_unique() {
        assert_eq!(unique_stems(["a/b", "a_b", "a?b", "c"]), ["a_b", "a_b-2", "a_b-3", "c"]);
    }
}
