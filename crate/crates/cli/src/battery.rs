//! `report`: every analysis in one invocation, over three passes.
//!
//! 1. census: global clock, dataset summary, post lengths, entity ranks;
//! 2. local vocabulary curves of all selected resources and users;
//! 3. user accumulation of the rank-selected resources.

use std::fs;
use std::io::Write;
use std::path::Path;

use rustc_hash::FxHashMap;
use serde::Serialize;
use tagvocab::fit::{linear_fit, rescale_curve, EntityRanker, RankSelection};
use tagvocab::growth::{track_entity_vocabularies, track_user_accumulation, VocabularyClock};
use tagvocab::ingest::SummaryAccumulator;
use tagvocab::io::{write_collapse, write_curve, write_exponents, write_histogram, write_user_curve, ExponentRow};
use tagvocab::{ContextSelector, DatasetSummary, EntityKind, GrowthCurve};

use crate::analysis::{exponent_rows, pgamma, write_post_lengths, PGammaSummary, PostLengthCounter, PostLengthReport};
use crate::args::ReportArgs;
use crate::commands::{note_input, records, unique_stems};
use crate::error::{CliError, Result};
use crate::input::{create_output, Source};
use crate::run_report::RunReport;

struct Census {
    global: GrowthCurve,
    summary: DatasetSummary,
    lengths: PostLengthCounter,
    resources: Vec<(String, u64)>,
    users: Vec<(String, u64)>,
}

/// One `P(γ)` population: which entities, and why.
struct Bucket {
    name: &'static str,
    kind: EntityKind,
    rule: String,
    ids: Vec<String>,
}

#[derive(Serialize)]
struct GlobalExponents {
    tau_max: u64,
    n_final: u64,
    endpoint: Option<f64>,
    regression: Option<f64>,
    regression_window: Option<(u64, u64)>,
}

#[derive(Serialize)]
struct Accumulation {
    rank: usize,
    id: String,
    posts: u64,
    /// Least-squares slope of U against τ.
    slope: Option<f64>,
    /// Slope times the mean post length; 1 for a typical resource.
    slope_times_mean_length: Option<f64>,
}

#[derive(Serialize)]
struct Collapse {
    rank: usize,
    id: String,
    tau_max: u64,
    n_final: u64,
    /// Smallest `y / x`; at least 1 when the curve stays above `y = x`.
    min_ratio_to_linear: f64,
    /// Largest `y / sqrt(x)`; at most 1 when the curve stays below `y = sqrt(x)`.
    max_ratio_to_sqrt: f64,
}

#[derive(Serialize)]
struct BucketReport {
    name: String,
    kind: EntityKind,
    rule: String,
    summary: PGammaSummary,
}

#[derive(Serialize)]
struct Analysis {
    global: GlobalExponents,
    post_lengths: Option<PostLengthReport>,
    user_accumulation: Vec<Accumulation>,
    collapse: Vec<Collapse>,
    exponent_distributions: Vec<BucketReport>,
    /// Bottom peak minus top peak for resources.
    peak_shift: Option<f64>,
}

fn write_in(
    dir: &Path,
    name: &str,
    report: &mut RunReport,
    role: &str,
    f: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    let mut out = create_output(&dir.join(name).to_string_lossy())?;
    f(&mut out)?;
    out.flush()?;
    report.artifact(name, role);
    Ok(())
}

fn census_pass(src: &mut Source, args: &ReportArgs, rr: &mut RunReport) -> Result<Census> {
    let (mut stream, sum) = records(src, &args.input, true)?;
    let mut clock = VocabularyClock::<String>::new(args.sampling.0);
    let mut acc = SummaryAccumulator::new();
    let mut lengths = PostLengthCounter::default();
    let mut resources = EntityRanker::<String>::new();
    let mut users = EntityRanker::<String>::new();
    for r in stream.by_ref() {
        clock.observe(r.tag.as_str());
        acc.observe(&r.tag, &r.user, &r.resource, r.post);
        lengths.observe(r.post);
        resources.observe(r.resource.as_str(), r.post);
        users.observe(r.user.as_str(), r.post);
    }
    let stats = stream.finish()?;
    note_input(rr, src, &args.input, sum.as_ref(), &stats);
    let global = clock.finish(ContextSelector::Global)?;
    Ok(Census {
        global,
        summary: acc.finish(stats.drops),
        lengths,
        resources: resources.finish(),
        users: users.finish(),
    })
}

fn buckets(args: &ReportArgs, c: &Census) -> Vec<Bucket> {
    let top = args.top.min(c.resources.len());
    let in_range = |lo: u64, hi: u64| -> Vec<String> {
        c.resources[top..]
            .iter()
            .filter(|(_, n)| (lo..=hi).contains(n))
            .take(args.bucket_limit)
            .map(|(id, _)| id.clone())
            .collect()
    };
    vec![
        Bucket {
            name: "top",
            kind: EntityKind::Resource,
            rule: format!("resource ranks 1..={}", args.top),
            ids: c.resources[..top].iter().map(|(id, _)| id.clone()).collect(),
        },
        Bucket {
            name: "middle",
            kind: EntityKind::Resource,
            rule: format!(
                "resources below rank {} with {}..={} posts, at most {}",
                args.top, args.middle.0, args.middle.1, args.bucket_limit
            ),
            ids: in_range(args.middle.0, args.middle.1),
        },
        Bucket {
            name: "bottom",
            kind: EntityKind::Resource,
            rule: format!(
                "resources below rank {} with {}..={} posts, at most {}",
                args.top, args.bottom.0, args.bottom.1, args.bucket_limit
            ),
            ids: in_range(args.bottom.0, args.bottom.1),
        },
        Bucket {
            name: "top",
            kind: EntityKind::User,
            rule: format!("user ranks 1..={}", args.top),
            ids: c.users[..args.top.min(c.users.len())].iter().map(|(id, _)| id.clone()).collect(),
        },
    ]
}

fn collapse_stats(rank: usize, id: &str, c: &GrowthCurve) -> Collapse {
    let r = rescale_curve::<f64, _>(c);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &(x, y) in &r.samples {
        lo = lo.min(y / x);
        hi = hi.max(y / x.sqrt());
    }
    Collapse {
        rank,
        id: id.to_string(),
        tau_max: c.tau_max,
        n_final: c.n_final,
        min_ratio_to_linear: lo,
        max_ratio_to_sqrt: hi,
    }
}

pub fn report(args: &ReportArgs, rr: &mut RunReport) -> Result<()> {
    let dir = args.out_dir.as_path();
    fs::create_dir_all(dir)?;
    rr.param("sampling", args.sampling.to_string());
    rr.param("ranks", args.ranks.0);
    rr.param("top", args.top);
    rr.param("middle_posts", args.middle.to_string());
    rr.param("bottom_posts", args.bottom.to_string());
    rr.param("bucket_limit", args.bucket_limit);
    rr.param("min_bucket", args.min_bucket);
    rr.param("n_min", args.n_min);

    let mut src = rr.timed("spool", |_| Source::open(&args.input.input, 3))?;
    let mut census = rr.timed("census_pass", |rr| census_pass(&mut src, args, rr))?;
    rr.summary = Some(census.summary);

    // global growth
    let global = &census.global;
    write_in(dir, "growth_global.tsv", rr, "global_growth", |w| Ok(write_curve(w, global)?))?;
    let (rows, _) = exponent_rows(&[("global".to_string(), global.clone())], None);
    write_in(dir, "exponents_global.tsv", rr, "global_exponent", |w| Ok(write_exponents(w, &rows)?))?;
    let global_exp = GlobalExponents {
        tau_max: global.tau_max,
        n_final: global.n_final,
        endpoint: rows.first().map(|r| r.endpoint.gamma),
        regression: rows.first().and_then(|r| r.regression.map(|e| e.gamma)),
        regression_window: rows.first().and_then(|r| r.regression.and_then(|e| e.fit_window)),
    };
    if global_exp.regression.is_none() {
        rr.warn("global curve too short for a regression exponent");
    }

    // post lengths
    let post_lengths = match std::mem::take(&mut census.lengths).distribution() {
        Ok(d) => {
            write_in(dir, "postlen_unit.tsv", rr, "post_length_distribution", |w| write_post_lengths(w, &d, false))?;
            write_in(dir, "postlen_log.tsv", rr, "post_length_distribution", |w| write_post_lengths(w, &d, true))?;
            let pl = PostLengthReport::new(&d, args.n_min);
            if let Some(e) = &pl.tail_error {
                rr.skip("post_length_tail_fit", e.clone());
            }
            Some(pl)
        }
        Err(e) => {
            rr.skip("post_length_distribution", e.to_string());
            None
        }
    };

    // selections
    let ranked: Vec<(usize, String, u64)> =
        args.ranks.0.apply(&census.resources).into_iter().map(|(r, id, n)| (r, id.clone(), n)).collect();
    let wanted = args.ranks.0.ranks().len();
    if ranked.is_empty() {
        let reason = format!("only {} resources; no rank in {}", census.resources.len(), rank_text(args.ranks.0));
        rr.skip("user_accumulation", reason.clone());
        rr.skip("collapse", reason);
    } else if ranked.len() < wanted {
        rr.warn(format!("only {} of {wanted} selected resource ranks exist", ranked.len()));
    }
    let mut buckets = buckets(args, &census);
    for b in &mut buckets {
        if b.ids.len() < args.min_bucket {
            rr.skip(
                &format!("pgamma_{}_{}", b.kind, b.name),
                format!("{} entities match \"{}\", need {}", b.ids.len(), b.rule, args.min_bucket),
            );
            b.ids.clear();
        }
    }

    // local vocabulary curves
    let mut selectors: Vec<ContextSelector> =
        ranked.iter().map(|(_, id, _)| ContextSelector::resource(id.clone())).collect();
    for b in &buckets {
        selectors.extend(b.ids.iter().map(|id| ContextSelector::Entity(b.kind, id.clone())));
    }
    let curves: FxHashMap<ContextSelector, GrowthCurve> = if selectors.is_empty() {
        FxHashMap::default()
    } else {
        rr.timed("local_growth_pass", |_| {
            let (mut stream, _) = records(&mut src, &args.input, false)?;
            let tracked = track_entity_vocabularies(stream.by_ref(), &selectors, args.sampling.0);
            stream.finish()?;
            Ok(tracked?.curves.into_iter().map(|c| (c.context.clone(), c)).collect())
        })?
    };
    let curve = |kind: EntityKind, id: &str| -> Result<&GrowthCurve> {
        curves
            .get(&ContextSelector::Entity(kind, id.to_string()))
            .ok_or_else(|| CliError::Analysis(format!("{kind} {id} vanished between passes")))
    };

    // rank-selected resources: growth, collapse, U(τ)
    let stems = unique_stems(ranked.iter().map(|(_, id, _)| id.as_str()));
    let mut collapse = Vec::new();
    for ((rank, id, _), stem) in ranked.iter().zip(&stems) {
        let c = curve(EntityKind::Resource, id)?;
        write_in(dir, &format!("growth_resource_{stem}.tsv"), rr, "local_growth", |w| Ok(write_curve(w, c)?))?;
        let r = rescale_curve::<f64, _>(c);
        write_in(dir, &format!("collapse_{stem}.tsv"), rr, "collapse", |w| Ok(write_collapse(w, &r)?))?;
        collapse.push(collapse_stats(*rank, id, c));
    }
    let mut accumulation = Vec::new();
    if !ranked.is_empty() {
        let ids: Vec<String> = ranked.iter().map(|(_, id, _)| id.clone()).collect();
        let (acc, _) = rr.timed("user_accumulation_pass", |_| {
            let (mut stream, _) = records(&mut src, &args.input, false)?;
            let out = track_user_accumulation(stream.by_ref(), &ids);
            stream.finish()?;
            Ok(out)
        })?;
        let mean_len = post_lengths.as_ref().map(|p| p.mean);
        for (((rank, id, posts), stem), a) in ranked.iter().zip(&stems).zip(&acc) {
            write_in(dir, &format!("users_{stem}.tsv"), rr, "user_accumulation", |w| Ok(write_user_curve(w, a)?))?;
            let (xs, ys): (Vec<f64>, Vec<f64>) = a.samples.iter().map(|&(t, u)| (t as f64, u as f64)).unzip();
            let slope = linear_fit(&xs, &ys).map(|l| l.slope);
            accumulation.push(Accumulation {
                rank: *rank,
                id: id.clone(),
                posts: *posts,
                slope,
                slope_times_mean_length: slope.zip(mean_len).map(|(s, m)| s * m),
            });
        }
    }

    // exponent distributions
    let mut distributions = Vec::new();
    for b in buckets.iter().filter(|b| !b.ids.is_empty()) {
        let labelled: Vec<(String, GrowthCurve)> =
            b.ids.iter().map(|id| Ok((id.clone(), curve(b.kind, id)?.clone()))).collect::<Result<_>>()?;
        let (rows, undefined): (Vec<ExponentRow<f64>>, _) = exponent_rows(&labelled, None);
        if !undefined.is_empty() {
            rr.warn(format!("{} {}s in bucket {} have a single assignment", undefined.len(), b.kind, b.name));
        }
        let stage = format!("{}_{}", b.kind, b.name);
        write_in(dir, &format!("exponents_{stage}.tsv"), rr, "exponents", |w| Ok(write_exponents(w, &rows)?))?;
        let gammas: Vec<f64> = rows.iter().map(|r| r.endpoint.gamma).collect();
        let (hist, summary) = pgamma(&gammas)?;
        write_in(dir, &format!("pgamma_{stage}.tsv"), rr, "exponent_distribution", |w| {
            Ok(write_histogram(w, &hist, false)?)
        })?;
        if let Some(e) = &summary.gaussian_error {
            rr.warn(format!("Gaussian fit of P(γ) for {stage}: {e}"));
        }
        distributions.push(BucketReport { name: b.name.to_string(), kind: b.kind, rule: b.rule.clone(), summary });
    }
    let peak = |name: &str| {
        distributions.iter().find(|d| d.kind == EntityKind::Resource && d.name == name).and_then(|d| d.summary.peak)
    };
    let peak_shift = peak("bottom").zip(peak("top")).map(|(b, t)| b - t);

    let analysis = Analysis {
        global: global_exp,
        post_lengths,
        user_accumulation: accumulation,
        collapse,
        exponent_distributions: distributions,
        peak_shift,
    };
    write_in(dir, "analysis.json", rr, "analysis_summary", |w| {
        Ok(w.write_all((serde_json::to_string_pretty(&analysis).expect("serializes") + "\n").as_bytes())?)
    })?;
    rr.check_artifacts(dir)?;
    let manifest = rr.to_manifest();
    fs::write(dir.join("manifest.json"), manifest)?;
    Ok(())
}

fn rank_text(r: RankSelection) -> String {
    format!("{}..={} step {}", r.start, r.end, r.step)
}
