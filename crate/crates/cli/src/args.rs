use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tagvocab::fit::RankSelection;
use tagvocab::{CleaningPolicy, EntityKind, SamplingPolicy};

use crate::input::{InputFormat, OnParseError, ReadOptions};

#[derive(Debug, Parser)]
#[command(name = "tagvocab", version, about = "Vocabulary growth measurement for collaborative tagging streams")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Seed for every random generator (default 0, or the config file's).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Suppress progress and warnings on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    /// Write a JSON run report (with timings) to this path.
    #[arg(long, global = true, value_name = "PATH")]
    pub json_report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean posts and write the TAS table.
    Ingest(IngestArgs),
    /// Dataset census as JSON.
    Summary(SummaryArgs),
    /// Global vocabulary growth N(τ).
    Growth(GrowthArgs),
    /// Per-resource or per-user vocabulary growth.
    LocalGrowth(LocalGrowthArgs),
    /// Bookmarking users U(τ) per resource.
    Users(UsersArgs),
    /// Post-length distribution P(n) and its tail slope.
    Postlen(PostlenArgs),
    /// Growth exponents of curve tables, with optional P(γ).
    Exponents(ExponentsArgs),
    /// Curves rescaled by their endpoints.
    Collapse(CollapseArgs),
    /// Generate synthetic streams.
    Synth(SynthArgs),
    /// Run the full analysis battery into one directory.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Input file, or `-` for standard input.
    #[arg(long, short, default_value = "-")]
    pub input: String,
    #[arg(long, value_enum, default_value_t = InputFormat::Auto)]
    pub input_format: InputFormat,
    #[arg(long, value_enum, default_value_t = OnParseError::Abort)]
    pub on_parse_error: OnParseError,
    /// Earliest valid timestamp (seconds since the epoch).
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub min_ts: i64,
    /// Latest valid timestamp (default: now).
    #[arg(long, allow_negative_numbers = true)]
    pub max_ts: Option<i64>,
    #[arg(long)]
    pub no_fold_case: bool,
    #[arg(long)]
    pub keep_dup_tags: bool,
}

impl InputArgs {
    pub fn policy(&self) -> CleaningPolicy {
        CleaningPolicy {
            min_timestamp: self.min_ts,
            max_timestamp: self.max_ts,
            fold_case: !self.no_fold_case,
            dedupe_within_post: !self.keep_dup_tags,
        }
    }

    pub fn read_options(&self) -> ReadOptions {
        ReadOptions { format: self.input_format, on_parse_error: self.on_parse_error, policy: self.policy() }
    }
}

/// Which entities of one kind to follow.
#[derive(Debug, Clone, Args)]
pub struct SelectionArgs {
    /// Explicit identifiers, comma-separated.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["top", "ranks"])]
    pub ids: Vec<String>,
    /// The K most active entities.
    #[arg(long, conflicts_with = "ranks")]
    pub top: Option<usize>,
    /// Ranks START:END:STEP (1-based, inclusive).
    #[arg(long)]
    pub ranks: Option<RankSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankSpec(pub RankSelection);

impl FromStr for RankSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| p.parse::<usize>().map_err(|_| format!("bad rank {p:?}"));
        let (start, end, step) = match parts.as_slice() {
            [a, b] => (num(a)?, num(b)?, 1),
            [a, b, c] => (num(a)?, num(b)?, num(c)?),
            _ => return Err("expected START:END[:STEP]".into()),
        };
        if start == 0 || end < start || step == 0 {
            return Err(format!("invalid rank range {s:?}"));
        }
        Ok(RankSpec(RankSelection { start, end, step }))
    }
}

/// Sampling policy as `log[:PER_DECADE]`, `every`, `linear:STEP` or
/// `endpoint`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SamplingSpec(pub SamplingPolicy);

impl FromStr for SamplingSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (name, arg) = s.split_once(':').map_or((s, None), |(a, b)| (a, Some(b)));
        let num = |a: Option<&str>| -> Result<u32, String> {
            a.ok_or_else(|| format!("{name} needs a value"))?.parse().map_err(|_| format!("bad number in {s:?}"))
        };
        let policy = match name {
            "every" => SamplingPolicy::Every,
            "endpoint" => SamplingPolicy::EndpointOnly,
            "log" => SamplingPolicy::Log { per_decade: if arg.is_some() { num(arg)? } else { 50 } },
            "linear" => SamplingPolicy::Linear { step: num(arg)? as u64 },
            _ => return Err(format!("unknown sampling {s:?}")),
        };
        policy.validate().map_err(|e| e.to_string())?;
        Ok(SamplingSpec(policy))
    }
}

impl std::fmt::Display for SamplingSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            SamplingPolicy::Every => write!(f, "every"),
            SamplingPolicy::EndpointOnly => write!(f, "endpoint"),
            SamplingPolicy::Log { per_decade } => write!(f, "log:{per_decade}"),
            SamplingPolicy::Linear { step } => write!(f, "linear:{step}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Resource,
    User,
}

impl From<KindArg> for EntityKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Resource => EntityKind::Resource,
            KindArg::User => EntityKind::User,
        }
    }
}

/// Inclusive integer range `LO:HI`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Range(pub u64, pub u64);

impl FromStr for Range {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(':').ok_or("expected LO:HI")?;
        let (a, b) =
            (a.parse().map_err(|_| format!("bad bound {a:?}"))?, b.parse().map_err(|_| format!("bad bound {b:?}"))?);
        if a > b {
            return Err(format!("empty range {s:?}"));
        }
        Ok(Range(a, b))
    }
}

impl std::fmt::Display for Range {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.0, self.1)
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// TAS output, `-` for standard output.
    #[arg(long, short, default_value = "-")]
    pub out: String,
    /// JSON summary path (default: `<out>.summary.json` when writing a file).
    #[arg(long)]
    pub summary: Option<String>,
    /// Sort posts by timestamp in memory instead of requiring sorted input.
    #[arg(long)]
    pub sort: bool,
}

#[derive(Debug, Args)]
pub struct SummaryArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, short, default_value = "-")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct GrowthArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, short, default_value = "-")]
    pub out: String,
    #[arg(long, default_value_t)]
    pub sampling: SamplingSpec,
    /// Count distinct tags with a HyperLogLog of 2^P registers.
    #[arg(long, value_name = "P", value_parser = clap::value_parser!(u8).range(4..=18))]
    pub approximate: Option<u8>,
}

#[derive(Debug, Args)]
pub struct LocalGrowthArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = KindArg::Resource)]
    pub kind: KindArg,
    #[command(flatten)]
    pub select: SelectionArgs,
    /// Combined table with a context column.
    #[arg(long, short, default_value = "-")]
    pub out: String,
    /// One `growth_<kind>_<id>.tsv` per entity instead of a combined table.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, default_value_t)]
    pub sampling: SamplingSpec,
}

#[derive(Debug, Args)]
pub struct UsersArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Resources to follow (default: ranks 100 to 1000 in steps of 100).
    #[command(flatten)]
    pub select: SelectionArgs,
    #[arg(long, short, default_value = "-")]
    pub out: String,
    /// One `users_<id>.tsv` per resource instead of a combined table.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PostlenArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Unit-bin histogram.
    #[arg(long, short, default_value = "-")]
    pub out: String,
    /// Log-binned histogram.
    #[arg(long)]
    pub log_out: Option<String>,
    /// Mean and tail fit as JSON.
    #[arg(long)]
    pub json: Option<String>,
    /// Smallest length in the tail fit.
    #[arg(long, default_value_t = 10)]
    pub n_min: u64,
}

#[derive(Debug, Args)]
pub struct ExponentsArgs {
    /// Curve table from `growth` or `local-growth`.
    #[arg(long, short, default_value = "-")]
    pub input: String,
    #[arg(long, short, default_value = "-")]
    pub out: String,
    /// Regression window on τ (default: the last two decades).
    #[arg(long)]
    pub window: Option<Range>,
    /// Histogram of endpoint exponents.
    #[arg(long)]
    pub pgamma: Option<String>,
    /// Gaussian fit of P(γ) and peak location as JSON.
    #[arg(long)]
    pub json: Option<String>,
}

#[derive(Debug, Args)]
pub struct CollapseArgs {
    #[arg(long, short, default_value = "-")]
    pub input: String,
    /// Combined table with a context column (a single curve gets plain `x y`).
    #[arg(long, short, default_value = "-")]
    pub out: String,
    /// One `collapse_<id>.tsv` per curve.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Zipf,
    Py,
    Folksonomy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    PaperLike,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub model: Model,
    /// Folksonomy preset.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Stream length: assignments for zipf and py, posts for folksonomy.
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub vocabulary_cap: Option<u64>,
    /// Pitman-Yor discount.
    #[arg(long)]
    pub d: Option<f64>,
    /// Pitman-Yor strength.
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// TOML file with generator parameters; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Posts output, `-` for standard output.
    #[arg(long, short, default_value = "-")]
    pub out: String,
    /// Generator census as JSON (folksonomy only).
    #[arg(long)]
    pub census: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, short = 'd', default_value = "report")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t)]
    pub sampling: SamplingSpec,
    /// Resource ranks for U(τ) and the collapse.
    #[arg(long, default_value = "100:1000:100")]
    pub ranks: RankSpec,
    /// Size of the top bucket for resources and users.
    #[arg(long, default_value_t = 1000)]
    pub top: usize,
    /// Post-count range of the middle resource bucket.
    #[arg(long, default_value = "20:100")]
    pub middle: Range,
    /// Post-count range of the bottom resource bucket.
    #[arg(long, default_value = "2:5")]
    pub bottom: Range,
    /// Maximum entities per bucket.
    #[arg(long, default_value_t = 1000)]
    pub bucket_limit: usize,
    /// Fewest exponents a bucket needs for P(γ).
    #[arg(long, default_value_t = 20)]
    pub min_bucket: usize,
    /// Smallest length in the post-length tail fit.
    #[arg(long, default_value_t = 10)]
    pub n_min: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_specs() {
        assert_eq!("100:1000:100".parse::<RankSpec>().unwrap().0, RankSelection { start: 100, end: 1000, step: 100 });
        assert!("0:5".parse::<RankSpec>().is_err());
        assert_eq!("log".parse::<SamplingSpec>().unwrap().0, SamplingPolicy::Log { per_decade: 50 });
        assert_eq!("linear:7".parse::<SamplingSpec>().unwrap().0, SamplingPolicy::Linear { step: 7 });
        assert!("log:0".parse::<SamplingSpec>().is_err());
        assert_eq!("2:5".parse::<Range>().unwrap(), Range(2, 5));
    }
}
