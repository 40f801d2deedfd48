//! Post parsing, cleaning and construction of the tag-assignment (TAS) table.
//!
//! Input is one post per line, `timestamp<TAB>user<TAB>resource<TAB>t1,t2,...`.
//! Cleaning drops posts without tags and posts outside the timestamp window,
//! folds tag case and removes repeated tags within a post. The cleaned,
//! time-ordered posts are then expanded into one [`TasRecord`] per tag; the
//! 1-based position of a record in that table is its global intrinsic time.

use std::borrow::Cow;
use std::collections::HashSet;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intern::Interner;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("line {line}: {kind}")]
    Parse { line: u64, kind: ParseErrorKind },
    #[error("post {post} has timestamp {timestamp}, earlier than the preceding {previous}; input is not time-ordered (enable sorting)")]
    Unsorted { post: u64, timestamp: i64, previous: i64 },
    #[error("invalid cleaning policy: min timestamp {min} is not below max timestamp {max}")]
    InvalidPolicy { min: i64, max: i64 },
    #[error("TAS line {line}: {reason}")]
    Tas { line: u64, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    #[error("expected 4 tab-separated fields, found {0}")]
    FieldCount(usize),
    #[error("timestamp {0:?} is not an integer")]
    Timestamp(String),
}

/// One tagging event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub timestamp: i64,
    pub user: String,
    pub resource: String,
    pub tags: Vec<String>,
}

impl Post {
    /// Renders the post in the ingest line format (without newline).
    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{}\t{}", self.timestamp, self.user, self.resource, self.tags.join(","))
    }
}

/// One row of the tag-assignment table.
///
/// `post` is the 0-based ordinal of the cleaned post the record came from.
/// It is not part of the TAS file format; readers reconstruct it from changes
/// of the `(user, resource)` pair between adjacent rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TasRecord {
    pub index: u64,
    pub post: u64,
    pub tag: String,
    pub user: String,
    pub resource: String,
}

impl TasRecord {
    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{}\t{}", self.index, self.tag, self.user, self.resource)
    }
}

/// Borrowed view of a TAS row handed out by [`TasBuilder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TasRef<'a> {
    pub index: u64,
    pub post: u64,
    pub tag: &'a str,
    pub user: &'a str,
    pub resource: &'a str,
}

impl TasRef<'_> {
    pub fn to_owned_record(&self) -> TasRecord {
        TasRecord {
            index: self.index,
            post: self.post,
            tag: self.tag.to_owned(),
            user: self.user.to_owned(),
            resource: self.resource.to_owned(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningPolicy {
    pub min_timestamp: i64,
    /// `None` means "the wall-clock time at which cleaning runs".
    pub max_timestamp: Option<i64>,
    pub fold_case: bool,
    pub dedupe_within_post: bool,
}

impl Default for CleaningPolicy {
    fn default() -> Self {
        Self { min_timestamp: 0, max_timestamp: None, fold_case: true, dedupe_within_post: true }
    }
}

impl CleaningPolicy {
    pub fn with_window(min_timestamp: i64, max_timestamp: i64) -> Self {
        Self { min_timestamp, max_timestamp: Some(max_timestamp), ..Self::default() }
    }

    /// Upper end of the validity window, resolving the wall-clock default.
    pub fn resolved_max(&self) -> i64 {
        self.max_timestamp.unwrap_or_else(|| {
            SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs() as i64).unwrap_or(i64::MAX)
        })
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let max = self.resolved_max();
        if self.min_timestamp < max {
            Ok(())
        } else {
            Err(IngestError::InvalidPolicy { min: self.min_timestamp, max })
        }
    }

    /// Returns a [`Cleaner`] with the wall-clock bound resolved once.
    pub fn cleaner(&self) -> Result<Cleaner, IngestError> {
        self.validate()?;
        Ok(Cleaner { policy: *self, max: self.resolved_max(), counts: DropCounts::default() })
    }
}

/// Why a post did not survive cleaning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    Empty,
    Timestamp,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounts {
    pub posts_in: u64,
    pub kept: u64,
    pub dropped_empty: u64,
    pub dropped_timestamp: u64,
}

/// Stateful cleaner that keeps drop counts.
#[derive(Debug, Clone)]
pub struct Cleaner {
    policy: CleaningPolicy,
    max: i64,
    counts: DropCounts,
}

impl Cleaner {
    pub fn policy(&self) -> &CleaningPolicy {
        &self.policy
    }

    pub fn counts(&self) -> DropCounts {
        self.counts
    }

    pub fn clean(&mut self, mut post: Post) -> Result<Post, DropReason> {
        self.counts.posts_in += 1;
        if post.tags.is_empty() {
            self.counts.dropped_empty += 1;
            return Err(DropReason::Empty);
        }
        if post.timestamp < self.policy.min_timestamp || post.timestamp > self.max {
            self.counts.dropped_timestamp += 1;
            return Err(DropReason::Timestamp);
        }
        if self.policy.fold_case {
            for tag in post.tags.iter_mut() {
                if let Cow::Owned(lower) = fold_case(tag) {
                    *tag = lower;
                }
            }
        }
        if self.policy.dedupe_within_post {
            dedupe_keep_first(&mut post.tags);
        }
        self.counts.kept += 1;
        Ok(post)
    }
}

/// Lowercases the whole tag; borrows when nothing changes.
pub fn fold_case(tag: &str) -> Cow<'_, str> {
    let needs = if tag.is_ascii() { tag.bytes().any(|b| b.is_ascii_uppercase()) } else { true };
    if !needs {
        return Cow::Borrowed(tag);
    }
    let lower = tag.to_lowercase();
    if lower == tag {
        Cow::Borrowed(tag)
    } else {
        Cow::Owned(lower)
    }
}

fn dedupe_keep_first(tags: &mut Vec<String>) {
    if tags.len() <= 32 {
        let mut i = 0;
        while i < tags.len() {
            if tags[..i].contains(&tags[i]) {
                tags.remove(i);
            } else {
                i += 1;
            }
        }
    } else {
        let mut seen = HashSet::with_capacity(tags.len());
        tags.retain(|t| seen.insert(t.clone()));
    }
}

/// Parses one input line. `line_no` is 1-based and only used for errors.
pub fn parse_post_line(line: &str, line_no: u64) -> Result<Post, IngestError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    let mut fields = line.split('\t');
    let (Some(ts), Some(user), Some(resource), Some(tags), None) =
        (fields.next(), fields.next(), fields.next(), fields.next(), fields.next())
    else {
        return Err(IngestError::Parse { line: line_no, kind: ParseErrorKind::FieldCount(line.split('\t').count()) });
    };
    let timestamp = ts
        .trim()
        .parse::<i64>()
        .map_err(|_| IngestError::Parse { line: line_no, kind: ParseErrorKind::Timestamp(ts.to_owned()) })?;
    let tags = tags.split(',').filter(|t| !t.is_empty()).map(str::to_owned).collect();
    Ok(Post { timestamp, user: user.to_owned(), resource: resource.to_owned(), tags })
}

/// Cleans a sequence of posts, preserving order.
pub fn clean_posts<I>(posts: I, policy: &CleaningPolicy) -> Result<(Vec<Post>, DropCounts), IngestError>
where
    I: IntoIterator<Item = Post>,
{
    let mut cleaner = policy.cleaner()?;
    let kept = posts.into_iter().filter_map(|p| cleaner.clean(p).ok()).collect();
    Ok((kept, cleaner.counts()))
}

/// How [`build_tas`] treats posts that are not in timestamp order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ordering {
    /// Fail on the first timestamp decrease.
    #[default]
    RequireSorted,
    /// Stable-sort by timestamp first (equal timestamps keep input order).
    Sort,
}

/// Incremental TAS construction: assigns global indices and post ordinals.
#[derive(Debug, Clone, Default)]
pub struct TasBuilder {
    next_index: u64,
    posts: u64,
    last_timestamp: Option<i64>,
}

impl TasBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of records emitted so far (the current global τ).
    pub fn len(&self) -> u64 {
        self.next_index
    }

    pub fn is_empty(&self) -> bool {
        self.next_index == 0
    }

    pub fn posts(&self) -> u64 {
        self.posts
    }

    /// Expands a cleaned post into records, calling `emit` once per tag.
    pub fn push<F>(&mut self, post: &Post, mut emit: F) -> Result<(), IngestError>
    where
        F: FnMut(TasRef<'_>),
    {
        if let Some(prev) = self.last_timestamp {
            if post.timestamp < prev {
                return Err(IngestError::Unsorted { post: self.posts, timestamp: post.timestamp, previous: prev });
            }
        }
        self.last_timestamp = Some(post.timestamp);
        for tag in &post.tags {
            self.next_index += 1;
            emit(TasRef { index: self.next_index, post: self.posts, tag, user: &post.user, resource: &post.resource });
        }
        self.posts += 1;
        Ok(())
    }
}

/// Builds the TAS table from cleaned posts.
pub fn build_tas(posts: &[Post], ordering: Ordering) -> Result<Vec<TasRecord>, IngestError> {
    let mut order: Vec<&Post> = posts.iter().collect();
    if ordering == Ordering::Sort {
        order.sort_by_key(|p| p.timestamp);
    }
    let mut builder = TasBuilder::new();
    let mut out = Vec::with_capacity(posts.iter().map(|p| p.tags.len()).sum());
    for post in order {
        builder.push(post, |r| out.push(r.to_owned_record()))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub post_count: u64,
    pub dropped_empty_count: u64,
    pub dropped_timestamp_count: u64,
    pub user_count: u64,
    pub resource_count: u64,
    pub distinct_tag_count: u64,
    pub total_tag_assignments: u64,
}

/// Streaming census over TAS rows.
#[derive(Debug, Default)]
pub struct SummaryAccumulator {
    users: HashSet<String>,
    resources: HashSet<String>,
    tags: HashSet<String>,
    posts: u64,
    last_post: Option<u64>,
    total: u64,
}

impl SummaryAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, tag: &str, user: &str, resource: &str, post: u64) {
        self.total += 1;
        if self.last_post != Some(post) {
            self.posts += 1;
            self.last_post = Some(post);
        }
        insert_str(&mut self.tags, tag);
        insert_str(&mut self.users, user);
        insert_str(&mut self.resources, resource);
    }

    pub fn finish(self, drops: DropCounts) -> DatasetSummary {
        DatasetSummary {
            post_count: self.posts,
            dropped_empty_count: drops.dropped_empty,
            dropped_timestamp_count: drops.dropped_timestamp,
            user_count: self.users.len() as u64,
            resource_count: self.resources.len() as u64,
            distinct_tag_count: self.tags.len() as u64,
            total_tag_assignments: self.total,
        }
    }
}

fn insert_str(set: &mut HashSet<String>, s: &str) {
    if !set.contains(s) {
        set.insert(s.to_owned());
    }
}

pub fn dataset_summary<'a, I>(tas: I, drops: DropCounts) -> DatasetSummary
where
    I: IntoIterator<Item = &'a TasRecord>,
{
    let mut acc = SummaryAccumulator::new();
    for r in tas {
        acc.observe(&r.tag, &r.user, &r.resource, r.post);
    }
    acc.finish(drops)
}

/// Parses a TAS line `index<TAB>tag<TAB>user<TAB>resource`. The post ordinal
/// is left at 0; [`TasReader`] fills it in.
pub fn parse_tas_line(line: &str, line_no: u64) -> Result<TasRecord, IngestError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 4 {
        return Err(IngestError::Tas { line: line_no, reason: format!("expected 4 fields, found {}", fields.len()) });
    }
    let index = fields[0].parse::<u64>().map_err(|_| IngestError::Tas {
        line: line_no,
        reason: format!("index {:?} is not a positive integer", fields[0]),
    })?;
    Ok(TasRecord {
        index,
        post: 0,
        tag: fields[1].to_owned(),
        user: fields[2].to_owned(),
        resource: fields[3].to_owned(),
    })
}

/// Validates TAS indices and reconstructs post ordinals from a stream of
/// parsed records.
///
/// Consecutive rows with the same `(user, resource)` pair are taken to belong
/// to the same post, unless the tag repeats (cleaned posts never repeat a tag).
#[derive(Debug, Default)]
pub struct TasReader {
    expected: u64,
    post: u64,
    current: Option<(String, String)>,
    current_tags: Vec<String>,
}

impl TasReader {
    pub fn new() -> Self {
        Self { expected: 1, ..Self::default() }
    }

    pub fn accept(&mut self, mut rec: TasRecord, line_no: u64) -> Result<TasRecord, IngestError> {
        if rec.index != self.expected {
            return Err(IngestError::Tas {
                line: line_no,
                reason: format!("index {} breaks the consecutive sequence (expected {})", rec.index, self.expected),
            });
        }
        self.expected += 1;
        let same_pair = matches!(&self.current, Some((u, r)) if *u == rec.user && *r == rec.resource);
        if same_pair && !self.current_tags.contains(&rec.tag) {
            self.current_tags.push(rec.tag.clone());
        } else {
            if self.current.is_some() {
                self.post += 1;
            }
            self.current = Some((rec.user.clone(), rec.resource.clone()));
            self.current_tags.clear();
            self.current_tags.push(rec.tag.clone());
        }
        rec.post = self.post;
        Ok(rec)
    }
}

/// Interned in-memory TAS table. Row `i` has global intrinsic time `i + 1`.
#[derive(Debug, Default, Clone)]
pub struct TasTable {
    pub tags: Interner,
    pub users: Interner,
    pub resources: Interner,
    pub rows: Vec<TasRow>,
    posts: u64,
    post_lengths: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TasRow {
    pub tag: u32,
    pub user: u32,
    pub resource: u32,
    pub post: u32,
}

impl TasTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends one record. Records of one post must be pushed contiguously
    /// with the same, non-decreasing post ordinal.
    pub fn push(&mut self, tag: &str, user: &str, resource: &str, post: u64) {
        let tag = self.tags.intern(tag);
        let user = self.users.intern(user);
        let resource = self.resources.intern(resource);
        let post = u32::try_from(post).expect("more than u32::MAX posts");
        match self.rows.last() {
            Some(last) if last.post == post => *self.post_lengths.last_mut().unwrap() += 1,
            _ => {
                self.posts += 1;
                self.post_lengths.push(1);
            }
        }
        self.rows.push(TasRow { tag, user, resource, post });
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn post_count(&self) -> u64 {
        self.posts
    }

    /// Number of tags of every post, in post order.
    pub fn post_lengths(&self) -> &[u32] {
        &self.post_lengths
    }

    pub fn summary(&self, drops: DropCounts) -> DatasetSummary {
        DatasetSummary {
            post_count: self.posts,
            dropped_empty_count: drops.dropped_empty,
            dropped_timestamp_count: drops.dropped_timestamp,
            user_count: self.users.len() as u64,
            resource_count: self.resources.len() as u64,
            distinct_tag_count: self.tags.len() as u64,
            total_tag_assignments: self.rows.len() as u64,
        }
    }
}
