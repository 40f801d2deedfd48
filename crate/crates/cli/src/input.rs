//! Input sources and the streaming record reader shared by all subcommands.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::rc::Rc;

use clap::ValueEnum;
use serde::Serialize;
use sha2::{Digest, Sha256};
use tagvocab::ingest::{parse_post_line, parse_tas_line, Cleaner, DropCounts, IngestError, TasBuilder, TasReader};
use tagvocab::{CleaningPolicy, TasRecord};
use tempfile::TempPath;

use crate::error::{CliError, Result};

const READ_BUFFER: usize = 1 << 16;

/// Lines inspected when guessing the input format.
const SNIFF_LINES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// Posts if the first rows are not numbered 1, 2, 3, ...
    Auto,
    Posts,
    Tas,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OnParseError {
    Skip,
    Abort,
}

type SharedHasher = Rc<RefCell<Sha256>>;

struct HashingReader<R> {
    inner: R,
    hasher: SharedHasher,
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.borrow_mut().update(&buf[..n]);
        Ok(n)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// A file or standard input. Standard input can be read once; commands that
/// need several passes spool it to a temporary file first.
pub struct Source {
    label: String,
    path: Option<PathBuf>,
    _spool: Option<TempPath>,
    stdin_used: bool,
    checksum: Option<String>,
}

impl Source {
    pub fn open(arg: &str, passes: usize) -> Result<Self> {
        if arg != "-" {
            File::open(arg).map_err(|e| CliError::Io(io::Error::new(e.kind(), format!("{arg}: {e}"))))?;
            return Ok(Self {
                label: arg.to_string(),
                path: Some(arg.into()),
                _spool: None,
                stdin_used: false,
                checksum: None,
            });
        }
        if passes <= 1 {
            return Ok(Self { label: "-".into(), path: None, _spool: None, stdin_used: false, checksum: None });
        }
        let mut file = tempfile::NamedTempFile::new()?;
        let hasher = SharedHasher::default();
        {
            let mut reader = HashingReader { inner: io::stdin().lock(), hasher: hasher.clone() };
            let mut w = io::BufWriter::with_capacity(READ_BUFFER, file.as_file_mut());
            io::copy(&mut reader, &mut w)?;
            w.flush()?;
        }
        let checksum = hex(&hasher.borrow().clone().finalize());
        let (_, path) = file.into_parts();
        Ok(Self {
            label: "-".into(),
            path: Some(path.to_path_buf()),
            _spool: Some(path),
            stdin_used: false,
            checksum: Some(checksum),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn raw(&mut self) -> Result<Box<dyn Read>> {
        match &self.path {
            Some(p) => Ok(Box::new(File::open(p)?)),
            None if self.stdin_used => Err(CliError::Usage("standard input can only be read once".into())),
            None => {
                self.stdin_used = true;
                Ok(Box::new(io::stdin().lock()))
            }
        }
    }

    pub fn reader(&mut self) -> Result<Box<dyn BufRead>> {
        Ok(Box::new(BufReader::with_capacity(READ_BUFFER, self.raw()?)))
    }

    /// A reader that also computes the SHA-256 of everything it yields,
    /// available from [`Checksum::hex`] once the stream is exhausted.
    pub fn hashed_reader(&mut self) -> Result<(Box<dyn BufRead>, Checksum)> {
        if let Some(sum) = self.checksum.clone() {
            return Ok((self.reader()?, Checksum::Known(sum)));
        }
        let hasher = SharedHasher::default();
        let inner = HashingReader { inner: self.raw()?, hasher: hasher.clone() };
        Ok((Box::new(BufReader::with_capacity(READ_BUFFER, inner)), Checksum::Streaming(hasher)))
    }
}

pub enum Checksum {
    Known(String),
    Streaming(SharedHasher),
}

impl Checksum {
    pub fn hex(&self) -> String {
        match self {
            Checksum::Known(s) => s.clone(),
            Checksum::Streaming(h) => hex(&h.borrow().clone().finalize()),
        }
    }
}

/// Settings that turn raw lines into TAS records.
#[derive(Debug, Clone, Copy)]
pub struct ReadOptions {
    pub format: InputFormat,
    pub on_parse_error: OnParseError,
    pub policy: CleaningPolicy,
}

enum Mode {
    Posts { cleaner: Cleaner, builder: TasBuilder },
    Tas(TasReader),
}

/// Totals of one pass over the input.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct StreamStats {
    pub format: Option<InputFormat>,
    pub lines: u64,
    pub skipped_lines: u64,
    pub records: u64,
    pub drops: DropCounts,
}

/// Owned TAS records from post lines or TAS lines.
///
/// Errors end the iteration; [`RecordStream::finish`] reports them. With
/// [`OnParseError::Skip`], malformed lines are counted and passed over.
pub struct RecordStream {
    reader: Box<dyn BufRead>,
    head: VecDeque<String>,
    line: String,
    line_no: u64,
    mode: Mode,
    pending: VecDeque<TasRecord>,
    on_error: OnParseError,
    stats: StreamStats,
    failure: Option<CliError>,
}

impl RecordStream {
    pub fn new(mut reader: Box<dyn BufRead>, opts: &ReadOptions) -> Result<Self> {
        let mut head = VecDeque::new();
        let format = match opts.format {
            InputFormat::Auto => {
                for _ in 0..SNIFF_LINES {
                    let mut l = String::new();
                    if reader.read_line(&mut l)? == 0 {
                        break;
                    }
                    head.push_back(l);
                }
                sniff(head.iter().map(String::as_str))
            }
            f => f,
        };
        let mode = match format {
            InputFormat::Tas => Mode::Tas(TasReader::new()),
            _ => Mode::Posts { cleaner: opts.policy.cleaner()?, builder: TasBuilder::new() },
        };
        Ok(Self {
            reader,
            head,
            line: String::new(),
            line_no: 0,
            mode,
            pending: VecDeque::new(),
            on_error: opts.on_parse_error,
            stats: StreamStats { format: Some(format), ..StreamStats::default() },
            failure: None,
        })
    }

    fn next_line(&mut self) -> io::Result<bool> {
        self.line.clear();
        if let Some(l) = self.head.pop_front() {
            self.line = l;
        } else if self.reader.read_line(&mut self.line)? == 0 {
            return Ok(false);
        }
        self.line_no += 1;
        Ok(true)
    }

    /// Errors carry whether they are confined to the line (and so may be
    /// skipped).
    fn process_line(&mut self) -> Result<(), (IngestError, bool)> {
        let Self { line, line_no, mode, pending, .. } = self;
        let local = |e| (e, true);
        let fatal = |e| (e, false);
        match mode {
            Mode::Posts { cleaner, builder } => {
                let post = parse_post_line(line, *line_no).map_err(local)?;
                if let Ok(post) = cleaner.clean(post) {
                    builder.push(&post, |r| pending.push_back(r.to_owned_record())).map_err(fatal)?;
                }
            }
            Mode::Tas(reader) => {
                let rec = parse_tas_line(line, *line_no).map_err(local)?;
                pending.push_back(reader.accept(rec, *line_no).map_err(fatal)?);
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<StreamStats> {
        if let Some(e) = self.failure.take() {
            return Err(e);
        }
        if let Mode::Posts { cleaner, .. } = &self.mode {
            self.stats.drops = cleaner.counts();
        }
        Ok(self.stats)
    }
}

impl Iterator for RecordStream {
    type Item = TasRecord;

    fn next(&mut self) -> Option<TasRecord> {
        loop {
            if let Some(r) = self.pending.pop_front() {
                self.stats.records += 1;
                return Some(r);
            }
            if self.failure.is_some() {
                return None;
            }
            match self.next_line() {
                Ok(true) => {}
                Ok(false) => return None,
                Err(e) => {
                    self.failure = Some(e.into());
                    return None;
                }
            }
            self.stats.lines += 1;
            if self.line.trim().is_empty() {
                continue;
            }
            if let Err((e, local)) = self.process_line() {
                if self.on_error == OnParseError::Skip && local {
                    self.stats.skipped_lines += 1;
                } else {
                    self.failure = Some(e.into());
                    return None;
                }
            }
        }
    }
}

/// TAS files number their rows 1, 2, 3, ...; post files start with a
/// timestamp.
fn sniff<'a>(lines: impl Iterator<Item = &'a str>) -> InputFormat {
    let mut seen = 0;
    for (i, l) in lines.enumerate() {
        let first = l.split('\t').next().unwrap_or("");
        if first.trim() != (i + 1).to_string() {
            return InputFormat::Posts;
        }
        seen += 1;
    }
    if seen == 0 {
        InputFormat::Posts
    } else {
        InputFormat::Tas
    }
}

/// Opens `-` as standard output, anything else as a file.
pub fn create_output(path: &str) -> Result<Box<dyn Write>> {
    if path == "-" {
        Ok(Box::new(io::BufWriter::with_capacity(READ_BUFFER, io::stdout().lock())))
    } else {
        let f = File::create(path).map_err(|e| CliError::Io(io::Error::new(e.kind(), format!("{path}: {e}"))))?;
        Ok(Box::new(io::BufWriter::with_capacity(READ_BUFFER, f)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(text: &str, format: InputFormat, on: OnParseError) -> (Vec<TasRecord>, Result<StreamStats>) {
        let opts = ReadOptions { format, on_parse_error: on, policy: CleaningPolicy::with_window(0, i64::MAX) };
        let mut s = RecordStream::new(Box::new(io::Cursor::new(text.to_string())), &opts).unwrap();
        let recs: Vec<TasRecord> = s.by_ref().collect();
        (recs, s.finish())
    }

    #[test]
    fn sniffs_formats() {
        assert_eq!(sniff(["1\ta\tu\tr\n", "2\tb\tu\tr\n"].into_iter()), InputFormat::Tas);
        assert_eq!(sniff(["1096228800\tu\tr\ta,b\n"].into_iter()), InputFormat::Posts);
        assert_eq!(sniff(std::iter::empty()), InputFormat::Posts);
    }

    #[test]
    fn posts_become_records() {
        let (recs, stats) =
            records("10\tu1\tr1\tA,b,a\n11\tu2\tr1\t\n12\tu2\tr2\tc\n", InputFormat::Auto, OnParseError::Abort);
        let tags: Vec<&str> = recs.iter().map(|r| r.tag.as_str()).collect();
        assert_eq!(tags, ["a", "b", "c"]);
        assert_eq!(recs[2].post, 1);
        let stats = stats.unwrap();
        assert_eq!(stats.drops.dropped_empty, 1);
        assert_eq!(stats.records, 3);
    }

    #[test]
    fn tas_rows_get_post_ordinals() {
        let (recs, _) = records("1\ta\tu1\tr1\n2\tb\tu1\tr1\n3\ta\tu2\tr1\n", InputFormat::Auto, OnParseError::Abort);
        assert_eq!(recs.iter().map(|r| r.post).collect::<Vec<_>>(), [0, 0, 1]);
    }

    #[test]
    fn parse_errors_skip_or_abort() {
        let text = "10\tu1\tr1\ta\nxyz\tu1\tr1\ta\n12\tu1\tr2\tb\n";
        let (recs, stats) = records(text, InputFormat::Posts, OnParseError::Skip);
        assert_eq!(recs.len(), 2);
        assert_eq!(stats.unwrap().skipped_lines, 1);
        let (recs, stats) = records(text, InputFormat::Posts, OnParseError::Abort);
        assert_eq!(recs.len(), 1);
        assert!(matches!(stats, Err(CliError::Ingest(IngestError::Parse { line: 2, .. }))));
    }

    #[test]
    fn unsorted_posts_always_abort() {
        let (_, stats) = records("10\tu\tr\ta\n9\tu\tr\tb\n", InputFormat::Posts, OnParseError::Skip);
        assert!(matches!(stats, Err(CliError::Ingest(IngestError::Unsorted { .. }))));
    }
}
