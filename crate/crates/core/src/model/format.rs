//! Versioned plain-text model file.
//!
//! ```text
//! GRAMFORGE 1 n=<n> vocab=<V> ngrams=<T>
//! v<TAB><token>                         (V lines, sorted)
//! g<TAB><context><TAB><word><TAB><count> (contexts sorted, words sorted within)
//! ```
//!
//! `T` is the total n-gram count; it doubles as the truncation check.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rustc_hash::FxHashSet;

use super::{check_order, Context, NGramModel};
use crate::error::{Error, Result};
use crate::vocab::{Vocab, WordId};

pub const FORMAT_MAGIC: &str = "GRAMFORGE";
pub const FORMAT_VERSION: u32 = 1;

struct CountingWriter<W> {
    inner: W,
    bytes: u64,
}

impl<W: Write> Write for CountingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.bytes += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

impl NGramModel {
    /// Writes the canonical file form. Returns the number of bytes written.
    pub fn save<W: Write>(&self, writer: W) -> Result<u64> {
        let mut out = CountingWriter {
            inner: writer,
            bytes: 0,
        };
        writeln!(
            out,
            "{FORMAT_MAGIC} {FORMAT_VERSION} n={} vocab={} ngrams={}",
            self.n,
            self.vocab.len(),
            self.total_ngrams
        )?;
        for word in self.vocab.sorted() {
            writeln!(out, "v\t{word}")?;
        }
        for (context, word, count) in self.canonical_entries() {
            writeln!(out, "g\t{context}\t{word}\t{count}")?;
        }
        out.flush()?;
        Ok(out.bytes)
    }

    pub fn save_to_path(&self, path: impl AsRef<Path>) -> Result<u64> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.save(BufWriter::new(file)).map_err(|e| match e {
            Error::Stream(source) => Error::io(path, source),
            other => other,
        })
    }

    pub fn load<R: BufRead>(reader: R) -> Result<NGramModel> {
        Loader::new(reader).run()
    }

    pub fn load_from_path(path: impl AsRef<Path>) -> Result<NGramModel> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::load(BufReader::new(file)).map_err(|e| match e {
            Error::Stream(source) => Error::io(path, source),
            other => other,
        })
    }
}

struct Header {
    n: usize,
    vocab: usize,
    ngrams: u64,
}

struct Loader<R> {
    reader: R,
    line_no: usize,
    buf: Vec<u8>,
}

impl<R: BufRead> Loader<R> {
    fn new(reader: R) -> Self {
        Self {
            reader,
            line_no: 0,
            buf: Vec::new(),
        }
    }

    /// Next line without its terminator; `None` at end of input. A final line
    /// without LF means the writer was cut off.
    fn next_line(&mut self) -> Result<Option<&str>> {
        self.buf.clear();
        let read = self.reader.read_until(b'\n', &mut self.buf)?;
        if read == 0 {
            return Ok(None);
        }
        self.line_no += 1;
        if self.buf.last() != Some(&b'\n') {
            return Err(Error::Truncated {
                line: self.line_no,
                message: "last line has no terminating newline".into(),
            });
        }
        self.buf.pop();
        let line_no = self.line_no;
        std::str::from_utf8(&self.buf)
            .map(Some)
            .map_err(|_| Error::parse(line_no, "invalid UTF-8"))
    }

    fn header(&mut self) -> Result<Header> {
        let line = self
            .next_line()?
            .ok_or_else(|| Error::Version("empty file, expected GRAMFORGE header".into()))?
            .to_owned();
        let mut fields = line.split(' ');
        if fields.next() != Some(FORMAT_MAGIC) {
            return Err(Error::Version(format!(
                "line 1: expected {FORMAT_MAGIC} header, found {:?}",
                truncate_for_message(&line)
            )));
        }
        match fields.next() {
            Some(v) if v == FORMAT_VERSION.to_string() => {}
            Some(v) => {
                return Err(Error::Version(format!(
                    "line 1: version {v:?} is not supported (expected {FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::Version("line 1: missing version".into())),
        }
        let mut field = |name: &str| -> Result<u64> {
            let raw = fields
                .next()
                .and_then(|f| f.strip_prefix(name))
                .and_then(|f| f.strip_prefix('='))
                .ok_or_else(|| Error::parse(1, format!("expected {name}=<int>")))?;
            raw.parse().map_err(|_| {
                Error::parse(1, format!("{name} is not a non-negative integer: {raw:?}"))
            })
        };
        let n = field("n")? as usize;
        let vocab = field("vocab")? as usize;
        let ngrams = field("ngrams")?;
        if fields.next().is_some() {
            return Err(Error::parse(1, "trailing header fields"));
        }
        check_order(n).map_err(|e| Error::parse(1, e.to_string()))?;
        Ok(Header { n, vocab, ngrams })
    }

    fn run(mut self) -> Result<NGramModel> {
        let header = self.header()?;

        let mut vocab = Vocab::new();
        for _ in 0..header.vocab {
            let line_no = self.line_no + 1;
            let line = self.next_line()?.ok_or_else(|| Error::Truncated {
                line: line_no,
                message: format!("expected {} vocabulary lines", header.vocab),
            })?;
            let word = line
                .strip_prefix("v\t")
                .ok_or_else(|| Error::parse(line_no, "expected vocabulary line `v<TAB><token>`"))?;
            if word.is_empty() || word.chars().any(char::is_whitespace) {
                return Err(Error::parse(line_no, format!("invalid token {word:?}")));
            }
            let before = vocab.len();
            vocab.intern(word);
            if vocab.len() == before {
                return Err(Error::parse(
                    line_no,
                    format!("duplicate vocabulary entry {word:?}"),
                ));
            }
        }

        let mut model = NGramModel::with_vocab(header.n, vocab)?;
        let mut seen: FxHashSet<(Context, WordId)> = FxHashSet::default();
        let mut context = Context::new();
        loop {
            let line_no = self.line_no + 1;
            let Some(line) = self.next_line()? else { break };
            let mut fields = line.split('\t');
            if fields.next() != Some("g") {
                return Err(Error::parse(line_no, "expected n-gram line `g<TAB>...`"));
            }
            let (Some(ctx), Some(word), Some(count), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(Error::parse(
                    line_no,
                    "n-gram line needs exactly 4 tab-separated fields",
                ));
            };

            context.clear();
            if !ctx.is_empty() {
                for w in ctx.split(' ') {
                    let id = model.vocab.id(w).ok_or_else(|| {
                        Error::parse(line_no, format!("context token {w:?} not in vocabulary"))
                    })?;
                    context.push(id);
                }
            }
            if context.len() + 1 != header.n {
                return Err(Error::parse(
                    line_no,
                    format!(
                        "context has {} tokens, order {} needs {}",
                        context.len(),
                        header.n,
                        header.n - 1
                    ),
                ));
            }
            let word_id = model
                .vocab
                .id(word)
                .ok_or_else(|| Error::parse(line_no, format!("word {word:?} not in vocabulary")))?;
            let count: u64 = count.parse().ok().filter(|&c| c > 0).ok_or_else(|| {
                Error::parse(
                    line_no,
                    format!("count must be a positive integer: {count:?}"),
                )
            })?;
            if !seen.insert((context.clone(), word_id)) {
                return Err(Error::parse(line_no, "duplicate n-gram"));
            }
            model.count_window(&context, word_id, count);
        }

        if model.total_ngrams != header.ngrams {
            return Err(Error::Truncated {
                line: self.line_no + 1,
                message: format!(
                    "header declares {} n-grams, file holds {}",
                    header.ngrams, model.total_ngrams
                ),
            });
        }
        Ok(model)
    }
}

fn truncate_for_message(line: &str) -> &str {
    match line.char_indices().nth(40) {
        Some((i, _)) => &line[..i],
        None => line,
    }
}
