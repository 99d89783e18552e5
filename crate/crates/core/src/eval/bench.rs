use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NGramModel;
use crate::tokenizer::{self, TokenizerConfig};
use crate::vocab::{Vocab, WordId};

pub const CSV_HEADER: &str =
    "corpus_kb,load_tokenize_ms,build_n1_ms,build_n2_ms,build_n3_ms,build_n4_ms";

/// Smallest corpus accepted by [`bench_throughput`].
pub const MIN_THROUGHPUT_BYTES: u64 = 10_000_000;

pub const THROUGHPUT_RUNS: usize = 5;

/// One row of the build-timing table. Missing orders serialize as empty
/// cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub corpus_kb: f64,
    pub load_tokenize_ms: f64,
    pub build_n1_ms: Option<f64>,
    pub build_n2_ms: Option<f64>,
    pub build_n3_ms: Option<f64>,
    pub build_n4_ms: Option<f64>,
}

impl BenchmarkRecord {
    pub fn build_ms(&self, n: usize) -> Option<f64> {
        match n {
            1 => self.build_n1_ms,
            2 => self.build_n2_ms,
            3 => self.build_n3_ms,
            4 => self.build_n4_ms,
            _ => None,
        }
    }

    fn set_build_ms(&mut self, n: usize, ms: f64) {
        let slot = match n {
            1 => &mut self.build_n1_ms,
            2 => &mut self.build_n2_ms,
            3 => &mut self.build_n3_ms,
            4 => &mut self.build_n4_ms,
            _ => unreachable!("validated"),
        };
        *slot = Some(ms);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkResult {
    pub path: PathBuf,
    pub bytes: u64,
    pub tokens: u64,
    pub record: BenchmarkRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputReport {
    pub bytes: u64,
    pub tokens: u64,
    pub runs: Vec<f64>,
    pub tokens_per_second: f64,
}

/// Median of a non-empty sample (mean of the middle pair for even sizes).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    Ok(bytes)
}

fn load_and_tokenize(path: &Path, config: &TokenizerConfig) -> Result<(u64, Vocab, Vec<WordId>)> {
    let bytes = read_file(path)?;
    let text = String::from_utf8_lossy(&bytes);
    let mut vocab = Vocab::new();
    let mut ids = Vec::with_capacity(bytes.len() / 5);
    tokenizer::for_each_token(&text, config, |t| ids.push(vocab.intern(t)));
    Ok((bytes.len() as u64, vocab, ids))
}

/// Times load+tokenize and, per order, the build alone; each figure is the
/// median of `repetitions` runs. Every file is one document.
pub fn bench_build<P: AsRef<Path>>(
    corpus_paths: &[P],
    n_values: &[usize],
    repetitions: usize,
    config: &TokenizerConfig,
) -> Result<Vec<BenchmarkResult>> {
    if repetitions < 3 {
        return Err(Error::InvalidArgument(format!(
            "benchmarks need at least 3 repetitions, got {repetitions}"
        )));
    }
    if let Some(&bad) = n_values.iter().find(|&&n| !(1..=4).contains(&n)) {
        return Err(Error::InvalidArgument(format!(
            "benchmark orders must be within 1..=4, got {bad}"
        )));
    }
    let mut results = Vec::with_capacity(corpus_paths.len());
    for path in corpus_paths {
        let path = path.as_ref();
        let mut load_ms = Vec::with_capacity(repetitions);
        let mut loaded = None;
        for _ in 0..repetitions {
            let start = Instant::now();
            let run = load_and_tokenize(path, config)?;
            load_ms.push(start.elapsed().as_secs_f64() * 1e3);
            loaded = Some(run);
        }
        let (bytes, vocab, ids) = loaded.expect("at least one repetition");
        let mut record = BenchmarkRecord {
            corpus_kb: bytes as f64 / 1024.0,
            load_tokenize_ms: median(&load_ms),
            build_n1_ms: None,
            build_n2_ms: None,
            build_n3_ms: None,
            build_n4_ms: None,
        };
        for &n in n_values {
            let mut build_ms = Vec::with_capacity(repetitions);
            for _ in 0..repetitions {
                let mut model = NGramModel::with_vocab(n, vocab.clone())?;
                let start = Instant::now();
                model.update_ids(&ids);
                build_ms.push(start.elapsed().as_secs_f64() * 1e3);
                drop(model);
            }
            record.set_build_ms(n, median(&build_ms));
        }
        tracing::info!(path = %path.display(), tokens = ids.len(), "benchmarked corpus");
        results.push(BenchmarkResult {
            path: path.to_owned(),
            bytes,
            tokens: ids.len() as u64,
            record,
        });
    }
    Ok(results)
}

/// Median tokenize-only rate over [`THROUGHPUT_RUNS`] passes.
pub fn bench_throughput(
    corpus_path: impl AsRef<Path>,
    config: &TokenizerConfig,
) -> Result<ThroughputReport> {
    let bytes = read_file(corpus_path.as_ref())?;
    throughput_of_text(&String::from_utf8_lossy(&bytes), config)
}

/// Same as [`bench_throughput`] for text already in memory.
pub fn throughput_of_text(text: &str, config: &TokenizerConfig) -> Result<ThroughputReport> {
    if (text.len() as u64) < MIN_THROUGHPUT_BYTES {
        return Err(Error::MeasurementUnreliable {
            bytes: text.len(),
            min: MIN_THROUGHPUT_BYTES as usize,
        });
    }
    let mut runs = Vec::with_capacity(THROUGHPUT_RUNS);
    let mut tokens = 0;
    for _ in 0..THROUGHPUT_RUNS {
        let sample = tokenizer::throughput_probe(text, config)?;
        tokens = sample.tokens as u64;
        runs.push(sample.tokens_per_second);
    }
    Ok(ThroughputReport {
        bytes: text.len() as u64,
        tokens,
        tokens_per_second: median(&runs),
        runs,
    })
}

pub fn write_csv<W: Write>(records: &[BenchmarkRecord], writer: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    if records.is_empty() {
        out.write_record(CSV_HEADER.split(','))?;
    }
    for record in records {
        out.serialize(record)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(reader: R) -> Result<Vec<BenchmarkRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::parse(
            1,
            format!("unexpected benchmark header {:?}", header.join(",")),
        ));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(kb: f64) -> BenchmarkRecord {
        BenchmarkRecord {
            corpus_kb: kb,
            load_tokenize_ms: 12.5,
            build_n1_ms: Some(1.25),
            build_n2_ms: None,
            build_n3_ms: Some(3.0),
            build_n4_ms: Some(0.1 + 0.2),
        }
    }

    #[test]
    fn csv_layout_and_round_trip() {
        let records = vec![record(4898.76), record(13273.6)];
        let mut buf = Vec::new();
        write_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&format!("{CSV_HEADER}\n4898.76,12.5,1.25,,3.0,")));
        assert!(!text.contains('\r'));
        assert_eq!(read_csv(&buf[..]).unwrap(), records);
    }

    #[test]
    fn empty_csv_still_has_header() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            format!("{CSV_HEADER}\n")
        );
        assert!(read_csv(&buf[..]).unwrap().is_empty());
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn argument_validation() {
        let cfg = TokenizerConfig::default();
        assert!(bench_build(&["x"], &[2], 2, &cfg).is_err());
        assert!(bench_build(&["x"], &[5], 3, &cfg).is_err());
        let err = bench_build(&["/no/such/corpus.txt"], &[2], 3, &cfg).unwrap_err();
        assert!(err.to_string().contains("/no/such/corpus.txt"));
    }

    #[test]
    fn bench_is_deterministic_in_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        std::fs::write(&path, "the cat sat on the mat\n".repeat(500)).unwrap();
        let cfg = TokenizerConfig::default();
        let a = bench_build(&[&path], &[1, 2, 3, 4], 3, &cfg).unwrap();
        let b = bench_build(&[&path], &[1, 2, 3, 4], 3, &cfg).unwrap();
        assert_eq!(a[0].tokens, 3000);
        assert_eq!(a[0].tokens, b[0].tokens);
        for n in 1..=4 {
            assert!(a[0].record.build_ms(n).unwrap() >= 0.0);
        }
        assert!(a[0].record.load_tokenize_ms > 0.0);
    }

    #[test]
    fn throughput_needs_ten_megabytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("small.txt");
        std::fs::write(&path, "tiny corpus").unwrap();
        assert!(matches!(
            bench_throughput(&path, &TokenizerConfig::default()),
            Err(Error::MeasurementUnreliable { .. })
        ));
    }
}
