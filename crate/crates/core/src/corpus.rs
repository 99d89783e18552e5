//! Ingested documents and their token streams.
//!
//! Documents keep only their tokens (interned into a store-wide vocabulary)
//! and the byte size of the source; raw text is dropped after tokenization.
//! Changing the tokenizer configuration therefore requires re-ingesting.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{self, Token, TokenizerConfig};
use crate::vocab::{Vocab, WordId};

const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_FORMAT: &str = "gramforge-corpus";
const MANIFEST_VERSION: u32 = 1;
const TOKEN_FILE_EXT: &str = "tokens";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocumentId(pub u64);

impl std::fmt::Display for DocumentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone)]
pub struct Document {
    id: DocumentId,
    name: String,
    tokens: Vec<WordId>,
    byte_size: u64,
    ingested_at: u64,
}

impl Document {
    pub fn id(&self) -> DocumentId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Token ids in the owning store's vocabulary.
    pub fn token_ids(&self) -> &[WordId] {
        &self.tokens
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn byte_size(&self) -> u64 {
        self.byte_size
    }

    /// Milliseconds since the Unix epoch.
    pub fn ingested_at(&self) -> u64 {
        self.ingested_at
    }

    pub fn info(&self) -> DocumentInfo {
        DocumentInfo {
            id: self.id,
            name: self.name.clone(),
            token_count: self.tokens.len(),
            byte_size: self.byte_size,
            ingested_at: self.ingested_at,
        }
    }
}

/// Serializable document metadata (no tokens).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentInfo {
    pub id: DocumentId,
    pub name: String,
    pub token_count: usize,
    pub byte_size: u64,
    pub ingested_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub document_count: usize,
    pub total_tokens: u64,
    pub vocabulary_size: usize,
}

#[derive(Debug, Clone, Default)]
pub struct CorpusStore {
    config: TokenizerConfig,
    documents: Vec<Document>,
    vocab: Vocab,
    /// Occurrences of each interned word across live documents.
    frequency: Vec<u64>,
    live_types: usize,
    total_tokens: u64,
    next_id: u64,
    generation: u64,
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl CorpusStore {
    pub fn new(config: TokenizerConfig) -> Self {
        Self {
            config,
            ..Self::default()
        }
    }

    pub fn config(&self) -> &TokenizerConfig {
        &self.config
    }

    /// Switches tokenizer settings. Only allowed on an empty store since
    /// source text is not retained.
    pub fn set_config(&mut self, config: TokenizerConfig) -> Result<()> {
        if config == self.config {
            return Ok(());
        }
        if !self.documents.is_empty() {
            return Err(Error::ConfigLocked {
                documents: self.documents.len(),
            });
        }
        self.config = config;
        self.vocab = Vocab::new();
        self.frequency.clear();
        self.generation += 1;
        Ok(())
    }

    /// Counter bumped by every mutation; lets callers detect stale models.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn add_document(&mut self, name: &str, text: &str) -> Result<&Document> {
        let mut ids = Vec::new();
        let vocab = &mut self.vocab;
        tokenizer::for_each_token(text, &self.config, |t| ids.push(vocab.intern(t)));
        self.push_document(name, ids, text.len() as u64)
    }

    /// Like [`add_document`](Self::add_document) for raw bytes; invalid
    /// UTF-8 is replaced before normalization.
    pub fn add_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<&Document> {
        let text = String::from_utf8_lossy(bytes);
        let mut ids = Vec::new();
        let vocab = &mut self.vocab;
        tokenizer::for_each_token(&text, &self.config, |t| ids.push(vocab.intern(t)));
        self.push_document(name, ids, bytes.len() as u64)
    }

    /// Streams `reader` through the tokenizer without holding the whole
    /// source in memory.
    pub fn add_reader<R: Read>(&mut self, name: &str, reader: R) -> Result<&Document> {
        let mut ids = Vec::new();
        let vocab = &mut self.vocab;
        let bytes = tokenizer::for_each_token_in_reader(reader, &self.config, |t| {
            ids.push(vocab.intern(t))
        })?;
        self.push_document(name, ids, bytes)
    }

    /// Ingests a plain-text file; the document is named after the path.
    pub fn add_file(&mut self, path: impl AsRef<Path>) -> Result<&Document> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let name = path.display().to_string();
        match self.add_reader(&name, BufReader::new(file)) {
            Err(Error::Stream(e)) => Err(Error::io(path, e)),
            other => other,
        }
    }

    fn push_document(
        &mut self,
        name: &str,
        tokens: Vec<WordId>,
        byte_size: u64,
    ) -> Result<&Document> {
        if tokens.is_empty() {
            return Err(Error::EmptyDocument {
                name: name.to_owned(),
            });
        }
        self.frequency.resize(self.vocab.len(), 0);
        for &id in &tokens {
            let f = &mut self.frequency[id as usize];
            if *f == 0 {
                self.live_types += 1;
            }
            *f += 1;
        }
        self.total_tokens += tokens.len() as u64;
        self.next_id += 1;
        self.generation += 1;
        self.documents.push(Document {
            id: DocumentId(self.next_id),
            name: name.to_owned(),
            tokens,
            byte_size,
            ingested_at: now_millis(),
        });
        Ok(self.documents.last().expect("just pushed"))
    }

    pub fn remove_document(&mut self, id: DocumentId) -> Result<Document> {
        let index = self
            .documents
            .iter()
            .position(|d| d.id == id)
            .ok_or(Error::DocumentNotFound(id.0))?;
        let doc = self.documents.remove(index);
        for &t in &doc.tokens {
            let f = &mut self.frequency[t as usize];
            *f -= 1;
            if *f == 0 {
                self.live_types -= 1;
            }
        }
        self.total_tokens -= doc.tokens.len() as u64;
        self.generation += 1;
        Ok(doc)
    }

    pub fn clear(&mut self) {
        self.documents.clear();
        self.vocab = Vocab::new();
        self.frequency.clear();
        self.live_types = 0;
        self.total_tokens = 0;
        self.generation += 1;
    }

    pub fn stats(&self) -> CorpusStats {
        CorpusStats {
            document_count: self.documents.len(),
            total_tokens: self.total_tokens,
            vocabulary_size: self.live_types,
        }
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn get(&self, id: DocumentId) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Interner shared by all documents. May hold words whose documents
    /// were removed.
    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn words<'a>(&'a self, doc: &'a Document) -> impl ExactSizeIterator<Item = &'a str> + 'a {
        doc.tokens.iter().map(|&id| self.vocab.word(id))
    }

    pub fn tokens(&self, doc: &Document) -> Vec<Token> {
        self.words(doc)
            .map(|w| Token::new(w).expect("stored tokens are valid"))
            .collect()
    }

    /// Per-document token sequences in ingestion order.
    pub fn token_sequences(&self) -> Vec<Vec<Token>> {
        self.documents.iter().map(|d| self.tokens(d)).collect()
    }

    /// Writes `manifest.json` plus one `<id>.tokens` file per document into
    /// `dir`, removing token files of documents no longer present.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let manifest = Manifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            config: self.config,
            next_id: self.next_id,
            documents: self
                .documents
                .iter()
                .map(|d| ManifestEntry {
                    id: d.id,
                    name: d.name.clone(),
                    byte_size: d.byte_size,
                    ingested_at: d.ingested_at,
                    token_count: d.tokens.len(),
                    file: token_file_name(d.id),
                })
                .collect(),
        };

        for doc in &self.documents {
            let path = dir.join(token_file_name(doc.id));
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut out = BufWriter::new(file);
            for word in self.words(doc) {
                out.write_all(word.as_bytes())
                    .and_then(|_| out.write_all(b"\n"))
                    .map_err(|e| Error::io(&path, e))?;
            }
            out.flush().map_err(|e| Error::io(&path, e))?;
        }

        let mut json = serde_json::to_string_pretty(&manifest)?;
        json.push('\n');
        let manifest_path = dir.join(MANIFEST_FILE);
        fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;

        let keep: Vec<String> = manifest.documents.iter().map(|d| d.file.clone()).collect();
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.ends_with(&format!(".{TOKEN_FILE_EXT}")) && !keep.contains(&name) {
                fs::remove_file(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
            }
        }
        Ok(())
    }

    /// Loads a store saved by [`save`](Self::save). A directory without a
    /// manifest yields an empty store with the default config.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(MANIFEST_FILE);
        let raw = match fs::read_to_string(&manifest_path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::default()),
            Err(e) => return Err(Error::io(&manifest_path, e)),
        };
        let manifest: Manifest = serde_json::from_str(&raw)?;
        if manifest.format != MANIFEST_FORMAT || manifest.version != MANIFEST_VERSION {
            return Err(Error::Version(format!(
                "corpus manifest {} v{} (expected {MANIFEST_FORMAT} v{MANIFEST_VERSION})",
                manifest.format, manifest.version
            )));
        }

        let mut store = Self::new(manifest.config);
        for entry in manifest.documents {
            let path = dir.join(&entry.file);
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            let mut tokens = Vec::with_capacity(entry.token_count);
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.is_empty() || line.chars().any(char::is_whitespace) {
                    return Err(Error::parse(
                        i + 1,
                        format!("{}: invalid token {line:?}", path.display()),
                    ));
                }
                tokens.push(store.vocab.intern(&line));
            }
            if tokens.len() != entry.token_count {
                return Err(Error::Truncated {
                    line: tokens.len() + 1,
                    message: format!(
                        "{}: manifest lists {} tokens, file holds {}",
                        path.display(),
                        entry.token_count,
                        tokens.len()
                    ),
                });
            }
            store.push_document(&entry.name, tokens, entry.byte_size)?;
            let index = store.documents.len() - 1;
            store.documents[index].id = entry.id;
            store.documents[index].ingested_at = entry.ingested_at;
        }
        store.next_id = manifest.next_id;
        Ok(store)
    }
}

fn token_file_name(id: DocumentId) -> String {
    format!("{:08}.{TOKEN_FILE_EXT}", id.0)
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    config: TokenizerConfig,
    next_id: u64,
    documents: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    id: DocumentId,
    name: String,
    byte_size: u64,
    ingested_at: u64,
    token_count: usize,
    file: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> CorpusStore {
        CorpusStore::new(TokenizerConfig::default())
    }

    fn names(store: &CorpusStore) -> Vec<&str> {
        store.documents().iter().map(Document::name).collect()
    }

    #[test]
    fn add_tokenizes() {
        let mut s = store();
        let doc = s.add_document("a.txt", "The cat").unwrap();
        assert_eq!(doc.token_count(), 2);
        assert_eq!(doc.byte_size(), 7);
        let doc = s.documents()[0].clone();
        assert_eq!(s.tokens(&doc), ["the", "cat"]);
    }

    #[test]
    fn empty_documents_are_rejected() {
        let mut s = store();
        assert!(matches!(
            s.add_document("b.txt", "!!!"),
            Err(Error::EmptyDocument { .. })
        ));
        assert!(s.is_empty());
        assert_eq!(s.generation(), 0);
    }

    #[test]
    fn ingestion_order_and_duplicate_names() {
        let mut s = store();
        let a = s.add_document("x", "one").unwrap().id();
        let b = s.add_document("x", "two").unwrap().id();
        assert_ne!(a, b);
        assert_eq!(names(&s), ["x", "x"]);
    }

    #[test]
    fn remove_keeps_relative_order() {
        let mut s = store();
        let first = s.add_document("a", "a").unwrap().id();
        s.add_document("b", "b").unwrap();
        s.add_document("c", "c").unwrap();
        let removed = s.remove_document(first).unwrap();
        assert_eq!(removed.name(), "a");
        assert_eq!(names(&s), ["b", "c"]);
        assert!(matches!(
            s.remove_document(first),
            Err(Error::DocumentNotFound(_))
        ));
    }

    #[test]
    fn remove_only_document_empties_store() {
        let mut s = store();
        let id = s.add_document("a", "a b").unwrap().id();
        s.remove_document(id).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.stats(), CorpusStats::default());
    }

    #[test]
    fn clear_is_idempotent() {
        let mut s = store();
        s.add_document("a", "a b").unwrap();
        s.clear();
        assert_eq!(s.len(), 0);
        s.clear();
        assert_eq!(s.len(), 0);
        s.add_document("new", "fresh text").unwrap();
        assert_eq!(names(&s), ["new"]);
    }

    #[test]
    fn stats_examples() {
        let mut s = store();
        assert_eq!(s.stats(), CorpusStats::default());
        s.add_document("d", "the cat the").unwrap();
        assert_eq!(
            s.stats(),
            CorpusStats {
                document_count: 1,
                total_tokens: 3,
                vocabulary_size: 2
            }
        );
        let mut s = store();
        s.add_document("1", "a b").unwrap();
        s.add_document("2", "b c").unwrap();
        assert_eq!(
            s.stats(),
            CorpusStats {
                document_count: 2,
                total_tokens: 4,
                vocabulary_size: 3
            }
        );
    }

    #[test]
    fn config_change_requires_empty_store() {
        let mut s = store();
        s.add_document("a", "abc").unwrap();
        assert!(matches!(
            s.set_config(TokenizerConfig::characters()),
            Err(Error::ConfigLocked { documents: 1 })
        ));
        s.set_config(TokenizerConfig::default()).unwrap();
        s.clear();
        s.set_config(TokenizerConfig::characters()).unwrap();
        let doc = s.add_document("a", "ab c").unwrap().clone();
        assert_eq!(s.tokens(&doc), ["a", "b", "c"]);
    }

    #[test]
    fn missing_file_names_the_path() {
        let mut s = store();
        let err = s.add_file("/definitely/not/here.txt").unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.txt"));
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = store();
        s.add_document("a.txt", "The cat sat").unwrap();
        let gone = s.add_document("b.txt", "on the mat").unwrap().id();
        s.add_document("c.txt", "and slept").unwrap();
        s.save(dir.path()).unwrap();
        s.remove_document(gone).unwrap();
        s.save(dir.path()).unwrap();

        let loaded = CorpusStore::load(dir.path()).unwrap();
        assert_eq!(names(&loaded), ["a.txt", "c.txt"]);
        assert_eq!(loaded.token_sequences(), s.token_sequences());
        assert_eq!(loaded.stats(), s.stats());
        let infos = |s: &CorpusStore| s.documents().iter().map(Document::info).collect::<Vec<_>>();
        assert_eq!(infos(&loaded), infos(&s));

        let manifest = fs::read(dir.path().join(MANIFEST_FILE)).unwrap();
        let again = tempfile::tempdir().unwrap();
        loaded.save(again.path()).unwrap();
        assert_eq!(
            fs::read(again.path().join(MANIFEST_FILE)).unwrap(),
            manifest
        );
        let token_files = fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .path()
                    .extension()
                    .is_some_and(|x| x == TOKEN_FILE_EXT)
            })
            .count();
        assert_eq!(token_files, 2);
    }

    #[test]
    fn load_without_manifest_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(CorpusStore::load(dir.path()).unwrap().is_empty());
    }
}
