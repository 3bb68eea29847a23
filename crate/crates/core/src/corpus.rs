//! Embedding store, outcome-annotated corpus and lexicon loading, tokenization.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use serde_json::Value;

use crate::error::{Result, SsdError};

/// Word vectors of a fixed dimensionality, keyed by word.
///
/// Immutable once built; lookups are by index or by word.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    // row-major, vocab.len() * dim
    data: Vec<f64>,
    norms: Vec<f64>,
    frequencies: Option<Vec<f64>>,
    duplicates: usize,
}

impl EmbeddingStore {
    /// Builds a store from `(word, vector)` pairs. Duplicate words keep their
    /// first vector; the number of discarded rows is available from
    /// [`EmbeddingStore::duplicate_count`].
    pub fn from_pairs<I, S>(dim: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(SsdError::Config("embedding dimension must be positive".into()));
        }
        let mut store = EmbeddingStore {
            dim,
            vocab: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            norms: Vec::new(),
            frequencies: None,
            duplicates: 0,
        };
        for (line, (word, vector)) in pairs.into_iter().enumerate() {
            let word = word.into();
            if vector.len() != dim {
                return Err(SsdError::Format {
                    line: line + 1,
                    msg: format!("expected {dim} values for {word:?}, found {}", vector.len()),
                });
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(SsdError::Format {
                    line: line + 1,
                    msg: format!("non-finite value in vector for {word:?}"),
                });
            }
            store.push(word, &vector);
        }
        if store.vocab.is_empty() {
            return Err(SsdError::EmptyInput("no embedding rows".into()));
        }
        Ok(store)
    }

    fn push(&mut self, word: String, vector: &[f64]) -> bool {
        if self.index.contains_key(&word) {
            self.duplicates += 1;
            return false;
        }
        self.index.insert(word.clone(), self.vocab.len());
        self.vocab.push(word);
        self.data.extend_from_slice(vector);
        self.norms.push(vector.iter().map(|v| v * v).sum::<f64>().sqrt());
        true
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn word(&self, index: usize) -> &str {
        &self.vocab[index]
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn vector(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn norm(&self, index: usize) -> f64 {
        self.norms[index]
    }

    /// Vector for `word`, failing cleanly outside the vocabulary.
    pub fn lookup(&self, word: &str) -> Result<&[f64]> {
        self.index_of(word)
            .map(|i| self.vector(i))
            .ok_or_else(|| SsdError::UnknownWord(word.to_string()))
    }

    /// Rows dropped because their word had already been seen.
    pub fn duplicate_count(&self) -> usize {
        self.duplicates
    }

    /// Relative frequency of the word at `index`, if frequencies are attached.
    pub fn frequency(&self, index: usize) -> Option<f64> {
        self.frequencies.as_ref().map(|f| f[index])
    }

    pub fn has_frequencies(&self) -> bool {
        self.frequencies.is_some()
    }

    /// Attaches relative word frequencies. Words absent from `freqs` get 0.
    pub fn set_frequencies(&mut self, freqs: &HashMap<String, f64>) -> Result<()> {
        let mut total = 0.0;
        let mut out = vec![0.0; self.vocab.len()];
        for (word, &p) in freqs {
            if !(p.is_finite() && p >= 0.0) {
                return Err(SsdError::Config(format!(
                    "frequency for {word:?} must be a nonnegative number"
                )));
            }
            total += p;
            if let Some(i) = self.index_of(word) {
                out[i] = p;
            }
        }
        if total > 1.0 + 1e-9 {
            return Err(SsdError::Config(format!(
                "relative frequencies sum to {total}, expected at most 1"
            )));
        }
        self.frequencies = Some(out);
        Ok(())
    }
}

/// Reads a GloVe-style text file: one `word v1 .. vD` per line, with an
/// optional `N D` header line.
pub fn load_embeddings(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| SsdError::io(path, e))?;
    let reader = BufReader::new(file);

    let mut store: Option<EmbeddingStore> = None;
    let mut values = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| SsdError::io(path, e))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };

        if line_no == 1 {
            let rest: Vec<&str> = line.split_whitespace().collect();
            if rest.len() == 2 && rest[0].parse::<u64>().is_ok() {
                continue;
            }
        }

        values.clear();
        for field in fields {
            let v: f64 = field.parse().map_err(|_| SsdError::Format {
                line: line_no,
                msg: format!("cannot parse {field:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(SsdError::Format {
                    line: line_no,
                    msg: format!("non-finite value {field:?}"),
                });
            }
            values.push(v);
        }

        let store = match store.as_mut() {
            Some(s) => s,
            None => {
                if values.is_empty() {
                    return Err(SsdError::Format {
                        line: line_no,
                        msg: "row has no vector values".into(),
                    });
                }
                if let Some(d) = expected_dim {
                    if d != values.len() {
                        return Err(SsdError::DimensionMismatch {
                            expected: d,
                            got: values.len(),
                        });
                    }
                }
                store.insert(EmbeddingStore {
                    dim: values.len(),
                    vocab: Vec::new(),
                    index: HashMap::new(),
                    data: Vec::new(),
                    norms: Vec::new(),
                    frequencies: None,
                    duplicates: 0,
                })
            }
        };
        if values.len() != store.dim {
            return Err(SsdError::Format {
                line: line_no,
                msg: format!("expected {} values, found {}", store.dim, values.len()),
            });
        }
        store.push(word.to_string(), &values);
    }

    let store = store.ok_or_else(|| SsdError::EmptyInput(format!("{} has no rows", path.display())))?;
    if store.duplicates > 0 {
        warn!(
            "{}: {} duplicate word rows ignored (first occurrence kept)",
            path.display(),
            store.duplicates
        );
    }
    Ok(store)
}

/// Reads `word count` lines and normalizes the counts into relative frequencies.
pub fn load_frequencies(path: impl AsRef<Path>) -> Result<HashMap<String, f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| SsdError::io(path, e))?;
    let mut counts: Vec<(String, f64)> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| SsdError::io(path, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 {
            return Err(SsdError::Format {
                line: i + 1,
                msg: "expected `word count`".into(),
            });
        }
        let c: f64 = fields[1]
            .parse()
            .ok()
            .filter(|c: &f64| c.is_finite() && *c >= 0.0)
            .ok_or_else(|| SsdError::Format {
                line: i + 1,
                msg: format!("bad count {:?}", fields[1]),
            })?;
        counts.push((fields[0].to_string(), c));
    }
    let total: f64 = counts.iter().map(|(_, c)| c).sum();
    if total <= 0.0 {
        return Err(SsdError::EmptyInput(format!("{} has no counts", path.display())));
    }
    let mut out = HashMap::with_capacity(counts.len());
    for (w, c) in counts {
        *out.entry(w).or_insert(0.0) += c / total;
    }
    Ok(out)
}

/// Splits text into tokens.
pub trait Tokenizer: Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

/// Default tokenizer: lowercase, keep maximal runs of Unicode letters.
/// An apostrophe between two letters stays inside the token (`ai's`).
#[derive(Debug, Clone, Copy, Default)]
pub struct LetterTokenizer;

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

impl Tokenizer for LetterTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let lower = text.to_lowercase();
        let chars: Vec<char> = lower.chars().collect();
        let mut tokens = Vec::new();
        let mut current = String::new();
        for (i, &c) in chars.iter().enumerate() {
            let inner_apostrophe =
                is_apostrophe(c) && !current.is_empty() && chars.get(i + 1).is_some_and(|n| n.is_alphabetic());
            if c.is_alphabetic() || inner_apostrophe {
                current.push(c);
            } else if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
        tokens
    }
}

/// Tokenizes with the default [`LetterTokenizer`].
pub fn tokenize(text: &str) -> Vec<String> {
    LetterTokenizer.tokenize(text)
}

/// One author: their texts and outcome scores.
#[derive(Debug, Clone, PartialEq)]
pub struct AuthorRecord {
    pub author_id: String,
    pub texts: Vec<String>,
    pub outcomes: BTreeMap<String, f64>,
}

impl AuthorRecord {
    pub fn outcome(&self, name: &str) -> Result<f64> {
        self.outcomes.get(name).copied().ok_or_else(|| SsdError::Schema {
            record: 0,
            msg: format!("author {:?} has no outcome {name:?}", self.author_id),
        })
    }
}

/// Parses JSON-lines rows `{author_id, text, <outcome>...}` and groups them by author.
pub fn parse_corpus(reader: impl BufRead, outcome_names: &[String]) -> Result<Vec<AuthorRecord>> {
    let mut records: Vec<AuthorRecord> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();

    for (i, line) in reader.lines().enumerate() {
        let record_no = i + 1;
        let line = line.map_err(|e| SsdError::Schema {
            record: record_no,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| SsdError::Schema {
            record: record_no,
            msg: format!("invalid JSON: {e}"),
        })?;
        let obj = value.as_object().ok_or_else(|| SsdError::Schema {
            record: record_no,
            msg: "expected a JSON object".into(),
        })?;
        let get_str = |key: &str| -> Result<String> {
            obj.get(key)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| SsdError::Schema {
                    record: record_no,
                    msg: format!("missing string field {key:?}"),
                })
        };
        let author_id = get_str("author_id")?;
        let text = get_str("text")?;

        let mut outcomes = BTreeMap::new();
        for name in outcome_names {
            let v = obj.get(name).and_then(Value::as_f64).ok_or_else(|| SsdError::Schema {
                record: record_no,
                msg: format!("author {author_id:?}: missing numeric outcome {name:?}"),
            })?;
            if !v.is_finite() {
                return Err(SsdError::Schema {
                    record: record_no,
                    msg: format!("author {author_id:?}: outcome {name:?} is not finite"),
                });
            }
            outcomes.insert(name.clone(), v);
        }

        match by_id.get(&author_id) {
            Some(&idx) => {
                let existing = &mut records[idx];
                for (name, v) in &outcomes {
                    if existing.outcomes[name] != *v {
                        return Err(SsdError::Consistency {
                            author_id,
                            msg: format!(
                                "outcome {name:?} is {} in an earlier row but {v} in record {record_no}",
                                existing.outcomes[name]
                            ),
                        });
                    }
                }
                existing.texts.push(text);
            }
            None => {
                by_id.insert(author_id.clone(), records.len());
                records.push(AuthorRecord {
                    author_id,
                    texts: vec![text],
                    outcomes,
                });
            }
        }
    }
    if records.is_empty() {
        return Err(SsdError::EmptyInput("corpus has no records".into()));
    }
    Ok(records)
}

/// Loads a JSON-lines corpus file. See [`parse_corpus`].
pub fn load_corpus(path: impl AsRef<Path>, outcome_names: &[String]) -> Result<Vec<AuthorRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| SsdError::io(path, e))?;
    parse_corpus(BufReader::new(file), outcome_names)
}

/// Relative token frequencies over all texts of the corpus.
pub fn corpus_frequencies(records: &[AuthorRecord], tokenizer: &dyn Tokenizer) -> HashMap<String, f64> {
    let mut counts: HashMap<String, f64> = HashMap::new();
    let mut total = 0.0;
    for record in records {
        for text in &record.texts {
            for token in tokenizer.tokenize(text) {
                *counts.entry(token).or_insert(0.0) += 1.0;
                total += 1.0;
            }
        }
    }
    if total > 0.0 {
        for v in counts.values_mut() {
            *v /= total;
        }
    }
    counts
}

/// Terms denoting the concept under analysis.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Lexicon {
    terms: HashSet<String>,
}

impl Lexicon {
    /// Builds a lexicon; every term must be a single token under `tokenizer`.
    pub fn new<I, S>(terms: I, tokenizer: &dyn Tokenizer) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = HashSet::new();
        for term in terms {
            let tokens = tokenizer.tokenize(term.as_ref());
            match tokens.as_slice() {
                [one] => {
                    set.insert(one.clone());
                }
                _ => {
                    return Err(SsdError::Config(format!(
                        "lexicon term {:?} is not a single token",
                        term.as_ref()
                    )))
                }
            }
        }
        if set.is_empty() {
            return Err(SsdError::EmptyInput("lexicon has no terms".into()));
        }
        Ok(Lexicon { terms: set })
    }

    pub fn contains(&self, token: &str) -> bool {
        self.terms.contains(token)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }
}

/// Non-empty, non-`#` lines of a word-list file, trimmed.
pub fn read_word_list(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SsdError::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// Loads a lexicon file: one term per line, `#` starts a comment.
pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    Lexicon::new(read_word_list(path)?, &LetterTokenizer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_two_rows() {
        let f = write_tmp("w 1 2 3\nx 4 5 6\n");
        let store = load_embeddings(f.path(), None).unwrap();
        assert_eq!(store.dim(), 3);
        assert_eq!(store.len(), 2);
        assert_eq!(store.lookup("x").unwrap(), &[4.0, 5.0, 6.0]);
        assert!(matches!(store.lookup("y"), Err(SsdError::UnknownWord(_))));
    }

    #[test]
    fn inconsistent_row_names_line() {
        let mut s = String::new();
        for i in 0..4 {
            s.push_str(&format!("w{i} {}\n", vec!["0.5"; 300].join(" ")));
        }
        s.push_str(&format!("bad {}\n", vec!["0.5"; 299].join(" ")));
        let f = write_tmp(&s);
        match load_embeddings(f.path(), None) {
            Err(SsdError::Format { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_keeps_first() {
        let f = write_tmp("cat 1 0\ncat 0 1\n");
        let store = load_embeddings(f.path(), None).unwrap();
        assert_eq!(store.lookup("cat").unwrap(), &[1.0, 0.0]);
        assert_eq!(store.duplicate_count(), 1);
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn header_line_is_skipped() {
        let f = write_tmp("2 3\nw 1 2 3\nx 4 5 6\n");
        let store = load_embeddings(f.path(), Some(3)).unwrap();
        assert_eq!(store.len(), 2);
        assert!(matches!(
            load_embeddings(f.path(), Some(4)),
            Err(SsdError::DimensionMismatch { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn empty_file_is_empty_input() {
        let f = write_tmp("");
        assert!(matches!(load_embeddings(f.path(), None), Err(SsdError::EmptyInput(_))));
    }

    #[test]
    fn missing_file_is_io() {
        assert!(matches!(
            load_embeddings("/definitely/not/here.txt", None),
            Err(SsdError::Io { .. })
        ));
    }

    #[test]
    fn tokenizer_examples() {
        assert_eq!(
            tokenize("AI's potential is boundless..."),
            vec!["ai's", "potential", "is", "boundless"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("GPT-4 rocks!!"), vec!["gpt", "rocks"]);
        assert_eq!(tokenize("'quoted' dogs'"), vec!["quoted", "dogs"]);
    }

    fn outcomes(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn corpus_groups_by_author() {
        let data = r#"{"author_id":"a","text":"x","ADM":1.0}
{"author_id":"b","text":"y","ADM":2.0}
{"author_id":"c","text":"z","ADM":3.0}
"#;
        let recs = parse_corpus(data.as_bytes(), &outcomes(&["ADM"])).unwrap();
        assert_eq!(recs.len(), 3);

        let data = r#"{"author_id":"p7","text":"one","ADM":4.5}
{"author_id":"p7","text":"two","ADM":4.5}
"#;
        let recs = parse_corpus(data.as_bytes(), &outcomes(&["ADM"])).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].texts, vec!["one", "two"]);
    }

    #[test]
    fn corpus_conflict_and_schema_errors() {
        let data = r#"{"author_id":"p7","text":"one","ADM":4.5}
{"author_id":"p7","text":"two","ADM":4.6}
"#;
        assert!(matches!(
            parse_corpus(data.as_bytes(), &outcomes(&["ADM"])),
            Err(SsdError::Consistency { .. })
        ));
        let data = r#"{"author_id":"p7","text":"one","ADM":4.5}"#;
        match parse_corpus(data.as_bytes(), &outcomes(&["ADM", "RIV"])) {
            Err(SsdError::Schema { record, msg }) => {
                assert_eq!(record, 1);
                assert!(msg.contains("RIV"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lexicon_file_skips_comments() {
        let f = write_tmp("# concept terms\nAI\nrobot # inline\n\n");
        let lex = load_lexicon(f.path()).unwrap();
        assert_eq!(lex.len(), 2);
        assert!(lex.contains("ai"));
        assert!(lex.contains("robot"));
        let f = write_tmp("machine learning\n");
        assert!(matches!(load_lexicon(f.path()), Err(SsdError::Config(_))));
    }

    #[test]
    fn frequencies_are_relative() {
        let recs = vec![AuthorRecord {
            author_id: "a".into(),
            texts: vec!["the cat the".into()],
            outcomes: BTreeMap::new(),
        }];
        let f = corpus_frequencies(&recs, &LetterTokenizer);
        assert!((f["the"] - 2.0 / 3.0).abs() < 1e-15);
        assert!((f["cat"] - 1.0 / 3.0).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn retokenizing_is_a_fixed_point(text in "\\PC{0,80}") {
                let once = tokenize(&text);
                let twice = tokenize(&once.join(" "));
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn author_count_preserved(ids in proptest::collection::vec(0u8..20, 1..40)) {
                let mut data = String::new();
                for id in &ids {
                    data.push_str(&format!("{{\"author_id\":\"a{id}\",\"text\":\"t\",\"Y\":{id}}}\n"));
                }
                let recs = parse_corpus(data.as_bytes(), &["Y".to_string()]).unwrap();
                let distinct: HashSet<_> = ids.iter().collect();
                prop_assert_eq!(recs.len(), distinct.len());
            }
        }
    }

    #[test]
    fn reload_is_identical() {
        let f = write_tmp("a 1 2\nb 3 4\na 9 9\nc -1 0.5\n");
        let s1 = load_embeddings(f.path(), None).unwrap();
        let s2 = load_embeddings(f.path(), None).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.vocab(), &["a", "b", "c"]);
    }
}
