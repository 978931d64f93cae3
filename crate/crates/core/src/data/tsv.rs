use std::fmt::Write as _;
use std::path::Path;

use super::{read_text, Corpus, TaggedSentence};
use crate::error::{Error, Result};

/// Parses `token<TAB>label` lines; blank lines separate sentences.
pub fn parse_tsv(text: &str, source_name: &str) -> Result<Corpus> {
    let mut out = Vec::new();
    let mut cur = TaggedSentence::default();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::parse(
                source_name,
                idx + 1,
                format!("expected token<TAB>label, found {} fields", fields.len()),
            ));
        }
        cur.words.push(fields[0].to_string());
        cur.labels.push(fields[1].to_string());
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

pub fn load_tsv(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    parse_tsv(&read_text(path)?, &path.display().to_string())
}

/// Renders a corpus in the format [`parse_tsv`] reads.
pub fn write_tsv(corpus: &[TaggedSentence]) -> String {
    let mut out = String::new();
    for (i, s) in corpus.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for (w, l) in s.words.iter().zip(&s.labels) {
            let _ = writeln!(out, "{w}\t{l}");
        }
    }
    out
}

pub fn save_tsv(path: impl AsRef<Path>, corpus: &[TaggedSentence]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_tsv(corpus)).map_err(|e| Error::io(path, e))
}
