use std::path::Path;

use super::{read_text, Corpus, TaggedSentence};
use crate::error::{Error, Result};

#[derive(Default)]
struct Pending {
    words: Vec<String>,
    labels: Vec<String>,
    heads: Vec<Option<usize>>,
    lines: Vec<usize>,
}

impl Pending {
    fn finish(&mut self, source: &str, out: &mut Corpus) -> Result<()> {
        if self.words.is_empty() {
            return Ok(());
        }
        let p = std::mem::take(self);
        let n = p.words.len();
        let heads = if p.heads.iter().all(Option::is_some) {
            let heads: Vec<usize> = p.heads.into_iter().flatten().collect();
            if let Some(t) = heads.iter().position(|&h| h > n) {
                return Err(Error::parse(
                    source,
                    p.lines[t],
                    format!("head {} outside a {n}-token sentence", heads[t]),
                ));
            }
            Some(heads)
        } else {
            None
        };
        out.push(TaggedSentence {
            words: p.words,
            labels: p.labels,
            heads,
        });
        Ok(())
    }
}

/// Parses CoNLL-U text: FORM as the word, UPOS as the label, HEAD as the
/// gold head when numeric. Multiword ranges and empty nodes are skipped.
pub fn parse_conllu(text: &str, source_name: &str) -> Result<Corpus> {
    let mut out = Vec::new();
    let mut cur = Pending::default();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            cur.finish(source_name, &mut out)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::parse(
                source_name,
                lineno,
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let id: usize = id
            .parse()
            .map_err(|_| Error::parse(source_name, lineno, format!("bad token id {id:?}")))?;
        if id != cur.words.len() + 1 {
            return Err(Error::parse(
                source_name,
                lineno,
                format!("token id {id} out of sequence"),
            ));
        }
        if cols[1].is_empty() || cols[3].is_empty() {
            return Err(Error::parse(source_name, lineno, "empty FORM or UPOS"));
        }
        cur.words.push(cols[1].to_string());
        cur.labels.push(cols[3].to_string());
        cur.heads.push(cols[6].parse().ok());
        cur.lines.push(lineno);
    }
    cur.finish(source_name, &mut out)?;
    Ok(out)
}

pub fn load_conllu(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    parse_conllu(&read_text(path)?, &path.display().to_string())
}
