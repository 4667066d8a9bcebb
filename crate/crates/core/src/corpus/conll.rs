//! CoNLL-2012 column format.
//!
//! Token lines have at least 12 whitespace-separated columns: document id, part,
//! word index, word, ..., speaker (column 10), ..., coreference (last column).
//! Blank lines end sentences; `#begin document` / `#end document` delimit documents.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use crate::document::{canonicalize_clusters, genre_id, Cluster, Document, Span};
use crate::error::{CorefError, Result};

const MIN_COLUMNS: usize = 12;
const SPEAKER_COLUMN: usize = 9;

pub fn parse_conll<R: BufRead>(input: R) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut current: Option<DocBuilder> = None;
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("#begin document") {
            if let Some(open) = current.take() {
                docs.push(open.finish()?);
            }
            current = Some(DocBuilder::new(parse_begin(rest, line_no)?));
            continue;
        }
        if trimmed.starts_with("#end document") {
            match current.take() {
                Some(open) => docs.push(open.finish()?),
                None => return Err(CorefError::parse(line_no, "#end document without #begin")),
            }
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        if trimmed.is_empty() {
            if let Some(open) = current.as_mut() {
                open.end_sentence();
            }
            continue;
        }
        let cols: Vec<&str> = trimmed.split_whitespace().collect();
        if cols.len() < MIN_COLUMNS {
            return Err(CorefError::parse(
                line_no,
                format!("expected at least {MIN_COLUMNS} columns, found {}", cols.len()),
            ));
        }
        let builder = current.get_or_insert_with(|| {
            let part = cols[1].parse::<usize>().map(|p| format!("{p}")).unwrap_or_else(|_| cols[1].to_string());
            DocBuilder::new(format!("{}_{}", cols[0], part))
        });
        builder.token(cols[3], cols[SPEAKER_COLUMN], cols[cols.len() - 1], line_no)?;
    }
    if let Some(open) = current.take() {
        docs.push(open.finish()?);
    }
    Ok(docs)
}

/// `#begin document (name); part 000` → `name_0`.
fn parse_begin(rest: &str, line_no: usize) -> Result<String> {
    let rest = rest.trim();
    let (name, part) = match rest.split_once(';') {
        Some((name, part)) => (name.trim(), part.trim()),
        None => (rest, ""),
    };
    let name = name.trim_start_matches('(').trim_end_matches(')');
    if name.is_empty() {
        return Err(CorefError::parse(line_no, "document name missing"));
    }
    let part = part.strip_prefix("part").map(str::trim).unwrap_or("0");
    let part: usize = part
        .parse()
        .map_err(|_| CorefError::parse(line_no, format!("bad part number {part:?}")))?;
    Ok(format!("{name}_{part}"))
}

struct DocBuilder {
    doc_key: String,
    sentences: Vec<Vec<String>>,
    sentence: Vec<String>,
    speakers: Vec<usize>,
    speaker_ids: HashMap<String, usize>,
    open: HashMap<usize, Vec<(usize, usize)>>,
    clusters: BTreeMap<usize, Cluster>,
    tokens: usize,
}

impl DocBuilder {
    fn new(doc_key: String) -> Self {
        DocBuilder {
            doc_key,
            sentences: Vec::new(),
            sentence: Vec::new(),
            speakers: Vec::new(),
            speaker_ids: HashMap::new(),
            open: HashMap::new(),
            clusters: BTreeMap::new(),
            tokens: 0,
        }
    }

    fn end_sentence(&mut self) {
        if !self.sentence.is_empty() {
            self.sentences.push(std::mem::take(&mut self.sentence));
        }
    }

    fn token(&mut self, word: &str, speaker: &str, coref: &str, line_no: usize) -> Result<()> {
        let t = self.tokens;
        let next_id = self.speaker_ids.len();
        let sid = *self.speaker_ids.entry(speaker.to_string()).or_insert(next_id);
        self.speakers.push(sid);
        self.sentence.push(word.to_string());
        self.tokens += 1;
        if coref == "-" {
            return Ok(());
        }
        for part in coref.split('|') {
            let opens = part.starts_with('(');
            let closes = part.ends_with(')');
            let digits = part.trim_start_matches('(').trim_end_matches(')');
            let id: usize = digits
                .parse()
                .map_err(|_| CorefError::parse(line_no, format!("malformed coreference field {coref:?}")))?;
            if !opens && !closes {
                return Err(CorefError::parse(line_no, format!("malformed coreference field {coref:?}")));
            }
            if opens {
                self.open.entry(id).or_default().push((t, line_no));
            }
            if closes {
                let (start, _) = self
                    .open
                    .get_mut(&id)
                    .and_then(Vec::pop)
                    .ok_or_else(|| CorefError::parse(line_no, format!("cluster {id} closed but never opened")))?;
                self.clusters.entry(id).or_default().push(Span::new(start, t));
            }
        }
        Ok(())
    }

    fn finish(mut self) -> Result<Document> {
        self.end_sentence();
        if let Some((_, &(_, line))) = self.open.iter().find_map(|(id, v)| v.first().map(|o| (id, o))) {
            return Err(CorefError::parse(line, "coreference bracket opened here is never closed"));
        }
        // A span claimed by two clusters stays with the lower cluster id.
        let mut seen = std::collections::HashSet::new();
        let mut clusters: Vec<Cluster> = self
            .clusters
            .into_values()
            .map(|c| c.into_iter().filter(|s| seen.insert(*s)).collect())
            .collect();
        canonicalize_clusters(&mut clusters);
        let doc = Document {
            genre: genre_id(&self.doc_key),
            doc_key: self.doc_key,
            sentences: self.sentences,
            speakers: self.speakers,
            clusters,
        };
        doc.validate()?;
        Ok(doc)
    }
}

/// Writes `clusters` over the tokens of `doc` in the 12-column layout, suitable as a
/// response file for external scorers. Unused columns hold `-`.
pub fn write_conll<W: Write>(out: &mut W, doc: &Document, clusters: &[Cluster]) -> Result<()> {
    let n = doc.num_tokens();
    let mut fields: Vec<Vec<String>> = vec![Vec::new(); n];
    let mut ordered: Vec<(usize, Span)> = clusters
        .iter()
        .enumerate()
        .flat_map(|(id, c)| c.iter().map(move |&s| (id, s)))
        .collect();
    // Longer spans open first and close last so brackets nest.
    ordered.sort_by_key(|&(id, s)| (s.start, std::cmp::Reverse(s.end), id));
    for &(id, s) in &ordered {
        if s.end >= n {
            return Err(CorefError::Invalid(format!("span {s} outside document {}", doc.doc_key)));
        }
        if s.start == s.end {
            fields[s.start].push(format!("({id})"));
        } else {
            fields[s.start].push(format!("({id}"));
        }
    }
    ordered.sort_by_key(|&(id, s)| (s.end, std::cmp::Reverse(s.start), id));
    for &(id, s) in &ordered {
        if s.start != s.end {
            fields[s.end].push(format!("{id})"));
        }
    }
    let (name, part) = match doc.doc_key.rsplit_once('_') {
        Some((name, part)) if part.parse::<usize>().is_ok() => (name, part.parse::<usize>().unwrap()),
        _ => (doc.doc_key.as_str(), 0),
    };
    writeln!(out, "#begin document ({name}); part {part:03}")?;
    let mut t = 0;
    for sentence in &doc.sentences {
        for (w, word) in sentence.iter().enumerate() {
            let coref = if fields[t].is_empty() { "-".to_string() } else { fields[t].join("|") };
            writeln!(
                out,
                "{name}\t{part}\t{w}\t{word}\t-\t-\t-\t-\t-\tspeaker{}\t-\t{coref}",
                doc.speakers[t]
            )?;
            t += 1;
        }
        writeln!(out)?;
    }
    writeln!(out, "#end document")?;
    Ok(())
}
