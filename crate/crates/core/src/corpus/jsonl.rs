//! One JSON document per line.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::document::Document;
use crate::error::{CorefError, Result};

pub fn parse_jsonl<R: BufRead>(input: R) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut doc: Document =
            serde_json::from_str(&line).map_err(|e| CorefError::parse(idx + 1, e.to_string()))?;
        doc.validate().map_err(|e| CorefError::parse(idx + 1, e.to_string()))?;
        doc.canonicalize();
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_jsonl<W: Write>(mut out: W, docs: &[Document]) -> Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut out, doc).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl_file(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| CorefError::file(path, e))?;
    parse_jsonl(BufReader::new(file)).map_err(|e| match e {
        CorefError::Parse { line, msg } => CorefError::Parse { line, msg: format!("{}: {msg}", path.display()) },
        other => other,
    })
}

pub fn write_jsonl_file(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| CorefError::file(path, e))?;
    write_jsonl(BufWriter::new(file), docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_errors() {
        let line = r#"{"doc_key":"d","genre":7,"sentences":[["a","b"]],"speakers":[0,0],"clusters":[[[1,1],[0,0]]]}"#;
        let docs = parse_jsonl(line.as_bytes()).unwrap();
        assert_eq!(docs[0].clusters[0][0].start, 0);
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &docs).unwrap();
        assert_eq!(parse_jsonl(&buf[..]).unwrap(), docs);

        let bad = format!("{line}\n{{\"doc_key\":1}}\n");
        assert!(matches!(parse_jsonl(bad.as_bytes()), Err(CorefError::Parse { line: 2, .. })));
        let out_of_range = r#"{"doc_key":"d","sentences":[["a"]],"speakers":[0],"clusters":[[[0,3]]]}"#;
        assert!(parse_jsonl(out_of_range.as_bytes()).is_err());
    }
}
