//! JSONL corpus loading.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use lerg_core::text::Segmenter;
use lerg_core::{Example, LergError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    id: String,
    context: String,
    response: String,
}

/// A rejected line, numbered from 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Default)]
pub struct Corpus {
    pub examples: Vec<Example>,
    /// Lines skipped in lenient mode.
    pub skipped: Vec<LineError>,
}

fn parse_line(text: &str, segmenter: &dyn Segmenter) -> std::result::Result<Example, String> {
    let line: Line = serde_json::from_str(text).map_err(|e| format!("malformed JSON: {e}"))?;
    if line.id.is_empty() {
        return Err("empty id".into());
    }
    let context = segmenter
        .segment(&line.context)
        .map_err(|_| format!("example `{}` has an empty context", line.id))?;
    let response = segmenter
        .segment(&line.response)
        .map_err(|_| format!("example `{}` has an empty response", line.id))?;
    Ok(Example::new(line.id, context, response))
}

/// Reads examples in file order. Blank lines are ignored. In strict mode
/// the first bad line is an error; otherwise bad lines are logged, kept in
/// [`Corpus::skipped`] and the rest still load.
pub fn ingest_jsonl(path: &Path, strict: bool, segmenter: &dyn Segmenter) -> Result<Corpus> {
    let file = std::fs::File::open(path)
        .map_err(|e| LergError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut corpus = Corpus::default();
    let mut ids = HashSet::new();
    for (k, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let number = k + 1;
        let parsed = parse_line(&line, segmenter).and_then(|ex| {
            if ids.insert(ex.id.clone()) {
                Ok(ex)
            } else {
                Err(format!("duplicate id `{}`", ex.id))
            }
        });
        match parsed {
            Ok(ex) => corpus.examples.push(ex),
            Err(message) => {
                let err = LineError { line: number, message };
                if strict {
                    return Err(LergError::Validation(format!("{}: {err}", path.display())));
                }
                log::warn!("{}: skipping {err}", path.display());
                corpus.skipped.push(err);
            }
        }
    }
    if corpus.examples.is_empty() {
        return Err(LergError::Validation(format!("{} contains no usable examples", path.display())));
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lerg_core::text::WhitespaceSegmenter;
    use std::io::Write;

    fn write(lines: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(lines.as_bytes()).unwrap();
        f
    }

    const GOOD: &str = r#"{"id": "a", "context": "hello there", "response": "hi"}"#;

    #[test]
    fn valid_file_loads_in_order() {
        let text = format!(
            "{GOOD}\n{}\n\n{}\n",
            r#"{"id": "b", "context": "how are you", "response": "fine thanks"}"#,
            r#"{"id": "c", "context": "bye", "response": "see you"}"#
        );
        let f = write(&text);
        let c = ingest_jsonl(f.path(), true, &WhitespaceSegmenter).unwrap();
        let ids: Vec<&str> = c.examples.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(c.examples[1].context_len(), 3);
    }

    #[test]
    fn malformed_line_is_named() {
        let text = format!("{GOOD}\nnot json\n{}\n", r#"{"id": "c", "context": "x", "response": "y"}"#);
        let f = write(&text);
        let err = ingest_jsonl(f.path(), true, &WhitespaceSegmenter).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert_eq!(err.exit_code(), 1);
        let c = ingest_jsonl(f.path(), false, &WhitespaceSegmenter).unwrap();
        assert_eq!(c.examples.len(), 2);
        assert_eq!(c.skipped[0].line, 2);
    }

    #[test]
    fn empty_response_is_a_validation_error() {
        let f = write(&format!("{GOOD}\n{}\n", r#"{"id": "b", "context": "x", "response": "  "}"#));
        let err = ingest_jsonl(f.path(), true, &WhitespaceSegmenter).unwrap_err();
        assert!(matches!(err, LergError::Validation(ref m) if m.contains("line 2") && m.contains("empty response")));
    }

    #[test]
    fn empty_file_and_duplicates() {
        let f = write("\n");
        assert!(ingest_jsonl(f.path(), false, &WhitespaceSegmenter).is_err());
        let f = write(&format!("{GOOD}\n{GOOD}\n"));
        assert!(ingest_jsonl(f.path(), true, &WhitespaceSegmenter).is_err());
    }
}
