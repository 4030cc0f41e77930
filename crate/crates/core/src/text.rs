//! Segmented text and dialogue examples.
//!
//! A [`SegmentedText`] is the unit of attribution: the context `x` and the
//! response `y` of an [`Example`] are both split into ordered segments, and
//! every explanation is an `M x N` matrix over those segments.

use serde::{Deserialize, Serialize};

use crate::error::{LergError, Result};

/// Ordered text units with their character spans in the source string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentedText {
    source: String,
    segments: Vec<String>,
    /// Half-open `(start, end)` spans, in characters (not bytes).
    offsets: Vec<(usize, usize)>,
}

impl SegmentedText {
    /// Builds a segmented text, checking the span invariants.
    pub fn new(
        source: impl Into<String>,
        segments: Vec<String>,
        offsets: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let source = source.into();
        if segments.is_empty() {
            return Err(LergError::EmptyText);
        }
        if segments.len() != offsets.len() {
            return Err(LergError::Validation(format!(
                "{} segments but {} offsets",
                segments.len(),
                offsets.len()
            )));
        }
        let chars: Vec<char> = source.chars().collect();
        let mut prev_end = 0usize;
        for (k, (seg, &(start, end))) in segments.iter().zip(&offsets).enumerate() {
            if start >= end || (k > 0 && start < prev_end) || end > chars.len() {
                return Err(LergError::Validation(format!(
                    "segment {k} has invalid span ({start}, {end})"
                )));
            }
            let slice: String = chars[start..end].iter().collect();
            if &slice != seg {
                return Err(LergError::Validation(format!(
                    "segment {k} `{seg}` does not match source span `{slice}`"
                )));
            }
            prev_end = end;
        }
        Ok(Self {
            source,
            segments,
            offsets,
        })
    }

    /// Segments already-split units by joining them with single spaces.
    pub fn from_segments<S: AsRef<str>>(units: &[S]) -> Result<Self> {
        let mut source = String::new();
        let mut segments = Vec::with_capacity(units.len());
        let mut offsets = Vec::with_capacity(units.len());
        let mut cursor = 0usize;
        for (k, unit) in units.iter().enumerate() {
            let unit = unit.as_ref();
            if unit.is_empty() {
                return Err(LergError::Validation(format!("segment {k} is empty")));
            }
            if k > 0 {
                source.push(' ');
                cursor += 1;
            }
            let len = unit.chars().count();
            source.push_str(unit);
            segments.push(unit.to_string());
            offsets.push((cursor, cursor + len));
            cursor += len;
        }
        Self::new(source, segments, offsets)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn offsets(&self) -> &[(usize, usize)] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Segments joined with single spaces.
    pub fn joined(&self) -> String {
        self.segments.join(" ")
    }
}

/// Strategy for splitting raw text into attribution units.
pub trait Segmenter: Send + Sync {
    fn segment(&self, text: &str) -> Result<SegmentedText>;
}

/// Maximal runs of non-whitespace characters.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceSegmenter;

impl Segmenter for WhitespaceSegmenter {
    fn segment(&self, text: &str) -> Result<SegmentedText> {
        segment_whitespace(text)
    }
}

/// One segment per non-whitespace character.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharSegmenter;

impl Segmenter for CharSegmenter {
    fn segment(&self, text: &str) -> Result<SegmentedText> {
        let mut segments = Vec::new();
        let mut offsets = Vec::new();
        for (pos, ch) in text.chars().enumerate() {
            if !ch.is_whitespace() {
                segments.push(ch.to_string());
                offsets.push((pos, pos + 1));
            }
        }
        if segments.is_empty() {
            return Err(LergError::EmptyText);
        }
        SegmentedText::new(text, segments, offsets)
    }
}

/// Splits `text` into maximal whitespace-delimited runs.
pub fn segment_whitespace(text: &str) -> Result<SegmentedText> {
    let mut segments = Vec::new();
    let mut offsets = Vec::new();
    let mut current = String::new();
    let mut start = 0usize;
    let mut pos = 0usize;
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !current.is_empty() {
                segments.push(std::mem::take(&mut current));
                offsets.push((start, pos));
            }
        } else {
            if current.is_empty() {
                start = pos;
            }
            current.push(ch);
        }
        pos += 1;
    }
    if !current.is_empty() {
        segments.push(current);
        offsets.push((start, pos));
    }
    if segments.is_empty() {
        return Err(LergError::EmptyText);
    }
    SegmentedText::new(text, segments, offsets)
}

/// A context/response pair to be explained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub context: SegmentedText,
    pub response: SegmentedText,
}

impl Example {
    pub fn new(id: impl Into<String>, context: SegmentedText, response: SegmentedText) -> Self {
        Self {
            id: id.into(),
            context,
            response,
        }
    }

    /// Segments both sides with `segmenter`.
    pub fn from_text(
        id: impl Into<String>,
        context: &str,
        response: &str,
        segmenter: &dyn Segmenter,
    ) -> Result<Self> {
        Ok(Self::new(
            id,
            segmenter.segment(context)?,
            segmenter.segment(response)?,
        ))
    }

    /// Whitespace-segmented example, the common case in tests.
    pub fn parse(id: impl Into<String>, context: &str, response: &str) -> Result<Self> {
        Self::from_text(id, context, response, &WhitespaceSegmenter)
    }

    /// Context length `M`.
    pub fn context_len(&self) -> usize {
        self.context.len()
    }

    /// Response length `N`.
    pub fn response_len(&self) -> usize {
        self.response.len()
    }
}
