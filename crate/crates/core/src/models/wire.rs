//! Newline-delimited JSON messages spoken with external model servers.
//!
//! Lines are encoded the way Python's `json.dumps` does by default
//! (`", "` and `": "` separators, non-ASCII escaped as `\uXXXX`, floats in
//! `repr` form) so that requests are byte-identical to those produced by a
//! Python reference server's fixtures.

use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::error::{LergError, Result};

pub const PROTOCOL_NAME: &str = "lerg-score";
pub const PROTOCOL_VERSION: u32 = 1;

/// First line a server emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub protocol: String,
    pub version: u32,
    pub normalized: bool,
    pub max_batch: usize,
}

impl Handshake {
    pub fn check(&self) -> Result<()> {
        if self.protocol != PROTOCOL_NAME || self.version != PROTOCOL_VERSION {
            return Err(LergError::ModelProtocolError(format!(
                "unsupported protocol {} v{}",
                self.protocol, self.version
            )));
        }
        if self.max_batch == 0 {
            return Err(LergError::ModelProtocolError("server declared max_batch 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub id: String,
    pub contexts: Vec<Vec<String>>,
    pub response: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScoreReply {
    Scores { id: String, logprobs: Vec<Vec<f64>> },
    Error { id: String, error: ErrorBody },
}

impl ScoreReply {
    pub fn id(&self) -> &str {
        match self {
            ScoreReply::Scores { id, .. } | ScoreReply::Error { id, .. } => id,
        }
    }
}

/// Encodes `value` as one protocol line, without the trailing newline.
pub fn encode_line<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, PythonFormatter);
    value.serialize(&mut ser)?;
    String::from_utf8(buf).map_err(|e| LergError::ModelProtocolError(e.to_string()))
}

pub fn decode_handshake(line: &str) -> Result<Handshake> {
    let hs: Handshake = serde_json::from_str(line.trim_end())
        .map_err(|e| LergError::ModelProtocolError(format!("bad handshake `{}`: {e}", line.trim_end())))?;
    hs.check()?;
    Ok(hs)
}

pub fn decode_reply(line: &str) -> Result<ScoreReply> {
    serde_json::from_str(line.trim_end())
        .map_err(|e| LergError::ModelProtocolError(format!("bad reply line: {e}")))
}

/// Formats `v` like Python's `repr(float)`.
pub fn python_float_repr(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "Infinity".into() } else { "-Infinity".into() };
    }
    // Shortest round-trip digits via Rust's scientific formatting.
    let sci = format!("{v:e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    if (-4..16).contains(&exp) {
        let point = exp + 1;
        let body = if point <= 0 {
            format!("0.{}{}", "0".repeat((-point) as usize), digits)
        } else if point as usize >= digits.len() {
            format!("{}{}.0", digits, "0".repeat(point as usize - digits.len()))
        } else {
            let (a, b) = digits.split_at(point as usize);
            format!("{a}.{b}")
        };
        format!("{sign}{body}")
    } else {
        let (first, rest) = digits.split_at(1);
        let frac = if rest.is_empty() { String::new() } else { format!(".{rest}") };
        let esign = if exp < 0 { '-' } else { '+' };
        format!("{sign}{first}{frac}e{esign}{:02}", exp.abs())
    }
}

struct PythonFormatter;

impl Formatter for PythonFormatter {
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            writer.write_all(b", ")
        }
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            writer.write_all(b", ")
        }
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        writer.write_all(b": ")
    }

    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(python_float_repr(value).as_bytes())
    }

    fn write_string_fragment<W: ?Sized + io::Write>(&mut self, writer: &mut W, fragment: &str) -> io::Result<()> {
        let mut units = [0u16; 2];
        for ch in fragment.chars() {
            if ch.is_ascii() && ch != '\u{7f}' {
                writer.write_all(&[ch as u8])?;
            } else {
                for unit in ch.encode_utf16(&mut units) {
                    write!(writer, "\\u{unit:04x}")?;
                }
            }
        }
        Ok(())
    }
}
