//! Plain-text parameter checkpoints.
//!
//! ```text
//! migan-mlp 1
//! layers <L>
//! layer <d_out> <d_in> <activation>
//! w <d_in values>          (d_out lines, row-major)
//! b <d_out values>
//! ...                      (repeated per layer)
//! ```
//!
//! Numbers use the shortest decimal form that parses back to the identical
//! `f64`, so a save/load cycle is lossless.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use super::mlp::{Activation, Dense, MlpParams};
use crate::error::{Error, Result};

pub const MLP_MAGIC: &str = "migan-mlp";
pub const MLP_VERSION: u32 = 1;

/// Line cursor that remembers 1-based line numbers for error messages.
pub struct LineCursor<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> LineCursor<'a> {
    pub fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
            line: 0,
        }
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::Checkpoint {
            line: self.line,
            message: message.into(),
        }
    }

    /// Next non-blank line split into whitespace tokens.
    pub fn next_tokens(&mut self) -> Result<Vec<&'a str>> {
        for (idx, line) in self.lines.by_ref() {
            self.line = idx + 1;
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if !tokens.is_empty() {
                return Ok(tokens);
            }
        }
        Err(self.error("unexpected end of checkpoint"))
    }

    /// Next line, which must start with `tag`; returns the remaining tokens.
    pub fn expect(&mut self, tag: &str) -> Result<Vec<&'a str>> {
        let tokens = self.next_tokens()?;
        if tokens[0] != tag {
            return Err(self.error(format!("expected {tag:?}, found {:?}", tokens[0])));
        }
        Ok(tokens[1..].to_vec())
    }

    pub fn parse<T: std::str::FromStr>(&self, token: &str) -> Result<T> {
        token
            .parse()
            .map_err(|_| self.error(format!("cannot parse {token:?}")))
    }

    pub fn parse_all<T: std::str::FromStr>(&self, tokens: &[&str], expected: usize) -> Result<Vec<T>> {
        if tokens.len() != expected {
            return Err(self.error(format!("expected {expected} values, found {}", tokens.len())));
        }
        tokens.iter().map(|t| self.parse(t)).collect()
    }
}

fn push_values(out: &mut String, tag: &str, values: impl Iterator<Item = f64>) {
    out.push_str(tag);
    for v in values {
        let _ = write!(out, " {v}");
    }
    out.push('\n');
}

pub fn write_mlp(out: &mut String, params: &MlpParams) {
    let _ = writeln!(out, "{MLP_MAGIC} {MLP_VERSION}");
    let _ = writeln!(out, "layers {}", params.layers().len());
    for layer in params.layers() {
        let _ = writeln!(
            out,
            "layer {} {} {}",
            layer.output_dim(),
            layer.input_dim(),
            layer.activation
        );
        for i in 0..layer.output_dim() {
            push_values(out, "w", layer.weight.row(i).iter().copied());
        }
        push_values(out, "b", layer.bias.iter().copied());
    }
}

pub fn read_mlp(cursor: &mut LineCursor<'_>) -> Result<MlpParams> {
    let header = cursor.expect(MLP_MAGIC)?;
    let version: u32 = cursor.parse(header.first().copied().unwrap_or(""))?;
    if version != MLP_VERSION {
        return Err(cursor.error(format!("unsupported checkpoint version {version}")));
    }
    let count: usize = {
        let t = cursor.expect("layers")?;
        cursor.parse(t.first().copied().unwrap_or(""))?
    };
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let t = cursor.expect("layer")?;
        if t.len() != 3 {
            return Err(cursor.error("layer line needs d_out, d_in and activation"));
        }
        let d_out: usize = cursor.parse(t[0])?;
        let d_in: usize = cursor.parse(t[1])?;
        let activation: Activation = t[2].parse().map_err(|e: String| cursor.error(e))?;
        let mut weight = DMatrix::zeros(d_out, d_in);
        for i in 0..d_out {
            let tokens = cursor.expect("w")?;
            let row: Vec<f64> = cursor.parse_all(&tokens, d_in)?;
            for (j, v) in row.into_iter().enumerate() {
                weight[(i, j)] = v;
            }
        }
        let tokens = cursor.expect("b")?;
        let bias: Vec<f64> = cursor.parse_all(&tokens, d_out)?;
        layers.push(Dense {
            weight,
            bias: DVector::from_vec(bias),
            activation,
        });
    }
    MlpParams::new(layers)
}

impl MlpParams {
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::new();
        write_mlp(&mut out, self);
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        read_mlp(&mut LineCursor::new(text))
    }
}
