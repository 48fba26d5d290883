//! Plain-text model checkpoints.
//!
//! ```text
//! fedsim-checkpoint 1
//! version <global round>
//! layers <count>
//! layer <in_dim> <out_dim> <activation>
//! w <in_dim values>          (repeated out_dim times, row-major)
//! b <out_dim values>
//! ...                        (next layer)
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so a
//! write/read cycle reproduces every parameter bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, Layer, LayeredModel};
use crate::error::{Error, Result};

const MAGIC: &str = "fedsim-checkpoint 1";

pub fn checkpoint_string(model: &LayeredModel) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "version {}", model.version()).unwrap();
    writeln!(out, "layers {}", model.layer_count()).unwrap();
    for layer in model.layers() {
        writeln!(
            out,
            "layer {} {} {}",
            layer.in_dim(),
            layer.out_dim(),
            layer.activation
        )
        .unwrap();
        for row in layer.weights.rows() {
            out.push('w');
            for v in row {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
        out.push('b');
        for v in &layer.biases {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_checkpoint(model: &LayeredModel, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_string(model)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<LayeredModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text, path)
}

pub fn parse_checkpoint(text: &str, path: &Path) -> Result<LayeredModel> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| {
        lines.next().ok_or_else(|| {
            Error::parse(path, 0, format!("unexpected end of file, expected {what}"))
        })
    };

    let (n, magic) = next("header")?;
    if magic.trim() != MAGIC {
        return Err(Error::parse(path, n, "not a fedsim checkpoint"));
    }
    let (n, line) = next("version")?;
    let version: u64 =
        keyed_value(line, "version").ok_or_else(|| Error::parse(path, n, "bad version line"))?;
    let (n, line) = next("layer count")?;
    let count: usize =
        keyed_value(line, "layers").ok_or_else(|| Error::parse(path, n, "bad layers line"))?;

    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, line) = next("layer header")?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "layer" {
            return Err(Error::parse(path, n, "bad layer header"));
        }
        let in_dim: usize = parts[1]
            .parse()
            .map_err(|_| Error::parse(path, n, "bad in_dim"))?;
        let out_dim: usize = parts[2]
            .parse()
            .map_err(|_| Error::parse(path, n, "bad out_dim"))?;
        let activation: Activation = parts[3]
            .parse()
            .map_err(|e: Error| Error::parse(path, n, e.to_string()))?;

        let mut weights = Vec::with_capacity(in_dim * out_dim);
        for _ in 0..out_dim {
            let (n, line) = next("weight row")?;
            let row =
                values(line, "w", in_dim).ok_or_else(|| Error::parse(path, n, "bad weight row"))?;
            weights.extend(row);
        }
        let (n, line) = next("bias row")?;
        let biases =
            values(line, "b", out_dim).ok_or_else(|| Error::parse(path, n, "bad bias row"))?;

        let weights =
            Array2::from_shape_vec((out_dim, in_dim), weights).expect("row lengths checked");
        layers.push(Layer::new(weights, Array1::from(biases), activation)?);
    }
    LayeredModel::new(layers, version)
}

fn keyed_value<T: std::str::FromStr>(line: &str, key: &str) -> Option<T> {
    let rest = line.strip_prefix(key)?;
    rest.trim().parse().ok()
}

fn values(line: &str, tag: &str, expected: usize) -> Option<Vec<f64>> {
    let mut parts = line.split_whitespace();
    if parts.next()? != tag {
        return None;
    }
    let parsed: Vec<f64> = parts.map(|p| p.parse().ok()).collect::<Option<_>>()?;
    (parsed.len() == expected).then_some(parsed)
}
