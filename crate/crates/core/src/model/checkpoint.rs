//! Plain-text model checkpoints.
//!
//! ```text
//! agformer-checkpoint 1
//! config backbone=gcn layers=4 in_dim=7 ...
//! meta fold=0
//! param gnn.0.w 7 256
//! <one line per row, space separated>
//! ```
//!
//! Values are written with Rust's shortest round-trip formatting, so a
//! loaded model reproduces the saved one bit for bit.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{Model, ModelConfig};

const MAGIC: &str = "agformer-checkpoint";
const VERSION: u32 = 1;

fn config_line(c: &ModelConfig) -> String {
    format!(
        "config backbone={} layers={} in_dim={} hidden={} proj={} ffn={} dropout={:?} classes={} anchors={} ln_eps={:?}",
        c.backbone,
        c.num_gnn_layers,
        c.in_dim,
        c.hidden_dim,
        c.proj_dim,
        c.ffn_hidden,
        c.dropout,
        c.num_classes,
        c.anchor_mode,
        c.ln_eps
    )
}

pub fn write_checkpoint<W: Write>(out: W, model: &Model, meta: &[(String, String)]) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{MAGIC} {VERSION}")?;
    writeln!(w, "{}", config_line(model.config()))?;
    for (k, v) in meta {
        writeln!(w, "meta {k}={v}")?;
    }
    for (name, t) in model.params().iter() {
        writeln!(w, "param {name} {} {}", t.rows(), t.cols())?;
        for r in 0..t.rows() {
            let row: Vec<String> = t.row(r).iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
    }
    w.flush()
}

pub fn save_checkpoint(path: &Path, model: &Model, meta: &[(String, String)]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(file, model, meta).map_err(|e| Error::io(path, e))
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    file: String,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<Option<String>> {
        match self.inner.next() {
            None => Ok(None),
            Some(l) => {
                self.line += 1;
                l.map(Some).map_err(|e| Error::io(Path::new(&self.file), e))
            }
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            file: self.file.clone(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn require(&mut self, what: &str) -> Result<String> {
        self.next()?.ok_or_else(|| self.err(format!("unexpected end of file, expected {what}")))
    }
}

fn parse_config<R: BufRead>(lines: &Lines<R>, line: &str) -> Result<ModelConfig> {
    let rest = line
        .strip_prefix("config ")
        .ok_or_else(|| lines.err("expected config line"))?;
    let mut c = ModelConfig::new(1, 1);
    for tok in rest.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| lines.err(format!("malformed config entry {tok:?}")))?;
        let bad = |_| lines.err(format!("bad value for {k}: {v:?}"));
        match k {
            "backbone" => c.backbone = v.parse()?,
            "layers" => c.num_gnn_layers = v.parse().map_err(bad)?,
            "in_dim" => c.in_dim = v.parse().map_err(bad)?,
            "hidden" => c.hidden_dim = v.parse().map_err(bad)?,
            "proj" => c.proj_dim = v.parse().map_err(bad)?,
            "ffn" => c.ffn_hidden = v.parse().map_err(bad)?,
            "classes" => c.num_classes = v.parse().map_err(bad)?,
            "anchors" => c.anchor_mode = v.parse()?,
            "dropout" => c.dropout = v.parse().map_err(|_| lines.err(format!("bad dropout {v:?}")))?,
            "ln_eps" => c.ln_eps = v.parse().map_err(|_| lines.err(format!("bad ln_eps {v:?}")))?,
            _ => return Err(lines.err(format!("unknown config key {k:?}"))),
        }
    }
    Ok(c)
}

/// Reads a checkpoint; `name` is used in error messages.
pub fn read_checkpoint<R: BufRead>(input: R, name: &str) -> Result<(Model, Vec<(String, String)>)> {
    let mut lines = Lines {
        inner: input.lines(),
        file: name.to_string(),
        line: 0,
    };
    let header = lines.require("header")?;
    match header.split_once(' ') {
        Some((MAGIC, v)) if v.trim() == VERSION.to_string() => {}
        Some((MAGIC, v)) => return Err(lines.err(format!("unsupported checkpoint version {v}"))),
        _ => return Err(lines.err("not a checkpoint file")),
    }
    let cfg_line = lines.require("config")?;
    let config = parse_config(&lines, &cfg_line)?;
    let mut meta = Vec::new();
    let mut named = Vec::new();
    while let Some(line) = lines.next()? {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(kv) = line.strip_prefix("meta ") {
            let (k, v) = kv.split_once('=').ok_or_else(|| lines.err("malformed meta line"))?;
            meta.push((k.to_string(), v.to_string()));
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let (pname, rows, cols) = match parts.as_slice() {
            ["param", n, r, c] => {
                let r: usize = r.parse().map_err(|_| lines.err("bad row count"))?;
                let c: usize = c.parse().map_err(|_| lines.err("bad column count"))?;
                (n.to_string(), r, c)
            }
            _ => return Err(lines.err(format!("expected param header, found {line:?}"))),
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let row = lines.require("parameter row")?;
            let before = data.len();
            for tok in row.split_whitespace() {
                data.push(tok.parse::<f64>().map_err(|_| lines.err(format!("bad number {tok:?}")))?);
            }
            if data.len() - before != cols {
                return Err(lines.err(format!("expected {cols} values, found {}", data.len() - before)));
            }
        }
        named.push((pname, Tensor::from_vec(rows, cols, data)?));
    }
    Ok((Model::from_named(config, named)?, meta))
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, Vec<(String, String)>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file), &path.display().to_string())
}
