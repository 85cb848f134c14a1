//! Line-oriented, diff-able text formats.
//!
//! Detections: header `#cosmot-det v1 dim=<d>`, then one detection per
//! line as `frame det_id class confidence cx cy w h d e_1 ... e_d`, with
//! an optional trailing `rle=<w>x<h>:<counts>` mask. Tracks and ground
//! truth: header `#cosmot-trk v1`, lines `frame track_id class cx cy w h`
//! plus the same optional mask token. Models: header with dims, loss and
//! seed, then one matrix row per line. History: CSV of
//! step,loss,violation_rate.
//!
//! Floats are printed with the shortest representation that parses back
//! to the identical value, so write-then-read is exact.

use crate::evaluator::AnnotatedObject;
use crate::hypersphere::FeatureVector;
use crate::losses::LossKind;
use crate::mask::RleMask;
use crate::tracker::{BBox, Detection};
use crate::trainer::{HistoryRow, ProjectionModel};
use ndarray::Array2;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot serialize: {0}")]
    Serialize(String),
}

fn parse_err<T: std::fmt::Display>(line: usize) -> impl Fn(T) -> FormatError {
    move |e| FormatError::Parse { line, message: e.to_string() }
}

fn field<'a>(
    tokens: &mut impl Iterator<Item = &'a str>,
    line: usize,
    name: &str,
) -> Result<&'a str, FormatError> {
    tokens.next().ok_or_else(|| FormatError::Parse {
        line,
        message: format!("missing field {name}"),
    })
}

fn parse_field<T: std::str::FromStr>(tok: &str, line: usize, name: &str) -> Result<T, FormatError>
where
    T::Err: std::fmt::Display,
{
    tok.parse().map_err(|e| FormatError::Parse {
        line,
        message: format!("bad {name} {tok:?}: {e}"),
    })
}

/// Data lines with their 1-based numbers: blanks and extra comments skipped.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn header_line(text: &str) -> Result<(usize, &str), FormatError> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .find(|(_, l)| !l.is_empty())
        .ok_or(FormatError::Parse { line: 1, message: "empty file, expected a header".into() })
}

const DET_HEADER: &str = "#cosmot-det v1 dim=";
const TRK_HEADER: &str = "#cosmot-trk v1";
const MODEL_HEADER: &str = "#cosmot-model v1";

pub fn write_detections(dets: &[Detection]) -> Result<String, FormatError> {
    let dim = dets.first().map_or(0, |d| d.embedding.dim());
    let mut out = String::new();
    writeln!(out, "{DET_HEADER}{dim}").unwrap();
    for d in dets {
        if d.embedding.dim() != dim {
            return Err(FormatError::Serialize(format!(
                "mixed embedding dims: {} and {}",
                dim,
                d.embedding.dim()
            )));
        }
        write!(
            out,
            "{} {} {} {} {} {} {} {} {}",
            d.frame, d.det_id, d.class, d.confidence, d.bbox.cx, d.bbox.cy, d.bbox.w, d.bbox.h, dim
        )
        .unwrap();
        for v in d.embedding.values() {
            write!(out, " {v}").unwrap();
        }
        if let Some(m) = &d.mask {
            write!(out, " rle={m}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn read_detections(text: &str) -> Result<Vec<Detection>, FormatError> {
    let (hline, header) = header_line(text)?;
    let dim: usize = header
        .strip_prefix(DET_HEADER)
        .ok_or_else(|| FormatError::Parse {
            line: hline,
            message: format!("expected {DET_HEADER:?} header, got {header:?}"),
        })
        .and_then(|rest| parse_field(rest, hline, "header dim"))?;

    let mut dets = Vec::new();
    for (no, line) in data_lines(text) {
        let mut toks = line.split_whitespace();
        let frame = parse_field(field(&mut toks, no, "frame")?, no, "frame")?;
        let det_id = parse_field(field(&mut toks, no, "det_id")?, no, "det_id")?;
        let class = parse_field(field(&mut toks, no, "class")?, no, "class")?;
        let confidence = parse_field(field(&mut toks, no, "confidence")?, no, "confidence")?;
        let cx = parse_field(field(&mut toks, no, "cx")?, no, "cx")?;
        let cy = parse_field(field(&mut toks, no, "cy")?, no, "cy")?;
        let w = parse_field(field(&mut toks, no, "w")?, no, "w")?;
        let h = parse_field(field(&mut toks, no, "h")?, no, "h")?;
        let d: usize = parse_field(field(&mut toks, no, "dim")?, no, "dim")?;
        if d != dim {
            return Err(FormatError::Parse {
                line: no,
                message: format!("embedding dim {d} does not match header dim {dim}"),
            });
        }
        let mut embedding = Vec::with_capacity(d);
        for k in 0..d {
            let name = format!("e_{}", k + 1);
            embedding.push(parse_field(field(&mut toks, no, &name)?, no, &name)?);
        }
        let mask = match toks.next() {
            None => None,
            Some(tok) => Some(parse_mask_token(tok, no)?),
        };
        if let Some(extra) = toks.next() {
            return Err(FormatError::Parse {
                line: no,
                message: format!("unexpected trailing token {extra:?}"),
            });
        }
        let bbox = BBox::new(cx, cy, w, h).map_err(parse_err(no))?;
        let embedding = FeatureVector::new(embedding).map_err(parse_err(no))?;
        dets.push(
            Detection::new(frame, det_id, class, confidence, bbox, mask, embedding)
                .map_err(parse_err(no))?,
        );
    }
    Ok(dets)
}

fn parse_mask_token(tok: &str, line: usize) -> Result<RleMask, FormatError> {
    let payload = tok.strip_prefix("rle=").ok_or_else(|| FormatError::Parse {
        line,
        message: format!("unexpected token {tok:?}, expected rle=<w>x<h>:<counts>"),
    })?;
    payload.parse().map_err(parse_err(line))
}

pub fn write_tracks(objects: &[AnnotatedObject]) -> String {
    let mut out = String::new();
    writeln!(out, "{TRK_HEADER}").unwrap();
    for o in objects {
        write!(
            out,
            "{} {} {} {} {} {} {}",
            o.frame, o.track_id, o.class, o.bbox.cx, o.bbox.cy, o.bbox.w, o.bbox.h
        )
        .unwrap();
        if let Some(m) = &o.mask {
            write!(out, " rle={m}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn read_tracks(text: &str) -> Result<Vec<AnnotatedObject>, FormatError> {
    let (hline, header) = header_line(text)?;
    if header != TRK_HEADER {
        return Err(FormatError::Parse {
            line: hline,
            message: format!("expected {TRK_HEADER:?} header, got {header:?}"),
        });
    }
    let mut objects = Vec::new();
    for (no, line) in data_lines(text) {
        let mut toks = line.split_whitespace();
        let frame = parse_field(field(&mut toks, no, "frame")?, no, "frame")?;
        let track_id = parse_field(field(&mut toks, no, "track_id")?, no, "track_id")?;
        let class = parse_field(field(&mut toks, no, "class")?, no, "class")?;
        let cx = parse_field(field(&mut toks, no, "cx")?, no, "cx")?;
        let cy = parse_field(field(&mut toks, no, "cy")?, no, "cy")?;
        let w = parse_field(field(&mut toks, no, "w")?, no, "w")?;
        let h = parse_field(field(&mut toks, no, "h")?, no, "h")?;
        let mask = match toks.next() {
            None => None,
            Some(tok) => Some(parse_mask_token(tok, no)?),
        };
        if let Some(extra) = toks.next() {
            return Err(FormatError::Parse {
                line: no,
                message: format!("unexpected trailing token {extra:?}"),
            });
        }
        objects.push(AnnotatedObject {
            frame,
            track_id,
            class,
            bbox: BBox::new(cx, cy, w, h).map_err(parse_err(no))?,
            mask,
        });
    }
    Ok(objects)
}

pub fn write_model(model: &ProjectionModel, loss: LossKind, seed: u64) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{MODEL_HEADER} rows={} cols={} loss={} seed={}",
        model.input_dim(),
        model.embed_dim(),
        loss,
        seed
    )
    .unwrap();
    for row in model.weights().rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            write!(out, "{v}").unwrap();
            first = false;
        }
        out.push('\n');
    }
    out
}

pub fn read_model(text: &str) -> Result<(ProjectionModel, LossKind, u64), FormatError> {
    let (hline, header) = header_line(text)?;
    let rest = header.strip_prefix(MODEL_HEADER).ok_or_else(|| FormatError::Parse {
        line: hline,
        message: format!("expected {MODEL_HEADER:?} header, got {header:?}"),
    })?;
    let mut rows = None;
    let mut cols = None;
    let mut loss = None;
    let mut seed = None;
    for tok in rest.split_whitespace() {
        let (key, value) = tok.split_once('=').ok_or_else(|| FormatError::Parse {
            line: hline,
            message: format!("bad header token {tok:?}"),
        })?;
        match key {
            "rows" => rows = Some(parse_field::<usize>(value, hline, "rows")?),
            "cols" => cols = Some(parse_field::<usize>(value, hline, "cols")?),
            "loss" => {
                loss = Some(LossKind::parse(value).ok_or_else(|| FormatError::Parse {
                    line: hline,
                    message: format!("unknown loss {value:?}"),
                })?)
            }
            "seed" => seed = Some(parse_field::<u64>(value, hline, "seed")?),
            _ => {
                return Err(FormatError::Parse {
                    line: hline,
                    message: format!("unknown header key {key:?}"),
                })
            }
        }
    }
    let (rows, cols, loss, seed) = match (rows, cols, loss, seed) {
        (Some(r), Some(c), Some(l), Some(s)) => (r, c, l, s),
        _ => {
            return Err(FormatError::Parse {
                line: hline,
                message: "model header needs rows, cols, loss and seed".into(),
            })
        }
    };

    let mut values = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0usize;
    for (no, line) in data_lines(text) {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| parse_field(t, no, "weight"))
            .collect::<Result<_, _>>()?;
        if row.len() != cols {
            return Err(FormatError::Parse {
                line: no,
                message: format!("expected {cols} columns, got {}", row.len()),
            });
        }
        values.extend(row);
        seen_rows += 1;
    }
    if seen_rows != rows {
        return Err(FormatError::Parse {
            line: text.lines().count(),
            message: format!("expected {rows} matrix rows, got {seen_rows}"),
        });
    }
    let weights = Array2::from_shape_vec((rows, cols), values).expect("shape checked above");
    let model = ProjectionModel::new(weights).map_err(parse_err(hline))?;
    Ok((model, loss, seed))
}

pub fn write_history(rows: &[HistoryRow]) -> String {
    let mut out = String::from("step,loss,violation_rate\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.step, r.loss, r.violation_rate).unwrap();
    }
    out
}

pub fn read_history(text: &str) -> Result<Vec<HistoryRow>, FormatError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (hline, header) = lines
        .next()
        .ok_or(FormatError::Parse { line: 1, message: "empty history".into() })?;
    if header != "step,loss,violation_rate" {
        return Err(FormatError::Parse {
            line: hline,
            message: format!("bad history header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split(',');
        let step = parse_field(field(&mut toks, no, "step")?, no, "step")?;
        let loss = parse_field(field(&mut toks, no, "loss")?, no, "loss")?;
        let violation_rate =
            parse_field(field(&mut toks, no, "violation_rate")?, no, "violation_rate")?;
        if toks.next().is_some() {
            return Err(FormatError::Parse { line: no, message: "too many columns".into() });
        }
        rows.push(HistoryRow { step, loss, violation_rate });
    }
    Ok(rows)
}
