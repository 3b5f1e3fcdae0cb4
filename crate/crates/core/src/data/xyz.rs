//! Multi-frame XYZ: atom count line, comment line, then one
//! `symbol x y z` row per atom, frames concatenated.
//!
//! Coordinates are written in fixed notation with ten digits after the
//! decimal point.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom3d::PointSet;

const SYMBOLS: [&str; 19] = [
    "X", "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S",
    "Cl", "Ar",
];

/// Element symbol for an atomic number; `X<n>` outside the table.
pub fn element_symbol(kind: u8) -> String {
    match SYMBOLS.get(kind as usize) {
        Some(s) if kind > 0 => (*s).to_string(),
        _ => format!("X{kind}"),
    }
}

/// Inverse of [`element_symbol`]; bare atomic numbers are accepted too.
pub fn kind_from_symbol(symbol: &str) -> Option<u8> {
    if let Ok(n) = symbol.parse::<u8>() {
        return Some(n);
    }
    if let Some(rest) = symbol.strip_prefix('X') {
        if let Ok(n) = rest.parse::<u8>() {
            return Some(n);
        }
    }
    SYMBOLS
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, s)| s.eq_ignore_ascii_case(symbol))
        .map(|(i, _)| i as u8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct XyzFrame {
    pub kinds: Vec<u8>,
    pub comment: String,
    pub coords: PointSet,
}

impl XyzFrame {
    /// Looks up `key=value` in the comment line.
    pub fn comment_field(&self, key: &str) -> Option<&str> {
        self.comment
            .split_whitespace()
            .find_map(|tok| tok.strip_prefix(key)?.strip_prefix('='))
    }
}

pub fn format_xyz(frames: &[XyzFrame]) -> String {
    let mut out = String::new();
    for f in frames {
        debug_assert_eq!(f.kinds.len(), f.coords.n_atoms());
        let _ = writeln!(out, "{}", f.coords.n_atoms());
        let _ = writeln!(out, "{}", f.comment.replace('\n', " "));
        for (k, p) in f.kinds.iter().zip(f.coords.iter()) {
            let _ = writeln!(
                out,
                "{:<3} {:.10} {:.10} {:.10}",
                element_symbol(*k),
                p[0],
                p[1],
                p[2]
            );
        }
    }
    out
}

pub fn parse_xyz(text: &str, path: &Path) -> Result<Vec<XyzFrame>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let lines: Vec<&str> = text.lines().collect();
    let mut frames = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let count_line = lines[i].trim();
        if count_line.is_empty() {
            i += 1;
            continue;
        }
        let n: usize = count_line
            .parse()
            .map_err(|_| err(i + 1, format!("malformed atom count {count_line:?}")))?;
        if n == 0 {
            return Err(err(i + 1, "frame declares zero atoms".into()));
        }
        let comment = lines
            .get(i + 1)
            .ok_or_else(|| err(i + 2, "missing comment line".into()))?
            .to_string();
        let mut kinds = Vec::with_capacity(n);
        let mut coords = Vec::with_capacity(n);
        for a in 0..n {
            let ln = i + 2 + a;
            let row = lines
                .get(ln)
                .filter(|l| !l.trim().is_empty())
                .ok_or_else(|| err(ln + 1, format!("truncated frame: expected {n} atom rows, found {a}")))?;
            let mut parts = row.split_whitespace();
            let sym = parts.next().unwrap_or_default();
            let kind = kind_from_symbol(sym)
                .ok_or_else(|| err(ln + 1, format!("unknown element {sym:?}")))?;
            let mut p = [0.0f64; 3];
            for (axis, slot) in p.iter_mut().enumerate() {
                let tok = parts
                    .next()
                    .ok_or_else(|| err(ln + 1, format!("missing coordinate {axis}")))?;
                *slot = tok
                    .parse()
                    .map_err(|_| err(ln + 1, format!("non-numeric coordinate {tok:?}")))?;
                if !slot.is_finite() {
                    return Err(err(ln + 1, format!("non-finite coordinate {tok:?}")));
                }
            }
            kinds.push(kind);
            coords.push(p);
        }
        frames.push(XyzFrame {
            kinds,
            comment,
            coords: PointSet::new(coords)?,
        });
        i += 2 + n;
    }
    Ok(frames)
}

pub fn read_xyz(path: &Path) -> Result<Vec<XyzFrame>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_xyz(&text, path)
}

pub fn write_xyz(path: &Path, frames: &[XyzFrame]) -> Result<()> {
    fs::write(path, format_xyz(frames)).map_err(|e| Error::io(path, e))
}
