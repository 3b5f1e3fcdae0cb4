//! Graph files, ensemble manifests and dataset directories.
//!
//! Graph file:
//! ```text
//! confrefine-graph 1
//! atoms 6 6 6 6
//! bond 0 1 1
//! bond 1 2 2
//! ```
//! Manifest (paths relative to the manifest, `-` for none):
//! ```text
//! confrefine-manifest 1
//! mol0000 mol0000.graph mol0000.ref.xyz mol0000.gen.xyz
//! ```
//! Blank lines and `#` comments are ignored in both.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::xyz::{read_xyz, write_xyz, XyzFrame};
use super::MoleculeRecord;
use crate::error::{Error, Result};
use crate::geom3d::PointSet;
use crate::model::{Bond, MolecularGraph};

pub const GRAPH_HEADER: &str = "confrefine-graph 1";
pub const MANIFEST_HEADER: &str = "confrefine-manifest 1";

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn expect_header<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    header: &str,
    path: &Path,
) -> Result<bool> {
    match lines.next() {
        None => Ok(false),
        Some((_, l)) if l.split_whitespace().eq(header.split_whitespace()) => Ok(true),
        Some((line, l)) => Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("expected header {header:?}, found {l:?}"),
        }),
    }
}

pub fn format_graph(graph: &MolecularGraph) -> String {
    let mut out = format!("{GRAPH_HEADER}\natoms");
    for k in graph.atom_kinds() {
        let _ = write!(out, " {k}");
    }
    out.push('\n');
    for b in graph.bonds() {
        let _ = writeln!(out, "bond {} {} {}", b.i, b.j, b.order);
    }
    out
}

pub fn parse_graph(text: &str, path: &Path) -> Result<MolecularGraph> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = content_lines(text);
    if !expect_header(&mut lines, GRAPH_HEADER, path)? {
        return Err(err(1, "empty graph file".into()));
    }
    let mut kinds: Option<Vec<u8>> = None;
    let mut bonds = Vec::new();
    for (line, l) in lines {
        let mut parts = l.split_whitespace();
        match parts.next() {
            Some("atoms") => {
                if kinds.is_some() {
                    return Err(err(line, "duplicate atoms line".into()));
                }
                let parsed: std::result::Result<Vec<u8>, _> = parts.map(str::parse).collect();
                kinds = Some(parsed.map_err(|_| err(line, "atom kinds must be integers 0..=255".into()))?);
            }
            Some("bond") => {
                let fields: Vec<&str> = parts.collect();
                if fields.len() != 3 {
                    return Err(err(line, "bond line needs `bond i j order`".into()));
                }
                let num = |s: &str| s.parse::<usize>().map_err(|_| err(line, format!("bad integer {s:?}")));
                let order = num(fields[2])?;
                bonds.push(Bond {
                    i: num(fields[0])?,
                    j: num(fields[1])?,
                    order: u8::try_from(order).map_err(|_| err(line, format!("bond order {order}")))?,
                });
            }
            Some(other) => return Err(err(line, format!("unknown record {other:?}"))),
            None => {}
        }
    }
    let kinds = kinds.ok_or_else(|| err(1, "missing atoms line".into()))?;
    MolecularGraph::new(kinds, bonds).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

pub fn read_graph(path: &Path) -> Result<MolecularGraph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_graph(&text, path)
}

pub fn write_graph(path: &Path, graph: &MolecularGraph) -> Result<()> {
    fs::write(path, format_graph(graph)).map_err(|e| Error::io(path, e))
}

/// One manifest row after loading: the reference record plus any upstream
/// conformers. `generated_ids[k]` is the stable pairing index of
/// `generated[k]`, taken from a `conf=<i>` comment field or else the frame
/// position.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEntry {
    pub record: MoleculeRecord,
    pub generated: Vec<PointSet>,
    pub generated_ids: Vec<u64>,
}

struct ManifestRow {
    line: usize,
    id: String,
    graph: PathBuf,
    refs: PathBuf,
    generated: Option<PathBuf>,
}

fn parse_manifest(text: &str, path: &Path) -> Result<Vec<ManifestRow>> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut lines = content_lines(text);
    if !expect_header(&mut lines, MANIFEST_HEADER, path)? {
        return Ok(Vec::new());
    }
    let mut rows = Vec::new();
    for (line, l) in lines {
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("expected `id graph refs generated`, found {} fields", fields.len()),
            });
        }
        let resolve = |f: &str| (f != "-").then(|| dir.join(f));
        let required = |f: &str, what: &str| {
            resolve(f).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("molecule {}: {what} path is required", fields[0]),
            })
        };
        rows.push(ManifestRow {
            line,
            id: fields[0].to_string(),
            graph: required(fields[1], "graph")?,
            refs: required(fields[2], "reference")?,
            generated: resolve(fields[3]),
        });
    }
    Ok(rows)
}

fn check_frames(id: &str, what: &str, graph: &MolecularGraph, frames: &[XyzFrame]) -> Result<()> {
    for (k, f) in frames.iter().enumerate() {
        if f.coords.n_atoms() != graph.n_atoms() {
            return Err(Error::Validation(format!(
                "molecule {id}: {what} frame {k} has {} atoms, graph has {}",
                f.coords.n_atoms(),
                graph.n_atoms()
            )));
        }
        if f.kinds != graph.atom_kinds() {
            return Err(Error::Validation(format!(
                "molecule {id}: {what} frame {k} element sequence differs from the graph"
            )));
        }
    }
    Ok(())
}

/// Loads every row of a manifest and cross-checks atom counts.
pub fn read_ensemble_manifest(path: &Path) -> Result<Vec<EnsembleEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows = parse_manifest(&text, path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        if !seen.insert(row.id.clone()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: row.line,
                msg: format!("duplicate molecule id {}", row.id),
            });
        }
        let graph = read_graph(&row.graph)?;
        let ref_frames = read_xyz(&row.refs)?;
        check_frames(&row.id, "reference", &graph, &ref_frames)?;
        let labels: Option<Vec<u64>> = ref_frames
            .iter()
            .map(|f| f.comment_field("basin").and_then(|v| v.parse().ok()))
            .collect();
        let references = ref_frames.into_iter().map(|f| f.coords).collect();
        let record = MoleculeRecord::new(row.id.clone(), graph, references, labels)?;

        let (generated, generated_ids) = match &row.generated {
            None => (Vec::new(), Vec::new()),
            Some(p) => {
                let frames = read_xyz(p)?;
                check_frames(&row.id, "generated", &record.graph, &frames)?;
                let mut ids = Vec::with_capacity(frames.len());
                for (k, f) in frames.iter().enumerate() {
                    let id = match f.comment_field("conf") {
                        Some(v) => v.parse().map_err(|_| {
                            Error::Validation(format!("molecule {}: generated frame {k} has bad conf={v}", row.id))
                        })?,
                        None => k as u64,
                    };
                    ids.push(id);
                }
                if ids.iter().collect::<HashSet<_>>().len() != ids.len() {
                    return Err(Error::Validation(format!(
                        "molecule {}: duplicate conformer indices in {}",
                        row.id,
                        p.display()
                    )));
                }
                (frames.into_iter().map(|f| f.coords).collect(), ids)
            }
        };
        out.push(EnsembleEntry {
            record,
            generated,
            generated_ids,
        });
    }
    Ok(out)
}

fn frames_for(kinds: &[u8], sets: &[PointSet], comment: impl Fn(usize) -> String) -> Vec<XyzFrame> {
    sets.iter()
        .enumerate()
        .map(|(k, c)| XyzFrame {
            kinds: kinds.to_vec(),
            comment: comment(k),
            coords: c.clone(),
        })
        .collect()
}

/// Writes graph, reference and (optional) generated files for each record
/// into `dir`, plus `manifest.txt`. Returns the manifest path. Generated
/// conformers are numbered by position.
pub fn write_ensemble(
    dir: &Path,
    records: &[MoleculeRecord],
    generated: Option<&[Vec<PointSet>]>,
    generated_suffix: &str,
) -> Result<PathBuf> {
    write_ensemble_with_ids(dir, records, generated, None, generated_suffix)
}

/// As [`write_ensemble`], but `ids[m][k]` becomes the `conf=` pairing index
/// of generated conformer `k` of molecule `m`.
pub fn write_ensemble_with_ids(
    dir: &Path,
    records: &[MoleculeRecord],
    generated: Option<&[Vec<PointSet>]>,
    ids: Option<&[Vec<u64>]>,
    generated_suffix: &str,
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if let Some(g) = generated {
        if g.len() != records.len() {
            return Err(Error::InvalidInput(format!(
                "{} generated ensembles for {} molecules",
                g.len(),
                records.len()
            )));
        }
        if let Some(ids) = ids {
            if ids.len() != g.len() || ids.iter().zip(g).any(|(i, c)| i.len() != c.len()) {
                return Err(Error::InvalidInput("one pairing id per generated conformer required".into()));
            }
        }
    }
    let mut manifest = format!("{MANIFEST_HEADER}\n");
    for (m, rec) in records.iter().enumerate() {
        let graph_name = format!("{}.graph", rec.id);
        let ref_name = format!("{}.ref.xyz", rec.id);
        write_graph(&dir.join(&graph_name), &rec.graph)?;
        let refs = frames_for(rec.graph.atom_kinds(), &rec.references, |k| match &rec.basin_labels {
            Some(l) => format!("id={} conf={k} basin={}", rec.id, l[k]),
            None => format!("id={} conf={k}", rec.id),
        });
        write_xyz(&dir.join(&ref_name), &refs)?;
        let gen_name = match generated {
            Some(g) => {
                let name = format!("{}.{generated_suffix}.xyz", rec.id);
                let id_of = |k: usize| ids.map_or(k as u64, |ids| ids[m][k]);
                let frames =
                    frames_for(rec.graph.atom_kinds(), &g[m], |k| format!("id={} conf={}", rec.id, id_of(k)));
                write_xyz(&dir.join(&name), &frames)?;
                name
            }
            None => "-".to_string(),
        };
        let _ = writeln!(manifest, "{} {graph_name} {ref_name} {gen_name}", rec.id);
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn write_dataset(dir: &Path, records: &[MoleculeRecord]) -> Result<PathBuf> {
    write_ensemble(dir, records, None, "gen")
}

pub fn read_dataset(manifest: &Path) -> Result<Vec<MoleculeRecord>> {
    Ok(read_ensemble_manifest(manifest)?
        .into_iter()
        .map(|e| e.record)
        .collect())
}
