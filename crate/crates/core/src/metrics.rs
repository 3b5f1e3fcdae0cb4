//! Ensemble metrics: coverage and average minimum RMSD in recall and
//! precision form, and improvement/downgrade rates of paired conformers.
//!
//! The RMSD matrix has one row per reference conformer and one column per
//! generated conformer. Recall reads row minima, precision column minima.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom3d::{aligned_rmsd, PointSet};

/// `L × K` Kabsch-aligned RMSDs, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsdMatrix {
    pub n_refs: usize,
    pub n_gen: usize,
    pub data: Vec<f64>,
}

impl RmsdMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_refs = rows.len();
        let n_gen = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_gen) {
            return Err(Error::InvalidInput("ragged RMSD matrix".into()));
        }
        Ok(Self {
            n_refs,
            n_gen,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn get(&self, l: usize, k: usize) -> f64 {
        self.data[l * self.n_gen + k]
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for k in 0..self.n_gen {
            for l in 0..self.n_refs {
                data.push(self.get(l, k));
            }
        }
        Self {
            n_refs: self.n_gen,
            n_gen: self.n_refs,
            data,
        }
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.n_refs == 0 || self.n_gen == 0 {
            return Err(Error::InvalidInput(format!(
                "empty ensemble: {} references, {} generated",
                self.n_refs, self.n_gen
            )));
        }
        Ok(())
    }

    /// Per reference: RMSD to its closest generated conformer.
    pub fn row_mins(&self) -> Result<Vec<f64>> {
        self.check_nonempty()?;
        Ok(self
            .data
            .chunks(self.n_gen)
            .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
            .collect())
    }

    /// Per generated conformer: RMSD to its closest reference, the
    /// conformer's precision RMSD.
    pub fn col_mins(&self) -> Result<Vec<f64>> {
        self.check_nonempty()?;
        let mut mins = vec![f64::INFINITY; self.n_gen];
        for row in self.data.chunks(self.n_gen) {
            for (m, v) in mins.iter_mut().zip(row) {
                *m = m.min(*v);
            }
        }
        Ok(mins)
    }
}

/// Entry `(l, k)` is the RMSD after aligning `generated[k]` onto
/// `references[l]`.
pub fn rmsd_matrix(generated: &[PointSet], references: &[PointSet]) -> Result<RmsdMatrix> {
    let rows: Vec<Vec<f64>> = references
        .par_iter()
        .map(|r| generated.iter().map(|g| aligned_rmsd(g, r)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    Ok(RmsdMatrix {
        n_refs: references.len(),
        n_gen: generated.len(),
        data: rows.into_iter().flatten().collect(),
    })
}

fn coverage_of(mins: &[f64], delta: f64) -> f64 {
    100.0 * mins.iter().filter(|&&m| m < delta).count() as f64 / mins.len() as f64
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Percent of references whose closest generated conformer is strictly
/// below `delta`.
pub fn coverage_recall(m: &RmsdMatrix, delta: f64) -> Result<f64> {
    Ok(coverage_of(&m.row_mins()?, delta))
}

pub fn amr_recall(m: &RmsdMatrix) -> Result<f64> {
    Ok(mean(&m.row_mins()?))
}

/// Percent of generated conformers within `delta` (strict) of some reference.
pub fn coverage_precision(m: &RmsdMatrix, delta: f64) -> Result<f64> {
    Ok(coverage_of(&m.col_mins()?, delta))
}

pub fn amr_precision(m: &RmsdMatrix) -> Result<f64> {
    Ok(mean(&m.col_mins()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        Self {
            mean: mean(values),
            median: median(values),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeMetrics {
    pub id: String,
    pub n_refs: usize,
    pub n_gen: usize,
    pub cov_r: f64,
    pub amr_r: f64,
    pub cov_p: f64,
    pub amr_p: f64,
}

impl MoleculeMetrics {
    pub fn from_matrix(id: &str, m: &RmsdMatrix, delta: f64) -> Result<Self> {
        Ok(Self {
            id: id.to_string(),
            n_refs: m.n_refs,
            n_gen: m.n_gen,
            cov_r: coverage_recall(m, delta)?,
            amr_r: amr_recall(m)?,
            cov_p: coverage_precision(m, delta)?,
            amr_p: amr_precision(m)?,
        })
    }
}

/// Ensemble-property errors computed elsewhere; left empty here.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PropertyErrors {
    pub energy: Option<f64>,
    pub dipole: Option<f64>,
    pub gap: Option<f64>,
    pub min_energy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    /// Row label, e.g. a method name or a step budget like `"20+20"`.
    pub label: String,
    pub delta: f64,
    pub cov_r: Summary,
    pub amr_r: Summary,
    pub cov_p: Summary,
    pub amr_p: Summary,
    pub per_molecule: Vec<MoleculeMetrics>,
    #[serde(default)]
    pub properties: PropertyErrors,
}

impl EnsembleReport {
    pub fn from_molecules(label: &str, delta: f64, per_molecule: Vec<MoleculeMetrics>) -> Result<Self> {
        if per_molecule.is_empty() {
            return Err(Error::InvalidInput("report over zero molecules".into()));
        }
        let col = |f: fn(&MoleculeMetrics) -> f64| Summary::of(&per_molecule.iter().map(f).collect::<Vec<_>>());
        Ok(Self {
            label: label.to_string(),
            delta,
            cov_r: col(|m| m.cov_r),
            amr_r: col(|m| m.amr_r),
            cov_p: col(|m| m.cov_p),
            amr_p: col(|m| m.amr_p),
            per_molecule,
            properties: PropertyErrors::default(),
        })
    }

    pub const CSV_HEADER: &'static str =
        "label,delta,cov_r_mean,cov_r_median,amr_r_mean,amr_r_median,cov_p_mean,cov_p_median,amr_p_mean,amr_p_median";

    /// One summary row, columns as in [`Self::CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.4},{:.4},{:.4},{:.6},{:.6},{:.4},{:.4},{:.6},{:.6}",
            self.label,
            self.delta,
            self.cov_r.mean,
            self.cov_r.median,
            self.amr_r.mean,
            self.amr_r.median,
            self.cov_p.mean,
            self.cov_p.median,
            self.amr_p.mean,
            self.amr_p.median
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }

    pub fn per_molecule_csv(&self) -> String {
        let mut out = String::from("id,n_refs,n_gen,cov_r,amr_r,cov_p,amr_p\n");
        for m in &self.per_molecule {
            let _ = writeln!(
                out,
                "{},{},{},{:.4},{:.6},{:.4},{:.6}",
                m.id, m.n_refs, m.n_gen, m.cov_r, m.amr_r, m.cov_p, m.amr_p
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Builds a report from per-molecule reference and generated ensembles.
pub fn evaluate_ensembles(
    label: &str,
    ids: &[&str],
    references: &[&[PointSet]],
    generated: &[&[PointSet]],
    delta: f64,
) -> Result<EnsembleReport> {
    if ids.len() != references.len() || ids.len() != generated.len() {
        return Err(Error::InvalidInput("ids, references and generated must align".into()));
    }
    let rows = (0..ids.len())
        .map(|m| {
            let mat = rmsd_matrix(generated[m], references[m])
                .map_err(|e| Error::Validation(format!("molecule {}: {e}", ids[m])))?;
            MoleculeMetrics::from_matrix(ids[m], &mat, delta)
                .map_err(|e| Error::Validation(format!("molecule {}: {e}", ids[m])))
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleReport::from_molecules(label, delta, rows)
}

/// Precision RMSD of each conformer: its minimum RMSD over `references`.
pub fn precision_rmsds(conformers: &[PointSet], references: &[PointSet]) -> Result<Vec<f64>> {
    rmsd_matrix(conformers, references)?.col_mins()
}

/// Index of the nearest reference for every conformer, lowest index on ties.
pub fn nearest_references(conformers: &[PointSet], references: &[PointSet]) -> Result<Vec<usize>> {
    let m = rmsd_matrix(conformers, references)?;
    if m.n_refs == 0 {
        return Err(Error::InvalidInput("no references".into()));
    }
    Ok((0..m.n_gen)
        .map(|k| {
            (1..m.n_refs).fold(0, |best, l| if m.get(l, k) < m.get(best, k) { l } else { best })
        })
        .collect())
}

/// Percent of paired conformers whose basin label did not change.
pub fn basin_preservation(before: &[u64], after: &[u64]) -> Result<f64> {
    if before.len() != after.len() {
        return Err(Error::ShapeMismatch {
            expected: before.len(),
            got: after.len(),
        });
    }
    if before.is_empty() {
        return Err(Error::InvalidInput("no conformer pairs".into()));
    }
    let kept = before.iter().zip(after).filter(|(a, b)| a == b).count();
    Ok(100.0 * kept as f64 / before.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrDrRow {
    pub tau: f64,
    pub improvement_rate: f64,
    pub downgrade_rate: f64,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrDrTable {
    pub rows: Vec<IrDrRow>,
}

impl IrDrTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,improvement_rate,downgrade_rate,n_pairs\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:.4},{:.4},{:.4},{}",
                r.tau, r.improvement_rate, r.downgrade_rate, r.n_pairs
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn at(&self, tau: f64) -> Option<&IrDrRow> {
        self.rows.iter().find(|r| r.tau == tau)
    }
}

/// For each `tau`: a pair improves when `before − after > tau` and
/// downgrades when `after − before > tau`. Rates are percent of pairs.
pub fn improvement_downgrade(before: &[f64], after: &[f64], taus: &[f64]) -> Result<IrDrTable> {
    if before.len() != after.len() {
        return Err(Error::ShapeMismatch {
            expected: before.len(),
            got: after.len(),
        });
    }
    if before.is_empty() {
        return Err(Error::InvalidInput("no conformer pairs".into()));
    }
    if taus.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidInput("tau must be non-negative".into()));
    }
    let n = before.len();
    let rows = taus
        .iter()
        .map(|&tau| {
            let (mut up, mut down) = (0usize, 0usize);
            for (b, a) in before.iter().zip(after) {
                if b - a > tau {
                    up += 1;
                } else if a - b > tau {
                    down += 1;
                }
            }
            IrDrRow {
                tau,
                improvement_rate: 100.0 * up as f64 / n as f64,
                downgrade_rate: 100.0 * down as f64 / n as f64,
                n_pairs: n,
            }
        })
        .collect();
    Ok(IrDrTable { rows })
}
