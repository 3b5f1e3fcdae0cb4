//! Molecule records, the synthetic chain dataset, and the on-disk formats
//! (multi-frame XYZ, graph files, ensemble manifests).

mod files;
mod toy;
mod xyz;

use serde::{Deserialize, Serialize};

pub use files::{
    format_graph, parse_graph, read_dataset, read_ensemble_manifest, read_graph, write_dataset,
    write_ensemble, write_ensemble_with_ids, write_graph, EnsembleEntry, GRAPH_HEADER, MANIFEST_HEADER,
};
pub use toy::{build_chain, dihedral, rotatable_dihedrals, synth_dataset, torsion_basin, ToyDatasetSpec};
pub use xyz::{element_symbol, format_xyz, kind_from_symbol, parse_xyz, read_xyz, write_xyz, XyzFrame};

use crate::error::{Error, Result};
use crate::geom3d::PointSet;
use crate::model::MolecularGraph;

/// A molecule's graph and its ground-truth conformer ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeRecord {
    pub id: String,
    pub graph: MolecularGraph,
    pub references: Vec<PointSet>,
    pub basin_labels: Option<Vec<u64>>,
}

impl MoleculeRecord {
    pub fn new(
        id: String,
        graph: MolecularGraph,
        references: Vec<PointSet>,
        basin_labels: Option<Vec<u64>>,
    ) -> Result<Self> {
        let rec = Self {
            id,
            graph,
            references,
            basin_labels,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.references.is_empty() {
            return Err(Error::Validation(format!("molecule {} has no reference conformers", self.id)));
        }
        let n = self.graph.n_atoms();
        if let Some(k) = self.references.iter().position(|r| r.n_atoms() != n) {
            return Err(Error::Validation(format!(
                "molecule {}: reference {k} has {} atoms, graph has {n}",
                self.id,
                self.references[k].n_atoms()
            )));
        }
        if let Some(labels) = &self.basin_labels {
            if labels.len() != self.references.len() {
                return Err(Error::Validation(format!(
                    "molecule {}: {} basin labels for {} references",
                    self.id,
                    labels.len(),
                    self.references.len()
                )));
            }
        }
        Ok(())
    }

    pub fn n_atoms(&self) -> usize {
        self.graph.n_atoms()
    }

    /// Atoms other than hydrogen.
    pub fn heavy_atom_mask(&self) -> Vec<bool> {
        self.graph.atom_kinds().iter().map(|&k| k != 1).collect()
    }

    /// Basin label of reference `k`, falling back to its index.
    pub fn basin_of(&self, k: usize) -> u64 {
        self.basin_labels
            .as_ref()
            .map_or(k as u64, |labels| labels[k])
    }
}
