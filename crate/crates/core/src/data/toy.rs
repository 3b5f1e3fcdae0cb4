//! Butane-like chain molecules with an enumerable set of torsion basins.
//!
//! Each chain has fixed bond lengths and angles. A few dihedrals are
//! rotatable (single central bond) and take a value from the torsion
//! profile; the rest sit behind a double bond and stay trans. Every
//! reference conformer realizes one torsion assignment plus Gaussian jitter,
//! and its basin label encodes that assignment.

use nalgebra::Vector3;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::MoleculeRecord;
use crate::error::{Error, Result};
use crate::geom3d::{Point, PointSet};
use crate::model::MolecularGraph;
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyDatasetSpec {
    pub n_molecules: usize,
    pub min_chain: usize,
    pub max_chain: usize,
    /// Preferred dihedral angles in degrees.
    pub torsion_profile: Vec<f64>,
    pub bond_length: f64,
    pub bond_angle: f64,
    pub jitter: f64,
    /// Upper bound on rotatable dihedrals per molecule.
    pub max_rotatable: usize,
    /// Upper bound on reference conformers per molecule.
    pub max_references: usize,
    pub atom_kind: u8,
    pub id_prefix: String,
    pub seed: u64,
}

impl Default for ToyDatasetSpec {
    fn default() -> Self {
        Self {
            n_molecules: 200,
            min_chain: 4,
            max_chain: 8,
            torsion_profile: vec![-60.0, 60.0, 180.0],
            bond_length: 1.5,
            bond_angle: 110.0,
            jitter: 0.05,
            max_rotatable: 2,
            max_references: 9,
            atom_kind: 6,
            id_prefix: "mol".into(),
            seed: 0,
        }
    }
}

impl ToyDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("toy dataset: {m}")));
        if self.min_chain < 4 || self.max_chain < self.min_chain {
            return bad(format!(
                "chain length range {}..={} must start at 4 or more",
                self.min_chain, self.max_chain
            ));
        }
        if !(self.bond_angle > 0.0 && self.bond_angle < 180.0) {
            return bad(format!("bond angle {} outside (0, 180)", self.bond_angle));
        }
        if self.torsion_profile.is_empty() {
            return bad("empty torsion profile".into());
        }
        if !(self.bond_length > 0.0) || self.jitter < 0.0 {
            return bad("bond length must be positive and jitter non-negative".into());
        }
        if self.max_rotatable == 0 || self.max_references == 0 {
            return bad("max_rotatable and max_references must be positive".into());
        }
        Ok(())
    }
}

/// Places chain atoms from internal coordinates (natural extension
/// reference frame). `dihedrals[k]` is the angle about bond `(k+1, k+2)`.
pub fn build_chain(n_atoms: usize, bond_length: f64, bond_angle_deg: f64, dihedrals_deg: &[f64]) -> PointSet {
    assert!(n_atoms >= 3 && dihedrals_deg.len() == n_atoms - 3);
    let theta = bond_angle_deg.to_radians();
    let mut pos: Vec<Vector3<f64>> = vec![
        Vector3::zeros(),
        Vector3::new(bond_length, 0.0, 0.0),
        Vector3::new(
            bond_length - bond_length * theta.cos(),
            bond_length * theta.sin(),
            0.0,
        ),
    ];
    for phi in dihedrals_deg {
        let k = pos.len();
        let (a, b, c) = (pos[k - 3], pos[k - 2], pos[k - 1]);
        let bc = (c - b).normalize();
        let n = (b - a).cross(&bc).normalize();
        let m = n.cross(&bc);
        let phi = phi.to_radians();
        let local = Vector3::new(
            -bond_length * theta.cos(),
            bond_length * theta.sin() * phi.cos(),
            -bond_length * theta.sin() * phi.sin(),
        );
        pos.push(c + local.x * bc + local.y * m + local.z * n);
    }
    PointSet::from_fn(n_atoms, |i, k| pos[i][k])
}

/// Signed dihedral angle in degrees for atoms `a-b-c-d`.
pub fn dihedral(a: &Point, b: &Point, c: &Point, d: &Point) -> f64 {
    let v = |p: &Point| Vector3::new(p[0], p[1], p[2]);
    let (a, b, c, d) = (v(a), v(b), v(c), v(d));
    let b1 = b - a;
    let b2 = c - b;
    let b3 = d - c;
    let n1 = b1.cross(&b2);
    let n2 = b2.cross(&b3);
    let m1 = n1.cross(&b2.normalize());
    m1.dot(&n2).atan2(n1.dot(&n2)).to_degrees()
}

fn synth_molecule(spec: &ToyDatasetSpec, index: usize) -> Result<MoleculeRecord> {
    let mut rng = seeding::stream(spec.seed, index as u64);
    let n_atoms = rng.random_range(spec.min_chain..=spec.max_chain);
    let n_dihedrals = n_atoms - 3;
    let n_rot = rng.random_range(1..=spec.max_rotatable.min(n_dihedrals));
    let mut rotatable: Vec<usize> = sample_indices(&mut rng, n_dihedrals, n_rot).into_vec();
    rotatable.sort_unstable();

    // Bond k joins atoms (k, k+1); dihedral k turns about bond k+1.
    let mut orders = vec![1u8; n_atoms - 1];
    for k in 0..n_dihedrals {
        if !rotatable.contains(&k) {
            orders[k + 1] = 2;
        }
    }
    let graph = MolecularGraph::chain(vec![spec.atom_kind; n_atoms], &orders)?;

    let n_choices = spec.torsion_profile.len();
    let n_basins = n_choices.pow(n_rot as u32);
    let mut labels: Vec<usize> = if n_basins <= spec.max_references {
        (0..n_basins).collect()
    } else {
        sample_indices(&mut rng, n_basins, spec.max_references).into_vec()
    };
    labels.sort_unstable();

    let mut references = Vec::with_capacity(labels.len());
    for &label in &labels {
        let mut dihedrals = vec![180.0; n_dihedrals];
        let mut code = label;
        for &k in &rotatable {
            dihedrals[k] = spec.torsion_profile[code % n_choices];
            code /= n_choices;
        }
        let clean = build_chain(n_atoms, spec.bond_length, spec.bond_angle, &dihedrals);
        let jittered = PointSet::from_fn(n_atoms, |i, k| {
            clean[i][k] + spec.jitter * rng.sample::<f64, _>(StandardNormal)
        });
        references.push(jittered.center());
    }

    MoleculeRecord::new(
        format!("{}{:04}", spec.id_prefix, index),
        graph,
        references,
        Some(labels.into_iter().map(|l| l as u64).collect()),
    )
}

/// Dihedral indices of a linear chain that sit on a single bond, in
/// ascending order. Dihedral `k` turns about bond `(k+1, k+2)`. `None` when
/// the graph is not a chain `0-1-…-(n−1)`.
pub fn rotatable_dihedrals(graph: &MolecularGraph) -> Option<Vec<usize>> {
    let n = graph.n_atoms();
    if graph.bonds().len() + 1 != n || (0..n.saturating_sub(1)).any(|i| graph.bond_order(i, i + 1) == 0) {
        return None;
    }
    Some((0..n.saturating_sub(3)).filter(|&k| graph.bond_order(k + 1, k + 2) == 1).collect())
}

/// Torsion basin of a chain conformer: each rotatable dihedral snaps to the
/// circularly nearest profile angle, encoded the same way as the dataset's
/// basin labels.
pub fn torsion_basin(graph: &MolecularGraph, conformer: &PointSet, profile: &[f64]) -> Option<u64> {
    let rotatable = rotatable_dihedrals(graph)?;
    if profile.is_empty() || conformer.n_atoms() != graph.n_atoms() {
        return None;
    }
    let mut code = 0u64;
    let mut place = 1u64;
    for &k in &rotatable {
        let phi = dihedral(&conformer[k], &conformer[k + 1], &conformer[k + 2], &conformer[k + 3]);
        let gap = |a: f64| ((phi - a).rem_euclid(360.0)).min((a - phi).rem_euclid(360.0));
        let choice = (0..profile.len()).min_by(|&a, &b| gap(profile[a]).total_cmp(&gap(profile[b])))?;
        code += choice as u64 * place;
        place *= profile.len() as u64;
    }
    Some(code)
}

/// Generates `spec.n_molecules` records; molecule `i` draws from its own
/// stream derived from `(seed, i)`, so records do not depend on each other.
pub fn synth_dataset(spec: &ToyDatasetSpec) -> Result<Vec<MoleculeRecord>> {
    spec.validate()?;
    (0..spec.n_molecules).map(|i| synth_molecule(spec, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom3d::aligned_rmsd;

    #[test]
    fn dihedral_convention_round_trips() {
        for phi in [-60.0, 60.0, 180.0, 37.0] {
            let p = build_chain(4, 1.5, 110.0, &[phi]);
            let got = dihedral(&p[0], &p[1], &p[2], &p[3]);
            let diff = (got - phi + 540.0).rem_euclid(360.0) - 180.0;
            assert!(diff.abs() < 1e-9, "{phi} vs {got}");
        }
    }

    fn butane_pair_rmsds(angle: f64) -> Vec<f64> {
        let confs: Vec<PointSet> = [-60.0, 60.0, 180.0]
            .iter()
            .map(|&phi| build_chain(4, 1.5, angle, &[phi]))
            .collect();
        let mut out = Vec::new();
        for a in 0..3 {
            for b in a + 1..3 {
                out.push(aligned_rmsd(&confs[a], &confs[b]).unwrap());
            }
        }
        out
    }

    #[test]
    fn butane_basins_are_separated() {
        for r in butane_pair_rmsds(100.0) {
            assert!(r > 0.5, "{r}");
        }
        // Near-tetrahedral angles bring the two gauche mirror images closer.
        let r = butane_pair_rmsds(110.0);
        assert!((r[0] - 0.468_607_700_311).abs() < 1e-9, "{r:?}");
        assert!(r[1] > 0.7 && r[2] > 0.7, "{r:?}");
    }

    #[test]
    fn bond_lengths_stay_within_jitter_band() {
        // Bond-length deviation has std √2·jitter under per-coordinate jitter.
        let spec = ToyDatasetSpec {
            n_molecules: 40,
            ..ToyDatasetSpec::default()
        };
        let band = 3.0 * spec.jitter * 2f64.sqrt();
        let (mut inside, mut total) = (0usize, 0usize);
        for rec in synth_dataset(&spec).unwrap() {
            for conf in &rec.references {
                for b in rec.graph.bonds() {
                    let dev = (conf.distance(b.i, b.j) - spec.bond_length).abs();
                    assert!(dev < 2.0 * band, "bond deviation {dev}");
                    inside += (dev <= band) as usize;
                    total += 1;
                }
            }
        }
        assert!(inside as f64 >= 0.99 * total as f64, "{inside}/{total}");
    }

    #[test]
    fn zero_jitter_is_reproducible() {
        let spec = ToyDatasetSpec {
            n_molecules: 5,
            jitter: 0.0,
            seed: 17,
            ..ToyDatasetSpec::default()
        };
        let a = synth_dataset(&spec).unwrap();
        let b = synth_dataset(&spec).unwrap();
        assert_eq!(a, b);
        for rec in &a {
            for conf in &rec.references {
                for bond in rec.graph.bonds() {
                    assert!((conf.distance(bond.i, bond.j) - 1.5).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn basins_are_distinct_and_separable() {
        let spec = ToyDatasetSpec {
            n_molecules: 30,
            ..ToyDatasetSpec::default()
        };
        let mut min_inter: f64 = f64::INFINITY;
        for rec in synth_dataset(&spec).unwrap() {
            let labels = rec.basin_labels.as_ref().unwrap();
            assert!(rec.references.len() >= 3);
            for a in 0..rec.references.len() {
                for b in a + 1..rec.references.len() {
                    assert_ne!(labels[a], labels[b]);
                    let r = aligned_rmsd(&rec.references[a], &rec.references[b]).unwrap();
                    min_inter = min_inter.min(r);
                }
            }
        }
        assert!(min_inter > 5.0 * spec.jitter, "{min_inter}");
    }

    #[test]
    fn torsion_basins_recover_labels() {
        let spec = ToyDatasetSpec {
            n_molecules: 30,
            ..ToyDatasetSpec::default()
        };
        for rec in synth_dataset(&spec).unwrap() {
            let labels = rec.basin_labels.as_ref().unwrap();
            for (conf, &label) in rec.references.iter().zip(labels) {
                assert_eq!(torsion_basin(&rec.graph, conf, &spec.torsion_profile), Some(label));
            }
        }
        let branched = MolecularGraph::new(
            vec![6; 4],
            vec![
                crate::model::Bond { i: 0, j: 1, order: 1 },
                crate::model::Bond { i: 0, j: 2, order: 1 },
                crate::model::Bond { i: 0, j: 3, order: 1 },
            ],
        )
        .unwrap();
        assert_eq!(torsion_basin(&branched, &PointSet::zeros(4), &[180.0]), None);
    }

    #[test]
    fn rejects_short_chains() {
        let spec = ToyDatasetSpec {
            min_chain: 3,
            ..ToyDatasetSpec::default()
        };
        assert!(synth_dataset(&spec).is_err());
    }
}
