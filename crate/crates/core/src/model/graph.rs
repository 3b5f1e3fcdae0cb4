use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest bond order accepted; orders above it are rejected.
pub const MAX_BOND_ORDER: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub order: u8,
}

/// Atom types plus undirected bonds, each pair stored once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct MolecularGraph {
    atom_kinds: Vec<u8>,
    bonds: Vec<Bond>,
    order_matrix: Vec<u8>,
    hop_matrix: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    atom_kinds: Vec<u8>,
    bonds: Vec<Bond>,
}

impl TryFrom<RawGraph> for MolecularGraph {
    type Error = Error;

    fn try_from(raw: RawGraph) -> Result<Self> {
        MolecularGraph::new(raw.atom_kinds, raw.bonds)
    }
}

impl From<MolecularGraph> for RawGraph {
    fn from(g: MolecularGraph) -> Self {
        RawGraph {
            atom_kinds: g.atom_kinds,
            bonds: g.bonds,
        }
    }
}

impl MolecularGraph {
    pub fn new(atom_kinds: Vec<u8>, bonds: Vec<Bond>) -> Result<Self> {
        let n = atom_kinds.len();
        if n == 0 {
            return Err(Error::InvalidInput("graph has no atoms".into()));
        }
        let mut order_matrix = vec![0u8; n * n];
        for b in &bonds {
            if b.i >= n || b.j >= n {
                return Err(Error::InvalidInput(format!(
                    "bond ({}, {}) references an atom outside 0..{n}",
                    b.i, b.j
                )));
            }
            if b.i == b.j {
                return Err(Error::InvalidInput(format!("self-bond on atom {}", b.i)));
            }
            if b.order == 0 || b.order > MAX_BOND_ORDER {
                return Err(Error::InvalidInput(format!(
                    "bond ({}, {}) has order {} outside 1..={MAX_BOND_ORDER}",
                    b.i, b.j, b.order
                )));
            }
            if order_matrix[b.i * n + b.j] != 0 {
                return Err(Error::InvalidInput(format!("duplicate bond ({}, {})", b.i, b.j)));
            }
            order_matrix[b.i * n + b.j] = b.order;
            order_matrix[b.j * n + b.i] = b.order;
        }
        let hop_matrix = shortest_hops(n, &bonds);
        Ok(Self {
            atom_kinds,
            bonds,
            order_matrix,
            hop_matrix,
        })
    }

    /// Linear chain `0-1-2-…` with the given per-bond orders.
    pub fn chain(atom_kinds: Vec<u8>, orders: &[u8]) -> Result<Self> {
        if orders.len() + 1 != atom_kinds.len() {
            return Err(Error::InvalidInput(format!(
                "chain of {} atoms needs {} bond orders, got {}",
                atom_kinds.len(),
                atom_kinds.len().saturating_sub(1),
                orders.len()
            )));
        }
        let bonds = orders
            .iter()
            .enumerate()
            .map(|(i, &order)| Bond { i, j: i + 1, order })
            .collect();
        Self::new(atom_kinds, bonds)
    }

    pub fn n_atoms(&self) -> usize {
        self.atom_kinds.len()
    }

    pub fn atom_kinds(&self) -> &[u8] {
        &self.atom_kinds
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    /// Bond order between two atoms, 0 when unbonded.
    pub fn bond_order(&self, i: usize, j: usize) -> u8 {
        self.order_matrix[i * self.n_atoms() + j]
    }

    /// Number of bonds on the shortest path between two atoms, saturating
    /// at `u8::MAX` for disconnected pairs.
    pub fn hops(&self, i: usize, j: usize) -> u8 {
        self.hop_matrix[i * self.n_atoms() + j]
    }

    /// Pair type fed to the network: bond order 1–3 for bonded pairs,
    /// 4 for 1-3 pairs, 5 for 1-4 pairs, 0 otherwise.
    pub fn pair_class(&self, i: usize, j: usize) -> usize {
        match (self.bond_order(i, j), self.hops(i, j)) {
            (o, _) if o > 0 => o as usize,
            (_, 2) => 4,
            (_, 3) => 5,
            _ => 0,
        }
    }
}

fn shortest_hops(n: usize, bonds: &[Bond]) -> Vec<u8> {
    let mut adj = vec![Vec::new(); n];
    for b in bonds {
        adj[b.i].push(b.j);
        adj[b.j].push(b.i);
    }
    let mut hops = vec![u8::MAX; n * n];
    let mut queue = std::collections::VecDeque::new();
    for s in 0..n {
        hops[s * n + s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let d = hops[s * n + u];
            for &v in &adj[u] {
                if hops[s * n + v] == u8::MAX {
                    hops[s * n + v] = d.saturating_add(1);
                    queue.push_back(v);
                }
            }
        }
    }
    hops
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid_bonds() {
        let b = |i, j, order| Bond { i, j, order };
        assert!(MolecularGraph::new(vec![6, 6], vec![b(0, 2, 1)]).is_err());
        assert!(MolecularGraph::new(vec![6, 6], vec![b(1, 1, 1)]).is_err());
        assert!(MolecularGraph::new(vec![6, 6], vec![b(0, 1, 1), b(1, 0, 1)]).is_err());
        assert!(MolecularGraph::new(vec![6, 6], vec![b(0, 1, 4)]).is_err());
        assert!(MolecularGraph::new(vec![], vec![]).is_err());
    }

    #[test]
    fn chain_orders_are_symmetric() {
        let g = MolecularGraph::chain(vec![6; 4], &[1, 2, 1]).unwrap();
        assert_eq!(g.bond_order(1, 2), 2);
        assert_eq!(g.bond_order(2, 1), 2);
        assert_eq!(g.bond_order(0, 3), 0);
        assert_eq!((g.hops(0, 3), g.hops(3, 1), g.hops(2, 2)), (3, 2, 0));
        assert_eq!(
            (g.pair_class(0, 1), g.pair_class(1, 2), g.pair_class(0, 2), g.pair_class(0, 3)),
            (1, 2, 4, 5)
        );
        let split = MolecularGraph::new(vec![6; 3], vec![Bond { i: 0, j: 1, order: 1 }]).unwrap();
        assert_eq!((split.hops(0, 2), split.pair_class(0, 2)), (u8::MAX, 0));
        let json = serde_json::to_string(&g).unwrap();
        let back: MolecularGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
    }
}
