//! Forward pass with cached activations and the matching reverse pass.
//!
//! Per layer `l`, for every directed neighbor pair `p = (i → j)`:
//!
//! ```text
//! z_p  = W_msg · [h_i, h_j, rbf(d_ij), bond_ij] + b_msg
//! m_p  = silu(z_p)
//! g_p  = w_gate · m_p + b_gate
//! v_i += env_p · g_p · r_ij / (d_ij + ε)
//! ```
//!
//! and between layers `h_i ← h_i + W_out · silu(W_in · [h_i, a_i] + b_in) + b_out`
//! with `a_i = scale · Σ_p env_p · m_p`. With a time offset `κ` configured,
//! the summed velocity is finally divided by `1 − t + κ`. Every quantity
//! multiplying a relative vector is rotation invariant, so the output is
//! equivariant by construction.

use std::f64::consts::PI;

use super::layout::{Layout, PAIR_CLASSES};
use super::{MolecularGraph, ModelConfig};
use crate::error::{Error, Result};
use crate::geom3d::{norm3, sub3, Point, PointSet};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

#[derive(Debug, Clone)]
pub(crate) struct Pair {
    pub i: usize,
    pub j: usize,
    pub unit: Point,
    /// Smooth cutoff weight: 1 for bonded pairs, cosine taper to 0 at the
    /// cutoff for the rest.
    pub envelope: f64,
    pub pair_class: usize,
}

/// Neighbor pairs: all bonded pairs plus unbonded pairs within the cutoff.
pub(crate) fn neighbor_pairs(
    x: &PointSet,
    graph: &MolecularGraph,
    cutoff: f64,
    denom_epsilon: f64,
) -> (Vec<Pair>, Vec<f64>) {
    let n = x.n_atoms();
    let mut pairs = Vec::new();
    let mut dists = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let r = sub3(&x[j], &x[i]);
            let d = norm3(&r);
            let order = graph.bond_order(i, j);
            if order == 0 && d > cutoff {
                continue;
            }
            let envelope = if order > 0 {
                1.0
            } else {
                0.5 * ((PI * d / cutoff).cos() + 1.0)
            };
            let inv = 1.0 / (d + denom_epsilon);
            pairs.push(Pair {
                i,
                j,
                unit: r.map(|c| c * inv),
                envelope,
                pair_class: graph.pair_class(i, j),
            });
            dists.push(d);
        }
    }
    (pairs, dists)
}

pub(crate) fn time_features(cfg: &ModelConfig, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(cfg.time_features());
    for f in 1..=cfg.time_frequencies {
        let w = PI * f as f64 * t;
        out.push(w.sin());
        out.push(w.cos());
    }
    out
}

fn time_gain(cfg: &ModelConfig, t: f64) -> f64 {
    cfg.velocity_time_offset.map_or(1.0, |k| 1.0 / (1.0 - t + k))
}

fn rbf(cfg: &ModelConfig, d: f64, out: &mut [f64]) {
    let k = cfg.n_rbf;
    let spacing = cfg.cutoff / (k.max(2) - 1) as f64;
    for (idx, o) in out.iter_mut().enumerate() {
        let mu = spacing * idx as f64;
        let u = (d - mu) / spacing;
        *o = (-0.5 * u * u).exp();
    }
}

/// Activations of one forward pass, kept for the reverse pass.
pub(crate) struct Tape {
    n: usize,
    pairs: Vec<Pair>,
    /// Pair edge features `[rbf, pair-class one-hot]`, `P × (n_rbf + PAIR_CLASSES)`.
    edge: Vec<f64>,
    phi: Vec<f64>,
    /// Node features entering each layer, `L × N × H`.
    h: Vec<Vec<f64>>,
    /// Message pre-activations and activations, `L × P × H`.
    z: Vec<Vec<f64>>,
    m: Vec<Vec<f64>>,
    /// Aggregated messages and node-MLP pre-activations, `(L−1) × N × H`.
    agg: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    /// Output multiplier `1 / (1 − t + κ)`, or 1.
    gain: f64,
    pub velocity: PointSet,
}

pub(crate) fn forward(
    cfg: &ModelConfig,
    layout: &Layout,
    params: &[f64],
    x: &PointSet,
    graph: &MolecularGraph,
    t: f64,
) -> Result<Tape> {
    let n = x.n_atoms();
    if graph.n_atoms() != n {
        return Err(Error::ShapeMismatch {
            expected: graph.n_atoms(),
            got: n,
        });
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("t={t} outside [0, 1]")));
    }
    if let Some(k) = graph.atom_kinds().iter().find(|&&k| k as usize >= cfg.n_kinds) {
        return Err(Error::InvalidInput(format!(
            "atom kind {k} exceeds embedding table size {}",
            cfg.n_kinds
        )));
    }
    let hd = cfg.hidden;
    let (pairs, dists) = neighbor_pairs(x, graph, cfg.cutoff, cfg.denom_epsilon);
    let np = pairs.len();
    let ew = cfg.n_rbf + PAIR_CLASSES;
    let mut edge = vec![0.0; np * ew];
    for (p, pair) in pairs.iter().enumerate() {
        let row = &mut edge[p * ew..(p + 1) * ew];
        rbf(cfg, dists[p], &mut row[..cfg.n_rbf]);
        row[cfg.n_rbf + pair.pair_class] = 1.0;
    }

    let phi = time_features(cfg, t);
    let mut tau = vec![0.0; hd];
    layout.time.matvec_cols(params, 0, &phi, &mut tau);
    for (o, b) in tau.iter_mut().zip(&params[layout.time.bias()]) {
        *o += b;
    }

    let emb = &params[layout.embedding.clone()];
    let mut h0 = vec![0.0; n * hd];
    for (i, &k) in graph.atom_kinds().iter().enumerate() {
        let row = &emb[k as usize * hd..(k as usize + 1) * hd];
        for c in 0..hd {
            h0[i * hd + c] = row[c] + tau[c];
        }
    }

    let mut tape = Tape {
        n,
        pairs,
        edge,
        phi,
        h: vec![h0],
        z: Vec::new(),
        m: Vec::new(),
        agg: Vec::new(),
        y: Vec::new(),
        s: Vec::new(),
        gain: time_gain(cfg, t),
        velocity: PointSet::zeros(n),
    };
    let mut vel = vec![[0.0f64; 3]; n];

    let mut src = vec![0.0; n * hd];
    let mut dst = vec![0.0; n * hd];
    let mut tmp = vec![0.0; hd];
    for l in 0..cfg.layers {
        let msg = &layout.message[l];
        let h = tape.h.last().expect("layer input");
        for i in 0..n {
            let hi = &h[i * hd..(i + 1) * hd];
            msg.matvec_cols(params, 0, hi, &mut src[i * hd..(i + 1) * hd]);
            msg.matvec_cols(params, hd, hi, &mut dst[i * hd..(i + 1) * hd]);
        }
        let b_msg = &params[msg.bias()];
        let gate_w = &params[layout.gate[l].weights()];
        let gate_b = params[layout.gate[l].bias()][0];
        let mut z = vec![0.0; np * hd];
        let mut m = vec![0.0; np * hd];
        for (p, pair) in tape.pairs.iter().enumerate() {
            msg.matvec_cols(params, 2 * hd, &tape.edge[p * ew..(p + 1) * ew], &mut tmp);
            let zp = &mut z[p * hd..(p + 1) * hd];
            let mp = &mut m[p * hd..(p + 1) * hd];
            let mut g = gate_b;
            for c in 0..hd {
                zp[c] = tmp[c] + src[pair.i * hd + c] + dst[pair.j * hd + c] + b_msg[c];
                mp[c] = silu(zp[c]);
                g += gate_w[c] * mp[c];
            }
            let w = g * pair.envelope;
            for k in 0..3 {
                vel[pair.i][k] += w * pair.unit[k];
            }
        }

        if l + 1 < cfg.layers {
            let node_in = &layout.node_in[l];
            let node_out = &layout.node_out[l];
            let mut agg = vec![0.0; n * hd];
            for (p, pair) in tape.pairs.iter().enumerate() {
                let w = cfg.message_scale * pair.envelope;
                for c in 0..hd {
                    agg[pair.i * hd + c] += w * m[p * hd + c];
                }
            }
            let mut y = vec![0.0; n * hd];
            let mut s = vec![0.0; n * hd];
            let mut h_next = h.clone();
            let b_in = &params[node_in.bias()];
            let b_out = &params[node_out.bias()];
            for i in 0..n {
                let yi = &mut y[i * hd..(i + 1) * hd];
                node_in.matvec_cols(params, 0, &h[i * hd..(i + 1) * hd], yi);
                node_in.matvec_cols(params, hd, &agg[i * hd..(i + 1) * hd], &mut tmp);
                for c in 0..hd {
                    yi[c] += tmp[c] + b_in[c];
                    s[i * hd + c] = silu(yi[c]);
                }
                node_out.matvec_cols(params, 0, &s[i * hd..(i + 1) * hd], &mut tmp);
                for c in 0..hd {
                    h_next[i * hd + c] += tmp[c] + b_out[c];
                }
            }
            tape.agg.push(agg);
            tape.y.push(y);
            tape.s.push(s);
            tape.h.push(h_next);
        }
        tape.z.push(z);
        tape.m.push(m);
    }
    for v in vel.iter_mut() {
        for c in v.iter_mut() {
            *c *= tape.gain;
        }
    }
    tape.velocity = PointSet::new(vel)?;
    Ok(tape)
}

/// Accumulates `∂loss/∂θ` into `grads` given `∂loss/∂v` for every atom.
pub(crate) fn backward(
    cfg: &ModelConfig,
    layout: &Layout,
    params: &[f64],
    graph: &MolecularGraph,
    tape: &Tape,
    d_velocity: &[Point],
    grads: &mut [f64],
) {
    let n = tape.n;
    let hd = cfg.hidden;
    let np = tape.pairs.len();
    let ew = cfg.n_rbf + PAIR_CLASSES;

    // ∂loss/∂(env_p · g_p) is the projection of the velocity adjoint.
    let d_gate: Vec<f64> = tape
        .pairs
        .iter()
        .map(|p| tape.gain * p.envelope * crate::geom3d::dot3(&d_velocity[p.i], &p.unit))
        .collect();

    let mut dh = vec![0.0; n * hd];
    let mut tmp = vec![0.0; hd];
    let mut dz = vec![0.0; hd];
    for l in (0..cfg.layers).rev() {
        let h = &tape.h[l];
        let mut dh_in = vec![0.0; n * hd];
        let mut d_agg = vec![0.0; n * hd];

        if l + 1 < cfg.layers {
            let node_in = &layout.node_in[l];
            let node_out = &layout.node_out[l];
            let (y, s, agg) = (&tape.y[l], &tape.s[l], &tape.agg[l]);
            dh_in.copy_from_slice(&dh);
            for i in 0..n {
                let dhi = &dh[i * hd..(i + 1) * hd];
                node_out.outer_acc(grads, 0, dhi, &s[i * hd..(i + 1) * hd]);
                for (g, d) in grads[node_out.bias()].iter_mut().zip(dhi) {
                    *g += d;
                }
                tmp.fill(0.0);
                node_out.matvec_t_cols(params, 0, dhi, &mut tmp);
                for c in 0..hd {
                    tmp[c] *= silu_grad(y[i * hd + c]);
                }
                node_in.outer_acc(grads, 0, &tmp, &h[i * hd..(i + 1) * hd]);
                node_in.outer_acc(grads, hd, &tmp, &agg[i * hd..(i + 1) * hd]);
                for (g, d) in grads[node_in.bias()].iter_mut().zip(&tmp) {
                    *g += d;
                }
                node_in.matvec_t_cols(params, 0, &tmp, &mut dh_in[i * hd..(i + 1) * hd]);
                node_in.matvec_t_cols(params, hd, &tmp, &mut d_agg[i * hd..(i + 1) * hd]);
            }
        }

        let msg = &layout.message[l];
        let gate = &layout.gate[l];
        let (z, m) = (&tape.z[l], &tape.m[l]);
        let has_node_update = l + 1 < cfg.layers;
        let mut dz_src = vec![0.0; n * hd];
        let mut dz_dst = vec![0.0; n * hd];
        let mut d_gate_w = vec![0.0; hd];
        let mut d_gate_b = 0.0;
        let mut d_msg_b = vec![0.0; hd];
        for p in 0..np {
            let pair = &tape.pairs[p];
            let dg = d_gate[p];
            let mp = &m[p * hd..(p + 1) * hd];
            let zp = &z[p * hd..(p + 1) * hd];
            d_gate_b += dg;
            let gate_w = &params[gate.weights()];
            let agg_w = cfg.message_scale * pair.envelope;
            for c in 0..hd {
                d_gate_w[c] += dg * mp[c];
                let mut dm = dg * gate_w[c];
                if has_node_update {
                    dm += agg_w * d_agg[pair.i * hd + c];
                }
                dz[c] = dm * silu_grad(zp[c]);
                dz_src[pair.i * hd + c] += dz[c];
                dz_dst[pair.j * hd + c] += dz[c];
                d_msg_b[c] += dz[c];
            }
            msg.outer_acc(grads, 2 * hd, &dz, &tape.edge[p * ew..(p + 1) * ew]);
        }
        for (g, d) in grads[gate.weights()].iter_mut().zip(&d_gate_w) {
            *g += d;
        }
        grads[gate.bias()][0] += d_gate_b;
        for (g, d) in grads[msg.bias()].iter_mut().zip(&d_msg_b) {
            *g += d;
        }
        for i in 0..n {
            let hi = &h[i * hd..(i + 1) * hd];
            let ds = &dz_src[i * hd..(i + 1) * hd];
            let dd = &dz_dst[i * hd..(i + 1) * hd];
            msg.outer_acc(grads, 0, ds, hi);
            msg.outer_acc(grads, hd, dd, hi);
            let out = &mut dh_in[i * hd..(i + 1) * hd];
            msg.matvec_t_cols(params, 0, ds, out);
            msg.matvec_t_cols(params, hd, dd, out);
        }
        dh = dh_in;
    }

    let mut d_tau = vec![0.0; hd];
    for (i, &k) in graph.atom_kinds().iter().enumerate() {
        let row = k as usize * hd;
        for c in 0..hd {
            grads[layout.embedding.start + row + c] += dh[i * hd + c];
            d_tau[c] += dh[i * hd + c];
        }
    }
    layout.time.outer_acc(grads, 0, &d_tau, &tape.phi);
    for (g, d) in grads[layout.time.bias()].iter_mut().zip(&d_tau) {
        *g += d;
    }
}
