//! Flat parameter vector layout: every weight lives in one `Vec<f64>` and the
//! layers index into it through these descriptors.

use std::ops::Range;

use super::ModelConfig;

/// Pair classes fed to the message MLP: other, bond orders 1–3, 1-3, 1-4.
pub const PAIR_CLASSES: usize = 6;

/// A row-major `rows × cols` weight matrix followed by an optional bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub w: usize,
    pub b: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Dense {
    fn alloc(cursor: &mut usize, rows: usize, cols: usize) -> Self {
        let w = *cursor;
        let b = w + rows * cols;
        *cursor = b + rows;
        Self { w, b, rows, cols }
    }

    pub fn weights(&self) -> Range<usize> {
        self.w..self.b
    }

    pub fn bias(&self) -> Range<usize> {
        self.b..self.b + self.rows
    }

    /// `out = W[:, col_range] · x` (no bias), with `x.len() == col_range.len()`.
    #[inline]
    pub fn matvec_cols(&self, params: &[f64], col0: usize, x: &[f64], out: &mut [f64]) {
        let w = &params[self.weights()];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &w[r * self.cols + col0..r * self.cols + col0 + x.len()];
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    /// `out += W[:, col_range]ᵀ · dy`.
    #[inline]
    pub fn matvec_t_cols(&self, params: &[f64], col0: usize, dy: &[f64], out: &mut [f64]) {
        let w = &params[self.weights()];
        for (r, d) in dy.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            let row = &w[r * self.cols + col0..r * self.cols + col0 + out.len()];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * d;
            }
        }
    }

    /// `grad_W[:, col_range] += dy ⊗ x`.
    #[inline]
    pub fn outer_acc(&self, grads: &mut [f64], col0: usize, dy: &[f64], x: &[f64]) {
        let g = &mut grads[self.w..self.b];
        for (r, d) in dy.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            let row = &mut g[r * self.cols + col0..r * self.cols + col0 + x.len()];
            for (o, a) in row.iter_mut().zip(x) {
                *o += d * a;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub embedding: Range<usize>,
    pub time: Dense,
    pub message: Vec<Dense>,
    pub gate: Vec<Dense>,
    pub node_in: Vec<Dense>,
    pub node_out: Vec<Dense>,
    pub len: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let h = cfg.hidden;
        let mut cursor = 0;
        let embedding = 0..cfg.n_kinds * h;
        cursor += cfg.n_kinds * h;
        let time = Dense::alloc(&mut cursor, h, cfg.time_features());
        let msg_cols = 2 * h + cfg.n_rbf + PAIR_CLASSES;
        let mut message = Vec::new();
        let mut gate = Vec::new();
        let mut node_in = Vec::new();
        let mut node_out = Vec::new();
        for l in 0..cfg.layers {
            message.push(Dense::alloc(&mut cursor, h, msg_cols));
            gate.push(Dense::alloc(&mut cursor, 1, h));
            if l + 1 < cfg.layers {
                node_in.push(Dense::alloc(&mut cursor, h, 2 * h));
                node_out.push(Dense::alloc(&mut cursor, h, h));
            }
        }
        Self {
            embedding,
            time,
            message,
            gate,
            node_in,
            node_out,
            len: cursor,
        }
    }

    /// Named parameter blocks, in storage order.
    pub fn blocks(&self) -> Vec<(String, Range<usize>)> {
        let mut out = vec![
            ("embedding".to_string(), self.embedding.clone()),
            ("time.w".to_string(), self.time.weights()),
            ("time.b".to_string(), self.time.bias()),
        ];
        for l in 0..self.message.len() {
            out.push((format!("message{l}.w"), self.message[l].weights()));
            out.push((format!("message{l}.b"), self.message[l].bias()));
            out.push((format!("gate{l}.w"), self.gate[l].weights()));
            out.push((format!("gate{l}.b"), self.gate[l].bias()));
            if let (Some(a), Some(b)) = (self.node_in.get(l), self.node_out.get(l)) {
                out.push((format!("node{l}.in.w"), a.weights()));
                out.push((format!("node{l}.in.b"), a.bias()));
                out.push((format!("node{l}.out.w"), b.weights()));
                out.push((format!("node{l}.out.b"), b.bias()));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_tile_the_parameter_vector() {
        let layout = Layout::new(&ModelConfig::default());
        let blocks = layout.blocks();
        let mut cursor = 0;
        for (name, r) in &blocks {
            assert_eq!(r.start, cursor, "{name}");
            assert!(r.end > r.start, "{name}");
            cursor = r.end;
        }
        assert_eq!(cursor, layout.len);
    }
}
