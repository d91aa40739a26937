//! Gated recurrent units on top of [`Graph`] primitives.
//!
//! ```text
//! z  = σ(W_z x + U_z h + b_z)
//! r  = σ(W_r x + U_r h + b_r)
//! h~ = tanh(W_h x + U_h (r ∘ h) + b_h)
//! h' = (1 - z) ∘ h + z ∘ h~
//! ```

use super::{Graph, Tensor, Var};
use crate::error::{Result, SmarnetError};

/// Weights of one GRU direction, bound into a graph.
///
/// Input matrices are `(hidden, input)`, recurrent matrices
/// `(hidden, hidden)`, biases `(hidden)`.
#[derive(Clone, Copy, Debug)]
pub struct GruParams {
    pub w_z: Var,
    pub w_r: Var,
    pub w_h: Var,
    pub u_z: Var,
    pub u_r: Var,
    pub u_h: Var,
    pub b_z: Var,
    pub b_r: Var,
    pub b_h: Var,
}

impl GruParams {
    pub fn hidden_dim(&self, g: &Graph) -> usize {
        g.shape(self.u_z)[0]
    }

    pub fn input_dim(&self, g: &Graph) -> usize {
        g.shape(self.w_z)[1]
    }

    fn validate(&self, g: &Graph) -> Result<()> {
        let h = self.hidden_dim(g);
        let i = self.input_dim(g);
        for w in [self.w_z, self.w_r, self.w_h] {
            if g.shape(w) != [h, i] {
                return Err(SmarnetError::shape("gru input weight", &[h, i], g.shape(w)));
            }
        }
        for u in [self.u_z, self.u_r, self.u_h] {
            if g.shape(u) != [h, h] {
                return Err(SmarnetError::shape("gru recurrent weight", &[h, h], g.shape(u)));
            }
        }
        for b in [self.b_z, self.b_r, self.b_h] {
            if g.shape(b) != [h] {
                return Err(SmarnetError::shape("gru bias", &[h], g.shape(b)));
            }
        }
        Ok(())
    }
}

/// Recurrent half of a GRU step, given input projections that already
/// include their biases.
fn recur(g: &mut Graph, xz: Var, xr: Var, xh: Var, h_prev: Var, p: &GruParams) -> Result<Var> {
    let uz = g.matmul(p.u_z, h_prev)?;
    let z_pre = g.add(xz, uz)?;
    let z = g.sigmoid(z_pre);
    let ur = g.matmul(p.u_r, h_prev)?;
    let r_pre = g.add(xr, ur)?;
    let r = g.sigmoid(r_pre);
    let rh = g.mul(r, h_prev)?;
    let uh = g.matmul(p.u_h, rh)?;
    let c_pre = g.add(xh, uh)?;
    let cand = g.tanh(c_pre);
    let diff = g.sub(cand, h_prev)?;
    let step = g.mul(z, diff)?;
    g.add(h_prev, step)
}

/// One GRU step for a single input vector.
pub fn gru_cell(g: &mut Graph, x_t: Var, h_prev: Var, p: &GruParams) -> Result<Var> {
    p.validate(g)?;
    let h = p.hidden_dim(g);
    if g.shape(x_t) != [p.input_dim(g)] {
        return Err(SmarnetError::shape("gru_cell input", &[p.input_dim(g)], g.shape(x_t)));
    }
    if g.shape(h_prev) != [h] {
        return Err(SmarnetError::shape("gru_cell state", &[h], g.shape(h_prev)));
    }
    let xz = g.linear(x_t, p.w_z, Some(p.b_z))?;
    let xr = g.linear(x_t, p.w_r, Some(p.b_r))?;
    let xh = g.linear(x_t, p.w_h, Some(p.b_h))?;
    recur(g, xz, xr, xh, h_prev, p)
}

#[derive(Clone, Debug)]
pub struct BiGruOutput {
    /// `(m, 2h)`: row `i` is `[forward_i ; backward_i]`.
    pub states: Var,
    /// `[forward_{m-1} ; backward_0]`, the last state each direction reached.
    pub final_state: Var,
}

fn run_direction(
    g: &mut Graph,
    seq: Var,
    p: &GruParams,
    order: impl Iterator<Item = usize>,
    m: usize,
) -> Result<Vec<Var>> {
    let xz = g.linear(seq, p.w_z, Some(p.b_z))?;
    let xr = g.linear(seq, p.w_r, Some(p.b_r))?;
    let xh = g.linear(seq, p.w_h, Some(p.b_h))?;
    let mut h = g.constant(Tensor::zeros(&[p.hidden_dim(g)]));
    let mut states = vec![h; m];
    for t in order {
        let zt = g.row(xz, t)?;
        let rt = g.row(xr, t)?;
        let ht = g.row(xh, t)?;
        h = recur(g, zt, rt, ht, h, p)?;
        states[t] = h;
    }
    Ok(states)
}

/// Bidirectional GRU over the rows of `seq (m, in)`.
pub fn bigru(g: &mut Graph, seq: Var, fwd: &GruParams, bwd: &GruParams) -> Result<BiGruOutput> {
    fwd.validate(g)?;
    bwd.validate(g)?;
    let (m, width) = match g.shape(seq) {
        [m, w] => (*m, *w),
        s => return Err(SmarnetError::shape("bigru input", s, &[])),
    };
    if m == 0 {
        return Err(SmarnetError::invalid("bigru over an empty sequence"));
    }
    for p in [fwd, bwd] {
        if p.input_dim(g) != width {
            return Err(SmarnetError::shape("bigru input", &[m, width], &[m, p.input_dim(g)]));
        }
    }
    let f = run_direction(g, seq, fwd, 0..m, m)?;
    let b = run_direction(g, seq, bwd, (0..m).rev(), m)?;
    let fs = g.stack_rows(&f)?;
    let bs = g.stack_rows(&b)?;
    let states = g.concat(&[fs, bs], 1)?;
    let final_state = g.concat(&[f[m - 1], b[0]], 0)?;
    Ok(BiGruOutput {
        states,
        final_state,
    })
}
