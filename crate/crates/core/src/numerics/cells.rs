//! Recurrent cells on the tape, row-vector convention (`x` is `1 x in`).

use super::{ParamStore, SeededRng, Tape, Var};
use crate::error::Result;

/// GRU with fused gate weights: `W_x` is `in x 3h` laid out `[z | r | candidate]`.
///
/// ```text
/// z  = σ(x W_z + h U_z + b_z)
/// r  = σ(x W_r + h U_r + b_r)
/// h~ = tanh(x W_c + (r ⊙ h) U_c + b_c)
/// h' = (1 - z) ⊙ h + z ⊙ h~
/// ```
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GruCell {
    pub prefix: String,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(prefix: impl Into<String>, input: usize, hidden: usize) -> Self {
        Self {
            prefix: prefix.into(),
            input,
            hidden,
        }
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    pub fn init_params(&self, store: &mut ParamStore, rng: &mut SeededRng) {
        let h = self.hidden;
        store.init_uniform(self.name("W_x"), self.input, 3 * h, self.input, rng);
        store.init_uniform(self.name("U_zr"), h, 2 * h, h, rng);
        store.init_uniform(self.name("U_c"), h, h, h, rng);
        store.init_uniform(self.name("b"), 1, 3 * h, h, rng);
    }

    /// Input projections `X W_x + b` for all rows of `xs` at once (`T x 3h`).
    pub fn project_inputs(&self, tape: &mut Tape, store: &ParamStore, xs: Var) -> Result<Var> {
        let w = tape.param(store, &self.name("W_x"))?;
        let b = tape.param(store, &self.name("b"))?;
        let xw = tape.matmul(xs, w)?;
        tape.add_row(xw, b)
    }

    /// One step from a precomputed `1 x 3h` input projection.
    pub fn step(&self, tape: &mut Tape, store: &ParamStore, xw: Var, h: Var) -> Result<Var> {
        let hd = self.hidden;
        let u_zr = tape.param(store, &self.name("U_zr"))?;
        let u_c = tape.param(store, &self.name("U_c"))?;
        let x_zr = tape.slice_cols(xw, 0, 2 * hd)?;
        let x_c = tape.slice_cols(xw, 2 * hd, hd)?;
        let h_zr = tape.matmul(h, u_zr)?;
        let pre = tape.add(x_zr, h_zr)?;
        let zr = tape.sigmoid(pre);
        let z = tape.slice_cols(zr, 0, hd)?;
        let r = tape.slice_cols(zr, hd, hd)?;
        let rh = tape.mul(r, h)?;
        let rh_u = tape.matmul(rh, u_c)?;
        let pre_c = tape.add(x_c, rh_u)?;
        let cand = tape.tanh(pre_c);
        let keep = tape.one_minus(z);
        let old = tape.mul(keep, h)?;
        let new = tape.mul(z, cand)?;
        tape.add(old, new)
    }

    /// Runs over the rows of `xs` (forward, or right-to-left when `reverse`)
    /// and returns the `T x h` states in input order.
    pub fn run(&self, tape: &mut Tape, store: &ParamStore, xs: Var, h0: Var, reverse: bool) -> Result<Var> {
        let t_len = tape.shape(xs).0;
        let xw = self.project_inputs(tape, store, xs)?;
        let mut states = vec![h0; t_len];
        let mut h = h0;
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..t_len).rev())
        } else {
            Box::new(0..t_len)
        };
        for t in order {
            let x_t = tape.slice_rows(xw, t, 1)?;
            h = self.step(tape, store, x_t, h)?;
            states[t] = h;
        }
        tape.concat_rows(&states)
    }
}

/// LSTM with fused gates: `W_x` is `in x 4h`, `W_h` is `h x 4h`, order `[i | f | o | g]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LstmCell {
    pub prefix: String,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(prefix: impl Into<String>, input: usize, hidden: usize) -> Self {
        Self {
            prefix: prefix.into(),
            input,
            hidden,
        }
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    pub fn init_params(&self, store: &mut ParamStore, rng: &mut SeededRng) {
        let h = self.hidden;
        store.init_uniform(self.name("W_x"), self.input, 4 * h, self.input, rng);
        store.init_uniform(self.name("W_h"), h, 4 * h, h, rng);
        store.init_uniform(self.name("b"), 1, 4 * h, h, rng);
    }

    /// Hidden states (`T x h`) over the rows of `xs`, in input order.
    pub fn run(&self, tape: &mut Tape, store: &ParamStore, xs: Var, reverse: bool) -> Result<Var> {
        let hd = self.hidden;
        let t_len = tape.shape(xs).0;
        let w_x = tape.param(store, &self.name("W_x"))?;
        let w_h = tape.param(store, &self.name("W_h"))?;
        let b = tape.param(store, &self.name("b"))?;
        let xw = tape.matmul(xs, w_x)?;
        let xw = tape.add_row(xw, b)?;
        let zeros = crate::numerics::Matrix::zeros(1, hd);
        let mut h = tape.constant(zeros.clone());
        let mut c = tape.constant(zeros);
        let mut states = vec![h; t_len];
        let order: Vec<usize> = if reverse {
            (0..t_len).rev().collect()
        } else {
            (0..t_len).collect()
        };
        for t in order {
            let x_t = tape.slice_rows(xw, t, 1)?;
            let h_w = tape.matmul(h, w_h)?;
            let pre = tape.add(x_t, h_w)?;
            let sig_part = tape.slice_cols(pre, 0, 3 * hd)?;
            let gates = tape.sigmoid(sig_part);
            let i = tape.slice_cols(gates, 0, hd)?;
            let f = tape.slice_cols(gates, hd, hd)?;
            let o = tape.slice_cols(gates, 2 * hd, hd)?;
            let g_pre = tape.slice_cols(pre, 3 * hd, hd)?;
            let g = tape.tanh(g_pre);
            let fc = tape.mul(f, c)?;
            let ig = tape.mul(i, g)?;
            c = tape.add(fc, ig)?;
            let tc = tape.tanh(c);
            h = tape.mul(o, tc)?;
            states[t] = h;
        }
        tape.concat_rows(&states)
    }
}
