use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{Init, ParamId, ParameterStore};
use super::tensor::Tensor2;
use crate::error::NnError;

/// `y = x W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParameterStore, name: &str, in_dim: usize, out_dim: usize, bias: bool) -> Self {
        let w = store.add(format!("{name}.w"), in_dim, out_dim, Init::Xavier { fan_in: in_dim, fan_out: out_dim });
        let b = bias.then(|| store.add(format!("{name}.b"), 1, out_dim, Init::Zeros));
        Linear { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        let w = g.param(self.w);
        let y = g.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Single GRU cell with fused gate matrices (update, reset, candidate).
///
/// ```text
/// z = σ(x Wz + bz + h Uz + cz)
/// r = σ(x Wr + br + h Ur + cr)
/// n = tanh(x Wn + bn + r ⊙ (h Un + cn))
/// h' = (1 - z) ⊙ n + z ⊙ h
/// ```
#[derive(Clone, Debug)]
pub struct GruCell {
    pub wx: ParamId,
    pub uh: ParamId,
    pub bx: ParamId,
    pub bh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(store: &mut ParameterStore, name: &str, input: usize, hidden: usize) -> Self {
        GruCell {
            wx: store.add(format!("{name}.wx"), input, 3 * hidden, Init::XavierGates { gates: 3 }),
            uh: store.add(format!("{name}.uh"), hidden, 3 * hidden, Init::XavierGates { gates: 3 }),
            bx: store.add(format!("{name}.bx"), 1, 3 * hidden, Init::Zeros),
            bh: store.add(format!("{name}.bh"), 1, 3 * hidden, Init::Zeros),
            input,
            hidden,
        }
    }

    /// Input projections `X Wx + bx` for a whole sequence.
    pub fn project_inputs(&self, g: &mut Graph, xs: Var) -> Result<Var, NnError> {
        let wx = g.param(self.wx);
        let bx = g.param(self.bx);
        let p = g.matmul(xs, wx)?;
        g.add_row(p, bx)
    }

    /// One step from an already projected input row.
    pub fn step_projected(&self, g: &mut Graph, gi: Var, h: Var) -> Result<Var, NnError> {
        let hd = self.hidden;
        let uh = g.param(self.uh);
        let bh = g.param(self.bh);
        let gh = g.matmul(h, uh)?;
        let gh = g.add_row(gh, bh)?;
        let (gi_z, gi_r, gi_n) = (g.slice_cols(gi, 0, hd)?, g.slice_cols(gi, hd, hd)?, g.slice_cols(gi, 2 * hd, hd)?);
        let (gh_z, gh_r, gh_n) = (g.slice_cols(gh, 0, hd)?, g.slice_cols(gh, hd, hd)?, g.slice_cols(gh, 2 * hd, hd)?);
        let z = g.add(gi_z, gh_z)?;
        let z = g.sigmoid(z);
        let r = g.add(gi_r, gh_r)?;
        let r = g.sigmoid(r);
        let rn = g.mul(r, gh_n)?;
        let n = g.add(gi_n, rn)?;
        let n = g.tanh(n);
        let keep = g.mul(z, h)?;
        let one_minus_z = g.one_minus(z);
        let new = g.mul(one_minus_z, n)?;
        g.add(new, keep)
    }

    pub fn step(&self, g: &mut Graph, x: Var, h: Var) -> Result<Var, NnError> {
        if g.shape(x) != (1, self.input) || g.shape(h) != (1, self.hidden) {
            return Err(NnError::dim(
                "gru_cell",
                format!("x {:?}, h {:?}, cell {}->{}", g.shape(x), g.shape(h), self.input, self.hidden),
            ));
        }
        let gi = self.project_inputs(g, x)?;
        self.step_projected(g, gi, h)
    }

    /// Runs over the rows of `xs`; returns states in sequence order
    /// (for `reverse`, state `t` has consumed rows `t..`).
    pub fn run(&self, g: &mut Graph, xs: Var, h0: Var, reverse: bool) -> Result<Vec<Var>, NnError> {
        let (steps, width) = g.shape(xs);
        if width != self.input {
            return Err(NnError::dim("gru_run", format!("input width {width}, cell expects {}", self.input)));
        }
        let projected = self.project_inputs(g, xs)?;
        let mut states = vec![h0; steps];
        let mut h = h0;
        let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
        for t in order {
            let gi = g.slice_rows(projected, t, 1)?;
            h = self.step_projected(g, gi, h)?;
            states[t] = h;
        }
        Ok(states)
    }
}

#[derive(Clone, Debug)]
pub struct BiGruOutput {
    /// `T x 2H`, row `t` = `[forward_t; backward_t]`.
    pub outputs: Var,
    pub final_forward: Var,
    pub final_backward: Var,
}

/// Stacked bidirectional GRU; each layer reads the previous layer's concatenated states.
#[derive(Clone, Debug)]
pub struct BiGru {
    pub layers: Vec<(GruCell, GruCell)>,
    pub hidden: usize,
}

impl BiGru {
    pub fn new(store: &mut ParameterStore, name: &str, input: usize, hidden: usize, layers: usize) -> Self {
        let layers = (0..layers.max(1))
            .map(|l| {
                let width = if l == 0 { input } else { 2 * hidden };
                (
                    GruCell::new(store, &format!("{name}.l{l}.fwd"), width, hidden),
                    GruCell::new(store, &format!("{name}.l{l}.bwd"), width, hidden),
                )
            })
            .collect();
        BiGru { layers, hidden }
    }

    pub fn forward(&self, g: &mut Graph, xs: Var) -> Result<BiGruOutput, NnError> {
        let steps = g.shape(xs).0;
        let zero = g.constant(Tensor2::zeros(1, self.hidden));
        let mut input = xs;
        let mut finals = (zero, zero);
        for (fwd, bwd) in &self.layers {
            let f = fwd.run(g, input, zero, false)?;
            let b = bwd.run(g, input, zero, true)?;
            let rows: Vec<Var> = (0..steps)
                .map(|t| g.concat_cols(&[f[t], b[t]]))
                .collect::<Result<_, _>>()?;
            input = g.stack_rows(&rows)?;
            finals = (f[steps - 1], b[0]);
        }
        Ok(BiGruOutput { outputs: input, final_forward: finals.0, final_backward: finals.1 })
    }
}

/// Bi-affine scorer `lᵀ W_l + lᵀ W_lr r + rᵀ W_r + b` over `n_out` labels.
#[derive(Clone, Debug)]
pub struct Biaffine {
    pub w_l: ParamId,
    pub w_r: ParamId,
    pub w_lr: ParamId,
    pub b: ParamId,
    pub dim: usize,
    pub n_out: usize,
}

impl Biaffine {
    pub fn new(store: &mut ParameterStore, name: &str, dim: usize, n_out: usize) -> Self {
        Biaffine {
            w_l: store.add(format!("{name}.w_l"), dim, n_out, Init::Xavier { fan_in: dim, fan_out: n_out }),
            w_r: store.add(format!("{name}.w_r"), dim, n_out, Init::Xavier { fan_in: dim, fan_out: n_out }),
            w_lr: store.add(
                format!("{name}.w_lr"),
                dim,
                dim * n_out,
                Init::Xavier { fan_in: dim * dim, fan_out: n_out },
            ),
            b: store.add(format!("{name}.b"), 1, n_out, Init::Zeros),
            dim,
            n_out,
        }
    }

    pub fn forward(&self, g: &mut Graph, l: Var, r: Var) -> Result<Var, NnError> {
        let (w_l, w_r, w_lr, b) = (g.param(self.w_l), g.param(self.w_r), g.param(self.w_lr), g.param(self.b));
        let left = g.matmul(l, w_l)?;
        let pair = g.bilinear(l, w_lr, r, self.n_out)?;
        let right = g.matmul(r, w_r)?;
        let s = g.add(left, pair)?;
        let s = g.add(s, right)?;
        g.add_row(s, b)
    }
}

/// Inverted dropout; identity when `rng` is `None` or `rate == 0`.
pub fn dropout<R: Rng>(g: &mut Graph, x: Var, rate: f64, rng: Option<&mut R>) -> Result<Var, NnError> {
    match rng {
        Some(rng) if rate > 0.0 => {
            let (r, c) = g.shape(x);
            let keep = 1.0 - rate;
            let mask: Vec<f64> = (0..r * c).map(|_| if rng.gen_bool(keep) { 1.0 / keep } else { 0.0 }).collect();
            g.mul_const(x, Tensor2::from_vec(r, c, mask)?)
        }
        _ => Ok(x),
    }
}
