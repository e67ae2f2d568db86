//! LSTM cells and the bidirectional sequence encoders for frames and words.
//!
//! Gates follow the usual peephole-free formulation, stacked row-wise in the
//! order input, forget, output, candidate:
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)    f = σ(W_f x + U_f h + b_f)
//! o = σ(W_o x + U_o h + b_o)    g = tanh(W_g x + U_g h + b_g)
//! c' = f ⊙ c + i ⊙ g            h' = o ⊙ tanh(c')
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::{glorot, Bound, ParamStore};
use crate::tensor::Tensor;

/// Bias added to the forget gate at initialization.
pub const FORGET_BIAS: f64 = 1.0;

/// Dimensions of both encoders and the joint space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Raw frame-feature size.
    pub d_v: usize,
    /// Word-embedding size.
    pub d_w: usize,
    /// LSTM input size for frames; `None` feeds raw features directly.
    pub video_input: Option<usize>,
    /// LSTM input size for words; `None` feeds embeddings directly.
    pub text_input: Option<usize>,
    /// Per-direction hidden size of the frame LSTM.
    pub d_hv: usize,
    /// Per-direction hidden size of the word LSTM.
    pub d_hc: usize,
    /// Joint feature size.
    pub d_j: usize,
    /// When false, `2·d_hv` and `2·d_hc` must both equal `d_j` and encoder
    /// outputs are used as-is.
    pub output_projection: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_v: 4096,
            d_w: 300,
            video_input: Some(1024),
            text_input: Some(1024),
            d_hv: 1024,
            d_hc: 512,
            d_j: 1024,
            output_projection: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.d_v, self.d_w, self.d_hv, self.d_hc, self.d_j];
        if dims.contains(&0) || self.video_input == Some(0) || self.text_input == Some(0) {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        if !self.output_projection && (2 * self.d_hv != self.d_j || 2 * self.d_hc != self.d_j) {
            return Err(Error::Config(format!(
                "identity output projection needs 2·d_hv = 2·d_hc = d_j (got {}, {}, {})",
                2 * self.d_hv,
                2 * self.d_hc,
                self.d_j
            )));
        }
        Ok(())
    }

    fn side(&self, side: Side) -> (usize, Option<usize>, usize) {
        match side {
            Side::Video => (self.d_v, self.video_input, self.d_hv),
            Side::Text => (self.d_w, self.text_input, self.d_hc),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Video,
    Text,
}

impl Side {
    pub fn prefix(self) -> &'static str {
        match self {
            Side::Video => "video",
            Side::Text => "text",
        }
    }
}

/// Adds freshly initialized LSTM weights under `prefix`.
pub fn init_lstm<R: Rng + ?Sized>(
    store: &mut ParamStore,
    prefix: &str,
    input: usize,
    hidden: usize,
    rng: &mut R,
) {
    let mut w = Vec::with_capacity(4 * hidden * input);
    let mut u = Vec::with_capacity(4 * hidden * hidden);
    for _ in 0..4 {
        w.extend_from_slice(glorot(hidden, input, rng).data());
        u.extend_from_slice(glorot(hidden, hidden, rng).data());
    }
    let mut b = Tensor::zeros(&[4 * hidden]);
    b.data_mut()[hidden..2 * hidden].fill(FORGET_BIAS);
    store.insert(
        format!("{prefix}.w"),
        Tensor::matrix(4 * hidden, input, w).unwrap(),
    );
    store.insert(
        format!("{prefix}.u"),
        Tensor::matrix(4 * hidden, hidden, u).unwrap(),
    );
    store.insert(format!("{prefix}.b"), b);
}

/// Adds projections and both LSTM directions for one encoder side.
pub fn init_encoder<R: Rng + ?Sized>(
    store: &mut ParamStore,
    cfg: &EncoderConfig,
    side: Side,
    rng: &mut R,
) {
    let p = side.prefix();
    let (raw, input, hidden) = cfg.side(side);
    let lstm_in = match input {
        Some(n) => {
            store.insert(format!("{p}.in"), glorot(n, raw, rng));
            n
        }
        None => raw,
    };
    init_lstm(store, &format!("{p}.fwd"), lstm_in, hidden, rng);
    init_lstm(store, &format!("{p}.bwd"), lstm_in, hidden, rng);
    if cfg.output_projection {
        store.insert(format!("{p}.out"), glorot(cfg.d_j, 2 * hidden, rng));
    }
}

/// One direction's weights bound to a graph.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    /// `4h × input`
    pub w: Var,
    /// `4h × h`
    pub u: Var,
    /// `4h`
    pub b: Var,
    pub hidden: usize,
}

impl LstmVars {
    pub fn bind(g: &Graph, bound: &Bound, prefix: &str) -> Result<Self> {
        let u = bound.var(&format!("{prefix}.u"))?;
        let hidden = g.shape(u)[1];
        Ok(Self {
            w: bound.var(&format!("{prefix}.w"))?,
            u,
            b: bound.var(&format!("{prefix}.b"))?,
            hidden,
        })
    }

    /// Leaves for explicit tensors, mostly for tests.
    pub fn from_tensors(g: &mut Graph, w: Tensor, u: Tensor, b: Tensor) -> Result<Self> {
        let hidden = u.cols();
        if u.shape() != [4 * hidden, hidden] || w.rows() != 4 * hidden || b.shape() != [4 * hidden]
        {
            return Err(Error::shape("lstm params", w.shape(), u.shape()));
        }
        Ok(Self {
            w: g.leaf(w),
            u: g.leaf(u),
            b: g.leaf(b),
            hidden,
        })
    }
}

/// One LSTM step from input `x`.
pub fn lstm_step(g: &mut Graph, x: Var, h: Var, c: Var, p: &LstmVars) -> Result<(Var, Var)> {
    let wx = g.matvec(p.w, x)?;
    lstm_step_projected(g, wx, h, c, p)
}

/// LSTM step where `wx = W·x` has already been computed.
fn lstm_step_projected(g: &mut Graph, wx: Var, h: Var, c: Var, p: &LstmVars) -> Result<(Var, Var)> {
    let d = p.hidden;
    if g.shape(h) != [d] || g.shape(c) != [d] {
        return Err(Error::shape("lstm_step", g.shape(h), &[d]));
    }
    let uh = g.matvec(p.u, h)?;
    let pre = g.add(wx, uh)?;
    let pre = g.add(pre, p.b)?;
    let sig_pre = g.slice(pre, 0, 3 * d)?;
    let sig = g.sigmoid(sig_pre);
    let i = g.slice(sig, 0, d)?;
    let f = g.slice(sig, d, d)?;
    let o = g.slice(sig, 2 * d, d)?;
    let cand_pre = g.slice(pre, 3 * d, d)?;
    let cand = g.tanh(cand_pre);
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next);
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// Per-step outputs of both directions; `bwd[t]` is the backward output at
/// position `t` (it has consumed `t..T`).
#[derive(Clone, Debug)]
pub struct BiEncoding {
    pub fwd: Vec<Var>,
    pub bwd: Vec<Var>,
}

impl BiEncoding {
    pub fn len(&self) -> usize {
        self.fwd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fwd.is_empty()
    }

    /// `y(t) = [y^f(t), y^b(t)]`
    pub fn joined(&self, g: &mut Graph, t: usize) -> Result<Var> {
        g.concat(&[self.fwd[t], self.bwd[t]])
    }

    /// All `y(t)` as rows of a `T × 2h` matrix.
    pub fn matrix(&self, g: &mut Graph) -> Result<Var> {
        let rows = (0..self.len())
            .map(|t| self.joined(g, t))
            .collect::<Result<Vec<_>>>()?;
        g.stack_rows(&rows)
    }
}

/// Runs both directions over the rows of `seq` (`T × input`) from zero state.
pub fn bilstm_encode(
    g: &mut Graph,
    seq: Var,
    fwd: &LstmVars,
    bwd: &LstmVars,
) -> Result<BiEncoding> {
    if g.value(seq).rank() != 2 {
        return Err(Error::arg(
            "bilstm_encode expects a steps × features matrix",
        ));
    }
    let steps = g.shape(seq)[0];
    let fwd_out = run_direction(g, seq, fwd, (0..steps).collect())?;
    let mut bwd_out = run_direction(g, seq, bwd, (0..steps).rev().collect())?;
    bwd_out.reverse();
    Ok(BiEncoding {
        fwd: fwd_out,
        bwd: bwd_out,
    })
}

/// Same as [`bilstm_encode`] for a list of step vectors.
pub fn bilstm_encode_steps(
    g: &mut Graph,
    seq: &[Var],
    fwd: &LstmVars,
    bwd: &LstmVars,
) -> Result<BiEncoding> {
    if seq.is_empty() {
        return Err(Error::arg("cannot encode an empty sequence"));
    }
    let m = g.stack_rows(seq)?;
    bilstm_encode(g, m, fwd, bwd)
}

fn run_direction(g: &mut Graph, seq: Var, p: &LstmVars, order: Vec<usize>) -> Result<Vec<Var>> {
    let wx_all = g.matmul_t(seq, p.w)?;
    let mut h = g.constant(Tensor::zeros(&[p.hidden]));
    let mut c = g.constant(Tensor::zeros(&[p.hidden]));
    let mut outs = Vec::with_capacity(order.len());
    for t in order {
        let wx = g.row(wx_all, t)?;
        (h, c) = lstm_step_projected(g, wx, h, c, p)?;
        outs.push(h);
    }
    Ok(outs)
}

/// `u = [y^f(|c|), y^b(1)]`
pub fn qa_summary(g: &mut Graph, enc: &BiEncoding) -> Result<Var> {
    if enc.is_empty() {
        return Err(Error::arg("summary of an empty encoding"));
    }
    g.concat(&[enc.fwd[enc.len() - 1], enc.bwd[0]])
}

/// Applies `p` (`out × in`) to every row of `seq` (`T × in`).
pub fn project(g: &mut Graph, seq: Var, p: Var) -> Result<Var> {
    g.matmul_t(seq, p)
}

/// Applies `p` to a single vector.
pub fn project_vec(g: &mut Graph, v: Var, p: Var) -> Result<Var> {
    g.matvec(p, v)
}

/// Output of one encoder side.
#[derive(Clone, Debug)]
pub struct EncodedSequence {
    pub outputs: BiEncoding,
    /// Joint-space step encodings, `T × d_j`.
    pub joint: Var,
    /// Joint-space summary `P·[y^f(T), y^b(1)]`.
    pub summary: Var,
}

/// Encodes a raw `T × d_raw` input through input projection, biLSTM and
/// output projection as configured by which parameters exist in `bound`.
pub fn encode_side(g: &mut Graph, bound: &Bound, side: Side, raw: Var) -> Result<EncodedSequence> {
    let p = side.prefix();
    if g.value(raw).rank() != 2 {
        return Err(Error::arg(format!(
            "{p} input must be a steps × features matrix"
        )));
    }
    let input = match bound.var(&format!("{p}.in")) {
        Ok(w) => project(g, raw, w)?,
        Err(_) => raw,
    };
    let fwd = LstmVars::bind(g, bound, &format!("{p}.fwd"))?;
    let bwd = LstmVars::bind(g, bound, &format!("{p}.bwd"))?;
    let outputs = bilstm_encode(g, input, &fwd, &bwd)?;
    let ys = outputs.matrix(g)?;
    let u = qa_summary(g, &outputs)?;
    let (joint, summary) = match bound.var(&format!("{p}.out")) {
        Ok(pm) => (project(g, ys, pm)?, project_vec(g, u, pm)?),
        Err(_) => (ys, u),
    };
    Ok(EncodedSequence {
        outputs,
        joint,
        summary,
    })
}
