use rand::Rng;

use super::{DtConfig, DtStep};
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{Dense, LayerNorm, LayerNormCache, Matrix, Parameters};
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, PartialEq)]
struct Block<S> {
    ln1: LayerNorm<S>,
    qkv: Dense<S>,
    proj: Dense<S>,
    ln2: LayerNorm<S>,
    fc1: Dense<S>,
    fc2: Dense<S>,
}

impl<S: Scalar> Block<S> {
    fn new<R: Rng + ?Sized>(e: usize, rng: &mut R) -> Self {
        Self {
            ln1: LayerNorm::new(e),
            qkv: Dense::new(e, 3 * e, rng),
            proj: Dense::new(e, e, rng),
            ln2: LayerNorm::new(e),
            fc1: Dense::new(e, 4 * e, rng),
            fc2: Dense::new(4 * e, e, rng),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            ln1: self.ln1.zeros_like(),
            qkv: self.qkv.zeros_like(),
            proj: self.proj.zeros_like(),
            ln2: self.ln2.zeros_like(),
            fc1: self.fc1.zeros_like(),
            fc2: self.fc2.zeros_like(),
        }
    }

    fn params(&self) -> Vec<&[S]> {
        let mut v = self.ln1.param_slices();
        v.extend(self.qkv.param_slices());
        v.extend(self.proj.param_slices());
        v.extend(self.ln2.param_slices());
        v.extend(self.fc1.param_slices());
        v.extend(self.fc2.param_slices());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut [S]> {
        let mut v = self.ln1.param_slices_mut();
        v.extend(self.qkv.param_slices_mut());
        v.extend(self.proj.param_slices_mut());
        v.extend(self.ln2.param_slices_mut());
        v.extend(self.fc1.param_slices_mut());
        v.extend(self.fc2.param_slices_mut());
        v
    }
}

struct BlockCache<S> {
    ln1: Vec<LayerNormCache<S>>,
    u: Matrix<S>,
    qkv: Matrix<S>,
    /// Attention weights per head and query, over keys `0..=i`.
    probs: Vec<Vec<Vec<S>>>,
    attn: Matrix<S>,
    ln2: Vec<LayerNormCache<S>>,
    u2: Matrix<S>,
    z1: Matrix<S>,
    m: Matrix<S>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokenKind {
    Return,
    State,
    Action(usize),
}

/// Forward values kept for the backward pass.
pub(crate) struct DtTape<S> {
    kinds: Vec<(TokenKind, usize, usize)>,
    embed_ln: Vec<LayerNormCache<S>>,
    blocks: Vec<BlockCache<S>>,
    final_ln: Vec<LayerNormCache<S>>,
    head_in: Matrix<S>,
    state_tokens: Vec<usize>,
    /// Logits at each step's state token.
    pub(crate) logits: Matrix<S>,
}

/// Causal transformer over (return ⊕ preference, state, action) tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct DtNetwork<S> {
    embed_return: Dense<S>,
    embed_state: Dense<S>,
    /// `A × E` action embeddings.
    action_table: Matrix<S>,
    /// `max_timestep × E` absolute timestep embeddings.
    time_table: Matrix<S>,
    embed_ln: LayerNorm<S>,
    blocks: Vec<Block<S>>,
    final_ln: LayerNorm<S>,
    head: Dense<S>,
    num_heads: usize,
}

fn table<S: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix<S> {
    let data = (0..rows * cols).map(|_| S::lit(rng.random_range(-0.1..0.1))).collect();
    Matrix::from_vec(rows, cols, data).expect("sized table")
}

impl<S: Scalar> DtNetwork<S> {
    pub fn new<R: Rng + ?Sized>(
        cfg: &DtConfig,
        state_dim: usize,
        num_actions: usize,
        return_dim: usize,
        max_timestep: usize,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        if state_dim == 0 || num_actions == 0 || max_timestep == 0 {
            return Err(Error::Shape("state_dim, num_actions and max_timestep must be positive".into()));
        }
        let e = cfg.embed_dim;
        let embed_return = Dense::new(return_dim, e, rng);
        let embed_state = Dense::new(state_dim, e, rng);
        let action_table = table(num_actions, e, rng);
        let time_table = table(max_timestep, e, rng);
        let blocks = (0..cfg.num_layers).map(|_| Block::new(e, rng)).collect();
        let head = Dense::new(e, num_actions, rng);
        Ok(Self {
            embed_return,
            embed_state,
            action_table,
            time_table,
            embed_ln: LayerNorm::new(e),
            blocks,
            final_ln: LayerNorm::new(e),
            head,
            num_heads: cfg.num_heads,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_ln.dim()
    }

    pub fn num_actions(&self) -> usize {
        self.head.out_dim
    }

    pub fn state_dim(&self) -> usize {
        self.embed_state.in_dim
    }

    pub fn return_dim(&self) -> usize {
        self.embed_return.in_dim
    }

    pub fn max_timestep(&self) -> usize {
        self.time_table.rows()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            embed_return: self.embed_return.zeros_like(),
            embed_state: self.embed_state.zeros_like(),
            action_table: Matrix::zeros(self.action_table.rows(), self.action_table.cols()),
            time_table: Matrix::zeros(self.time_table.rows(), self.time_table.cols()),
            embed_ln: self.embed_ln.zeros_like(),
            blocks: self.blocks.iter().map(Block::zeros_like).collect(),
            final_ln: self.final_ln.zeros_like(),
            head: self.head.zeros_like(),
            num_heads: self.num_heads,
        }
    }

    fn time_index(&self, timestep: usize) -> usize {
        timestep.saturating_sub(1).min(self.max_timestep() - 1)
    }

    fn check_steps(&self, steps: &[DtStep<S>]) -> Result<()> {
        for st in steps {
            if st.state.len() != self.state_dim() || st.rtg.len() + st.pref.len() != self.return_dim() {
                return Err(Error::Shape(format!(
                    "step has state width {} and return width {}, network expects {} and {}",
                    st.state.len(),
                    st.rtg.len() + st.pref.len(),
                    self.state_dim(),
                    self.return_dim()
                )));
            }
            if st.action.is_some_and(|a| a >= self.num_actions()) {
                return Err(Error::Shape("action id out of range".into()));
            }
        }
        Ok(())
    }

    /// Runs the model on consecutive unpadded steps. A step without an
    /// action contributes no action token.
    pub(crate) fn forward_tape(&self, steps: &[DtStep<S>]) -> Result<DtTape<S>> {
        self.check_steps(steps)?;
        let e = self.embed_dim();
        let mut kinds = Vec::with_capacity(3 * steps.len());
        for (i, st) in steps.iter().enumerate() {
            let t = self.time_index(st.timestep);
            kinds.push((TokenKind::Return, i, t));
            kinds.push((TokenKind::State, i, t));
            if let Some(a) = st.action {
                kinds.push((TokenKind::Action(a), i, t));
            }
        }
        let n = kinds.len();
        let mut x = Matrix::zeros(n, e);
        for (row, &(kind, i, t)) in kinds.iter().enumerate() {
            let out = x.row_mut(row);
            match kind {
                TokenKind::Return => self.embed_return.forward_one(&steps[i].return_input(), out),
                TokenKind::State => self.embed_state.forward_one(&steps[i].state, out),
                TokenKind::Action(a) => out.copy_from_slice(self.action_table.row(a)),
            }
            for (o, &v) in out.iter_mut().zip(self.time_table.row(t)) {
                *o += v;
            }
        }
        let mut h = Matrix::zeros(n, e);
        let embed_ln = (0..n).map(|r| self.embed_ln.forward(x.row(r), h.row_mut(r))).collect();

        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            caches.push(self.block_forward(block, &mut h)?);
        }

        let state_tokens: Vec<usize> = kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| k.0 == TokenKind::State)
            .map(|(r, _)| r)
            .collect();
        let mut head_in = Matrix::zeros(state_tokens.len(), e);
        let final_ln = state_tokens
            .iter()
            .enumerate()
            .map(|(j, &r)| self.final_ln.forward(h.row(r), head_in.row_mut(j)))
            .collect();
        let logits = self.head.forward(&head_in)?;
        Ok(DtTape { kinds, embed_ln, blocks: caches, final_ln, head_in, state_tokens, logits })
    }

    /// Action logits at every step's state token.
    pub fn logits(&self, steps: &[DtStep<S>]) -> Result<Matrix<S>> {
        Ok(self.forward_tape(steps)?.logits)
    }

    /// Parameter gradient of `Σ d_logits ⊙ logits(steps)`.
    pub fn logits_gradient(&self, steps: &[DtStep<S>], d_logits: &Matrix<S>) -> Result<Self> {
        let tape = self.forward_tape(steps)?;
        let mut grad = self.zeros_like();
        self.backward(&tape, steps, d_logits, &mut grad)?;
        Ok(grad)
    }

    fn block_forward(&self, block: &Block<S>, h: &mut Matrix<S>) -> Result<BlockCache<S>> {
        let (n, e) = (h.rows(), h.cols());
        let heads = self.num_heads;
        let dh = e / heads;
        let scale = S::one() / S::from_usize_lossy(dh).sqrt();
        let mut u = Matrix::zeros(n, e);
        let ln1 = (0..n).map(|r| block.ln1.forward(h.row(r), u.row_mut(r))).collect();
        let qkv = block.qkv.forward(&u)?;
        let mut attn = Matrix::zeros(n, e);
        let mut probs = Vec::with_capacity(heads);
        for hd in 0..heads {
            let (qo, ko, vo) = (hd * dh, e + hd * dh, 2 * e + hd * dh);
            let mut head_probs = Vec::with_capacity(n);
            for i in 0..n {
                let q = &qkv.row(i)[qo..qo + dh];
                let scores: Vec<S> = (0..=i).map(|j| dot(q, &qkv.row(j)[ko..ko + dh]) * scale).collect();
                let p = crate::nn::loss::softmax(&scores);
                let out = &mut attn.row_mut(i)[qo..qo + dh];
                for (j, &pj) in p.iter().enumerate() {
                    for (o, &v) in out.iter_mut().zip(&qkv.row(j)[vo..vo + dh]) {
                        *o += pj * v;
                    }
                }
                head_probs.push(p);
            }
            probs.push(head_probs);
        }
        let proj = block.proj.forward(&attn)?;
        for (hv, &pv) in h.as_mut_slice().iter_mut().zip(proj.as_slice()) {
            *hv += pv;
        }
        let mut u2 = Matrix::zeros(n, e);
        let ln2 = (0..n).map(|r| block.ln2.forward(h.row(r), u2.row_mut(r))).collect();
        let z1 = block.fc1.forward(&u2)?;
        let mut m = z1.clone();
        m.as_mut_slice().iter_mut().for_each(|v| *v = v.max(S::zero()));
        let mlp = block.fc2.forward(&m)?;
        for (hv, &mv) in h.as_mut_slice().iter_mut().zip(mlp.as_slice()) {
            *hv += mv;
        }
        Ok(BlockCache { ln1, u, qkv, probs, attn, ln2, u2, z1, m })
    }

    /// Accumulates parameter gradients for `dL/dlogits` into `grad`.
    pub(crate) fn backward(
        &self,
        tape: &DtTape<S>,
        steps: &[DtStep<S>],
        d_logits: &Matrix<S>,
        grad: &mut Self,
    ) -> Result<()> {
        if d_logits.rows() != tape.logits.rows() || d_logits.cols() != tape.logits.cols() {
            return Err(Error::Shape("logit gradient does not match forward pass".into()));
        }
        let n = tape.kinds.len();
        let e = self.embed_dim();
        let d_head_in = self.head.backward(&tape.head_in, d_logits, &mut grad.head);
        let mut dh = Matrix::zeros(n, e);
        for (j, &r) in tape.state_tokens.iter().enumerate() {
            let dx = self.final_ln.backward(&tape.final_ln[j], d_head_in.row(j), &mut grad.final_ln);
            dh.row_mut(r).copy_from_slice(&dx);
        }
        for (b, block) in self.blocks.iter().enumerate().rev() {
            self.block_backward(block, &tape.blocks[b], &mut dh, &mut grad.blocks[b]);
        }
        for (row, &(kind, i, t)) in tape.kinds.iter().enumerate() {
            let dx = self.embed_ln.backward(&tape.embed_ln[row], dh.row(row), &mut grad.embed_ln);
            match kind {
                TokenKind::Return => {
                    self.embed_return.backward_one(&steps[i].return_input(), &dx, &mut grad.embed_return, None)
                }
                TokenKind::State => self.embed_state.backward_one(&steps[i].state, &dx, &mut grad.embed_state, None),
                TokenKind::Action(a) => add_into(grad.action_table.row_mut(a), &dx),
            }
            add_into(grad.time_table.row_mut(t), &dx);
        }
        Ok(())
    }

    fn block_backward(&self, block: &Block<S>, c: &BlockCache<S>, dh: &mut Matrix<S>, g: &mut Block<S>) {
        let (n, e) = (dh.rows(), dh.cols());
        let heads = self.num_heads;
        let dk = e / heads;
        let scale = S::one() / S::from_usize_lossy(dk).sqrt();

        let mut d_m = block.fc2.backward(&c.m, dh, &mut g.fc2);
        for (d, &z) in d_m.as_mut_slice().iter_mut().zip(c.z1.as_slice()) {
            if z <= S::zero() {
                *d = S::zero();
            }
        }
        let d_u2 = block.fc1.backward(&c.u2, &d_m, &mut g.fc1);
        for r in 0..n {
            let dx = block.ln2.backward(&c.ln2[r], d_u2.row(r), &mut g.ln2);
            add_into(dh.row_mut(r), &dx);
        }

        let d_attn = block.proj.backward(&c.attn, dh, &mut g.proj);
        let mut d_qkv = Matrix::zeros(n, 3 * e);
        for hd in 0..heads {
            let (qo, ko, vo) = (hd * dk, e + hd * dk, 2 * e + hd * dk);
            for i in 0..n {
                let p = &c.probs[hd][i];
                let d_out = &d_attn.row(i)[qo..qo + dk];
                let dp: Vec<S> = (0..=i).map(|j| dot(d_out, &c.qkv.row(j)[vo..vo + dk])).collect();
                let inner: S = p.iter().zip(&dp).map(|(&a, &b)| a * b).sum();
                for j in 0..=i {
                    let ds = p[j] * (dp[j] - inner) * scale;
                    for x in 0..dk {
                        let qx = c.qkv.get(i, qo + x);
                        let kx = c.qkv.get(j, ko + x);
                        let row_i = d_qkv.row_mut(i);
                        row_i[qo + x] += ds * kx;
                        let row_j = d_qkv.row_mut(j);
                        row_j[ko + x] += ds * qx;
                        row_j[vo + x] += p[j] * d_out[x];
                    }
                }
            }
        }
        let d_u = block.qkv.backward(&c.u, &d_qkv, &mut g.qkv);
        for r in 0..n {
            let dx = block.ln1.backward(&c.ln1[r], d_u.row(r), &mut g.ln1);
            add_into(dh.row_mut(r), &dx);
        }
    }

    pub(crate) fn write_checkpoint(&self, ck: &mut Checkpoint) {
        ck.set_meta("num_heads", self.num_heads)
            .set_meta("num_layers", self.blocks.len())
            .set_meta("embed_dim", self.embed_dim())
            .set_meta("state_dim", self.state_dim())
            .set_meta("return_dim", self.return_dim())
            .set_meta("num_actions", self.num_actions())
            .set_meta("max_timestep", self.max_timestep());
        ck.push_dense("embed_return", &self.embed_return);
        ck.push_dense("embed_state", &self.embed_state);
        ck.push_tensor("action_table", vec![self.action_table.rows(), self.action_table.cols()], self.action_table.as_slice());
        ck.push_tensor("time_table", vec![self.time_table.rows(), self.time_table.cols()], self.time_table.as_slice());
        ck.push_layer_norm("embed_ln", &self.embed_ln);
        for (i, b) in self.blocks.iter().enumerate() {
            ck.push_layer_norm(&format!("block{i}.ln1"), &b.ln1);
            ck.push_dense(&format!("block{i}.qkv"), &b.qkv);
            ck.push_dense(&format!("block{i}.proj"), &b.proj);
            ck.push_layer_norm(&format!("block{i}.ln2"), &b.ln2);
            ck.push_dense(&format!("block{i}.fc1"), &b.fc1);
            ck.push_dense(&format!("block{i}.fc2"), &b.fc2);
        }
        ck.push_layer_norm("final_ln", &self.final_ln);
        ck.push_dense("head", &self.head);
    }

    pub(crate) fn read_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let e = ck.meta_usize("embed_dim")?;
        let num_heads = ck.meta_usize("num_heads")?;
        if num_heads == 0 || e % num_heads != 0 {
            return Err(Error::Checkpoint("embed_dim must be divisible by num_heads".into()));
        }
        let d = ck.meta_usize("state_dim")?;
        let a = ck.meta_usize("num_actions")?;
        let t = ck.meta_usize("max_timestep")?;
        let blocks = (0..ck.meta_usize("num_layers")?)
            .map(|i| {
                Ok(Block {
                    ln1: ck.layer_norm(&format!("block{i}.ln1"), e)?,
                    qkv: ck.dense(&format!("block{i}.qkv"), e, 3 * e)?,
                    proj: ck.dense(&format!("block{i}.proj"), e, e)?,
                    ln2: ck.layer_norm(&format!("block{i}.ln2"), e)?,
                    fc1: ck.dense(&format!("block{i}.fc1"), e, 4 * e)?,
                    fc2: ck.dense(&format!("block{i}.fc2"), 4 * e, e)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            embed_return: ck.dense("embed_return", ck.meta_usize("return_dim")?, e)?,
            embed_state: ck.dense("embed_state", d, e)?,
            action_table: Matrix::from_vec(a, e, ck.tensor("action_table", a * e)?)?,
            time_table: Matrix::from_vec(t, e, ck.tensor("time_table", t * e)?)?,
            embed_ln: ck.layer_norm("embed_ln", e)?,
            blocks,
            final_ln: ck.layer_norm("final_ln", e)?,
            head: ck.dense("head", e, a)?,
            num_heads,
        })
    }
}

fn add_into<S: Scalar>(dst: &mut [S], src: &[S]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl<S: Scalar> Parameters<S> for DtNetwork<S> {
    fn param_slices(&self) -> Vec<&[S]> {
        let mut v = self.embed_return.param_slices();
        v.extend(self.embed_state.param_slices());
        v.push(self.action_table.as_slice());
        v.push(self.time_table.as_slice());
        v.extend(self.embed_ln.param_slices());
        for b in &self.blocks {
            v.extend(b.params());
        }
        v.extend(self.final_ln.param_slices());
        v.extend(self.head.param_slices());
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [S]> {
        let mut v = self.embed_return.param_slices_mut();
        v.extend(self.embed_state.param_slices_mut());
        v.push(self.action_table.as_mut_slice());
        v.push(self.time_table.as_mut_slice());
        v.extend(self.embed_ln.param_slices_mut());
        for b in &mut self.blocks {
            v.extend(b.params_mut());
        }
        v.extend(self.final_ln.param_slices_mut());
        v.extend(self.head.param_slices_mut());
        v
    }
}
