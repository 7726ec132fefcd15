//! Model parameters and the differentiable forward pieces: token encoder,
//! candidate bank, goal decomposition with optional cross-goal attention,
//! pointer scoring, and leaf-type classification.

use std::collections::BTreeMap;

use mtree_core::mtree::{LeafForm, MOp};
use ndarray::Array2;
use num::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::NagdError;
use crate::tensor::{Graph, Tid};

/// Fixed slot count per goal decomposition.
pub const MAX_LEN: usize = 8;

/// Leaf-form classes in classifier output order.
pub const FORMS: [LeafForm; 4] = [
    LeafForm::Plain,
    LeafForm::Reciprocal,
    LeafForm::Negated,
    LeafForm::NegatedReciprocal,
];

pub fn form_class(form: LeafForm) -> usize {
    FORMS.iter().position(|f| *f == form).unwrap()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub d_k: usize,
    pub heads: usize,
    pub focal_gamma: f64,
    pub depth_cap: usize,
    pub lr: f64,
    /// Weight of the focal type loss relative to the pointer loss.
    pub type_loss_weight: f64,
    pub cross_goal: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            d_k: 128,
            heads: 4,
            focal_gamma: 2.0,
            depth_cap: 6,
            lr: 1e-3,
            type_loss_weight: 1.0,
            cross_goal: true,
        }
    }
}

/// Closed token vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocab {
    /// Deduplicates and sorts, so the same token set always yields the
    /// same table regardless of input order.
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let set: std::collections::BTreeSet<String> = tokens.into_iter().collect();
        let tokens: Vec<String> = set.into_iter().collect();
        let index = tokens.iter().cloned().zip(0..).collect();
        Vocab { tokens, index }
    }

    pub fn id(&self, token: &str) -> Result<usize, NagdError> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| NagdError::UnknownToken(token.to_string()))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// All trainable state plus the immutable pieces needed to rebuild it.
#[derive(Debug, Clone)]
pub struct NagdModel {
    pub hyper: HyperParams,
    pub vocab: Vocab,
    /// Constant candidate values (may be empty).
    pub constants: Vec<BigRational>,
    pub params: BTreeMap<String, Array2<f64>>,
}

/// Canonical parameter list: (name, shape). Checkpoints and the optimizer
/// both follow this order.
pub fn param_specs(
    hyper: &HyperParams,
    vocab_len: usize,
    n_consts: usize,
) -> Vec<(String, (usize, usize))> {
    let d = hyper.d_k;
    let f = 2 * d;
    let spec: Vec<(&str, (usize, usize))> = vec![
        ("embed", (vocab_len, d)),
        ("cls", (1, d)),
        ("enc.wq", (d, d)),
        ("enc.wk", (d, d)),
        ("enc.wv", (d, d)),
        ("enc.wo", (d, d)),
        ("enc.g1", (1, d)),
        ("enc.ff1", (d, f)),
        ("enc.fb1", (1, f)),
        ("enc.ff2", (f, d)),
        ("enc.fb2", (1, d)),
        ("enc.g2", (1, d)),
        ("dec.wq", (d, d)),
        ("dec.wk", (d, d)),
        ("dec.wv", (d, d)),
        ("dec.g", (1, d)),
        ("inter.wk", (d, d)),
        ("inter.wv", (d, d)),
        ("ptr.u", (d, 1)),
        ("ptr.wp", (d, d)),
        ("ptr.wb", (d, d)),
        ("type.w1", (d, d)),
        ("type.b1", (1, d)),
        ("type.w2", (d, 4)),
        ("type.b2", (1, 4)),
        ("bank.ops", (4, d)),
        ("bank.consts", (n_consts, d)),
        ("bank.nb", (1, d)),
    ];
    spec.into_iter().map(|(n, s)| (n.to_string(), s)).collect()
}

impl NagdModel {
    pub fn new(
        hyper: HyperParams,
        vocab: Vocab,
        constants: Vec<BigRational>,
        seed: u64,
    ) -> Result<Self, NagdError> {
        if hyper.d_k == 0 || hyper.d_k % 2 != 0 || hyper.heads == 0 || hyper.d_k % hyper.heads != 0
        {
            return Err(NagdError::BadDims { d_k: hyper.d_k, heads: hyper.heads });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        for (name, (rows, cols)) in param_specs(&hyper, vocab.len(), constants.len()) {
            let value = if name.ends_with(".g1") || name.ends_with(".g2") || name == "dec.g" {
                Array2::from_elem((rows, cols), 1.0)
            } else if name.starts_with("type.b") || name.starts_with("enc.fb") {
                Array2::zeros((rows, cols))
            } else {
                xavier(&mut rng, rows, cols)
            };
            params.insert(name, value);
        }
        Ok(NagdModel { hyper, vocab, constants, params })
    }

    pub fn param(&self, name: &str) -> &Array2<f64> {
        &self.params[name]
    }
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let mut v = Array2::zeros((rows, cols));
    for cell in v.iter_mut() {
        *cell = rng.random_range(-a..a);
    }
    v
}

/// Graph handles for every model parameter.
pub struct ModelIds {
    map: BTreeMap<String, Tid>,
}

impl ModelIds {
    pub fn get(&self, name: &str) -> Tid {
        self.map[name]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tid)> {
        self.map.iter()
    }
}

/// Insert every parameter into the graph; `trainable` decides whether
/// gradients flow (training) or not (decode).
pub fn insert_params(g: &mut Graph, model: &NagdModel, trainable: bool) -> ModelIds {
    let mut map = BTreeMap::new();
    for (name, value) in &model.params {
        let id = if trainable { g.param(value.clone()) } else { g.constant(value.clone()) };
        map.insert(name.clone(), id);
    }
    ModelIds { map }
}

/// Sinusoidal position table:
/// p[i,2j] = sin(i/10000^(2j/d_k)), p[i,2j+1] = cos(i/10000^(2j/d_k)).
pub fn positional_encoding(len: usize, d_k: usize) -> Result<Array2<f64>, NagdError> {
    if d_k % 2 != 0 {
        return Err(NagdError::OddDimension(d_k));
    }
    let mut p = Array2::zeros((len, d_k));
    for i in 0..len {
        for j in 0..d_k / 2 {
            let angle = i as f64 / 10000f64.powf(2.0 * j as f64 / d_k as f64);
            p[[i, 2 * j]] = angle.sin();
            p[[i, 2 * j + 1]] = angle.cos();
        }
    }
    Ok(p)
}

/// Multi-head self-attention. Per head: softmax(QKᵀ/√d_h)V; heads are
/// concatenated and, when `w_o` is given, projected.
fn mh_self_attention(
    g: &mut Graph,
    x: Tid,
    wq: Tid,
    wk: Tid,
    wv: Tid,
    w_o: Option<Tid>,
    heads: usize,
) -> Tid {
    let d = g.value(x).ncols();
    let dh = d / heads;
    let q = g.matmul(x, wq);
    let k = g.matmul(x, wk);
    let v = g.matmul(x, wv);
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let qh = g.slice_cols(q, lo, hi);
        let kh = g.slice_cols(k, lo, hi);
        let vh = g.slice_cols(v, lo, hi);
        let kt = g.transpose(kh);
        let scores = g.matmul(qh, kt);
        let scaled = g.scale(scores, 1.0 / (dh as f64).sqrt());
        let attn = g.softmax_rows(scaled);
        outs.push(g.matmul(attn, vh));
    }
    let cat = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs) };
    match w_o {
        Some(w) => g.matmul(cat, w),
        None => cat,
    }
}

/// Encode a token sequence. Returns `(e_s, e_v)`: the pooled problem
/// vector (position 0, a learned pooling token) and one row per entry of
/// `number_positions` (indices into the raw token list).
pub fn encode(
    g: &mut Graph,
    ids: &ModelIds,
    hyper: &HyperParams,
    token_ids: &[usize],
    number_positions: &[usize],
) -> Result<(Tid, Tid), NagdError> {
    if token_ids.is_empty() {
        return Err(NagdError::EmptyTokens);
    }
    let emb = g.gather_rows(ids.get("embed"), token_ids);
    let seq = {
        let cls = ids.get("cls");
        g.concat_rows(&[cls, emb])
    };
    let pe = positional_encoding(token_ids.len() + 1, hyper.d_k)?;
    let pe = g.constant(pe);
    let x = g.add(seq, pe);

    let attn = mh_self_attention(
        g,
        x,
        ids.get("enc.wq"),
        ids.get("enc.wk"),
        ids.get("enc.wv"),
        Some(ids.get("enc.wo")),
        hyper.heads,
    );
    let res1 = g.add(x, attn);
    let x1 = g.rms_norm_rows(res1, ids.get("enc.g1"));

    let rows = token_ids.len() + 1;
    let h = g.matmul(x1, ids.get("enc.ff1"));
    let b1 = g.broadcast_rows(ids.get("enc.fb1"), rows);
    let h = g.add(h, b1);
    let h = g.tanh(h);
    let h = g.matmul(h, ids.get("enc.ff2"));
    let b2 = g.broadcast_rows(ids.get("enc.fb2"), rows);
    let h = g.add(h, b2);
    let res2 = g.add(x1, h);
    let x2 = g.rms_norm_rows(res2, ids.get("enc.g2"));

    let e_s = g.slice_rows(x2, 0, 1);
    let shifted: Vec<usize> = number_positions.iter().map(|p| p + 1).collect();
    let e_v = g.gather_rows(x2, &shifted);
    Ok((e_s, e_v))
}

/// Candidate-row bookkeeping: rows are ordered
/// [operators (4)] [constants] [problem numbers] [N_b].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BankLayout {
    pub n_consts: usize,
    pub n_numbers: usize,
}

impl BankLayout {
    pub fn op_index(&self, op: MOp) -> usize {
        MOp::ALL.iter().position(|o| *o == op).unwrap()
    }

    pub fn const_index(&self, i: usize) -> usize {
        4 + i
    }

    pub fn number_index(&self, k: usize) -> usize {
        4 + self.n_consts + k
    }

    pub fn nb_index(&self) -> usize {
        4 + self.n_consts + self.n_numbers
    }

    pub fn total(&self) -> usize {
        self.nb_index() + 1
    }

    /// Inverse of the index mapping.
    pub fn classify(&self, index: usize) -> BankEntry {
        if index < 4 {
            BankEntry::Operator(MOp::ALL[index])
        } else if index < 4 + self.n_consts {
            BankEntry::Constant(index - 4)
        } else if index < self.nb_index() {
            BankEntry::Number(index - 4 - self.n_consts)
        } else {
            BankEntry::Terminator
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BankEntry {
    Operator(MOp),
    /// Index into the constant list.
    Constant(usize),
    /// Index into the problem quantity list.
    Number(usize),
    Terminator,
}

/// Stack the candidate bank for one problem: operator and constant
/// embeddings, encoder number rows, and the N_b terminator row.
pub fn build_bank(g: &mut Graph, ids: &ModelIds, e_v: Tid, n_consts: usize) -> (Tid, BankLayout) {
    let layout = BankLayout { n_consts, n_numbers: g.value(e_v).nrows() };
    let mut parts = vec![ids.get("bank.ops")];
    if n_consts > 0 {
        parts.push(ids.get("bank.consts"));
    }
    parts.push(e_v);
    parts.push(ids.get("bank.nb"));
    (g.concat_rows(&parts), layout)
}

/// Per-goal decomposition output.
pub struct GoalOut {
    /// Slot representations after inter-attention, 8×d.
    pub e_hat: Tid,
    /// Pointer scores, 8×(bank size).
    pub omega: Tid,
    /// Leaf-form logits, 8×4.
    pub type_logits: Tid,
}

/// Decompose every goal of one level into 8 candidate slots.
///
/// Each goal vector is broadcast over the 8 positions and fused with the
/// sinusoidal position table by element-wise sum. With `cross_goal`
/// disabled, self-attention runs over each goal's 8 slots independently;
/// with it enabled, one joint self-attention runs over the concatenated
/// slots of all goals in `goals` (siblings peek at each other). The
/// attended slots then query the candidate bank via inter-attention,
/// yielding `e_hat`, pointer scores, and type logits per goal.
pub fn decompose_level(
    g: &mut Graph,
    ids: &ModelIds,
    hyper: &HyperParams,
    goals: &[Tid],
    bank: Tid,
    cross_goal: bool,
) -> Result<Vec<GoalOut>, NagdError> {
    assert!(!goals.is_empty(), "decompose_level needs at least one goal");
    let pe = positional_encoding(MAX_LEN, hyper.d_k)?;
    let e_ps: Vec<Tid> = goals
        .iter()
        .map(|goal| {
            let b = g.broadcast_rows(*goal, MAX_LEN);
            let pe = g.constant(pe.clone());
            g.add(b, pe)
        })
        .collect();

    let tildes: Vec<Tid> = if cross_goal && e_ps.len() > 1 {
        let stacked = g.concat_rows(&e_ps);
        let attn = mh_self_attention(
            g,
            stacked,
            ids.get("dec.wq"),
            ids.get("dec.wk"),
            ids.get("dec.wv"),
            None,
            hyper.heads,
        );
        let res = g.add(stacked, attn);
        let normed = g.rms_norm_rows(res, ids.get("dec.g"));
        (0..e_ps.len())
            .map(|i| g.slice_rows(normed, i * MAX_LEN, (i + 1) * MAX_LEN))
            .collect()
    } else {
        e_ps.iter()
            .map(|e_p| {
                let attn = mh_self_attention(
                    g,
                    *e_p,
                    ids.get("dec.wq"),
                    ids.get("dec.wk"),
                    ids.get("dec.wv"),
                    None,
                    hyper.heads,
                );
                let res = g.add(*e_p, attn);
                g.rms_norm_rows(res, ids.get("dec.g"))
            })
            .collect()
    };

    // inter-attention: the attended slots query the bank directly
    // (no query projection), scaled by √d_k
    let bank_k = g.matmul(bank, ids.get("inter.wk"));
    let bank_v = g.matmul(bank, ids.get("inter.wv"));
    let bank_kt = g.transpose(bank_k);
    let bank_ptr = g.matmul(bank, ids.get("ptr.wb"));
    let scale = 1.0 / (hyper.d_k as f64).sqrt();
    let outs = tildes
        .into_iter()
        .map(|tilde| {
            let scores = g.matmul(tilde, bank_kt);
            let scores = g.scale(scores, scale);
            let attn = g.softmax_rows(scores);
            let e_hat = g.matmul(attn, bank_v);
            let omega = pointer_scores(g, ids, e_hat, bank_ptr);
            let type_logits = type_logits(g, ids, e_hat);
            GoalOut { e_hat, omega, type_logits }
        })
        .collect();
    Ok(outs)
}

/// ω_ij = uᵀ tanh(W_p e^p_i + W_b e^c_j), assembled row by row.
fn pointer_scores(g: &mut Graph, ids: &ModelIds, e_hat: Tid, bank_ptr: Tid) -> Tid {
    let a = g.matmul(e_hat, ids.get("ptr.wp"));
    let m = g.value(bank_ptr).nrows();
    let u = ids.get("ptr.u");
    let mut rows = Vec::with_capacity(MAX_LEN);
    for i in 0..MAX_LEN {
        let ai = g.slice_rows(a, i, i + 1);
        let ai = g.broadcast_rows(ai, m);
        let sum = g.add(ai, bank_ptr);
        let t = g.tanh(sum);
        let col = g.matmul(t, u);
        rows.push(g.transpose(col));
    }
    g.concat_rows(&rows)
}

/// One-hidden-layer MLP over the slot representations, 8×4 logits.
fn type_logits(g: &mut Graph, ids: &ModelIds, e_hat: Tid) -> Tid {
    let rows = g.value(e_hat).nrows();
    let h = g.matmul(e_hat, ids.get("type.w1"));
    let b1 = g.broadcast_rows(ids.get("type.b1"), rows);
    let h = g.add(h, b1);
    let h = g.tanh(h);
    let l = g.matmul(h, ids.get("type.w2"));
    let b2 = g.broadcast_rows(ids.get("type.b2"), rows);
    g.add(l, b2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_model() -> NagdModel {
        let hyper = HyperParams { d_k: 8, heads: 2, ..HyperParams::default() };
        let vocab = Vocab::from_tokens(
            ["+", "*", "(", ")", "N0", "N1", "N2", "neg"].iter().map(|s| s.to_string()),
        );
        NagdModel::new(hyper, vocab, vec![], 7).unwrap()
    }

    #[test]
    fn positional_encoding_matches_formula() {
        let p = positional_encoding(8, 6).unwrap();
        for j in 0..3 {
            assert_eq!(p[[0, 2 * j]], 0.0);
            assert_eq!(p[[0, 2 * j + 1]], 1.0);
        }
        assert!((p[[1, 0]] - 1f64.sin()).abs() < 1e-12);
        for i in 0..8 {
            for j in 0..3 {
                let s = p[[i, 2 * j]];
                let c = p[[i, 2 * j + 1]];
                assert!((s * s + c * c - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(positional_encoding(8, 7), Err(NagdError::OddDimension(7)));
    }

    #[test]
    fn encoder_shape_contract() {
        let model = tiny_model();
        let mut g = Graph::new();
        let ids = insert_params(&mut g, &model, false);
        // 12 tokens, numbers at three positions
        let toks: Vec<usize> = (0..12).map(|i| i % model.vocab.len()).collect();
        let (e_s, e_v) = encode(&mut g, &ids, &model.hyper, &toks, &[1, 5, 9]).unwrap();
        assert_eq!(g.value(e_s).dim(), (1, 8));
        assert_eq!(g.value(e_v).dim(), (3, 8));
    }

    #[test]
    fn encoder_is_order_sensitive() {
        let model = tiny_model();
        let v = &model.vocab;
        let a: Vec<usize> =
            ["(", ")", "N0", "+", "N1"].iter().map(|t| v.id(t).unwrap()).collect();
        // swap the two non-number tokens at the front
        let b: Vec<usize> =
            [")", "(", "N0", "+", "N1"].iter().map(|t| v.id(t).unwrap()).collect();
        let run = |toks: &[usize]| {
            let mut g = Graph::new();
            let ids = insert_params(&mut g, &model, false);
            let (e_s, _) = encode(&mut g, &ids, &model.hyper, toks, &[2, 4]).unwrap();
            g.value(e_s).clone()
        };
        assert_ne!(run(&a), run(&b));
    }

    #[test]
    fn encoder_is_deterministic() {
        let model = tiny_model();
        let toks = vec![0, 1, 2, 3];
        let run = || {
            let mut g = Graph::new();
            let ids = insert_params(&mut g, &model, false);
            let (e_s, e_v) = encode(&mut g, &ids, &model.hyper, &toks, &[2]).unwrap();
            (g.value(e_s).clone(), g.value(e_v).clone())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn bank_layout_round_trips() {
        let layout = BankLayout { n_consts: 2, n_numbers: 3 };
        assert_eq!(layout.op_index(MOp::Add), 0);
        assert_eq!(layout.classify(0), BankEntry::Operator(MOp::Add));
        assert_eq!(layout.classify(4), BankEntry::Constant(0));
        assert_eq!(layout.classify(6), BankEntry::Number(0));
        assert_eq!(layout.classify(layout.nb_index()), BankEntry::Terminator);
        assert_eq!(layout.total(), 10);
        for i in 0..layout.total() {
            let back = match layout.classify(i) {
                BankEntry::Operator(op) => layout.op_index(op),
                BankEntry::Constant(c) => layout.const_index(c),
                BankEntry::Number(k) => layout.number_index(k),
                BankEntry::Terminator => layout.nb_index(),
            };
            assert_eq!(back, i);
        }
    }

    #[test]
    fn single_goal_cross_flag_is_inert() {
        let model = tiny_model();
        let run = |cross: bool| {
            let mut g = Graph::new();
            let ids = insert_params(&mut g, &model, false);
            let toks = vec![0, 1, 4, 5];
            let (e_s, e_v) = encode(&mut g, &ids, &model.hyper, &toks, &[2, 3]).unwrap();
            let (bank, _) = build_bank(&mut g, &ids, e_v, 0);
            let outs =
                decompose_level(&mut g, &ids, &model.hyper, &[e_s], bank, cross).unwrap();
            (g.value(outs[0].e_hat).clone(), g.value(outs[0].omega).clone())
        };
        let (on_e, on_w) = run(true);
        let (off_e, off_w) = run(false);
        assert_eq!(on_e, off_e);
        assert_eq!(on_w, off_w);
    }

    #[test]
    fn pointer_rows_are_distributions() {
        let model = tiny_model();
        let mut g = Graph::new();
        let ids = insert_params(&mut g, &model, false);
        let toks = vec![0, 1, 4, 5];
        let (e_s, e_v) = encode(&mut g, &ids, &model.hyper, &toks, &[2, 3]).unwrap();
        let (bank, layout) = build_bank(&mut g, &ids, e_v, 0);
        let outs = decompose_level(&mut g, &ids, &model.hyper, &[e_s], bank, true).unwrap();
        let ptr = g.softmax_rows(outs[0].omega);
        let p = g.value(ptr);
        assert_eq!(p.dim(), (MAX_LEN, layout.total()));
        for row in p.rows() {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|x| *x > 0.0));
        }
    }

    #[test]
    fn softmax_shift_invariance_and_closed_form() {
        let mut g = Graph::new();
        let base = g.constant(ndarray::array![[0.0, 3f64.ln()]]);
        let shifted = g.constant(ndarray::array![[5.0, 3f64.ln() + 5.0]]);
        let p1 = g.softmax_rows(base);
        let p2 = g.softmax_rows(shifted);
        let (a, b) = (g.value(p1).clone(), g.value(p2).clone());
        assert!((a[[0, 0]] - 0.25).abs() < 1e-12);
        assert!((a[[0, 1]] - 0.75).abs() < 1e-12);
        for j in 0..2 {
            assert!((a[[0, j]] - b[[0, j]]).abs() < 1e-12);
        }
    }
}
