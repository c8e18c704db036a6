use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{TokenSequence, PAD};
use crate::numeric::{softmax, DenseMatrix, Prng};

use super::{active_ids, ce_and_grad, Gradients, SeqNet, Tensors};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // √(2/π)

/// Post-norm encoder block: `y1 = LN(x + MHA(x))`, `y2 = LN(y1 + FFN(y1))`
/// with a `d → 4d → d` GELU feed-forward. Keys carry no bias: it would add
/// the same constant to every score in a row, which softmax discards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub wq: DenseMatrix,
    pub bq: DenseMatrix,
    pub wk: DenseMatrix,
    pub wv: DenseMatrix,
    pub bv: DenseMatrix,
    pub wo: DenseMatrix,
    pub bo: DenseMatrix,
    pub ln1_g: DenseMatrix,
    pub ln1_b: DenseMatrix,
    pub w1: DenseMatrix,
    pub b1: DenseMatrix,
    pub w2: DenseMatrix,
    pub b2: DenseMatrix,
    pub ln2_g: DenseMatrix,
    pub ln2_b: DenseMatrix,
}

impl EncoderLayer {
    fn new(d: usize, rng: &mut Prng) -> Self {
        let s = 1.0 / (d as f64).sqrt();
        let ones = || {
            let mut m = DenseMatrix::zeros(1, d);
            m.row_mut(0).fill(1.0);
            m
        };
        Self {
            wq: DenseMatrix::uniform(d, d, s, rng),
            bq: DenseMatrix::zeros(1, d),
            wk: DenseMatrix::uniform(d, d, s, rng),
            wv: DenseMatrix::uniform(d, d, s, rng),
            bv: DenseMatrix::zeros(1, d),
            wo: DenseMatrix::uniform(d, d, s, rng),
            bo: DenseMatrix::zeros(1, d),
            ln1_g: ones(),
            ln1_b: DenseMatrix::zeros(1, d),
            w1: DenseMatrix::uniform(4 * d, d, s, rng),
            b1: DenseMatrix::zeros(1, 4 * d),
            w2: DenseMatrix::uniform(d, 4 * d, 0.5 * s, rng),
            b2: DenseMatrix::zeros(1, d),
            ln2_g: ones(),
            ln2_b: DenseMatrix::zeros(1, d),
        }
    }

    fn named(&self, i: usize) -> Vec<(String, &DenseMatrix)> {
        [
            ("wq", &self.wq),
            ("bq", &self.bq),
            ("wk", &self.wk),
            ("wv", &self.wv),
            ("bv", &self.bv),
            ("wo", &self.wo),
            ("bo", &self.bo),
            ("ln1_g", &self.ln1_g),
            ("ln1_b", &self.ln1_b),
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
            ("ln2_g", &self.ln2_g),
            ("ln2_b", &self.ln2_b),
        ]
        .into_iter()
        .map(|(n, t)| (format!("layer{i}.{n}"), t))
        .collect()
    }

    fn all_mut(&mut self) -> [&mut DenseMatrix; 15] {
        [
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln1_g,
            &mut self.ln1_b,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.ln2_g,
            &mut self.ln2_b,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerBody {
    /// Learned positional embeddings, one row per position.
    pub pos: DenseMatrix,
    pub layers: Vec<EncoderLayer>,
    pub head_w: DenseMatrix,
    pub head_b: DenseMatrix,
}

impl Tensors for TransformerBody {
    fn tensors(&self) -> Vec<(String, &DenseMatrix)> {
        let mut t = vec![("pos".to_string(), &self.pos)];
        for (i, l) in self.layers.iter().enumerate() {
            t.extend(l.named(i));
        }
        t.push(("head.w".into(), &self.head_w));
        t.push(("head.b".into(), &self.head_b));
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut t = vec![&mut self.pos];
        for l in &mut self.layers {
            t.extend(l.all_mut());
        }
        t.push(&mut self.head_w);
        t.push(&mut self.head_b);
        t
    }
}

/// Token plus positional embeddings, a stack of encoder blocks, mean
/// pooling over the real (non-PAD) positions and a linear head.
///
/// Attention only ever runs over the `true_length` prefix, which gives the
/// same result as an additive `−∞` mask on every PAD key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transformer {
    embed: DenseMatrix,
    body: TransformerBody,
    n_heads: usize,
}

struct LayerCache {
    x: DenseMatrix,
    q: DenseMatrix,
    k: DenseMatrix,
    v: DenseMatrix,
    probs: Vec<DenseMatrix>,
    attn: DenseMatrix,
    xhat1: DenseMatrix,
    inv1: Vec<f64>,
    y1: DenseMatrix,
    u: DenseMatrix,
    act: DenseMatrix,
    xhat2: DenseMatrix,
    inv2: Vec<f64>,
}

struct Cache {
    layers: Vec<LayerCache>,
    pooled: Vec<f64>,
}

/// `x Wᵀ + b` row by row.
fn affine(x: &DenseMatrix, w: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let mut y = x.matmul_t(w);
    for r in 0..y.rows() {
        for (v, bb) in y.row_mut(r).iter_mut().zip(b.row(0)) {
            *v += bb;
        }
    }
    y
}

/// Accumulate `∂W += dyᵀ x`, `∂b += Σ_rows dy`; return `dy W`.
fn affine_backward(dy: &DenseMatrix, x: &DenseMatrix, w: &DenseMatrix, gw: &mut DenseMatrix, gb: &mut DenseMatrix) -> DenseMatrix {
    gw.add_assign(&dy.t_matmul(x));
    for r in 0..dy.rows() {
        for (g, d) in gb.row_mut(0).iter_mut().zip(dy.row(r)) {
            *g += d;
        }
    }
    dy.matmul(w)
}

fn layer_norm(r: &DenseMatrix, g: &DenseMatrix, b: &DenseMatrix) -> (DenseMatrix, DenseMatrix, Vec<f64>) {
    let d = r.cols() as f64;
    let mut y = DenseMatrix::zeros(r.rows(), r.cols());
    let mut xhat = DenseMatrix::zeros(r.rows(), r.cols());
    let mut inv = Vec::with_capacity(r.rows());
    for t in 0..r.rows() {
        let row = r.row(t);
        let mu = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d;
        let s = 1.0 / (var + LN_EPS).sqrt();
        inv.push(s);
        for j in 0..r.cols() {
            let xh = (row[j] - mu) * s;
            xhat.set(t, j, xh);
            y.set(t, j, g.get(0, j) * xh + b.get(0, j));
        }
    }
    (y, xhat, inv)
}

fn layer_norm_backward(dy: &DenseMatrix, xhat: &DenseMatrix, inv: &[f64], g: &DenseMatrix, gg: &mut DenseMatrix, gb: &mut DenseMatrix) -> DenseMatrix {
    let n = dy.cols();
    let mut dr = DenseMatrix::zeros(dy.rows(), n);
    let mut dxhat = vec![0.0; n];
    for t in 0..dy.rows() {
        for j in 0..n {
            let d = dy.get(t, j);
            gg.row_mut(0)[j] += d * xhat.get(t, j);
            gb.row_mut(0)[j] += d;
            dxhat[j] = d * g.get(0, j);
        }
        let m1 = dxhat.iter().sum::<f64>() / n as f64;
        let m2 = dxhat.iter().zip(xhat.row(t)).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        for j in 0..n {
            dr.set(t, j, inv[t] * (dxhat[j] - m1 - xhat.get(t, j) * m2));
        }
    }
    dr
}

/// Tanh approximation of GELU and its derivative.
fn gelu(u: f64) -> (f64, f64) {
    let inner = GELU_C * (u + 0.044715 * u * u * u);
    let th = inner.tanh();
    let value = 0.5 * u * (1.0 + th);
    let grad = 0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * 0.044715 * u * u);
    (value, grad)
}

impl Transformer {
    pub fn new(vocab_size: usize, embed_dim: usize, n_heads: usize, n_layers: usize, max_len: usize, n_classes: usize, rng: &mut Prng) -> Self {
        assert!(n_heads > 0 && embed_dim % n_heads == 0, "embed_dim must be divisible by n_heads");
        let mut embed = DenseMatrix::uniform(vocab_size, embed_dim, 0.1, rng);
        embed.row_mut(PAD).fill(0.0);
        let pos = DenseMatrix::uniform(max_len, embed_dim, 0.1, rng);
        let layers = (0..n_layers).map(|_| EncoderLayer::new(embed_dim, rng)).collect();
        let head_w = DenseMatrix::uniform(n_classes, embed_dim, 1.0 / (embed_dim as f64).sqrt(), rng);
        Self {
            embed,
            body: TransformerBody {
                pos,
                layers,
                head_w,
                head_b: DenseMatrix::zeros(1, n_classes),
            },
            n_heads,
        }
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    pub fn max_len(&self) -> usize {
        self.body.pos.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.embed.cols()
    }

    fn checked_ids<'a>(&self, seq: &'a TokenSequence) -> Result<&'a [usize]> {
        let ids = active_ids(seq, self.embed.rows())?;
        if ids.len() > self.max_len() {
            return Err(Error::Invalid(format!(
                "sequence of length {} exceeds the {} learned positions",
                ids.len(),
                self.max_len()
            )));
        }
        Ok(ids)
    }

    fn forward(&self, ids: &[usize]) -> (Vec<f64>, Cache) {
        let d = self.embed_dim();
        let t_len = ids.len();
        let dh = d / self.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut x = DenseMatrix::zeros(t_len, d);
        for (t, &id) in ids.iter().enumerate() {
            for (j, v) in x.row_mut(t).iter_mut().enumerate() {
                *v = self.embed.get(id, j) + self.body.pos.get(t, j);
            }
        }
        let mut layers = Vec::with_capacity(self.body.layers.len());
        for l in &self.body.layers {
            let q = affine(&x, &l.wq, &l.bq);
            let k = x.matmul_t(&l.wk);
            let v = affine(&x, &l.wv, &l.bv);
            let mut attn = DenseMatrix::zeros(t_len, d);
            let mut probs = Vec::with_capacity(self.n_heads);
            for h in 0..self.n_heads {
                let cols = h * dh..(h + 1) * dh;
                let mut p = DenseMatrix::zeros(t_len, t_len);
                for t in 0..t_len {
                    let scores: Vec<f64> = (0..t_len)
                        .map(|s| scale * q.row(t)[cols.clone()].iter().zip(&k.row(s)[cols.clone()]).map(|(a, b)| a * b).sum::<f64>())
                        .collect();
                    p.row_mut(t).copy_from_slice(&softmax(&scores));
                    for s in 0..t_len {
                        let w = p.get(t, s);
                        for c in cols.clone() {
                            let o = attn.get(t, c) + w * v.get(s, c);
                            attn.set(t, c, o);
                        }
                    }
                }
                probs.push(p);
            }
            let a = affine(&attn, &l.wo, &l.bo);
            let mut r1 = x.clone();
            r1.add_assign(&a);
            let (y1, xhat1, inv1) = layer_norm(&r1, &l.ln1_g, &l.ln1_b);
            let u = affine(&y1, &l.w1, &l.b1);
            let mut act = u.clone();
            act.as_mut_slice().iter_mut().for_each(|z| *z = gelu(*z).0);
            let f = affine(&act, &l.w2, &l.b2);
            let mut r2 = y1.clone();
            r2.add_assign(&f);
            let (y2, xhat2, inv2) = layer_norm(&r2, &l.ln2_g, &l.ln2_b);
            layers.push(LayerCache {
                x,
                q,
                k,
                v,
                probs,
                attn,
                xhat1,
                inv1,
                y1,
                u,
                act,
                xhat2,
                inv2,
            });
            x = y2;
        }
        let mut pooled = vec![0.0; d];
        for t in 0..t_len {
            for (p, v) in pooled.iter_mut().zip(x.row(t)) {
                *p += v / t_len as f64;
            }
        }
        let logits = self
            .body
            .head_w
            .matvec(&pooled)
            .iter()
            .zip(self.body.head_b.row(0))
            .map(|(a, b)| a + b)
            .collect();
        (logits, Cache { layers, pooled })
    }

    fn backward(&self, ids: &[usize], cache: &Cache, dlogits: &[f64], grads: &mut Gradients<TransformerBody>) {
        let d = self.embed_dim();
        let t_len = ids.len();
        let dh = d / self.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        grads.body.head_w.add_outer(1.0, dlogits, &cache.pooled);
        for (b, g) in grads.body.head_b.row_mut(0).iter_mut().zip(dlogits) {
            *b += g;
        }
        let dpooled = self.body.head_w.matvec_t(dlogits);
        let mut dy = DenseMatrix::zeros(t_len, d);
        for t in 0..t_len {
            for (o, p) in dy.row_mut(t).iter_mut().zip(&dpooled) {
                *o = p / t_len as f64;
            }
        }

        for (i, (l, c)) in self.body.layers.iter().zip(&cache.layers).enumerate().rev() {
            let g = &mut grads.body.layers[i];
            let dr2 = layer_norm_backward(&dy, &c.xhat2, &c.inv2, &l.ln2_g, &mut g.ln2_g, &mut g.ln2_b);
            let mut dy1 = dr2.clone();
            let mut du = affine_backward(&dr2, &c.act, &l.w2, &mut g.w2, &mut g.b2);
            for (d, z) in du.as_mut_slice().iter_mut().zip(c.u.as_slice()) {
                *d *= gelu(*z).1;
            }
            dy1.add_assign(&affine_backward(&du, &c.y1, &l.w1, &mut g.w1, &mut g.b1));
            let dr1 = layer_norm_backward(&dy1, &c.xhat1, &c.inv1, &l.ln1_g, &mut g.ln1_g, &mut g.ln1_b);
            let mut dx = dr1.clone();
            let dattn = affine_backward(&dr1, &c.attn, &l.wo, &mut g.wo, &mut g.bo);

            let mut dq = DenseMatrix::zeros(t_len, d);
            let mut dk = DenseMatrix::zeros(t_len, d);
            let mut dv = DenseMatrix::zeros(t_len, d);
            for (h, p) in c.probs.iter().enumerate() {
                let cols = h * dh..(h + 1) * dh;
                for t in 0..t_len {
                    let dp: Vec<f64> = (0..t_len)
                        .map(|s| cols.clone().map(|cc| dattn.get(t, cc) * c.v.get(s, cc)).sum())
                        .collect();
                    let dot: f64 = (0..t_len).map(|s| p.get(t, s) * dp[s]).sum();
                    for s in 0..t_len {
                        let pts = p.get(t, s);
                        let ds = pts * (dp[s] - dot) * scale;
                        for cc in cols.clone() {
                            dv.set(s, cc, dv.get(s, cc) + pts * dattn.get(t, cc));
                            dq.set(t, cc, dq.get(t, cc) + ds * c.k.get(s, cc));
                            dk.set(s, cc, dk.get(s, cc) + ds * c.q.get(t, cc));
                        }
                    }
                }
            }
            dx.add_assign(&affine_backward(&dq, &c.x, &l.wq, &mut g.wq, &mut g.bq));
            g.wk.add_assign(&dk.t_matmul(&c.x));
            dx.add_assign(&dk.matmul(&l.wk));
            dx.add_assign(&affine_backward(&dv, &c.x, &l.wv, &mut g.wv, &mut g.bv));
            dy = dx;
        }
        for (t, &id) in ids.iter().enumerate() {
            grads.add_embed(id, dy.row(t));
            for (p, v) in grads.body.pos.row_mut(t).iter_mut().zip(dy.row(t)) {
                *p += v;
            }
        }
    }

    /// Attention probabilities, indexed `[layer][head]`, each `T × T` over
    /// the non-PAD positions.
    pub fn attention(&self, seq: &TokenSequence) -> Result<Vec<Vec<DenseMatrix>>> {
        let ids = self.checked_ids(seq)?;
        let (_, cache) = self.forward(ids);
        Ok(cache.layers.into_iter().map(|l| l.probs).collect())
    }

    /// Mean-pooled encoder output fed to the head.
    pub fn pooled(&self, seq: &TokenSequence) -> Result<Vec<f64>> {
        let ids = self.checked_ids(seq)?;
        Ok(self.forward(ids).1.pooled)
    }
}

impl SeqNet for Transformer {
    type Body = TransformerBody;

    fn embed(&self) -> &DenseMatrix {
        &self.embed
    }

    fn embed_mut(&mut self) -> &mut DenseMatrix {
        &mut self.embed
    }

    fn body(&self) -> &TransformerBody {
        &self.body
    }

    fn body_mut(&mut self) -> &mut TransformerBody {
        &mut self.body
    }

    fn n_classes(&self) -> usize {
        self.body.head_w.rows()
    }

    fn logits(&self, seq: &TokenSequence) -> Result<Vec<f64>> {
        let ids = self.checked_ids(seq)?;
        Ok(self.forward(ids).0)
    }

    fn accumulate(&self, seq: &TokenSequence, label: usize, weight: f64, grads: &mut Gradients<TransformerBody>) -> Result<(f64, Vec<f64>)> {
        let ids = self.checked_ids(seq)?;
        let (logits, cache) = self.forward(ids);
        let (loss, mut d) = ce_and_grad(&logits, label)?;
        if weight != 0.0 {
            d.iter_mut().for_each(|v| *v *= weight);
            self.backward(ids, &cache, &d, grads);
        }
        Ok((loss, logits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(ids: &[usize], max_len: usize) -> TokenSequence {
        let mut v = ids.to_vec();
        v.resize(max_len, PAD);
        TokenSequence {
            ids: v,
            true_length: ids.len(),
        }
    }

    #[test]
    fn single_token_attends_to_itself() {
        let m = Transformer::new(6, 4, 2, 2, 5, 3, &mut Prng::new(1));
        for layer in m.attention(&seq(&[3], 5)).unwrap() {
            for p in layer {
                assert_eq!(p.as_slice(), &[1.0]);
            }
        }
        // Depends on the token alone: a different token, a different output.
        assert_ne!(m.logits(&seq(&[3], 5)).unwrap(), m.logits(&seq(&[4], 5)).unwrap());
    }

    #[test]
    fn identical_inputs_attend_uniformly() {
        let mut m = Transformer::new(6, 4, 2, 1, 5, 3, &mut Prng::new(2));
        m.body.pos.as_mut_slice().fill(0.0);
        let p = &m.attention(&seq(&[4, 4, 4, 4], 5)).unwrap()[0];
        for head in p {
            assert!(head.as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn attention_rows_are_distributions() {
        let m = Transformer::new(9, 8, 4, 3, 7, 2, &mut Prng::new(3));
        for layer in m.attention(&seq(&[2, 5, 8, 1, 3], 7)).unwrap() {
            for head in layer {
                for t in 0..head.rows() {
                    assert!((head.row(t).iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn joint_permutation_of_tokens_and_positions_keeps_pooling() {
        let m = Transformer::new(9, 8, 2, 2, 5, 3, &mut Prng::new(4));
        let ids = [2, 7, 4, 5];
        let perm = [2, 0, 3, 1];
        let mut moved = m.clone();
        for (new_t, &old_t) in perm.iter().enumerate() {
            moved.body.pos.row_mut(new_t).copy_from_slice(m.body.pos.row(old_t));
        }
        let permuted: Vec<usize> = perm.iter().map(|&t| ids[t]).collect();
        let a = m.pooled(&seq(&ids, 5)).unwrap();
        let b = moved.pooled(&seq(&permuted, 5)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn too_long_for_positions() {
        let m = Transformer::new(6, 4, 2, 1, 3, 2, &mut Prng::new(5));
        assert!(m.logits(&seq(&[2, 2, 2, 2], 4)).is_err());
    }

    #[test]
    fn gelu_derivative_matches_difference() {
        for u in [-3.0, -0.7, 0.0, 0.4, 2.5] {
            let n = (gelu(u + 1e-6).0 - gelu(u - 1e-6).0) / 2e-6;
            assert!((gelu(u).1 - n).abs() < 1e-8);
        }
    }
}
