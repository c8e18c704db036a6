use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::features::{TokenSequence, PAD};
use crate::numeric::{sigmoid, DenseMatrix, Prng};

use super::{active_ids, ce_and_grad, Gradients, SeqNet, Tensors};

/// One recurrent layer. The four gates are stacked row-wise in the order
/// input, forget, output, candidate: `z = W x + U h + b` has `4h` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub w: DenseMatrix,
    pub u: DenseMatrix,
    pub b: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmBody {
    pub layers: Vec<LstmLayer>,
    pub head_w: DenseMatrix,
    pub head_b: DenseMatrix,
}

impl Tensors for LstmBody {
    fn tensors(&self) -> Vec<(String, &DenseMatrix)> {
        let mut t = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            t.push((format!("layer{i}.w"), &l.w));
            t.push((format!("layer{i}.u"), &l.u));
            t.push((format!("layer{i}.b"), &l.b));
        }
        t.push(("head.w".into(), &self.head_w));
        t.push(("head.b".into(), &self.head_b));
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        let mut t = Vec::new();
        for l in &mut self.layers {
            t.push(&mut l.w);
            t.push(&mut l.u);
            t.push(&mut l.b);
        }
        t.push(&mut self.head_w);
        t.push(&mut self.head_b);
        t
    }
}

/// Embedding table, stacked LSTM and a linear head on the last state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    embed: DenseMatrix,
    body: LstmBody,
}

/// Per-layer activations kept for the backward pass, one row per step.
struct LayerCache {
    x: DenseMatrix,
    i: DenseMatrix,
    f: DenseMatrix,
    o: DenseMatrix,
    g: DenseMatrix,
    c: DenseMatrix,
    tanh_c: DenseMatrix,
    h: DenseMatrix,
}

impl Lstm {
    /// Uniform `±1/√h` weights, forget-gate bias 1, unit-variance
    /// embeddings (uniform `±√3`) with the PAD row zeroed.
    pub fn new(vocab_size: usize, embed_dim: usize, hidden: usize, n_layers: usize, n_classes: usize, rng: &mut Prng) -> Self {
        let mut embed = DenseMatrix::uniform(vocab_size, embed_dim, 3f64.sqrt(), rng);
        embed.row_mut(PAD).fill(0.0);
        let s = 1.0 / (hidden as f64).sqrt();
        let layers = (0..n_layers)
            .map(|l| {
                let input = if l == 0 { embed_dim } else { hidden };
                let mut b = DenseMatrix::zeros(1, 4 * hidden);
                b.row_mut(0)[hidden..2 * hidden].fill(1.0);
                LstmLayer {
                    w: DenseMatrix::uniform(4 * hidden, input, s, rng),
                    u: DenseMatrix::uniform(4 * hidden, hidden, s, rng),
                    b,
                }
            })
            .collect();
        Self {
            embed,
            body: LstmBody {
                layers,
                head_w: DenseMatrix::uniform(n_classes, hidden, s, rng),
                head_b: DenseMatrix::zeros(1, n_classes),
            },
        }
    }

    pub fn hidden(&self) -> usize {
        self.body.head_w.cols()
    }

    pub fn n_layers(&self) -> usize {
        self.body.layers.len()
    }

    fn forward(&self, ids: &[usize]) -> (Vec<f64>, Vec<LayerCache>) {
        let h = self.hidden();
        let t_len = ids.len();
        let mut input = DenseMatrix::zeros(t_len, self.embed.cols());
        for (t, &id) in ids.iter().enumerate() {
            input.row_mut(t).copy_from_slice(self.embed.row(id));
        }
        let mut caches = Vec::with_capacity(self.n_layers());
        for layer in &self.body.layers {
            let pre = input.matmul_t(&layer.w);
            let mut cache = LayerCache {
                x: input,
                i: DenseMatrix::zeros(t_len, h),
                f: DenseMatrix::zeros(t_len, h),
                o: DenseMatrix::zeros(t_len, h),
                g: DenseMatrix::zeros(t_len, h),
                c: DenseMatrix::zeros(t_len, h),
                tanh_c: DenseMatrix::zeros(t_len, h),
                h: DenseMatrix::zeros(t_len, h),
            };
            let mut h_prev = vec![0.0; h];
            let mut c_prev = vec![0.0; h];
            for t in 0..t_len {
                let rec = layer.u.matvec(&h_prev);
                let b = layer.b.row(0);
                let z: Vec<f64> = (0..4 * h).map(|r| pre.get(t, r) + rec[r] + b[r]).collect();
                for j in 0..h {
                    let i = sigmoid(z[j]);
                    let f = sigmoid(z[h + j]);
                    let o = sigmoid(z[2 * h + j]);
                    let g = z[3 * h + j].tanh();
                    let c = f * c_prev[j] + i * g;
                    let tc = c.tanh();
                    cache.i.set(t, j, i);
                    cache.f.set(t, j, f);
                    cache.o.set(t, j, o);
                    cache.g.set(t, j, g);
                    cache.c.set(t, j, c);
                    cache.tanh_c.set(t, j, tc);
                    cache.h.set(t, j, o * tc);
                }
                h_prev.copy_from_slice(cache.h.row(t));
                c_prev.copy_from_slice(cache.c.row(t));
            }
            input = cache.h.clone();
            caches.push(cache);
        }
        let last = caches.last().expect("at least one layer").h.row(t_len - 1);
        let logits = self
            .body
            .head_w
            .matvec(last)
            .iter()
            .zip(self.body.head_b.row(0))
            .map(|(a, b)| a + b)
            .collect();
        (logits, caches)
    }

    /// Backpropagation through time from `dlogits` into `grads`.
    fn backward(&self, ids: &[usize], caches: &[LayerCache], dlogits: &[f64], grads: &mut Gradients<LstmBody>) {
        let h = self.hidden();
        let t_len = ids.len();
        let top = caches.last().expect("at least one layer");
        grads.body.head_w.add_outer(1.0, dlogits, top.h.row(t_len - 1));
        for (b, d) in grads.body.head_b.row_mut(0).iter_mut().zip(dlogits) {
            *b += d;
        }
        // Gradient arriving at each step's hidden output from above.
        let mut from_above = DenseMatrix::zeros(t_len, h);
        from_above
            .row_mut(t_len - 1)
            .copy_from_slice(&self.body.head_w.matvec_t(dlogits));

        for (l, (layer, cache)) in self.body.layers.iter().zip(caches).enumerate().rev() {
            let gl = &mut grads.body.layers[l];
            let mut dx = DenseMatrix::zeros(t_len, cache.x.cols());
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            let mut dz = vec![0.0; 4 * h];
            for t in (0..t_len).rev() {
                for j in 0..h {
                    let (i, f, o, g, tc) = (
                        cache.i.get(t, j),
                        cache.f.get(t, j),
                        cache.o.get(t, j),
                        cache.g.get(t, j),
                        cache.tanh_c.get(t, j),
                    );
                    let c_prev = if t > 0 { cache.c.get(t - 1, j) } else { 0.0 };
                    let dh = from_above.get(t, j) + dh_next[j];
                    let d_o = dh * tc;
                    let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
                    dc_next[j] = dc * f;
                    dz[j] = dc * g * i * (1.0 - i);
                    dz[h + j] = dc * c_prev * f * (1.0 - f);
                    dz[2 * h + j] = d_o * o * (1.0 - o);
                    dz[3 * h + j] = dc * i * (1.0 - g * g);
                }
                gl.w.add_outer(1.0, &dz, cache.x.row(t));
                if t > 0 {
                    gl.u.add_outer(1.0, &dz, cache.h.row(t - 1));
                }
                for (b, d) in gl.b.row_mut(0).iter_mut().zip(&dz) {
                    *b += d;
                }
                dx.row_mut(t).copy_from_slice(&layer.w.matvec_t(&dz));
                dh_next = layer.u.matvec_t(&dz);
            }
            from_above = dx;
        }
        for (t, &id) in ids.iter().enumerate() {
            grads.add_embed(id, from_above.row(t));
        }
    }
}

impl SeqNet for Lstm {
    type Body = LstmBody;

    fn embed(&self) -> &DenseMatrix {
        &self.embed
    }

    fn embed_mut(&mut self) -> &mut DenseMatrix {
        &mut self.embed
    }

    fn body(&self) -> &LstmBody {
        &self.body
    }

    fn body_mut(&mut self) -> &mut LstmBody {
        &mut self.body
    }

    fn n_classes(&self) -> usize {
        self.body.head_w.rows()
    }

    fn logits(&self, seq: &TokenSequence) -> Result<Vec<f64>> {
        let ids = active_ids(seq, self.embed.rows())?;
        Ok(self.forward(ids).0)
    }

    fn accumulate(&self, seq: &TokenSequence, label: usize, weight: f64, grads: &mut Gradients<LstmBody>) -> Result<(f64, Vec<f64>)> {
        let ids = active_ids(seq, self.embed.rows())?;
        let (logits, caches) = self.forward(ids);
        let (loss, mut d) = ce_and_grad(&logits, label)?;
        if weight != 0.0 {
            d.iter_mut().for_each(|v| *v *= weight);
            self.backward(ids, &caches, &d, grads);
        }
        Ok((loss, logits))
    }
}
