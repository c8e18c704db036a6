//! Dense kernels, stable activations, the seeded generator and the
//! finite-difference gradient checker shared by every trainable model.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability floor used by [`cross_entropy`].
pub const PROB_FLOOR: f64 = 1e-12;

/// Environment variable that toggles deterministic reductions. Any value
/// other than `0`, `false` or `off` (or leaving it unset) keeps them on.
pub const DETERMINISTIC_ENV: &str = "CUISINE_DETERMINISTIC";

pub fn deterministic_mode() -> bool {
    match std::env::var(DETERMINISTIC_ENV) {
        Ok(v) => !matches!(v.trim().to_ascii_lowercase().as_str(), "0" | "false" | "off"),
        Err(_) => true,
    }
}

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Dimension {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Uniform entries in `[-scale, scale]`.
    pub fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut Prng) -> Self {
        let data = (0..rows * cols).map(|_| rng.uniform(-scale, scale)).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · v`
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }

    /// `selfᵀ · v`
    pub fn matvec_t(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            if vr != 0.0 {
                axpy(vr, self.row(r), &mut out);
            }
        }
        out
    }

    /// `self += alpha · a bᵀ`
    pub fn add_outer(&mut self, alpha: f64, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            if ar != 0.0 {
                axpy(alpha * ar, b, self.row_mut(r));
            }
        }
    }

    /// `self · otherᵀ`, i.e. every row of `self` against every row of `other`.
    pub fn matmul_t(&self, other: &DenseMatrix) -> DenseMatrix {
        debug_assert_eq!(self.cols, other.cols);
        let mut out = DenseMatrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        out
    }

    /// `self · other`
    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a != 0.0 {
                    axpy(a, other.row(k), out.row_mut(i));
                }
            }
        }
        out
    }

    /// `selfᵀ · other`
    pub fn t_matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        debug_assert_eq!(self.rows, other.rows);
        let mut out = DenseMatrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a = self.row(k);
            let b = other.row(k);
            for (i, &ai) in a.iter().enumerate() {
                if ai != 0.0 {
                    axpy(ai, b, out.row_mut(i));
                }
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &DenseMatrix) {
        debug_assert_eq!(self.data.len(), other.data.len());
        axpy(1.0, &other.data, &mut self.data);
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha · x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Sum with a fixed pairwise tree over chunks of 32, so the rounding is
/// identical on every run regardless of how the input was produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const CHUNK: usize = 32;
    if xs.len() <= CHUNK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        pairwise_sum(xs) / xs.len() as f64
    }
}

/// Logistic function, evaluated on the side that cannot overflow.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
    out
}

pub fn log_softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    v.iter().map(|x| x - lse).collect()
}

/// `-ln(max(p[label], 1e-12))`
#[inline]
pub fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(PROB_FLOOR).ln()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Seeded xoshiro256** stream, state expanded from the 64-bit seed with
/// SplitMix64. The algorithm is frozen: changing it invalidates every
/// recorded experiment.
#[derive(Debug, Clone)]
pub struct Prng {
    seed: u64,
    inner: Xoshiro256StarStar,
}

impl Prng {
    pub const ALGORITHM: &'static str = "xoshiro256**/splitmix64";

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    /// Independent generator for sub-task `stream` (a class, a tree, ...).
    pub fn derive(seed: u64, stream: u64) -> Self {
        Self::new(splitmix64(seed ^ splitmix64(stream.wrapping_add(0x5851_f42d_4c95_7f2d))))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `0..n` (multiply-shift; `n` must be positive).
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// `k` distinct values from `0..n` in draw order (partial Fisher-Yates).
    pub fn sample_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        let k = k.min(n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A named contiguous block of parameters inside the flat layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: String,
    pub len: usize,
}

impl ParamGroup {
    pub fn new(name: impl Into<String>, len: usize) -> Self {
        Self {
            name: name.into(),
            len,
        }
    }
}

/// A model whose loss on a fixed input can be evaluated and differentiated
/// with respect to a flat parameter vector.
pub trait Differentiable {
    type Input: ?Sized;

    /// Parameter blocks in flat-vector order.
    fn param_groups(&self) -> Vec<ParamGroup>;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]);
    fn loss(&self, input: &Self::Input) -> Result<f64>;
    /// Analytic gradient in the same layout as [`Differentiable::params`].
    fn gradient(&self, input: &Self::Input) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Cap on checked entries per group; larger groups are sampled.
    pub max_per_group: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            max_per_group: usize::MAX,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub groups: Vec<GroupCheck>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compare the analytic gradient to central differences
/// `(L(θ+ε) − L(θ−ε)) / 2ε`, entry by entry.
pub fn grad_check<M>(model: &M, input: &M::Input, config: &GradCheckConfig) -> Result<GradCheckReport>
where
    M: Differentiable + Clone,
{
    if !(1e-6..=1e-3).contains(&config.eps) {
        return Err(Error::Invalid(format!(
            "gradient-check eps {} outside [1e-6, 1e-3]",
            config.eps
        )));
    }
    let base = model.params();
    let base_loss = model.loss(input)?;
    if !base_loss.is_finite() {
        return Err(Error::NonFinite(format!("loss {base_loss} at the check point")));
    }
    let analytic = model.gradient(input)?;
    if analytic.len() != base.len() {
        return Err(Error::Dimension {
            expected: base.len(),
            actual: analytic.len(),
        });
    }

    let mut rng = Prng::new(config.seed);
    let mut probe = model.clone();
    let mut theta = base.clone();
    let mut groups = Vec::new();
    let mut offset = 0;
    for group in model.param_groups() {
        let indices: Vec<usize> = if group.len <= config.max_per_group {
            (0..group.len).collect()
        } else {
            let mut s = rng.sample_distinct(group.len, config.max_per_group);
            s.sort_unstable();
            s
        };
        let mut worst: f64 = 0.0;
        for &i in &indices {
            let p = offset + i;
            theta[p] = base[p] + config.eps;
            probe.set_params(&theta);
            let plus = probe.loss(input)?;
            theta[p] = base[p] - config.eps;
            probe.set_params(&theta);
            let minus = probe.loss(input)?;
            theta[p] = base[p];
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss while perturbing {}[{i}]",
                    group.name
                )));
            }
            let numeric = (plus - minus) / (2.0 * config.eps);
            worst = worst.max(relative_error(analytic[p], numeric));
        }
        groups.push(GroupCheck {
            name: group.name.clone(),
            checked: indices.len(),
            max_rel_error: worst,
        });
        offset += group.len;
    }
    let max_rel_error = groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        groups,
        max_rel_error,
    })
}
