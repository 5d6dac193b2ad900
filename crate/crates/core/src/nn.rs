//! A small fully connected network with ReLU hidden layers, a linear
//! output, masked mean-squared-error training, and Adam. This is all the
//! approximation machinery the dispatch learner needs, so it is written
//! out directly rather than pulling in a tensor framework.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::scalar::Real;

/// Fully connected network. `weights[l]` maps activations of width
/// `dims[l]` to width `dims[l + 1]`, stored row-major (`out * in`).
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<R: Real> {
    pub dims: Vec<usize>,
    pub weights: Vec<Vec<R>>,
    pub biases: Vec<Vec<R>>,
}

/// Per-parameter gradient, same shapes as the network.
#[derive(Clone, Debug)]
pub struct Gradients<R: Real> {
    pub weights: Vec<Vec<R>>,
    pub biases: Vec<Vec<R>>,
}

/// Adam accumulators, same shapes as the network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<R: Real> {
    pub step: u64,
    pub beta1: R,
    pub beta2: R,
    pub eps: R,
    pub m_w: Vec<Vec<R>>,
    pub v_w: Vec<Vec<R>>,
    pub m_b: Vec<Vec<R>>,
    pub v_b: Vec<Vec<R>>,
}

/// One training batch: rows of inputs and, per row, the output index whose
/// squared error contributes to the loss and its regression target.
#[derive(Clone, Debug)]
pub struct TrainBatch<R: Real> {
    pub inputs: Vec<Vec<R>>,
    pub targets: Vec<(usize, R)>,
}

impl<R: Real> Mlp<R> {
    /// He initialization: zero biases and Gaussian weights with variance
    /// `2 / fan_in`, in every layer. Sampling happens in `f64` so the
    /// draw sequence does not depend on the scalar type.
    pub fn new<G: Rng + ?Sized>(dims: &[usize], rng: &mut G) -> Self {
        assert!(dims.len() >= 2, "need at least input and output widths");
        assert!(dims.iter().all(|&d| d > 0), "zero-width layer");
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            let layer: Vec<R> = (0..fan_in * fan_out)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    R::from_f64(z * scale)
                })
                .collect();
            weights.push(layer);
            biases.push(vec![R::zero(); fan_out]);
        }
        Self {
            dims: dims.to_vec(),
            weights,
            biases,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("non-empty dims")
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Forward pass: ReLU on every layer except the last, which is linear.
    pub fn forward(&self, x: &[R]) -> Vec<R> {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut a = x.to_vec();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut next = affine(w, b, &a, self.dims[l + 1], self.dims[l]);
            if l != last {
                for v in &mut next {
                    if *v < R::zero() {
                        *v = R::zero();
                    }
                }
            }
            a = next;
        }
        a
    }

    /// Masked MSE loss of the batch without touching any parameters.
    pub fn loss(&self, batch: &TrainBatch<R>) -> R {
        let mut total = R::zero();
        for (x, &(idx, target)) in batch.inputs.iter().zip(&batch.targets) {
            let out = self.forward(x);
            let e = out[idx] - target;
            total += e * e;
        }
        total / R::from_f64(batch.inputs.len() as f64)
    }

    /// Gradient of the masked MSE over the batch, plus the loss itself.
    ///
    /// The loss is `mean_i (q(x_i)[a_i] - y_i)^2`; only the trained output
    /// coordinate back-propagates. ReLU uses subgradient 0 at 0.
    pub fn gradient(&self, batch: &TrainBatch<R>) -> (Gradients<R>, R) {
        assert_eq!(batch.inputs.len(), batch.targets.len());
        assert!(!batch.inputs.is_empty(), "empty batch");
        let layers = self.weights.len();
        let mut gw: Vec<Vec<R>> = self.weights.iter().map(|w| vec![R::zero(); w.len()]).collect();
        let mut gb: Vec<Vec<R>> = self.biases.iter().map(|b| vec![R::zero(); b.len()]).collect();
        let inv_batch = R::one() / R::from_f64(batch.inputs.len() as f64);
        let mut loss = R::zero();
        for (x, &(idx, target)) in batch.inputs.iter().zip(&batch.targets) {
            debug_assert!(idx < self.output_dim());
            // Forward, caching activations per layer.
            let mut acts: Vec<Vec<R>> = Vec::with_capacity(layers + 1);
            acts.push(x.to_vec());
            for l in 0..layers {
                let mut next = affine(
                    &self.weights[l],
                    &self.biases[l],
                    &acts[l],
                    self.dims[l + 1],
                    self.dims[l],
                );
                if l != layers - 1 {
                    for v in &mut next {
                        if *v < R::zero() {
                            *v = R::zero();
                        }
                    }
                }
                acts.push(next);
            }
            let out = &acts[layers];
            let err = out[idx] - target;
            loss += err * err * inv_batch;
            // Backward: delta starts as the masked output gradient.
            let mut delta = vec![R::zero(); self.output_dim()];
            delta[idx] = R::two() * err * inv_batch;
            for l in (0..layers).rev() {
                let (n_out, n_in) = (self.dims[l + 1], self.dims[l]);
                let a_in = &acts[l];
                let w = &self.weights[l];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == R::zero() {
                        continue;
                    }
                    gb[l][o] += d;
                    let row = &mut gw[l][o * n_in..(o + 1) * n_in];
                    for (g, &ai) in row.iter_mut().zip(a_in) {
                        *g += d * ai;
                    }
                }
                if l == 0 {
                    break;
                }
                // delta for the previous layer, masked by its ReLU state.
                let mut prev = vec![R::zero(); n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == R::zero() {
                        continue;
                    }
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for (p, &wi) in prev.iter_mut().zip(row) {
                        *p += d * wi;
                    }
                }
                for (p, &a) in prev.iter_mut().zip(&acts[l]) {
                    if a <= R::zero() {
                        *p = R::zero();
                    }
                }
                delta = prev;
            }
        }
        (
            Gradients {
                weights: gw,
                biases: gb,
            },
            loss,
        )
    }
}

/// `y = W a + b` with explicit shapes.
fn affine<R: Real>(w: &[R], b: &[R], a: &[R], n_out: usize, n_in: usize) -> Vec<R> {
    debug_assert_eq!(w.len(), n_out * n_in);
    debug_assert_eq!(a.len(), n_in);
    let mut y = b.to_vec();
    for (o, yo) in y.iter_mut().enumerate() {
        let row = &w[o * n_in..(o + 1) * n_in];
        let mut acc = R::zero();
        for (&wi, &ai) in row.iter().zip(a) {
            acc += wi * ai;
        }
        *yo += acc;
    }
    y
}

impl<R: Real> AdamState<R> {
    /// Fresh accumulators with the standard coefficients
    /// (0.9, 0.999, 1e-8).
    pub fn new(mlp: &Mlp<R>) -> Self {
        Self {
            step: 0,
            beta1: R::from_f64(0.9),
            beta2: R::from_f64(0.999),
            eps: R::from_f64(1e-8),
            m_w: mlp.weights.iter().map(|w| vec![R::zero(); w.len()]).collect(),
            v_w: mlp.weights.iter().map(|w| vec![R::zero(); w.len()]).collect(),
            m_b: mlp.biases.iter().map(|b| vec![R::zero(); b.len()]).collect(),
            v_b: mlp.biases.iter().map(|b| vec![R::zero(); b.len()]).collect(),
        }
    }
}

/// One Adam update with bias correction:
/// `m = b1 m + (1-b1) g`, `v = b2 v + (1-b2) g^2`,
/// `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_step<R: Real>(mlp: &mut Mlp<R>, st: &mut AdamState<R>, g: &Gradients<R>, lr: R) {
    st.step += 1;
    let t = st.step as i32;
    let c1 = R::one() - st.beta1.powi(t);
    let c2 = R::one() - st.beta2.powi(t);
    let one = R::one();
    let update = |p: &mut [R], m: &mut [R], v: &mut [R], g: &[R]| {
        for i in 0..p.len() {
            m[i] = st.beta1 * m[i] + (one - st.beta1) * g[i];
            v[i] = st.beta2 * v[i] + (one - st.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + st.eps);
        }
    };
    for l in 0..mlp.weights.len() {
        update(&mut mlp.weights[l], &mut st.m_w[l], &mut st.v_w[l], &g.weights[l]);
        update(&mut mlp.biases[l], &mut st.m_b[l], &mut st.v_b[l], &g.biases[l]);
    }
}

/// Step-size schedule used by the trainer: `0.01 * 0.96^(step / 6000)`,
/// decayed continuously.
pub fn lr_at(step: u64) -> f64 {
    0.01 * 0.96_f64.powf(step as f64 / 6000.0)
}

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("model file too short")]
    Truncated,
    #[error("bad magic bytes (not a model file)")]
    BadMagic,
    #[error("unsupported model version {0}")]
    Version(u8),
    #[error("inconsistent model shape")]
    BadShape,
}

const MODEL_MAGIC: &[u8; 4] = b"SDNN";
const MODEL_VERSION: u8 = 1;

/// Self-describing binary model format: magic, version, layer widths,
/// then all parameters (and optionally the Adam state) as little-endian
/// `f64`. Loading restores training-resumable state bit-exactly.
pub fn serialize_model<R: Real>(mlp: &Mlp<R>, adam: Option<&AdamState<R>>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.push(MODEL_VERSION);
    out.push(u8::from(adam.is_some()));
    out.extend_from_slice(&(mlp.dims.len() as u32).to_le_bytes());
    for &d in &mlp.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    let push_all = |out: &mut Vec<u8>, xs: &[R]| {
        for &x in xs {
            out.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    };
    for l in 0..mlp.weights.len() {
        push_all(&mut out, &mlp.weights[l]);
        push_all(&mut out, &mlp.biases[l]);
    }
    if let Some(st) = adam {
        out.extend_from_slice(&st.step.to_le_bytes());
        push_all(&mut out, &[st.beta1, st.beta2, st.eps]);
        for l in 0..st.m_w.len() {
            push_all(&mut out, &st.m_w[l]);
            push_all(&mut out, &st.v_w[l]);
            push_all(&mut out, &st.m_b[l]);
            push_all(&mut out, &st.v_b[l]);
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelIoError> {
        if self.pos + n > self.bytes.len() {
            return Err(ModelIoError::Truncated);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ModelIoError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ModelIoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ModelIoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s<R: Real>(&mut self, n: usize) -> Result<Vec<R>, ModelIoError> {
        let raw = self.take(8 * n)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| R::from_f64(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect())
    }
}

pub fn deserialize_model<R: Real>(
    bytes: &[u8],
) -> Result<(Mlp<R>, Option<AdamState<R>>), ModelIoError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MODEL_MAGIC {
        return Err(ModelIoError::BadMagic);
    }
    let version = cur.u8()?;
    if version != MODEL_VERSION {
        return Err(ModelIoError::Version(version));
    }
    let has_adam = cur.u8()? != 0;
    let n_dims = cur.u32()? as usize;
    if !(2..=64).contains(&n_dims) {
        return Err(ModelIoError::BadShape);
    }
    let mut dims = Vec::with_capacity(n_dims);
    for _ in 0..n_dims {
        let d = cur.u32()? as usize;
        if d == 0 {
            return Err(ModelIoError::BadShape);
        }
        dims.push(d);
    }
    let mut weights = Vec::with_capacity(n_dims - 1);
    let mut biases = Vec::with_capacity(n_dims - 1);
    for w in dims.windows(2) {
        weights.push(cur.f64s(w[0] * w[1])?);
        biases.push(cur.f64s(w[1])?);
    }
    let mlp = Mlp {
        dims,
        weights,
        biases,
    };
    let adam = if has_adam {
        let step = cur.u64()?;
        let coeffs: Vec<R> = cur.f64s(3)?;
        let mut st = AdamState::new(&mlp);
        st.step = step;
        st.beta1 = coeffs[0];
        st.beta2 = coeffs[1];
        st.eps = coeffs[2];
        for l in 0..mlp.weights.len() {
            st.m_w[l] = cur.f64s(mlp.weights[l].len())?;
            st.v_w[l] = cur.f64s(mlp.weights[l].len())?;
            st.m_b[l] = cur.f64s(mlp.biases[l].len())?;
            st.v_b[l] = cur.f64s(mlp.biases[l].len())?;
        }
        Some(st)
    } else {
        None
    };
    if cur.pos != bytes.len() {
        return Err(ModelIoError::BadShape);
    }
    Ok((mlp, adam))
}
