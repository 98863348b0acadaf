//! Multinomial autoencoder over item interactions with hand-written
//! reverse-mode gradients.
//!
//! Input rows are sparse binary interaction vectors (sorted item indices).
//! The input is L2-normalized, optionally dropped out, pushed through tanh
//! encoder layers to a latent code (mean and log-variance when variational),
//! and decoded through tanh layers to item logits and a softmax.
//!
//! For one user with item weights `c = weight * x` the loss is
//! `-sum_j c_j log p_j + beta * KL`, whose gradient with respect to the
//! logits is `(sum_j c_j) p - c`.

use crate::error::{Error, Result};
use crate::numerics::{derive_seed, softmax_into, KahanSum, RngStream};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelShape {
    pub num_items: usize,
    pub encoder_hidden: Vec<usize>,
    pub latent: usize,
    pub decoder_hidden: Vec<usize>,
    pub variational: bool,
}

impl ModelShape {
    /// Decoder mirrors the encoder.
    pub fn symmetric(num_items: usize, hidden: Vec<usize>, latent: usize, variational: bool) -> Self {
        let decoder_hidden = hidden.iter().rev().copied().collect();
        Self {
            num_items,
            encoder_hidden: hidden,
            latent,
            decoder_hidden,
            variational,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    inp: usize,
    out: usize,
    weights: usize,
    bias: usize,
}

impl Dense {
    fn size(&self) -> usize {
        self.inp * self.out + self.out
    }

    fn forward(&self, params: &[f64], h: &[f64], y: &mut [f64]) {
        let w = &params[self.weights..self.weights + self.inp * self.out];
        let b = &params[self.bias..self.bias + self.out];
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &w[o * self.inp..(o + 1) * self.inp];
            *yo = b[o] + row.iter().zip(h).map(|(a, x)| a * x).sum::<f64>();
        }
    }

    fn forward_sparse(&self, params: &[f64], x: &[(usize, f64)], y: &mut [f64]) {
        let w = &params[self.weights..self.weights + self.inp * self.out];
        let b = &params[self.bias..self.bias + self.out];
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &w[o * self.inp..(o + 1) * self.inp];
            *yo = b[o] + x.iter().map(|&(j, v)| row[j] * v).sum::<f64>();
        }
    }

    /// Accumulates parameter gradients; writes the input gradient to `dh`
    /// when requested.
    fn backward(&self, params: &[f64], h: &[f64], delta: &[f64], grad: &mut [f64], dh: Option<&mut [f64]>) {
        let (gw, gb) = grad_slices(grad, self);
        for (o, &d) in delta.iter().enumerate() {
            gb[o] += d;
            if d != 0.0 {
                for (g, x) in gw[o * self.inp..(o + 1) * self.inp].iter_mut().zip(h) {
                    *g += d * x;
                }
            }
        }
        if let Some(dh) = dh {
            let w = &params[self.weights..self.weights + self.inp * self.out];
            dh.iter_mut().for_each(|v| *v = 0.0);
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    for (v, a) in dh.iter_mut().zip(&w[o * self.inp..(o + 1) * self.inp]) {
                        *v += a * d;
                    }
                }
            }
        }
    }

    fn backward_sparse(&self, x: &[(usize, f64)], delta: &[f64], grad: &mut [f64]) {
        let (gw, gb) = grad_slices(grad, self);
        for (o, &d) in delta.iter().enumerate() {
            gb[o] += d;
            let row = &mut gw[o * self.inp..(o + 1) * self.inp];
            for &(j, v) in x {
                row[j] += d * v;
            }
        }
    }
}

fn grad_slices<'a>(grad: &'a mut [f64], layer: &Dense) -> (&'a mut [f64], &'a mut [f64]) {
    // Weights and bias of one layer are adjacent: [weights | bias].
    let block = &mut grad[layer.weights..layer.bias + layer.out];
    block.split_at_mut(layer.inp * layer.out)
}

/// Per-user forward state kept for the backward pass.
#[derive(Debug, Clone)]
struct Trace {
    input: Vec<(usize, f64)>,
    encoder: Vec<Vec<f64>>,
    mean: Vec<f64>,
    log_var: Vec<f64>,
    eps: Vec<f64>,
    z: Vec<f64>,
    decoder: Vec<Vec<f64>>,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
    kl: f64,
}

/// Randomness used for one user's forward pass.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sampling {
    /// Draw `z` by reparameterization (variational models only).
    pub sample_latent: bool,
    /// Input dropout probability; 0 disables.
    pub dropout: f64,
}

impl Sampling {
    pub const DETERMINISTIC: Sampling = Sampling {
        sample_latent: false,
        dropout: 0.0,
    };

    pub fn training(dropout: f64) -> Self {
        Self {
            sample_latent: true,
            dropout,
        }
    }
}

/// Output of [`Autoencoder::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub probabilities: Vec<f64>,
    pub kl: f64,
}

/// Per-objective loss specification: item weights and KL coefficient.
#[derive(Debug, Clone, Copy)]
pub struct WeightedObjective<'a> {
    pub item_weight: &'a [f64],
    pub beta: f64,
}

#[derive(Debug, Clone)]
pub struct Autoencoder {
    shape: ModelShape,
    encoder: Vec<Dense>,
    decoder: Vec<Dense>,
    num_params: usize,
}

impl Autoencoder {
    pub fn new(shape: ModelShape) -> Result<Self> {
        if shape.num_items < 2 {
            return Err(Error::invalid("num_items", "need at least 2 items"));
        }
        if shape.latent == 0 {
            return Err(Error::invalid("latent", "must be >= 1"));
        }
        if shape.encoder_hidden.iter().chain(&shape.decoder_hidden).any(|&h| h == 0) {
            return Err(Error::invalid("hidden", "layer sizes must be >= 1"));
        }
        let enc_out = if shape.variational { 2 * shape.latent } else { shape.latent };
        let mut offset = 0;
        let mut build = |dims: Vec<usize>| -> Vec<Dense> {
            dims.windows(2)
                .map(|pair| {
                    let layer = Dense {
                        inp: pair[0],
                        out: pair[1],
                        weights: offset,
                        bias: offset + pair[0] * pair[1],
                    };
                    offset += layer.size();
                    layer
                })
                .collect()
        };
        let mut enc_dims = vec![shape.num_items];
        enc_dims.extend(&shape.encoder_hidden);
        enc_dims.push(enc_out);
        let encoder = build(enc_dims);
        let mut dec_dims = vec![shape.latent];
        dec_dims.extend(&shape.decoder_hidden);
        dec_dims.push(shape.num_items);
        let decoder = build(dec_dims);
        Ok(Self {
            shape,
            encoder,
            decoder,
            num_params: offset,
        })
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn num_items(&self) -> usize {
        self.shape.num_items
    }

    /// Glorot-normal weights, `N(0, 1e-3)` biases.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed);
        let mut params = vec![0.0; self.num_params];
        for layer in self.encoder.iter().chain(&self.decoder) {
            let std = (2.0 / (layer.inp + layer.out) as f64).sqrt();
            for p in &mut params[layer.weights..layer.bias] {
                *p = std * rng.normal();
            }
            for p in &mut params[layer.bias..layer.bias + layer.out] {
                *p = 1e-3 * rng.normal();
            }
        }
        params
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params {
            return Err(Error::LengthMismatch {
                expected: self.num_params,
                actual: params.len(),
            });
        }
        Ok(())
    }

    fn check_row(&self, row: &[u32]) -> Result<()> {
        if let Some(&bad) = row.iter().find(|&&j| j as usize >= self.shape.num_items) {
            return Err(Error::invalid(
                "interaction row",
                format!("item {bad} out of range 0..{}", self.shape.num_items),
            ));
        }
        Ok(())
    }

    fn check_weight(&self, weight: &[f64]) -> Result<()> {
        if weight.len() != self.shape.num_items {
            return Err(Error::LengthMismatch {
                expected: self.shape.num_items,
                actual: weight.len(),
            });
        }
        if weight.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("item_weight", "entries must be finite and >= 0"));
        }
        Ok(())
    }

    fn prepare_input(&self, row: &[u32], sampling: Sampling, rng: &mut RngStream) -> Vec<(usize, f64)> {
        if row.is_empty() {
            return Vec::new();
        }
        let scale = 1.0 / (row.len() as f64).sqrt();
        let keep = 1.0 - sampling.dropout;
        row.iter()
            .filter_map(|&j| {
                if sampling.dropout > 0.0 {
                    (rng.uniform() < keep).then(|| (j as usize, scale / keep))
                } else {
                    Some((j as usize, scale))
                }
            })
            .collect()
    }

    fn forward_trace(&self, params: &[f64], row: &[u32], sampling: Sampling, rng: &mut RngStream) -> Trace {
        let input = self.prepare_input(row, sampling, rng);

        let mut encoder: Vec<Vec<f64>> = Vec::with_capacity(self.encoder.len());
        let mut enc_out = Vec::new();
        for (k, layer) in self.encoder.iter().enumerate() {
            let mut y = vec![0.0; layer.out];
            if k == 0 {
                layer.forward_sparse(params, &input, &mut y);
            } else {
                layer.forward(params, encoder.last().unwrap(), &mut y);
            }
            if k + 1 < self.encoder.len() {
                y.iter_mut().for_each(|v| *v = v.tanh());
                encoder.push(y);
            } else {
                enc_out = y;
            }
        }

        let latent = self.shape.latent;
        let (mean, log_var, eps, z, kl) = if self.shape.variational {
            let mean = enc_out[..latent].to_vec();
            let log_var = enc_out[latent..].to_vec();
            let eps: Vec<f64> = if sampling.sample_latent {
                (0..latent).map(|_| rng.normal()).collect()
            } else {
                vec![0.0; latent]
            };
            let z = (0..latent)
                .map(|i| mean[i] + (0.5 * log_var[i]).exp() * eps[i])
                .collect();
            let kl = 0.5
                * (0..latent)
                    .map(|i| log_var[i].exp() + mean[i] * mean[i] - 1.0 - log_var[i])
                    .sum::<f64>();
            (mean, log_var, eps, z, kl)
        } else {
            (enc_out.clone(), Vec::new(), Vec::new(), enc_out, 0.0)
        };

        let mut decoder: Vec<Vec<f64>> = Vec::with_capacity(self.decoder.len());
        let mut logits = Vec::new();
        for (k, layer) in self.decoder.iter().enumerate() {
            let mut y = vec![0.0; layer.out];
            layer.forward(params, decoder.last().unwrap_or(&z), &mut y);
            if k + 1 < self.decoder.len() {
                y.iter_mut().for_each(|v| *v = v.tanh());
                decoder.push(y);
            } else {
                logits = y;
            }
        }
        let mut probs = vec![0.0; logits.len()];
        let lse = softmax_into(&logits, &mut probs);
        let log_probs = logits.iter().map(|l| l - lse).collect();

        Trace {
            input,
            encoder,
            mean,
            log_var,
            eps,
            z,
            decoder,
            probs,
            log_probs,
            kl,
        }
    }

    /// Accumulates the gradient of `nll(c) + beta * kl` for one user into `grad`.
    fn backward_trace(&self, params: &[f64], trace: &Trace, upstream: &[f64], beta: f64, grad: &mut [f64]) {
        // Decoder, last layer first.
        let mut delta = upstream.to_vec();
        for k in (0..self.decoder.len()).rev() {
            let layer = &self.decoder[k];
            let h = if k == 0 { &trace.z } else { &trace.decoder[k - 1] };
            let mut dh = vec![0.0; layer.inp];
            layer.backward(params, h, &delta, grad, Some(&mut dh));
            if k > 0 {
                for (d, y) in dh.iter_mut().zip(&trace.decoder[k - 1]) {
                    *d *= 1.0 - y * y;
                }
            }
            delta = dh;
        }
        let dz = delta;

        let latent = self.shape.latent;
        let mut delta = if self.shape.variational {
            let mut d = vec![0.0; 2 * latent];
            for i in 0..latent {
                let sigma = (0.5 * trace.log_var[i]).exp();
                d[i] = dz[i] + beta * trace.mean[i];
                d[latent + i] =
                    dz[i] * trace.eps[i] * 0.5 * sigma + beta * 0.5 * (trace.log_var[i].exp() - 1.0);
            }
            d
        } else {
            dz
        };

        for k in (0..self.encoder.len()).rev() {
            let layer = &self.encoder[k];
            if k == 0 {
                layer.backward_sparse(&trace.input, &delta, grad);
                break;
            }
            let h = &trace.encoder[k - 1];
            let mut dh = vec![0.0; layer.inp];
            layer.backward(params, h, &delta, grad, Some(&mut dh));
            for (d, y) in dh.iter_mut().zip(h) {
                *d *= 1.0 - y * y;
            }
            delta = dh;
        }
    }

    /// Item probabilities and KL term for one interaction row.
    pub fn forward(&self, params: &[f64], row: &[u32], sampling: Sampling, seed: u64) -> Result<ForwardOutput> {
        self.check_params(params)?;
        self.check_row(row)?;
        let mut rng = RngStream::new(seed);
        let trace = self.forward_trace(params, row, sampling, &mut rng);
        Ok(ForwardOutput {
            probabilities: trace.probs,
            kl: trace.kl,
        })
    }

    /// Decoder logits with the deterministic latent code (for ranking).
    pub fn scores(&self, params: &[f64], row: &[u32]) -> Result<Vec<f64>> {
        self.check_params(params)?;
        self.check_row(row)?;
        let mut rng = RngStream::new(0);
        let trace = self.forward_trace(params, row, Sampling::DETERMINISTIC, &mut rng);
        Ok(trace.log_probs)
    }

    /// Batch-mean losses and gradients for several objectives sharing one
    /// forward pass per user. User `u` of the batch draws its randomness from
    /// `derive_seed(seed, u)`.
    pub fn losses_and_grads(
        &self,
        params: &[f64],
        rows: &[Vec<u32>],
        objectives: &[WeightedObjective<'_>],
        sampling: Sampling,
        seed: u64,
    ) -> Result<Vec<(f64, Vec<f64>)>> {
        self.check_params(params)?;
        if rows.is_empty() {
            return Err(Error::Empty("user batch"));
        }
        for obj in objectives {
            self.check_weight(obj.item_weight)?;
        }
        let mut sums: Vec<KahanSum> = vec![KahanSum::new(); objectives.len()];
        let mut grads = vec![vec![0.0; self.num_params]; objectives.len()];
        let mut upstream = vec![0.0; self.shape.num_items];
        for (u, row) in rows.iter().enumerate() {
            self.check_row(row)?;
            let mut rng = RngStream::new(derive_seed(seed, u as u64));
            let trace = self.forward_trace(params, row, sampling, &mut rng);
            for (k, obj) in objectives.iter().enumerate() {
                let mut mass = 0.0;
                let mut nll = 0.0;
                for &j in row {
                    let c = obj.item_weight[j as usize];
                    mass += c;
                    nll -= c * trace.log_probs[j as usize];
                }
                sums[k].add(nll + obj.beta * trace.kl);
                if mass == 0.0 && (obj.beta == 0.0 || !self.shape.variational) {
                    continue;
                }
                for (up, p) in upstream.iter_mut().zip(&trace.probs) {
                    *up = mass * p;
                }
                for &j in row {
                    upstream[j as usize] -= obj.item_weight[j as usize];
                }
                self.backward_trace(params, &trace, &upstream, obj.beta, &mut grads[k]);
            }
        }
        let n = rows.len() as f64;
        Ok(sums
            .into_iter()
            .zip(grads)
            .map(|(s, mut g)| {
                g.iter_mut().for_each(|v| *v /= n);
                (s.total() / n, g)
            })
            .collect())
    }

    /// Batch mean of `-sum_j (weight_j x_j) log p(j) + beta * kl`.
    pub fn weighted_nll_loss(
        &self,
        params: &[f64],
        rows: &[Vec<u32>],
        item_weight: &[f64],
        beta: f64,
        sampling: Sampling,
        seed: u64,
    ) -> Result<f64> {
        self.check_params(params)?;
        self.check_weight(item_weight)?;
        if rows.is_empty() {
            return Err(Error::Empty("user batch"));
        }
        let mut sum = KahanSum::new();
        for (u, row) in rows.iter().enumerate() {
            self.check_row(row)?;
            let mut rng = RngStream::new(derive_seed(seed, u as u64));
            let trace = self.forward_trace(params, row, sampling, &mut rng);
            let nll: f64 = row
                .iter()
                .map(|&j| -item_weight[j as usize] * trace.log_probs[j as usize])
                .sum();
            sum.add(nll + beta * trace.kl);
        }
        Ok(sum.total() / rows.len() as f64)
    }

    /// Gradient of [`Autoencoder::weighted_nll_loss`] over the flat parameters.
    pub fn backward(
        &self,
        params: &[f64],
        rows: &[Vec<u32>],
        item_weight: &[f64],
        beta: f64,
        sampling: Sampling,
        seed: u64,
    ) -> Result<Vec<f64>> {
        let mut out = self.losses_and_grads(
            params,
            rows,
            &[WeightedObjective { item_weight, beta }],
            sampling,
            seed,
        )?;
        Ok(out.pop().expect("one objective").1)
    }
}
