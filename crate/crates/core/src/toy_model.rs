//! A small seeded decoder-only transformer that exposes per-layer hidden
//! states.
//!
//! Weights are drawn from one deterministic stream: xoshiro256** seeded
//! through SplitMix64, turned into standard normals by Box–Muller and
//! scaled by 0.02. Draw order is the token embedding table (row-major),
//! then for each layer the QKV projection, attention output, MLP input and
//! MLP output matrices, each stored `[in][out]` row-major. Layer-norm gains
//! are 1 and biases 0, so they consume nothing from the stream.
//!
//! Activations are stored as `f32`. Every reduction (matrix products,
//! attention scores, softmax, layer norm) accumulates sequentially in `f64`,
//! which makes the output bit-reproducible for a fixed evaluation order.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const INIT_SCALE: f64 = 0.02;
const LN_EPS: f64 = 1e-5;

/// xoshiro256** with SplitMix64 seeding.
#[derive(Debug, Clone)]
pub struct Xoshiro256StarStar {
    s: [u64; 4],
}

impl Xoshiro256StarStar {
    pub fn seed_from_u64(seed: u64) -> Self {
        let mut sm = seed;
        let mut next = || {
            sm = sm.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = sm;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^ (z >> 31)
        };
        Xoshiro256StarStar {
            s: [next(), next(), next(), next()],
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Standard normals by Box–Muller. Each pair of uniforms `(u1, u2)` yields
/// `r·cos(2πu2)` followed by `r·sin(2πu2)`, with `r = sqrt(-2 ln(1 - u1))`.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: Xoshiro256StarStar,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        GaussianStream {
            rng: Xoshiro256StarStar::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.rng.next_f64();
        let u2 = self.rng.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_seq: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            vocab_size: 256,
            d_model: 64,
            n_layers: 4,
            n_heads: 4,
            max_seq: 512,
            seed: 0,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("max_seq", self.max_seq),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::validation(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::validation(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        format!(
            "toy-decoder(vocab={},d={},layers={},heads={},seed={})",
            self.vocab_size, self.d_model, self.n_layers, self.n_heads, self.seed
        )
    }
}

/// Row-major `[rows][cols]` matrix.
#[derive(Debug, Clone)]
struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    fn draw(rows: usize, cols: usize, stream: &mut GaussianStream) -> Self {
        let data = (0..rows * cols)
            .map(|_| (stream.next_gaussian() * INIT_SCALE) as f32)
            .collect();
        Matrix { rows, cols, data }
    }

    fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `x · self` for a single row vector, summing over inputs in order.
    fn apply(&self, x: &[f32], acc: &mut [f64], out: &mut [f32]) {
        debug_assert_eq!(x.len(), self.rows);
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            let xi = f64::from(xi);
            for (a, &w) in acc.iter_mut().zip(self.row(i)) {
                *a += xi * f64::from(w);
            }
        }
        for (o, &a) in out.iter_mut().zip(acc.iter()) {
            *o = a as f32;
        }
    }
}

#[derive(Debug, Clone)]
struct Block {
    w_qkv: Matrix,
    w_attn_out: Matrix,
    w_mlp_in: Matrix,
    w_mlp_out: Matrix,
}

#[derive(Debug, Clone)]
pub struct ToyModel {
    config: ToyConfig,
    token_embedding: Matrix,
    blocks: Vec<Block>,
}

/// Hidden states `[n_layers + 1][T][d_model]`; index 0 is the input embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStates {
    pub layers: Vec<Vec<Vec<f32>>>,
}

impl LayerStates {
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn seq_len(&self) -> usize {
        self.layers.first().map_or(0, Vec::len)
    }
}

fn layer_norm(x: &[f32], out: &mut [f32]) {
    let n = x.len() as f64;
    let mean = x.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = x
        .iter()
        .map(|&v| (f64::from(v) - mean).powi(2))
        .sum::<f64>()
        / n;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = ((f64::from(v) - mean) * inv) as f32;
    }
}

fn gelu(x: f32) -> f32 {
    let x = f64::from(x);
    let c = (2.0 / PI).sqrt();
    (0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())) as f32
}

fn positional_encoding(pos: usize, d_model: usize) -> Vec<f32> {
    (0..d_model)
        .map(|i| {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / d_model as f64);
            (if i % 2 == 0 { angle.sin() } else { angle.cos() }) as f32
        })
        .collect()
}

impl ToyModel {
    pub fn init(config: ToyConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let mut stream = GaussianStream::new(config.seed);
        let token_embedding = Matrix::draw(config.vocab_size, d, &mut stream);
        let blocks = (0..config.n_layers)
            .map(|_| Block {
                w_qkv: Matrix::draw(d, 3 * d, &mut stream),
                w_attn_out: Matrix::draw(d, d, &mut stream),
                w_mlp_in: Matrix::draw(d, 4 * d, &mut stream),
                w_mlp_out: Matrix::draw(4 * d, d, &mut stream),
            })
            .collect();
        Ok(ToyModel {
            config,
            token_embedding,
            blocks,
        })
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    pub fn embedding_row(&self, token: usize) -> &[f32] {
        self.token_embedding.row(token)
    }

    /// Every weight in draw order.
    pub fn weights(&self) -> impl Iterator<Item = f32> + '_ {
        let blocks = self.blocks.iter().flat_map(|b| {
            b.w_qkv
                .data
                .iter()
                .chain(&b.w_attn_out.data)
                .chain(&b.w_mlp_in.data)
                .chain(&b.w_mlp_out.data)
        });
        self.token_embedding.data.iter().chain(blocks).copied()
    }

    /// Runs the causal forward pass and returns the residual stream after
    /// the embedding and after every block.
    pub fn forward_collect(&self, token_ids: &[u32]) -> Result<LayerStates> {
        let cfg = &self.config;
        let t_len = token_ids.len();
        if t_len == 0 {
            return Err(Error::validation("empty token sequence"));
        }
        if t_len > cfg.max_seq {
            return Err(Error::Capacity(format!(
                "sequence of {t_len} tokens exceeds max_seq {}",
                cfg.max_seq
            )));
        }
        if let Some(&bad) = token_ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
            return Err(Error::validation(format!(
                "token id {bad} outside vocabulary of {}",
                cfg.vocab_size
            )));
        }

        let d = cfg.d_model;
        let n_heads = cfg.n_heads;
        let head_dim = d / n_heads;
        let scale = 1.0 / (head_dim as f64).sqrt();

        let mut x: Vec<Vec<f32>> = token_ids
            .iter()
            .enumerate()
            .map(|(t, &id)| {
                let pe = positional_encoding(t, d);
                self.embedding_row(id as usize)
                    .iter()
                    .zip(pe)
                    .map(|(&e, p)| e + p)
                    .collect()
            })
            .collect();

        let mut layers = Vec::with_capacity(cfg.n_layers + 1);
        layers.push(x.clone());

        let mut normed = vec![0.0f32; d];
        let mut acc = vec![0.0f64; 4 * d];
        let mut proj = vec![0.0f32; d];
        let mut hidden = vec![0.0f32; 4 * d];
        let mut qkv = vec![vec![0.0f32; 3 * d]; t_len];
        let mut weights = vec![0.0f64; t_len];
        let mut mixed = vec![0.0f32; d];

        for block in &self.blocks {
            for (row, out) in x.iter().zip(qkv.iter_mut()) {
                layer_norm(row, &mut normed);
                block.w_qkv.apply(&normed, &mut acc[..3 * d], out);
            }

            for t in 0..t_len {
                for h in 0..n_heads {
                    let q = &qkv[t][h * head_dim..(h + 1) * head_dim];
                    let scores = &mut weights[..=t];
                    for (s, score) in scores.iter_mut().enumerate() {
                        let k = &qkv[s][d + h * head_dim..d + (h + 1) * head_dim];
                        let dot: f64 = q
                            .iter()
                            .zip(k)
                            .fold(0.0, |a, (&qi, &ki)| a + f64::from(qi) * f64::from(ki));
                        *score = dot * scale;
                    }
                    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for w in scores.iter_mut() {
                        *w = (*w - max).exp();
                        total += *w;
                    }
                    let head_acc = &mut acc[..head_dim];
                    head_acc.iter_mut().for_each(|a| *a = 0.0);
                    for (s, &w) in scores.iter().enumerate() {
                        let p = w / total;
                        let v = &qkv[s][2 * d + h * head_dim..2 * d + (h + 1) * head_dim];
                        for (a, &vi) in head_acc.iter_mut().zip(v) {
                            *a += p * f64::from(vi);
                        }
                    }
                    for (m, &a) in mixed[h * head_dim..(h + 1) * head_dim]
                        .iter_mut()
                        .zip(head_acc.iter())
                    {
                        *m = a as f32;
                    }
                }
                block.w_attn_out.apply(&mixed, &mut acc[..d], &mut proj);
                x[t].iter_mut().zip(&proj).for_each(|(xi, &p)| *xi += p);
            }

            for row in x.iter_mut() {
                layer_norm(row, &mut normed);
                block
                    .w_mlp_in
                    .apply(&normed, &mut acc[..4 * d], &mut hidden);
                hidden.iter_mut().for_each(|v| *v = gelu(*v));
                block.w_mlp_out.apply(&hidden, &mut acc[..d], &mut proj);
                row.iter_mut().zip(&proj).for_each(|(xi, &p)| *xi += p);
            }

            layers.push(x.clone());
        }

        Ok(LayerStates { layers })
    }
}
