//! Desk-scale conditional motion predictor.
//!
//! Per agent, a two-layer tanh encoder embeds the flattened history together
//! with ten lane points ahead of the agent and its offset from the AV. The AV
//! plan is embedded by a second two-layer encoder. One single-head scaled
//! dot-product attention layer with a residual connection mixes agent
//! embeddings. Early fusion adds the plan embedding to every agent embedding
//! before attention; late fusion concatenates it to the attention output.
//! A tanh + affine decoder emits, for each mode and step, the displacement
//! from the agent's current position and the log sigmas. Mode logits come
//! from an affine head over the mean-pooled decoder inputs.
//!
//! Parameters are one flat vector. Layers are stored in the order
//! `hist1, hist2, plan1, plan2, query, key, value, dec1, dec2, prob`, each as
//! a row-major weight matrix followed by its bias.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Fusion, Gaussian2, PredictedFutures, PredictionError, PredictorConfig, SceneContext};
use super::{SIGMA_CEIL, SIGMA_FLOOR};
use crate::geometry::{Point2, Pose};
use crate::{PLAN_DIM, T_F, T_H};

/// Values per history step.
pub const HIST_FEATURES: usize = 4;
/// Lane points sampled ahead of each agent.
pub const LANE_POINTS: usize = 10;
/// Spacing of the sampled lane points (m).
pub const LANE_SPACING: f64 = 10.0;
pub const AGENT_INPUT: usize = T_H * HIST_FEATURES + 2 * LANE_POINTS + 2;
pub const PLAN_INPUT: usize = T_F * PLAN_DIM;
/// Values per mode and step: displacement x, log sigma x, displacement y,
/// log sigma y.
pub const OUT_PER_STEP: usize = 4;
const POS_SCALE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Linear {
    pub off: usize,
    pub inp: usize,
    pub out: usize,
}

impl Linear {
    pub(crate) fn size(&self) -> usize {
        self.inp * self.out + self.out
    }

    fn forward(&self, v: &[f64], x: &[f64]) -> Vec<f64> {
        let w = &v[self.off..self.off + self.inp * self.out];
        let b = &v[self.off + self.inp * self.out..self.off + self.size()];
        (0..self.out)
            .map(|i| b[i] + dot(&w[i * self.inp..(i + 1) * self.inp], x))
            .collect()
    }

    fn forward_tanh(&self, v: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = self.forward(v, x);
        y.iter_mut().for_each(|a| *a = a.tanh());
        y
    }

    /// Accumulates weight and bias gradients for `dy` and returns `dx`.
    fn backward(&self, v: &[f64], g: &mut [f64], x: &[f64], dy: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.inp];
        let wo = self.off;
        let bo = self.off + self.inp * self.out;
        for i in 0..self.out {
            let d = dy[i];
            if d == 0.0 {
                continue;
            }
            g[bo + i] += d;
            let row = wo + i * self.inp;
            for j in 0..self.inp {
                g[row + j] += d * x[j];
                dx[j] += d * v[row + j];
            }
        }
        dx
    }

    /// Backward through `tanh(W x + b)` given the activation `y`.
    fn backward_tanh(&self, v: &[f64], g: &mut [f64], x: &[f64], y: &[f64], dy: &[f64]) -> Vec<f64> {
        let pre: Vec<f64> = dy.iter().zip(y).map(|(d, a)| d * (1.0 - a * a)).collect();
        self.backward(v, g, x, &pre)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}

/// Offsets of every layer for one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CmpLayout {
    pub embed_dim: usize,
    pub num_modes: usize,
    pub fusion: Fusion,
    pub(crate) hist1: Linear,
    pub(crate) hist2: Linear,
    pub(crate) plan1: Linear,
    pub(crate) plan2: Linear,
    pub(crate) query: Linear,
    pub(crate) key: Linear,
    pub(crate) value: Linear,
    pub(crate) dec1: Linear,
    pub(crate) dec2: Linear,
    pub(crate) prob: Linear,
    pub num_params: usize,
}

impl CmpLayout {
    pub fn new(fusion: Fusion, num_modes: usize, embed_dim: usize) -> Self {
        let e = embed_dim;
        let z = match fusion {
            Fusion::Early => e,
            Fusion::Late => 2 * e,
        };
        let mut off = 0;
        let mut next = |inp: usize, out: usize| {
            let l = Linear { off, inp, out };
            off += l.size();
            l
        };
        let hist1 = next(AGENT_INPUT, e);
        let hist2 = next(e, e);
        let plan1 = next(PLAN_INPUT, e);
        let plan2 = next(e, e);
        let query = next(e, e);
        let key = next(e, e);
        let value = next(e, e);
        let dec1 = next(z, e);
        let dec2 = next(e, num_modes * T_F * OUT_PER_STEP);
        let prob = next(z, num_modes);
        Self {
            embed_dim,
            num_modes,
            fusion,
            hist1,
            hist2,
            plan1,
            plan2,
            query,
            key,
            value,
            dec1,
            dec2,
            prob,
            num_params: off,
        }
    }

    pub fn for_config(cfg: &PredictorConfig) -> Self {
        Self::new(cfg.fusion, cfg.num_modes, cfg.embed_dim)
    }

    pub(crate) fn layers(&self) -> [Linear; 10] {
        [
            self.hist1, self.hist2, self.plan1, self.plan2, self.query, self.key, self.value, self.dec1,
            self.dec2, self.prob,
        ]
    }
}

/// Learned parameters plus the configuration they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct CmpModelParams {
    pub fusion: Fusion,
    pub num_modes: usize,
    pub max_agents: usize,
    pub embed_dim: usize,
    pub values: Vec<f64>,
}

impl CmpModelParams {
    pub fn zeros(cfg: &PredictorConfig) -> Self {
        let n = CmpLayout::for_config(cfg).num_params;
        Self {
            fusion: cfg.fusion,
            num_modes: cfg.num_modes,
            max_agents: cfg.max_agents,
            embed_dim: cfg.embed_dim,
            values: vec![0.0; n],
        }
    }

    /// Uniform init in `±1/sqrt(fan_in)` for weights, zero biases, from
    /// `cfg.rng_seed`.
    pub fn init(cfg: &PredictorConfig) -> Self {
        let mut p = Self::zeros(cfg);
        let layout = p.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        for l in layout.layers() {
            let bound = 1.0 / (l.inp as f64).sqrt();
            for w in &mut p.values[l.off..l.off + l.inp * l.out] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        p
    }

    pub fn layout(&self) -> CmpLayout {
        CmpLayout::new(self.fusion, self.num_modes, self.embed_dim)
    }

    pub fn num_params(&self) -> usize {
        self.values.len()
    }

    pub fn check_config(&self, cfg: &PredictorConfig) -> Result<(), PredictionError> {
        if self.fusion != cfg.fusion
            || self.num_modes != cfg.num_modes
            || self.embed_dim != cfg.embed_dim
            || self.max_agents != cfg.max_agents
        {
            return Err(PredictionError::ConfigMismatch(format!(
                "params have fusion {:?}, K {}, N {}, embed {}; config has fusion {:?}, K {}, N {}, embed {}",
                self.fusion,
                self.num_modes,
                self.max_agents,
                self.embed_dim,
                cfg.fusion,
                cfg.num_modes,
                cfg.max_agents,
                cfg.embed_dim
            )));
        }
        self.check_len()
    }

    pub fn check_len(&self) -> Result<(), PredictionError> {
        let expected = self.layout().num_params;
        if self.values.len() != expected {
            return Err(PredictionError::ShapeMismatch {
                expected,
                got: self.values.len(),
            });
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(PredictionError::Format("non-finite parameter".into()));
        }
        Ok(())
    }
}

/// Network input for one agent.
pub fn agent_input(ctx: &SceneContext, agent: usize) -> Vec<f64> {
    let hist = &ctx.agents[agent];
    let cur = hist.current();
    let mut x = Vec::with_capacity(AGENT_INPUT);
    for st in &hist.states[hist.states.len() - T_H..] {
        x.push((st.x - cur.x) / POS_SCALE);
        x.push((st.y - cur.y) / POS_SCALE);
        x.push(st.speed * st.heading.cos() / POS_SCALE);
        x.push(st.speed * st.heading.sin() / POS_SCALE);
    }
    match ctx.assign_lane(cur, 3.5) {
        Some((k, s, _)) => {
            let path = &ctx.lane_paths[k].1;
            for j in 1..=LANE_POINTS {
                let p = path.point_at((s + LANE_SPACING * j as f64).min(path.length())).position;
                x.push((p.x - cur.x) / POS_SCALE);
                x.push((p.y - cur.y) / POS_SCALE);
            }
        }
        None => x.extend(std::iter::repeat(0.0).take(2 * LANE_POINTS)),
    }
    let av = ctx.av.current();
    x.push((cur.x - av.x) / POS_SCALE);
    x.push((cur.y - av.y) / POS_SCALE);
    x
}

/// Network input for one AV plan, relative to the AV's current position.
pub fn plan_input(ctx: &SceneContext, plan: &[Pose]) -> Vec<f64> {
    let av = ctx.av.current();
    plan.iter()
        .flat_map(|p| {
            [
                (p.x - av.x) / POS_SCALE,
                (p.y - av.y) / POS_SCALE,
                p.speed * p.heading.cos() / POS_SCALE,
                p.speed * p.heading.sin() / POS_SCALE,
            ]
        })
        .collect()
}

/// Plan-independent part of a forward pass.
#[derive(Debug, Clone)]
pub struct ContextEncoding {
    pub(crate) inputs: Vec<Vec<f64>>,
    pub(crate) h1: Vec<Vec<f64>>,
    pub(crate) h: Vec<Vec<f64>>,
    pub(crate) origins: Vec<Point2>,
}

pub fn encode_context(params: &CmpModelParams, ctx: &SceneContext) -> ContextEncoding {
    let inputs: Vec<Vec<f64>> = (0..ctx.agents.len()).map(|i| agent_input(ctx, i)).collect();
    let origins = ctx.agents.iter().map(|a| a.current().position()).collect();
    encode_inputs(params, inputs, origins)
}

pub(crate) fn encode_inputs(params: &CmpModelParams, inputs: Vec<Vec<f64>>, origins: Vec<Point2>) -> ContextEncoding {
    let l = params.layout();
    let v = &params.values;
    let h1: Vec<Vec<f64>> = inputs.iter().map(|x| l.hist1.forward_tanh(v, x)).collect();
    let h = h1.iter().map(|x| l.hist2.forward_tanh(v, x)).collect();
    ContextEncoding { inputs, h1, h, origins }
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub futures: PredictedFutures,
    plan_in: Vec<f64>,
    p1: Vec<f64>,
    p: Vec<f64>,
    e: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    val: Vec<Vec<f64>>,
    att: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    d1: Vec<Vec<f64>>,
    out: Vec<Vec<f64>>,
    pool: Vec<f64>,
}

fn log_sigma_bounds() -> (f64, f64) {
    (SIGMA_FLOOR.ln(), SIGMA_CEIL.ln())
}

pub fn decode_plan(params: &CmpModelParams, ctx: &SceneContext, enc: &ContextEncoding, plan: &[Pose]) -> Decoded {
    decode_input(params, enc, plan_input(ctx, plan))
}

pub(crate) fn decode_input(params: &CmpModelParams, enc: &ContextEncoding, plan_in: Vec<f64>) -> Decoded {
    let l = params.layout();
    let v = &params.values;
    let n = enc.h.len();
    let e_dim = l.embed_dim;
    let p1 = l.plan1.forward_tanh(v, &plan_in);
    let p = l.plan2.forward_tanh(v, &p1);

    let e: Vec<Vec<f64>> = enc
        .h
        .iter()
        .map(|h| match l.fusion {
            Fusion::Early => h.iter().zip(&p).map(|(a, b)| a + b).collect(),
            Fusion::Late => h.clone(),
        })
        .collect();
    let q: Vec<Vec<f64>> = e.iter().map(|x| l.query.forward(v, x)).collect();
    let k: Vec<Vec<f64>> = e.iter().map(|x| l.key.forward(v, x)).collect();
    let val: Vec<Vec<f64>> = e.iter().map(|x| l.value.forward(v, x)).collect();
    let scale = 1.0 / (e_dim as f64).sqrt();
    let att: Vec<Vec<f64>> = q
        .iter()
        .map(|qi| softmax(&k.iter().map(|kj| dot(qi, kj) * scale).collect::<Vec<_>>()))
        .collect();
    let z: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut u = e[i].clone();
            for j in 0..n {
                for (ud, vd) in u.iter_mut().zip(&val[j]) {
                    *ud += att[i][j] * vd;
                }
            }
            if l.fusion == Fusion::Late {
                u.extend_from_slice(&p);
            }
            u
        })
        .collect();
    let d1: Vec<Vec<f64>> = z.iter().map(|x| l.dec1.forward_tanh(v, x)).collect();
    let out: Vec<Vec<f64>> = d1.iter().map(|x| l.dec2.forward(v, x)).collect();

    let mut pool = vec![0.0; z.first().map_or(0, Vec::len)];
    for zi in &z {
        add_into(&mut pool, zi);
    }
    pool.iter_mut().for_each(|a| *a /= n.max(1) as f64);
    let mode_probs = softmax(&l.prob.forward(v, &pool));

    let (lo, hi) = log_sigma_bounds();
    let modes = (0..l.num_modes)
        .map(|m| {
            (0..n)
                .map(|i| {
                    let o = &enc.origins[i];
                    (0..T_F)
                        .map(|t| {
                            let b = (m * T_F + t) * OUT_PER_STEP;
                            let r = &out[i][b..b + OUT_PER_STEP];
                            Gaussian2 {
                                mu_x: o.x + POS_SCALE * r[0],
                                sigma_x: r[1].clamp(lo, hi).exp(),
                                mu_y: o.y + POS_SCALE * r[2],
                                sigma_y: r[3].clamp(lo, hi).exp(),
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Decoded {
        futures: PredictedFutures { modes, mode_probs },
        plan_in,
        p1,
        p,
        e,
        q,
        k,
        val,
        att,
        z,
        d1,
        out,
        pool,
    }
}

pub(crate) fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|a| (a - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|a| a / s).collect()
}

/// Gradient of a scalar loss with respect to the decoder outputs.
pub(crate) struct OutputGrad {
    /// Per agent, aligned with the raw decoder output.
    pub out: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

/// Gaussian NLL at the jointly best mode plus the mode cross entropy, with
/// its gradient with respect to the raw outputs of `dec`.
pub(crate) fn loss_and_output_grad(
    dec: &Decoded,
    truth: &[Vec<Point2>],
) -> (f64, usize, OutputGrad) {
    let (loss, best) = super::train::cmp_loss(&dec.futures, truth);
    let n = truth.len();
    let (lo, hi) = log_sigma_bounds();
    let norm = 1.0 / (n * T_F) as f64;
    let mut out = vec![vec![0.0; dec.out.first().map_or(0, Vec::len)]; n];
    for i in 0..n {
        for t in 0..T_F {
            let b = (best * T_F + t) * OUT_PER_STEP;
            let g = dec.futures.modes[best][i][t];
            let y = truth[i][t];
            let raw = &dec.out[i][b..b + OUT_PER_STEP];
            for (r, mu, sigma) in [(y.x - g.mu_x, 0, g.sigma_x), (y.y - g.mu_y, 2, g.sigma_y)] {
                let inv_var = 1.0 / (sigma * sigma);
                out[i][b + mu] = -r * inv_var * POS_SCALE * norm;
                let ls = raw[mu + 1];
                if ls > lo && ls < hi {
                    out[i][b + mu + 1] = (1.0 - r * r * inv_var) * norm;
                }
            }
        }
    }
    let mut logits = dec.futures.mode_probs.clone();
    logits[best] -= 1.0;
    (loss, best, OutputGrad { out, logits })
}

/// Accumulates parameter gradients into `g` for output gradient `dy`.
pub(crate) fn backward(params: &CmpModelParams, enc: &ContextEncoding, dec: &Decoded, dy: &OutputGrad, g: &mut [f64]) {
    let l = params.layout();
    let v = &params.values;
    let n = enc.h.len();
    let e_dim = l.embed_dim;

    let dpool = l.prob.backward(v, g, &dec.pool, &dy.logits);
    let mut dz: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let dd1 = l.dec2.backward(v, g, &dec.d1[i], &dy.out[i]);
            l.dec1.backward_tanh(v, g, &dec.z[i], &dec.d1[i], &dd1)
        })
        .collect();
    for dzi in &mut dz {
        for (a, b) in dzi.iter_mut().zip(&dpool) {
            *a += b / n as f64;
        }
    }

    let mut dp = vec![0.0; e_dim];
    let du: Vec<Vec<f64>> = dz
        .iter()
        .map(|dzi| {
            if l.fusion == Fusion::Late {
                add_into(&mut dp, &dzi[e_dim..]);
            }
            dzi[..e_dim].to_vec()
        })
        .collect();

    let scale = 1.0 / (e_dim as f64).sqrt();
    let mut de = du.clone();
    let mut dq = vec![vec![0.0; e_dim]; n];
    let mut dk = vec![vec![0.0; e_dim]; n];
    let mut dv = vec![vec![0.0; e_dim]; n];
    for i in 0..n {
        let da: Vec<f64> = (0..n).map(|j| dot(&du[i], &dec.val[j])).collect();
        for j in 0..n {
            for (a, b) in dv[j].iter_mut().zip(&du[i]) {
                *a += dec.att[i][j] * b;
            }
        }
        let mean: f64 = (0..n).map(|j| dec.att[i][j] * da[j]).sum();
        for j in 0..n {
            let ds = dec.att[i][j] * (da[j] - mean) * scale;
            for c in 0..e_dim {
                dq[i][c] += ds * dec.k[j][c];
                dk[j][c] += ds * dec.q[i][c];
            }
        }
    }
    for i in 0..n {
        add_into(&mut de[i], &l.query.backward(v, g, &dec.e[i], &dq[i]));
        add_into(&mut de[i], &l.key.backward(v, g, &dec.e[i], &dk[i]));
        add_into(&mut de[i], &l.value.backward(v, g, &dec.e[i], &dv[i]));
    }
    if l.fusion == Fusion::Early {
        for dei in &de {
            add_into(&mut dp, dei);
        }
    }
    for i in 0..n {
        let dh1 = l.hist2.backward_tanh(v, g, &enc.h1[i], &enc.h[i], &de[i]);
        l.hist1.backward_tanh(v, g, &enc.inputs[i], &enc.h1[i], &dh1);
    }
    let dp1 = l.plan2.backward_tanh(v, g, &dec.p1, &dec.p, &dp);
    l.plan1.backward_tanh(v, g, &dec.plan_in, &dec.p1, &dp1);
}
