//! Residual-gated graph convolution (GatedGCN).
//!
//! For an edge `j → i`: `ê = P x_i + Q x_j + R e`, `s = σ(ê)`,
//! `η = s / (Σ_{in-edges of i} s + ε)`, and
//! `x̂_i = ReLU(LN(U x_i + Σ η ⊙ V x_j))`. The edge output is `ê`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::act::{relu_backward, relu_forward, sigmoid, SIGMOID_FLOPS};
use crate::nn::{LayerNorm, LayerNormCache, Linear, ParamId, ParamStore};
use crate::profile;
use crate::tensor::Tensor;

pub const GATE_EPS: f64 = 1e-6;

/// FLOPs outside the five projections and the norm: per edge-channel the
/// three-way sum (2), sigmoid, denominator add (1) and weighted message (2);
/// per node-channel the division and the `U x` add.
pub fn gate_flops(l: usize, e: usize, d: usize) -> u64 {
    (e * d) as u64 * (2 + SIGMOID_FLOPS + 1 + 2) + 2 * (l * d) as u64
}

#[derive(Clone, Debug)]
pub struct GatedGcn {
    pub u: Linear,
    pub v: Linear,
    pub p: Linear,
    pub q: Linear,
    pub r: Linear,
    pub norm: LayerNorm,
    pub dim: usize,
}

pub struct GatedGcnCache {
    x: Tensor,
    e: Tensor,
    edges: Vec<(usize, usize)>,
    vx: Tensor,
    gate: Tensor,
    den: Tensor,
    agg: Tensor,
    ln: LayerNormCache,
    normed: Tensor,
}

impl GatedGcnCache {
    /// Smallest `|LN output|`, i.e. distance of the ReLU inputs from the kink.
    pub fn relu_margin(&self) -> f64 {
        self.normed
            .data()
            .iter()
            .map(|v| v.abs())
            .fold(f64::INFINITY, f64::min)
    }
}

impl GatedGcn {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut impl Rng) -> Self {
        let mut lin = |s: &str, store: &mut ParamStore| {
            Linear::new(store, &format!("{name}.{s}"), dim, dim, true, rng)
        };
        let (u, v, p, q, r) = (
            lin("u", store),
            lin("v", store),
            lin("p", store),
            lin("q", store),
            lin("r", store),
        );
        let norm = LayerNorm::new(store, &format!("{name}.norm"), dim);
        GatedGcn {
            u,
            v,
            p,
            q,
            r,
            norm,
            dim,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for l in [&self.u, &self.v, &self.p, &self.q, &self.r] {
            ids.push(l.w);
            ids.extend(l.b);
        }
        ids.extend([self.norm.gamma, self.norm.beta]);
        ids
    }

    /// Returns `(X̂, Ê)` and the cache for [`backward`](Self::backward).
    pub fn forward(
        &self,
        store: &ParamStore,
        x: &Tensor,
        e: &Tensor,
        edges: &[(usize, usize)],
    ) -> Result<(Tensor, Tensor, GatedGcnCache)> {
        let (l, d) = (x.rows(), self.dim);
        if let Some(&(s, t)) = edges.iter().find(|&&(s, t)| s >= l || t >= l) {
            return Err(Error::InvalidGraph {
                field: "edges",
                detail: format!("edge ({s}, {t}) has an endpoint outside 0..{l}"),
            });
        }
        if e.rows() != edges.len() {
            return Err(crate::error::shape_err(
                "gatedgcn",
                format!("{} edge embeddings for {} edges", e.rows(), edges.len()),
            ));
        }
        let ux = self.u.forward(store, x)?;
        let vx = self.v.forward(store, x)?;
        let px = self.p.forward(store, x)?;
        let qx = self.q.forward(store, x)?;
        let mut e_hat = self.r.forward(store, e)?;
        profile::add_flops(gate_flops(l, edges.len(), d));

        let mut gate = Tensor::zeros(&[edges.len(), d]);
        let mut den = Tensor::full(&[l, d], GATE_EPS);
        let mut num = Tensor::zeros(&[l, d]);
        for (k, &(src, dst)) in edges.iter().enumerate() {
            let er = e_hat.row_mut(k);
            for c in 0..d {
                er[c] += px.at(dst, c) + qx.at(src, c);
            }
            let er = e_hat.row(k).to_vec();
            let gr = gate.row_mut(k);
            for c in 0..d {
                gr[c] = sigmoid(er[c]);
            }
            let gr = gate.row(k).to_vec();
            for c in 0..d {
                den.row_mut(dst)[c] += gr[c];
                num.row_mut(dst)[c] += gr[c] * vx.at(src, c);
            }
        }
        let mut agg = num;
        for (a, q) in agg.data_mut().iter_mut().zip(den.data()) {
            *a /= q;
        }
        let pre = ux.add(&agg)?;
        let (normed, ln) = self.norm.forward(store, &pre)?;
        let out = relu_forward(&normed);
        let cache = GatedGcnCache {
            x: x.clone(),
            e: e.clone(),
            edges: edges.to_vec(),
            vx,
            gate,
            den,
            agg,
            ln,
            normed,
        };
        Ok((out, e_hat, cache))
    }

    /// Accumulates parameter gradients; returns `(dX, dE)`.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &GatedGcnCache,
        dx_hat: &Tensor,
        de_hat: &Tensor,
    ) -> (Tensor, Tensor) {
        let (l, d) = (cache.x.rows(), self.dim);
        let dnormed = relu_backward(&cache.normed, dx_hat);
        let dpre = self.norm.backward(store, &cache.ln, &dnormed);

        let mut dvx = Tensor::zeros(&[l, d]);
        let mut dpx = Tensor::zeros(&[l, d]);
        let mut dqx = Tensor::zeros(&[l, d]);
        let mut de = de_hat.clone();
        for (k, &(src, dst)) in cache.edges.iter().enumerate() {
            let g = cache.gate.row(k);
            let dagg = dpre.row(dst);
            let der = de.row_mut(k);
            for c in 0..d {
                let den = cache.den.at(dst, c);
                let dnum = dagg[c] / den;
                let dden = -dagg[c] * cache.agg.at(dst, c) / den;
                let ds = dnum * cache.vx.at(src, c) + dden;
                dvx.row_mut(src)[c] += dnum * g[c];
                der[c] += ds * g[c] * (1.0 - g[c]);
            }
            let der = de.row(k).to_vec();
            for c in 0..d {
                dpx.row_mut(dst)[c] += der[c];
                dqx.row_mut(src)[c] += der[c];
            }
        }
        let mut dx = self.u.backward(store, &cache.x, &dpre);
        for (lin, grad) in [(&self.v, &dvx), (&self.p, &dpx), (&self.q, &dqx)] {
            dx.add_assign(&lin.backward(store, &cache.x, grad))
                .expect("same shape");
        }
        let de_in = self.r.backward(store, &cache.e, &de);
        (dx, de_in)
    }
}
