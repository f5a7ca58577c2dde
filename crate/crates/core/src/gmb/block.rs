use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sort::{jitter_heuristic, make_sort_plan, random_bins, SortPlan};
use crate::error::{shape_err, Result};
use crate::nn::act::{
    silu_backward, silu_forward, softplus_backward, softplus_forward, softplus_inverse,
};
use crate::nn::{CausalConv, LayerNorm, LayerNormCache, Linear, ParamId, ParamStore};
use crate::profile;
use crate::ssm::{
    a_from_log, discretize, s4d_real_a_log, selective_scan_bwd, selective_scan_fwd, Discretization,
    Discretized, ScanInputs, ScanOutputs,
};
use crate::tensor::Tensor;

/// How `Δ` is produced from the convolved sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaProjection {
    /// `D′ → r → D′` with `r = dt_rank` (default `⌈D/16⌉`).
    #[default]
    LowRank,
    /// A single dense `D′ → D′` map.
    Dense,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmbConfig {
    pub dim: usize,
    pub expand: usize,
    pub state_dim: usize,
    pub conv_kernel: usize,
    pub delta_projection: DeltaProjection,
    pub dt_rank: Option<usize>,
    pub dt_min: f64,
    pub dt_max: f64,
    pub discretization: Discretization,
    pub d_skip: bool,
}

impl Default for GmbConfig {
    fn default() -> Self {
        GmbConfig {
            dim: 96,
            expand: 1,
            state_dim: 16,
            conv_kernel: 4,
            delta_projection: DeltaProjection::LowRank,
            dt_rank: None,
            dt_min: 1e-3,
            dt_max: 1e-1,
            discretization: Discretization::Zoh,
            d_skip: true,
        }
    }
}

impl GmbConfig {
    pub fn inner(&self) -> usize {
        self.expand * self.dim
    }

    pub fn rank(&self) -> usize {
        self.dt_rank.unwrap_or(self.dim.div_ceil(16)).max(1)
    }
}

#[derive(Clone, Debug)]
enum DeltaProj {
    LowRank { down: Linear, up: Linear },
    Dense(Linear),
}

impl DeltaProj {
    fn out_bias(&self) -> ParamId {
        match self {
            DeltaProj::LowRank { up, .. } => up.b,
            DeltaProj::Dense(l) => l.b,
        }
        .expect("Δ projection has a bias")
    }
}

/// Learnable weights of one block (Algorithm 1 lines 5–16), stored in a
/// shared [`ParamStore`].
#[derive(Clone, Debug)]
pub struct GraphMambaBlock {
    pub cfg: GmbConfig,
    pub norm: LayerNorm,
    pub in_x: Linear,
    pub in_gate: Linear,
    pub conv: CausalConv,
    pub proj_b: Linear,
    pub proj_c: Linear,
    delta: DeltaProj,
    pub a_log: ParamId,
    pub d_skip: Option<ParamId>,
    pub out: Linear,
}

/// Per-sequence intermediates kept for the backward pass.
pub struct SequenceCache {
    ln: LayerNormCache,
    xn: Tensor,
    xin: Tensor,
    gate_pre: Tensor,
    gate: Tensor,
    conv_pre: Tensor,
    rank: Option<Tensor>,
    delta_pre: Tensor,
    scan_in: ScanInputs,
    disc: Discretized,
    scan_out: ScanOutputs,
    a: Vec<f64>,
    gated: Tensor,
}

/// One scanned subsequence: the nodes of a bin and their ordering.
pub struct Segment {
    pub nodes: Vec<usize>,
    pub plan: SortPlan,
    cache: SequenceCache,
}

/// Everything [`GraphMambaBlock::backward`] needs from a forward pass.
pub struct GmbTrace {
    pub segments: Vec<Segment>,
    rows: usize,
}

/// Randomness and partitioning for one pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PassOptions {
    pub noise: bool,
    pub n_bins: usize,
}

impl Default for PassOptions {
    fn default() -> Self {
        PassOptions {
            noise: true,
            n_bins: 1,
        }
    }
}

impl GraphMambaBlock {
    pub fn new(store: &mut ParamStore, name: &str, cfg: GmbConfig, rng: &mut impl Rng) -> Self {
        let (d, di, n) = (cfg.dim, cfg.inner(), cfg.state_dim);
        let norm = LayerNorm::new(store, &format!("{name}.norm"), d);
        let in_x = Linear::new(store, &format!("{name}.in_x"), d, di, true, rng);
        let in_gate = Linear::new(store, &format!("{name}.in_gate"), d, di, true, rng);
        let conv = CausalConv::new(store, &format!("{name}.conv"), di, cfg.conv_kernel, rng);
        let proj_b = Linear::new(store, &format!("{name}.proj_b"), di, n, false, rng);
        let proj_c = Linear::new(store, &format!("{name}.proj_c"), di, n, false, rng);
        let delta = match cfg.delta_projection {
            DeltaProjection::LowRank => {
                let r = cfg.rank();
                DeltaProj::LowRank {
                    down: Linear::new(store, &format!("{name}.dt_down"), di, r, false, rng),
                    up: Linear::new(store, &format!("{name}.dt_up"), r, di, true, rng),
                }
            }
            DeltaProjection::Dense => {
                DeltaProj::Dense(Linear::new(store, &format!("{name}.dt"), di, di, true, rng))
            }
        };
        // softplus(bias) = exp(U[ln dt_min, ln dt_max])
        let (lo, hi) = (cfg.dt_min.ln(), cfg.dt_max.ln());
        for b in store.value_mut(delta.out_bias()) {
            *b = softplus_inverse(rng.gen_range(lo..hi).exp());
        }
        let a_log = store.add(
            format!("{name}.a_log"),
            Tensor::from_vec(&[di, n], s4d_real_a_log(di, n)).expect("shape"),
            false,
        );
        let d_skip = cfg
            .d_skip
            .then(|| store.add(format!("{name}.d_skip"), Tensor::full(&[di], 1.0), false));
        let out = Linear::new(store, &format!("{name}.out"), di, d, true, rng);
        GraphMambaBlock {
            cfg,
            norm,
            in_x,
            in_gate,
            conv,
            proj_b,
            proj_c,
            delta,
            a_log,
            d_skip,
            out,
        }
    }

    /// Parameters of the selective block itself, excluding the input norm.
    pub fn mamba_param_count(&self, store: &ParamStore) -> usize {
        self.param_ids()
            .into_iter()
            .filter(|&id| id != self.norm.gamma && id != self.norm.beta)
            .map(|id| store.value(id).len())
            .sum()
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.norm.gamma, self.norm.beta];
        let linear = |l: &Linear, ids: &mut Vec<ParamId>| {
            ids.push(l.w);
            ids.extend(l.b);
        };
        linear(&self.in_x, &mut ids);
        linear(&self.in_gate, &mut ids);
        ids.extend([self.conv.kernel, self.conv.bias]);
        linear(&self.proj_b, &mut ids);
        linear(&self.proj_c, &mut ids);
        match &self.delta {
            DeltaProj::LowRank { down, up } => {
                linear(down, &mut ids);
                linear(up, &mut ids);
            }
            DeltaProj::Dense(l) => linear(l, &mut ids),
        }
        ids.push(self.a_log);
        ids.extend(self.d_skip);
        linear(&self.out, &mut ids);
        ids
    }

    /// Lines 5–16 on an already ordered sequence `[L×D]`.
    pub fn forward_sequence(
        &self,
        store: &ParamStore,
        xs: &Tensor,
    ) -> Result<(Tensor, SequenceCache)> {
        let (xn, ln) = self.norm.forward(store, xs)?;
        let xin = self.in_x.forward(store, &xn)?;
        let gate_pre = self.in_gate.forward(store, &xn)?;
        let gate = silu_forward(&gate_pre);
        let conv_pre = self.conv.forward(store, &xin)?;
        let xssm = silu_forward(&conv_pre);
        let b = self.proj_b.forward(store, &xssm)?;
        let c = self.proj_c.forward(store, &xssm)?;
        let (rank, delta_pre) = match &self.delta {
            DeltaProj::LowRank { down, up } => {
                let r = down.forward(store, &xssm)?;
                let pre = up.forward(store, &r)?;
                (Some(r), pre)
            }
            DeltaProj::Dense(l) => (None, l.forward(store, &xssm)?),
        };
        let delta = softplus_forward(&delta_pre);
        let a = a_from_log(store.value(self.a_log));
        profile::add_flops((a.len() as u64) * (profile::TRANSCENDENTAL + 1));
        let scan_in = ScanInputs {
            x: xssm,
            delta,
            b,
            c,
        };
        scan_in.validate()?;
        let disc = discretize(&scan_in.delta, &a, &scan_in.b, self.cfg.discretization)?;
        let skip = self.d_skip.map(|id| store.value(id));
        let scan_out = selective_scan_fwd(&scan_in, &disc, skip);
        profile::add_flops(scan_out.y.len() as u64);
        let gated = scan_out.y.mul(&gate)?;
        let out = self.out.forward(store, &gated)?;
        let cache = SequenceCache {
            ln,
            xn,
            xin,
            gate_pre,
            gate,
            conv_pre,
            rank,
            delta_pre,
            scan_in,
            disc,
            scan_out,
            a,
            gated,
        };
        Ok((out, cache))
    }

    /// Accumulates parameter gradients and returns the gradient with respect
    /// to the ordered input sequence.
    pub fn backward_sequence(
        &self,
        store: &mut ParamStore,
        cache: &SequenceCache,
        dout: &Tensor,
    ) -> Tensor {
        let dgated = self.out.backward(store, &cache.gated, dout);
        let y = &cache.scan_out.y;
        let dy = dgated.mul(&cache.gate).expect("same shape");
        let dgate = dgated.mul(y).expect("same shape");
        let dgate_pre = silu_backward(&cache.gate_pre, &dgate);

        let skip = self.d_skip.map(|id| store.value(id).to_vec());
        let g = selective_scan_bwd(
            &cache.scan_in,
            &cache.disc,
            &cache.scan_out,
            &cache.a,
            skip.as_deref(),
            &dy,
        );
        for (dst, v) in store.grad_mut(self.a_log).iter_mut().zip(&g.da_log) {
            *dst += v;
        }
        if let (Some(id), Some(dd)) = (self.d_skip, &g.dd_skip) {
            for (dst, v) in store.grad_mut(id).iter_mut().zip(dd) {
                *dst += v;
            }
        }
        let xssm = &cache.scan_in.x;
        let ddelta_pre = softplus_backward(&cache.delta_pre, &g.ddelta);
        let mut dxssm = g.dx;
        let from_delta = match &self.delta {
            DeltaProj::LowRank { down, up } => {
                let rank = cache.rank.as_ref().expect("low-rank cache");
                let dr = up.backward(store, rank, &ddelta_pre);
                down.backward(store, xssm, &dr)
            }
            DeltaProj::Dense(l) => l.backward(store, xssm, &ddelta_pre),
        };
        dxssm.add_assign(&from_delta).expect("same shape");
        dxssm
            .add_assign(&self.proj_b.backward(store, xssm, &g.db))
            .expect("same shape");
        dxssm
            .add_assign(&self.proj_c.backward(store, xssm, &g.dc))
            .expect("same shape");
        let dconv_pre = silu_backward(&cache.conv_pre, &dxssm);
        let dxin = self.conv.backward(store, &cache.xin, &dconv_pre);
        let mut dxn = self.in_x.backward(store, &cache.xn, &dxin);
        dxn.add_assign(&self.in_gate.backward(store, &cache.xn, &dgate_pre))
            .expect("same shape");
        self.norm.backward(store, &cache.ln, &dxn)
    }

    /// Algorithm 1: jitter, sort, scan, reverse sort, optionally inside
    /// `n_bins` random bins that are processed independently.
    pub fn forward(
        &self,
        store: &ParamStore,
        x: &Tensor,
        h: &[f64],
        opts: PassOptions,
        rng: &mut impl Rng,
    ) -> Result<(Tensor, GmbTrace)> {
        let l = x.rows();
        if h.len() != l || x.cols() != self.cfg.dim {
            return Err(shape_err(
                "gmb",
                format!(
                    "X is {:?}, heuristic has {} entries, D = {}",
                    x.shape(),
                    h.len(),
                    self.cfg.dim
                ),
            ));
        }
        let bins = random_bins(l, opts.n_bins, rng)?;
        let mut out = Tensor::zeros(&[l, self.cfg.dim]);
        let mut segments = Vec::with_capacity(bins.len());
        for nodes in bins {
            let hb: Vec<f64> = nodes.iter().map(|&i| h[i]).collect();
            let plan = make_sort_plan(&jitter_heuristic(&hb, opts.noise, rng));
            let xs = x.gather_rows(&nodes).gather_rows(&plan.sorted);
            let (ys, cache) = self.forward_sequence(store, &xs)?;
            let yb = ys.gather_rows(&plan.reverse);
            for (r, &i) in nodes.iter().enumerate() {
                out.row_mut(i).copy_from_slice(yb.row(r));
            }
            segments.push(Segment { nodes, plan, cache });
        }
        Ok((out, GmbTrace { segments, rows: l }))
    }

    pub fn backward(&self, store: &mut ParamStore, trace: &GmbTrace, dout: &Tensor) -> Tensor {
        let mut dx = Tensor::zeros(&[trace.rows, self.cfg.dim]);
        for seg in &trace.segments {
            let dys = dout.gather_rows(&seg.nodes).gather_rows(&seg.plan.sorted);
            let dxs = self.backward_sequence(store, &seg.cache, &dys);
            let dxb = dxs.gather_rows(&seg.plan.reverse);
            for (r, &i) in seg.nodes.iter().enumerate() {
                dx.row_mut(i).copy_from_slice(dxb.row(r));
            }
        }
        dx
    }

    /// Mean of `m` passes with independent jitter draws from `rng`.
    pub fn inference_average(
        &self,
        store: &ParamStore,
        x: &Tensor,
        h: &[f64],
        m: usize,
        opts: PassOptions,
        rng: &mut impl Rng,
    ) -> Result<Tensor> {
        if m == 0 {
            return Err(crate::Error::Config("m_eval must be at least 1".into()));
        }
        let mut acc = self.forward(store, x, h, opts, rng)?.0;
        for _ in 1..m {
            acc.add_assign(&self.forward(store, x, h, opts, rng)?.0)?;
        }
        if m > 1 {
            profile::add_flops(acc.len() as u64 * m as u64);
            acc = acc.scale(1.0 / m as f64);
        }
        Ok(acc)
    }
}
