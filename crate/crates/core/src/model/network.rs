use super::config::{DropoutPlacement, HeadKind, ModelConfig, Pooling};
use super::loss::{argmax_rows, cross_entropy, mean_absolute_error};
use super::prepared::PreparedGraph;
use crate::error::{Error, Result};
use crate::gmb::{GmbTrace, GraphMambaBlock, PassOptions};
use crate::graph::Label;
use crate::mpnn::{GatedGcn, GatedGcnCache};
use crate::nn::{dropout_backward, dropout_forward, Linear, Mlp, MlpCache, ParamStore};
use crate::profile;
use crate::rng::{self, CountingRng};
use crate::tensor::Tensor;

const INIT: u64 = 0x1417;
const JITTER: u64 = 0x11;
const DROP_MPNN: u64 = 0x12;
const DROP_GMB: u64 = 0x13;

/// Coordinates of one forward pass; every random draw in the pass comes
/// from a stream derived from this key plus the layer and purpose.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
    pub epoch: u64,
    pub graph: u64,
}

impl StreamKey {
    pub fn stream(&self, layer: usize, purpose: u64) -> CountingRng {
        rng::stream(self.seed, &[self.epoch, self.graph, layer as u64, purpose])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    /// Dropout off; each GMB output is the mean of `m` jittered passes.
    Eval {
        m: usize,
    },
}

/// One layer of Algorithm 2.
#[derive(Clone, Debug)]
pub struct GmbLayer {
    pub mpnn: GatedGcn,
    pub gmb: GraphMambaBlock,
    pub mlp: Mlp,
}

struct LayerTrace {
    x: Tensor,
    mpnn: GatedGcnCache,
    gmb: Option<GmbTrace>,
    mask_m: Option<Tensor>,
    mask_g: Option<Tensor>,
    mlp: MlpCache,
}

/// Intermediates of a training-mode forward pass.
pub struct ModelTrace {
    layers: Vec<LayerTrace>,
    node_in: Tensor,
    edge_in: Tensor,
    head: MlpCache,
    num_nodes: usize,
}

impl ModelTrace {
    /// Smallest distance of any ReLU input from the kink at zero. Finite
    /// differences are only meaningful when this exceeds the probe step.
    pub fn relu_margin(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| [l.mpnn.relu_margin(), l.mlp.relu_margin()])
            .fold(self.head.relu_margin(), f64::min)
    }
}

#[derive(Clone, Debug)]
pub struct GraphMamba {
    pub cfg: ModelConfig,
    pub node_enc: Linear,
    pub edge_enc: Linear,
    pub layers: Vec<GmbLayer>,
    pub head: Mlp,
}

impl GraphMamba {
    /// Registers every parameter in `store`, initialized from `seed`.
    pub fn new(cfg: ModelConfig, store: &mut ParamStore, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng::stream(seed, &[INIT]);
        let d = cfg.hidden_dim;
        let node_enc = Linear::new(
            store,
            "encoder.node",
            cfg.node_input_dim(),
            d,
            true,
            &mut rng,
        );
        let edge_enc = Linear::new(store, "encoder.edge", cfg.edge_feat_dim, d, true, &mut rng);
        let layers = (0..cfg.num_layers)
            .map(|k| GmbLayer {
                mpnn: GatedGcn::new(store, &format!("layer{k}.mpnn"), d, &mut rng),
                gmb: GraphMambaBlock::new(store, &format!("layer{k}.gmb"), cfg.gmb(), &mut rng),
                mlp: Mlp::new(store, &format!("layer{k}.mlp"), d, 2 * d, d, &mut rng),
            })
            .collect::<Vec<_>>();
        if cfg.mpnn_only {
            for layer in &layers {
                let out = &layer.gmb.out;
                for id in std::iter::once(out.w).chain(out.b) {
                    store.value_mut(id).iter_mut().for_each(|v| *v = 0.0);
                    store.set_frozen(id, true);
                }
            }
        }
        let head = Mlp::new(store, "head", d, d, cfg.num_outputs, &mut rng);
        Ok(GraphMamba {
            cfg,
            node_enc,
            edge_enc,
            layers,
            head,
        })
    }

    fn pass_options(&self) -> PassOptions {
        PassOptions {
            noise: self.cfg.noise,
            n_bins: self.cfg.n_bins,
        }
    }

    /// Algorithm 2 lines 2–6 for layer `k`.
    fn layer_forward(
        &self,
        k: usize,
        store: &ParamStore,
        x: Tensor,
        e: &Tensor,
        pg: &PreparedGraph,
        mode: Mode,
        key: StreamKey,
    ) -> Result<(Tensor, Tensor, LayerTrace)> {
        let layer = &self.layers[k];
        let (xm_hat, e_next, mpnn) = layer.mpnn.forward(store, &x, e, &pg.edges)?;
        let mut jitter = key.stream(k, JITTER);
        let opts = self.pass_options();
        // with a frozen zero output projection the block returns exact zeros
        let (xg_hat, gmb) = if self.cfg.mpnn_only {
            (Tensor::zeros(x.shape()), None)
        } else {
            match mode {
                Mode::Train => {
                    let (y, trace) =
                        layer
                            .gmb
                            .forward(store, &x, &pg.heuristic, opts, &mut jitter)?;
                    (y, Some(trace))
                }
                Mode::Eval { m } => (
                    layer
                        .gmb
                        .inference_average(store, &x, &pg.heuristic, m, opts, &mut jitter)?,
                    None,
                ),
            }
        };
        let training = mode == Mode::Train;
        let rate = self.cfg.dropout;
        let residual = |hat: &Tensor, purpose: u64| -> Result<(Tensor, Option<Tensor>)> {
            let mut r = key.stream(k, purpose);
            profile::add_flops(x.len() as u64);
            match self.cfg.dropout_placement {
                DropoutPlacement::PostResidual => {
                    dropout_forward(&hat.add(&x)?, rate, &mut r, training)
                }
                DropoutPlacement::PreResidual => {
                    let (d, mask) = dropout_forward(hat, rate, &mut r, training)?;
                    Ok((d.add(&x)?, mask))
                }
            }
        };
        let (xm, mask_m) = residual(&xm_hat, DROP_MPNN)?;
        let (xg, mask_g) = residual(&xg_hat, DROP_GMB)?;
        profile::add_flops(x.len() as u64);
        let (x_next, mlp) = layer.mlp.forward(store, &xm.add(&xg)?)?;
        let trace = LayerTrace {
            x,
            mpnn,
            gmb,
            mask_m,
            mask_g,
            mlp,
        };
        Ok((x_next, e_next, trace))
    }

    fn pool(&self, x: &Tensor) -> Tensor {
        let (l, d) = (x.rows(), x.cols());
        profile::add_flops((l * d) as u64);
        let mut pooled = vec![0.0; d];
        for i in 0..l {
            for (p, v) in pooled.iter_mut().zip(x.row(i)) {
                *p += v;
            }
        }
        if self.cfg.pooling == Pooling::Mean {
            pooled.iter_mut().for_each(|p| *p /= l as f64);
        }
        Tensor::matrix(1, d, pooled).expect("shape")
    }

    /// Full forward pass. Graph heads return `[1×C]`, node heads `[L×C]`.
    pub fn forward(
        &self,
        store: &ParamStore,
        pg: &PreparedGraph,
        mode: Mode,
        key: StreamKey,
    ) -> Result<(Tensor, ModelTrace)> {
        if let Mode::Eval { m: 0 } = mode {
            return Err(Error::Config("m_eval must be at least 1".into()));
        }
        let mut x = self.node_enc.forward(store, &pg.node_in)?;
        let mut e = self.edge_enc.forward(store, &pg.edge_in)?;
        let mut layers = Vec::with_capacity(self.layers.len());
        for k in 0..self.layers.len() {
            let (xn, en, trace) = self.layer_forward(k, store, x, &e, pg, mode, key)?;
            x = xn;
            e = en;
            layers.push(trace);
        }
        let head_in = match self.cfg.head {
            HeadKind::NodeClass => x,
            HeadKind::GraphClass | HeadKind::GraphRegress => self.pool(&x),
        };
        let (out, head) = self.head.forward(store, &head_in)?;
        let trace = ModelTrace {
            layers,
            node_in: pg.node_in.clone(),
            edge_in: pg.edge_in.clone(),
            head,
            num_nodes: pg.num_nodes(),
        };
        Ok((out, trace))
    }

    /// Accumulates every parameter gradient from `dout`, the gradient of the
    /// loss with respect to the forward output.
    pub fn backward(&self, store: &mut ParamStore, trace: &ModelTrace, dout: &Tensor) {
        let dhead = self.head.backward(store, &trace.head, dout);
        let l = trace.num_nodes;
        let mut dx = match self.cfg.head {
            HeadKind::NodeClass => dhead,
            HeadKind::GraphClass | HeadKind::GraphRegress => {
                let scale = if self.cfg.pooling == Pooling::Mean {
                    1.0 / l as f64
                } else {
                    1.0
                };
                let row: Vec<f64> = dhead.row(0).iter().map(|g| g * scale).collect();
                let mut dx = Tensor::zeros(&[l, self.cfg.hidden_dim]);
                for i in 0..l {
                    dx.row_mut(i).copy_from_slice(&row);
                }
                dx
            }
        };
        let mut de = Tensor::zeros(&[trace.edge_in.rows(), self.cfg.hidden_dim]);
        for (layer, lt) in self.layers.iter().zip(&trace.layers).rev() {
            let ds = layer.mlp.backward(store, &lt.mlp, &dx);
            let (dxm_hat, dxm_res) = self.residual_backward(lt.mask_m.as_ref(), &ds);
            let (dxg_hat, dxg_res) = self.residual_backward(lt.mask_g.as_ref(), &ds);
            let (mut dx_prev, de_prev) = layer.mpnn.backward(store, &lt.mpnn, &dxm_hat, &de);
            if let Some(gt) = &lt.gmb {
                dx_prev
                    .add_assign(&layer.gmb.backward(store, gt, &dxg_hat))
                    .expect("shape");
            }
            dx_prev.add_assign(&dxm_res).expect("shape");
            dx_prev.add_assign(&dxg_res).expect("shape");
            debug_assert_eq!(dx_prev.shape(), lt.x.shape());
            dx = dx_prev;
            de = de_prev;
        }
        self.node_enc.backward(store, &trace.node_in, &dx);
        self.edge_enc.backward(store, &trace.edge_in, &de);
    }

    /// Returns the gradients reaching `(X̂, X)` for one residual branch.
    fn residual_backward(&self, mask: Option<&Tensor>, ds: &Tensor) -> (Tensor, Tensor) {
        match self.cfg.dropout_placement {
            DropoutPlacement::PostResidual => {
                let g = dropout_backward(mask, ds);
                (g.clone(), g)
            }
            DropoutPlacement::PreResidual => (dropout_backward(mask, ds), ds.clone()),
        }
    }

    /// Loss of `out` against the graph's label, with its gradient.
    pub fn loss(&self, out: &Tensor, label: Option<&Label>) -> Result<(f64, Tensor)> {
        match (self.cfg.head, label) {
            (HeadKind::GraphClass, Some(Label::Class(y))) => cross_entropy(out, &[*y]),
            (HeadKind::NodeClass, Some(Label::NodeClasses(ys))) => cross_entropy(out, ys),
            (HeadKind::GraphRegress, Some(Label::Values(v))) => mean_absolute_error(out, v),
            (head, label) => Err(Error::Config(format!(
                "head {head:?} cannot be trained on label {label:?}"
            ))),
        }
    }

    /// Forward, loss and backward for one graph in training mode.
    pub fn train_step(
        &self,
        store: &mut ParamStore,
        pg: &PreparedGraph,
        key: StreamKey,
    ) -> Result<f64> {
        let (out, trace) = self.forward(store, pg, Mode::Train, key)?;
        let (loss, dout) = self.loss(&out, pg.label.as_ref())?;
        self.backward(store, &trace, &dout);
        Ok(loss)
    }

    /// `(number correct, number scored)` for class heads, or
    /// `(sum of absolute errors, number of targets)` for regression.
    pub fn score(&self, out: &Tensor, label: Option<&Label>) -> Result<(f64, usize)> {
        match (self.cfg.head, label) {
            (HeadKind::GraphClass, Some(Label::Class(y))) => {
                Ok((f64::from(u8::from(argmax_rows(out)[0] == *y)), 1))
            }
            (HeadKind::NodeClass, Some(Label::NodeClasses(ys))) => {
                let hits = argmax_rows(out)
                    .iter()
                    .zip(ys)
                    .filter(|(p, y)| p == y)
                    .count();
                Ok((hits as f64, ys.len()))
            }
            (HeadKind::GraphRegress, Some(Label::Values(v))) => {
                let (mae, _) = mean_absolute_error(out, v)?;
                Ok((mae * v.len() as f64, v.len()))
            }
            (head, label) => Err(Error::Config(format!(
                "head {head:?} cannot be scored on label {label:?}"
            ))),
        }
    }

    /// Parameters of each layer's selective block, excluding its norm.
    pub fn mamba_params_per_block(&self, store: &ParamStore) -> Vec<usize> {
        self.layers
            .iter()
            .map(|l| l.gmb.mamba_param_count(store))
            .collect()
    }
}
