use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{ComputeGraph, Gradients, NodeId};
use crate::nn::activation::PRELU_INIT;
use crate::nn::init::he_fill;
use crate::nn::spec::ModelSpec;
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Layer {
    Conv { kernel: usize, slope: Option<usize> },
    Dense { weight: usize, bias: usize, slope: Option<usize> },
}

/// Parameters of a [`ModelSpec`] plus the layer wiring.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    params: Vec<Tensor>,
    names: Vec<String>,
    trainable: Vec<bool>,
    layers: Vec<Layer>,
}

impl Model {
    /// He-initialized model: weights ~ N(0, 2/fan_in), biases 0, PReLU
    /// slopes 0.25.
    pub fn new(spec: ModelSpec, init_seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::substream(init_seed, rng::tag::INIT);
        let prelu = spec.activation.is_parametric();
        let mut m = Model { spec: spec.clone(), params: Vec::new(), names: Vec::new(), trainable: Vec::new(), layers: Vec::new() };
        let mut channels = 1;
        for (i, c) in spec.conv_layers.iter().enumerate() {
            let fan_in = channels * c.kernel * c.kernel;
            let mut k = Tensor::zeros(vec![c.filters, channels, c.kernel, c.kernel]);
            he_fill(k.data_mut(), fan_in, &mut rng)?;
            let kernel = m.push(format!("conv{i}.kernel"), k);
            let slope = prelu.then(|| m.push(format!("conv{i}.prelu"), Tensor::filled(vec![c.filters], PRELU_INIT)));
            m.layers.push(Layer::Conv { kernel, slope });
            channels = c.filters;
        }
        let last = spec.fc_layers.len() - 1;
        for (j, &width) in spec.fc_layers.iter().enumerate() {
            let fan_in = spec.fc_input(j)?;
            let mut w = Tensor::zeros(vec![width, fan_in]);
            he_fill(w.data_mut(), fan_in, &mut rng)?;
            let weight = m.push(format!("fc{j}.weight"), w);
            let bias = m.push(format!("fc{j}.bias"), Tensor::zeros(vec![width]));
            let slope = (prelu && j < last).then(|| m.push(format!("fc{j}.prelu"), Tensor::filled(vec![width], PRELU_INIT)));
            m.layers.push(Layer::Dense { weight, bias, slope });
        }
        Ok(m)
    }

    /// A model whose output is its final bias: every other parameter is
    /// zeroed and frozen.
    pub fn constant_predictor(spec: ModelSpec, value: f64) -> Result<Self> {
        let mut m = Model::new(spec, 0)?;
        let out_bias = match m.layers.last() {
            Some(Layer::Dense { bias, .. }) => *bias,
            _ => unreachable!("validated specs end with a dense layer"),
        };
        for (i, p) in m.params.iter_mut().enumerate() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
            m.trainable[i] = i == out_bias;
        }
        m.params[out_bias].data_mut()[0] = value;
        Ok(m)
    }

    fn push(&mut self, name: String, t: Tensor) -> usize {
        self.params.push(t);
        self.names.push(name);
        self.trainable.push(true);
        self.params.len() - 1
    }

    /// Parameter indices of each layer, input to output.
    pub(crate) fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn is_trainable(&self, index: usize) -> bool {
        self.trainable[index]
    }

    pub fn set_trainable(&mut self, index: usize, trainable: bool) {
        self.trainable[index] = trainable;
        if !trainable {
            self.params[index].clear_grad();
        }
    }

    pub fn has_trainable(&self) -> bool {
        self.trainable.iter().any(|&t| t)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Parameter index of the weight matrix of FC layer `layer`.
    pub fn fc_weight_index(&self, layer: usize) -> Option<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Dense { weight, .. } => Some(*weight),
                _ => None,
            })
            .nth(layer)
    }

    /// Records the forward pass for `[B,1,H,W]` inputs and `[B,A]` aux
    /// features; returns the `[B,1]` prediction node.
    pub fn forward(&self, g: &mut ComputeGraph, input: NodeId, aux: Option<NodeId>) -> Result<NodeId> {
        let want = self.spec.aux_mode.len();
        match aux {
            None if want > 0 => return Err(Error::Contract(format!("model expects {want} aux features"))),
            Some(a) if g.value(a).shape().get(1).copied() != Some(want) => {
                return Err(Error::Contract(format!(
                    "model expects {want} aux features, got shape {:?}",
                    g.value(a).shape()
                )))
            }
            _ => {}
        }
        let ids: Vec<NodeId> =
            self.params.iter().enumerate().map(|(i, p)| g.param(i, p, self.trainable[i])).collect();
        let act = self.spec.activation;
        let apply = |g: &mut ComputeGraph, x: NodeId, slope: Option<usize>| -> Result<NodeId> {
            match slope {
                Some(s) => g.prelu(x, ids[s]),
                None => Ok(g.activation(x, act)),
            }
        };
        let mut x = input;
        let mut dense = 0;
        let last_dense = self.spec.fc_layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            match *layer {
                Layer::Conv { kernel, slope } => {
                    x = g.conv2d(x, ids[kernel])?;
                    x = apply(g, x, slope)?;
                    let p = self.spec.pool_layers[li];
                    x = g.maxpool2d(x, p.window, p.stride)?;
                }
                Layer::Dense { weight, bias, slope } => {
                    if dense == 0 {
                        x = g.flatten(x)?;
                    }
                    if self.spec.aux_injection_layer == Some(dense) {
                        if let Some(a) = aux {
                            x = g.concat(x, a)?;
                        }
                    }
                    x = g.linear(x, ids[weight], ids[bias])?;
                    if dense < last_dense {
                        x = apply(g, x, slope)?;
                    }
                    dense += 1;
                }
            }
        }
        Ok(x)
    }

    /// Predictions for a batch of `[B,1,H,W]` inputs.
    pub fn predict(&self, inputs: &Tensor, aux: Option<&Tensor>) -> Result<Vec<f64>> {
        let mut g = ComputeGraph::new();
        let x = g.input(inputs.clone());
        let a = aux.map(|t| g.input(t.clone()));
        let out = self.forward(&mut g, x, a)?;
        Ok(g.value(out).data().to_vec())
    }

    /// Scalar prediction for one `[1,H,W]` cluster and its aux features.
    pub fn forward_with_aux(&self, cluster: &Tensor, aux: &[f64]) -> Result<f64> {
        let want = self.spec.aux_mode.len();
        if aux.len() != want {
            return Err(Error::Contract(format!("aux has {} entries, model expects {want}", aux.len())));
        }
        let n = self.spec.input_size;
        if cluster.len() != n * n {
            return Err(Error::Dimension { op: "forward", axis: "cluster", expected: n * n, found: cluster.len() });
        }
        let inputs = cluster.clone().reshape(vec![1, 1, n, n])?;
        let aux_t = (want > 0).then(|| Tensor::new(vec![1, want], aux.to_vec())).transpose()?;
        Ok(self.predict(&inputs, aux_t.as_ref())?[0])
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(Tensor::clear_grad);
    }

    /// Copies the parameter gradients of a finished backward pass into the
    /// parameters' grad buffers (replacing previous values).
    pub fn load_grads(&mut self, g: &ComputeGraph, grads: &Gradients) {
        self.zero_grads();
        for (i, gr) in g.param_grads(grads) {
            let buf = self.params[i].grad_mut();
            if gr.len() == buf.len() {
                buf.copy_from_slice(gr);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::Preset;

    #[test]
    fn built_models_match_spec_counts() {
        for p in Preset::ALL {
            let m = Model::new(p.spec(), 3).unwrap();
            assert_eq!(m.param_count(), p.reference_param_count());
        }
    }

    #[test]
    fn biases_zero_and_slopes_quarter() {
        let m = Model::new(Preset::Model3.spec(), 1).unwrap();
        for (name, t) in m.param_names().iter().zip(m.params()) {
            if name.ends_with("bias") {
                assert!(t.data().iter().all(|&v| v == 0.0));
            }
            if name.ends_with("prelu") {
                assert!(t.data().iter().all(|&v| v == 0.25));
            }
        }
    }

    #[test]
    fn same_seed_same_weights() {
        let a = Model::new(Preset::Model1.spec(), 42).unwrap();
        let b = Model::new(Preset::Model1.spec(), 42).unwrap();
        let c = Model::new(Preset::Model1.spec(), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn aux_length_is_checked() {
        let m = Model::new(Preset::Model2.spec(), 1).unwrap();
        let cluster = Tensor::filled(vec![1, 15, 15], 0.1);
        assert!(m.forward_with_aux(&cluster, &[]).is_err());
        assert!(m.forward_with_aux(&cluster, &[22.5]).unwrap().is_finite());
        let m4 = Model::new(Preset::Model4.spec(), 1).unwrap();
        assert!(m4.forward_with_aux(&cluster, &[0.1, -0.2]).unwrap().is_finite());
    }

    #[test]
    fn zero_aux_column_reproduces_plain_forward() {
        let plain = Model::new(Preset::Model1.spec(), 9).unwrap();
        let mut with_aux = Model::new(Preset::Model2.spec(), 9).unwrap();
        let w1 = plain.fc_weight_index(0).unwrap();
        let w2 = with_aux.fc_weight_index(0).unwrap();
        // copy every parameter and zero the aux column of the first FC layer
        for i in 0..plain.params().len() {
            if i == w2 {
                let src = plain.params()[w1].data();
                let dst = with_aux.params_mut()[w2].data_mut();
                for r in 0..9 {
                    dst[r * 577..r * 577 + 576].copy_from_slice(&src[r * 576..(r + 1) * 576]);
                    dst[r * 577 + 576] = 0.0;
                }
            } else {
                let src = plain.params()[i].data().to_vec();
                with_aux.params_mut()[i].data_mut().copy_from_slice(&src);
            }
        }
        let mut r = rng::from_seed(4);
        let mut cl = Tensor::zeros(vec![1, 15, 15]);
        he_fill(cl.data_mut(), 1, &mut r).unwrap();
        let a = plain.forward_with_aux(&cl, &[]).unwrap();
        let b = with_aux.forward_with_aux(&cl, &[123.0]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn constant_predictor_outputs_its_bias() {
        let m = Model::constant_predictor(Preset::Model1.spec(), 7.5).unwrap();
        let cl = Tensor::filled(vec![1, 15, 15], 3.0);
        assert_eq!(m.forward_with_aux(&cl, &[]).unwrap(), 7.5);
        assert_eq!((0..m.params().len()).filter(|&i| m.is_trainable(i)).count(), 1);
    }
}
