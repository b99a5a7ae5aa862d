use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tape, Tensor, Var};

/// Number of MLPs inside one updating layer (node updates 1-4, edge
/// updates 5-7).
pub const MLPS_PER_LAYER: usize = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    /// `[out, in]`
    pub weight: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
    /// ReLU after the last linear layer as well.
    pub final_relu: bool,
}

impl<T: Scalar> Mlp<T> {
    fn init(rng: &mut ChaCha8Rng, dims: &[usize], final_relu: bool) -> Self {
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| T::from_f64_lossy(rng.random_range(-bound..=bound)))
                    .collect();
                Dense {
                    weight: Tensor::new(vec![fan_out, fan_in], data).expect("weight shape"),
                    bias: Tensor::zeros(&[fan_out]),
                }
            })
            .collect();
        Self { layers, final_relu }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.shape()[1]
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |d| d.weight.shape()[0])
    }

    fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|d| Dense {
                    weight: d.weight.cast(),
                    bias: d.bias.cast(),
                })
                .collect(),
            final_relu: self.final_relu,
        }
    }
}

/// The seven MLPs of one updating layer, `mlps[i]` being MLP_{i+1}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams<T> {
    pub mlps: Vec<Mlp<T>>,
}

/// All learnable weights. The count depends only on the config, never on
/// the number of BSs or UEs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub pre_bs: Mlp<T>,
    pub pre_ue: Mlp<T>,
    pub pre_edge: Mlp<T>,
    pub layers: Vec<LayerParams<T>>,
    pub post_edge: Mlp<T>,
}

fn mlp_dims(input: usize, width: usize, output: usize, depth: usize) -> Vec<usize> {
    let mut dims = vec![input];
    dims.extend(std::iter::repeat_n(width, depth - 1));
    dims.push(output);
    dims
}

/// Glorot-uniform weights, zero biases; deterministic per seed.
pub fn init_params<T: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<ModelParams<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, depth) = (cfg.width, cfg.mlp_depth);
    let node_in = 1;
    let edge_in = 2 * cfg.antennas;
    let pre_bs = Mlp::init(&mut rng, &mlp_dims(node_in, d, d, depth), true);
    let pre_ue = Mlp::init(&mut rng, &mlp_dims(node_in, d, d, depth), true);
    let pre_edge = Mlp::init(&mut rng, &mlp_dims(edge_in, d, d, depth), true);
    let layers = (0..cfg.layers)
        .map(|_| LayerParams {
            mlps: (0..MLPS_PER_LAYER)
                .map(|_| Mlp::init(&mut rng, &mlp_dims(2 * d, d, d, depth), true))
                .collect(),
        })
        .collect();
    let post_edge = Mlp::init(&mut rng, &mlp_dims(d, d, edge_in, depth), false);
    Ok(ModelParams {
        config: cfg.clone(),
        pre_bs,
        pre_ue,
        pre_edge,
        layers,
        post_edge,
    })
}

impl<T: Scalar> ModelParams<T> {
    fn mlps(&self) -> Vec<(String, &Mlp<T>)> {
        let mut out = vec![
            ("pre_bs".to_string(), &self.pre_bs),
            ("pre_ue".to_string(), &self.pre_ue),
            ("pre_edge".to_string(), &self.pre_edge),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            for (i, mlp) in layer.mlps.iter().enumerate() {
                out.push((format!("layer{}.mlp{}", l + 1, i + 1), mlp));
            }
        }
        out.push(("post_edge".to_string(), &self.post_edge));
        out
    }

    /// Every tensor with a stable name, in canonical order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (name, mlp) in self.mlps() {
            for (i, dense) in mlp.layers.iter().enumerate() {
                out.push((format!("{name}.linear{i}.weight"), &dense.weight));
                out.push((format!("{name}.linear{i}.bias"), &dense.bias));
            }
        }
        out
    }

    /// Mutable tensors in the same order as [`Self::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut mlps: Vec<&mut Mlp<T>> = vec![&mut self.pre_bs, &mut self.pre_ue, &mut self.pre_edge];
        for layer in &mut self.layers {
            mlps.extend(layer.mlps.iter_mut());
        }
        mlps.push(&mut self.post_edge);
        mlps.into_iter()
            .flat_map(|mlp| mlp.layers.iter_mut().flat_map(|d| [&mut d.weight, &mut d.bias]))
            .collect()
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    /// Flattened copy of every parameter in canonical order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.to_f64_vec()).collect()
    }

    /// Overwrites every parameter from a flat vector.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_parameters() {
            return Err(Error::shape(
                "assign_flat",
                format!("{} values for {} parameters", flat.len(), self.num_parameters()),
            ));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            for v in t.data_mut() {
                *v = T::from_f64_lossy(flat[offset]);
                offset += 1;
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            pre_bs: self.pre_bs.cast(),
            pre_ue: self.pre_ue.cast(),
            pre_edge: self.pre_edge.cast(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    mlps: l.mlps.iter().map(Mlp::cast).collect(),
                })
                .collect(),
            post_edge: self.post_edge.cast(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    /// Records every parameter as a tape leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> BoundParams {
        let mut leaves = Vec::new();
        let mut bind_mlp = |mlp: &Mlp<T>| -> BoundMlp {
            let layers = mlp
                .layers
                .iter()
                .map(|d| {
                    let w = tape.leaf(d.weight.clone());
                    let b = tape.leaf(d.bias.clone());
                    leaves.push(w);
                    leaves.push(b);
                    (w, b)
                })
                .collect();
            BoundMlp {
                layers,
                final_relu: mlp.final_relu,
            }
        };
        let pre_bs = bind_mlp(&self.pre_bs);
        let pre_ue = bind_mlp(&self.pre_ue);
        let pre_edge = bind_mlp(&self.pre_edge);
        let layers = self
            .layers
            .iter()
            .map(|l| BoundLayer {
                mlps: l.mlps.iter().map(&mut bind_mlp).collect(),
            })
            .collect();
        let post_edge = bind_mlp(&self.post_edge);
        BoundParams {
            pre_bs,
            pre_ue,
            pre_edge,
            layers,
            post_edge,
            leaves,
        }
    }
}

/// An MLP whose weights live on a tape.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    pub layers: Vec<(Var, Var)>,
    pub final_relu: bool,
}

impl BoundMlp {
    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            h = tape.linear(h, w, b)?;
            if i < last || self.final_relu {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}

#[derive(Clone, Debug)]
pub struct BoundLayer {
    pub mlps: Vec<BoundMlp>,
}

impl BoundLayer {
    /// MLP_i, 1-based.
    pub fn mlp(&self, i: usize) -> &BoundMlp {
        &self.mlps[i - 1]
    }
}

/// [`ModelParams`] recorded on a tape.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub pre_bs: BoundMlp,
    pub pre_ue: BoundMlp,
    pub pre_edge: BoundMlp,
    pub layers: Vec<BoundLayer>,
    pub post_edge: BoundMlp,
    /// Leaves in canonical parameter order.
    pub leaves: Vec<Var>,
}
