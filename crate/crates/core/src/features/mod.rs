//! Backbone weights, layer specs, and feature extraction.

mod archive;
mod spec;

pub use archive::{ArchiveMetadata, ArchiveTensor, BackboneMeta, WeightArchive, MAGIC, VERSION};
pub use spec::{BackboneSpec, Layer, LayerKind, CLIP_RN50, TOY, VGG16};

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::{Graph, NodeId, Shape, Tensor};

/// Activations captured at named taps, as graph nodes.
pub type TapNodes = Vec<(String, NodeId)>;

/// The feature maps of one tap. Each map contributes `n * h * w` vectors of
/// `channels` components.
#[derive(Clone, Debug, PartialEq)]
pub struct TapFeatures {
    pub name: String,
    pub maps: Vec<Tensor>,
}

impl TapFeatures {
    pub fn single(name: &str, map: Tensor) -> Self {
        TapFeatures {
            name: name.to_string(),
            maps: vec![map],
        }
    }

    pub fn channels(&self) -> usize {
        self.maps.first().map_or(0, |m| m.shape().c)
    }

    pub fn vector_count(&self) -> usize {
        self.maps.iter().map(|m| m.shape().n * m.shape().plane()).sum()
    }

    /// Flattens every map into contiguous vectors, `vector_count x channels`.
    pub fn vectors(&self) -> Vec<f32> {
        let c = self.channels();
        let mut out = Vec::with_capacity(self.vector_count() * c);
        for m in &self.maps {
            let s = m.shape();
            for n in 0..s.n {
                let base = n * s.c * s.plane();
                for p in 0..s.plane() {
                    out.extend((0..c).map(|k| m.data()[base + k * s.plane() + p]));
                }
            }
        }
        out
    }
}

/// A bag of feature vectors per tap, e.g. the features of one or more style images.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureSet {
    pub taps: Vec<TapFeatures>,
}

impl FeatureSet {
    pub fn from_nodes(g: &Graph, taps: &[(String, NodeId)]) -> Self {
        FeatureSet {
            taps: taps
                .iter()
                .map(|(name, id)| TapFeatures {
                    name: name.clone(),
                    maps: vec![g.value(*id).clone()],
                })
                .collect(),
        }
    }

    pub fn tap(&self, name: &str) -> Option<&TapFeatures> {
        self.taps.iter().find(|t| t.name == name)
    }

    pub fn vector_count(&self) -> usize {
        self.taps.iter().map(|t| t.vector_count()).sum()
    }
}

/// A backbone ready to run: its layer spec, weights, and preprocessing.
#[derive(Clone, Debug)]
pub struct Backbone {
    spec: BackboneSpec,
    weights: HashMap<String, Tensor>,
    meta: BackboneMeta,
    resize_to_native: bool,
}

impl Backbone {
    pub fn new(spec: BackboneSpec, weights: HashMap<String, Tensor>, meta: BackboneMeta) -> Result<Self> {
        if let Some(missing) = spec.required_tensors().into_iter().find(|n| !weights.contains_key(n)) {
            return Err(Error::IncompleteArchive(missing));
        }
        Ok(Backbone {
            spec,
            weights,
            meta,
            resize_to_native: true,
        })
    }

    pub fn from_archive(archive: &WeightArchive, id: &str) -> Result<Self> {
        let spec = BackboneSpec::by_id(id).ok_or_else(|| Error::config(format!("unknown backbone `{id}`")))?;
        let meta = archive.backbone_meta(id)?.clone();
        let mut weights = HashMap::new();
        for name in spec.tensors_through(spec.layers.len() - 1) {
            if let Some(t) = archive.get(&name) {
                weights.insert(name, t.clone());
            }
        }
        Self::new(spec, weights, meta)
    }

    /// The 4-channel toy backbone with He-initialized weights drawn from `seed`.
    pub fn toy(seed: u64) -> Self {
        Self::toy_with_width(seed, 4)
    }

    /// The toy backbone with `channels` feature channels per layer.
    pub fn toy_with_width(seed: u64, channels: usize) -> Self {
        let spec = BackboneSpec::toy();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x746f_795f_6e65_74);
        let mut weights = HashMap::new();
        let mut in_c = 3;
        for layer in &spec.layers {
            if let LayerKind::Conv { weight, bias, .. } = &layer.kind {
                let out_c = channels;
                let std = (2.0 / (in_c * 9) as f32).sqrt();
                let w = Tensor::from_fn(Shape::new(out_c, in_c, 3, 3), |_, _, _, _| {
                    let z: f32 = StandardNormal.sample(&mut rng);
                    z * std
                });
                weights.insert(weight.clone(), w);
                if let Some(b) = bias {
                    let bt = Tensor::from_fn(Shape::new(1, 1, 1, out_c), |_, _, _, _| {
                        let z: f32 = StandardNormal.sample(&mut rng);
                        0.05 * z
                    });
                    weights.insert(b.clone(), bt);
                }
                in_c = out_c;
            }
        }
        let meta = BackboneMeta {
            mean: [0.5; 3],
            std: [0.25; 3],
            input_resolution: 0,
        };
        Self::new(spec, weights, meta).expect("toy weights are complete")
    }

    /// Chooses between resizing inputs to the native resolution (default) and
    /// feeding them at their own size.
    pub fn with_resize_to_native(mut self, on: bool) -> Self {
        self.resize_to_native = on;
        self
    }

    pub fn weight_tensor(&self, name: &str) -> Option<&Tensor> {
        self.weights.get(name)
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn meta(&self) -> &BackboneMeta {
        &self.meta
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }

    /// Resizes to the backbone resolution when needed, then applies
    /// `(x - mean) / std` per channel.
    pub fn normalize_input(&self, g: &mut Graph, image: NodeId) -> Result<NodeId> {
        let s = g.shape(image);
        if s.c != 3 {
            return Err(Error::config(format!("backbone input needs 3 channels, got {s}")));
        }
        let r = self.meta.input_resolution;
        let mut x = image;
        if self.resize_to_native && r > 0 && (s.h != r || s.w != r) {
            x = g.resize_bilinear(x, r, r)?;
        }
        let scale: Vec<f32> = self.meta.std.iter().map(|s| 1.0 / s).collect();
        let shift: Vec<f32> = self.meta.mean.iter().zip(&self.meta.std).map(|(m, s)| -m / s).collect();
        g.channel_affine(x, &scale, &shift)
    }

    fn weight(&self, g: &mut Graph, name: &str) -> Result<NodeId> {
        let t = self
            .weights
            .get(name)
            .ok_or_else(|| Error::IncompleteArchive(name.to_string()))?;
        g.constant(t.clone())
    }

    /// Runs the layer stack on an already normalized input and returns the
    /// requested taps, in request order. Layers past the deepest tap are skipped.
    pub fn extract(&self, g: &mut Graph, input: NodeId, taps: &[&str], smooth: bool) -> Result<TapNodes> {
        let mut last = 0;
        for t in taps {
            let i = self
                .spec
                .position(t)
                .ok_or_else(|| Error::config(format!("backbone `{}` has no layer `{t}`", self.spec.id)))?;
            last = last.max(i);
        }
        if taps.is_empty() {
            return Ok(Vec::new());
        }
        let mut outputs: HashMap<&str, NodeId> = HashMap::new();
        let mut prev = input;
        for layer in &self.spec.layers[..=last] {
            let src = match &layer.input {
                None => prev,
                Some(name) => *outputs
                    .get(name.as_str())
                    .ok_or_else(|| Error::config(format!("layer `{}` reads unknown `{name}`", layer.name)))?,
            };
            let out = match &layer.kind {
                LayerKind::Conv {
                    weight,
                    bias,
                    stride,
                    padding,
                } => {
                    let w = self.weight(g, weight)?;
                    let b = bias.as_deref().map(|b| self.weight(g, b)).transpose()?;
                    g.conv2d(src, w, b, *stride, *padding)?
                }
                LayerKind::Relu => g.relu(src)?,
                LayerKind::MaxPool { k, stride } => g.pool2d(src, crate::tensor::PoolKind::Max, *k, *stride)?,
                LayerKind::AvgPool { k, stride } => g.pool2d(src, crate::tensor::PoolKind::Avg, *k, *stride)?,
                LayerKind::Affine { scale, shift } => {
                    let sc = self.weights.get(scale).ok_or_else(|| Error::IncompleteArchive(scale.clone()))?;
                    let sh = self.weights.get(shift).ok_or_else(|| Error::IncompleteArchive(shift.clone()))?;
                    g.channel_affine(src, sc.data(), sh.data())?
                }
                LayerKind::Add { other } => {
                    let o = *outputs
                        .get(other.as_str())
                        .ok_or_else(|| Error::config(format!("layer `{}` adds unknown `{other}`", layer.name)))?;
                    g.add(src, o)?
                }
            };
            outputs.insert(layer.name.as_str(), out);
            prev = out;
        }
        taps.iter()
            .map(|t| {
                let node = outputs[t];
                let node = if smooth { g.softmax_channels(node)? } else { node };
                Ok((t.to_string(), node))
            })
            .collect()
    }

    /// Normalizes `image` and extracts the default taps.
    pub fn features(&self, g: &mut Graph, image: NodeId, smooth: bool) -> Result<TapNodes> {
        let x = self.normalize_input(g, image)?;
        let taps: Vec<&str> = self.spec.taps.iter().map(String::as_str).collect();
        self.extract(g, x, &taps, smooth)
    }

    /// Forward-only features of a constant image.
    pub fn feature_set(&self, image: &Tensor, smooth: bool) -> Result<FeatureSet> {
        let mut g = Graph::new();
        let x = g.constant(image.clone())?;
        let taps = self.features(&mut g, x, smooth)?;
        Ok(FeatureSet::from_nodes(&g, &taps))
    }
}
