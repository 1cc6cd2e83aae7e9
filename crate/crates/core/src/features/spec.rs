//! Backbone architectures as data: an ordered layer list plus tap names.

/// What a layer computes. Tensor fields name entries in the weight archive.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    Conv {
        weight: String,
        bias: Option<String>,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool {
        k: usize,
        stride: usize,
    },
    AvgPool {
        k: usize,
        stride: usize,
    },
    /// Inference-mode batch norm folded into per-channel scale and shift.
    Affine {
        scale: String,
        shift: String,
    },
    /// Elementwise sum with the output of another layer.
    Add {
        other: String,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub name: String,
    /// Source layer; `None` means the preceding layer (or the image for the first).
    pub input: Option<String>,
    pub kind: LayerKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackboneSpec {
    pub id: String,
    pub layers: Vec<Layer>,
    /// Layers whose activations are exported by default.
    pub taps: Vec<String>,
}

pub const VGG16: &str = "vgg16";
pub const CLIP_RN50: &str = "clip-rn50";
pub const TOY: &str = "toy";

struct Builder {
    layers: Vec<Layer>,
    prefix: &'static str,
}

impl Builder {
    fn push(&mut self, name: &str, input: Option<&str>, kind: LayerKind) {
        self.layers.push(Layer {
            name: name.to_string(),
            input: input.map(str::to_string),
            kind,
        });
    }

    fn conv(&mut self, name: &str, input: Option<&str>, bias: bool, stride: usize, padding: usize) {
        let p = self.prefix;
        self.push(
            name,
            input,
            LayerKind::Conv {
                weight: format!("{p}{name}.weight"),
                bias: bias.then(|| format!("{p}{name}.bias")),
                stride,
                padding,
            },
        );
    }

    fn affine(&mut self, name: &str) {
        let p = self.prefix;
        self.push(
            name,
            None,
            LayerKind::Affine {
                scale: format!("{p}{name}.scale"),
                shift: format!("{p}{name}.shift"),
            },
        );
    }
}

impl BackboneSpec {
    pub fn by_id(id: &str) -> Option<Self> {
        match id {
            VGG16 => Some(Self::vgg16()),
            CLIP_RN50 => Some(Self::clip_rn50()),
            TOY => Some(Self::toy()),
            _ => None,
        }
    }

    /// The VGG16 convolutional stack, numbered like the usual `features`
    /// sequence (conv and ReLU each take an index). Taps 11, 13 and 15 are
    /// the ReLU outputs of the three third-block convolutions.
    pub fn vgg16() -> Self {
        let mut b = Builder {
            layers: Vec::new(),
            prefix: "features.",
        };
        let plan: &[&[usize]] = &[&[64, 64], &[128, 128], &[256, 256, 256], &[512, 512, 512], &[512, 512, 512]];
        let mut idx = 0;
        for block in plan {
            for _ in block.iter() {
                b.conv(&idx.to_string(), None, true, 1, 1);
                b.push(&(idx + 1).to_string(), None, LayerKind::Relu);
                idx += 2;
            }
            b.push(&idx.to_string(), None, LayerKind::MaxPool { k: 2, stride: 2 });
            idx += 1;
        }
        BackboneSpec {
            id: VGG16.into(),
            layers: b.layers,
            taps: vec!["11".into(), "13".into(), "15".into()],
        }
    }

    /// The modified ResNet-50 image trunk of CLIP up to the end of `layer4`:
    /// a three-convolution stem, and bottlenecks that downsample with average
    /// pooling. Batch norms appear as folded affine layers. Taps are the
    /// second convolution of every block in `layer3` and `layer4`, before
    /// its batch norm.
    pub fn clip_rn50() -> Self {
        let mut b = Builder {
            layers: Vec::new(),
            prefix: "visual.",
        };
        b.conv("conv1", None, false, 2, 1);
        b.affine("bn1");
        b.push("relu1", None, LayerKind::Relu);
        b.conv("conv2", None, false, 1, 1);
        b.affine("bn2");
        b.push("relu2", None, LayerKind::Relu);
        b.conv("conv3", None, false, 1, 1);
        b.affine("bn3");
        b.push("relu3", None, LayerKind::Relu);
        b.push("avgpool", None, LayerKind::AvgPool { k: 2, stride: 2 });

        let mut taps = Vec::new();
        let mut inplanes = 64;
        let mut prev = "avgpool".to_string();
        for (li, (planes, blocks, stride)) in [(64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2)].into_iter().enumerate() {
            for bi in 0..blocks {
                let s = if bi == 0 { stride } else { 1 };
                let n = |part: &str| format!("layer{}.{bi}.{part}", li + 1);
                b.conv(&n("conv1"), Some(&prev), false, 1, 0);
                b.affine(&n("bn1"));
                b.push(&n("relu1"), None, LayerKind::Relu);
                b.conv(&n("conv2"), None, false, 1, 1);
                if li >= 2 {
                    taps.push(n("conv2"));
                }
                b.affine(&n("bn2"));
                b.push(&n("relu2"), None, LayerKind::Relu);
                if s > 1 {
                    b.push(&n("avgpool"), None, LayerKind::AvgPool { k: s, stride: s });
                }
                b.conv(&n("conv3"), None, false, 1, 0);
                b.affine(&n("bn3"));
                let identity = if s > 1 || inplanes != planes * 4 {
                    let mut src = prev.clone();
                    if s > 1 {
                        b.push(&n("downsample.pool"), Some(&prev), LayerKind::AvgPool { k: s, stride: s });
                        src = n("downsample.pool");
                    }
                    b.conv(&n("downsample.0"), Some(&src), false, 1, 0);
                    b.affine(&n("downsample.1"));
                    n("downsample.1")
                } else {
                    prev.clone()
                };
                b.push(&n("add"), Some(&n("bn3")), LayerKind::Add { other: identity });
                b.push(&n("relu3"), None, LayerKind::Relu);
                prev = n("relu3");
                inplanes = planes * 4;
            }
        }
        BackboneSpec {
            id: CLIP_RN50.into(),
            layers: b.layers,
            taps,
        }
    }

    /// Two 3x3 convolutions with a 2x2 average pool between them; weights
    /// are generated from a seed rather than loaded.
    pub fn toy() -> Self {
        let mut b = Builder {
            layers: Vec::new(),
            prefix: "toy.",
        };
        b.conv("conv1", None, true, 1, 1);
        b.push("relu1", None, LayerKind::Relu);
        b.push("pool1", None, LayerKind::AvgPool { k: 2, stride: 2 });
        b.conv("conv2", None, true, 1, 1);
        b.push("relu2", None, LayerKind::Relu);
        BackboneSpec {
            id: TOY.into(),
            layers: b.layers,
            taps: vec!["relu1".into(), "relu2".into()],
        }
    }

    pub fn position(&self, layer: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == layer)
    }

    /// Archive tensors used by the layers up to the deepest default tap.
    pub fn required_tensors(&self) -> Vec<String> {
        let last = self.taps.iter().filter_map(|t| self.position(t)).max().unwrap_or(0);
        self.tensors_through(last)
    }

    pub fn tensors_through(&self, last: usize) -> Vec<String> {
        let mut out = Vec::new();
        for l in &self.layers[..=last.min(self.layers.len().saturating_sub(1))] {
            match &l.kind {
                LayerKind::Conv { weight, bias, .. } => {
                    out.push(weight.clone());
                    out.extend(bias.clone());
                }
                LayerKind::Affine { scale, shift } => {
                    out.push(scale.clone());
                    out.push(shift.clone());
                }
                _ => {}
            }
        }
        out
    }
}
