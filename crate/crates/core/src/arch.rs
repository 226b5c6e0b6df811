//! The four model variants: camera-only, lidar-only, dual (middle fusion by
//! concatenation), and channel-gated dual. Each modality branch is five valid
//! convolutions with ReLU; the head is dense(hidden, ReLU) -> dense(1,
//! linear). The gated variant adds a parallel gating subnetwork (its own conv
//! blocks plus one dense layer) that predicts 2x64 sigmoid gates, one per
//! output channel of the two steering conv blocks.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    self, apply_channel_gates, channel_gates_backward, concat, concat_backward, dense_forward,
    relu, relu_backward, sigmoid, sigmoid_backward, LayerSpec,
};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const GATE_COUNT: usize = 128;
const BLOCK_LAYERS: usize = 5;
const FINAL_BLOCK_CHANNELS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Camera,
    Lidar,
    Dual,
    ChannelGatedDual,
}

impl Variant {
    pub fn id(self) -> &'static str {
        match self {
            Variant::Camera => "camera",
            Variant::Lidar => "lidar",
            Variant::Dual => "dual",
            Variant::ChannelGatedDual => "cgdual",
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "camera" => Ok(Variant::Camera),
            "lidar" => Ok(Variant::Lidar),
            "dual" => Ok(Variant::Dual),
            "cgdual" => Ok(Variant::ChannelGatedDual),
            other => Err(Error::InvalidArgument(format!(
                "unknown architecture id {other:?} (expected camera|lidar|dual|cgdual)"
            ))),
        }
    }

    pub fn all() -> [Variant; 4] {
        [
            Variant::Camera,
            Variant::Lidar,
            Variant::Dual,
            Variant::ChannelGatedDual,
        ]
    }

    pub fn uses_camera(self) -> bool {
        !matches!(self, Variant::Lidar)
    }

    pub fn uses_lidar(self) -> bool {
        !matches!(self, Variant::Camera)
    }

    pub fn gated(self) -> bool {
        matches!(self, Variant::ChannelGatedDual)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerGeom {
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
}

/// One modality branch: input extents plus five conv layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlockSpec {
    pub input: [usize; 3],
    pub layers: Vec<ConvLayerGeom>,
}

impl ConvBlockSpec {
    /// Per-layer output shapes, rejecting impossible geometry with the first
    /// failing layer named.
    pub fn shapes(&self) -> Result<Vec<[usize; 3]>> {
        if self.layers.len() != BLOCK_LAYERS {
            return Err(Error::BadGeometry {
                layer: "conv block".into(),
                reason: format!("expected {BLOCK_LAYERS} conv layers, got {}", self.layers.len()),
            });
        }
        if self.layers.last().unwrap().out_channels != FINAL_BLOCK_CHANNELS {
            return Err(Error::BadGeometry {
                layer: "conv block layer 5".into(),
                reason: format!(
                    "final conv layer must have {FINAL_BLOCK_CHANNELS} output channels (gate count)"
                ),
            });
        }
        let mut shape = self.input.to_vec();
        let mut out = Vec::with_capacity(BLOCK_LAYERS);
        for (i, l) in self.layers.iter().enumerate() {
            let spec = LayerSpec::Conv2d {
                in_channels: shape[0],
                out_channels: l.out_channels,
                kernel: l.kernel,
                stride: l.stride,
            };
            shape = spec.output_shape(&shape).map_err(|e| Error::BadGeometry {
                layer: format!("conv layer {} of block", i + 1),
                reason: e.to_string(),
            })?;
            out.push([shape[0], shape[1], shape[2]]);
        }
        Ok(out)
    }

    pub fn flat_len(&self) -> Result<usize> {
        let last = *self.shapes()?.last().unwrap();
        Ok(last[0] * last[1] * last[2])
    }
}

/// Complete conv geometry for both modalities plus the head width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub name: String,
    pub camera: ConvBlockSpec,
    pub lidar: ConvBlockSpec,
    pub hidden: usize,
}

fn layer(out_channels: usize, kernel: (usize, usize), stride: (usize, usize)) -> ConvLayerGeom {
    ConvLayerGeom {
        out_channels,
        kernel,
        stride,
    }
}

impl Geometry {
    /// Full-resolution geometry: camera 3x63x306 and lidar 4x11x310 inputs,
    /// flattened branch outputs 1984 and 2048.
    pub fn full() -> Self {
        Geometry {
            name: "full".into(),
            camera: ConvBlockSpec {
                input: [3, 63, 306],
                layers: vec![
                    layer(24, (5, 5), (2, 2)),
                    layer(36, (5, 5), (2, 2)),
                    layer(48, (5, 5), (2, 2)),
                    layer(64, (3, 3), (1, 1)),
                    layer(64, (3, 3), (1, 1)),
                ],
            },
            lidar: ConvBlockSpec {
                input: [4, 11, 310],
                layers: vec![
                    layer(24, (3, 5), (1, 2)),
                    layer(36, (3, 5), (1, 2)),
                    layer(48, (3, 5), (1, 2)),
                    layer(64, (3, 3), (1, 1)),
                    layer(64, (3, 3), (1, 1)),
                ],
            },
            hidden: 100,
        }
    }

    /// Half-resolution geometry: camera 3x31x153, lidar decimated to
    /// 4x11x155. Used by the fast training configuration.
    pub fn half() -> Self {
        Geometry {
            name: "half".into(),
            camera: ConvBlockSpec {
                input: [3, 31, 153],
                layers: vec![
                    layer(24, (5, 5), (2, 2)),
                    layer(36, (5, 5), (2, 2)),
                    layer(48, (5, 5), (2, 2)),
                    layer(64, (1, 3), (1, 1)),
                    layer(64, (1, 3), (1, 1)),
                ],
            },
            lidar: ConvBlockSpec {
                input: [4, 11, 155],
                layers: vec![
                    layer(24, (3, 5), (2, 2)),
                    layer(36, (3, 5), (1, 2)),
                    layer(48, (3, 5), (1, 2)),
                    layer(64, (1, 3), (1, 1)),
                    layer(64, (1, 3), (1, 1)),
                ],
            },
            hidden: 100,
        }
    }

    /// Miniature geometry for gradient checks and fast structural tests.
    pub fn tiny() -> Self {
        Geometry {
            name: "tiny".into(),
            camera: ConvBlockSpec {
                input: [3, 15, 24],
                layers: vec![
                    layer(6, (3, 3), (2, 2)),
                    layer(8, (3, 3), (1, 1)),
                    layer(12, (3, 3), (1, 1)),
                    layer(12, (3, 3), (1, 1)),
                    layer(64, (1, 3), (1, 1)),
                ],
            },
            lidar: ConvBlockSpec {
                input: [4, 7, 20],
                layers: vec![
                    layer(6, (3, 3), (1, 2)),
                    layer(8, (3, 3), (1, 1)),
                    layer(12, (3, 3), (1, 1)),
                    layer(12, (1, 3), (1, 1)),
                    layer(64, (1, 3), (1, 1)),
                ],
            },
            hidden: 16,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "half" => Ok(Self::half()),
            "tiny" => Ok(Self::tiny()),
            other => Err(Error::Config(format!(
                "unknown geometry {other:?} (expected full|half|tiny)"
            ))),
        }
    }

    /// Head input width for a variant under this geometry.
    pub fn head_input_len(&self, variant: Variant) -> Result<usize> {
        let mut n = 0;
        if variant.uses_camera() {
            n += self.camera.flat_len()?;
        }
        if variant.uses_lidar() {
            n += self.lidar.flat_len()?;
        }
        Ok(n)
    }
}

/// Architecture description: variant plus conv geometry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub variant: Variant,
    pub geometry: Geometry,
}

/// Per-channel normalization statistics computed on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub camera_mean: Vec<f64>,
    pub camera_std: Vec<f64>,
    pub lidar_mean: Vec<f64>,
    pub lidar_std: Vec<f64>,
}

impl NormStats {
    /// Unit stats (identity normalization) for the given channel counts.
    pub fn identity(camera_channels: usize, lidar_channels: usize) -> Self {
        NormStats {
            camera_mean: vec![0.0; camera_channels],
            camera_std: vec![1.0; camera_channels],
            lidar_mean: vec![0.0; lidar_channels],
            lidar_std: vec![1.0; lidar_channels],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .camera_std
            .iter()
            .chain(&self.lidar_std)
            .any(|&s| !(s > 0.0))
        {
            return Err(Error::InvalidArgument(
                "normalization std must be positive for every channel".into(),
            ));
        }
        Ok(())
    }

    fn normalize<S: Scalar>(img: &Tensor<S>, mean: &[f64], std: &[f64]) -> Tensor<S> {
        let c = img.shape()[0];
        assert_eq!(c, mean.len(), "channel count mismatch in normalization");
        let plane = img.numel() / c;
        let mut out = img.clone();
        for ch in 0..c {
            let m = S::from_f64(mean[ch]);
            let inv = S::from_f64(1.0 / std[ch]);
            for v in &mut out.data_mut()[ch * plane..(ch + 1) * plane] {
                *v = (*v - m) * inv;
            }
        }
        out
    }

    pub fn normalize_camera<S: Scalar>(&self, img: &Tensor<S>) -> Tensor<S> {
        Self::normalize(img, &self.camera_mean, &self.camera_std)
    }

    pub fn normalize_lidar<S: Scalar>(&self, img: &Tensor<S>) -> Tensor<S> {
        Self::normalize(img, &self.lidar_mean, &self.lidar_std)
    }
}

#[derive(Debug, Clone)]
struct ConvLayer<S: Scalar> {
    weight: Tensor<S>,
    bias: Tensor<S>,
    stride: (usize, usize),
}

#[derive(Debug, Clone)]
struct DenseLayer<S: Scalar> {
    weight: Tensor<S>,
    bias: Tensor<S>,
}

#[derive(Debug, Clone)]
struct ConvBlock<S: Scalar> {
    layers: Vec<ConvLayer<S>>,
}

impl<S: Scalar> ConvBlock<S> {
    fn init(spec: &ConvBlockSpec, rng: &mut ChaCha8Rng) -> Self {
        let mut in_c = spec.input[0];
        let mut layers = Vec::with_capacity(spec.layers.len());
        for l in &spec.layers {
            let fan_in = in_c * l.kernel.0 * l.kernel.1;
            let fan_out = l.out_channels * l.kernel.0 * l.kernel.1;
            layers.push(ConvLayer {
                weight: nn::init::glorot_uniform(
                    vec![l.out_channels, in_c, l.kernel.0, l.kernel.1],
                    fan_in,
                    fan_out,
                    rng,
                ),
                bias: Tensor::zeros(vec![l.out_channels]),
                stride: l.stride,
            });
            in_c = l.out_channels;
        }
        ConvBlock { layers }
    }

    /// Forward, caching the input and every post-ReLU activation.
    fn forward(&self, input: &Tensor<S>) -> Result<BlockCache<S>> {
        let mut post = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for l in &self.layers {
            let z = nn::conv2d_forward(&x, &l.weight, &l.bias, l.stride)?;
            x = relu(&z);
            post.push(x.clone());
        }
        Ok(BlockCache {
            input: input.clone(),
            post,
        })
    }

    /// Backward from the gradient at the block output (post-ReLU of the last
    /// layer). `grads` holds exactly 2 * layers buffers: w0, b0, w1, b1, ...
    fn backward(
        &self,
        cache: &BlockCache<S>,
        d_out: Tensor<S>,
        grads: &mut [Vec<S>],
    ) -> Result<()> {
        assert_eq!(grads.len(), 2 * self.layers.len());
        let mut d_post = d_out;
        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            let dz = relu_backward(&d_post, &cache.post[i]);
            let input = if i == 0 { &cache.input } else { &cache.post[i - 1] };
            let (wg, rest) = grads[2 * i..].split_first_mut().unwrap();
            let bg = &mut rest[0];
            let d_in = nn::conv::conv2d_backward_into(
                &dz,
                input,
                &l.weight,
                &l.bias,
                l.stride,
                wg,
                bg,
                i > 0,
            )?;
            if let Some(d) = d_in {
                d_post = d;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BlockCache<S: Scalar> {
    input: Tensor<S>,
    post: Vec<Tensor<S>>,
}

impl<S: Scalar> BlockCache<S> {
    /// Post-ReLU activation of layer `i` (0-based).
    pub fn activation(&self, i: usize) -> &Tensor<S> {
        &self.post[i]
    }

    pub fn len(&self) -> usize {
        self.post.len()
    }

    pub fn is_empty(&self) -> bool {
        self.post.is_empty()
    }
}

/// How the gated variant obtains its gate vector during a forward pass.
#[derive(Debug, Clone, Copy)]
pub enum GateMode<S: Scalar> {
    /// Run the gating subnetwork.
    Learned,
    /// Override every gate with a constant; the gating subnetwork is skipped.
    Forced(S),
}

#[derive(Debug, Clone)]
pub struct ForwardCache<S: Scalar> {
    pub camera: Option<BlockCache<S>>,
    pub lidar: Option<BlockCache<S>>,
    pub gate_camera: Option<BlockCache<S>>,
    pub gate_lidar: Option<BlockCache<S>>,
    /// Post-sigmoid gate vector (cgdual only; None when forced).
    pub gates: Option<Tensor<S>>,
    /// Gate vector actually applied (learned or forced).
    pub applied_gates: Option<Tensor<S>>,
    /// Gated block outputs (cgdual only).
    pub gated_camera: Option<Tensor<S>>,
    pub gated_lidar: Option<Tensor<S>>,
    pub features: Tensor<S>,
    hidden: Tensor<S>,
    pub output: S,
}

/// One model instance: spec plus parameters.
#[derive(Debug, Clone)]
pub struct Network<S: Scalar> {
    spec: NetworkSpec,
    seed: u64,
    camera: Option<ConvBlock<S>>,
    lidar: Option<ConvBlock<S>>,
    fc1: DenseLayer<S>,
    fc2: DenseLayer<S>,
    gate_camera: Option<ConvBlock<S>>,
    gate_lidar: Option<ConvBlock<S>>,
    gate_fc: Option<DenseLayer<S>>,
}

fn dense_init<S: Scalar>(n_out: usize, n_in: usize, rng: &mut ChaCha8Rng) -> DenseLayer<S> {
    DenseLayer {
        weight: nn::init::glorot_uniform(vec![n_out, n_in], n_in, n_out, rng),
        bias: Tensor::zeros(vec![n_out]),
    }
}

/// Build a variant from its geometry, reproducibly from the seed.
pub fn build<S: Scalar>(variant: Variant, geometry: &Geometry, seed: u64) -> Result<Network<S>> {
    // Validate geometry up front so errors name the failing layer.
    geometry.camera.shapes()?;
    geometry.lidar.shapes()?;
    let head_in = geometry.head_input_len(variant)?;
    if geometry.hidden == 0 {
        return Err(Error::BadGeometry {
            layer: "head".into(),
            reason: "hidden width must be positive".into(),
        });
    }

    let camera = variant
        .uses_camera()
        .then(|| ConvBlock::init(&geometry.camera, &mut rng::stream(seed, "arch.camera", 0)));
    let lidar = variant
        .uses_lidar()
        .then(|| ConvBlock::init(&geometry.lidar, &mut rng::stream(seed, "arch.lidar", 0)));
    let fc1 = dense_init(
        geometry.hidden,
        head_in,
        &mut rng::stream(seed, "arch.fc1", 0),
    );
    let fc2 = dense_init(1, geometry.hidden, &mut rng::stream(seed, "arch.fc2", 0));

    let (gate_camera, gate_lidar, gate_fc) = if variant.gated() {
        let gc = ConvBlock::init(&geometry.camera, &mut rng::stream(seed, "arch.gate.camera", 0));
        let gl = ConvBlock::init(&geometry.lidar, &mut rng::stream(seed, "arch.gate.lidar", 0));
        let gfc = dense_init(
            GATE_COUNT,
            geometry.camera.flat_len()? + geometry.lidar.flat_len()?,
            &mut rng::stream(seed, "arch.gate.fc", 0),
        );
        (Some(gc), Some(gl), Some(gfc))
    } else {
        (None, None, None)
    };

    Ok(Network {
        spec: NetworkSpec {
            variant,
            geometry: geometry.clone(),
        },
        seed,
        camera,
        lidar,
        fc1,
        fc2,
        gate_camera,
        gate_lidar,
        gate_fc,
    })
}

/// Per-sample gradient buffers, aligned with the network's parameter order.
#[derive(Debug, Clone)]
pub struct GradSet<S: Scalar> {
    bufs: Vec<Vec<S>>,
}

impl<S: Scalar> GradSet<S> {
    pub fn zeros_for(net: &Network<S>) -> Self {
        GradSet {
            bufs: net.param_sizes().iter().map(|&n| vec![S::zero(); n]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GradSet<S>) {
        assert_eq!(self.bufs.len(), other.bufs.len());
        for (a, b) in self.bufs.iter_mut().zip(&other.bufs) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, k: S) {
        for b in &mut self.bufs {
            for v in b.iter_mut() {
                *v *= k;
            }
        }
    }

    pub fn bufs(&self) -> &[Vec<S>] {
        &self.bufs
    }
}

impl<S: Scalar> Network<S> {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    pub fn geometry(&self) -> &Geometry {
        &self.spec.geometry
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn check_inputs(
        &self,
        camera: Option<&Tensor<S>>,
        lidar: Option<&Tensor<S>>,
    ) -> Result<()> {
        let v = self.spec.variant;
        if v.uses_camera() {
            let img = camera.ok_or_else(|| Error::MissingModality {
                variant: v.id().into(),
                modality: "camera".into(),
            })?;
            let want = self.spec.geometry.camera.input;
            if img.shape() != want {
                return Err(Error::ShapeMismatch {
                    expected: want.to_vec(),
                    got: img.shape().to_vec(),
                    context: "camera input".into(),
                });
            }
        }
        if v.uses_lidar() {
            let img = lidar.ok_or_else(|| Error::MissingModality {
                variant: v.id().into(),
                modality: "lidar".into(),
            })?;
            let want = self.spec.geometry.lidar.input;
            if img.shape() != want {
                return Err(Error::ShapeMismatch {
                    expected: want.to_vec(),
                    got: img.shape().to_vec(),
                    context: "lidar input".into(),
                });
            }
        }
        Ok(())
    }

    /// Steering prediction in steering-wheel degrees. Inputs must already be
    /// normalized.
    pub fn forward(&self, camera: Option<&Tensor<S>>, lidar: Option<&Tensor<S>>) -> Result<S> {
        Ok(self
            .forward_cached(camera, lidar, GateMode::Learned)?
            .output)
    }

    pub fn forward_cached(
        &self,
        camera: Option<&Tensor<S>>,
        lidar: Option<&Tensor<S>>,
        gate_mode: GateMode<S>,
    ) -> Result<ForwardCache<S>> {
        self.check_inputs(camera, lidar)?;
        let v = self.spec.variant;

        let cam_cache = match (&self.camera, camera) {
            (Some(block), Some(img)) => Some(block.forward(img)?),
            _ => None,
        };
        let lid_cache = match (&self.lidar, lidar) {
            (Some(block), Some(img)) => Some(block.forward(img)?),
            _ => None,
        };

        let mut gate_cam_cache = None;
        let mut gate_lid_cache = None;
        let mut gates = None;
        let mut applied_gates = None;
        let mut gated_camera = None;
        let mut gated_lidar = None;

        let (features, hidden, output);
        if v.gated() {
            let applied = match gate_mode {
                GateMode::Learned => {
                    let gc = self.gate_camera.as_ref().unwrap().forward(camera.unwrap())?;
                    let gl = self.gate_lidar.as_ref().unwrap().forward(lidar.unwrap())?;
                    let gfeat = concat(&[
                        &nn::flatten(gc.post.last().unwrap()),
                        &nn::flatten(gl.post.last().unwrap()),
                    ])?;
                    let gfc = self.gate_fc.as_ref().unwrap();
                    let z = dense_forward(&gfeat, &gfc.weight, &gfc.bias)?;
                    let g = sigmoid(&z);
                    gate_cam_cache = Some(gc);
                    gate_lid_cache = Some(gl);
                    gates = Some(g.clone());
                    g
                }
                GateMode::Forced(value) => {
                    Tensor::new(vec![GATE_COUNT], vec![value; GATE_COUNT])?
                }
            };
            let cam_out = cam_cache.as_ref().unwrap().post.last().unwrap();
            let lid_out = lid_cache.as_ref().unwrap().post.last().unwrap();
            let gc = apply_channel_gates(&applied, 0, cam_out)?;
            let gl = apply_channel_gates(&applied, FINAL_BLOCK_CHANNELS, lid_out)?;
            features = concat(&[&nn::flatten(&gc), &nn::flatten(&gl)])?;
            gated_camera = Some(gc);
            gated_lidar = Some(gl);
            applied_gates = Some(applied);
        } else {
            let mut parts: Vec<Tensor<S>> = Vec::new();
            if let Some(c) = &cam_cache {
                parts.push(nn::flatten(c.post.last().unwrap()));
            }
            if let Some(l) = &lid_cache {
                parts.push(nn::flatten(l.post.last().unwrap()));
            }
            let refs: Vec<&Tensor<S>> = parts.iter().collect();
            features = concat(&refs)?;
        }

        let z1 = dense_forward(&features, &self.fc1.weight, &self.fc1.bias)?;
        hidden = relu(&z1);
        let z2 = dense_forward(&hidden, &self.fc2.weight, &self.fc2.bias)?;
        output = z2.data()[0];

        Ok(ForwardCache {
            camera: cam_cache,
            lidar: lid_cache,
            gate_camera: gate_cam_cache,
            gate_lidar: gate_lid_cache,
            gates,
            applied_gates,
            gated_camera,
            gated_lidar,
            features,
            hidden,
            output,
        })
    }

    /// Canonical parameter order: steering camera block, steering lidar
    /// block, head fc1, head fc2, gate camera block, gate lidar block,
    /// gate fc. Conv blocks contribute weight, bias per layer in order.
    fn component_tensor_counts(&self) -> Vec<usize> {
        let mut counts = Vec::new();
        if let Some(b) = &self.camera {
            counts.push(2 * b.layers.len());
        }
        if let Some(b) = &self.lidar {
            counts.push(2 * b.layers.len());
        }
        counts.push(2); // fc1
        counts.push(2); // fc2
        if let Some(b) = &self.gate_camera {
            counts.push(2 * b.layers.len());
        }
        if let Some(b) = &self.gate_lidar {
            counts.push(2 * b.layers.len());
        }
        if self.gate_fc.is_some() {
            counts.push(2);
        }
        counts
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        let block_names = |prefix: &str, block: &ConvBlock<S>, names: &mut Vec<String>| {
            for (i, _) in block.layers.iter().enumerate() {
                names.push(format!("{prefix}.conv{}.weight", i + 1));
                names.push(format!("{prefix}.conv{}.bias", i + 1));
            }
        };
        if let Some(b) = &self.camera {
            block_names("camera", b, &mut names);
        }
        if let Some(b) = &self.lidar {
            block_names("lidar", b, &mut names);
        }
        names.push("head.fc1.weight".into());
        names.push("head.fc1.bias".into());
        names.push("head.fc2.weight".into());
        names.push("head.fc2.bias".into());
        if let Some(b) = &self.gate_camera {
            block_names("gate.camera", b, &mut names);
        }
        if let Some(b) = &self.gate_lidar {
            block_names("gate.lidar", b, &mut names);
        }
        if self.gate_fc.is_some() {
            names.push("gate.fc.weight".into());
            names.push("gate.fc.bias".into());
        }
        names
    }

    pub fn params(&self) -> Vec<&Tensor<S>> {
        let mut out = Vec::new();
        fn push_block<'a, S: Scalar>(b: &'a ConvBlock<S>, out: &mut Vec<&'a Tensor<S>>) {
            for l in &b.layers {
                out.push(&l.weight);
                out.push(&l.bias);
            }
        }
        if let Some(b) = &self.camera {
            push_block(b, &mut out);
        }
        if let Some(b) = &self.lidar {
            push_block(b, &mut out);
        }
        out.push(&self.fc1.weight);
        out.push(&self.fc1.bias);
        out.push(&self.fc2.weight);
        out.push(&self.fc2.bias);
        if let Some(b) = &self.gate_camera {
            push_block(b, &mut out);
        }
        if let Some(b) = &self.gate_lidar {
            push_block(b, &mut out);
        }
        if let Some(fc) = &self.gate_fc {
            out.push(&fc.weight);
            out.push(&fc.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out: Vec<&mut Tensor<S>> = Vec::new();
        fn push_block<'a, S: Scalar>(b: &'a mut ConvBlock<S>, out: &mut Vec<&'a mut Tensor<S>>) {
            for l in &mut b.layers {
                out.push(&mut l.weight);
                out.push(&mut l.bias);
            }
        }
        if let Some(b) = &mut self.camera {
            push_block(b, &mut out);
        }
        if let Some(b) = &mut self.lidar {
            push_block(b, &mut out);
        }
        out.push(&mut self.fc1.weight);
        out.push(&mut self.fc1.bias);
        out.push(&mut self.fc2.weight);
        out.push(&mut self.fc2.bias);
        if let Some(b) = &mut self.gate_camera {
            push_block(b, &mut out);
        }
        if let Some(b) = &mut self.gate_lidar {
            push_block(b, &mut out);
        }
        if let Some(fc) = &mut self.gate_fc {
            out.push(&mut fc.weight);
            out.push(&mut fc.bias);
        }
        out
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.params().iter().map(|t| t.numel()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.numel()).sum()
    }

    /// Accumulate gradients for one sample into `grads`, given d loss / d
    /// output. Pure with respect to the network, so samples can run in
    /// parallel, each with its own GradSet.
    pub fn backward(
        &self,
        cache: &ForwardCache<S>,
        d_output: S,
        grads: &mut GradSet<S>,
    ) -> Result<()> {
        let counts = self.component_tensor_counts();
        debug_assert_eq!(counts.iter().sum::<usize>(), grads.bufs.len());

        // Slice the flat grad buffer list into per-component chunks, in the
        // same canonical order as params().
        let mut chunks: Vec<&mut [Vec<S>]> = Vec::new();
        let mut rest: &mut [Vec<S>] = &mut grads.bufs;
        for c in &counts {
            let (head, tail) = rest.split_at_mut(*c);
            chunks.push(head);
            rest = tail;
        }
        let mut it = chunks.into_iter();
        let cam_grads = self.camera.as_ref().map(|_| it.next().unwrap());
        let lid_grads = self.lidar.as_ref().map(|_| it.next().unwrap());
        let fc1_grads = it.next().unwrap();
        let fc2_grads = it.next().unwrap();
        let gate_cam_grads = self.gate_camera.as_ref().map(|_| it.next().unwrap());
        let gate_lid_grads = self.gate_lidar.as_ref().map(|_| it.next().unwrap());
        let gate_fc_grads = self.gate_fc.as_ref().map(|_| it.next().unwrap());

        // Head.
        let d_out = Tensor::new(vec![1], vec![d_output])?;
        let (fc2_w, fc2_rest) = fc2_grads.split_first_mut().unwrap();
        let d_hidden = nn::dense::dense_backward_into(
            &d_out,
            &cache.hidden,
            &self.fc2.weight,
            &self.fc2.bias,
            fc2_w,
            &mut fc2_rest[0],
            true,
        )?
        .unwrap();
        let d_z1 = relu_backward(&d_hidden, &cache.hidden);
        let (fc1_w, fc1_rest) = fc1_grads.split_first_mut().unwrap();
        let d_features = nn::dense::dense_backward_into(
            &d_z1,
            &cache.features,
            &self.fc1.weight,
            &self.fc1.bias,
            fc1_w,
            &mut fc1_rest[0],
            true,
        )?
        .unwrap();

        // Split features back into modality segments.
        let v = self.spec.variant;
        let mut lens = Vec::new();
        if v.uses_camera() {
            lens.push(cache.camera.as_ref().unwrap().post.last().unwrap().numel());
        }
        if v.uses_lidar() {
            lens.push(cache.lidar.as_ref().unwrap().post.last().unwrap().numel());
        }
        let mut seg = concat_backward(&d_features, &lens)?.into_iter();

        if v.gated() {
            let gates = cache.applied_gates.as_ref().expect("gated cache");
            let cam_cache = cache.camera.as_ref().unwrap();
            let lid_cache = cache.lidar.as_ref().unwrap();
            let cam_out = cam_cache.post.last().unwrap();
            let lid_out = lid_cache.post.last().unwrap();

            let d_gated_cam = seg.next().unwrap().reshaped(cam_out.shape().to_vec())?;
            let d_gated_lid = seg.next().unwrap().reshaped(lid_out.shape().to_vec())?;

            let mut d_gates = vec![S::zero(); GATE_COUNT];
            let d_cam_out = channel_gates_backward(&d_gated_cam, gates, 0, cam_out, &mut d_gates)?;
            let d_lid_out = channel_gates_backward(
                &d_gated_lid,
                gates,
                FINAL_BLOCK_CHANNELS,
                lid_out,
                &mut d_gates,
            )?;

            self.camera
                .as_ref()
                .unwrap()
                .backward(cam_cache, d_cam_out, cam_grads.unwrap())?;
            self.lidar
                .as_ref()
                .unwrap()
                .backward(lid_cache, d_lid_out, lid_grads.unwrap())?;

            // Gate branch only carries gradient when the gates were learned.
            if let Some(gates_learned) = &cache.gates {
                let d_gates_t = Tensor::new(vec![GATE_COUNT], d_gates)?;
                let d_z = sigmoid_backward(&d_gates_t, gates_learned);
                let gfc = self.gate_fc.as_ref().unwrap();
                let gc_cache = cache.gate_camera.as_ref().unwrap();
                let gl_cache = cache.gate_lidar.as_ref().unwrap();
                let gfeat = concat(&[
                    &nn::flatten(gc_cache.post.last().unwrap()),
                    &nn::flatten(gl_cache.post.last().unwrap()),
                ])?;
                let gfc_grads = gate_fc_grads.unwrap();
                let (gfc_w, gfc_rest) = gfc_grads.split_first_mut().unwrap();
                let d_gfeat = nn::dense::dense_backward_into(
                    &d_z,
                    &gfeat,
                    &gfc.weight,
                    &gfc.bias,
                    gfc_w,
                    &mut gfc_rest[0],
                    true,
                )?
                .unwrap();
                let glens = [
                    gc_cache.post.last().unwrap().numel(),
                    gl_cache.post.last().unwrap().numel(),
                ];
                let mut gseg = concat_backward(&d_gfeat, &glens)?.into_iter();
                let d_gc = gseg
                    .next()
                    .unwrap()
                    .reshaped(gc_cache.post.last().unwrap().shape().to_vec())?;
                let d_gl = gseg
                    .next()
                    .unwrap()
                    .reshaped(gl_cache.post.last().unwrap().shape().to_vec())?;
                self.gate_camera
                    .as_ref()
                    .unwrap()
                    .backward(gc_cache, d_gc, gate_cam_grads.unwrap())?;
                self.gate_lidar
                    .as_ref()
                    .unwrap()
                    .backward(gl_cache, d_gl, gate_lid_grads.unwrap())?;
            }
        } else {
            if let Some(cam_cache) = &cache.camera {
                let out_shape = cam_cache.post.last().unwrap().shape().to_vec();
                let d = seg.next().unwrap().reshaped(out_shape)?;
                self.camera
                    .as_ref()
                    .unwrap()
                    .backward(cam_cache, d, cam_grads.unwrap())?;
            }
            if let Some(lid_cache) = &cache.lidar {
                let out_shape = lid_cache.post.last().unwrap().shape().to_vec();
                let d = seg.next().unwrap().reshaped(out_shape)?;
                self.lidar
                    .as_ref()
                    .unwrap()
                    .backward(lid_cache, d, lid_grads.unwrap())?;
            }
        }
        Ok(())
    }

    /// Copy a (typically batch-averaged) gradient set into the parameters'
    /// grad buffers, replacing previous contents.
    pub fn load_grads(&mut self, grads: &GradSet<S>) {
        let mut params = self.params_mut();
        assert_eq!(params.len(), grads.bufs.len());
        for (p, g) in params.iter_mut().zip(&grads.bufs) {
            p.grad_mut().copy_from_slice(g);
        }
    }

    /// Flat parameter vector in declaration order, as f32.
    pub fn flat_params_f32(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.param_count());
        for p in self.params() {
            out.extend(p.data().iter().map(|&v| Scalar::to_f32(v)));
        }
        out
    }

    pub fn load_flat_params_f32(&mut self, flat: &[f32]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Checkpoint(format!(
                "parameter payload has {} values, network needs {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for p in self.params_mut() {
            let n = p.numel();
            for (dst, src) in p.data_mut().iter_mut().zip(&flat[off..off + n]) {
                *dst = S::from_f32(*src);
            }
            off += n;
        }
        Ok(())
    }
}
