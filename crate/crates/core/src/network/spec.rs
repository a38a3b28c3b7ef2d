use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::{conv2d_output_extent, pool_output_extent, ConvGeometry};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InputExtent {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl InputExtent {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        InputExtent {
            channels,
            height,
            width,
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    Conv {
        filters: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        groups: usize,
    },
    Relu,
    MaxPool {
        window: usize,
        stride: usize,
    },
    Fc {
        units: usize,
    },
    /// Inverted dropout; identity outside training.
    Dropout {
        rate: f32,
    },
    Softmax,
}

impl LayerKind {
    pub fn is_trainable(&self) -> bool {
        matches!(self, LayerKind::Conv { .. } | LayerKind::Fc { .. })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            LayerKind::Conv { .. } => "conv",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool { .. } => "maxpool",
            LayerKind::Fc { .. } => "fc",
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::Softmax => "softmax",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// Multiplier on the base learning rate for weights; 0 freezes them.
    pub lr_mult_weights: f32,
    pub lr_mult_bias: f32,
    /// Standard deviation of the zero-mean Gaussian weight initialisation.
    pub init_std: f32,
}

pub const DEFAULT_INIT_STD: f32 = 0.01;

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        LayerSpec {
            name: name.into(),
            kind,
            lr_mult_weights: 1.0,
            lr_mult_bias: 2.0,
            init_std: DEFAULT_INIT_STD,
        }
    }

    pub fn conv(name: &str, filters: usize, kernel: usize, stride: usize, pad: usize, groups: usize) -> Self {
        Self::new(
            name,
            LayerKind::Conv {
                filters,
                kernel,
                stride,
                pad,
                groups,
            },
        )
    }

    pub fn relu(name: &str) -> Self {
        Self::new(name, LayerKind::Relu)
    }

    pub fn maxpool(name: &str, window: usize, stride: usize) -> Self {
        Self::new(name, LayerKind::MaxPool { window, stride })
    }

    pub fn fc(name: &str, units: usize) -> Self {
        Self::new(name, LayerKind::Fc { units })
    }

    pub fn dropout(name: &str, rate: f32) -> Self {
        Self::new(name, LayerKind::Dropout { rate })
    }

    pub fn softmax(name: &str) -> Self {
        Self::new(name, LayerKind::Softmax)
    }

    pub fn with_lr_mult(mut self, weights: f32, bias: f32) -> Self {
        self.lr_mult_weights = weights;
        self.lr_mult_bias = bias;
        self
    }

    pub fn with_init_std(mut self, std: f32) -> Self {
        self.init_std = std;
        self
    }

    pub fn conv_geometry(&self) -> Option<ConvGeometry> {
        match self.kind {
            LayerKind::Conv {
                stride, pad, groups, ..
            } => Some(ConvGeometry::new(stride, pad, groups)),
            _ => None,
        }
    }
}

/// Ordered architecture description.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub input: InputExtent,
    pub class_count: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Checks that the layers compose and returns every layer's output shape.
    pub fn output_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shape = self.input.shape().to_vec();
        if shape.contains(&0) {
            return Err(Error::shape(format!("empty input extent {shape:?}")));
        }
        let mut names = std::collections::HashSet::new();
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            if !names.insert(layer.name.as_str()) {
                return Err(Error::invalid(format!("duplicate layer name {}", layer.name)));
            }
            let finite_nonneg = |v: f32| v.is_finite() && v >= 0.0;
            if !finite_nonneg(layer.lr_mult_weights) || !finite_nonneg(layer.lr_mult_bias) {
                return Err(Error::invalid(format!(
                    "layer {}: learning-rate multipliers must be finite and non-negative",
                    layer.name
                )));
            }
            let fail = |why: String| Error::shape(format!("layer {} ({}): {why}", layer.name, layer.kind.tag()));
            shape = match layer.kind {
                LayerKind::Conv {
                    filters,
                    kernel,
                    stride,
                    pad,
                    groups,
                } => {
                    let [c, h, w] = shape[..] else {
                        return Err(fail(format!("needs a [C,H,W] input, got {shape:?}")));
                    };
                    if groups == 0 || c % groups != 0 || filters % groups != 0 || filters == 0 {
                        return Err(fail(format!(
                            "{c} input channels and {filters} filters do not split into {groups} groups"
                        )));
                    }
                    match (
                        conv2d_output_extent(h, kernel, stride, pad),
                        conv2d_output_extent(w, kernel, stride, pad),
                    ) {
                        (Some(oh), Some(ow)) => vec![filters, oh, ow],
                        _ => return Err(fail(format!("{kernel}x{kernel} kernel does not fit {h}x{w}"))),
                    }
                }
                LayerKind::MaxPool { window, stride } => {
                    let [c, h, w] = shape[..] else {
                        return Err(fail(format!("needs a [C,H,W] input, got {shape:?}")));
                    };
                    match (
                        pool_output_extent(h, window, stride),
                        pool_output_extent(w, window, stride),
                    ) {
                        (Some(oh), Some(ow)) => vec![c, oh, ow],
                        _ => return Err(fail(format!("window {window} does not fit {h}x{w}"))),
                    }
                }
                LayerKind::Relu => shape,
                LayerKind::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(fail(format!("rate {rate} outside [0, 1)")));
                    }
                    shape
                }
                LayerKind::Fc { units } => {
                    if units == 0 {
                        return Err(fail("zero units".into()));
                    }
                    vec![units]
                }
                LayerKind::Softmax => {
                    if i + 1 != self.layers.len() {
                        return Err(fail("softmax must be the final layer".into()));
                    }
                    if shape.len() != 1 {
                        return Err(fail(format!("needs a flat input, got {shape:?}")));
                    }
                    shape
                }
            };
            shapes.push(shape.clone());
        }
        match self.layers.last().map(|l| &l.kind) {
            Some(LayerKind::Softmax) => {}
            _ => return Err(Error::invalid("network must end in a softmax layer")),
        }
        if shape != [self.class_count] {
            return Err(Error::shape(format!(
                "network emits {shape:?} but class_count is {}",
                self.class_count
            )));
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.output_shapes().map(|_| ())
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn layer_names(&self) -> Vec<&str> {
        self.layers.iter().map(|l| l.name.as_str()).collect()
    }

    /// Shape entering layer `index`.
    pub fn input_shape_of(&self, index: usize, shapes: &[Vec<usize>]) -> Vec<usize> {
        if index == 0 {
            self.input.shape().to_vec()
        } else {
            shapes[index - 1].clone()
        }
    }

    pub fn parameter_count(&self) -> Result<usize> {
        let shapes = self.output_shapes()?;
        let mut total = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            let input = self.input_shape_of(i, &shapes);
            if let Some((w, b)) = param_shapes(layer, &input) {
                total += w.iter().product::<usize>() + b;
            }
        }
        Ok(total)
    }
}

/// Weight shape and bias length of a trainable layer given its input shape.
pub(crate) fn param_shapes(layer: &LayerSpec, input: &[usize]) -> Option<(Vec<usize>, usize)> {
    match layer.kind {
        LayerKind::Conv {
            filters,
            kernel,
            groups,
            ..
        } => Some((vec![filters, input[0] / groups, kernel, kernel], filters)),
        LayerKind::Fc { units } => Some((vec![units, input.iter().product()], units)),
        _ => None,
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} name={}", self.kind.tag(), self.name)?;
        match self.kind {
            LayerKind::Conv {
                filters,
                kernel,
                stride,
                pad,
                groups,
            } => write!(
                f,
                " filters={filters} kernel={kernel} stride={stride} pad={pad} groups={groups}"
            )?,
            LayerKind::MaxPool { window, stride } => write!(f, " window={window} stride={stride}")?,
            LayerKind::Fc { units } => write!(f, " units={units}")?,
            LayerKind::Dropout { rate } => write!(f, " rate={rate}")?,
            LayerKind::Relu | LayerKind::Softmax => {}
        }
        if self.kind.is_trainable() {
            write!(
                f,
                " lr_w={} lr_b={} init_std={}",
                self.lr_mult_weights, self.lr_mult_bias, self.init_std
            )?;
        }
        Ok(())
    }
}

/// Line-oriented text form stored in checkpoints.
impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "input channels={} height={} width={}",
            self.input.channels, self.input.height, self.input.width
        )?;
        writeln!(f, "classes {}", self.class_count)?;
        for layer in &self.layers {
            writeln!(f, "{layer}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for NetworkSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut input = None;
        let mut classes = None;
        let mut layers = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |why: &str| Error::invalid(format!("architecture line {}: {why}: {line}", lineno + 1));
            let mut words = line.split_whitespace();
            let head = words.next().expect("non-empty line");
            let mut fields = std::collections::HashMap::new();
            let mut positional = Vec::new();
            for w in words {
                match w.split_once('=') {
                    Some((k, v)) => {
                        fields.insert(k, v);
                    }
                    None => positional.push(w),
                }
            }
            fn get<T: std::str::FromStr>(fields: &std::collections::HashMap<&str, &str>, key: &str) -> Option<T> {
                fields.get(key).and_then(|v| v.parse().ok())
            }
            let need_usize =
                |key: &str| get::<usize>(&fields, key).ok_or_else(|| bad(&format!("missing or bad `{key}`")));
            let need_f32 = |key: &str| get::<f32>(&fields, key).ok_or_else(|| bad(&format!("missing or bad `{key}`")));
            match head {
                "input" => {
                    input = Some(InputExtent::new(
                        need_usize("channels")?,
                        need_usize("height")?,
                        need_usize("width")?,
                    ))
                }
                "classes" => {
                    classes = Some(
                        positional
                            .first()
                            .and_then(|v| v.parse().ok())
                            .ok_or_else(|| bad("bad class count"))?,
                    )
                }
                tag => {
                    let name = fields.get("name").ok_or_else(|| bad("missing name"))?.to_string();
                    let kind = match tag {
                        "conv" => LayerKind::Conv {
                            filters: need_usize("filters")?,
                            kernel: need_usize("kernel")?,
                            stride: need_usize("stride")?,
                            pad: need_usize("pad")?,
                            groups: need_usize("groups")?,
                        },
                        "relu" => LayerKind::Relu,
                        "maxpool" => LayerKind::MaxPool {
                            window: need_usize("window")?,
                            stride: need_usize("stride")?,
                        },
                        "fc" => LayerKind::Fc {
                            units: need_usize("units")?,
                        },
                        "dropout" => LayerKind::Dropout {
                            rate: need_f32("rate")?,
                        },
                        "softmax" => LayerKind::Softmax,
                        _ => return Err(bad("unknown layer kind")),
                    };
                    let mut spec = LayerSpec::new(name, kind);
                    if spec.kind.is_trainable() {
                        spec.lr_mult_weights = need_f32("lr_w")?;
                        spec.lr_mult_bias = need_f32("lr_b")?;
                        spec.init_std = need_f32("init_std")?;
                    }
                    layers.push(spec);
                }
            }
        }
        let spec = NetworkSpec {
            input: input.ok_or_else(|| Error::invalid("architecture lacks an input line"))?,
            class_count: classes.ok_or_else(|| Error::invalid("architecture lacks a classes line"))?,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }
}
