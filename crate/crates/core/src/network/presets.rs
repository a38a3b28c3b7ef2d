//! Ready-made architectures.

use super::spec::{InputExtent, LayerSpec, NetworkSpec};

/// Classes in the leaf dataset the full-size preset is fine-tuned for.
pub const PAPER_CLASS_COUNT: usize = 44;
pub const PAPER_INPUT_SIDE: usize = 227;

/// Five conv layers and three fc layers over a 227x227x3 input.
///
/// Pooling is 3x3 with stride 2 and conv pads are 0/2/1/1/1; with these the
/// layer widths compose to 55, 27, 13 and 6. conv2, conv4 and conv5 are
/// two-group convolutions, which is what makes their kernel depths 48, 192
/// and 192. The head learns at 10x (weights) and 20x (biases) the base rate.
pub fn build_paper_network() -> NetworkSpec {
    build_paper_network_with_classes(PAPER_CLASS_COUNT)
}

pub fn build_paper_network_with_classes(class_count: usize) -> NetworkSpec {
    let layers = vec![
        LayerSpec::conv("conv1", 96, 11, 4, 0, 1),
        LayerSpec::relu("relu1"),
        LayerSpec::maxpool("pool1", 3, 2),
        LayerSpec::conv("conv2", 256, 5, 1, 2, 2),
        LayerSpec::relu("relu2"),
        LayerSpec::maxpool("pool2", 3, 2),
        LayerSpec::conv("conv3", 384, 3, 1, 1, 1),
        LayerSpec::relu("relu3"),
        LayerSpec::conv("conv4", 384, 3, 1, 1, 2),
        LayerSpec::relu("relu4"),
        LayerSpec::conv("conv5", 256, 3, 1, 1, 2),
        LayerSpec::relu("relu5"),
        LayerSpec::maxpool("pool5", 3, 2),
        LayerSpec::fc("fc6", 4096),
        LayerSpec::relu("relu6"),
        LayerSpec::fc("fc7", 4096),
        LayerSpec::relu("relu7"),
        LayerSpec::fc("fc8", class_count).with_lr_mult(10.0, 20.0),
        LayerSpec::softmax("prob"),
    ];
    NetworkSpec {
        input: InputExtent::new(3, PAPER_INPUT_SIDE, PAPER_INPUT_SIDE),
        class_count,
        layers,
    }
}

pub const DESK_INPUT_SIDE: usize = 64;

/// Three conv layers and one fc layer over a 64x64x3 input, sized to train on
/// one CPU core in a few minutes.
///
/// Trained from scratch, so weights start from fan-in scaled Gaussians
/// instead of the fixed 0.01 used for the fine-tuning preset.
pub fn build_desk_network(class_count: usize) -> NetworkSpec {
    build_desk_network_with_widths(class_count, [16, 32, 32])
}

pub fn build_desk_network_with_widths(class_count: usize, widths: [usize; 3]) -> NetworkSpec {
    let he = |fan_in: usize| (2.0 / fan_in as f32).sqrt();
    let [c1, c2, c3] = widths;
    let layers = vec![
        LayerSpec::conv("conv1", c1, 5, 2, 2, 1).with_init_std(he(3 * 25)),
        LayerSpec::relu("relu1"),
        LayerSpec::maxpool("pool1", 3, 2),
        LayerSpec::conv("conv2", c2, 3, 1, 1, 1).with_init_std(he(c1 * 9)),
        LayerSpec::relu("relu2"),
        LayerSpec::maxpool("pool2", 3, 2),
        LayerSpec::conv("conv3", c3, 3, 1, 1, 1).with_init_std(he(c2 * 9)),
        LayerSpec::relu("relu3"),
        LayerSpec::maxpool("pool3", 3, 2),
        LayerSpec::fc("fc4", class_count).with_init_std((1.0 / (c3 * 9) as f32).sqrt()),
        LayerSpec::softmax("prob"),
    ];
    NetworkSpec {
        input: InputExtent::new(3, DESK_INPUT_SIDE, DESK_INPUT_SIDE),
        class_count,
        layers,
    }
}

/// `features -> hidden ReLU -> classes softmax`, used as the MLP classifier
/// over extracted feature vectors.
pub fn build_mlp(input_width: usize, hidden_width: usize, class_count: usize) -> NetworkSpec {
    let layers = vec![
        LayerSpec::fc("hidden", hidden_width)
            .with_lr_mult(1.0, 1.0)
            .with_init_std((2.0 / input_width as f32).sqrt()),
        LayerSpec::relu("hidden_relu"),
        LayerSpec::fc("out", class_count)
            .with_lr_mult(1.0, 1.0)
            .with_init_std((1.0 / hidden_width as f32).sqrt()),
        LayerSpec::softmax("prob"),
    ];
    NetworkSpec {
        input: InputExtent::new(input_width, 1, 1),
        class_count,
        layers,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_shapes_compose() {
        let spec = build_paper_network();
        let shapes = spec.output_shapes().unwrap();
        let at = |name: &str| shapes[spec.layer_index(name).unwrap()].clone();
        assert_eq!(at("conv1"), vec![96, 55, 55]);
        assert_eq!(at("pool1"), vec![96, 27, 27]);
        assert_eq!(at("conv2"), vec![256, 27, 27]);
        assert_eq!(at("pool2"), vec![256, 13, 13]);
        assert_eq!(at("conv3"), vec![384, 13, 13]);
        assert_eq!(at("conv4"), vec![384, 13, 13]);
        assert_eq!(at("conv5"), vec![256, 13, 13]);
        assert_eq!(at("pool5"), vec![256, 6, 6]);
        assert_eq!(at("fc6"), vec![4096]);
        assert_eq!(at("fc7"), vec![4096]);
        assert_eq!(at("fc8"), vec![44]);
    }

    #[test]
    fn paper_kernel_depths() {
        let spec = build_paper_network();
        let shapes = spec.output_shapes().unwrap();
        let depth = |name: &str| {
            let i = spec.layer_index(name).unwrap();
            let input = spec.input_shape_of(i, &shapes);
            super::super::spec::param_shapes(&spec.layers[i], &input).unwrap().0[1]
        };
        assert_eq!(depth("conv1"), 3);
        assert_eq!(depth("conv2"), 48);
        assert_eq!(depth("conv3"), 256);
        assert_eq!(depth("conv4"), 192);
        assert_eq!(depth("conv5"), 192);
    }

    #[test]
    fn desk_shapes_compose() {
        let spec = build_desk_network(8);
        let shapes = spec.output_shapes().unwrap();
        assert_eq!(shapes[0], vec![16, 32, 32]);
        assert_eq!(shapes[spec.layer_index("pool3").unwrap()], vec![32, 3, 3]);
        assert_eq!(shapes.last().unwrap(), &vec![8]);
    }

    #[test]
    fn architecture_text_roundtrips() {
        for spec in [build_paper_network(), build_desk_network(5), build_mlp(7, 3, 2)] {
            let text = spec.to_string();
            let back: NetworkSpec = text.parse().unwrap();
            assert_eq!(back, spec);
        }
    }
}
