use super::config::NetworkConfig;
use crate::error::{Axis, Error, Result};
use crate::io::image::{crop, pad_to_multiple};
use crate::ops::{
    concat_channels, conv2d, conv2d_backward, conv_transpose2d, conv_transpose2d_backward,
    mse_loss, relu, relu_backward, split_channels_backward, ConvGrads, ConvSpec, LayerCache,
};
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor};
use crate::train::init::{derive_seed, he_init};

/// A convolution optionally followed by ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub spec: ConvSpec,
    pub weight: Tensor<T>,
    pub bias: Option<Vec<T>>,
}

#[derive(Debug)]
struct LayerTrace<T> {
    conv: LayerCache<T>,
    relu: Option<LayerCache<T>>,
}

impl<T: Scalar> ConvLayer<T> {
    fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, LayerTrace<T>)> {
        let (y, conv) = conv2d(x, &self.weight, self.bias.as_deref(), &self.spec)?;
        if self.spec.has_relu {
            let (a, relu_cache) = relu(&y);
            Ok((
                a,
                LayerTrace {
                    conv,
                    relu: Some(relu_cache),
                },
            ))
        } else {
            Ok((y, LayerTrace { conv, relu: None }))
        }
    }

    fn backward(&self, grad_out: &Tensor<T>, trace: &LayerTrace<T>) -> Result<ConvGrads<T>> {
        match &trace.relu {
            Some(r) => conv2d_backward(&relu_backward(grad_out, r)?, &trace.conv),
            None => conv2d_backward(grad_out, &trace.conv),
        }
    }
}

/// Name, shape and initialization fan-in of one trainable tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    pub dims: Vec<usize>,
    pub fan_in: usize,
    pub is_bias: bool,
}

impl ParamInfo {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

struct Layout {
    kernels: usize,
    measurement: ConvSpec,
    channels: Vec<Vec<ConvSpec>>,
    fusion: ConvSpec,
    output: ConvSpec,
}

fn layout(config: &NetworkConfig) -> Result<Layout> {
    config.validate()?;
    let b = config.block_size;
    let kernels = config.measurement_kernels()?;
    let f = config.filters_per_layer;
    let channels = config
        .channel_patterns
        .iter()
        .enumerate()
        .map(|(i, pattern)| {
            let pad = i + 1;
            pattern
                .iter()
                .enumerate()
                .map(|(l, kind)| {
                    ConvSpec::new(f, if l == 0 { 1 } else { f }, kind.kernel())
                        .with_dilation(kind.dilation())
                        .with_padding(pad)
                        .with_relu(true)
                })
                .collect()
        })
        .collect();
    let hk = config.head_kernel;
    Ok(Layout {
        kernels,
        measurement: ConvSpec::new(kernels, 1, b).with_stride(b).with_bias(false),
        channels,
        fusion: ConvSpec::new(config.fusion_filters, config.mfe_channels * f, hk)
            .with_padding(hk / 2)
            .with_relu(true),
        output: ConvSpec::new(1, config.fusion_filters, hk).with_padding(hk / 2),
    })
}

fn conv_params(prefix: &str, spec: &ConvSpec, out: &mut Vec<ParamInfo>) {
    out.push(ParamInfo {
        name: format!("{prefix}.weight"),
        dims: spec.weight_dims().as_array().to_vec(),
        fan_in: spec.in_channels * spec.kernel_h * spec.kernel_w,
        is_bias: false,
    });
    if spec.has_bias {
        out.push(ParamInfo {
            name: format!("{prefix}.bias"),
            dims: vec![spec.out_channels],
            fan_in: 1,
            is_bias: true,
        });
    }
}

/// Every trainable tensor of a network with `config`, in canonical order.
pub fn param_layout(config: &NetworkConfig) -> Result<Vec<ParamInfo>> {
    let l = layout(config)?;
    let b = config.block_size;
    let mut out = Vec::new();
    conv_params("measurement", &l.measurement, &mut out);
    out.push(ParamInfo {
        name: "deconv.weight".into(),
        dims: vec![l.kernels, 1, b, b],
        // Each output pixel of the stride-B deconvolution sees one position
        // of every measurement channel.
        fan_in: l.kernels,
        is_bias: false,
    });
    out.push(ParamInfo {
        name: "deconv.bias".into(),
        dims: vec![1],
        fan_in: 1,
        is_bias: true,
    });
    for (c, specs) in l.channels.iter().enumerate() {
        for (i, spec) in specs.iter().enumerate() {
            conv_params(&format!("mfe.{}.{}", c + 1, i + 1), spec, &mut out);
        }
    }
    conv_params("fusion", &l.fusion, &mut out);
    conv_params("output", &l.output, &mut out);
    Ok(out)
}

/// Gradients aligned with [`Network::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub values: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn flatten(&self) -> Vec<T> {
        self.values.iter().flatten().copied().collect()
    }
}

/// Caches from one training forward pass.
#[derive(Debug)]
pub struct ForwardTrace<T> {
    measurement: LayerTrace<T>,
    deconv: LayerCache<T>,
    channels: Vec<Vec<LayerTrace<T>>>,
    concat: LayerCache<T>,
    fusion: LayerTrace<T>,
    output: LayerTrace<T>,
    input_dims: Dims,
}

/// Learned block measurement followed by deconvolution, parallel dilated
/// feature extraction, channel fusion, and a two-layer head.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    config: NetworkConfig,
    params: Vec<ParamInfo>,
    measurement: ConvLayer<T>,
    deconv_weight: Tensor<T>,
    deconv_bias: Vec<T>,
    channels: Vec<Vec<ConvLayer<T>>>,
    fusion: ConvLayer<T>,
    output: ConvLayer<T>,
}

fn layer_from<T: Scalar>(
    spec: ConvSpec,
    tensors: &mut impl Iterator<Item = Vec<T>>,
) -> Result<ConvLayer<T>> {
    let weight = Tensor::from_vec(spec.weight_dims(), tensors.next().expect("layout length"))?;
    let bias = if spec.has_bias {
        Some(tensors.next().expect("layout length"))
    } else {
        None
    };
    Ok(ConvLayer { spec, weight, bias })
}

impl<T: Scalar> Network<T> {
    /// Builds a network from parameter values listed in [`param_layout`]
    /// order. Lengths are checked against the layout.
    pub fn from_parts(config: NetworkConfig, values: Vec<Vec<T>>) -> Result<Self> {
        let params = param_layout(&config)?;
        if values.len() != params.len() {
            return Err(Error::Validation(format!(
                "{} parameter tensors supplied, layout has {}",
                values.len(),
                params.len()
            )));
        }
        for (info, v) in params.iter().zip(&values) {
            if v.len() != info.len() {
                return Err(Error::TensorMismatch {
                    name: info.name.clone(),
                    detail: format!("{} values for dims {:?}", v.len(), info.dims),
                });
            }
        }
        let l = layout(&config)?;
        let b = config.block_size;
        let mut it = values.into_iter();
        let measurement = layer_from(l.measurement, &mut it)?;
        let deconv_weight =
            Tensor::from_vec([l.kernels, 1, b, b], it.next().expect("layout length"))?;
        let deconv_bias = it.next().expect("layout length");
        let channels = l
            .channels
            .iter()
            .map(|specs| {
                specs
                    .iter()
                    .map(|s| layer_from(*s, &mut it))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let fusion = layer_from(l.fusion, &mut it)?;
        let output = layer_from(l.output, &mut it)?;
        Ok(Network {
            config,
            params,
            measurement,
            deconv_weight,
            deconv_bias,
            channels,
            fusion,
            output,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Layout entries in the order used by [`Network::params`] and [`Gradients`].
    pub fn param_info(&self) -> &[ParamInfo] {
        &self.params
    }

    pub fn measurement_weights(&self) -> &Tensor<T> {
        &self.measurement.weight
    }

    pub fn deconv_weights(&self) -> &Tensor<T> {
        &self.deconv_weight
    }

    pub fn deconv_bias(&self) -> T {
        self.deconv_bias[0]
    }

    pub fn mfe_layers(&self) -> &[Vec<ConvLayer<T>>] {
        &self.channels
    }

    pub fn head(&self) -> (&ConvLayer<T>, &ConvLayer<T>) {
        (&self.fusion, &self.output)
    }

    /// Parameter values in canonical order.
    pub fn params(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::with_capacity(self.params.len());
        fn push<'a, T: Scalar>(layer: &'a ConvLayer<T>, out: &mut Vec<&'a [T]>) {
            out.push(layer.weight.data());
            if let Some(b) = &layer.bias {
                out.push(b);
            }
        }
        push(&self.measurement, &mut out);
        out.push(self.deconv_weight.data());
        out.push(&self.deconv_bias);
        for layer in self.channels.iter().flatten() {
            push(layer, &mut out);
        }
        push(&self.fusion, &mut out);
        push(&self.output, &mut out);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::with_capacity(self.params.len());
        fn push<'a, T: Scalar>(layer: &'a mut ConvLayer<T>, out: &mut Vec<&'a mut [T]>) {
            out.push(layer.weight.data_mut());
            if let Some(b) = &mut layer.bias {
                out.push(b);
            }
        }
        push(&mut self.measurement, &mut out);
        out.push(self.deconv_weight.data_mut());
        out.push(&mut self.deconv_bias);
        for layer in self.channels.iter_mut().flatten() {
            push(layer, &mut out);
        }
        push(&mut self.fusion, &mut out);
        push(&mut self.output, &mut out);
        out
    }

    /// Total trainable scalars.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(ParamInfo::len).sum()
    }

    pub fn flat_params(&self) -> Vec<T> {
        self.params().into_iter().flatten().copied().collect()
    }

    pub fn set_flat_params(&mut self, flat: &[T]) -> Result<()> {
        let total = self.param_count();
        if flat.len() != total {
            return Err(Error::dim(
                "Network::set_flat_params",
                Axis::Length,
                total,
                flat.len(),
            ));
        }
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Same network at another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let values = self
            .params()
            .into_iter()
            .map(|p| p.iter().map(|&v| U::of(v.as_f64())).collect())
            .collect();
        Network::from_parts(self.config.clone(), values).expect("layout is unchanged by a cast")
    }

    fn check_image(&self, image: &Tensor<T>, op: &'static str) -> Result<()> {
        let d = image.dims();
        if d.c != 1 {
            return Err(Error::dim(op, Axis::Channels, 1, d.c));
        }
        let b = self.config.block_size;
        if d.h == 0 || d.w == 0 || !d.h.is_multiple_of(b) || !d.w.is_multiple_of(b) {
            return Err(Error::geometry(
                op,
                format!(
                    "image {}×{} is not a multiple of the {b}×{b} block; pad it first",
                    d.h, d.w
                ),
            ));
        }
        Ok(())
    }

    /// Block measurement `Y`: one output channel per measurement kernel and
    /// one spatial position per non-overlapping block.
    pub fn measure(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_image(image, "measure")?;
        Ok(self.measurement.forward(image)?.0)
    }

    /// Deconvolution of the measurements back to image resolution.
    pub fn initial_reconstruct(&self, measurements: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.measurement.spec.out_channels;
        if measurements.dims().c != n {
            return Err(Error::dim(
                "initial_reconstruct",
                Axis::Channels,
                n,
                measurements.dims().c,
            ));
        }
        let (x1, _) = conv_transpose2d(
            measurements,
            &self.deconv_weight,
            Some(&self.deconv_bias),
            self.config.block_size,
        )?;
        Ok(x1)
    }

    /// Feature maps of every MFE channel for an initial reconstruction.
    pub fn mfe_forward(&self, initial: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        if initial.dims().c != 1 {
            return Err(Error::dim(
                "mfe_forward",
                Axis::Channels,
                1,
                initial.dims().c,
            ));
        }
        self.channels
            .iter()
            .map(|layers| {
                let mut x = initial.clone();
                for layer in layers {
                    x = layer.forward(&x)?.0;
                }
                Ok(x)
            })
            .collect()
    }

    /// Reconstruction of a block-aligned image.
    pub fn forward(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_train(image)?.0)
    }

    /// Reconstruction of an image of any size: reflect-pads to the block
    /// grid, runs [`Network::forward`], and crops back.
    pub fn reconstruct(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let (padded, original) = pad_to_multiple(image, self.config.block_size)?;
        crop(&self.forward(&padded)?, original)
    }

    /// Forward pass that keeps every cache needed by [`Network::backward`].
    pub fn forward_train(&self, image: &Tensor<T>) -> Result<(Tensor<T>, ForwardTrace<T>)> {
        self.check_image(image, "forward")?;
        let (y, measurement) = self.measurement.forward(image)?;
        let (x1, deconv) = conv_transpose2d(
            &y,
            &self.deconv_weight,
            Some(&self.deconv_bias),
            self.config.block_size,
        )?;
        let mut features = Vec::with_capacity(self.channels.len());
        let mut channel_traces = Vec::with_capacity(self.channels.len());
        for layers in &self.channels {
            let mut traces = Vec::with_capacity(layers.len());
            let mut x = x1.clone();
            for layer in layers {
                let (next, trace) = layer.forward(&x)?;
                traces.push(trace);
                x = next;
            }
            features.push(x);
            channel_traces.push(traces);
        }
        let refs: Vec<&Tensor<T>> = features.iter().collect();
        let (fused_in, concat) = concat_channels(&refs)?;
        drop(features);
        let (hidden, fusion) = self.fusion.forward(&fused_in)?;
        let (out, output) = self.output.forward(&hidden)?;
        Ok((
            out,
            ForwardTrace {
                measurement,
                deconv,
                channels: channel_traces,
                concat,
                fusion,
                output,
                input_dims: image.dims(),
            },
        ))
    }

    /// Gradients of every parameter given `dLoss/dOutput`.
    pub fn backward(&self, trace: &ForwardTrace<T>, grad_out: &Tensor<T>) -> Result<Gradients<T>> {
        let out_dims = trace.output.conv.output_dims();
        out_dims
            .expect_eq(&grad_out.dims(), "Network::backward")
            .map_err(|e| {
                Error::usage(
                    "Network::backward",
                    format!("gradient does not match the traced output ({e})"),
                )
            })?;

        let g_output = self.output.backward(grad_out, &trace.output)?;
        let g_fusion = self.fusion.backward(&g_output.input, &trace.fusion)?;
        let g_features = split_channels_backward(&g_fusion.input, &trace.concat)?;

        let mut g_x1 = Tensor::zeros(trace.deconv.output_dims());
        let mut channel_grads = Vec::with_capacity(self.channels.len());
        for ((layers, traces), g_feature) in
            self.channels.iter().zip(&trace.channels).zip(g_features)
        {
            let mut g = g_feature;
            let mut grads = Vec::with_capacity(layers.len());
            for (layer, t) in layers.iter().zip(traces).rev() {
                let lg = layer.backward(&g, t)?;
                g = lg.input.clone();
                grads.push(lg);
            }
            grads.reverse();
            g_x1 = g_x1.add(&g)?;
            channel_grads.push(grads);
        }

        let g_deconv = conv_transpose2d_backward(&g_x1, &trace.deconv)?;
        let g_measure = self
            .measurement
            .backward(&g_deconv.input, &trace.measurement)?;
        debug_assert_eq!(g_measure.input.dims(), trace.input_dims);

        let mut values = Vec::with_capacity(self.params.len());
        let mut push = |g: ConvGrads<T>| {
            values.push(g.weights.into_data());
            if let Some(b) = g.bias {
                values.push(b);
            }
        };
        push(g_measure);
        push(g_deconv);
        for g in channel_grads.into_iter().flatten() {
            push(g);
        }
        push(g_fusion);
        push(g_output);
        Ok(Gradients { values })
    }

    /// Self-supervised reconstruction loss on `image` and its gradients.
    pub fn loss_and_gradients(&self, image: &Tensor<T>) -> Result<(T, Gradients<T>)> {
        let (out, trace) = self.forward_train(image)?;
        let (loss, grad) = mse_loss(&out, image)?;
        let grads = self.backward(&trace, &grad)?;
        Ok((loss, grads))
    }
}

/// Builds a network with He-initialized weights and zero biases. Each tensor
/// draws from a stream keyed by `seed` and its name, so tensors shared
/// between configurations start identical.
pub fn build_network<T: Scalar>(config: &NetworkConfig, seed: u64) -> Result<Network<T>> {
    let config = config.clone().normalized();
    let params = param_layout(&config)?;
    let values = params
        .iter()
        .map(|p| {
            if p.is_bias {
                Ok(vec![T::zero(); p.len()])
            } else {
                let dims = Dims::new(p.dims[0], p.dims[1], p.dims[2], p.dims[3]);
                Ok(he_init::<T>(dims, p.fan_in, derive_seed(seed, &p.name))?.into_data())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Network::from_parts(config, values)
}
