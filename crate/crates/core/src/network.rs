//! Fixed-topology networks built from the layer primitives, with a forward
//! pass that records everything the backward pass and the RLS input
//! averaging need.

use ndarray::Axis;
use rand::Rng;

use crate::error::{Error, Result};
use crate::layers::{
    augment, conv_forward, fc_forward, lstm_forward, recur_forward, Activation, AugmentedParams,
    ConvSpec, LstmStep, MaxPool, ParamKind, RecurStep, Tensor4,
};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputShape {
    Flat(usize),
    Image {
        channels: usize,
        height: usize,
        width: usize,
    },
}

#[derive(Debug, Clone)]
pub enum Layer {
    Dense {
        name: String,
        params: AugmentedParams,
        activation: Activation,
    },
    Conv {
        name: String,
        params: AugmentedParams,
        spec: ConvSpec,
        activation: Activation,
    },
    MaxPool(MaxPool),
    Flatten,
}

#[derive(Debug, Clone)]
pub struct FeedForwardNet {
    pub input: InputShape,
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone)]
pub enum Cell {
    Recur {
        name: String,
        w: AugmentedParams,
        v: AugmentedParams,
        activation: Activation,
    },
    Lstm {
        name: String,
        w: AugmentedParams,
        v: AugmentedParams,
    },
}

impl Cell {
    pub fn name(&self) -> &str {
        match self {
            Cell::Recur { name, .. } | Cell::Lstm { name, .. } => name,
        }
    }

    pub fn units(&self) -> usize {
        match self {
            Cell::Recur { v, .. } => v.outputs(),
            Cell::Lstm { v, .. } => v.outputs() / 4,
        }
    }

    fn w(&self) -> &AugmentedParams {
        match self {
            Cell::Recur { w, .. } | Cell::Lstm { w, .. } => w,
        }
    }
}

/// Which time steps carry a loss: all of them (`t₀ = 1`) or only the last
/// (`t₀ = T`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceMode {
    Prediction,
    Classification,
}

impl SequenceMode {
    /// 1-based first output time for a sequence of length `t`.
    pub fn t0(self, t: usize) -> usize {
        match self {
            SequenceMode::Prediction => 1,
            SequenceMode::Classification => t,
        }
    }

    /// Number of output times `T_L = T − t₀ + 1`.
    pub fn output_steps(self, t: usize) -> usize {
        t + 1 - self.t0(t)
    }
}

#[derive(Debug, Clone)]
pub struct SequenceNet {
    pub input_dim: usize,
    pub cells: Vec<Cell>,
    pub output_name: String,
    pub output: AugmentedParams,
    pub output_activation: Activation,
    pub mode: SequenceMode,
}

#[derive(Debug, Clone)]
pub enum Network {
    FeedForward(FeedForwardNet),
    Sequence(SequenceNet),
}

/// A minibatch of network inputs.
#[derive(Debug, Clone)]
pub enum Input {
    Flat(Matrix),
    Image(Tensor4),
    /// One `M×N₀` matrix per time step.
    Sequence(Vec<Matrix>),
}

impl Input {
    pub fn batch_size(&self) -> usize {
        match self {
            Input::Flat(m) => m.nrows(),
            Input::Image(t) => t.len_of(Axis(0)),
            Input::Sequence(s) => s.first().map_or(0, |m| m.nrows()),
        }
    }
}

/// How the RLS step scales its effective ratio factor for a parameter matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    /// FC or CONV layer of a feedforward net: one averaged input per step.
    FeedForward,
    /// Output layer of a sequence net, averaged over `T_L` output times.
    SequenceOutput,
    /// `Θ_w` or `Θ_v` of a recurrent layer, averaged over all `T` times.
    Recurrent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    pub kind: ParamKind,
    pub role: ParamRole,
    pub shape: (usize, usize),
    /// True for the network's output layer.
    pub is_output: bool,
}

#[derive(Debug, Clone)]
pub enum LayerCache {
    Dense {
        x_aug: Matrix,
        z: Matrix,
        y: Matrix,
    },
    Conv {
        x_aug: Matrix,
        z: Tensor4,
        y: Tensor4,
        in_dims: (usize, usize, usize, usize),
    },
    MaxPool {
        argmax: Vec<usize>,
        in_dims: (usize, usize, usize, usize),
    },
    Flatten {
        in_dims: (usize, usize, usize, usize),
    },
}

#[derive(Debug, Clone)]
pub enum CellCache {
    Recur(Vec<RecurStep>),
    Lstm(Vec<LstmStep>),
}

#[derive(Debug, Clone)]
pub struct OutputStep {
    pub x_aug: Matrix,
    pub z: Matrix,
    pub y: Matrix,
}

#[derive(Debug, Clone)]
pub struct SequenceCache {
    pub cells: Vec<CellCache>,
    /// Output layer records for times `t₀..=T`.
    pub outputs: Vec<OutputStep>,
    pub t0: usize,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub enum ForwardCache {
    FeedForward(Vec<LayerCache>),
    Sequence(SequenceCache),
}

impl ForwardCache {
    /// Output-layer linear outputs `Z^L`, one per output time.
    pub fn logits(&self) -> Vec<&Matrix> {
        match self {
            ForwardCache::FeedForward(layers) => match layers.last() {
                Some(LayerCache::Dense { z, .. }) => vec![z],
                _ => Vec::new(),
            },
            ForwardCache::Sequence(s) => s.outputs.iter().map(|o| &o.z).collect(),
        }
    }

    /// Output-layer activations `Y^L`, one per output time.
    pub fn outputs(&self) -> Vec<&Matrix> {
        match self {
            ForwardCache::FeedForward(layers) => match layers.last() {
                Some(LayerCache::Dense { y, .. }) => vec![y],
                _ => Vec::new(),
            },
            ForwardCache::Sequence(s) => s.outputs.iter().map(|o| &o.y).collect(),
        }
    }

    /// Augmented input matrices feeding parameter matrix `index` (in
    /// [`Network::param_info`] order). Their rows are what the RLS step
    /// averages into `x̄`.
    pub fn augmented_inputs(&self, index: usize) -> Result<Vec<&Matrix>> {
        match self {
            ForwardCache::FeedForward(layers) => {
                let found = layers
                    .iter()
                    .filter_map(|l| match l {
                        LayerCache::Dense { x_aug, .. } | LayerCache::Conv { x_aug, .. } => {
                            Some(x_aug)
                        }
                        _ => None,
                    })
                    .nth(index);
                found
                    .map(|x| vec![x])
                    .ok_or_else(|| Error::State(format!("no cached input for parameter {index}")))
            }
            ForwardCache::Sequence(s) => {
                let cell = index / 2;
                if cell < s.cells.len() {
                    let use_w = index % 2 == 0;
                    Ok(match &s.cells[cell] {
                        CellCache::Recur(steps) => steps
                            .iter()
                            .map(|st| if use_w { &st.x_w } else { &st.x_v })
                            .collect(),
                        CellCache::Lstm(steps) => steps
                            .iter()
                            .map(|st| if use_w { &st.x_w } else { &st.x_v })
                            .collect(),
                    })
                } else if index == 2 * s.cells.len() {
                    Ok(s.outputs.iter().map(|o| &o.x_aug).collect())
                } else {
                    Err(Error::State(format!("no cached input for parameter {index}")))
                }
            }
        }
    }

    /// Sequence length `T` (1 for feedforward caches).
    pub fn steps(&self) -> usize {
        match self {
            ForwardCache::FeedForward(_) => 1,
            ForwardCache::Sequence(s) => s.steps,
        }
    }
}

enum Signal {
    Flat(Matrix),
    Image(Tensor4),
}

impl Network {
    /// Fully-connected stack: `sizes = [N₀, N₁, …, N_L]`.
    pub fn mlp<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::config(format!("invalid MLP sizes {sizes:?}")));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Layer::Dense {
                name: if i == last { "out".into() } else { format!("fc{}", i + 1) },
                params: AugmentedParams::uniform(w[0], w[1], ParamKind::Fc, rng),
                activation: if i == last { output } else { hidden },
            })
            .collect();
        let net = Network::FeedForward(FeedForwardNet {
            input: InputShape::Flat(sizes[0]),
            layers,
        });
        net.validate()?;
        Ok(net)
    }

    /// CONV blocks (3×3, stride 1, same padding, ReLU), each followed by 2×2
    /// max pooling, then ReLU FC hidden layers and an output layer.
    ///
    /// `blocks` lists the channel counts per block, e.g. `[[64, 64], [128, 128], [256]]`.
    pub fn conv_net<R: Rng + ?Sized>(
        input: (usize, usize, usize),
        blocks: &[Vec<usize>],
        fc_hidden: &[usize],
        classes: usize,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let (mut c, mut h, mut w) = input;
        let mut layers = Vec::new();
        let mut conv_idx = 0;
        for block in blocks {
            for &out_c in block {
                conv_idx += 1;
                let spec = ConvSpec::same(c, out_c, 3);
                (h, w) = spec.output_dims(h, w)?;
                layers.push(Layer::Conv {
                    name: format!("conv{conv_idx}"),
                    params: AugmentedParams::uniform(spec.field_len(), out_c, ParamKind::Conv, rng),
                    spec,
                    activation: Activation::Relu,
                });
                c = out_c;
            }
            let pool = MaxPool { size: 2 };
            (h, w) = pool.output_dims(h, w)?;
            layers.push(Layer::MaxPool(pool));
        }
        layers.push(Layer::Flatten);
        let mut fan_in = c * h * w;
        for (i, &n) in fc_hidden.iter().enumerate() {
            layers.push(Layer::Dense {
                name: format!("fc{}", i + 1),
                params: AugmentedParams::uniform(fan_in, n, ParamKind::Fc, rng),
                activation: Activation::Relu,
            });
            fan_in = n;
        }
        layers.push(Layer::Dense {
            name: "out".into(),
            params: AugmentedParams::uniform(fan_in, classes, ParamKind::Fc, rng),
            activation: output,
        });
        let net = Network::FeedForward(FeedForwardNet {
            input: InputShape::Image {
                channels: input.0,
                height: input.1,
                width: input.2,
            },
            layers,
        });
        net.validate()?;
        Ok(net)
    }

    /// Stacked recurrent network. `lstm` selects LSTM cells; otherwise
    /// RECUR cells with tanh.
    pub fn stacked_recurrent<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        outputs: usize,
        lstm: bool,
        mode: SequenceMode,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || outputs == 0 || hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::config(format!(
                "invalid recurrent sizes: input {input_dim}, hidden {hidden:?}, outputs {outputs}"
            )));
        }
        let mut fan_in = input_dim;
        let mut cells = Vec::new();
        for (i, &n) in hidden.iter().enumerate() {
            let cell = if lstm {
                Cell::Lstm {
                    name: format!("lstm{}", i + 1),
                    w: AugmentedParams::uniform(fan_in, 4 * n, ParamKind::LstmW, rng),
                    v: AugmentedParams::uniform(n, 4 * n, ParamKind::LstmV, rng),
                }
            } else {
                Cell::Recur {
                    name: format!("rnn{}", i + 1),
                    w: AugmentedParams::uniform(fan_in, n, ParamKind::RecurW, rng),
                    v: AugmentedParams::uniform(n, n, ParamKind::RecurV, rng),
                    activation: Activation::Tanh,
                }
            };
            cells.push(cell);
            fan_in = n;
        }
        let net = Network::Sequence(SequenceNet {
            input_dim,
            cells,
            output_name: "out".into(),
            output: AugmentedParams::uniform(fan_in, outputs, ParamKind::Fc, rng),
            output_activation: output,
            mode,
        });
        net.validate()?;
        Ok(net)
    }

    /// Checks that the layer shapes chain together.
    pub fn validate(&self) -> Result<()> {
        match self {
            Network::FeedForward(ff) => {
                let mut shape = ff.input;
                for layer in &ff.layers {
                    shape = match (layer, shape) {
                        (Layer::Dense { params, name, .. }, InputShape::Flat(n)) => {
                            if params.fan_in() != n {
                                return Err(Error::config(format!(
                                    "{name}: expects {} inputs, gets {n}",
                                    params.fan_in()
                                )));
                            }
                            InputShape::Flat(params.outputs())
                        }
                        (
                            Layer::Conv { params, spec, name, .. },
                            InputShape::Image { channels, height, width },
                        ) => {
                            if spec.in_channels != channels
                                || params.theta.dim() != (spec.field_len() + 1, spec.out_channels)
                            {
                                return Err(Error::config(format!("{name}: channel mismatch")));
                            }
                            let (h, w) = spec.output_dims(height, width)?;
                            InputShape::Image {
                                channels: spec.out_channels,
                                height: h,
                                width: w,
                            }
                        }
                        (Layer::MaxPool(p), InputShape::Image { channels, height, width }) => {
                            let (h, w) = p.output_dims(height, width)?;
                            InputShape::Image {
                                channels,
                                height: h,
                                width: w,
                            }
                        }
                        (Layer::Flatten, InputShape::Image { channels, height, width }) => {
                            InputShape::Flat(channels * height * width)
                        }
                        (layer, shape) => {
                            return Err(Error::config(format!(
                                "layer {layer:?} cannot accept input of shape {shape:?}"
                            )))
                        }
                    };
                }
                match ff.layers.last() {
                    Some(Layer::Dense { .. }) => Ok(()),
                    _ => Err(Error::config("feedforward network must end with a dense layer")),
                }
            }
            Network::Sequence(sq) => {
                let mut fan_in = sq.input_dim;
                for cell in &sq.cells {
                    let n = cell.units();
                    let (w, v) = match cell {
                        Cell::Recur { w, v, .. } => (w, v),
                        Cell::Lstm { w, v, .. } => (w, v),
                    };
                    let cols = match cell {
                        Cell::Recur { .. } => n,
                        Cell::Lstm { .. } => 4 * n,
                    };
                    if w.theta.dim() != (fan_in + 1, cols) || v.theta.dim() != (n + 1, cols) {
                        return Err(Error::config(format!(
                            "{}: parameter shapes do not chain",
                            cell.name()
                        )));
                    }
                    fan_in = n;
                }
                if sq.output.fan_in() != fan_in {
                    return Err(Error::config("output layer does not match top recurrent layer"));
                }
                Ok(())
            }
        }
    }

    pub fn output_activation(&self) -> Activation {
        match self {
            Network::FeedForward(ff) => match ff.layers.last() {
                Some(Layer::Dense { activation, .. }) => *activation,
                _ => Activation::Identity,
            },
            Network::Sequence(sq) => sq.output_activation,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Network::FeedForward(ff) => match ff.layers.last() {
                Some(Layer::Dense { params, .. }) => params.outputs(),
                _ => 0,
            },
            Network::Sequence(sq) => sq.output.outputs(),
        }
    }

    /// Parameter matrices in canonical order: feedforward layers input to
    /// output; for sequence nets `Θ_w`, `Θ_v` of each cell bottom-up, then the
    /// output layer.
    pub fn param_info(&self) -> Vec<ParamInfo> {
        let mut out = Vec::new();
        match self {
            Network::FeedForward(ff) => {
                let last = ff
                    .layers
                    .iter()
                    .rposition(|l| matches!(l, Layer::Dense { .. }))
                    .unwrap_or(usize::MAX);
                for (i, layer) in ff.layers.iter().enumerate() {
                    if let Layer::Dense { name, params, .. } | Layer::Conv { name, params, .. } = layer
                    {
                        out.push(ParamInfo {
                            name: name.clone(),
                            kind: params.kind,
                            role: ParamRole::FeedForward,
                            shape: params.theta.dim(),
                            is_output: i == last,
                        });
                    }
                }
            }
            Network::Sequence(sq) => {
                for cell in &sq.cells {
                    let (w, v) = match cell {
                        Cell::Recur { w, v, .. } | Cell::Lstm { w, v, .. } => (w, v),
                    };
                    for (suffix, p) in [("w", w), ("v", v)] {
                        out.push(ParamInfo {
                            name: format!("{}.{suffix}", cell.name()),
                            kind: p.kind,
                            role: ParamRole::Recurrent,
                            shape: p.theta.dim(),
                            is_output: false,
                        });
                    }
                }
                out.push(ParamInfo {
                    name: sq.output_name.clone(),
                    kind: sq.output.kind,
                    role: ParamRole::SequenceOutput,
                    shape: sq.output.theta.dim(),
                    is_output: true,
                });
            }
        }
        out
    }

    pub fn params(&self) -> Vec<&AugmentedParams> {
        match self {
            Network::FeedForward(ff) => ff
                .layers
                .iter()
                .filter_map(|l| match l {
                    Layer::Dense { params, .. } | Layer::Conv { params, .. } => Some(params),
                    _ => None,
                })
                .collect(),
            Network::Sequence(sq) => {
                let mut v: Vec<&AugmentedParams> = Vec::new();
                for cell in &sq.cells {
                    match cell {
                        Cell::Recur { w, v: vv, .. } | Cell::Lstm { w, v: vv, .. } => {
                            v.push(w);
                            v.push(vv);
                        }
                    }
                }
                v.push(&sq.output);
                v
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut AugmentedParams> {
        match self {
            Network::FeedForward(ff) => ff
                .layers
                .iter_mut()
                .filter_map(|l| match l {
                    Layer::Dense { params, .. } | Layer::Conv { params, .. } => Some(params),
                    _ => None,
                })
                .collect(),
            Network::Sequence(sq) => {
                let mut v: Vec<&mut AugmentedParams> = Vec::new();
                for cell in &mut sq.cells {
                    match cell {
                        Cell::Recur { w, v: vv, .. } | Cell::Lstm { w, v: vv, .. } => {
                            v.push(w);
                            v.push(vv);
                        }
                    }
                }
                v.push(&mut sq.output);
                v
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.theta.len()).sum()
    }

    pub fn forward(&self, input: &Input) -> Result<ForwardCache> {
        match (self, input) {
            (Network::FeedForward(ff), Input::Flat(_) | Input::Image(_)) => {
                ff.forward(input).map(ForwardCache::FeedForward)
            }
            (Network::Sequence(sq), Input::Sequence(seq)) => {
                sq.forward(seq).map(ForwardCache::Sequence)
            }
            _ => Err(Error::dim("input kind does not match the network type")),
        }
    }

    /// Predicted class per example, from the last output time.
    pub fn predict(&self, input: &Input) -> Result<Vec<usize>> {
        let cache = self.forward(input)?;
        let logits = cache.logits();
        let z = logits.last().ok_or_else(|| Error::State("network produced no output".into()))?;
        Ok(z.rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0
            })
            .collect())
    }
}

impl FeedForwardNet {
    fn forward(&self, input: &Input) -> Result<Vec<LayerCache>> {
        let mut signal = match (input, self.input) {
            (Input::Flat(x), InputShape::Flat(n)) if x.ncols() == n => Signal::Flat(x.clone()),
            (Input::Image(x), InputShape::Image { channels, height, width })
                if x.dim().1 == channels && x.dim().2 == height && x.dim().3 == width =>
            {
                Signal::Image(x.clone())
            }
            _ => return Err(Error::dim("input batch does not match the network input shape")),
        };
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            signal = match (layer, signal) {
                (Layer::Dense { params, activation, .. }, Signal::Flat(y)) => {
                    let x_aug = augment(&y);
                    let (z, y) = fc_forward(&x_aug, params, *activation)?;
                    caches.push(LayerCache::Dense { x_aug, z, y: y.clone() });
                    Signal::Flat(y)
                }
                (Layer::Conv { params, spec, activation, .. }, Signal::Image(y)) => {
                    let in_dims = y.dim();
                    let out = conv_forward(&y, params, spec, *activation)?;
                    let next = out.y.clone();
                    caches.push(LayerCache::Conv {
                        x_aug: out.x_aug,
                        z: out.z,
                        y: out.y,
                        in_dims,
                    });
                    Signal::Image(next)
                }
                (Layer::MaxPool(pool), Signal::Image(y)) => {
                    let (out, argmax) = pool.forward(&y)?;
                    caches.push(LayerCache::MaxPool {
                        argmax,
                        in_dims: y.dim(),
                    });
                    Signal::Image(out)
                }
                (Layer::Flatten, Signal::Image(y)) => {
                    let in_dims = y.dim();
                    let (m, c, h, w) = in_dims;
                    caches.push(LayerCache::Flatten { in_dims });
                    let flat = y
                        .as_standard_layout()
                        .into_owned()
                        .into_shape_with_order((m, c * h * w))
                        .expect("contiguous");
                    Signal::Flat(flat)
                }
                _ => return Err(Error::dim("layer received a signal of the wrong rank")),
            };
        }
        Ok(caches)
    }
}

impl SequenceNet {
    fn forward(&self, seq: &[Matrix]) -> Result<SequenceCache> {
        let steps = seq.len();
        if steps == 0 {
            return Err(Error::dim("empty input sequence"));
        }
        let mut cells = Vec::with_capacity(self.cells.len());
        let mut current: Vec<Matrix> = seq.to_vec();
        for cell in &self.cells {
            if current[0].ncols() != cell.w().fan_in() {
                return Err(Error::dim(format!(
                    "{}: expects {} inputs, gets {}",
                    cell.name(),
                    cell.w().fan_in(),
                    current[0].ncols()
                )));
            }
            match cell {
                Cell::Recur { w, v, activation, .. } => {
                    let out = recur_forward(&current, w, v, *activation)?;
                    current = out.iter().map(|s| s.y.clone()).collect();
                    cells.push(CellCache::Recur(out));
                }
                Cell::Lstm { w, v, .. } => {
                    let out = lstm_forward(&current, w, v)?;
                    current = out.iter().map(|s| s.y.clone()).collect();
                    cells.push(CellCache::Lstm(out));
                }
            }
        }
        let t0 = self.mode.t0(steps);
        let mut outputs = Vec::with_capacity(steps + 1 - t0);
        for y_top in &current[t0 - 1..] {
            let x_aug = augment(y_top);
            let (z, y) = fc_forward(&x_aug, &self.output, self.output_activation)?;
            outputs.push(OutputStep { x_aug, z, y });
        }
        Ok(SequenceCache {
            cells,
            outputs,
            t0,
            steps,
        })
    }
}
