//! Forward computation for fully-connected, convolutional, pooling and
//! recurrent layers in augmented-matrix form.

mod activation;
mod conv;
mod dense;
mod params;
mod recurrent;

pub use activation::{softmax_rows, Activation};
pub use conv::{
    conv_forward, extract_receptive_fields, fields_tensor, im2col_augmented, ConvOutput, ConvSpec,
    MaxPool, Tensor4,
};
pub(crate) use conv::{col2im, tensor_to_rows};
pub use dense::{augment, fc_forward};
pub(crate) use dense::{accumulate_param_gradient, input_gradient, mean_of_rows};
pub use params::{AugmentedParams, ParamKind};
pub use recurrent::{lstm_forward, lstm_units, recur_forward, LstmGates, LstmStep, RecurStep};
