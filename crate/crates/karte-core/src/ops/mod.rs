//! Layer forward/backward passes used by the captioning model.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod lstm;
pub mod matmul;

pub use activation::{log_softmax_rows, relu, relu_backward, softmax, softmax_backward};
pub use conv::{conv2d, conv2d_backward, maxpool2d, maxpool2d_backward, Conv2dCache, MaxPoolCache};
pub use dense::{dense, dense_backward};
pub use dropout::{dropout, dropout_backward, DropoutMask};
pub use lstm::{lstm_cell, lstm_cell_backward, LstmCache, LstmParams};
