//! Rectifier MLP with a scaled cosine-similarity head, full forward traces and
//! hand-written backpropagation.

mod activation;
mod forward;
mod grad;
mod io;
mod model;

pub use activation::{activation_ratio, normal_cdf, normal_pdf, Activation};
pub use forward::{forward, with_last_hidden, ForwardTrace};
pub use grad::{backward, mean_loss, BatchOutput, Gradients};
pub use io::ModelFile;
pub use model::{build_mlp, MlpModel, MlpSpec};
