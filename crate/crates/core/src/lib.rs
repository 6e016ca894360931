mod binio;
pub mod data;
pub mod governor;
pub mod error;
pub mod model;
pub mod ops;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{build_model, ActiveConfig, GroupModel, GroupNetArch, Prediction};
pub use tensor::Tensor;
