pub mod error;
pub mod experiments;
pub mod field;
pub mod likelihood;
pub mod material_point;
pub mod optimize;
mod solve;
pub mod strain_life;
pub mod tensor;
pub mod weakest_link;

pub use error::{Error, Result};
