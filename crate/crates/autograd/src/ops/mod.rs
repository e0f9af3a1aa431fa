mod conv;
mod elementwise;
mod linalg;
mod reduce;
mod shape;
mod topk;

pub use conv::Conv1dSpec;
pub use elementwise::{sigmoid, silu, softplus, Elementwise};
pub use reduce::softmax_in_place;
pub use topk::topk_indices;
