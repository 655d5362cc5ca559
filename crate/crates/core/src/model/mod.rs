//! Network definition, kernels, weight storage and model accounting.

pub mod config;
pub mod net;
pub mod ops;
pub mod receptive;
pub mod schema;
pub mod tensor;
pub mod weights;

pub use config::{ModelConfig, ResidualDomain};
pub use net::{ov_forward, NetworkOutput, OvNetwork};
pub use ops::{conv2d, ConvSpec};
pub use receptive::{empirical_receptive_field, receptive_field, Component};
pub use schema::{count_parameters, param_specs, ParamKind, ParamSpec};
pub use tensor::{Real, Tensor};
pub use weights::{identity_params, load_weights, save_weights, ModelWeights, Param, ParamMap};
