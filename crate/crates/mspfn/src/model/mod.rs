//! The multi-scale progressive fusion network.
//!
//! Submodules: [`config`] (shapes of the architecture and its named
//! variants), [`params`] (ordered parameter storage), [`layers`] (LSTM cell,
//! attention unit, U-shaped block), [`net`] (stage wiring and the full
//! forward pass).

mod config;
mod layers;
mod net;
mod params;

pub use config::{
    make_variant, param_count, param_schema, ModelConfig, ParamKind, ParamSpec, Variant,
    VARIANT_NAMES,
};
pub use layers::{cau_forward, conv_lstm_step, urab_forward, AttnMode, LstmState};
pub use net::{
    cfm_forward, cfm_step, ffm_chain, initial_features, mspfn_forward, rm_forward, ModelOutput,
};
pub use params::ParamStore;
