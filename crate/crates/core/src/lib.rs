pub mod dataset;
pub mod eval;
pub mod export;
pub mod lang;
pub mod profile;
pub mod series;
pub mod store;
pub mod synth;
pub mod tokens;
pub mod value;
