pub mod crossval;
pub mod eval;
pub mod regions;
pub mod synth;
pub mod train;

mod common;
