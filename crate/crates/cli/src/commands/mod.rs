pub mod gen;
pub mod plan;
pub mod sweep;
pub mod train;
