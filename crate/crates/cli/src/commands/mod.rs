pub mod data;
pub mod evaluate;
pub mod explain;
pub mod prompt;
pub mod train;
