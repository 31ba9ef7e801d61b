pub mod error;
pub mod freegroup;
pub mod rational;
pub mod graph;
pub mod graphmap;
pub mod folding;
pub mod balanced;
pub mod geodesy;
pub mod cli;
