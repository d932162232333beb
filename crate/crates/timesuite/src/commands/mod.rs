pub mod check;
pub mod demo;
pub mod eval;
pub mod tgc;
