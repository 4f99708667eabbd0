pub mod belief;
pub mod bki;
pub mod cli;
pub mod ellipsoid;
pub mod eval;
pub mod gaussian;
pub mod kernel;
pub mod map;
pub mod refine;
pub mod spatial;
