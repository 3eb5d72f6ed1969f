//! Discrete Ricci flow with surgery on weighted graphs.

pub mod curvature;
pub mod graph;
pub mod lp;
pub mod oracles;
pub mod tolerance;
pub mod transport;
pub mod flow;
pub mod surgery;
pub mod validation;
