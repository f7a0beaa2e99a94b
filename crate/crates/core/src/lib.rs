pub mod augment;
pub mod cli;
pub mod dataio;
pub mod hetgraph;
pub mod layers;
pub mod metrics;
pub mod numerics;
pub mod objective;
pub mod train;
