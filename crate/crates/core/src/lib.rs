pub mod dataset;
pub mod demand;
pub mod eval;
pub mod naive;
pub mod nnet;
pub mod simulator;
pub mod topology;
