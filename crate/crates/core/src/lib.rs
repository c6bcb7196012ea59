pub mod signal;
pub mod fast;
pub mod somatic;
pub mod classifier;
pub mod cue;
pub mod stim;
pub mod protocol;
pub mod sim;
pub mod demo;
pub mod audit;
pub mod io;
pub mod session;
pub mod cli;
