pub mod cli;
pub mod kernels;
pub mod oracle;
pub mod signal;
pub mod solver;
