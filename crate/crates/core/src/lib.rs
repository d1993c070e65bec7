pub mod admission;
pub mod assurance;
pub mod cli;
pub mod control;
pub mod metrics;
pub mod model;
pub mod net;
pub mod protocol;
pub mod sim;
