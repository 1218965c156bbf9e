pub mod error;
pub mod special;
pub mod quad;
pub mod dyson;
pub mod blockdet;
pub mod charflow;
pub mod randmat;
pub mod ginexact;
pub mod stats;
pub mod laws;
pub mod harness;
