pub mod harness;
pub mod messages;
pub mod node;
pub mod sim;
pub mod trust_math;
