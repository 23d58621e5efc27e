pub mod agent;
pub mod attention;
pub mod conversation;
pub mod cost;
pub mod cpl;
pub mod env;
pub mod policy;
pub mod rng;
pub mod stats;
pub mod suite;
