pub mod config;
pub mod error;
pub mod fluid;
pub mod ftsp;
pub mod model;
pub mod sim;
pub mod stationarity;
