pub mod app;
pub mod data;
pub mod model;
pub mod portfolio;
pub mod prediction;
pub mod regression;
pub mod solver;
