pub mod bahadur;
pub mod basis;
pub mod bootstrap;
pub mod cli;
pub mod config;
pub mod grid;
pub mod input;
mod linalg;
pub mod local;
pub mod mono_test;
pub mod quadrature;
pub mod rng;
pub mod simulation;
pub mod solver;
