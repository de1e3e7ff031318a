pub mod hydro;
pub mod sim;
pub mod augment;
pub mod nn;
pub mod experiment;
