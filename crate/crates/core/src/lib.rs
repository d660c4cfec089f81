pub mod cli;
pub mod energy;
pub mod evalkit;
pub mod optimizer;
pub mod raster;
pub mod shapemodel;
pub mod synth;
