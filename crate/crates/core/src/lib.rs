pub mod canvas;
pub mod chat;
pub mod config;
pub mod prompt;
pub mod providers;
pub mod raster;
pub mod speech;
pub mod session;
