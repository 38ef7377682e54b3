pub mod config;
pub mod plot;
pub mod run;
pub mod table;
