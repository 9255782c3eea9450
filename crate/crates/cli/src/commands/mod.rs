pub mod analyze;
pub mod calibrate;
pub mod demo;
pub mod plot;
pub mod run;
pub mod summarize;
