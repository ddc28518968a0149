pub mod ablate;
pub mod calibrate;
pub mod eval;
pub mod gen_synth;
pub mod run;
