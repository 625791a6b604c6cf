//! Measurement-matrix design for collaborative compressive detection with an
//! eavesdropper deflection constraint.

pub mod designers;
pub mod etf_construction;
pub mod linalg_frames;
pub mod matrix_file;
pub mod secrecy_model;
pub mod simulator;
pub mod tolerance;
