//! Desk-scale simulator of an adiabatic quantum factorization pipeline on an
//! NV-center two-qubit register.
//!
//! The pipeline: compile an odd semiprime into a problem Hamiltonian
//! ([`factor_compiler`]), evolve it adiabatically ([`adiabatic_engine`]), map
//! the interpolated Hamiltonian onto rotating-frame MW/RF control parameters
//! ([`nv_map`]), synthesize piecewise-constant optimal-control pulses
//! ([`pulse_opt`]), and simulate 16-setting state tomography with imperfect
//! initialization and amplitude-noise models ([`tomography`], [`error_model`]).
//!
//! All numerics are dense complex double precision over Hilbert-space
//! dimensions at most 9 ([`qcore`]).

pub mod adiabatic_engine;
pub mod cli;
pub mod error_model;
pub mod factor_compiler;
pub mod nv_map;
pub mod pulse_opt;
pub mod qcore;
pub mod tomography;
