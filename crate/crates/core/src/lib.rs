//! Safeguarded augmented Lagrangian methods for nonsmooth constrained problems.
//!
//! The crate is organised around a generic outer loop ([`alm`]) that knows
//! nothing about the problem beyond function values handed back by a
//! subproblem solver. Two applications plug into it:
//!
//! * [`denoise`]: variational Poisson denoising under multiscale
//!   Kullback-Leibler box constraints, solved with a stochastic NADAM inner loop.
//! * [`control`]: optimal control of the Poisson equation with an L¹ budget on
//!   the control, solved with a semismooth Newton inner loop on P1 finite elements.
//!
//! [`numkit`] holds the shared numerics and [`io`] the file formats.

pub mod alm;
pub mod control;
pub mod denoise;
pub mod io;
pub mod numkit;
