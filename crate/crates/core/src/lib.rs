//! Stability certificates for switched linear systems `ẋ = A(t) x` built
//! from quadratic Lyapunov functions of Kronecker-lifted systems.
//!
//! A level-`c` certificate is a Gram matrix `P` over the degree-`c`
//! monomials `y_c(x)`, giving the homogeneous Lyapunov function
//! `V_c(x) = y_c(x)ᵀ P y_c(x)` of order `2c`. Since `P ⪰ I`, every emitted
//! `V_c` is a sum of squares: `V_c(x) = ‖L y_c(x)‖²` for `P = LᵀL`.

pub mod analysis;
pub mod certificate;
pub mod error;
pub mod hierarchy;
pub mod linalg;
pub mod sdp;
pub mod simulate;
pub mod system;
pub mod tensor_lift;

pub use certificate::{certify, Certificate, CertifyOptions, Objective, Outcome};
pub use error::{Error, Result};
pub use system::SwitchedSystem;
