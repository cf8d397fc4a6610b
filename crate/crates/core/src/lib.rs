pub mod compensator;
pub mod eigen;
pub mod error;
pub mod evolve;
pub mod exponents;
pub mod linalg;
pub mod lyapunov;
pub mod scalar;
pub mod spectral;
pub mod sysmodel;

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/systems.md")]
    mod systems {}
    #[doc = include_str!("../../../book/src/spectrum.md")]
    mod spectrum {}
    #[doc = include_str!("../../../book/src/certificates.md")]
    mod certificates {}
    #[doc = include_str!("../../../book/src/decay.md")]
    mod decay {}
    #[doc = include_str!("../../../book/src/exponents.md")]
    mod exponents {}
}
