pub mod error;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod pde;
pub mod analysis;
pub mod design;
pub mod qp;
pub mod repair;
pub mod report;
pub mod ssa;
pub mod suite;
pub mod tensor;

pub use error::{Error, Result};

// The guide's listings run as doc-tests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/meshes.md")]
    mod meshes {}
    #[doc = include_str!("../../../book/src/assembly.md")]
    mod assembly {}
    #[doc = include_str!("../../../book/src/repairs.md")]
    mod repairs {}
    #[doc = include_str!("../../../book/src/backward-analysis.md")]
    mod backward_analysis {}
    #[doc = include_str!("../../../book/src/design.md")]
    mod design {}
    #[doc = include_str!("../../../book/src/qp.md")]
    mod qp {}
    #[doc = include_str!("../../../book/src/deterministic.md")]
    mod deterministic {}
    #[doc = include_str!("../../../book/src/stochastic.md")]
    mod stochastic {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
