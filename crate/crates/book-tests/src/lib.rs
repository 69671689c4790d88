// mdbook cannot test snippets that depend on a workspace crate, so the
// README and every chapter of the guide are included here as the docs of
// empty modules and `cargo test --doc` runs their code blocks. One module
// per file keeps a failing snippet traceable.

#[doc = include_str!("../../../README.md")]
pub mod readme {}
#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/grids.md")]
pub mod grids {}
#[doc = include_str!("../../../book/src/densities.md")]
pub mod densities {}
#[doc = include_str!("../../../book/src/ot.md")]
pub mod ot {}
#[doc = include_str!("../../../book/src/oit.md")]
pub mod oit {}
#[doc = include_str!("../../../book/src/meshes.md")]
pub mod meshes {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../book/src/accuracy.md")]
pub mod accuracy {}
