//! Runs the guide's code blocks as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}
#[doc = include_str!("../../../book/src/assimilation.md")]
pub mod assimilation {}
#[doc = include_str!("../../../book/src/causal_strength.md")]
pub mod causal_strength {}
#[doc = include_str!("../../../book/src/causal_range.md")]
pub mod causal_range {}
#[doc = include_str!("../../../book/src/validation.md")]
pub mod validation {}
#[doc = include_str!("../../../book/src/command_line.md")]
pub mod command_line {}
