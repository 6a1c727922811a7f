//! The chapters of the guide in `book/src`, included so that their code
//! blocks run as doc tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/coupling.md")]
pub mod coupling {}

#[doc = include_str!("../../../book/src/anderson.md")]
pub mod anderson {}

#[doc = include_str!("../../../book/src/adaptivity.md")]
pub mod adaptivity {}

#[doc = include_str!("../../../book/src/stiff.md")]
pub mod stiff {}

#[doc = include_str!("../../../book/src/noise.md")]
pub mod noise {}

#[doc = include_str!("../../../book/src/tuning.md")]
pub mod tuning {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
