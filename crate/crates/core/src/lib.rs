pub mod augment;
pub mod classifier;
pub mod concepts;
pub mod corpus;
pub mod error;
pub mod features;
pub mod interpret;
pub mod representations;
pub mod seed;
pub mod synthetic;

pub use error::{Error, Result};

// The book's chapters are compiled and run as doctests, one module each.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/classifier.md")]
    mod classifier {}
    #[doc = include_str!("../../../book/src/interpretation.md")]
    mod interpretation {}
    #[doc = include_str!("../../../book/src/representations.md")]
    mod representations {}
    #[doc = include_str!("../../../book/src/augmentation.md")]
    mod augmentation {}
    #[doc = include_str!("../../../book/src/concepts.md")]
    mod concepts {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
