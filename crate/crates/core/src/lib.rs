pub mod dynsys;
pub mod error;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod readout;
pub mod reservoir;
pub mod sparse;
pub mod wiener;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/signals.md")]
    mod signals {}
    #[doc = include_str!("../../../book/src/reservoir.md")]
    mod reservoir {}
    #[doc = include_str!("../../../book/src/readout.md")]
    mod readout {}
    #[doc = include_str!("../../../book/src/wiener.md")]
    mod wiener {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/alpha.md")]
    mod alpha {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
