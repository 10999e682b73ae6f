//! Selection kernels, finite measures on `[0,1]` and the parameter bundle of
//! the limit processes.

mod kernel;
mod measure;
mod params;

pub use kernel::{
    binomial_pmf, convolution_power, negative_binomial_pmf, SelectionKernel, SumDistribution, TablePmf, TableRow,
    INFINITE_PARENTS,
};
pub(crate) use kernel::geometric_excess;
pub use measure::{Atom, AtomSampler, DensityLaw, FiniteMeasure, MeasureSpec};
pub use params::{check_master_condition, LimitParams, LimitSpec};
