//! Criterion benchmarks for wfduality-core; see benches/.
