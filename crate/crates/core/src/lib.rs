// SPDX-License-Identifier: Apache-2.0

//! SIMDRAM-style toolchain: majority-graph synthesis, row allocation,
//! uProgram generation and a functional DRAM subarray model.

pub mod mig;
pub mod allocator;
pub mod uprogram;
pub mod dramsim;
pub mod oplib;
pub mod curated;
pub mod corpus;
pub mod pipeline;
