// SPDX-License-Identifier: Apache-2.0

//! Python bindings: `import simdram`.

use std::collections::HashMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use simdram_core::allocator::{allocate_rows_with, PhaseMode};
use simdram_core::curated;
use simdram_core::mig::{self, DEFAULT_ITERATIONS};
use simdram_core::oplib::{self, Op, OpOptions};
use simdram_core::pipeline::{self as pl, Mode, PipelineConfig};
use simdram_core::uprogram;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn op_of(name: &str) -> PyResult<Op> {
    name.parse::<Op>().map_err(err)
}

fn config(mode: &str, unsigned: bool, strict_division: bool, iterations: usize, seed: u64) -> PyResult<PipelineConfig> {
    let mode = match mode {
        "curated" => Mode::Curated,
        "generated" => Mode::Generated,
        m => return Err(err(format!("unknown mode {m:?}"))),
    };
    Ok(PipelineConfig { mode, opts: OpOptions { unsigned, strict_division }, iterations, seed, ..Default::default() })
}

/// A majority-inverter graph.
#[pyclass(name = "Mig", module = "simdram")]
#[derive(Clone)]
struct PyMig(mig::Mig);

#[pymethods]
impl PyMig {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        mig::Mig::parse(text).map(PyMig).map_err(err)
    }

    /// Naive 1:1 conversion of the two-output full adder.
    #[staticmethod]
    fn full_adder() -> PyResult<Self> {
        mig::naive_mig_from_aoig(&mig::full_adder_aoig()).map(PyMig).map_err(err)
    }

    /// Hand-written one-bit slice of `op`.
    #[staticmethod]
    fn curated(op: &str) -> PyResult<Self> {
        Ok(PyMig(curated::curated_mig(op_of(op)?)))
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    fn maj_count(&self) -> usize {
        self.0.maj_count()
    }

    fn input_names(&self) -> Vec<String> {
        self.0.input_names()
    }

    fn eval(&self, assignment: HashMap<String, bool>) -> PyResult<Vec<bool>> {
        self.0.eval(&assignment).map_err(err)
    }

    fn equivalent(&self, other: &PyMig) -> bool {
        self.0.equivalent(&other.0)
    }

    #[pyo3(signature = (iterations=DEFAULT_ITERATIONS, seed=0))]
    fn optimize(&self, iterations: usize, seed: u64) -> Self {
        PyMig(mig::optimize(&self.0, iterations, seed))
    }

    fn normalize_inverters(&self) -> Self {
        PyMig(mig::normalize_inverters(&self.0))
    }

    /// Row allocation dump for an inverter-normalized graph.
    #[pyo3(signature = (strict=false))]
    fn allocate(&self, strict: bool) -> PyResult<String> {
        let mode = if strict { PhaseMode::StrictPseudocode } else { PhaseMode::Prose };
        allocate_rows_with(&self.0, mode).map(|a| a.dump()).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Mig(inputs={}, maj={})", self.0.input_names().len(), self.0.maj_count())
    }
}

/// An AAP/AP command sequence.
#[pyclass(name = "MicroProgram", module = "simdram")]
#[derive(Clone)]
struct PyProgram(uprogram::MicroProgram);

#[pymethods]
impl PyProgram {
    #[staticmethod]
    fn decode(text: &str) -> PyResult<Self> {
        uprogram::MicroProgram::decode(text).map(PyProgram).map_err(err)
    }

    fn encode(&self) -> String {
        self.0.encode()
    }

    #[getter]
    fn op(&self) -> String {
        self.0.op_name.clone()
    }

    #[getter]
    fn width(&self) -> u32 {
        self.0.width
    }

    /// `{"aap": .., "ap": .., "total": ..}`
    fn counts<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c = self.0.counts();
        let d = PyDict::new_bound(py);
        d.set_item("aap", c.aap)?;
        d.set_item("ap", c.ap)?;
        d.set_item("total", c.total)?;
        Ok(d)
    }

    fn check(&self) -> PyResult<()> {
        uprogram::check_read_before_write(&self.0).map_err(|e| err(format!("{e:?}")))?;
        uprogram::check_phase_ordering(&self.0).map_err(|e| err(format!("{e:?}")))
    }

    fn __len__(&self) -> usize {
        self.0.ops.len()
    }
}

#[pyfunction]
fn list_operations() -> Vec<&'static str> {
    Op::ALL.iter().map(|o| o.name()).collect()
}

#[pyfunction]
#[pyo3(signature = (op, n, args, unsigned=false, strict_division=false))]
fn oracle(op: &str, n: u32, args: Vec<u64>, unsigned: bool, strict_division: bool) -> PyResult<u64> {
    oplib::oracle(op_of(op)?, n, &args, &OpOptions { unsigned, strict_division }).map_err(err)
}

#[pyfunction]
fn reference_count(op: &str, n: u32) -> PyResult<String> {
    Ok(oplib::reference_count(op_of(op)?, n).to_string())
}

#[pyfunction]
#[pyo3(signature = (op, n, mode="curated", unsigned=false, strict_division=false, iterations=DEFAULT_ITERATIONS, seed=0))]
fn build_program(
    op: &str,
    n: u32,
    mode: &str,
    unsigned: bool,
    strict_division: bool,
    iterations: usize,
    seed: u64,
) -> PyResult<PyProgram> {
    let cfg = config(mode, unsigned, strict_division, iterations, seed)?;
    pl::build_program(op_of(op)?, n, &cfg).map(PyProgram).map_err(err)
}

/// Run `op` on per-role input lists; returns one output per lane.
#[pyfunction]
#[pyo3(signature = (op, n, inputs, mode="curated", unsigned=false, strict_division=false))]
fn run(op: &str, n: u32, inputs: Vec<Vec<u64>>, mode: &str, unsigned: bool, strict_division: bool) -> PyResult<Vec<u64>> {
    let cfg = config(mode, unsigned, strict_division, DEFAULT_ITERATIONS, 0)?;
    let r = pl::run_operation(op_of(op)?, n, &inputs, &cfg).map_err(err)?;
    if let Some((lane, e)) = r.lane_errors.first() {
        if strict_division {
            return Err(err(format!("lane {lane}: {e}")));
        }
    }
    Ok(r.outputs)
}

/// Check the program for `op` against the scalar oracle.
#[pyfunction]
#[pyo3(signature = (op, n, mode="curated", unsigned=false))]
fn verify<'py>(py: Python<'py>, op: &str, n: u32, mode: &str, unsigned: bool) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config(mode, unsigned, false, DEFAULT_ITERATIONS, 0)?;
    let r = pl::verify_operation(op_of(op)?, n, &cfg).map_err(err)?;
    let d = PyDict::new_bound(py);
    d.set_item("op", r.op)?;
    d.set_item("n", r.n)?;
    d.set_item("exhaustive", r.exhaustive)?;
    d.set_item("lanes_checked", r.lanes_checked)?;
    d.set_item("mismatches", r.mismatches)?;
    d.set_item("lane_independent", r.lane_independent)?;
    Ok(d)
}

/// Scaling class name for (n, total) points.
#[pyfunction]
fn classify_scaling(points: Vec<(u32, usize)>) -> PyResult<String> {
    uprogram::classify_scaling(&points).map(|c| format!("{c:?}")).map_err(|e| err(format!("{e:?}")))
}

#[pymodule]
fn simdram(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMig>()?;
    m.add_class::<PyProgram>()?;
    m.add_function(wrap_pyfunction!(list_operations, m)?)?;
    m.add_function(wrap_pyfunction!(oracle, m)?)?;
    m.add_function(wrap_pyfunction!(reference_count, m)?)?;
    m.add_function(wrap_pyfunction!(build_program, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(classify_scaling, m)?)?;
    Ok(())
}
