use pyo3::prelude::*;

#[pymodule]
fn rankzeta_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
