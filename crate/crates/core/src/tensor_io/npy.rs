//! Little-endian float32 arrays in the `.npy` v1.0 container.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use npyz::{DType, Order, TypeStr, WriterBuilder};

use crate::error::{Error, Result};

fn f32_dtype() -> DType {
    DType::Plain("<f4".parse::<TypeStr>().expect("static type string"))
}

/// Reads a C-ordered `<f4` array, returning its shape and flat data.
pub fn read_f32_array(path: &Path) -> Result<(Vec<usize>, Vec<f32>)> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let npy = npyz::NpyFile::new(BufReader::new(file)).map_err(|e| Error::Format {
        path: display.clone(),
        reason: e.to_string(),
    })?;
    if npy.dtype() != f32_dtype() {
        return Err(Error::Format {
            path: display,
            reason: format!("expected dtype <f4, found {}", npy.dtype().descr()),
        });
    }
    if npy.order() != Order::C {
        return Err(Error::Format {
            path: display,
            reason: "fortran-ordered arrays are not supported".into(),
        });
    }
    let shape: Vec<usize> = npy.shape().iter().map(|&d| d as usize).collect();
    let data = npy.into_vec::<f32>().map_err(|e| Error::Format {
        path: display.clone(),
        reason: e.to_string(),
    })?;
    if data.len() != shape.iter().product::<usize>() {
        return Err(Error::Format {
            path: display,
            reason: format!("payload holds {} values, shape {:?}", data.len(), shape),
        });
    }
    Ok((shape, data))
}

/// Writes `data` as a C-ordered `<f4` array of the given shape.
pub fn write_f32_array(path: &Path, shape: &[usize], data: &[f32]) -> Result<()> {
    debug_assert_eq!(shape.iter().product::<usize>(), data.len());
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let shape: Vec<u64> = shape.iter().map(|&d| d as u64).collect();
    let mut writer = npyz::WriteOptions::<f32>::new()
        .dtype(f32_dtype())
        .shape(&shape)
        .writer(&mut out)
        .begin_nd()
        .map_err(|e| Error::io(path, e))?;
    writer
        .extend(data.iter().copied())
        .map_err(|e| Error::io(path, e))?;
    writer.finish().map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}
