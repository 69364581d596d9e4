//! Binary model checkpoints.
//!
//! Little-endian layout, version 1:
//!
//! ```text
//! magic       8 bytes   "HEATCKPT"
//! version     u32       1
//! backend     u8        0 chebyshev, 1 hermite, 2 laguerre, 3 exact
//! order       u32       0 for exact
//! b           f64       Chebyshev domain length, 0 otherwise
//! dropout     f64
//! num_nodes   u64
//! scales      f64 × num_nodes
//! s_min       f64
//! s_max       f64
//! num_layers  u32
//! per layer:  rows u64, cols u64, activation u8 (0 relu, 1 identity), rows·cols f64 row-major
//! readout     u8        0 absent, 1 present
//! if present: w1 then w2, each as rows u64, cols u64, data f64 row-major
//! ```
//!
//! Floats are stored as raw IEEE bits, so save then load is bit-exact.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{Activation, Backend, Layer, Model, Readout};
use crate::error::{Error, Result};
use crate::kernel::{Family, PolynomialBasis, ScaleVector};

const MAGIC: &[u8; 8] = b"HEATCKPT";
const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn matrix(&mut self, m: &Array2<f64>) {
        self.u64(m.nrows() as u64);
        self.u64(m.ncols() as u64);
        for &v in m.iter() {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

fn corrupt(what: impl Into<String>) -> Error {
    Error::Input(format!("corrupt checkpoint: {}", what.into()))
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| corrupt("unexpected end of data"))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("length overflow"))
    }
    fn matrix(&mut self) -> Result<Array2<f64>> {
        let rows = self.len()?;
        let cols = self.len()?;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| corrupt("matrix size overflow"))?;
        if count.saturating_mul(8) > self.data.len() - self.pos {
            return Err(corrupt("matrix larger than remaining data"));
        }
        let data = (0..count).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(Array2::from_shape_vec((rows, cols), data).expect("shape from counts"))
    }
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    match &model.backend {
        Backend::Polynomial(basis) => {
            w.u8(match basis.family() {
                Family::Chebyshev => 0,
                Family::Hermite => 1,
                Family::Laguerre => 2,
            });
            w.u32(basis.order() as u32);
            w.f64(if basis.family() == Family::Chebyshev {
                basis.b()
            } else {
                0.0
            });
        }
        Backend::Exact => {
            w.u8(3);
            w.u32(0);
            w.f64(0.0);
        }
    }
    w.f64(model.dropout);
    w.u64(model.scales.len() as u64);
    for &s in model.scales.as_slice() {
        w.f64(s);
    }
    let (s_min, s_max) = model.scales.bounds();
    w.f64(s_min);
    w.f64(s_max);
    w.u32(model.layers.len() as u32);
    for layer in &model.layers {
        w.u64(layer.weight.nrows() as u64);
        w.u64(layer.weight.ncols() as u64);
        w.u8(match layer.activation {
            Activation::Relu => 0,
            Activation::Identity => 1,
        });
        for &v in layer.weight.iter() {
            w.f64(v);
        }
    }
    match &model.readout {
        Some(r) => {
            w.u8(1);
            w.matrix(&r.w1);
            w.matrix(&r.w2);
        }
        None => w.u8(0),
    }
    w.0
}

pub fn from_bytes(data: &[u8]) -> Result<Model> {
    let mut r = Reader { data, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let tag = r.u8()?;
    let order = r.u32()? as usize;
    let b = r.f64()?;
    let family = match tag {
        0 => Some(Family::Chebyshev),
        1 => Some(Family::Hermite),
        2 => Some(Family::Laguerre),
        3 => None,
        t => return Err(corrupt(format!("unknown backend tag {t}"))),
    };
    let backend = match family {
        Some(f) => {
            let b = if f == Family::Chebyshev {
                b
            } else {
                crate::kernel::DEFAULT_CHEBYSHEV_B
            };
            Backend::Polynomial(PolynomialBasis::new(f, order, b)?)
        }
        None => Backend::Exact,
    };
    let dropout = r.f64()?;
    let n = r.len()?;
    if n.saturating_mul(8) > data.len() {
        return Err(corrupt("scale vector larger than data"));
    }
    let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let s_min = r.f64()?;
    let s_max = r.f64()?;
    let scales = ScaleVector::new(values, s_min, s_max)?;
    let num_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(num_layers.min(1024));
    for _ in 0..num_layers {
        let rows = r.len()?;
        let cols = r.len()?;
        let activation = match r.u8()? {
            0 => Activation::Relu,
            1 => Activation::Identity,
            t => return Err(corrupt(format!("unknown activation tag {t}"))),
        };
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| corrupt("layer size overflow"))?;
        if count.saturating_mul(8) > data.len() {
            return Err(corrupt("layer larger than data"));
        }
        let vals = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        layers.push(Layer {
            weight: Array2::from_shape_vec((rows, cols), vals).expect("shape from counts"),
            activation,
        });
    }
    let readout = match r.u8()? {
        0 => None,
        1 => Some(Readout {
            w1: r.matrix()?,
            w2: r.matrix()?,
        }),
        t => return Err(corrupt(format!("unknown readout flag {t}"))),
    };
    if r.pos != data.len() {
        return Err(corrupt("trailing bytes"));
    }
    if layers.is_empty()
        || layers
            .windows(2)
            .any(|w| w[0].weight.ncols() != w[1].weight.nrows())
    {
        return Err(corrupt("layer dimensions do not chain"));
    }
    Ok(Model {
        layers,
        scales,
        backend,
        dropout,
        readout,
    })
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: &Path) -> Result<Model> {
    let data = crate::datasets::read_bytes(path)?;
    from_bytes(&data)
}
