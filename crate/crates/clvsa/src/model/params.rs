//! Named parameter storage, initialization and checkpoint files.

use std::io::{Read, Write};

use indexmap::IndexMap;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tapegrad::Tensor;

use crate::error::{Error, Result};

/// Flat map of parameter name to tensor, in registration order.
///
/// Registration order is the canonical parameter order everywhere: gradient
/// extraction, optimizer state and checkpoints all follow it, which keeps
/// reductions deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: IndexMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// # Errors
    /// Fails when `name` is already registered.
    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if self.params.contains_key(name) {
            return Err(Error::model(format!("duplicate parameter {name}")));
        }
        self.params.insert(name.to_string(), tensor);
        Ok(())
    }

    /// # Errors
    /// Fails when `name` is not registered.
    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params.get(name).ok_or_else(|| Error::model(format!("unknown parameter {name}")))
    }

    /// # Errors
    /// Fails when `name` is not registered.
    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.params.get_mut(name).ok_or_else(|| Error::model(format!("unknown parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count across all tensors.
    pub fn numel(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }
}

/// Uniform init in `±sqrt(1/fan_in)`.
pub fn uniform_init(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::from_vec(shape.to_vec(), data).expect("shape and data sized together")
}

// ---- checkpoint files -------------------------------------------------------

const CHECKPOINT_FORMAT: &str = "clvsa-checkpoint-v1";

/// Writes the store as a flat CSV: `name,shape,data` with a version row.
///
/// Shapes are `x`-separated dims; data cells are `;`-separated floats in
/// shortest-round-trip formatting, so save/load restores exact bits.
///
/// # Errors
/// Propagates I/O failures.
pub fn save_checkpoint<W: Write>(w: W, store: &ParamStore) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["name", "shape", "data"])?;
    out.write_record(["__format__", CHECKPOINT_FORMAT, ""])?;
    for (name, tensor) in store.iter() {
        let shape = tensor
            .shape()
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("x");
        let data = tensor
            .data()
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(";");
        out.write_record(&[name.clone(), shape, data])?;
    }
    out.flush()?;
    Ok(())
}

/// # Errors
/// Fails on a wrong header, unknown format version, or malformed tensors.
pub fn load_checkpoint<R: Read>(r: R) -> Result<ParamStore> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?;
    if header.len() != 3 || &header[0] != "name" || &header[1] != "shape" || &header[2] != "data" {
        return Err(Error::model("checkpoint header must be name,shape,data".to_string()));
    }
    let mut store = ParamStore::new();
    let mut format_seen = false;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if &rec[0] == "__format__" {
            if &rec[1] != CHECKPOINT_FORMAT {
                return Err(Error::model(format!(
                    "unsupported checkpoint format {:?}, expected {CHECKPOINT_FORMAT}",
                    &rec[1]
                )));
            }
            format_seen = true;
            continue;
        }
        let shape: Vec<usize> = rec[1]
            .split('x')
            .map(|d| {
                d.parse::<usize>()
                    .map_err(|_| Error::model(format!("row {row}: bad shape {:?}", &rec[1])))
            })
            .collect::<Result<_>>()?;
        let data: Vec<f64> = if rec[2].is_empty() {
            Vec::new()
        } else {
            rec[2]
                .split(';')
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::model(format!("row {row}: bad value {v:?}")))
                })
                .collect::<Result<_>>()?
        };
        let tensor = Tensor::from_vec(shape, data)
            .map_err(|e| Error::model(format!("row {row}: {e}")))?;
        store.insert(&rec[0], tensor)?;
    }
    if !format_seen {
        return Err(Error::model("checkpoint is missing its __format__ row".to_string()));
    }
    Ok(store)
}

/// Checks that `loaded` provides exactly the names and shapes of `expected`.
///
/// # Errors
/// Fails on missing, extra, or reshaped parameters.
pub fn check_compatible(expected: &ParamStore, loaded: &ParamStore) -> Result<()> {
    for (name, tensor) in expected.iter() {
        let got = loaded
            .get(name)
            .map_err(|_| Error::model(format!("checkpoint is missing parameter {name}")))?;
        if got.shape() != tensor.shape() {
            return Err(Error::model(format!(
                "parameter {name} has shape {:?}, expected {:?}",
                got.shape(),
                tensor.shape()
            )));
        }
    }
    for name in loaded.names() {
        if expected.get(name).is_err() {
            return Err(Error::model(format!("checkpoint has unexpected parameter {name}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn insert_rejects_duplicates_and_get_reports_unknowns() {
        let mut s = ParamStore::new();
        s.insert("a.w", Tensor::zeros(&[2, 2])).unwrap();
        assert!(s.insert("a.w", Tensor::zeros(&[2, 2])).is_err());
        assert!(s.get("a.b").is_err());
        assert_eq!(s.numel(), 4);
    }

    #[test]
    fn uniform_init_respects_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = uniform_init(&mut rng, &[64, 9], 9);
        let bound = (1.0f64 / 9.0).sqrt();
        assert!(t.data().iter().all(|v| v.abs() < bound));
        // Not degenerate: values actually spread out.
        let spread = t.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(spread > bound * 0.5);
    }

    #[test]
    fn checkpoint_round_trips_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = ParamStore::new();
        s.insert("enc.wx", uniform_init(&mut rng, &[8, 3, 3], 9)).unwrap();
        s.insert("enc.b", Tensor::filled(&[8, 1], 1.0)).unwrap();
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &s).unwrap();
        let back = load_checkpoint(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        for (name, tensor) in s.iter() {
            let got = back.get(name).unwrap();
            assert_eq!(got.shape(), tensor.shape());
            for (a, b) in got.data().iter().zip(tensor.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn load_rejects_missing_format_row() {
        let text = "name,shape,data\na.w,2x2,1;2;3;4\n";
        assert!(load_checkpoint(text.as_bytes()).is_err());
    }

    #[test]
    fn load_rejects_future_format() {
        let text = "name,shape,data\n__format__,clvsa-checkpoint-v9,\n";
        assert!(load_checkpoint(text.as_bytes()).is_err());
    }

    #[test]
    fn compatibility_check_catches_shape_drift() {
        let mut a = ParamStore::new();
        a.insert("w", Tensor::zeros(&[2, 3])).unwrap();
        let mut b = ParamStore::new();
        b.insert("w", Tensor::zeros(&[3, 2])).unwrap();
        assert!(check_compatible(&a, &b).is_err());
        let mut c = ParamStore::new();
        c.insert("w", Tensor::zeros(&[2, 3])).unwrap();
        c.insert("extra", Tensor::zeros(&[1])).unwrap();
        assert!(check_compatible(&a, &c).is_err());
    }
}
