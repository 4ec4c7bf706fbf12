//! JSON model files.
//!
//! ```json
//! {
//!   "dim": 1,
//!   "a0": [1.0],
//!   "a": [[0.0]],
//!   "A": [[0.0], [2.0]],
//!   "K": [{"family": "finite_atomic", "atoms": [{"weight": 1.0, "z": [0.5]}]}, {"family": "none"}],
//!   "state_space": {"kind": "canonical", "m": 1}
//! }
//! ```
//!
//! * `a` lists the drift columns `a¹..aᵖ` (column-major `p × p`).
//! * `A` lists `A⁰..Aᵖ`, each as its upper triangle stacked row by row
//!   (`p(p+1)/2` numbers).
//! * `K` is optional (pure diffusion when absent); otherwise `p + 1` records
//!   tagged by `family`: `none`, `finite_atomic {atoms: [{weight, z}]}`,
//!   `exponential_ray {mass, rate, direction}`,
//!   `tabulated_density {direction, nodes, density}`.
//! * `state_space` is tagged by `kind`: `canonical {m}`, `psd_cone {d}` (scaled
//!   half-vectorization, `dim = d(d+1)/2`), `lorentz`, `parabolic`,
//!   `half_spaces {constraints: [{normal, offset}]}` meaning `normal·x ≤ offset`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{AffineModel, HalfSpace, JumpMeasure, SpaceKind, StateSpace};
use crate::error::{Error, Result};
use crate::linalg::{svec_len, svec_order};
use crate::num::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub dim: usize,
    pub a0: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    pub diffusion: Vec<Vec<f64>>,
    #[serde(rename = "K", default, skip_serializing_if = "Vec::is_empty")]
    pub jumps: Vec<JumpFile>,
    pub state_space: SpaceFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomFile {
    pub weight: f64,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpFile {
    None,
    FiniteAtomic { atoms: Vec<AtomFile> },
    ExponentialRay { mass: f64, rate: f64, direction: Vec<f64> },
    TabulatedDensity { direction: Vec<f64>, nodes: Vec<f64>, density: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfSpaceFile {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceFile {
    Canonical { m: usize },
    PsdCone { d: usize },
    Lorentz,
    Parabolic,
    HalfSpaces { constraints: Vec<HalfSpaceFile> },
}

fn upper_to_matrix<T: Real>(upper: &[f64], p: usize, what: &str) -> Result<DMatrix<T>> {
    if upper.len() != svec_len(p) {
        return Err(Error::Schema(format!("{what}: expected {} upper-triangle entries, got {}", svec_len(p), upper.len())));
    }
    let mut m = DMatrix::zeros(p, p);
    let mut k = 0;
    for i in 0..p {
        for j in i..p {
            m[(i, j)] = T::lit(upper[k]);
            m[(j, i)] = T::lit(upper[k]);
            k += 1;
        }
    }
    Ok(m)
}

fn lit_vec<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|x| T::lit(*x)).collect()
}

fn f64_vec<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

impl ModelFile {
    /// Parses JSON; errors carry the line and column of the offending token.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Schema(msg) => Error::Schema(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("model file serializes")
    }

    /// SHA-256 of the compact JSON encoding, hex.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("model file serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_model<T: Real>(&self) -> Result<AffineModel<T>> {
        let p = self.dim;
        if p == 0 {
            return Err(Error::Schema("dim must be positive".into()));
        }
        let len_check = |what: &str, got: usize, want: usize| -> Result<()> {
            if got != want {
                Err(Error::Schema(format!("{what}: expected length {want}, got {got}")))
            } else {
                Ok(())
            }
        };
        len_check("a0", self.a0.len(), p)?;
        len_check("a", self.a.len(), p)?;
        for (i, col) in self.a.iter().enumerate() {
            len_check(&format!("a[{i}]"), col.len(), p)?;
        }
        let a = DMatrix::from_fn(p, p, |r, c| T::lit(self.a[c][r]));
        len_check("A", self.diffusion.len(), p + 1)?;
        let diffusion = self
            .diffusion
            .iter()
            .enumerate()
            .map(|(i, u)| upper_to_matrix(u, p, &format!("A[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        if !self.jumps.is_empty() {
            len_check("K", self.jumps.len(), p + 1)?;
        }
        let jumps = self
            .jumps
            .iter()
            .map(|k| match k {
                JumpFile::None => JumpMeasure::zero(),
                JumpFile::FiniteAtomic { atoms } => {
                    JumpMeasure::atoms(atoms.iter().map(|a| (T::lit(a.weight), lit_vec(&a.z))))
                }
                JumpFile::ExponentialRay { mass, rate, direction } => JumpMeasure::ExponentialRay {
                    mass: T::lit(*mass),
                    rate: T::lit(*rate),
                    direction: lit_vec(direction),
                },
                JumpFile::TabulatedDensity { direction, nodes, density } => JumpMeasure::TabulatedDensity {
                    direction: lit_vec(direction),
                    nodes: lit_vec(nodes),
                    density: lit_vec(density),
                },
            })
            .collect();
        let space = match &self.state_space {
            SpaceFile::Canonical { m } => StateSpace::canonical(*m, p)?,
            SpaceFile::PsdCone { d } => {
                if svec_order(p) != Some(*d) {
                    return Err(Error::Schema(format!("psd_cone d = {d} needs dim {}, got {p}", svec_len(*d))));
                }
                StateSpace::psd_cone(*d)?
            }
            SpaceFile::Lorentz => StateSpace::lorentz(p)?,
            SpaceFile::Parabolic => StateSpace::parabolic(p)?,
            SpaceFile::HalfSpaces { constraints } => StateSpace::half_spaces(
                constraints
                    .iter()
                    .map(|h| HalfSpace { normal: lit_vec(&h.normal), offset: T::lit(h.offset) })
                    .collect(),
                p,
            )?,
        };
        AffineModel::new(lit_vec(&self.a0), a, diffusion, jumps, space)
    }

    pub fn from_model<T: Real>(model: &AffineModel<T>) -> Self {
        let p = model.dim();
        let upper = |m: &DMatrix<T>| {
            let mut out = Vec::with_capacity(svec_len(p));
            for i in 0..p {
                for j in i..p {
                    out.push(m[(i, j)].as_f64());
                }
            }
            out
        };
        let jumps = if model.has_jumps() {
            model
                .jumps()
                .iter()
                .map(|k| match k {
                    _ if k.is_zero() => JumpFile::None,
                    JumpMeasure::FiniteAtomic(atoms) => JumpFile::FiniteAtomic {
                        atoms: atoms.iter().map(|a| AtomFile { weight: a.weight.as_f64(), z: f64_vec(&a.z) }).collect(),
                    },
                    JumpMeasure::ExponentialRay { mass, rate, direction } => JumpFile::ExponentialRay {
                        mass: mass.as_f64(),
                        rate: rate.as_f64(),
                        direction: f64_vec(direction),
                    },
                    JumpMeasure::TabulatedDensity { direction, nodes, density } => JumpFile::TabulatedDensity {
                        direction: f64_vec(direction),
                        nodes: f64_vec(nodes),
                        density: f64_vec(density),
                    },
                })
                .collect()
        } else {
            Vec::new()
        };
        let state_space = match model.space().kind() {
            SpaceKind::Canonical { m } => SpaceFile::Canonical { m: *m },
            SpaceKind::PsdCone { d } => SpaceFile::PsdCone { d: *d },
            SpaceKind::Lorentz => SpaceFile::Lorentz,
            SpaceKind::Parabolic => SpaceFile::Parabolic,
            SpaceKind::HalfSpaces(hs) => SpaceFile::HalfSpaces {
                constraints: hs.iter().map(|h| HalfSpaceFile { normal: f64_vec(&h.normal), offset: h.offset.as_f64() }).collect(),
            },
        };
        Self {
            dim: p,
            a0: f64_vec(model.a0()),
            a: (0..p).map(|c| model.a().column(c).iter().map(|v| v.as_f64()).collect()).collect(),
            diffusion: model.diffusion().iter().map(upper).collect(),
            jumps,
            state_space,
        }
    }
}

/// Reads and validates a model file.
pub fn load_model<T: Real>(path: impl AsRef<Path>) -> Result<AffineModel<T>> {
    ModelFile::read(path)?.to_model()
}

#[cfg(test)]
mod tests {
    use super::*;

    const CIR: &str = r#"{
        "dim": 1, "a0": [1.0], "a": [[0.0]], "A": [[0.0], [2.0]],
        "state_space": {"kind": "canonical", "m": 1}
    }"#;

    #[test]
    fn loads_and_round_trips() {
        let file = ModelFile::from_json(CIR).unwrap();
        let model: AffineModel<f64> = file.to_model().unwrap();
        let again = ModelFile::from_model(&model);
        assert_eq!(again, file);
        assert_eq!(again.hash(), file.hash());
        let reloaded: AffineModel<f64> = ModelFile::from_json(&again.to_json_pretty()).unwrap().to_model().unwrap();
        assert_eq!(reloaded, model);
    }

    #[test]
    fn malformed_files_report_location() {
        let err = ModelFile::from_json("{\n  \"dim\": 1,\n  \"a0\": [1.0]\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("missing field") && msg.contains("line"), "{msg}");

        let bad_len = CIR.replace("\"A\": [[0.0], [2.0]]", "\"A\": [[0.0]]");
        let err = ModelFile::from_json(&bad_len).unwrap().to_model::<f64>().unwrap_err();
        assert!(err.to_string().contains("A: expected length 2"), "{err}");

        let unknown = CIR.replace("\"dim\"", "\"dimm\": 3, \"dim\"");
        assert!(ModelFile::from_json(&unknown).is_err());
    }

    #[test]
    fn psd_cone_dimension_must_match() {
        let text = r#"{"dim": 2, "a0": [0,0], "a": [[0,0],[0,0]], "A": [[0,0,0],[0,0,0],[0,0,0]],
                       "state_space": {"kind": "psd_cone", "d": 2}}"#;
        assert!(ModelFile::from_json(text).unwrap().to_model::<f64>().is_err());
    }
}
