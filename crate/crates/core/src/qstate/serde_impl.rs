//! JSON-friendly forms: complex matrices are row-major nested arrays of
//! `[re, im]` pairs. Deserialization re-runs the usual validation.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{C64, CMatrix, DensityOperator, HermitianOperator, InputStateSet};

pub(crate) fn matrix_to_pairs(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub(crate) fn matrix_from_pairs(rows: &[Vec<[f64; 2]>]) -> Result<CMatrix, String> {
    let n = rows.len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(format!("row {i} has {} entries, expected {n}", r.len()));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
}

impl Serialize for HermitianOperator {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        matrix_to_pairs(self.matrix()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for HermitianOperator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        let m = matrix_from_pairs(&rows).map_err(D::Error::custom)?;
        HermitianOperator::new(m).map_err(D::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct DensityRepr {
    dims: Vec<usize>,
    matrix: HermitianOperator,
}

impl Serialize for DensityOperator {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        DensityRepr {
            dims: self.subsystem_dims.clone(),
            matrix: self.op.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityOperator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = DensityRepr::deserialize(d)?;
        DensityOperator::new(r.matrix, r.dims).map_err(D::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct InputSetRepr {
    label: String,
    states: Vec<DensityOperator>,
}

impl Serialize for InputStateSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        InputSetRepr {
            label: self.label().to_string(),
            states: self.states().to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for InputStateSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = InputSetRepr::deserialize(d)?;
        InputStateSet::new(r.states, r.label).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{input_set_s, isotropic_state};
    use crate::random::{random_hermitian, rng_from_seed};

    #[test]
    fn round_trips() {
        let mut rng = rng_from_seed(3);
        let h = random_hermitian(3, &mut rng);
        let back: HermitianOperator = serde_json::from_str(&serde_json::to_string(&h).unwrap()).unwrap();
        assert_eq!(back, h);
        let rho = isotropic_state(2, 0.4).unwrap();
        let back: DensityOperator =
            serde_json::from_str(&serde_json::to_string(&rho).unwrap()).unwrap();
        assert_eq!(back, rho);
        let set = input_set_s();
        let back: InputStateSet = serde_json::from_str(&serde_json::to_string(&set).unwrap()).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn layout_is_row_major_pairs() {
        let h = HermitianOperator::new(CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.0, 0.0), C64::new(0.0, -2.0), C64::new(0.0, 2.0), C64::new(0.0, 0.0)],
        ))
        .unwrap();
        assert_eq!(
            serde_json::to_string(&h).unwrap(),
            "[[[1.0,0.0],[0.0,-2.0]],[[0.0,2.0],[0.0,0.0]]]"
        );
    }

    #[test]
    fn invalid_input_is_rejected() {
        assert!(serde_json::from_str::<HermitianOperator>("[[[1,0],[0,1]],[[0,0],[1,0]]]").is_err());
        assert!(serde_json::from_str::<HermitianOperator>("[[[1,0],[0,0]]]").is_err());
        let bad_trace = r#"{"dims":[1],"matrix":[[[2,0]]]}"#;
        assert!(serde_json::from_str::<DensityOperator>(bad_trace).is_err());
    }
}
