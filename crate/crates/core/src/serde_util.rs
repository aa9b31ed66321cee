//! Serde adapters for nalgebra types in configuration documents.
//!
//! Vectors are written as plain arrays and matrices as row lists. Matrices may
//! also be given as a bare diagonal when reading.

pub mod vec3 {
    use nalgebra::Vector3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector3<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector3<f64>, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vector3::from(a))
    }
}

macro_rules! square_matrix_adapter {
    ($name:ident, $mat:ident, $n:literal) => {
        pub mod $name {
            use nalgebra::$mat;
            use serde::{Deserialize, Deserializer, Serialize, Serializer};

            #[derive(Deserialize)]
            #[serde(untagged)]
            #[allow(clippy::large_enum_variant)]
            enum Repr {
                Rows([[f64; $n]; $n]),
                Diagonal([f64; $n]),
            }

            pub fn serialize<S: Serializer>(m: &$mat<f64>, s: S) -> Result<S::Ok, S::Error> {
                let mut rows = [[0.0; $n]; $n];
                for (i, row) in rows.iter_mut().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = m[(i, j)];
                    }
                }
                rows.serialize(s)
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<$mat<f64>, D::Error> {
                Ok(match Repr::deserialize(d)? {
                    Repr::Rows(rows) => $mat::from_fn(|i, j| rows[i][j]),
                    Repr::Diagonal(diag) => {
                        $mat::from_fn(|i, j| if i == j { diag[i] } else { 0.0 })
                    }
                })
            }
        }
    };
}

square_matrix_adapter!(mat3, Matrix3, 3);
square_matrix_adapter!(mat6, Matrix6, 6);
