//! File formats: JSON inputs (networks, anchors, market power, reference
//! data), JSON results and CSV tables.
//!
//! Volumes are in mcm/d and prices in k€/mcm throughout; the files carry no
//! unit fields.

mod network;
mod reference;
mod report;

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::market::ModelError;

pub use network::{
    load_anchors, load_network, load_theta, AnchorEntry, ArcEntry, ArcsEntry, FacilityEntry,
    NetworkData, NetworkFile, NodeEntry, ServicesEntry, ThetaEntry, ThetaFile, TraderEntry,
};
pub use reference::{
    load_reference, LoadedReference, MarketEntry, ProductionEntry, ReferenceFile, SaleEntry,
};
pub use report::{
    equilibrium_tables, ranges_table, AnchorRow, Report, ResultFile, ThetaRow, REPORT_FILES,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// The file is not well-formed JSON.
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    /// The JSON does not match the expected schema or references unknown ids.
    #[error("{path}: {field}: {message}")]
    Schema {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl IoError {
    pub(crate) fn schema(
        path: &Path,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        IoError::Schema {
            path: path.to_path_buf(),
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Reads and deserializes a JSON file, reporting the failing field path on
/// schema errors.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_json(path, &text)
}

pub(crate) fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, IoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        match inner.classify() {
            serde_json::error::Category::Data => IoError::Schema {
                path: path.to_path_buf(),
                field,
                message: format!("{inner}"),
            },
            _ => IoError::Parse {
                path: path.to_path_buf(),
                line: inner.line(),
                column: inner.column(),
                message: format!("{inner}"),
            },
        }
    })
}

/// Serializes `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text =
        serde_json::to_string_pretty(value).expect("serializing to a string cannot fail");
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Formats a number for CSV output: rounded to 13 significant digits, then
/// printed in the shortest form that parses back to the rounded value.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.12e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        return "0".into();
    }
    let a = rounded.abs();
    if (1e-6..1e16).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

/// Serde adapter for `f64` fields that may be infinite: finite values are
/// plain numbers, infinities are the strings `"inf"` and `"-inf"`. `null`
/// reads as `+inf`.
pub mod inf_f64 {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;
    use std::fmt;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    struct V;

    impl<'de> Visitor<'de> for V {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a number, \"inf\", \"-inf\" or null")
        }
        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }
        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }
        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }
        fn visit_unit<E: de::Error>(self) -> Result<f64, E> {
            Ok(f64::INFINITY)
        }
        fn visit_none<E: de::Error>(self) -> Result<f64, E> {
            Ok(f64::INFINITY)
        }
        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(V)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_format_compactly_and_parse_back() {
        assert_eq!(format_number(90.0), "90");
        assert_eq!(format_number(110.0), "110");
        assert_eq!(format_number(0.1 + 0.2), "0.3");
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(f64::INFINITY), "inf");
        assert_eq!(format_number(1.5e-9), "1.5e-9");
        for x in [
            std::f64::consts::PI,
            1.0 / 3.0,
            123_456.789_012_345_67,
            -2.5e20,
            7.77e-8,
        ] {
            let back: f64 = format_number(x).parse().unwrap();
            assert!((back - x).abs() <= 1e-12 * x.abs(), "{x} -> {back}");
        }
    }

    #[test]
    fn infinite_values_round_trip_through_json() {
        #[derive(Serialize, serde::Deserialize, PartialEq, Debug)]
        struct W {
            #[serde(with = "inf_f64")]
            x: f64,
        }
        for x in [1.25, f64::INFINITY, f64::NEG_INFINITY] {
            let text = serde_json::to_string(&W { x }).unwrap();
            assert_eq!(serde_json::from_str::<W>(&text).unwrap(), W { x });
        }
        assert_eq!(
            serde_json::from_str::<W>(r#"{"x":null}"#).unwrap().x,
            f64::INFINITY
        );
        assert_eq!(serde_json::from_str::<W>(r#"{"x":3}"#).unwrap().x, 3.0);
    }
}
