//! Attribute schema for sensor fingerprints.
//!
//! A fingerprint is one aligned vector of sensor readings: a block of WiFi
//! RSSI columns (one per radio, dBm) followed by the auxiliary device
//! sensors (light, GPS, accelerometer, magnetometer, rotation, orientation).
//! The schema fixes the column order for the lifetime of a dataset.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a column measures. RSSI columns carry dBm; the rest are the
/// device's auxiliary sensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Rssi,
    Light,
    GpsLat,
    GpsLon,
    AccelX,
    AccelY,
    AccelZ,
    MagX,
    MagY,
    MagZ,
    RotX,
    RotY,
    RotZ,
    OrientX,
    OrientY,
    OrientZ,
}

impl AttributeKind {
    /// Canonical unit string for the kind.
    pub fn unit(self) -> &'static str {
        match self {
            AttributeKind::Rssi => "dBm",
            AttributeKind::Light => "lux",
            AttributeKind::GpsLat | AttributeKind::GpsLon => "deg",
            AttributeKind::AccelX | AttributeKind::AccelY | AttributeKind::AccelZ => "m/s^2",
            AttributeKind::MagX | AttributeKind::MagY | AttributeKind::MagZ => "uT",
            AttributeKind::RotX | AttributeKind::RotY | AttributeKind::RotZ => "rad",
            AttributeKind::OrientX | AttributeKind::OrientY | AttributeKind::OrientZ => "deg",
        }
    }

    /// Infer the kind from a canonical column name (`rssi_*`, `light`,
    /// `gps_lat`, `accel_x`, ...). Used when no schema sidecar is present.
    pub fn from_name(name: &str) -> Option<AttributeKind> {
        if name.starts_with("rssi_") {
            return Some(AttributeKind::Rssi);
        }
        Some(match name {
            "light" => AttributeKind::Light,
            "gps_lat" => AttributeKind::GpsLat,
            "gps_lon" => AttributeKind::GpsLon,
            "accel_x" => AttributeKind::AccelX,
            "accel_y" => AttributeKind::AccelY,
            "accel_z" => AttributeKind::AccelZ,
            "mag_x" => AttributeKind::MagX,
            "mag_y" => AttributeKind::MagY,
            "mag_z" => AttributeKind::MagZ,
            "rot_x" => AttributeKind::RotX,
            "rot_y" => AttributeKind::RotY,
            "rot_z" => AttributeKind::RotZ,
            "orient_x" => AttributeKind::OrientX,
            "orient_y" => AttributeKind::OrientY,
            "orient_z" => AttributeKind::OrientZ,
            _ => return None,
        })
    }
}

/// One named column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    pub kind: AttributeKind,
    pub unit: String,
}

impl AttributeDef {
    pub fn new(name: impl Into<String>, kind: AttributeKind) -> Self {
        AttributeDef {
            name: name.into(),
            kind,
            unit: kind.unit().to_string(),
        }
    }
}

/// Ordered, immutable attribute list. Names are unique; RSSI columns carry
/// the dBm unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    attributes: Vec<AttributeDef>,
    #[serde(skip)]
    by_name: HashMap<String, usize>,
}

impl AttributeSchema {
    pub fn new(attributes: Vec<AttributeDef>) -> Result<Self> {
        let mut by_name = HashMap::with_capacity(attributes.len());
        for (i, def) in attributes.iter().enumerate() {
            if def.name.is_empty() {
                return Err(Error::schema("empty attribute name"));
            }
            if def.name.contains(',') || def.name.contains('"') {
                return Err(Error::schema(format!(
                    "attribute name {:?} contains a CSV delimiter",
                    def.name
                )));
            }
            if by_name.insert(def.name.clone(), i).is_some() {
                return Err(Error::schema(format!("duplicate attribute name {:?}", def.name)));
            }
            if def.kind == AttributeKind::Rssi && def.unit != "dBm" {
                return Err(Error::schema(format!(
                    "rssi attribute {:?} must carry dBm, got {:?}",
                    def.name, def.unit
                )));
            }
        }
        Ok(AttributeSchema { attributes, by_name })
    }

    /// Build a schema from column names alone, inferring kinds.
    pub fn infer_from_names(names: &[String]) -> Result<Self> {
        let defs = names
            .iter()
            .map(|n| {
                let kind = AttributeKind::from_name(n).ok_or_else(|| {
                    Error::schema(format!("cannot infer sensor kind for column {n:?}"))
                })?;
                Ok(AttributeDef::new(n.clone(), kind))
            })
            .collect::<Result<Vec<_>>>()?;
        AttributeSchema::new(defs)
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attributes(&self) -> &[AttributeDef] {
        &self.attributes
    }

    pub fn attr(&self, i: usize) -> &AttributeDef {
        &self.attributes[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    /// Indices of the RSSI block.
    pub fn rssi_indices(&self) -> Vec<usize> {
        self.attributes
            .iter()
            .enumerate()
            .filter(|(_, d)| d.kind == AttributeKind::Rssi)
            .map(|(i, _)| i)
            .collect()
    }

    /// Rebuild the name index after deserialization.
    pub fn rebuild_index(&mut self) {
        self.by_name = self
            .attributes
            .iter()
            .enumerate()
            .map(|(i, d)| (d.name.clone(), i))
            .collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_names() {
        let defs = vec![
            AttributeDef::new("rssi_a", AttributeKind::Rssi),
            AttributeDef::new("rssi_a", AttributeKind::Rssi),
        ];
        assert!(AttributeSchema::new(defs).is_err());
    }

    #[test]
    fn rssi_carries_dbm() {
        let mut def = AttributeDef::new("rssi_a", AttributeKind::Rssi);
        def.unit = "mW".into();
        assert!(AttributeSchema::new(vec![def]).is_err());
    }

    #[test]
    fn infers_kinds_from_canonical_names() {
        let names: Vec<String> = ["rssi_ap01_r0", "light", "accel_z", "orient_x"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let schema = AttributeSchema::infer_from_names(&names).unwrap();
        assert_eq!(schema.attr(0).kind, AttributeKind::Rssi);
        assert_eq!(schema.attr(1).kind, AttributeKind::Light);
        assert_eq!(schema.attr(2).kind, AttributeKind::AccelZ);
        assert_eq!(schema.attr(3).kind, AttributeKind::OrientX);
        assert_eq!(schema.index_of("accel_z"), Some(2));
    }

    #[test]
    fn unknown_name_fails_inference() {
        let names = vec!["bogus".to_string()];
        assert!(AttributeSchema::infer_from_names(&names).is_err());
    }
}
