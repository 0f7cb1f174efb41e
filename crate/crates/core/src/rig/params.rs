//! Physical parameters of the test rig and the set of parameters that may be
//! estimated.
//!
//! Values are stored in SI units. The nominal set matches the rig's catalogue
//! data; `ls`, `ds`, `mr1` and `rr1` are descriptive only and never enter the
//! dynamics.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Full parameter set of the shaft, rotors and DC motor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigParameters {
    /// Rotor 1 moment of inertia, kg·m².
    pub j1: f64,
    /// Shaft torsional stiffness, N·m/rad.
    pub ks: f64,
    /// Friction torque on rotor 1, N·m.
    pub t1: f64,
    /// Motor moment of inertia, kg·m².
    pub jm: f64,
    /// Motor inductance, H.
    pub lm: f64,
    /// Motor resistance, Ω.
    pub rm: f64,
    /// Torque constant, N·m/A.
    pub kt: f64,
    /// Voltage constant, V/(rad/s).
    pub ke: f64,
    /// Motor internal friction torque, N·m.
    pub tf: f64,
    /// Motor internal damping, N·m/(rad/s).
    pub cm: f64,
    /// Gear reduction factor (θ2 = im·θ3).
    pub im: f64,
    /// Supply voltage, V.
    pub v: f64,
    /// Shaft length, m.
    pub ls: f64,
    /// Shaft diameter, m.
    pub ds: f64,
    /// Rotor 1 mass, kg.
    pub mr1: f64,
    /// Rotor 1 radius, m.
    pub rr1: f64,
}

impl RigParameters {
    pub const fn nominal() -> Self {
        Self {
            j1: 28.3e-3,
            ks: 3.0e-1,
            t1: 0.0,
            jm: 4.0e-4,
            lm: 1.1e-3,
            rm: 3.3e-1,
            kt: 1.2e-1,
            ke: 601.6e-4,
            tf: 1.0e-1,
            cm: 18.0e-5,
            im: 1.0 / 8.0,
            v: 8.0,
            ls: 2.4,
            ds: 3.0e-3,
            mr1: 6.4,
            rr1: 188.0e-3,
        }
    }

    /// Checks the positivity and range constraints required by the dynamics.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("j1", self.j1),
            ("jm", self.jm),
            ("lm", self.lm),
            ("rm", self.rm),
            ("kT", self.kt),
            ("ke", self.ke),
            ("cm", self.cm),
            ("ks", self.ks),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and > 0, got {value}"),
                });
            }
        }
        for (name, value) in [("tf", self.tf), ("t1", self.t1)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and >= 0, got {value}"),
                });
            }
        }
        if !(self.im > 0.0 && self.im <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "im",
                reason: format!("must lie in (0, 1], got {}", self.im),
            });
        }
        if !self.v.is_finite() {
            return Err(Error::InvalidParameter {
                name: "v",
                reason: format!("must be finite, got {}", self.v),
            });
        }
        Ok(())
    }

    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::Jm => self.jm,
            Param::Cm => self.cm,
            Param::Ke => self.ke,
            Param::Rm => self.rm,
            Param::Kt => self.kt,
            Param::Lm => self.lm,
            Param::Ks => self.ks,
            Param::J1 => self.j1,
            Param::Tf => self.tf,
        }
    }

    pub fn set(&mut self, p: Param, value: f64) {
        let slot = match p {
            Param::Jm => &mut self.jm,
            Param::Cm => &mut self.cm,
            Param::Ke => &mut self.ke,
            Param::Rm => &mut self.rm,
            Param::Kt => &mut self.kt,
            Param::Lm => &mut self.lm,
            Param::Ks => &mut self.ks,
            Param::J1 => &mut self.j1,
            Param::Tf => &mut self.tf,
        };
        *slot = value;
    }

    pub fn with(mut self, p: Param, value: f64) -> Self {
        self.set(p, value);
        self
    }

    /// Looks up any field by its file key.
    pub fn field(&self, key: &str) -> Option<f64> {
        Some(match key {
            "j1" => self.j1,
            "ks" => self.ks,
            "t1" => self.t1,
            "jm" => self.jm,
            "lm" => self.lm,
            "rm" => self.rm,
            "kT" => self.kt,
            "ke" => self.ke,
            "tf" => self.tf,
            "cm" => self.cm,
            "im" => self.im,
            "v" => self.v,
            "ls" => self.ls,
            "Ds" => self.ds,
            "mr1" => self.mr1,
            "rr1" => self.rr1,
            _ => return None,
        })
    }

    pub fn set_field(&mut self, key: &str, value: f64) -> Result<()> {
        let slot = match key {
            "j1" => &mut self.j1,
            "ks" => &mut self.ks,
            "t1" => &mut self.t1,
            "jm" => &mut self.jm,
            "lm" => &mut self.lm,
            "rm" => &mut self.rm,
            "kT" => &mut self.kt,
            "ke" => &mut self.ke,
            "tf" => &mut self.tf,
            "cm" => &mut self.cm,
            "im" => &mut self.im,
            "v" => &mut self.v,
            "ls" => &mut self.ls,
            "Ds" => &mut self.ds,
            "mr1" => &mut self.mr1,
            "rr1" => &mut self.rr1,
            _ => return Err(Error::UnknownParameter(key.to_string())),
        };
        *slot = value;
        Ok(())
    }

    /// Parses a flat `key = value` document. Keys missing from the document
    /// keep their nominal value; unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, String> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
        let mut params = Self::nominal();
        for (key, value) in &table {
            let number = match value {
                toml::Value::Float(f) => *f,
                toml::Value::Integer(i) => *i as f64,
                other => {
                    return Err(format!(
                        "key `{key}`: expected a number, found {}",
                        other.type_str()
                    ))
                }
            };
            params.set_field(key, number).map_err(|e| e.to_string())?;
        }
        Ok(params)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|msg| Error::format(path, msg))
    }

    pub fn to_toml_string(&self) -> String {
        FIELD_KEYS
            .iter()
            .map(|key| format!("{key} = {:?}\n", self.field(key).unwrap()))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }
}

impl Default for RigParameters {
    fn default() -> Self {
        Self::nominal()
    }
}

/// Keys accepted in parameter files, in catalogue order.
pub const FIELD_KEYS: [&str; 16] = [
    "j1", "ks", "t1", "jm", "lm", "rm", "kT", "ke", "tf", "cm", "im", "v", "ls", "Ds", "mr1", "rr1",
];

/// The nine parameters that can be freed for estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Param {
    Jm,
    Cm,
    Ke,
    Rm,
    Kt,
    Lm,
    Ks,
    J1,
    Tf,
}

impl Param {
    /// Ordering of the nine-parameter estimation vector.
    pub const ALL: [Param; 9] = [
        Param::Jm,
        Param::Cm,
        Param::Ke,
        Param::Rm,
        Param::Kt,
        Param::Lm,
        Param::Ks,
        Param::J1,
        Param::Tf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::Jm => "jm",
            Param::Cm => "cm",
            Param::Ke => "ke",
            Param::Rm => "rm",
            Param::Kt => "kT",
            Param::Lm => "lm",
            Param::Ks => "ks",
            Param::J1 => "j1",
            Param::Tf => "tf",
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Param::ALL
            .into_iter()
            .find(|p| p.name() == s || p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownParameter(s.to_string()))
    }
}

/// The subset of estimable parameters treated as unknown.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParameterMask {
    free: BTreeSet<Param>,
}

impl ParameterMask {
    pub fn new(free: impl IntoIterator<Item = Param>) -> Self {
        Self {
            free: free.into_iter().collect(),
        }
    }

    pub fn all() -> Self {
        Self::new(Param::ALL)
    }

    pub fn contains(&self, p: Param) -> bool {
        self.free.contains(&p)
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    /// Free parameters in estimation-vector order.
    pub fn iter(&self) -> impl Iterator<Item = Param> + '_ {
        Param::ALL.into_iter().filter(|p| self.free.contains(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_is_valid() {
        RigParameters::nominal().validate().unwrap();
        assert_eq!(RigParameters::nominal().im, 0.125);
    }

    #[test]
    fn validate_names_offending_field() {
        let p = RigParameters::nominal().with(Param::Lm, 0.0);
        match p.validate() {
            Err(Error::InvalidParameter { name, .. }) => assert_eq!(name, "lm"),
            other => panic!("unexpected {other:?}"),
        }
        let p = RigParameters {
            im: 1.5,
            ..RigParameters::nominal()
        };
        assert!(p.validate().is_err());
        let p = RigParameters::nominal().with(Param::Tf, -0.1);
        assert!(p.validate().is_err());
        let p = RigParameters::nominal().with(Param::Tf, 0.0);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn parses_file_and_rejects_unknown_keys() {
        let p = RigParameters::from_toml_str("ks = 0.33\nkT = 1.32e-1\nv = 12\n").unwrap();
        assert_eq!(p.ks, 0.33);
        assert_eq!(p.kt, 0.132);
        assert_eq!(p.v, 12.0);
        assert_eq!(p.j1, RigParameters::nominal().j1);

        let err = RigParameters::from_toml_str("kt = 1.0").unwrap_err();
        assert!(err.contains("kt"), "{err}");
        assert!(RigParameters::from_toml_str("ks = \"stiff\"").is_err());
        assert!(RigParameters::from_toml_str("[solver]\ndt = 1").is_err());
    }

    #[test]
    fn file_round_trip() {
        let p = RigParameters::nominal().with(Param::Cm, 1.234567890123e-4);
        let back = RigParameters::from_toml_str(&p.to_toml_string()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn mask_iterates_in_vector_order() {
        let mask = ParameterMask::new([Param::Tf, Param::Jm, Param::Ke]);
        let order: Vec<_> = mask.iter().collect();
        assert_eq!(order, vec![Param::Jm, Param::Ke, Param::Tf]);
        assert_eq!(ParameterMask::all().len(), 9);
        assert_eq!("kT".parse::<Param>().unwrap(), Param::Kt);
        assert!("im".parse::<Param>().is_err());
    }
}
