use std::fmt::Display;
use std::str::FromStr;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::IoError;
use crate::geometry::{RigidTransform, Rotation};

/// Flat `key = value` document. `#` starts a comment; keys may repeat, in which case
/// scalar getters use the last occurrence.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(IoError::Parse { line: i + 1, message: format!("expected `key = value`, got `{line}`") });
            };
            let key = k.trim();
            if key.is_empty() {
                return Err(IoError::Parse { line: i + 1, message: "empty key".into() });
            }
            entries.push((key.to_string(), v.trim().to_string(), i + 1));
        }
        Ok(Self { entries })
    }

    pub fn read(path: &std::path::Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
        Self::parse(&text)
    }

    pub fn insert(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string(), 0));
    }

    /// Appends every entry of `other`, so its values take precedence for scalar getters.
    pub fn extend(&mut self, other: &KeyValues) {
        self.entries.extend(other.entries.iter().cloned());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.iter().any(|(k, _, _)| k == key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _, _)| k.as_str())
    }

    fn last(&self, key: &str) -> Option<(&str, usize)> {
        self.entries.iter().rev().find(|(k, _, _)| k == key).map(|(_, v, l)| (v.as_str(), *l))
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.last(key).map(|(v, _)| v)
    }

    /// Every value of a repeated key, with its line number.
    pub fn get_all(&self, key: &str) -> Vec<(&str, usize)> {
        self.entries.iter().filter(|(k, _, _)| k == key).map(|(_, v, l)| (v.as_str(), *l)).collect()
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, IoError> {
        match self.last(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| IoError::Parse { line, message: format!("bad value `{v}` for `{key}`") }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, IoError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn get_bool_or(&self, key: &str, default: bool) -> Result<bool, IoError> {
        match self.last(key) {
            None => Ok(default),
            Some(("true" | "yes" | "1", _)) => Ok(true),
            Some(("false" | "no" | "0", _)) => Ok(false),
            Some((v, line)) => Err(IoError::Parse { line, message: format!("bad boolean `{v}` for `{key}`") }),
        }
    }

    /// Whitespace-separated numbers.
    pub fn get_vec(&self, key: &str) -> Result<Option<Vec<f64>>, IoError> {
        self.last(key).map(|(v, line)| parse_numbers(v, line)).transpose()
    }

    pub fn get_vector3(&self, key: &str) -> Result<Option<Vector3<f64>>, IoError> {
        self.fixed::<3>(key).map(|o| o.map(|v| Vector3::new(v[0], v[1], v[2])))
    }

    /// `x y z qw qx qy qz`.
    pub fn get_transform(&self, key: &str) -> Result<Option<RigidTransform<f64>>, IoError> {
        let Some(v) = self.fixed::<7>(key)? else { return Ok(None) };
        let line = self.last(key).map_or(0, |(_, l)| l);
        Ok(Some(transform_from(&v).ok_or(IoError::Parse { line, message: format!("degenerate quaternion in `{key}`") })?))
    }

    fn fixed<const N: usize>(&self, key: &str) -> Result<Option<[f64; N]>, IoError> {
        let Some((v, line)) = self.last(key) else { return Ok(None) };
        let nums = parse_numbers(v, line)?;
        <[f64; N]>::try_from(nums.as_slice())
            .map(Some)
            .map_err(|_| IoError::Parse { line, message: format!("`{key}` needs {N} numbers") })
    }
}

impl std::fmt::Display for KeyValues {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v, _) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

pub(crate) fn parse_numbers(v: &str, line: usize) -> Result<Vec<f64>, IoError> {
    v.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| IoError::Parse { line, message: format!("bad number `{t}`") }))
        .collect()
}

/// From `x y z qw qx qy qz`.
pub(crate) fn transform_from(v: &[f64; 7]) -> Option<RigidTransform<f64>> {
    let q = Quaternion::new(v[3], v[4], v[5], v[6]);
    let n = q.norm();
    if !(n > 1e-9) || !n.is_finite() {
        return None;
    }
    Some(RigidTransform::new(
        Rotation::from_unit_quaternion(UnitQuaternion::new_normalize(q)),
        Vector3::new(v[0], v[1], v[2]),
    ))
}

/// As `x y z qw qx qy qz`.
pub fn format_transform(t: &RigidTransform<f64>) -> String {
    let [w, x, y, z] = t.rotation.wxyz();
    let p = t.translation;
    format!("{} {} {} {} {} {} {}", p.x, p.y, p.z, w, x, y, z)
}
