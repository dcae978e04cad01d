//! Line-oriented text formats shared by logs, manifests and trajectories.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::lie::{Pose, Rotation};

/// 17 significant digits; parsing the text recovers the value exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_vec3(v: &Vector3<f64>) -> String {
    format!("{} {} {}", fmt_f64(v.x), fmt_f64(v.y), fmt_f64(v.z))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
pub fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn parse_f64(source: &str, line: usize, token: &str) -> Result<f64> {
    token
        .parse::<f64>()
        .map_err(|_| Error::parse(source, line, format!("malformed number `{token}`")))
}

/// `key = value` text with optional `[section]` headers; keys inside a
/// section are stored as `section.key`. Insertion order is preserved.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: IndexMap<String, String>,
    source: String,
}

impl KeyValues {
    pub fn new(source: impl Into<String>) -> Self {
        KeyValues {
            entries: IndexMap::new(),
            source: source.into(),
        }
    }

    pub fn parse(source: &str, text: &str) -> Result<Self> {
        let mut kv = KeyValues::new(source);
        let mut section = String::new();
        for (line, l) in data_lines(text) {
            if let Some(name) = l.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| Error::parse(source, line, format!("expected key = value, got `{l}`")))?;
            let key = if section.is_empty() {
                k.trim().to_string()
            } else {
                format!("{section}.{}", k.trim())
            };
            if kv.entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::parse(source, line, format!("duplicate key `{key}`")));
            }
        }
        Ok(kv)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&path.display().to_string(), &read_text(path)?)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Typed lookup; a present but unparsable value is a validation error
    /// naming the key.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::validation(key, format!("cannot parse `{v}`"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn get_vec3(&self, key: &str) -> Result<Option<Vector3<f64>>> {
        let Some(v) = self.entries.get(key) else {
            return Ok(None);
        };
        let parts: Vec<f64> = v
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::validation(key, format!("cannot parse `{v}` as 3 numbers")))?;
        match parts.as_slice() {
            [x, y, z] => Ok(Some(Vector3::new(*x, *y, *z))),
            _ => Err(Error::validation(key, format!("expected 3 numbers, got `{v}`"))),
        }
    }

    /// Keys of the form `prefix.*`, prefix stripped.
    pub fn section(&self, prefix: &str) -> KeyValues {
        let p = format!("{prefix}.");
        KeyValues {
            entries: self
                .entries
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(&p).map(|s| (s.to_string(), v.clone())))
                .collect(),
            source: self.source.clone(),
        }
    }

    /// Flat `key = value` lines in insertion order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimedPose {
    pub t: f64,
    pub pose: Pose,
}

/// `t x y z qx qy qz qw` per line.
pub fn format_tum(poses: &[TimedPose]) -> String {
    let mut s = String::new();
    for p in poses {
        let q = p.pose.rotation.to_quaternion();
        let t = &p.pose.translation;
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {}",
            fmt_f64(p.t),
            fmt_f64(t.x),
            fmt_f64(t.y),
            fmt_f64(t.z),
            fmt_f64(q.i),
            fmt_f64(q.j),
            fmt_f64(q.k),
            fmt_f64(q.w)
        );
    }
    s
}

pub fn parse_tum(source: &str, text: &str) -> Result<Vec<TimedPose>> {
    let mut out = Vec::new();
    for (line, l) in data_lines(text) {
        let v: Vec<f64> = l
            .split_whitespace()
            .map(|tok| parse_f64(source, line, tok))
            .collect::<Result<_>>()?;
        if v.len() != 8 {
            return Err(Error::parse(source, line, format!("expected 8 columns, got {}", v.len())));
        }
        let q = Quaternion::new(v[7], v[4], v[5], v[6]);
        if !(q.norm() > 0.5) {
            return Err(Error::parse(source, line, "quaternion is not unit"));
        }
        out.push(TimedPose {
            t: v[0],
            pose: Pose::new(
                Rotation::from_quaternion(&UnitQuaternion::from_quaternion(q)),
                Vector3::new(v[1], v[2], v[3]),
            ),
        });
    }
    Ok(out)
}

pub fn read_tum(path: &Path) -> Result<Vec<TimedPose>> {
    parse_tum(&path.display().to_string(), &read_text(path)?)
}
