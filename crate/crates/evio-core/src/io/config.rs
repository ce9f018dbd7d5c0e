//! Minimal `key = value` configuration files.
//!
//! One assignment per line; `#` starts a comment; duplicate keys are errors;
//! consumers validate against their own list of known keys so typos fail
//! loudly instead of silently using defaults.

use super::IoError;
use nalgebra::{UnitQuaternion, Vector3};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    entries: BTreeMap<String, (String, usize)>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(IoError::Parse {
                    line: line_no,
                    message: format!("expected 'key = value', got '{line}'"),
                });
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(IoError::Parse {
                    line: line_no,
                    message: "empty key".into(),
                });
            }
            if entries.insert(key.clone(), (value, line_no)).is_some() {
                return Err(IoError::Parse {
                    line: line_no,
                    message: format!("duplicate key '{key}'"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, IoError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Rejects any key not in `allowed`.
    pub fn ensure_known(&self, allowed: &[&str]) -> Result<(), IoError> {
        for key in self.entries.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(IoError::UnknownKey(key.clone()));
            }
        }
        Ok(())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    fn parse_with<T>(&self, key: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> Result<Option<T>, IoError> {
        match self.get_str(key) {
            None => Ok(None),
            Some(raw) => f(raw).map(Some).ok_or_else(|| IoError::BadValue {
                key: key.to_string(),
                message: format!("cannot parse '{raw}' as {what}"),
            }),
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, IoError> {
        self.parse_with(key, "a number", |s| s.parse().ok())
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, IoError> {
        self.parse_with(key, "an unsigned integer", |s| s.parse().ok())
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>, IoError> {
        self.parse_with(key, "an unsigned integer", |s| s.parse().ok())
    }

    pub fn get_u32(&self, key: &str) -> Result<Option<u32>, IoError> {
        self.parse_with(key, "an unsigned 32-bit integer", |s| s.parse().ok())
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>, IoError> {
        self.parse_with(key, "true or false", |s| match s {
            "true" | "1" | "yes" => Some(true),
            "false" | "0" | "no" => Some(false),
            _ => None,
        })
    }

    /// Three comma-separated numbers.
    pub fn get_vector3(&self, key: &str) -> Result<Option<Vector3<f64>>, IoError> {
        self.parse_with(key, "three comma-separated numbers", |s| {
            let parts: Vec<f64> = s
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .ok()?;
            (parts.len() == 3).then(|| Vector3::new(parts[0], parts[1], parts[2]))
        })
    }

    /// Seven whitespace-separated numbers: x y z qx qy qz qw.
    pub fn get_pose(&self, key: &str) -> Result<Option<crate::geometry::Pose>, IoError> {
        self.parse_with(key, "seven numbers (x y z qx qy qz qw)", |s| {
            let parts: Vec<f64> = s
                .split_whitespace()
                .map(|p| p.parse::<f64>())
                .collect::<Result<_, _>>()
                .ok()?;
            if parts.len() != 7 {
                return None;
            }
            let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
                parts[6], parts[3], parts[4], parts[5],
            ));
            Some(crate::geometry::Pose::new(
                q,
                Vector3::new(parts[0], parts[1], parts[2]),
            ))
        })
    }

    pub fn require_f64(&self, key: &str) -> Result<f64, IoError> {
        self.get_f64(key)?
            .ok_or_else(|| IoError::MissingKey(key.to_string()))
    }

    pub fn require_u32(&self, key: &str) -> Result<u32, IoError> {
        self.get_u32(key)?
            .ok_or_else(|| IoError::MissingKey(key.to_string()))
    }

    pub fn require_str(&self, key: &str) -> Result<&str, IoError> {
        self.get_str(key)
            .ok_or_else(|| IoError::MissingKey(key.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values_comments_and_blanks() {
        let cfg = ConfigMap::parse(
            "# heading\nwidth = 320\n\nrate = 1.5 # inline\nname = desk scene\nflag = yes\nvec = 1, 2.5, -3\n",
        )
        .unwrap();
        assert_eq!(cfg.get_u32("width").unwrap(), Some(320));
        assert_eq!(cfg.get_f64("rate").unwrap(), Some(1.5));
        assert_eq!(cfg.get_str("name"), Some("desk scene"));
        assert_eq!(cfg.get_bool("flag").unwrap(), Some(true));
        assert_eq!(
            cfg.get_vector3("vec").unwrap(),
            Some(Vector3::new(1.0, 2.5, -3.0))
        );
        assert_eq!(cfg.get_f64("absent").unwrap(), None);
    }

    #[test]
    fn rejects_malformed_lines_and_duplicates() {
        assert!(matches!(
            ConfigMap::parse("just words\n"),
            Err(IoError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            ConfigMap::parse("a = 1\na = 2\n"),
            Err(IoError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let cfg = ConfigMap::parse("width = 10\nheihgt = 20\n").unwrap();
        let err = cfg.ensure_known(&["width", "height"]).unwrap_err();
        assert!(matches!(err, IoError::UnknownKey(k) if k == "heihgt"));
    }

    #[test]
    fn bad_values_name_the_key() {
        let cfg = ConfigMap::parse("rate = fast\n").unwrap();
        assert!(matches!(
            cfg.get_f64("rate"),
            Err(IoError::BadValue { key, .. }) if key == "rate"
        ));
    }

    #[test]
    fn pose_round_trips() {
        let cfg = ConfigMap::parse("init_pose = 1 2 3 0 0 0.7071067811865476 0.7071067811865476\n")
            .unwrap();
        let pose = cfg.get_pose("init_pose").unwrap().unwrap();
        assert!((pose.translation - Vector3::new(1.0, 2.0, 3.0)).norm() < 1e-12);
        assert!((pose.rotation.angle() - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    }
}
