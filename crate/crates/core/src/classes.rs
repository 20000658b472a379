//! Semantic class table: `<class_id> <name> <is_instance_class> <is_planar>` per line.

use std::path::Path;

use crate::error::{Error, Result};

/// Names of the classes that get connected-component instances in addition to clustering.
pub const PLANAR_CLASS_NAMES: [&str; 5] = ["picture", "curtain", "showercurtain", "sink", "bathtub"];

const SCANNET: &str = include_str!("../data/scannet_classes.txt");

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassInfo {
    pub id: u32,
    pub name: String,
    /// Whether segments of this class are reported (and evaluated) as instances.
    pub instance: bool,
    pub planar: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassTable {
    classes: Vec<ClassInfo>,
}

impl Default for ClassTable {
    /// The 20-class ScanNet benchmark table.
    fn default() -> Self {
        Self::parse(SCANNET).expect("bundled class table")
    }
}

impl ClassTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut classes: Vec<ClassInfo> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = |what: &str| Error::format_at_line(n + 1, what.to_string());
            if f.len() != 4 {
                return Err(bad(
                    "expected `<class_id> <name> <is_instance_class> <is_planar>`",
                ));
            }
            let flag = |t: &str| match t {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad("flags must be 0 or 1")),
            };
            let id = f[0].parse().map_err(|_| bad("invalid class id"))?;
            if classes.iter().any(|c| c.id == id) {
                return Err(bad("duplicate class id"));
            }
            classes.push(ClassInfo {
                id,
                name: f[1].to_string(),
                instance: flag(f[2])?,
                planar: flag(f[3])?,
            });
        }
        classes.sort_by_key(|c| c.id);
        Ok(Self { classes })
    }

    pub fn iter(&self) -> impl Iterator<Item = &ClassInfo> {
        self.classes.iter()
    }

    pub fn get(&self, id: u32) -> Option<&ClassInfo> {
        self.classes
            .binary_search_by_key(&id, |c| c.id)
            .ok()
            .map(|i| &self.classes[i])
    }

    pub fn by_name(&self, name: &str) -> Option<&ClassInfo> {
        self.classes.iter().find(|c| c.name == name)
    }

    /// Unknown ids are not instance classes.
    pub fn is_instance(&self, id: u32) -> bool {
        self.get(id).is_some_and(|c| c.instance)
    }

    pub fn name(&self, id: u32) -> String {
        self.get(id)
            .map_or_else(|| format!("class{id}"), |c| c.name.clone())
    }

    pub fn instance_classes(&self) -> impl Iterator<Item = &ClassInfo> {
        self.classes.iter().filter(|c| c.instance)
    }

    /// Planar classes in id order; fails unless all of [`PLANAR_CLASS_NAMES`] are present.
    pub fn planar_classes(&self) -> Result<Vec<&ClassInfo>> {
        for name in PLANAR_CLASS_NAMES {
            if self.by_name(name).is_none() {
                return Err(Error::Config(format!("class table lacks planar class `{name}`")));
            }
        }
        Ok(self.classes.iter().filter(|c| c.planar).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table() {
        let t = ClassTable::default();
        assert_eq!(t.instance_classes().count(), 18);
        assert!(!t.is_instance(1) && !t.is_instance(2));
        assert!(!t.is_instance(0));
        assert_eq!(t.by_name("chair").unwrap().id, 5);
        let planar: Vec<_> = t
            .planar_classes()
            .unwrap()
            .iter()
            .map(|c| c.name.as_str())
            .collect();
        assert_eq!(planar, ["picture", "curtain", "showercurtain", "sink", "bathtub"]);
    }

    #[test]
    fn missing_planar_class_is_config_error() {
        let t = ClassTable::parse("5 chair 1 0\n11 picture 1 1\n").unwrap();
        assert!(matches!(t.planar_classes(), Err(Error::Config(_))));
    }

    #[test]
    fn malformed_rows() {
        assert!(ClassTable::parse("5 chair 1\n").is_err());
        assert!(ClassTable::parse("5 chair 1 2\n").is_err());
        assert!(ClassTable::parse("5 chair 1 0\n5 desk 1 0\n").is_err());
    }
}
