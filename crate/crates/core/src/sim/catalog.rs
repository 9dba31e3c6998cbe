use super::ObjectSpec;
use crate::error::{Error, Result};

/// Built-in object presets, tab-separated, one object per line.
pub const DEFAULT_CATALOG: &str = include_str!("../../assets/objects.tsv");

/// Objects held out for adaptation experiments; the rest are training-only.
pub const TEST_OBJECTS: [&str; 7] = [
    "pill_box",
    "tea_can",
    "mouthwash",
    "milk_bottle",
    "wine_bottle",
    "perfume",
    "ink",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Catalog {
    pub objects: Vec<ObjectSpec>,
}

impl Catalog {
    pub fn builtin() -> Self {
        parse_catalog(DEFAULT_CATALOG).expect("built-in catalog is valid")
    }

    pub fn get(&self, name: &str) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&ObjectSpec> {
        self.get(name)
            .ok_or_else(|| Error::Data(format!("unknown object {name:?}")))
    }

    pub fn test_objects(&self) -> Vec<&ObjectSpec> {
        TEST_OBJECTS.iter().filter_map(|n| self.get(n)).collect()
    }
}

/// Parse a catalog: `#` starts a comment, fields are whitespace separated in
/// the order name, mass_g, width_mm, stiffness_n_per_mm, mu, max_fill_g.
pub fn parse_catalog(text: &str) -> Result<Catalog> {
    let mut objects = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::Parse {
                line: i + 1,
                reason: format!("expected 6 fields, found {}", fields.len()),
            });
        }
        let num = |idx: usize| -> Result<f64> {
            fields[idx].parse::<f64>().map_err(|e| Error::Parse {
                line: i + 1,
                reason: format!("field {}: {e}", idx + 1),
            })
        };
        let spec = ObjectSpec {
            name: fields[0].to_string(),
            mass_g: num(1)?,
            width_mm: num(2)?,
            stiffness_n_per_mm: num(3)?,
            mu: num(4)?,
            max_fill_g: num(5)?,
        };
        spec.validate().map_err(|e| Error::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if objects.iter().any(|o: &ObjectSpec| o.name == spec.name) {
            return Err(Error::Parse {
                line: i + 1,
                reason: format!("duplicate object {:?}", spec.name),
            });
        }
        objects.push(spec);
    }
    Ok(Catalog { objects })
}
