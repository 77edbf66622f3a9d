use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-level class hierarchy: top classes, each owning an ordered list of
/// subclasses. Subclass names are unique across the whole taxonomy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    classes: Vec<TopClass>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopClass {
    pub name: String,
    pub subclasses: Vec<String>,
}

impl Taxonomy {
    pub fn new(classes: Vec<(String, Vec<String>)>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Taxonomy("taxonomy has no top classes".into()));
        }
        let mut seen_top = std::collections::HashSet::new();
        let mut seen_sub = std::collections::HashSet::new();
        for (top, subs) in &classes {
            if !seen_top.insert(top.as_str()) {
                return Err(Error::Taxonomy(format!("duplicate top class `{top}`")));
            }
            if subs.is_empty() {
                return Err(Error::Taxonomy(format!("top class `{top}` has no subclasses")));
            }
            for s in subs {
                if !seen_sub.insert(s.as_str()) {
                    return Err(Error::Taxonomy(format!("duplicate subclass `{s}`")));
                }
            }
        }
        Ok(Self {
            classes: classes
                .into_iter()
                .map(|(name, subclasses)| TopClass { name, subclasses })
                .collect(),
        })
    }

    /// The light-curve taxonomy: three top classes, fourteen subclasses.
    pub fn alerce() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        Self::new(vec![
            ("transient".into(), s(&["SLSN", "SNII", "SNIa", "SNIbc"])),
            ("stochastic".into(), s(&["AGN", "Blazar", "CV/Nova", "QSO", "YSO"])),
            ("periodic".into(), s(&["CEP", "DSCT", "E", "RRL", "LPV"])),
        ])
        .expect("built-in taxonomy is valid")
    }

    pub fn top_classes(&self) -> impl Iterator<Item = &TopClass> {
        self.classes.iter()
    }

    pub fn top_class(&self, name: &str) -> Option<&TopClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn subclasses(&self, top: &str) -> Option<&[String]> {
        self.top_class(top).map(|c| c.subclasses.as_slice())
    }

    pub fn num_subclasses(&self) -> usize {
        self.classes.iter().map(|c| c.subclasses.len()).sum()
    }

    /// Top class owning `subclass`, if any.
    pub fn parent_of(&self, subclass: &str) -> Option<&str> {
        self.classes
            .iter()
            .find(|c| c.subclasses.iter().any(|s| s == subclass))
            .map(|c| c.name.as_str())
    }

    pub fn check_pair(&self, top: &str, subclass: &str) -> Result<()> {
        match self.parent_of(subclass) {
            Some(parent) if parent == top => Ok(()),
            Some(parent) => Err(Error::Taxonomy(format!(
                "subclass `{subclass}` belongs to `{parent}`, not `{top}`"
            ))),
            None if self.top_class(top).is_none() => Err(Error::Taxonomy(format!("unknown top class `{top}`"))),
            None => Err(Error::Taxonomy(format!("unknown subclass `{subclass}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alerce_has_fourteen_unique_subclasses() {
        let t = Taxonomy::alerce();
        assert_eq!(t.num_subclasses(), 14);
        assert_eq!(t.top_classes().count(), 3);
        assert_eq!(t.parent_of("RRL"), Some("periodic"));
        assert_eq!(t.parent_of("CV/Nova"), Some("stochastic"));
    }

    #[test]
    fn pair_checks() {
        let t = Taxonomy::alerce();
        assert!(t.check_pair("transient", "SNIa").is_ok());
        assert!(matches!(t.check_pair("periodic", "SNIa"), Err(Error::Taxonomy(_))));
        assert!(t.check_pair("periodic", "XYZ").is_err());
        assert!(t.check_pair("nope", "XYZ").is_err());
    }

    #[test]
    fn duplicate_subclass_rejected() {
        let r = Taxonomy::new(vec![("a".into(), vec!["x".into()]), ("b".into(), vec!["x".into()])]);
        assert!(r.is_err());
    }
}
