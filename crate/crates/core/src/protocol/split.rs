use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{ProtocolError, Template};

/// Split file contents: template ids only.
///
/// ```text
/// # comment
/// split 01
/// closed_set true
/// gallery G1 G2
/// probe P1
/// pair P1 G1
/// ```
///
/// `gallery` and `probe` lines may repeat and carry several ids each.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitSpec {
    pub split_id: String,
    pub closed_set: bool,
    pub gallery: Vec<String>,
    pub probes: Vec<String>,
    pub pairs: Vec<(String, String)>,
}

impl SplitSpec {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "split {}", self.split_id);
        let _ = writeln!(out, "closed_set {}", self.closed_set);
        for g in &self.gallery {
            let _ = writeln!(out, "gallery {g}");
        }
        for p in &self.probes {
            let _ = writeln!(out, "probe {p}");
        }
        for (a, b) in &self.pairs {
            let _ = writeln!(out, "pair {a} {b}");
        }
        out
    }

    pub fn parse(text: &str, source: &str) -> Result<Self, ProtocolError> {
        let err = |line: usize, message: String| ProtocolError::Parse {
            path: source.to_string(),
            line: line as u64,
            message,
        };
        let mut spec = SplitSpec::default();
        let mut have_id = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut tokens = content.split_whitespace();
            let key = tokens.next().unwrap_or_default();
            let args: Vec<String> = tokens.map(str::to_string).collect();
            match key {
                "split" => match args.as_slice() {
                    [id] => {
                        spec.split_id = id.clone();
                        have_id = true;
                    }
                    _ => return Err(err(line, "expected `split <id>`".into())),
                },
                "closed_set" => match args.as_slice() {
                    [v] => {
                        spec.closed_set = v
                            .parse()
                            .map_err(|_| err(line, format!("bad boolean {v:?}")))?
                    }
                    _ => return Err(err(line, "expected `closed_set true|false`".into())),
                },
                "gallery" | "probe" if args.is_empty() => {
                    return Err(err(line, format!("`{key}` needs at least one template id")))
                }
                "gallery" => spec.gallery.extend(args),
                "probe" => spec.probes.extend(args),
                "pair" => match <[String; 2]>::try_from(args) {
                    Ok([a, b]) => spec.pairs.push((a, b)),
                    Err(_) => return Err(err(line, "expected `pair <template> <template>`".into())),
                },
                other => return Err(err(line, format!("unknown directive `{other}`"))),
            }
        }
        if !have_id {
            return Err(err(0, "missing `split <id>` line".into()));
        }
        Ok(spec)
    }
}

/// A resolved evaluation split.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub split_id: String,
    pub closed_set: bool,
    pub gallery: Vec<Template>,
    pub probes: Vec<Template>,
    pub verification_pairs: Vec<(String, String)>,
}

impl Split {
    /// Looks up every template id of `spec` and validates the split.
    pub fn resolve(spec: &SplitSpec, templates: &[Template]) -> Result<Split, ProtocolError> {
        let by_id: HashMap<&str, &Template> = templates
            .iter()
            .map(|t| (t.template_id.as_str(), t))
            .collect();
        let lookup = |ids: &[String]| -> Result<Vec<Template>, ProtocolError> {
            let mut seen = HashSet::new();
            ids.iter()
                .map(|id| {
                    if !seen.insert(id.as_str()) {
                        return Err(ProtocolError::DuplicateTemplate {
                            split: spec.split_id.clone(),
                            template: id.clone(),
                        });
                    }
                    by_id
                        .get(id.as_str())
                        .map(|t| (*t).clone())
                        .ok_or_else(|| ProtocolError::UnknownTemplate {
                            split: spec.split_id.clone(),
                            template: id.clone(),
                        })
                })
                .collect()
        };
        let gallery = lookup(&spec.gallery)?;
        let probes = lookup(&spec.probes)?;

        let known: HashSet<&str> = gallery
            .iter()
            .chain(&probes)
            .map(|t| t.template_id.as_str())
            .collect();
        for (a, b) in &spec.pairs {
            for id in [a, b] {
                if !known.contains(id.as_str()) {
                    return Err(ProtocolError::UnknownTemplate {
                        split: spec.split_id.clone(),
                        template: id.clone(),
                    });
                }
            }
        }
        if spec.closed_set {
            let enrolled: BTreeSet<&str> = gallery.iter().map(|t| t.subject_id.as_str()).collect();
            if let Some(p) = probes.iter().find(|p| !enrolled.contains(p.subject_id.as_str())) {
                return Err(ProtocolError::ClosedSetViolation {
                    split: spec.split_id.clone(),
                    subject: p.subject_id.clone(),
                });
            }
        }
        Ok(Split {
            split_id: spec.split_id.clone(),
            closed_set: spec.closed_set,
            gallery,
            probes,
            verification_pairs: spec.pairs.clone(),
        })
    }

    /// Template lookup across both sides.
    pub fn template(&self, id: &str) -> Option<&Template> {
        self.gallery
            .iter()
            .chain(&self.probes)
            .find(|t| t.template_id == id)
    }

    /// Every member image id, gallery first, in template order.
    pub fn image_ids(&self) -> impl Iterator<Item = &str> {
        self.gallery
            .iter()
            .chain(&self.probes)
            .flat_map(|t| t.members.iter().map(String::as_str))
    }
}

impl FromStr for SplitSpec {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SplitSpec::parse(s, "<split>")
    }
}

pub fn load_split(path: impl AsRef<Path>) -> Result<SplitSpec, ProtocolError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    SplitSpec::parse(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(id: &str, subject: &str) -> Template {
        Template {
            template_id: id.into(),
            subject_id: subject.into(),
            members: vec![format!("{id}-img")],
        }
    }

    fn templates() -> Vec<Template> {
        vec![t("G1", "A"), t("G2", "B"), t("P1", "A"), t("P2", "C")]
    }

    #[test]
    fn parses_and_round_trips() {
        let text = "# demo\nsplit 3\nclosed_set false\ngallery G1 G2\nprobe P1\nprobe P2\npair P1 G1\n";
        let spec: SplitSpec = text.parse().unwrap();
        assert_eq!(spec.gallery, vec!["G1", "G2"]);
        assert_eq!(spec.probes, vec!["P1", "P2"]);
        assert_eq!(spec.pairs, vec![("P1".to_string(), "G1".to_string())]);
        assert_eq!(spec.to_text().parse::<SplitSpec>().unwrap(), spec);
        let split = Split::resolve(&spec, &templates()).unwrap();
        assert_eq!(split.probes[1].subject_id, "C");
        assert_eq!(split.image_ids().count(), 4);
    }

    #[test]
    fn closed_set_requires_enrolled_subjects() {
        let text = "split 1\nclosed_set true\ngallery G1 G2\nprobe P1 P2\n";
        let spec: SplitSpec = text.parse().unwrap();
        assert!(matches!(
            Split::resolve(&spec, &templates()),
            Err(ProtocolError::ClosedSetViolation { subject, .. }) if subject == "C"
        ));
    }

    #[test]
    fn reference_errors_name_the_template() {
        let spec: SplitSpec = "split 1\ngallery G1 G9\n".parse().unwrap();
        assert!(matches!(
            Split::resolve(&spec, &templates()),
            Err(ProtocolError::UnknownTemplate { template, .. }) if template == "G9"
        ));
        let spec: SplitSpec = "split 1\ngallery G1 G1\n".parse().unwrap();
        assert!(matches!(
            Split::resolve(&spec, &templates()),
            Err(ProtocolError::DuplicateTemplate { .. })
        ));
        let spec: SplitSpec = "split 1\ngallery G1\nprobe P1\npair P1 G2\n".parse().unwrap();
        assert!(matches!(
            Split::resolve(&spec, &templates()),
            Err(ProtocolError::UnknownTemplate { template, .. }) if template == "G2"
        ));
    }

    #[test]
    fn syntax_errors() {
        for bad in ["gallery G1\n", "split 1\npair A\n", "split 1\nfoo bar\n", "split 1\nclosed_set maybe\n", "split 1\nprobe\n"] {
            assert!(bad.parse::<SplitSpec>().is_err(), "{bad:?}");
        }
    }
}
