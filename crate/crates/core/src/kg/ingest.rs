use std::path::Path;

use serde::{Deserialize, Serialize};

use super::KgError;

const NS: &str = "http://rdf.freebase.com/ns/";

/// One ingestion record. Names and types are optional annotations for the
/// head and tail entities.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TripleRecord {
    pub head: String,
    pub relation: String,
    pub tail: String,
    #[serde(default)]
    pub head_name: Option<String>,
    #[serde(default)]
    pub tail_name: Option<String>,
    #[serde(default)]
    pub head_types: Vec<String>,
    #[serde(default)]
    pub tail_types: Vec<String>,
}

impl TripleRecord {
    pub fn new(head: &str, relation: &str, tail: &str) -> Self {
        Self {
            head: head.to_string(),
            relation: relation.to_string(),
            tail: tail.to_string(),
            ..Default::default()
        }
    }

    pub fn names(mut self, head: Option<&str>, tail: Option<&str>) -> Self {
        self.head_name = head.map(str::to_string);
        self.tail_name = tail.map(str::to_string);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TripleFormat {
    Tsv,
    NTriples,
}

impl TripleFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("nt") | Some("ntriples") => TripleFormat::NTriples,
            _ => TripleFormat::Tsv,
        }
    }
}

pub fn read_triples_file(path: &Path, format: TripleFormat) -> Result<Vec<TripleRecord>, KgError> {
    let text = std::fs::read_to_string(path).map_err(|source| KgError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        TripleFormat::Tsv => parse_tsv(&text),
        TripleFormat::NTriples => parse_ntriples(&text),
    }
}

fn optional(field: Option<&str>) -> Option<String> {
    field
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
}

fn type_list(field: Option<&str>) -> Vec<String> {
    field
        .map(|f| {
            f.split('|')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default()
}

/// Parses tab-separated records:
/// `head  relation  tail  [head_name]  [tail_name]  [head_types]  [tail_types]`.
///
/// Types are `|`-separated. Blank lines and lines starting with `#` are
/// skipped; the record index in errors counts data lines from zero.
pub fn parse_tsv(text: &str) -> Result<Vec<TripleRecord>, KgError> {
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let index = out.len();
        let fields: Vec<&str> = line.split('\t').collect();
        let required = |i: usize, what: &str| -> Result<String, KgError> {
            match fields.get(i).map(|f| f.trim()) {
                Some(f) if !f.is_empty() => Ok(f.to_string()),
                _ => Err(KgError::Ingest {
                    index,
                    reason: format!("missing {what}"),
                }),
            }
        };
        let head = required(0, "head")?;
        let relation = required(1, "relation")?;
        let tail = required(2, "tail")?;
        if fields.len() > 7 {
            return Err(KgError::Ingest {
                index,
                reason: format!("expected at most 7 fields, found {}", fields.len()),
            });
        }
        out.push(TripleRecord {
            head,
            relation,
            tail,
            head_name: optional(fields.get(3).copied()),
            tail_name: optional(fields.get(4).copied()),
            head_types: type_list(fields.get(5).copied()),
            tail_types: type_list(fields.get(6).copied()),
        });
    }
    Ok(out)
}

enum Term<'a> {
    Iri(&'a str),
    Literal { value: String, lang: Option<&'a str> },
}

fn parse_term(input: &str) -> Option<(Term<'_>, &str)> {
    let input = input.trim_start();
    if let Some(rest) = input.strip_prefix('<') {
        let end = rest.find('>')?;
        return Some((Term::Iri(&rest[..end]), &rest[end + 1..]));
    }
    if let Some(rest) = input.strip_prefix('"') {
        let mut value = String::new();
        let mut chars = rest.char_indices();
        let close = loop {
            let (i, c) = chars.next()?;
            match c {
                '\\' => {
                    let (_, esc) = chars.next()?;
                    value.push(match esc {
                        'n' => '\n',
                        't' => '\t',
                        'r' => '\r',
                        other => other,
                    });
                }
                '"' => break i,
                c => value.push(c),
            }
        };
        let mut rest = &rest[close + 1..];
        let mut lang = None;
        if let Some(tagged) = rest.strip_prefix('@') {
            let end = tagged
                .find(|c: char| c.is_whitespace())
                .unwrap_or(tagged.len());
            lang = Some(&tagged[..end]);
            rest = &tagged[end..];
        } else if let Some(typed) = rest.strip_prefix("^^<") {
            let end = typed.find('>')?;
            rest = &typed[end + 1..];
        }
        return Some((Term::Literal { value, lang }, rest));
    }
    None
}

/// Reads the subset of N-Triples that lives under the Freebase `ns:` prefix.
///
/// Object-property lines become triples; `type.object.name` literals
/// (English or untagged) become names and `type.object.type` becomes type
/// membership. Everything else is ignored.
pub fn parse_ntriples(text: &str) -> Result<Vec<TripleRecord>, KgError> {
    use std::collections::{BTreeMap, BTreeSet};

    let mut edges: Vec<(String, String, String)> = Vec::new();
    let mut names: BTreeMap<String, String> = BTreeMap::new();
    let mut types: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();

    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| KgError::Ingest {
            index: line_no,
            reason: reason.to_string(),
        };
        let (subject, rest) = parse_term(line).ok_or_else(|| bad("unparseable subject"))?;
        let (predicate, rest) = parse_term(rest).ok_or_else(|| bad("unparseable predicate"))?;
        let (object, rest) = parse_term(rest).ok_or_else(|| bad("unparseable object"))?;
        if !rest.trim_start().starts_with('.') {
            return Err(bad("missing terminating '.'"));
        }
        let (Term::Iri(s), Term::Iri(p)) = (subject, predicate) else {
            continue;
        };
        let (Some(s), Some(p)) = (s.strip_prefix(NS), p.strip_prefix(NS)) else {
            continue;
        };
        match (p, object) {
            ("type.object.name", Term::Literal { value, lang }) => {
                if lang.is_none_or(|l| l.eq_ignore_ascii_case("en")) {
                    names.entry(s.to_string()).or_insert(value);
                }
            }
            ("type.object.type", Term::Iri(o)) => {
                if let Some(t) = o.strip_prefix(NS) {
                    types.entry(s.to_string()).or_default().insert(t.to_string());
                }
            }
            (_, Term::Iri(o)) => {
                if let Some(o) = o.strip_prefix(NS) {
                    edges.push((s.to_string(), p.to_string(), o.to_string()));
                }
            }
            _ => {}
        }
    }

    let annotate = |id: &str| -> (Option<String>, Vec<String>) {
        (
            names.get(id).cloned(),
            types
                .get(id)
                .map(|t| t.iter().cloned().collect())
                .unwrap_or_default(),
        )
    };
    Ok(edges
        .into_iter()
        .map(|(head, relation, tail)| {
            let (head_name, head_types) = annotate(&head);
            let (tail_name, tail_types) = annotate(&tail);
            TripleRecord {
                head,
                relation,
                tail,
                head_name,
                tail_name,
                head_types,
                tail_types,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_optional_columns() {
        let text = "# comment\n\
                    a\tr.x\tb\tAlpha\t\tt.one|t.two\n\
                    \n\
                    b\tr.y\tc\n";
        let recs = parse_tsv(text).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].head_name.as_deref(), Some("Alpha"));
        assert_eq!(recs[0].tail_name, None);
        assert_eq!(recs[0].head_types, vec!["t.one", "t.two"]);
        assert!(recs[1].head_types.is_empty());
    }

    #[test]
    fn tsv_missing_field_names_record_index() {
        let text = "a\tr\tb\nc\tr\n";
        match parse_tsv(text) {
            Err(KgError::Ingest { index, reason }) => {
                assert_eq!(index, 1);
                assert!(reason.contains("tail"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ntriples_names_types_and_edges() {
        let text = r#"
<http://rdf.freebase.com/ns/m.1> <http://rdf.freebase.com/ns/type.object.name> "Barack Obama"@en .
<http://rdf.freebase.com/ns/m.1> <http://rdf.freebase.com/ns/type.object.name> "Barack Obama"@fr .
<http://rdf.freebase.com/ns/m.1> <http://rdf.freebase.com/ns/type.object.type> <http://rdf.freebase.com/ns/people.person> .
<http://rdf.freebase.com/ns/m.1> <http://rdf.freebase.com/ns/people.person.place_of_birth> <http://rdf.freebase.com/ns/m.2> .
<http://rdf.freebase.com/ns/m.2> <http://rdf.freebase.com/ns/type.object.name> "Honolulu"@en .
<http://example.org/x> <http://rdf.freebase.com/ns/r> <http://rdf.freebase.com/ns/m.2> .
<http://rdf.freebase.com/ns/m.1> <http://rdf.freebase.com/ns/people.person.height_meters> "1.85"^^<http://www.w3.org/2001/XMLSchema#float> .
"#;
        let recs = parse_ntriples(text).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.head, "m.1");
        assert_eq!(r.relation, "people.person.place_of_birth");
        assert_eq!(r.head_name.as_deref(), Some("Barack Obama"));
        assert_eq!(r.tail_name.as_deref(), Some("Honolulu"));
        assert_eq!(r.head_types, vec!["people.person"]);
    }

    #[test]
    fn ntriples_rejects_garbage() {
        assert!(parse_ntriples("<a> <b>\n").is_err());
    }
}
