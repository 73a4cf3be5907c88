//! SPARQL query templates for a Freebase endpoint.
//!
//! Text is kept byte-for-byte in the layout used by the deployed service,
//! including its line breaks and trailing spaces, so logged queries can be
//! diffed against the golden files in `tests/golden/`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::KgError;

pub const NS_PREFIX: &str = "http://rdf.freebase.com/ns/";

/// Result caps baked into the templates.
pub const RELATION_LIMIT: usize = 100;
pub const TRIPLE_LIMIT: usize = 40;
pub const CVT_RELATION_LIMIT: usize = 50;
pub const RESOLUTION_LIMIT: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    EntityResolution,
    RelationsOutgoing,
    RelationsIncoming,
    TriplesAggregated,
    CvtRelations,
    /// Mirror of `TriplesAggregated` that walks edges backwards.
    TriplesAggregatedIncoming,
    /// Name and types of a single id.
    EntityInfo,
}

impl QueryKind {
    /// The five kinds with checked-in golden files.
    pub const LISTED: [QueryKind; 5] = [
        QueryKind::EntityResolution,
        QueryKind::RelationsOutgoing,
        QueryKind::RelationsIncoming,
        QueryKind::TriplesAggregated,
        QueryKind::CvtRelations,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryKind::EntityResolution => "entity_resolution",
            QueryKind::RelationsOutgoing => "relations_outgoing",
            QueryKind::RelationsIncoming => "relations_incoming",
            QueryKind::TriplesAggregated => "triples_aggregated",
            QueryKind::CvtRelations => "cvt_relations",
            QueryKind::TriplesAggregatedIncoming => "triples_aggregated_incoming",
            QueryKind::EntityInfo => "entity_info",
        }
    }

    /// Binding keys the template needs.
    pub fn slots(self) -> &'static [&'static str] {
        match self {
            QueryKind::EntityResolution => &["name"],
            QueryKind::RelationsOutgoing | QueryKind::RelationsIncoming | QueryKind::EntityInfo => &["entity"],
            QueryKind::TriplesAggregated | QueryKind::TriplesAggregatedIncoming => &["entity", "relation"],
            QueryKind::CvtRelations => &["cvt"],
        }
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryKind {
    type Err = KgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            QueryKind::EntityResolution,
            QueryKind::RelationsOutgoing,
            QueryKind::RelationsIncoming,
            QueryKind::TriplesAggregated,
            QueryKind::CvtRelations,
            QueryKind::TriplesAggregatedIncoming,
            QueryKind::EntityInfo,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| KgError::Template(format!("unknown query kind {s:?}")))
    }
}

const ENTITY_RESOLUTION: &str = r#"PREFIX ns: <http://rdf.freebase.com/ns/>
SELECT DISTINCT ?entity ?type WHERE {
  ?entity ns:type.object.name "{name}"@en .
  ?entity ns:type.object.type ?type .
} LIMIT 100"#;

const RELATIONS_OUTGOING: &str = concat!(
    "PREFIX ns: <http://rdf.freebase.com/ns/>\n",
    "SELECT DISTINCT ?relation WHERE {\n",
    "  ns:{entity} ?relation ?tail .\n",
    "  FILTER(isIRI(?relation) && STRSTARTS(STR(?relation), \n",
    "         \"http://rdf.freebase.com/ns/\"))\n",
    "} LIMIT 100",
);

const RELATIONS_INCOMING: &str = "PREFIX ns: <http://rdf.freebase.com/ns/>
SELECT DISTINCT ?relation WHERE {
  ?head ?relation ns:{entity} .
  FILTER(isIRI(?relation) && STRSTARTS(STR(?relation),
         \"http://rdf.freebase.com/ns/\"))
} LIMIT 100";

const TRIPLES_AGGREGATED: &str = concat!(
    "PREFIX ns: <http://rdf.freebase.com/ns/>\n",
    "SELECT ?tail (SAMPLE(?name_en) AS ?preferred_name)\n",
    "             (SAMPLE(?name_any) AS ?fallback_name)\n",
    "WHERE {\n",
    "  ns:{entity} ns:{relation} ?tail .\n",
    "  OPTIONAL { \n",
    "    ?tail ns:type.object.name ?name_en .\n",
    "    FILTER(LANGMATCHES(LANG(?name_en), 'en'))\n",
    "  }\n",
    "  OPTIONAL { ?tail ns:type.object.name ?name_any . }\n",
    "}\n",
    "GROUP BY ?tail LIMIT 40",
);

const TRIPLES_AGGREGATED_INCOMING: &str = "PREFIX ns: <http://rdf.freebase.com/ns/>
SELECT ?tail (SAMPLE(?name_en) AS ?preferred_name)
             (SAMPLE(?name_any) AS ?fallback_name)
WHERE {
  ?tail ns:{relation} ns:{entity} .
  OPTIONAL {
    ?tail ns:type.object.name ?name_en .
    FILTER(LANGMATCHES(LANG(?name_en), 'en'))
  }
  OPTIONAL { ?tail ns:type.object.name ?name_any . }
}
GROUP BY ?tail LIMIT 40";

const CVT_RELATIONS: &str = "PREFIX ns: <http://rdf.freebase.com/ns/>
SELECT DISTINCT ?relation WHERE {
  ns:{cvt} ?relation ?tail .
  FILTER(isIRI(?relation) && STRSTARTS(STR(?relation),
         \"http://rdf.freebase.com/ns/\"))
} LIMIT 50";

const ENTITY_INFO: &str = "PREFIX ns: <http://rdf.freebase.com/ns/>
SELECT ?name ?type WHERE {
  OPTIONAL {
    ns:{entity} ns:type.object.name ?name .
    FILTER(LANGMATCHES(LANG(?name), 'en'))
  }
  OPTIONAL { ns:{entity} ns:type.object.type ?type . }
} LIMIT 100";

fn template(kind: QueryKind) -> &'static str {
    match kind {
        QueryKind::EntityResolution => ENTITY_RESOLUTION,
        QueryKind::RelationsOutgoing => RELATIONS_OUTGOING,
        QueryKind::RelationsIncoming => RELATIONS_INCOMING,
        QueryKind::TriplesAggregated => TRIPLES_AGGREGATED,
        QueryKind::CvtRelations => CVT_RELATIONS,
        QueryKind::TriplesAggregatedIncoming => TRIPLES_AGGREGATED_INCOMING,
        QueryKind::EntityInfo => ENTITY_INFO,
    }
}

/// Ids and relation names become prefixed names (`ns:m.02mjmr`), which only
/// admit a restricted character set.
fn check_local_name(slot: &str, value: &str) -> Result<(), KgError> {
    let ok = !value.is_empty()
        && !value.starts_with('.')
        && !value.ends_with('.')
        && value
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(KgError::Template(format!(
            "binding {slot}={value:?} is not a valid ns: local name"
        )))
    }
}

fn escape_literal(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

pub type Bindings = BTreeMap<String, String>;

/// Convenience for building [`Bindings`] from string pairs.
pub fn bindings<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Bindings {
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

pub fn render_sparql(kind: QueryKind, bindings: &Bindings) -> Result<String, KgError> {
    let mut text = template(kind).to_string();
    for slot in kind.slots() {
        let value = bindings
            .get(*slot)
            .ok_or_else(|| KgError::Template(format!("{kind}: missing binding {slot:?}")))?;
        let rendered = if *slot == "name" {
            if value.is_empty() {
                return Err(KgError::Template(format!("{kind}: empty name")));
            }
            escape_literal(value)
        } else {
            check_local_name(slot, value)?;
            value.clone()
        };
        text = text.replace(&format!("{{{slot}}}"), &rendered);
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_binding_is_a_template_error() {
        let err = render_sparql(QueryKind::TriplesAggregated, &bindings([("entity", "m.1")])).unwrap_err();
        assert!(err.to_string().contains("relation"));
    }

    #[test]
    fn injection_in_ids_is_rejected() {
        let bad = bindings([("entity", "m.1 } DROP")]);
        assert!(render_sparql(QueryKind::RelationsOutgoing, &bad).is_err());
    }

    #[test]
    fn names_are_escaped() {
        let q = render_sparql(QueryKind::EntityResolution, &bindings([("name", "Say \"hi\"")])).unwrap();
        assert!(q.contains(r#""Say \"hi\""@en"#));
    }

    #[test]
    fn listed_kinds_parse_back() {
        for kind in QueryKind::LISTED {
            assert_eq!(kind.as_str().parse::<QueryKind>().unwrap(), kind);
        }
    }
}
