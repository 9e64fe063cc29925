//! Object-label matching: token overlap after normalisation plus a synonym
//! table shipped as `assets/synonyms.tsv`.

use std::collections::{BTreeSet, HashMap};
use std::sync::LazyLock;

const SYNONYMS_TSV: &str = include_str!("../assets/synonyms.tsv");

const STOPWORDS: &[&str] = &["the", "a", "an", "of", "and", "any", "all", "to", "my", "your"];

/// token -> canonical token
static SYNONYMS: LazyLock<HashMap<String, String>> = LazyLock::new(|| parse_synonyms(SYNONYMS_TSV));

fn singular(tok: &str) -> String {
    if tok.len() > 3 && tok.ends_with("ies") {
        format!("{}y", &tok[..tok.len() - 3])
    } else if tok.len() > 3 && (tok.ends_with("ches") || tok.ends_with("shes") || tok.ends_with("xes")) {
        tok[..tok.len() - 2].to_string()
    } else if tok.len() > 2 && tok.ends_with('s') && !tok.ends_with("ss") {
        tok[..tok.len() - 1].to_string()
    } else {
        tok.to_string()
    }
}

fn raw_tokens(s: &str) -> impl Iterator<Item = String> + '_ {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .map(|t| singular(&t))
}

pub fn parse_synonyms(tsv: &str) -> HashMap<String, String> {
    let mut map = HashMap::new();
    for line in tsv.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t').map(str::trim).filter(|c| !c.is_empty());
        let Some(canon) = cols.next() else { continue };
        let canon = singular(&canon.to_lowercase());
        for syn in cols {
            for tok in raw_tokens(syn) {
                map.entry(tok).or_insert_with(|| canon.clone());
            }
        }
    }
    map
}

/// Lowercased, singularised, stopword-free tokens with synonyms mapped to
/// their canonical form.
pub fn normalize_tokens(s: &str) -> BTreeSet<String> {
    raw_tokens(s).map(|t| SYNONYMS.get(&t).cloned().unwrap_or(t)).collect()
}

/// True when the instruction object and a perceived label share a token.
pub fn match_label(obj: &str, hit_label: &str) -> bool {
    let a = normalize_tokens(obj);
    if a.is_empty() {
        return false;
    }
    let b = normalize_tokens(hit_label);
    a.intersection(&b).next().is_some()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert!(match_label("standing desk", "desk"));
        assert!(match_label("sofa", "couch"));
        assert!(!match_label("tree", "street"));
    }

    #[test]
    fn plural_and_case() {
        assert!(match_label("tables", "Table"));
        assert!(match_label("cars", "car"));
        assert!(match_label("Swimming Pool", "pool"));
        assert!(!match_label("glass", "gla"));
        assert!(!match_label("", "desk"));
        assert!(!match_label("the", "the"));
    }

    #[test]
    fn desk_and_table_are_synonyms() {
        assert!(match_label("tables", "standing desk"));
    }
}
