//! Place-name dictionary backing the built-in baseline geoparser.
//!
//! Input is a tab-separated file with the columns
//! `name, alternate_names, lat, lon, population, feature_class`; alternate
//! names are comma-joined. An optional header row starting with `name` is
//! skipped. Malformed rows are skipped and counted in the [`LoadReport`].

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::GeoPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub canonical_name: String,
    pub alternate_names: Vec<String>,
    pub location: GeoPoint,
    pub population: u64,
    pub feature_class: String,
}

impl GazetteerEntry {
    fn names(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.canonical_name.as_str()).chain(self.alternate_names.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub loaded: usize,
    /// `(line number, reason)` for each rejected row.
    pub skipped: Vec<(usize, String)>,
}

#[derive(Debug, thiserror::Error)]
pub enum GazetteerError {
    #[error("gazetteer is not valid UTF-8")]
    Encoding,
    #[error("gazetteer has no valid rows ({} rejected)", .0.skipped.len())]
    Empty(LoadReport),
    #[error("cannot resolve a toponym without candidates")]
    NoCandidates,
}

#[derive(Debug, Clone)]
pub struct Gazetteer {
    entries: Vec<GazetteerEntry>,
    /// Lower-cased name to entry indices, ascending and unique.
    name_index: HashMap<String, Vec<usize>>,
    /// Longest indexed name, in whitespace/punctuation separated tokens.
    max_name_tokens: usize,
}

fn normalize(name: &str) -> String {
    name.to_lowercase()
}

impl Gazetteer {
    pub fn from_entries(entries: Vec<GazetteerEntry>) -> Self {
        let mut name_index: HashMap<String, Vec<usize>> = HashMap::new();
        let mut max_name_tokens = 0;
        for (i, entry) in entries.iter().enumerate() {
            for name in entry.names() {
                let ids = name_index.entry(normalize(name)).or_default();
                if ids.last() != Some(&i) {
                    ids.push(i);
                }
                max_name_tokens = max_name_tokens.max(crate::geoparse::tokenize(name).len());
            }
        }
        Self { entries, name_index, max_name_tokens }
    }

    pub fn entries(&self) -> &[GazetteerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_name_tokens(&self) -> usize {
        self.max_name_tokens
    }

    /// Case-insensitive exact match over canonical and alternate names.
    pub fn lookup_name(&self, name: &str) -> Vec<&GazetteerEntry> {
        self.name_index
            .get(&normalize(name))
            .map(|ids| ids.iter().map(|&i| &self.entries[i]).collect())
            .unwrap_or_default()
    }

    pub fn contains_name(&self, name: &str) -> bool {
        self.name_index.contains_key(&normalize(name))
    }
}

pub fn load_gazetteer(tsv: &[u8]) -> Result<(Gazetteer, LoadReport), GazetteerError> {
    let source = std::str::from_utf8(tsv).map_err(|_| GazetteerError::Encoding)?;
    let mut report = LoadReport::default();
    let mut entries = Vec::new();
    for (index, line) in source.lines().enumerate() {
        let line_no = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        if index == 0 && line.split('\t').next().is_some_and(|f| f.trim().eq_ignore_ascii_case("name")) {
            continue;
        }
        match parse_row(line) {
            Ok(entry) => entries.push(entry),
            Err(reason) => report.skipped.push((line_no, reason)),
        }
    }
    report.loaded = entries.len();
    if entries.is_empty() {
        return Err(GazetteerError::Empty(report));
    }
    Ok((Gazetteer::from_entries(entries), report))
}

fn parse_row(line: &str) -> Result<GazetteerEntry, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    let [name, alternates, lat, lon, population, feature_class] = fields[..] else {
        return Err(format!("expected 6 tab-separated fields, found {}", fields.len()));
    };
    let canonical_name = name.trim();
    if canonical_name.is_empty() {
        return Err("empty name".into());
    }
    let number = |what: &str, raw: &str| raw.trim().parse::<f64>().map_err(|_| format!("bad {what} {raw:?}"));
    let location = GeoPoint::new(number("longitude", lon)?, number("latitude", lat)?).map_err(|e| e.to_string())?;
    let population = population.trim().parse().map_err(|_| format!("bad population {population:?}"))?;
    Ok(GazetteerEntry {
        canonical_name: canonical_name.to_owned(),
        alternate_names: alternates
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
            .collect(),
        location,
        population,
        feature_class: feature_class.trim().to_owned(),
    })
}

/// Picks the most populous candidate. Ties go to the lexicographically
/// smallest canonical name, then the smallest `(lat, lon)`.
pub fn resolve_highest_population<'a>(
    candidates: &[&'a GazetteerEntry],
) -> Result<&'a GazetteerEntry, GazetteerError> {
    candidates.iter().copied().min_by(|a, b| rank(a, b)).ok_or(GazetteerError::NoCandidates)
}

fn rank(a: &GazetteerEntry, b: &GazetteerEntry) -> Ordering {
    b.population
        .cmp(&a.population)
        .then_with(|| a.canonical_name.cmp(&b.canonical_name))
        .then_with(|| a.location.lat.total_cmp(&b.location.lat))
        .then_with(|| a.location.lon.total_cmp(&b.location.lon))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "name\talternate_names\tlat\tlon\tpopulation\tfeature_class\n\
                       Paris\tParis,Lutetia,Ville Lumière\t48.85341\t2.3488\t2140526\tP\n\
                       Paris\t\t33.66094\t-95.55551\t24708\tP\n";

    fn toy() -> Gazetteer {
        load_gazetteer(TOY.as_bytes()).unwrap().0
    }

    #[test]
    fn loads_rows() {
        let (g, report) = load_gazetteer(TOY.as_bytes()).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(report.loaded, 2);
        assert!(report.skipped.is_empty());
    }

    #[test]
    fn bad_population_is_skipped() {
        let tsv = format!("{TOY}Lima\t\t-12.04318\t-77.02824\tabc\tP\n");
        let (g, report) = load_gazetteer(tsv.as_bytes()).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.skipped[0].0, 4);
    }

    #[test]
    fn out_of_range_and_short_rows_are_skipped() {
        let tsv = "Nowhere\t\t95.0\t0.0\t1\tP\nShort\t1\t2\n";
        match load_gazetteer(tsv.as_bytes()) {
            Err(GazetteerError::Empty(report)) => assert_eq!(report.skipped.len(), 2),
            other => panic!("expected empty gazetteer, got {other:?}"),
        }
    }

    #[test]
    fn lookup_is_case_insensitive() {
        let g = toy();
        assert_eq!(g.lookup_name("PARIS").len(), 2);
        assert_eq!(g.lookup_name("paris").len(), 2);
        assert!(g.lookup_name("Atlantis").is_empty());
    }

    #[test]
    fn alternate_name_returns_owner() {
        let g = toy();
        let hits = g.lookup_name("ville lumière");
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].population, 2140526);
        // Canonical name repeated among the alternates is indexed once.
        assert_eq!(g.lookup_name("Paris").iter().filter(|e| e.population == 2140526).count(), 1);
    }

    #[test]
    fn highest_population_wins() {
        let g = toy();
        let hit = resolve_highest_population(&g.lookup_name("paris")).unwrap();
        assert_eq!(hit.population, 2140526);
        assert_eq!(hit.location, GeoPoint { lon: 2.3488, lat: 48.85341 });
    }

    #[test]
    fn single_and_empty_candidates() {
        let g = toy();
        let one = [&g.entries()[1]];
        assert_eq!(resolve_highest_population(&one).unwrap(), &g.entries()[1]);
        assert!(matches!(resolve_highest_population(&[]), Err(GazetteerError::NoCandidates)));
    }

    #[test]
    fn ties_break_on_name_then_coordinates() {
        let entry = |name: &str, lat: f64| GazetteerEntry {
            canonical_name: name.into(),
            alternate_names: vec![],
            location: GeoPoint { lon: 0.0, lat },
            population: 100,
            feature_class: "P".into(),
        };
        let (b, a, a_south) = (entry("Bravo", 1.0), entry("Alpha", 5.0), entry("Alpha", -5.0));
        assert_eq!(resolve_highest_population(&[&b, &a]).unwrap().canonical_name, "Alpha");
        assert_eq!(resolve_highest_population(&[&a, &b, &a_south]).unwrap().location.lat, -5.0);
    }

    #[test]
    fn max_name_tokens_tracks_longest_name() {
        let g = toy();
        assert_eq!(g.max_name_tokens(), 2);
    }
}
