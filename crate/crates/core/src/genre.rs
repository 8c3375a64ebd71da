//! Genre taxonomy: a static mapping from ~40 specific genre labels to
//! 11 broad store genres, plus corpus genre statistics.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenreError {
    #[error("unmapped specific genre {0:?}")]
    Unmapped(String),
    #[error("unknown broad genre {0:?} (expected one of the 11 store genres)")]
    UnknownBroad(String),
}

/// The 11 broad genres found across the major game stores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BroadGenre {
    Shooters,
    Sports,
    Platformers,
    Rpg,
    Puzzle,
    Action,
    Fighting,
    Strategy,
    Simulation,
    Adventure,
    Racing,
}

impl BroadGenre {
    pub const ALL: [BroadGenre; 11] = [
        BroadGenre::Shooters,
        BroadGenre::Sports,
        BroadGenre::Platformers,
        BroadGenre::Rpg,
        BroadGenre::Puzzle,
        BroadGenre::Action,
        BroadGenre::Fighting,
        BroadGenre::Strategy,
        BroadGenre::Simulation,
        BroadGenre::Adventure,
        BroadGenre::Racing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BroadGenre::Shooters => "Shooters",
            BroadGenre::Sports => "Sports",
            BroadGenre::Platformers => "Platformers",
            BroadGenre::Rpg => "RPG",
            BroadGenre::Puzzle => "Puzzle",
            BroadGenre::Action => "Action",
            BroadGenre::Fighting => "Fighting",
            BroadGenre::Strategy => "Strategy",
            BroadGenre::Simulation => "Simulation",
            BroadGenre::Adventure => "Adventure",
            BroadGenre::Racing => "Racing",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|g| *g == self).unwrap()
    }

    /// Case-insensitive lookup. "Platform" is accepted for
    /// [`BroadGenre::Platformers`], matching the source table's
    /// spelling.
    pub fn parse(name: &str) -> Result<BroadGenre, GenreError> {
        let normalized = name.trim().to_ascii_lowercase();
        match normalized.as_str() {
            "shooters" | "shooter" => Ok(BroadGenre::Shooters),
            "sports" => Ok(BroadGenre::Sports),
            "platformers" | "platform" | "platformer" => Ok(BroadGenre::Platformers),
            "rpg" => Ok(BroadGenre::Rpg),
            "puzzle" => Ok(BroadGenre::Puzzle),
            "action" => Ok(BroadGenre::Action),
            "fighting" => Ok(BroadGenre::Fighting),
            "strategy" => Ok(BroadGenre::Strategy),
            "simulation" => Ok(BroadGenre::Simulation),
            "adventure" => Ok(BroadGenre::Adventure),
            "racing" => Ok(BroadGenre::Racing),
            _ => Err(GenreError::UnknownBroad(name.trim().to_string())),
        }
    }
}

impl std::fmt::Display for BroadGenre {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Accuracy of guessing a genre uniformly at random: 1/11, about 9%.
pub const RANDOM_GUESS_ACCURACY: f64 = 1.0 / 11.0;

/// The specific-to-broad rows as published, duplicates included
/// ("Rail shooter" appears twice; "Run and gun" and "Run-and-gun" both
/// occur and normalize to one key).
const TABLE: [(&str, BroadGenre); 40] = [
    ("Scrolling shooter", BroadGenre::Shooters),
    ("Rail shooter", BroadGenre::Shooters),
    ("2D action platformer", BroadGenre::Platformers),
    ("Run and gun", BroadGenre::Shooters),
    ("Block breaker", BroadGenre::Puzzle),
    ("Puzzle-platform", BroadGenre::Puzzle),
    ("Beat 'em up", BroadGenre::Fighting),
    ("Multi-directional shooter", BroadGenre::Shooters),
    ("Turn-based strategy", BroadGenre::Strategy),
    ("Run-and-gun", BroadGenre::Shooters),
    ("Maze", BroadGenre::Puzzle),
    ("Casino", BroadGenre::Simulation),
    ("Action-adventure", BroadGenre::Adventure),
    ("Platform-adventure", BroadGenre::Adventure),
    ("Science fiction", BroadGenre::Adventure),
    ("Side-scrolling action", BroadGenre::Action),
    ("Shoot 'em up", BroadGenre::Shooters),
    ("Light gun shooter", BroadGenre::Shooters),
    ("Fixed shooter", BroadGenre::Shooters),
    ("Action RPG", BroadGenre::Rpg),
    ("First-person rail shooter", BroadGenre::Shooters),
    ("Vehicular combat", BroadGenre::Action),
    ("Graphic adventure", BroadGenre::Adventure),
    ("Hack and slash", BroadGenre::Action),
    ("Action adventure", BroadGenre::Adventure),
    ("Tactical role-playing", BroadGenre::Rpg),
    ("Pinball", BroadGenre::Simulation),
    ("Baseball", BroadGenre::Sports),
    ("Arcade style racing", BroadGenre::Racing),
    ("Side-scrolling", BroadGenre::Action),
    ("Rail shooter", BroadGenre::Shooters),
    ("Carnival", BroadGenre::Simulation),
    ("Modern first-person adventure", BroadGenre::Adventure),
    ("Educational", BroadGenre::Simulation),
    ("Tile-matching", BroadGenre::Puzzle),
    ("Action platformer", BroadGenre::Platformers),
    ("Children's book", BroadGenre::Adventure),
    ("Shooting gallery", BroadGenre::Shooters),
    ("Multidirectional shooter", BroadGenre::Shooters),
    ("Business simulation", BroadGenre::Simulation),
];

/// Lookup key: lowercase, hyphens as spaces, whitespace collapsed.
fn normalize(genre: &str) -> String {
    genre
        .to_ascii_lowercase()
        .replace('-', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn lookup_table() -> &'static HashMap<String, BroadGenre> {
    static MAP: OnceLock<HashMap<String, BroadGenre>> = OnceLock::new();
    MAP.get_or_init(|| {
        let mut map = HashMap::new();
        for (specific, broad) in TABLE {
            let previous = map.insert(normalize(specific), broad);
            debug_assert!(
                previous.is_none() || previous == Some(broad),
                "conflicting duplicate for {specific:?}"
            );
        }
        map
    })
}

/// Map a specific genre label to its broad genre. Unknown labels are an
/// explicit error, never a silent default.
pub fn map_genre(specific: &str) -> Result<BroadGenre, GenreError> {
    lookup_table()
        .get(&normalize(specific))
        .copied()
        .ok_or_else(|| GenreError::Unmapped(specific.trim().to_string()))
}

/// De-duplicated table rows in publication order, original spellings.
pub fn table_rows() -> Vec<(&'static str, BroadGenre)> {
    let mut seen = std::collections::HashSet::new();
    TABLE
        .iter()
        .filter(|(specific, _)| seen.insert(*specific))
        .copied()
        .collect()
}

/// The mapping as CSV (`specific,broad`).
pub fn export_csv() -> String {
    let mut out = String::from("specific,broad\n");
    for (specific, broad) in table_rows() {
        out.push_str(&format!("{specific},{broad}\n"));
    }
    out
}

/// Counts per broad genre.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GenreHistogram {
    pub counts: [u64; 11],
}

pub fn genre_histogram(labels: &[BroadGenre]) -> GenreHistogram {
    let mut histogram = GenreHistogram::default();
    for label in labels {
        histogram.counts[label.index()] += 1;
    }
    histogram
}

impl GenreHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn count(&self, genre: BroadGenre) -> u64 {
        self.counts[genre.index()]
    }

    pub fn fraction(&self, genre: BroadGenre) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.count(genre) as f64 / total as f64
        }
    }

    /// Text bar chart, widest bar 40 characters.
    pub fn render_text(&self) -> String {
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1);
        let mut out = String::new();
        for genre in BroadGenre::ALL {
            let count = self.count(genre);
            let bar_len = (count * 40 / max) as usize;
            out.push_str(&format!(
                "{:<12} {:>6}  {:>6.1}%  {}\n",
                genre.name(),
                count,
                100.0 * self.fraction(genre),
                "#".repeat(bar_len)
            ));
        }
        out.push_str(&format!(
            "total {:>6}  (random-guess baseline {:.1}%)\n",
            self.total(),
            100.0 * RANDOM_GUESS_ACCURACY
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_rows_resolve_as_published() {
        for (specific, expected) in [
            ("Scrolling shooter", BroadGenre::Shooters),
            ("Block breaker", BroadGenre::Puzzle),
            ("Beat 'em up", BroadGenre::Fighting),
            ("Turn-based strategy", BroadGenre::Strategy),
            ("Casino", BroadGenre::Simulation),
            ("Action RPG", BroadGenre::Rpg),
            ("Baseball", BroadGenre::Sports),
            ("Arcade style racing", BroadGenre::Racing),
            ("Vehicular combat", BroadGenre::Action),
            ("Graphic adventure", BroadGenre::Adventure),
        ] {
            assert_eq!(map_genre(specific).unwrap(), expected, "{specific}");
        }
    }

    #[test]
    fn unknown_genre_is_an_explicit_error() {
        assert!(matches!(
            map_genre("Roguelike").unwrap_err(),
            GenreError::Unmapped(_)
        ));
    }

    #[test]
    fn lookup_is_case_insensitive_and_hyphen_tolerant() {
        assert_eq!(map_genre("  scrolling SHOOTER ").unwrap(), BroadGenre::Shooters);
        assert_eq!(map_genre("Run and gun").unwrap(), map_genre("Run-and-gun").unwrap());
        assert_eq!(
            map_genre("Action-adventure").unwrap(),
            map_genre("Action adventure").unwrap()
        );
    }

    #[test]
    fn codomain_is_exactly_the_eleven_store_genres() {
        let seen: std::collections::HashSet<BroadGenre> =
            table_rows().iter().map(|(_, broad)| *broad).collect();
        assert_eq!(seen.len(), 11, "every store genre appears in the table");
        assert_eq!(BroadGenre::ALL.len(), 11);
        assert!(seen.iter().all(|g| BroadGenre::ALL.contains(g)));
    }

    #[test]
    fn table_covers_the_published_specific_genres() {
        // 40 published rows, one exact duplicate.
        assert_eq!(table_rows().len(), 39);
        let unique_keys: std::collections::HashSet<String> =
            table_rows().iter().map(|(s, _)| normalize(s)).collect();
        // "Run and gun"/"Run-and-gun" and the action-adventure pair fold.
        assert_eq!(unique_keys.len(), 37);
    }

    #[test]
    fn histogram_counts_and_fractions() {
        let histogram = genre_histogram(&[]);
        assert_eq!(histogram.total(), 0);

        let labels = [BroadGenre::Shooters, BroadGenre::Shooters, BroadGenre::Puzzle];
        let histogram = genre_histogram(&labels);
        assert_eq!(histogram.count(BroadGenre::Shooters), 2);
        assert_eq!(histogram.count(BroadGenre::Puzzle), 1);
        assert_eq!(histogram.count(BroadGenre::Racing), 0);
        assert_eq!(histogram.total(), labels.len() as u64);
        assert!((histogram.fraction(BroadGenre::Shooters) - 2.0 / 3.0).abs() < 1e-12);
        assert!(histogram.render_text().contains("Shooters"));
    }

    #[test]
    fn broad_genre_parse_accepts_canonical_and_platform_alias() {
        assert_eq!(BroadGenre::parse("RPG").unwrap(), BroadGenre::Rpg);
        assert_eq!(BroadGenre::parse("platform").unwrap(), BroadGenre::Platformers);
        assert!(BroadGenre::parse("arcade").is_err());
    }

    #[test]
    fn csv_export_lists_every_row() {
        let csv = export_csv();
        assert_eq!(csv.lines().count(), 40); // header + 39 rows
        assert!(csv.contains("Scrolling shooter,Shooters"));
        assert!(csv.contains("2D action platformer,Platformers"));
    }
}
