//! Shared test oracles: a unit-weight Dijkstra shortest-path reference, a
//! random valid-map generator, and a small XML well-formedness checker.
//!
//! Each integration target compiles this module separately and uses only a
//! subset of it.
#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::path::PathBuf;

use lexnav::gridworld::ApartmentMap;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn data_path(file: &str) -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data")).join(file)
}

pub fn default_map_text() -> String {
    std::fs::read_to_string(data_path("apartment.map")).unwrap()
}

/// Unit-weight Dijkstra over the passable cells, from the success region of
/// `goal`. Written against the raw ASCII text so it shares nothing with the
/// BFS it checks.
pub fn dijkstra_distances(map_text: &str, goal: &str) -> BTreeMap<(usize, usize), u32> {
    let legend: BTreeMap<char, &str> = [
        ('S', "shower"),
        ('B', "bathtub"),
        ('T', "toilet"),
        ('O', "stove"),
        ('A', "toaster"),
        ('L', "table"),
        ('M', "microwave"),
        ('D', "bed"),
        ('W', "wardrobe"),
        ('N', "nightstand"),
    ]
    .into_iter()
    .collect();

    let rows: Vec<&str> = map_text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut passable = BTreeSet::new();
    let mut object_cell = None;
    for (y, row) in rows.iter().enumerate() {
        for (x, glyph) in row.chars().enumerate() {
            match glyph {
                '.' | '>' => {
                    passable.insert((x, y));
                }
                '#' => {}
                g => {
                    if legend.get(&g) == Some(&goal) {
                        object_cell = Some((x, y));
                    }
                }
            }
        }
    }
    let (ox, oy) = object_cell.expect("goal object on map");
    let neighbors = |(x, y): (usize, usize)| {
        let mut out = Vec::new();
        if y > 0 {
            out.push((x, y - 1));
        }
        out.push((x + 1, y));
        out.push((x, y + 1));
        if x > 0 {
            out.push((x - 1, y));
        }
        out
    };
    let sources: Vec<(usize, usize)> = neighbors((ox, oy))
        .into_iter()
        .filter(|c| passable.contains(c))
        .collect();

    let mut dist = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    for s in sources {
        dist.insert(s, 0u32);
        heap.push(Reverse((0u32, s)));
    }
    while let Some(Reverse((d, cell))) = heap.pop() {
        if dist.get(&cell).copied() != Some(d) {
            continue;
        }
        for n in neighbors(cell) {
            if passable.contains(&n) && dist.get(&n).is_none_or(|&old| d + 1 < old) {
                dist.insert(n, d + 1);
                heap.push(Reverse((d + 1, n)));
            }
        }
    }
    dist
}

/// Generates a random map that passes validation: bordered walls, random
/// interior walls, one spawn row, and a handful of objects in open space.
/// Returns both the ASCII text (for oracles) and the parsed map.
pub fn random_valid_map(rng: &mut ChaCha8Rng) -> (String, ApartmentMap) {
    loop {
        let width = rng.random_range(9..18);
        let height = rng.random_range(7..13);
        let mut grid: Vec<Vec<char>> = (0..height)
            .map(|y| {
                (0..width)
                    .map(|x| {
                        let border = x == 0 || y == 0 || x == width - 1 || y == height - 1;
                        if border || rng.random_bool(0.18) {
                            '#'
                        } else {
                            '.'
                        }
                    })
                    .collect()
            })
            .collect();
        let spawn_row = height - 2;
        for x in 1..width - 1 {
            grid[spawn_row][x] = '>';
        }
        let object_glyphs = ['S', 'B', 'T'];
        let n_objects = rng.random_range(1..=object_glyphs.len());
        for &glyph in object_glyphs.iter().take(n_objects) {
            let x = rng.random_range(1..width - 1);
            let y = rng.random_range(1..spawn_row);
            grid[y][x] = glyph;
        }
        let text: String = grid
            .into_iter()
            .map(|row| row.into_iter().collect::<String>() + "\n")
            .collect();
        if let Ok(map) = ApartmentMap::parse(&text) {
            return (text, map);
        }
    }
}

/// Minimal XML well-formedness check: tags balance and nest properly.
pub fn assert_well_formed_xml(text: &str) {
    let mut stack: Vec<String> = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('<') {
        let close = rest[open..]
            .find('>')
            .map(|i| open + i)
            .expect("every tag closes");
        let tag = &rest[open + 1..close];
        rest = &rest[close + 1..];
        if tag.starts_with('?') || tag.starts_with('!') {
            continue;
        }
        if let Some(name) = tag.strip_prefix('/') {
            let top = stack
                .pop()
                .unwrap_or_else(|| panic!("stray closing </{name}>"));
            assert_eq!(top, name, "mismatched closing tag");
        } else if !tag.ends_with('/') {
            let name: String = tag
                .split_whitespace()
                .next()
                .expect("tag has a name")
                .to_string();
            stack.push(name);
        }
    }
    assert!(stack.is_empty(), "unclosed tags: {stack:?}");
}

/// Median of a small sample.
pub fn median(values: &[u64]) -> u64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    sorted[sorted.len() / 2]
}
