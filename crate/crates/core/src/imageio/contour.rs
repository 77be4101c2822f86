use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};

/// Closed polyline in domain coordinates; the first vertex is repeated last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub points: Vec<[f64; 2]>,
}

impl Contour {
    /// Shoelace area; positive when counterclockwise in `(x1, x2)`.
    pub fn signed_area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[0][0] * w[1][1] - w[1][0] * w[0][1])
            .sum::<f64>()
            * 0.5
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourSet {
    pub contours: Vec<Contour>,
    /// Field nonnegative everywhere (no zero crossing, whole domain inside).
    pub full: bool,
    /// Field negative everywhere.
    pub empty: bool,
}

/// Marching squares on the cell-centered field `{v >= 0}`.
///
/// The field is padded with one ring of negative cells so every contour
/// closes; vertices on that ring are clamped into the unit square. Segments
/// are oriented with the inside on the left, so outer boundaries run
/// counterclockwise and holes clockwise. Saddles are resolved by the mean of
/// the four corner values.
pub fn extract_contours(field: &[f64], n: usize) -> Result<ContourSet> {
    check_len("field", n * n, field.len())?;
    let inside_count = field.iter().filter(|v| **v >= 0.0).count();
    if inside_count == 0 || inside_count == field.len() {
        return Ok(ContourSet {
            contours: Vec::new(),
            full: inside_count == field.len(),
            empty: inside_count == 0,
        });
    }

    let m = n + 2;
    let pad = -(field.iter().fold(0.0f64, |a, v| a.max(v.abs())) + 1.0);
    let val = |i: usize, j: usize| -> f64 {
        if i == 0 || j == 0 || i == m - 1 || j == m - 1 {
            pad
        } else {
            field[(i - 1) + (j - 1) * n]
        }
    };
    let h = 1.0 / n as f64;
    let coord = |i: f64| ((i - 0.5) * h).clamp(0.0, 1.0);

    // Edge keys: (axis, i, j); axis 0 joins (i,j)-(i+1,j), axis 1 joins (i,j)-(i,j+1).
    type Key = (u8, usize, usize);
    let point_on = |key: Key| -> [f64; 2] {
        let (axis, i, j) = key;
        let (i2, j2) = if axis == 0 { (i + 1, j) } else { (i, j + 1) };
        let (a, b) = (val(i, j), val(i2, j2));
        let t = a / (a - b);
        let x = i as f64 + t * (i2 as f64 - i as f64);
        let y = j as f64 + t * (j2 as f64 - j as f64);
        [coord(x), coord(y)]
    };

    let mut next: HashMap<Key, Key> = HashMap::new();
    for j in 0..m - 1 {
        for i in 0..m - 1 {
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let vals = corners.map(|(a, b)| val(a, b));
            let inside = vals.map(|v| v >= 0.0);
            // counterclockwise edges: bottom, right, top, left
            let edges: [Key; 4] = [(0, i, j), (1, i + 1, j), (0, i, j + 1), (1, i, j)];
            let mut exits = Vec::new();
            let mut entries = Vec::new();
            for e in 0..4 {
                let (a, b) = (inside[e], inside[(e + 1) % 4]);
                if a && !b {
                    exits.push(e);
                } else if !a && b {
                    entries.push(e);
                }
            }
            match exits.len() {
                0 => {}
                1 => {
                    next.insert(edges[exits[0]], edges[entries[0]]);
                }
                _ => {
                    let center_inside = vals.iter().sum::<f64>() / 4.0 >= 0.0;
                    for &ex in &exits {
                        let en = if center_inside { (ex + 1) % 4 } else { (ex + 3) % 4 };
                        debug_assert!(entries.contains(&en));
                        next.insert(edges[ex], edges[en]);
                    }
                }
            }
        }
    }

    let mut keys: Vec<Key> = next.keys().copied().collect();
    keys.sort();
    let mut used: HashMap<Key, bool> = HashMap::new();
    let mut contours = Vec::new();
    for start in keys {
        if used.contains_key(&start) {
            continue;
        }
        let mut pts = vec![point_on(start)];
        used.insert(start, true);
        let mut cur = start;
        while let Some(&nk) = next.get(&cur) {
            pts.push(point_on(nk));
            if nk == start {
                break;
            }
            used.insert(nk, true);
            cur = nk;
        }
        contours.push(Contour { points: pts });
    }
    Ok(ContourSet {
        contours,
        full: false,
        empty: false,
    })
}
