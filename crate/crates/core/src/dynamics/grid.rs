use super::{circle_barrier, DynamicsModel};
use crate::cbf::{BarrierSpec, ClassKChain};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("robot cell ({0}, {1}) is occupied")]
    RobotInCollision(usize, usize),
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("cannot read grid: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse grid: {0}")]
    Parse(String),
}

/// Boolean occupancy map. Cell `(col, row)` covers
/// `[origin + col·res, origin + (col+1)·res)` in x and the same in y with
/// `row`; row 0 is the bottom of the map.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    resolution: f64,
    origin: [f64; 2],
    width: usize,
    height: usize,
    cells: Vec<bool>,
}

/// JSON layout: `rows[r][c]` nonzero means occupied; `rows[0]` is the
/// bottom row.
#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    resolution: f64,
    #[serde(default)]
    origin: [f64; 2],
    rows: Vec<Vec<u8>>,
}

impl OccupancyGrid {
    pub fn new(resolution: f64, origin: [f64; 2], width: usize, height: usize, cells: Vec<bool>) -> Result<Self, GridError> {
        if !(resolution > 0.0) {
            return Err(GridError::Invalid("resolution must be positive".into()));
        }
        if cells.len() != width * height {
            return Err(GridError::Invalid(format!(
                "{} cells for a {width}×{height} grid",
                cells.len()
            )));
        }
        Ok(Self {
            resolution,
            origin,
            width,
            height,
            cells,
        })
    }

    pub fn empty(resolution: f64, origin: [f64; 2], width: usize, height: usize) -> Result<Self, GridError> {
        Self::new(resolution, origin, width, height, vec![false; width * height])
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn set(&mut self, col: usize, row: usize, occupied: bool) {
        self.cells[row * self.width + col] = occupied;
    }

    pub fn is_occupied(&self, col: usize, row: usize) -> bool {
        self.cells[row * self.width + col]
    }

    pub fn cell_of(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let c = ((p[0] - self.origin[0]) / self.resolution).floor();
        let r = ((p[1] - self.origin[1]) / self.resolution).floor();
        if c < 0.0 || r < 0.0 || c >= self.width as f64 || r >= self.height as f64 {
            return None;
        }
        Some((c as usize, r as usize))
    }

    pub fn cell_center(&self, col: usize, row: usize) -> [f64; 2] {
        [
            self.origin[0] + (col as f64 + 0.5) * self.resolution,
            self.origin[1] + (row as f64 + 0.5) * self.resolution,
        ]
    }

    /// Parse a plain (P2) or raw (P5) PGM. Pixels darker than `threshold`
    /// are occupied; the first image row is the top of the map.
    pub fn from_pgm(bytes: &[u8], resolution: f64, origin: [f64; 2], threshold: u16) -> Result<Self, GridError> {
        let mut pos = 0;
        let token = |pos: &mut usize| -> Result<String, GridError> {
            loop {
                while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                    *pos += 1;
                }
                if *pos < bytes.len() && bytes[*pos] == b'#' {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = *pos;
            while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if start == *pos {
                return Err(GridError::Parse("unexpected end of PGM".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
        };
        let num = |s: String| s.parse::<usize>().map_err(|e| GridError::Parse(format!("{s}: {e}")));
        let magic = token(&mut pos)?;
        let width = num(token(&mut pos)?)?;
        let height = num(token(&mut pos)?)?;
        let maxval = num(token(&mut pos)?)?;
        if maxval == 0 || maxval > 65535 {
            return Err(GridError::Parse(format!("bad maxval {maxval}")));
        }
        let mut pixels = Vec::with_capacity(width * height);
        match magic.as_str() {
            "P2" => {
                for _ in 0..width * height {
                    pixels.push(num(token(&mut pos)?)?);
                }
            }
            "P5" => {
                pos += 1;
                let wide = maxval > 255;
                let need = width * height * if wide { 2 } else { 1 };
                if bytes.len() < pos + need {
                    return Err(GridError::Parse("truncated PGM raster".into()));
                }
                for k in 0..width * height {
                    pixels.push(if wide {
                        (bytes[pos + 2 * k] as usize) << 8 | bytes[pos + 2 * k + 1] as usize
                    } else {
                        bytes[pos + k] as usize
                    });
                }
            }
            other => return Err(GridError::Parse(format!("unsupported PGM type {other}"))),
        }
        let mut cells = vec![false; width * height];
        for row in 0..height {
            for col in 0..width {
                // Image rows run top to bottom.
                cells[row * width + col] = pixels[(height - 1 - row) * width + col] < threshold as usize;
            }
        }
        Self::new(resolution, origin, width, height, cells)
    }

    pub fn from_json(text: &str) -> Result<Self, GridError> {
        let file: GridFile = serde_json::from_str(text).map_err(|e| GridError::Parse(e.to_string()))?;
        let height = file.rows.len();
        let width = file.rows.first().map_or(0, |r| r.len());
        if file.rows.iter().any(|r| r.len() != width) {
            return Err(GridError::Invalid("ragged rows".into()));
        }
        let cells = file.rows.iter().flat_map(|r| r.iter().map(|c| *c != 0)).collect();
        Self::new(file.resolution, file.origin, width, height, cells)
    }

    /// Load by extension: `.json`, otherwise PGM. `resolution`, `origin`
    /// and `threshold` only apply to PGM files.
    pub fn load(path: &Path, resolution: f64, origin: [f64; 2], threshold: u16) -> Result<Self, GridError> {
        let bytes = std::fs::read(path)?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json(&String::from_utf8_lossy(&bytes))
        } else {
            Self::from_pgm(&bytes, resolution, origin, threshold)
        }
    }

    /// First occupied cell met by a ray from `p` at `angle`, visiting cells
    /// in the order the ray enters them.
    pub fn cast(&self, p: [f64; 2], angle: f64, max_range: f64) -> Option<(usize, usize)> {
        let (mut col, mut row) = self.cell_of(p)?;
        let snap = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
        let dir = [snap(angle.cos()), snap(angle.sin())];
        let res = self.resolution;
        let axis = |k: usize, cell: usize| -> (f64, f64) {
            let lo = self.origin[k] + cell as f64 * res;
            if dir[k] > 0.0 {
                ((lo + res - p[k]) / dir[k], res / dir[k])
            } else if dir[k] < 0.0 {
                ((lo - p[k]) / dir[k], -res / dir[k])
            } else {
                (f64::INFINITY, f64::INFINITY)
            }
        };
        let (mut t_x, dt_x) = axis(0, col);
        let (mut t_y, dt_y) = axis(1, row);
        loop {
            let t = t_x.min(t_y);
            if t > max_range {
                return None;
            }
            if t_x <= t_y {
                if dir[0] > 0.0 {
                    col += 1;
                    if col >= self.width {
                        return None;
                    }
                } else {
                    col = col.checked_sub(1)?;
                }
                t_x += dt_x;
            } else {
                if dir[1] > 0.0 {
                    row += 1;
                    if row >= self.height {
                        return None;
                    }
                } else {
                    row = row.checked_sub(1)?;
                }
                t_y += dt_y;
            }
            if self.is_occupied(col, row) {
                return Some((col, row));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RaySettings {
    pub directions: usize,
    pub max_range: f64,
    pub d_min: f64,
    pub chain: Vec<f64>,
}

impl Default for RaySettings {
    fn default() -> Self {
        Self {
            directions: 12,
            max_range: 5.0,
            d_min: 0.3,
            chain: vec![2.0, 6.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    /// `β` in `θ = β·360°/directions`, starting at 1.
    pub beta: usize,
    pub cell: (usize, usize),
    pub anchor: [f64; 2],
}

/// Nearest occupied cell along each direction `β·360°/n`, `β = 1..=n`.
pub fn ray_hits(grid: &OccupancyGrid, p: [f64; 2], settings: &RaySettings) -> Result<Vec<RayHit>, GridError> {
    if let Some((c, r)) = grid.cell_of(p) {
        if grid.is_occupied(c, r) {
            return Err(GridError::RobotInCollision(c, r));
        }
    }
    let n = settings.directions.max(1);
    Ok((1..=n)
        .filter_map(|beta| {
            let angle = 2.0 * PI * beta as f64 / n as f64;
            grid.cast(p, angle, settings.max_range).map(|cell| RayHit {
                beta,
                cell,
                anchor: grid.cell_center(cell.0, cell.1),
            })
        })
        .collect())
}

/// One avoidance barrier per ray hit, anchored at the hit cell's center.
pub fn grid_ray_barriers(
    grid: &OccupancyGrid,
    model: &dyn DynamicsModel,
    position: [f64; 2],
    settings: &RaySettings,
) -> Result<Vec<BarrierSpec>, GridError> {
    let chain = ClassKChain::new(settings.chain.clone()).map_err(|e| GridError::Invalid(e.to_string()))?;
    Ok(ray_hits(grid, position, settings)?
        .into_iter()
        .map(|hit| {
            circle_barrier(format!("ray{}", hit.beta), model, &hit.anchor, settings.d_min, chain.clone(), None, 0.0)
        })
        .collect())
}
