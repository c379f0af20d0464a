//! Connected component labeling of binary volumes.

use craniaug_core::volume::BinaryMask;
use serde::{Deserialize, Serialize};

/// Neighborhood used to join voxels into components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbors only.
    Six,
    /// Faces, edges, and corners.
    TwentySix,
}

impl Connectivity {
    pub fn offsets(self) -> Vec<(i64, i64, i64)> {
        match self {
            Connectivity::Six => vec![
                (-1, 0, 0),
                (1, 0, 0),
                (0, -1, 0),
                (0, 1, 0),
                (0, 0, -1),
                (0, 0, 1),
            ],
            Connectivity::TwentySix => {
                let mut v = Vec::with_capacity(26);
                for dz in -1..=1 {
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            if dx != 0 || dy != 0 || dz != 0 {
                                v.push((dx, dy, dz));
                            }
                        }
                    }
                }
                v
            }
        }
    }
}

impl std::str::FromStr for Connectivity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "6" => Ok(Connectivity::Six),
            "26" => Ok(Connectivity::TwentySix),
            _ => Err(format!("connectivity must be 6 or 26, got {s:?}")),
        }
    }
}

/// Labeling result: 0 = background, foreground labels contiguous from 1 in
/// scan order of each component's first voxel; `sizes[l - 1]` is the voxel
/// count of label `l`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabels {
    pub dims: (usize, usize, usize),
    pub labels: Vec<u32>,
    pub sizes: Vec<usize>,
}

impl ComponentLabels {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}

/// Label the connected components of the foreground with breadth-first
/// flood fill.
pub fn connected_components(m: &BinaryMask, connectivity: Connectivity) -> ComponentLabels {
    let (nx, ny, nz) = m.dims();
    let offsets = connectivity.offsets();
    let mut labels = vec![0u32; nx * ny * nz];
    let mut sizes = Vec::new();
    let mut queue = std::collections::VecDeque::new();

    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * (y + ny * z);
                if !m.is_set(x, y, z) || labels[i] != 0 {
                    continue;
                }
                let label = sizes.len() as u32 + 1;
                let mut size = 0usize;
                labels[i] = label;
                queue.push_back((x as i64, y as i64, z as i64));
                while let Some((cx, cy, cz)) = queue.pop_front() {
                    size += 1;
                    for &(dx, dy, dz) in &offsets {
                        let (px, py, pz) = (cx + dx, cy + dy, cz + dz);
                        if px < 0
                            || py < 0
                            || pz < 0
                            || px >= nx as i64
                            || py >= ny as i64
                            || pz >= nz as i64
                        {
                            continue;
                        }
                        let pi = px as usize + nx * (py as usize + ny * pz as usize);
                        if labels[pi] == 0 && m.is_set(px as usize, py as usize, pz as usize) {
                            labels[pi] = label;
                            queue.push_back((px, py, pz));
                        }
                    }
                }
                sizes.push(size);
            }
        }
    }
    ComponentLabels {
        dims: (nx, ny, nz),
        labels,
        sizes,
    }
}
