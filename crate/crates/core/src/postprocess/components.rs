//! Connected-component labeling with union-find.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::volume::{class_mask, LabelVolume, Mask};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "6")]
    Six,
    #[serde(rename = "26")]
    #[default]
    TwentySix,
}

impl FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "6" => Ok(Connectivity::Six),
            "26" => Ok(Connectivity::TwentySix),
            other => Err(Error::InvalidArgument(format!(
                "connectivity must be 6 or 26, got {other:?}"
            ))),
        }
    }
}

impl Connectivity {
    /// Neighbour offsets that precede a voxel in linear scan order.
    fn backward_offsets(self) -> &'static [[isize; 3]] {
        const SIX: [[isize; 3]; 3] = [[-1, 0, 0], [0, -1, 0], [0, 0, -1]];
        const TWENTY_SIX: [[isize; 3]; 13] = [
            [-1, -1, -1],
            [0, -1, -1],
            [1, -1, -1],
            [-1, 0, -1],
            [0, 0, -1],
            [1, 0, -1],
            [-1, 1, -1],
            [0, 1, -1],
            [1, 1, -1],
            [-1, -1, 0],
            [0, -1, 0],
            [1, -1, 0],
            [-1, 0, 0],
        ];
        match self {
            Connectivity::Six => &SIX,
            Connectivity::TwentySix => &TWENTY_SIX,
        }
    }
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    /// The smaller root wins, so roots are first-seen provisional labels.
    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Per-voxel component ids (0 = background, components numbered from 1 in
/// order of their smallest linear index) and component sizes (`sizes[k]` is
/// the size of component `k + 1`).
pub(crate) fn label_components(
    dims: [usize; 3],
    data: &[bool],
    conn: Connectivity,
) -> (Vec<u32>, Vec<u64>) {
    let [nx, ny, nz] = dims;
    let mut labels = vec![0u32; data.len()];
    let mut uf = UnionFind { parent: vec![0] };
    let offs = conn.backward_offsets();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * (y + ny * z);
                if !data[i] {
                    continue;
                }
                let mut cur = 0u32;
                for o in offs {
                    let (qx, qy, qz) = (x as isize + o[0], y as isize + o[1], z as isize + o[2]);
                    if qx < 0 || qy < 0 || qz < 0 || qx >= nx as isize || qy >= ny as isize {
                        continue;
                    }
                    let j = qx as usize + nx * (qy as usize + ny * qz as usize);
                    let l = labels[j];
                    if l == 0 {
                        continue;
                    }
                    cur = if cur == 0 { uf.find(l) } else { uf.union(cur, l) };
                }
                if cur == 0 {
                    cur = uf.parent.len() as u32;
                    uf.parent.push(cur);
                }
                labels[i] = cur;
            }
        }
    }

    // Provisional labels are allocated in scan order and unions keep the
    // smaller root, so renumbering roots in increasing order sorts components
    // by their first voxel.
    let mut final_id = vec![0u32; uf.parent.len()];
    let mut next = 0u32;
    for p in 1..uf.parent.len() as u32 {
        if uf.find(p) == p {
            next += 1;
            final_id[p as usize] = next;
        }
    }
    let mut sizes = vec![0u64; next as usize];
    for l in labels.iter_mut() {
        if *l != 0 {
            let root = uf.find(*l);
            *l = final_id[root as usize];
            sizes[*l as usize - 1] += 1;
        }
    }
    (labels, sizes)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub id: u32,
    pub voxel_count: u64,
    /// Linear indices into the mask's grid, ascending.
    pub voxels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentSet {
    pub label: u32,
    pub components: Vec<Component>,
}

/// Maximal connected components of `mask`, ordered by smallest linear index.
/// The returned set carries label 1; see [`class_components`] for label maps.
pub fn connected_components(mask: &Mask, conn: Connectivity) -> ComponentSet {
    let (labels, sizes) = label_components(mask.dims(), mask.data(), conn);
    let mut components: Vec<Component> = sizes
        .iter()
        .enumerate()
        .map(|(k, &n)| Component {
            id: k as u32 + 1,
            voxel_count: n,
            voxels: Vec::with_capacity(n as usize),
        })
        .collect();
    for (i, &l) in labels.iter().enumerate() {
        if l != 0 {
            components[l as usize - 1].voxels.push(i);
        }
    }
    ComponentSet {
        label: 1,
        components,
    }
}

/// Components of `vol == label`.
pub fn class_components(vol: &LabelVolume, label: u32, conn: Connectivity) -> ComponentSet {
    let (mask, _) = class_mask(vol, label);
    ComponentSet {
        label,
        ..connected_components(&mask, conn)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Spacing;

    fn mask(dims: [usize; 3], on: &[usize]) -> Mask {
        let mut d = vec![false; dims.iter().product()];
        for &i in on {
            d[i] = true;
        }
        Mask::new(dims, Spacing::isotropic(1.0).unwrap(), d).unwrap()
    }

    #[test]
    fn empty() {
        let m = mask([3, 3, 3], &[]);
        assert!(connected_components(&m, Connectivity::Six).components.is_empty());
    }

    #[test]
    fn vertex_touching() {
        // (0,0,0) and (1,1,1)
        let m = mask([2, 2, 2], &[0, 7]);
        assert_eq!(connected_components(&m, Connectivity::TwentySix).components.len(), 1);
        assert_eq!(connected_components(&m, Connectivity::Six).components.len(), 2);
    }

    #[test]
    fn u_shape_merges_late() {
        // A U in the xy plane: two arms joined at the bottom row y=2.
        // x: 0..3, arms at x=0 and x=2.
        let on = [0, 2, 3, 5, 6, 7, 8];
        let m = mask([3, 3, 1], &on);
        let cs = connected_components(&m, Connectivity::Six);
        assert_eq!(cs.components.len(), 1);
        assert_eq!(cs.components[0].voxels, on.to_vec());
        assert_eq!(cs.components[0].voxel_count, 7);
    }

    #[test]
    fn ordering_by_first_voxel() {
        let m = mask([5, 1, 1], &[1, 3, 4]);
        let cs = connected_components(&m, Connectivity::Six);
        assert_eq!(cs.components[0].voxels, vec![1]);
        assert_eq!(cs.components[1].voxels, vec![3, 4]);
        assert_eq!(cs.components[1].id, 2);
    }
}
