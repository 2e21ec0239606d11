use crate::volume::Mask;

/// Linear indices of foreground voxels that have at least one 6-neighbour
/// that is background or outside the grid.
pub(crate) fn surface_indices(dims: [usize; 3], data: &[bool]) -> Vec<usize> {
    let [nx, ny, nz] = dims;
    let plane = nx * ny;
    let mut out = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            let row = nx * (y + ny * z);
            for x in 0..nx {
                let i = row + x;
                if !data[i] {
                    continue;
                }
                let boundary = x == 0
                    || x + 1 == nx
                    || y == 0
                    || y + 1 == ny
                    || z == 0
                    || z + 1 == nz
                    || !data[i - 1]
                    || !data[i + 1]
                    || !data[i - nx]
                    || !data[i + nx]
                    || !data[i - plane]
                    || !data[i + plane];
                if boundary {
                    out.push(i);
                }
            }
        }
    }
    out
}

/// Surface voxel coordinates of `mask`, in linear-index order.
pub fn extract_surface(mask: &Mask) -> Vec<[usize; 3]> {
    surface_indices(mask.dims(), mask.data())
        .into_iter()
        .map(|i| mask.coords(i))
        .collect()
}
