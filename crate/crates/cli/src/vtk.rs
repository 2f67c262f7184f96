//! Field snapshots in legacy VTK 3.0 ASCII, structured-points layout.
//! Cell data only: one scalar array per species plus potential, pressure,
//! free charge, and the two face fluxes averaged to cell-centered vectors.

use dpnp_core::coupling::SystemState;
use dpnp_core::grid::{FaceField, Grid2D};
use dpnp_core::model::ModelParams;
use std::io::Write;

/// Average a face flux to a cell-centered vector. Boundary faces store the
/// outward normal component, so west/south values flip sign to become
/// +x/+y components before averaging.
fn cell_vector(grid: &Grid2D<f64>, flux: &FaceField<f64>, i: usize, j: usize) -> (f64, f64) {
    let mut west = flux[grid.x_face(i, j)];
    if i == 0 {
        west = -west;
    }
    let east = flux[grid.x_face(i + 1, j)];
    let mut south = flux[grid.y_face(i, j)];
    if j == 0 {
        south = -south;
    }
    let north = flux[grid.y_face(i, j + 1)];
    (0.5 * (west + east), 0.5 * (south + north))
}

fn write_scalars<W: Write>(
    out: &mut W,
    name: &str,
    values: impl Iterator<Item = f64>,
) -> std::io::Result<()> {
    writeln!(out, "SCALARS {name} double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for v in values {
        writeln!(out, "{v}")?;
    }
    Ok(())
}

/// Write one snapshot of `state` to `out`.
pub fn write_snapshot<W: Write>(
    mut out: W,
    grid: &Grid2D<f64>,
    params: &ModelParams<f64>,
    state: &SystemState<f64>,
) -> std::io::Result<()> {
    let n = grid.n_cells();
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "dpnp snapshot t = {}", state.t)?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET STRUCTURED_POINTS")?;
    writeln!(out, "DIMENSIONS {} {} 1", grid.nx + 1, grid.ny + 1)?;
    writeln!(out, "ORIGIN 0 0 0")?;
    writeln!(out, "SPACING {} {} 1", grid.hx, grid.hy)?;
    writeln!(out, "CELL_DATA {n}")?;
    for (l, sp) in params.species.iter().enumerate() {
        write_scalars(&mut out, &sp.name, (0..n).map(|c| state.c[l][c]))?;
    }
    write_scalars(&mut out, "phi", (0..n).map(|c| state.phi[c]))?;
    write_scalars(&mut out, "p", (0..n).map(|c| state.p[c]))?;
    write_scalars(&mut out, "rho_f", (0..n).map(|c| state.rho_f[c]))?;
    for (name, flux) in [("e", &state.e), ("q", &state.q)] {
        writeln!(out, "VECTORS {name} double")?;
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (vx, vy) = cell_vector(grid, flux, i, j);
                writeln!(out, "{vx} {vy} 0")?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use dpnp_core::coupling::{initialize, FixedPointConfig};
    use dpnp_core::grid::{CellField, FieldRole};
    use dpnp_core::model::{BoundaryData, SpeciesParams};

    fn tiny_state() -> (Grid2D<f64>, ModelParams<f64>, SystemState<f64>) {
        let grid = Grid2D::new(2, 2, 1.0, 1.0).unwrap();
        let params = ModelParams {
            porosity: 1.0,
            viscosity: 1.0,
            permittivity: 1.0,
            elementary_charge: 1.0,
            thermal_energy: 1.0,
            charge_prefactor: 1.0,
            permeability: (1.0, 1.0),
            species: vec![SpeciesParams {
                name: "s".to_string(),
                valency: 0,
                diffusivity: (1.0, 1.0),
            }],
        };
        let c = vec![CellField::new(FieldRole::Concentration, vec![1.0, 2.0, 3.0, 4.0])];
        let cfg = FixedPointConfig::new(0.1, 0.1);
        let state = initialize(&grid, &params, &BoundaryData::zero(), c, 0.0, &cfg).unwrap();
        (grid, params, state)
    }

    #[test]
    fn snapshot_structure() {
        let (grid, params, state) = tiny_state();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &grid, &params, &state).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[2], "ASCII");
        assert_eq!(lines[3], "DATASET STRUCTURED_POINTS");
        assert_eq!(lines[4], "DIMENSIONS 3 3 1");
        assert_eq!(lines[6], "SPACING 0.5 0.5 1");
        assert_eq!(lines[7], "CELL_DATA 4");
        // species scalars come first and carry the configured name
        assert_eq!(lines[8], "SCALARS s double 1");
        assert_eq!(&lines[10..14], &["1", "2", "3", "4"]);
        assert_eq!(text.matches("SCALARS").count(), 4);
        assert_eq!(text.matches("VECTORS").count(), 2);
        // zero-data run: both vector fields vanish
        for line in text.lines().skip_while(|l| !l.starts_with("VECTORS")) {
            if line.starts_with("VECTORS") {
                continue;
            }
            for part in line.split_whitespace() {
                assert!(part.parse::<f64>().unwrap().abs() < 1e-9, "{line}");
            }
        }
    }

    #[test]
    fn boundary_sign_flip_in_cell_average() {
        let grid = Grid2D::new(2, 1, 2.0, 1.0).unwrap();
        let mut flux = FaceField::zeros(&grid);
        // uniform +x flow through the row: west boundary stores the outward
        // (-x) component, so inflow at unit speed is -1 there
        flux[grid.x_face(0, 0)] = -1.0;
        flux[grid.x_face(1, 0)] = 1.0;
        flux[grid.x_face(2, 0)] = 1.0;
        let (vx0, vy0) = cell_vector(&grid, &flux, 0, 0);
        let (vx1, _) = cell_vector(&grid, &flux, 1, 0);
        assert_eq!((vx0, vy0), (1.0, 0.0));
        assert_eq!(vx1, 1.0);
    }
}
