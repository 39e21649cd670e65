use nlvisc::io::{format_atoms, parse_atoms, read_grid_function, write_grid_function, Report};
use nlvisc_core::{Grid, GridFunction};
use proptest::prelude::*;
use std::path::Path;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_csv_round_trips_bitwise(values in prop::collection::vec(-1e6f64..1e6, 36)) {
        let grid = Grid::new(&[(0.0, 1.0), (-1.0, 0.0)], 0.2, 0.0).unwrap();
        let u = GridFunction::from_values(grid, values).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.csv");
        write_grid_function(&path, &u).unwrap();
        let back = read_grid_function(&path, &grid).unwrap();
        for (a, b) in u.values().iter().zip(back.values()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn atom_lists_round_trip(atoms in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, 1e-6f64..10.0), 1..8)) {
        let atoms: Vec<_> = atoms.into_iter().map(|(a, b, w)| ([a, b], w)).collect();
        let text = format_atoms(&atoms, 2);
        prop_assert_eq!(parse_atoms(&text, 2, Path::new("q.txt")).unwrap(), atoms);
    }

    #[test]
    fn reports_round_trip(pairs in prop::collection::vec(("[a-z_.0-9]{1,12}", "[ -~]{0,30}"), 0..10)) {
        let mut r = Report::new();
        for (k, v) in &pairs {
            r.push(k.clone(), v.trim());
        }
        let back = Report::parse(&r.render());
        prop_assert_eq!(back.lines(), r.lines());
    }
}

#[test]
fn grid_csv_rejects_a_wrong_grid() {
    let grid = Grid::new(&[(0.0, 1.0)], 0.25, 0.0).unwrap();
    let u = GridFunction::from_fn(grid, |x| x[0]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.csv");
    write_grid_function(&path, &u).unwrap();
    let other = Grid::new(&[(0.0, 1.0)], 0.5, 0.0).unwrap();
    assert!(read_grid_function(&path, &other).is_err());
}
