//! Plain-text interchange: locations CSV (`id,x[,y[,z]]`), replicate data
//! CSV (one column per location id, in original file order), and results
//! CSV for experiment runs. Floats are written in Rust's shortest
//! round-trip form, so writing and re-reading is lossless.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geometry::{Locations, Ordering};
use crate::posterior::DataMatrix;

pub fn write_locations_csv(locs: &Locations) -> String {
    let mut out = String::from("id");
    for axis in ["x", "y", "z"].iter().take(locs.dim()) {
        out.push(',');
        out.push_str(axis);
    }
    out.push('\n');
    for i in 0..locs.len() {
        out.push_str(&locs.ids()[i]);
        for v in locs.point(i) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn read_locations_csv(text: &str) -> Result<Locations> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Csv("empty locations file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"id") {
        return Err(Error::Csv("locations header must start with 'id'".into()));
    }
    let dim = cols.len() - 1;
    let valid = matches!(
        &cols[1..],
        ["x"] | ["x", "y"] | ["x", "y", "z"]
    );
    if !valid {
        return Err(Error::Csv(format!(
            "locations header must be id,x[,y[,z]], got '{header}'"
        )));
    }
    let mut ids = Vec::new();
    let mut pts = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err(Error::Csv(format!(
                "line {}: expected {} fields, got {}",
                lineno + 2,
                dim + 1,
                fields.len()
            )));
        }
        ids.push(fields[0].to_string());
        let mut p = Vec::with_capacity(dim);
        for f in &fields[1..] {
            p.push(f.parse::<f64>().map_err(|e| {
                Error::Csv(format!("line {}: bad coordinate '{f}': {e}", lineno + 2))
            })?);
        }
        pts.push(p);
    }
    Locations::with_ids(pts, ids)
}

/// Replicate rows, one column per location id, in original file order.
pub fn write_data_csv(data: &DataMatrix, ordering: &Ordering, locs: &Locations) -> String {
    let original = data.to_original_order(ordering);
    write_data_csv_original(&original, locs)
}

pub fn write_data_csv_original(original: &Array2<f64>, locs: &Locations) -> String {
    let mut out = locs.ids().join(",");
    out.push('\n');
    for r in 0..original.nrows() {
        for c in 0..original.ncols() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&original[(r, c)].to_string());
        }
        out.push('\n');
    }
    out
}

/// Parse a data CSV against known locations; columns may appear in any
/// order but must cover exactly the location ids. Returns the matrix in
/// original (file) location order.
pub fn read_data_csv(text: &str, locs: &Locations) -> Result<Array2<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Csv("empty data file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() != locs.len() {
        return Err(Error::Csv(format!(
            "data file has {} columns, locations file has {}",
            cols.len(),
            locs.len()
        )));
    }
    let mut col_to_loc = Vec::with_capacity(cols.len());
    for c in &cols {
        let idx = locs
            .id_index(c)
            .ok_or_else(|| Error::Csv(format!("data column '{c}' is not a location id")))?;
        col_to_loc.push(idx);
    }
    {
        let mut seen = vec![false; locs.len()];
        for &i in &col_to_loc {
            if seen[i] {
                return Err(Error::Csv(format!("duplicate data column '{}'", locs.ids()[i])));
            }
            seen[i] = true;
        }
    }
    let rows: Vec<&str> = lines.collect();
    let mut out = Array2::zeros((rows.len(), locs.len()));
    for (r, line) in rows.iter().enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::Csv(format!(
                "row {}: expected {} fields, got {}",
                r + 2,
                cols.len(),
                fields.len()
            )));
        }
        for (c, f) in fields.iter().enumerate() {
            let v = f
                .parse::<f64>()
                .map_err(|e| Error::Csv(format!("row {}: bad value '{f}': {e}", r + 2)))?;
            if !v.is_finite() {
                return Err(Error::Csv(format!("row {}: non-finite value", r + 2)));
            }
            out[(r, col_to_loc[c])] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::maximin_order;

    #[test]
    fn locations_round_trip() {
        let locs = Locations::with_ids(
            vec![vec![0.0, 0.5], vec![1.0, 0.25], vec![0.125, 0.75]],
            vec!["a".into(), "b".into(), "c".into()],
        )
        .unwrap();
        let text = write_locations_csv(&locs);
        assert!(text.starts_with("id,x,y\n"));
        let back = read_locations_csv(&text).unwrap();
        assert_eq!(back.ids(), locs.ids());
        for i in 0..3 {
            assert_eq!(back.point(i), locs.point(i));
        }
    }

    #[test]
    fn bad_headers_rejected() {
        assert!(read_locations_csv("x,y\n0,0\n").is_err());
        assert!(read_locations_csv("id,a,b\n0,0,0\n").is_err());
        assert!(read_locations_csv("").is_err());
    }

    #[test]
    fn data_round_trip_through_ordering() {
        let locs = Locations::new(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let ordering = maximin_order(&locs, Some(0)).unwrap();
        let original =
            Array2::from_shape_vec((2, 4), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
                .unwrap();
        let data = DataMatrix::from_original_order(&original, &ordering).unwrap();
        // ordered column 0 is the ordering start (original 0)
        assert_eq!(data.values()[(0, 0)], 1.0);
        let text = write_data_csv(&data, &ordering, &locs);
        assert!(text.starts_with("0,1,2,3\n"));
        let back = read_data_csv(&text, &locs).unwrap();
        assert_eq!(back, original);
    }

    #[test]
    fn data_columns_may_be_permuted() {
        let locs = Locations::with_ids(
            vec![vec![0.0], vec![1.0]],
            vec!["p".into(), "q".into()],
        )
        .unwrap();
        let back = read_data_csv("q,p\n2.5,1.5\n", &locs).unwrap();
        assert_eq!(back[(0, 0)], 1.5);
        assert_eq!(back[(0, 1)], 2.5);
        assert!(read_data_csv("p,p\n1,2\n", &locs).is_err());
        assert!(read_data_csv("p,r\n1,2\n", &locs).is_err());
    }
}
