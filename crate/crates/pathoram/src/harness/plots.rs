use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::stash::{StashSummary, CSV_HEADER};

/// Stash sizes per (Z, L) cell, read back from sweep CSVs.
pub type CellTraces = BTreeMap<(u32, u32), Vec<u64>>;

fn parse_error(origin: &str, row: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        location: format!("{origin} row {row}"),
        message: message.into(),
    }
}

/// Parses one sweep CSV into `traces`. Rows are numbered from 1, the header
/// being row 1. `#` lines are skipped.
pub fn parse_csv(text: &str, origin: &str, traces: &mut CellTraces) -> Result<()> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let row_of = |pos: Option<&csv::Position>| pos.map_or(1, |p| p.line() as usize);
    let header = reader
        .headers()
        .map_err(|e| parse_error(origin, row_of(e.position()), e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(parse_error(
            origin,
            1,
            format!("expected header {CSV_HEADER:?}"),
        ));
    }
    for record in reader.records() {
        let record =
            record.map_err(|e| parse_error(origin, row_of(e.position()), e.to_string()))?;
        let row = row_of(record.position());
        let mut values = [0u64; 4];
        for (value, field) in values.iter_mut().zip(&record) {
            *value = field
                .parse()
                .map_err(|_| parse_error(origin, row, format!("{field:?} is not an integer")))?;
        }
        let [z, l, index, size] = values;
        let (Ok(z), Ok(l)) = (u32::try_from(z), u32::try_from(l)) else {
            return Err(parse_error(origin, row, "Z or L out of range"));
        };
        let trace = traces.entry((z, l)).or_default();
        if index != trace.len() as u64 {
            return Err(parse_error(
                origin,
                row,
                format!("access_index {index}, expected {}", trace.len()),
            ));
        }
        trace.push(size);
    }
    Ok(())
}

pub fn read_csvs(paths: &[PathBuf]) -> Result<CellTraces> {
    let mut traces = CellTraces::new();
    for path in paths {
        parse_csv(
            &fs::read_to_string(path)?,
            &path.display().to_string(),
            &mut traces,
        )?;
    }
    Ok(traces)
}

/// Writes `fig2_Z<z>.dat` (one series per Z, x = L), `fig3_L<l>.dat` (one
/// series per L, x = Z) and a gnuplot script `plots.gp`. Each data row is
/// `x max mean p999`. Returns the written paths.
pub fn emit_plots(traces: &CellTraces, dir: &Path) -> Result<Vec<PathBuf>> {
    if traces.is_empty() {
        return Err(Error::Usage("no stash traces to plot".into()));
    }
    let mut summaries = BTreeMap::new();
    for (&(z, l), sizes) in traces {
        let summary = StashSummary::of(sizes)
            .ok_or_else(|| Error::Usage(format!("trace for Z={z} L={l} is empty")))?;
        summaries.insert((z, l), summary);
    }
    fs::create_dir_all(dir)?;
    let mut by_z: BTreeMap<u32, String> = BTreeMap::new();
    let mut by_l: BTreeMap<u32, String> = BTreeMap::new();
    for (&(z, l), s) in &summaries {
        let row = |x: u32| format!("{x} {} {:.6} {}\n", s.max, s.mean, s.p999);
        by_z.entry(z)
            .or_insert_with(|| "# L max mean p999\n".into())
            .push_str(&row(l));
        by_l.entry(l)
            .or_insert_with(|| "# Z max mean p999\n".into())
            .push_str(&row(z));
    }
    let mut written = Vec::new();
    let mut script =
        String::from("set terminal pngcairo size 800,600\nset ylabel 'max stash size'\n");
    let mut write = |name: String, body: &str| -> Result<String> {
        let path = dir.join(&name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(name)
    };
    let mut fig2 = Vec::new();
    for (z, body) in &by_z {
        fig2.push(format!(
            "'{}' using 1:2 with linespoints title 'Z={z}'",
            write(format!("fig2_Z{z}.dat"), body)?
        ));
    }
    let mut fig3 = Vec::new();
    for (l, body) in &by_l {
        fig3.push(format!(
            "'{}' using 1:2 with linespoints title 'L={l}'",
            write(format!("fig3_L{l}.dat"), body)?
        ));
    }
    writeln!(
        script,
        "set output 'fig2.png'\nset xlabel 'L'\nplot {}",
        fig2.join(", \\\n     ")
    )
    .unwrap();
    writeln!(
        script,
        "set output 'fig3.png'\nset xlabel 'Z'\nplot {}",
        fig3.join(", \\\n     ")
    )
    .unwrap();
    write("plots.gp".into(), &script)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(z: u32, l: u32, sizes: &[u64]) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for (i, s) in sizes.iter().enumerate() {
            out += &format!("{z},{l},{i},{s}\n");
        }
        out
    }

    #[test]
    fn two_cells_two_series() {
        let mut traces = CellTraces::new();
        parse_csv(&csv(1, 10, &[0, 5, 2]), "a", &mut traces).unwrap();
        parse_csv(&csv(4, 10, &[0, 1, 1]), "b", &mut traces).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_plots(&traces, dir.path()).unwrap();
        let names: Vec<_> = files
            .iter()
            .map(|p| p.file_name().unwrap().to_str().unwrap().to_owned())
            .collect();
        assert_eq!(
            names,
            ["fig2_Z1.dat", "fig2_Z4.dat", "fig3_L10.dat", "plots.gp"]
        );
        let z1 = fs::read_to_string(dir.path().join("fig2_Z1.dat")).unwrap();
        assert_eq!(z1.lines().nth(1), Some("10 5 2.333333 5"));
        let l10 = fs::read_to_string(dir.path().join("fig3_L10.dat")).unwrap();
        let maxima: Vec<&str> = l10
            .lines()
            .skip(1)
            .map(|r| r.split(' ').nth(1).unwrap())
            .collect();
        assert_eq!(maxima, ["5", "1"]);
    }

    #[test]
    fn malformed_rows_are_named() {
        let mut traces = CellTraces::new();
        let err = parse_csv(
            &format!("{CSV_HEADER}\n1,2,0,3\n1,2,1,x\n"),
            "f.csv",
            &mut traces,
        )
        .unwrap_err();
        assert!(err.to_string().contains("f.csv row 3"), "{err}");
        let err = parse_csv("Z,L\n", "g.csv", &mut CellTraces::new()).unwrap_err();
        assert!(err.to_string().contains("g.csv row 1"), "{err}");
        let err = parse_csv(
            &format!("{CSV_HEADER}\n1,2,5,3\n"),
            "h",
            &mut CellTraces::new(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("h row 2"), "{err}");
        let err = parse_csv(
            &format!("{CSV_HEADER}\n1,2,0,3\n1,2,1\n"),
            "i",
            &mut CellTraces::new(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("i row 3"), "{err}");
    }

    #[test]
    fn empty_trace_is_an_error() {
        let mut traces = CellTraces::new();
        parse_csv(&format!("{CSV_HEADER}\n"), "e", &mut traces).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_plots(&traces, dir.path()).is_err());
        traces.insert((1, 1), Vec::new());
        assert!(emit_plots(&traces, dir.path()).is_err());
    }
}
