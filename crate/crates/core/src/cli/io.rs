//! Trajectory CSV and atomic file output.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{product_norm, ProductState, SpectralModel, Trajectory};

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV text of the first `modes` slots of `traj`: `t`, then real and
/// imaginary parts of position and velocity per slot, then the full-state
/// energy norm.
pub fn trajectory_csv(model: &SpectralModel, traj: &Trajectory, modes: usize) -> Result<Vec<u8>> {
    let modes = modes.min(model.mode_count());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    for slot in 0..modes {
        let l = model.slot_label(slot);
        header.extend([format!("x{l}_re"), format!("x{l}_im"), format!("v{l}_re"), format!("v{l}_im")]);
    }
    header.push("norm".into());
    let csv_err = |e: csv::Error| Error::Evaluation(format!("csv: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for (i, s) in traj.states.iter().enumerate() {
        let mut row = vec![num(traj.time(i))];
        for slot in 0..modes {
            let (x, v) = (s.position.0[slot], s.velocity.0[slot]);
            row.extend([num(x.re), num(x.im), num(v.re), num(v.im)]);
        }
        row.push(num(product_norm(model, s)?));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Evaluation(format!("csv: {e}")))
}

/// Parses a trajectory CSV written by [`trajectory_csv`]. The norm column is
/// ignored; time stamps must be uniform.
pub fn read_trajectory_csv(text: &str) -> Result<Trajectory> {
    let bad = |msg: String| Error::Evaluation(format!("trajectory csv: {msg}"));
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let cols = header.len();
    if cols < 2 || &header[0] != "t" || &header[cols - 1] != "norm" || (cols - 2) % 4 != 0 {
        return Err(bad(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let modes = (cols - 2) / 4;
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |k: usize| -> Result<f64> {
            rec.get(k).ok_or_else(|| bad(format!("row {} is short", line + 1)))?.parse::<f64>().map_err(|e| bad(format!("row {}: {e}", line + 1)))
        };
        times.push(field(0)?);
        let mut s = ProductState::zeros(modes);
        for slot in 0..modes {
            let c = 1 + 4 * slot;
            s.position.0[slot] = Complex64::new(field(c)?, field(c + 1)?);
            s.velocity.0[slot] = Complex64::new(field(c + 2)?, field(c + 3)?);
        }
        states.push(s);
    }
    if times.len() < 2 {
        return Err(bad("needs at least two rows".into()));
    }
    let dt = times[1] - times[0];
    let t0 = times[0];
    for (i, t) in times.iter().enumerate() {
        if (t - (t0 + i as f64 * dt)).abs() > 1e-6 * dt.abs() {
            return Err(bad(format!("non-uniform time stamp {t} at row {}", i + 1)));
        }
    }
    Trajectory::new(t0, dt, states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model() -> SpectralModel {
        SpectralModel::new(vec![1.0, 4.0], vec![1, 2], 0.5, 0.5).unwrap()
    }

    #[test]
    fn header_and_partial_modes() {
        let traj = Trajectory::zeros(0.0, 0.5, 3, 3);
        let text = String::from_utf8(trajectory_csv(&model(), &traj, 2).unwrap()).unwrap();
        assert!(text.starts_with("t,x1.1_re,x1.1_im,v1.1_re,v1.1_im,x2.1_re,x2.1_im,v2.1_re,v2.1_im,norm\n"));
        let back = read_trajectory_csv(&text).unwrap();
        assert_eq!(back.states[0].len(), 2);
        assert_eq!(back.len(), 3);
        assert!(read_trajectory_csv("a,b\n1,2\n").is_err());
        assert!(read_trajectory_csv("t,norm\n0,0\n1,0\n3,0\n").is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("f.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(vals in proptest::collection::vec(-1e6f64..1e6, 12 * 4), t0 in -100.0f64..100.0, dt in 1e-3f64..1.0) {
            let states: Vec<ProductState> = vals
                .chunks(12)
                .map(|c| ProductState {
                    position: crate::ModeCoeffs(vec![Complex64::new(c[0], c[1]), Complex64::new(c[2], c[3]), Complex64::new(c[4], c[5])]),
                    velocity: crate::ModeCoeffs(vec![Complex64::new(c[6], c[7]), Complex64::new(c[8], c[9]), Complex64::new(c[10], c[11] * 1e-300)]),
                })
                .collect();
            let traj = Trajectory::new(t0, dt, states).unwrap();
            let text = String::from_utf8(trajectory_csv(&model(), &traj, 3).unwrap()).unwrap();
            let back = read_trajectory_csv(&text).unwrap();
            prop_assert_eq!(&back.states, &traj.states);
        }
    }
}
