use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use crate::aci::AciSeries;
use crate::assim::LaggedFamily;
use crate::cir::CirSeries;
use crate::error::{Error, Result};
use crate::gaussian::{GaussianPath, GaussianState};
use crate::model::CgnsModel;
use crate::sim::Trajectory;

/// 17 significant digits; round-trips every `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct CsvOut {
    inner: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    /// Opens `path`, writes the `# config_hash:` line and the header.
    pub fn create(path: &Path, config_hash: &str, header: &[String]) -> Result<Self> {
        let mut file = BufWriter::new(File::create(path)?);
        writeln!(file, "# config_hash: {config_hash}")?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(header)?;
        Ok(Self { inner })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        self.inner.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut file, value)?;
    writeln!(file)?;
    file.flush()?;
    Ok(())
}

fn vech_header(labels: &[String]) -> Vec<String> {
    let l = labels.len();
    let mut out = Vec::with_capacity(l * (l + 1) / 2);
    for c in 0..l {
        for r in c..l {
            out.push(format!("R_{}_{}", labels[r], labels[c]));
        }
    }
    out
}

fn state_fields(s: &GaussianState, out: &mut Vec<String>) {
    out.extend(s.mean.iter().map(|&v| num(v)));
    let l = s.dim();
    for c in 0..l {
        for r in c..l {
            out.push(num(s.cov[(r, c)]));
        }
    }
}

pub fn write_trajectory(path: &Path, hash: &str, tr: &Trajectory, model: &CgnsModel) -> Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend(model.observed_labels.iter().cloned());
    header.extend(model.hidden_labels.iter().cloned());
    let mut w = CsvOut::create(path, hash, &header)?;
    for j in 0..tr.times.len() {
        let mut row = vec![num(tr.times[j])];
        row.extend(tr.x[j].iter().chain(tr.y[j].iter()).map(|&v| num(v)));
        w.row(&row)?;
    }
    w.finish()
}

/// Reads a trajectory written by [`write_trajectory`] for the same model.
pub fn read_trajectory(path: &Path, model: &CgnsModel, seed: u64) -> Result<Trajectory> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(BufReader::new(File::open(path)?));
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut want = vec!["t".to_string()];
    want.extend(model.observed_labels.iter().cloned());
    want.extend(model.hidden_labels.iter().cloned());
    if header != want {
        return Err(Error::GridMismatch(format!("trajectory columns {header:?} do not match model columns {want:?}")));
    }
    let (k, l) = (model.k, model.l);
    let (mut times, mut xs, mut ys) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad number `{f}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        times.push(vals[0]);
        xs.push(DVector::from_column_slice(&vals[1..1 + k]));
        ys.push(DVector::from_column_slice(&vals[1 + k..1 + k + l]));
    }
    Trajectory::from_parts(times, xs, ys, seed)
}

pub fn write_path(path: &Path, hash: &str, p: &GaussianPath, labels: &[String], stride: usize) -> Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend(labels.iter().map(|s| format!("mu_{s}")));
    header.extend(vech_header(labels));
    let mut w = CsvOut::create(path, hash, &header)?;
    for j in thinned(p.len(), stride) {
        let mut row = vec![num(p.times[j])];
        state_fields(&p.states[j], &mut row);
        w.row(&row)?;
    }
    w.finish()
}

/// Every `stride`-th index and always the last one.
pub fn thinned(len: usize, stride: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..len).step_by(stride.max(1)).collect();
    if idx.last() != Some(&(len - 1)) {
        idx.push(len - 1);
    }
    idx
}

pub fn write_aci(path: &Path, hash: &str, aci: &AciSeries, signal: &[f64], dispersion: &[f64], stride: usize) -> Result<()> {
    let header = ["t", "aci", "signal", "dispersion"].map(String::from);
    let mut w = CsvOut::create(path, hash, &header)?;
    for j in thinned(aci.times.len(), stride) {
        w.row(&[num(aci.times[j]), num(aci.values[j]), num(signal[j]), num(dispersion[j])])?;
    }
    w.finish()
}

pub fn write_cir(path: &Path, hash: &str, cir: &CirSeries) -> Result<()> {
    let header = ["t", "tau_objective", "truncated", "window_warning"].map(String::from);
    let mut w = CsvOut::create(path, hash, &header)?;
    for i in 0..cir.times.len() {
        w.row(&[
            num(cir.times[i]),
            num(cir.objective[i]),
            cir.truncated[i].to_string(),
            cir.window_warning[i].to_string(),
        ])?;
    }
    w.finish()
}

pub fn write_subjective(path: &Path, hash: &str, cir: &CirSeries) -> Result<()> {
    let header = ["t", "epsilon", "tau_subjective"].map(String::from);
    let mut w = CsvOut::create(path, hash, &header)?;
    if let Some(table) = &cir.subjective {
        for (i, lengths) in table.lengths.iter().enumerate() {
            for (eps, len) in table.thresholds.iter().zip(lengths) {
                w.row(&[num(cir.times[i]), num(*eps), num(*len)])?;
            }
        }
    }
    w.finish()
}

/// One whisker per anchor: `(t, y(t), t, t + τ)`.
pub fn write_whiskers(path: &Path, hash: &str, cir: &CirSeries, y_label: &str, y_at: &[f64]) -> Result<()> {
    let header = vec!["t".to_string(), y_label.to_string(), "t_start".to_string(), "t_end".to_string()];
    let mut w = CsvOut::create(path, hash, &header)?;
    for (i, &t) in cir.times.iter().enumerate() {
        w.row(&[num(t), num(y_at[i]), num(t), num(t + cir.objective[i])])?;
    }
    w.finish()
}

/// Long format `(j, n, t_j, t_n, μ, vech R)`.
pub fn write_lagged_audit<'a>(
    path: &Path,
    hash: &str,
    families: impl Iterator<Item = &'a LaggedFamily>,
    dt: f64,
    labels: &[String],
) -> Result<()> {
    let mut header: Vec<String> = ["j", "n", "t_j", "t_n"].map(String::from).to_vec();
    header.extend(labels.iter().map(|s| format!("mu_{s}")));
    header.extend(vech_header(labels));
    let mut w = CsvOut::create(path, hash, &header)?;
    for fam in families {
        for (i, s) in fam.states.iter().enumerate() {
            let n = fam.horizon(i);
            let mut row = vec![fam.anchor.to_string(), n.to_string(), num(fam.anchor as f64 * dt), num(n as f64 * dt)];
            state_fields(s, &mut row);
            w.row(&row)?;
        }
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{dyad_model, DyadParams};
    use crate::sim::euler_maruyama;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1 + 0.2, 1.0 / 3.0, -2.5e-300, 123456789.12345679, 0.0] {
            let s = num(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }

    #[test]
    fn trajectory_round_trips() {
        let m = dyad_model(DyadParams::default()).unwrap();
        let tr = euler_maruyama(&m, &DVector::zeros(1), &DVector::zeros(1), 1e-2, 300, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tr.csv");
        write_trajectory(&p, "abc", &tr, &m).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# config_hash: abc\nt,x,y\n"));
        let back = read_trajectory(&p, &m, 5).unwrap();
        assert_eq!(back.x, tr.x);
        assert_eq!(back.y, tr.y);
        assert_eq!(back.times, tr.times);
    }

    #[test]
    fn thinning_keeps_the_end() {
        assert_eq!(thinned(10, 4), vec![0, 4, 8, 9]);
        assert_eq!(thinned(9, 4), vec![0, 4, 8]);
        assert!(thinned(0, 3).is_empty());
    }

    #[test]
    fn vech_order_is_column_major_lower() {
        let labels = vec!["a".to_string(), "b".to_string()];
        assert_eq!(vech_header(&labels), vec!["R_a_a", "R_b_a", "R_b_b"]);
    }
}
