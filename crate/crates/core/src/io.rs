//! CSV and JSON artifacts: input data, draws, fitted-model metadata and
//! run reports. Every file is written to a temporary sibling and renamed
//! into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::basis::{AdditiveExpansion, BasisSpec, KnotSelection};
use crate::error::{Error, Result};
use crate::eval::{SimData, Truth};
use crate::inference::{PpdResult, SurvivalCurve};
use crate::model::{from_unconstrained, Dataset, Domain, Hyperparams, Layout, ParamPoint, TransformationModel};
use crate::sampler::ChainSet;

/// Formats a float with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    write_atomic(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_slice(&text)?)
}

/// Builds a CSV in memory and writes it atomically.
pub fn write_csv(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(header)?;
    for row in rows {
        wtr.write_record(&row)?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Responses, optional event indicators and named covariates read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub y: Vec<f64>,
    pub status: Option<Vec<bool>>,
    pub covariate_names: Vec<String>,
    pub z: Vec<Vec<f64>>,
}

impl Table {
    pub fn dataset(&self, domain: Domain, tau: f64) -> Result<Dataset> {
        Dataset::new(self.y.clone(), self.status.clone(), self.z.clone(), domain, tau)
    }
}

fn parse_field(value: &str, column: &str, row: usize) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Data(format!("row {row}, column {column:?}: cannot parse {value:?} as a number")))
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

/// Reads a dataset: column `y` is the response, optional `status` holds
/// 1 for an event and 0 for a censored row, every other column is a covariate.
pub fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = open_csv(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let y_col = headers
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| Error::Data(format!("{}: missing response column \"y\"", path.display())))?;
    let status_col = headers.iter().position(|h| h == "status");
    let cov_cols: Vec<usize> = (0..headers.len()).filter(|&j| j != y_col && Some(j) != status_col).collect();
    if cov_cols.is_empty() {
        return Err(Error::Data(format!("{}: no covariate columns", path.display())));
    }
    let mut table = Table {
        y: Vec::new(),
        status: status_col.map(|_| Vec::new()),
        covariate_names: cov_cols.iter().map(|&j| headers[j].clone()).collect(),
        z: Vec::new(),
    };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        table.y.push(parse_field(&rec[y_col], "y", row)?);
        if let (Some(j), Some(st)) = (status_col, table.status.as_mut()) {
            match rec[j].trim() {
                "1" => st.push(true),
                "0" => st.push(false),
                other => return Err(Error::Data(format!("row {row}, column \"status\": expected 0 or 1, got {other:?}"))),
            }
        }
        table.z.push(cov_cols.iter().map(|&j| parse_field(&rec[j], &headers[j], row)).collect::<Result<_>>()?);
    }
    if table.y.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    Ok(table)
}

/// Reads the covariate columns `names` (in that order) from a CSV that may
/// carry other columns too.
pub fn read_covariates(path: &Path, names: &[String]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = open_csv(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let cols: Vec<usize> = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| Error::Data(format!("{}: missing covariate column {n:?}", path.display())))
        })
        .collect::<Result<_>>()?;
    let mut z = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        z.push(cols.iter().zip(names).map(|(&j, n)| parse_field(&rec[j], n, i + 1)).collect::<Result<_>>()?);
    }
    if z.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    Ok(z)
}

/// Default covariate names `z1..zp`.
pub fn covariate_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("z{j}")).collect()
}

/// Writes simulated rows in the input schema; `status` only when censored.
pub fn write_sim_data(path: &Path, data: &SimData) -> Result<()> {
    let p = data.z.first().map_or(0, Vec::len);
    let censored = data.delta.iter().any(|&d| !d);
    let mut header = vec!["y".to_string()];
    if censored {
        header.push("status".into());
    }
    header.extend(covariate_names(p));
    let rows = (0..data.len()).map(|i| {
        let mut row = vec![num(data.y[i])];
        if censored {
            row.push(if data.delta[i] { "1".into() } else { "0".into() });
        }
        row.extend(data.z[i].iter().map(|&v| num(v)));
        row
    });
    write_csv(path, &header, rows)
}

/// True CDF and density of every test row on `grid`.
pub fn write_truth_grid(path: &Path, truth: &Truth, test: &SimData, grid: &[f64]) -> Result<()> {
    let header: Vec<String> = ["row", "s", "cdf", "pdf"].map(String::from).to_vec();
    let rows = test.z.iter().enumerate().flat_map(|(i, z)| {
        grid.iter().map(move |&s| vec![(i + 1).to_string(), num(s), num(truth.cdf(s, z)), num(truth.pdf(s, z))])
    });
    write_csv(path, &header, rows)
}

/// Column names of the draws file.
pub fn draws_header(layout: &Layout, n_knots: usize) -> Vec<String> {
    let mut h: Vec<String> = ["chain", "iter", "lp"].map(String::from).to_vec();
    let block = |prefix: &'static str, n: usize| (1..=n).map(move |j| format!("{prefix}_{j}"));
    h.extend(block("beta", layout.p));
    h.extend((1..=n_knots).map(|j| format!("H_s{j}")));
    h.extend(block("alpha", layout.k));
    h.extend(block("psi", layout.l));
    h.extend(block("nu", layout.l));
    h.extend(block("p", layout.l));
    h
}

/// Log mixture weights from stick logits, computed without leaving log space.
fn log_weights(logits: &[f64]) -> Vec<f64> {
    let softplus = |x: f64| if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
    let mut out = Vec::with_capacity(logits.len() + 1);
    let mut rest = 0.0;
    for &x in logits {
        out.push(rest - softplus(-x));
        rest -= softplus(x);
    }
    out.push(rest);
    out
}

/// Writes one row per retained draw in constrained coordinates.
pub fn write_draws(path: &Path, chains: &ChainSet, model: &TransformationModel) -> Result<()> {
    let layout = model.layout();
    let header = draws_header(&layout, model.n_knots());
    let mut rows = Vec::with_capacity(chains.n_chains() * chains.n_draws());
    for (c, chain) in chains.draws.iter().enumerate() {
        for (i, u) in chain.iter().enumerate() {
            let alpha: Vec<f64> = u[layout.alpha()].iter().map(|x| x.exp()).collect();
            let mut row = vec![(c + 1).to_string(), (i + 1).to_string(), num(chains.lp[c][i])];
            row.extend(u[layout.beta()].iter().map(|&v| num(v)));
            row.extend(model.h_at_knots(&alpha).into_iter().map(num));
            row.extend(alpha.iter().map(|&v| num(v)));
            row.extend(u[layout.psi()].iter().map(|x| num(x.exp())));
            row.extend(u[layout.nu()].iter().map(|x| num(x.exp())));
            row.extend(log_weights(&u[layout.sticks()]).into_iter().map(|lw| num(lw.exp())));
            rows.push(row);
        }
    }
    write_csv(path, &header, rows)
}

/// Draws read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawTable {
    pub layout: Layout,
    pub n_knots: usize,
    pub chain: Vec<usize>,
    pub iter: Vec<usize>,
    pub lp: Vec<f64>,
    /// Unconstrained coordinates of each row.
    pub unconstrained: Vec<Vec<f64>>,
    /// `H` at the interior knots for each row.
    pub h: Vec<Vec<f64>>,
}

impl DrawTable {
    pub fn points(&self) -> Result<Vec<ParamPoint>> {
        self.unconstrained.iter().map(|u| from_unconstrained(&self.layout, u)).collect()
    }

    pub fn betas(&self) -> Vec<Vec<f64>> {
        self.unconstrained.iter().map(|u| u[self.layout.beta()].to_vec()).collect()
    }

    /// Splits a per-row column into per-chain series.
    pub fn by_chain(&self, values: &[f64]) -> Vec<Vec<f64>> {
        let n_chains = self.chain.iter().copied().max().unwrap_or(0);
        let mut out = vec![Vec::new(); n_chains];
        for (&c, &v) in self.chain.iter().zip(values) {
            out[c - 1].push(v);
        }
        out
    }
}

fn count_block(headers: &[String], prefix: &str) -> usize {
    headers.iter().filter(|h| h.strip_prefix(prefix).is_some_and(|r| r.parse::<usize>().is_ok())).count()
}

/// Reads a draws file; stick logits are rebuilt from the stored weights as
/// `ln p_l - ln sum_{m > l} p_m`, which keeps full relative precision.
pub fn read_draws(path: &Path) -> Result<DrawTable> {
    let mut rdr = open_csv(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let p = count_block(&headers, "beta_");
    let j = count_block(&headers, "H_s");
    let k = count_block(&headers, "alpha_");
    let l = count_block(&headers, "psi_");
    let layout = Layout::new(k, l, p);
    let expected = draws_header(&layout, j);
    if headers != expected || k == 0 || l == 0 {
        return Err(Error::Data(format!("{}: columns do not follow the draws layout", path.display())));
    }
    let (o_beta, o_alpha) = (3, 3 + p + j);
    let (o_psi, o_nu, o_p) = (o_alpha + k, o_alpha + k + l, o_alpha + k + 2 * l);
    let mut table =
        DrawTable { layout, n_knots: j, chain: vec![], iter: vec![], lp: vec![], unconstrained: vec![], h: vec![] };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let f = |c: usize| parse_field(&rec[c], &headers[c], row);
        let index = |c: usize| {
            rec[c].parse::<usize>().ok().filter(|&v| v >= 1).ok_or_else(|| {
                Error::Data(format!("row {row}, column {:?}: expected a positive integer", headers[c]))
            })
        };
        table.chain.push(index(0)?);
        table.iter.push(index(1)?);
        table.lp.push(f(2)?);
        let mut u = Vec::with_capacity(layout.dim());
        for c in o_alpha..o_alpha + k {
            u.push(f(c)?.ln());
        }
        let weights: Vec<f64> = (o_p..o_p + l).map(f).collect::<Result<_>>()?;
        let mut tail: Vec<f64> = vec![0.0; l];
        for m in (0..l - 1).rev() {
            tail[m] = tail[m + 1] + weights[m + 1];
        }
        for m in 0..l - 1 {
            u.push(weights[m].ln() - tail[m].ln());
        }
        for c in o_psi..o_psi + l {
            u.push(f(c)?.ln());
        }
        for c in o_nu..o_nu + l {
            u.push(f(c)?.ln());
        }
        for c in o_beta..o_beta + p {
            u.push(f(c)?);
        }
        if u.iter().any(|x| !x.is_finite()) {
            warn!("draws row {row} has a zero or underflowed positive parameter");
        }
        table.unconstrained.push(u);
        table.h.push((o_beta + p..o_alpha).map(f).collect::<Result<_>>()?);
    }
    if table.lp.is_empty() {
        return Err(Error::Data(format!("{}: no draws", path.display())));
    }
    Ok(table)
}

/// Everything `predict` needs besides the draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub domain: Domain,
    pub hyperparams: Hyperparams,
    pub knots: KnotSelection,
    pub basis: BasisSpec,
    pub covariate_names: Vec<String>,
    pub expansion: Option<AdditiveExpansion>,
    pub censoring_rate: f64,
    /// Smallest and largest training response.
    pub response_range: (f64, f64),
    /// Divisor applied to responses before fitting.
    #[serde(default = "unit_scale")]
    pub response_scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl FittedModel {
    pub fn load(path: &Path) -> Result<Self> {
        let mut m: Self = read_json(path)?;
        m.basis = m.basis.rebuild()?;
        Ok(m)
    }

    /// Expands raw covariate rows the same way as the training rows.
    pub fn design(&self, z: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        match &self.expansion {
            Some(e) => e.transform(z),
            None => Ok(z.to_vec()),
        }
    }

    pub fn check_layout(&self, layout: &Layout, n_knots: usize) -> Result<()> {
        let p = match &self.expansion {
            Some(e) => e.n_columns(),
            None => self.covariate_names.len(),
        };
        if layout.k != self.basis.n_basis()
            || layout.l != self.hyperparams.truncation
            || layout.p != p
            || n_knots != self.basis.interior_knots().len()
        {
            return Err(Error::invalid(format!(
                "draws have K={}, L={}, p={}, J={} but the model expects K={}, L={}, p={}, J={}",
                layout.k,
                layout.l,
                layout.p,
                n_knots,
                self.basis.n_basis(),
                self.hyperparams.truncation,
                p,
                self.basis.interior_knots().len()
            )));
        }
        Ok(())
    }
}

/// Long-format PPD curves: one row per (row, grid point).
pub fn write_ppd_curves(path: &Path, curves: &[PpdResult], survival: Option<&[SurvivalCurve]>) -> Result<()> {
    let mut header: Vec<String> = ["row", "s", "cdf", "pdf"].map(String::from).to_vec();
    if survival.is_some() {
        header.extend(["survival", "cumulative_hazard"].map(String::from));
    }
    let mut rows = Vec::new();
    for (i, c) in curves.iter().enumerate() {
        for g in 0..c.grid.len() {
            let mut row = vec![(i + 1).to_string(), num(c.grid[g]), num(c.cdf[g]), num(c.pdf[g])];
            if let Some(s) = survival {
                row.push(num(s[i].survival[g]));
                row.push(num(s[i].cumulative_hazard[g]));
            }
            rows.push(row);
        }
    }
    write_csv(path, &header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{generate, Setting, SimSpec};
    use crate::sampler::{run_chains, LogDensity, SamplerConfig};

    #[test]
    fn missing_response_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(&path, "x,z1\n1,2\n").unwrap();
        let err = read_table(&path).unwrap_err().to_string();
        assert!(err.contains("\"y\""), "{err}");
    }

    #[test]
    fn table_parses_status_and_covariates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(&path, "a,y,status,b\n1.5,2,1,3\n-1,0.5,0,4e-1\n").unwrap();
        let t = read_table(&path).unwrap();
        assert_eq!(t.y, vec![2.0, 0.5]);
        assert_eq!(t.status, Some(vec![true, false]));
        assert_eq!(t.covariate_names, vec!["a", "b"]);
        assert_eq!(t.z, vec![vec![1.5, 3.0], vec![-1.0, 0.4]]);
        fs::write(&path, "y,status,b\n1,2,3\n").unwrap();
        assert!(read_table(&path).is_err());
        let z = read_covariates(&path, &["b".to_string()]).unwrap();
        assert_eq!(z, vec![vec![3.0]]);
        assert!(read_covariates(&path, &["c".to_string()]).is_err());
    }

    #[test]
    fn sim_data_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let sim = generate(&SimSpec::new(Setting::B1, 30, 5, 2)).unwrap();
        let path = dir.path().join("train.csv");
        write_sim_data(&path, &sim.train).unwrap();
        let t = read_table(&path).unwrap();
        assert_eq!(t.y, sim.train.y);
        assert_eq!(t.status, Some(sim.train.delta.clone()));
        assert_eq!(t.z, sim.train.z);
    }

    #[test]
    fn log_weights_match_stick_breaking() {
        let logits = [0.3, -1.2, 2.0];
        let v: Vec<f64> = logits.iter().map(|x: &f64| 1.0 / (1.0 + (-x).exp())).collect();
        let w = crate::mixture::stick_breaking_weights(&v).unwrap();
        for (a, b) in log_weights(&logits).iter().zip(&w) {
            assert!((a.exp() - b).abs() < 1e-15);
        }
        // a saturated stick leaves the later weights tiny but positive
        let lw = log_weights(&[40.0, 0.0]);
        assert!(lw[1].is_finite() && lw[1] < -39.0);
    }

    #[test]
    fn draws_round_trip_reproduces_lp() {
        let sim = generate(&SimSpec::new(Setting::A1, 40, 5, 4)).unwrap();
        let data = sim.train.dataset(5.0).unwrap();
        let (_, model) = TransformationModel::from_data(&data, &Hyperparams::default()).unwrap();
        let cfg = SamplerConfig { chains: 2, warmup: 100, draws: 100, ..SamplerConfig::default() };
        let chains = run_chains(&model, &cfg, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("draws.csv");
        write_draws(&path, &chains, &model).unwrap();
        let table = read_draws(&path).unwrap();
        assert_eq!(table.layout, model.layout());
        assert_eq!(table.lp.len(), 200);
        for (u, &lp) in table.unconstrained.iter().zip(&table.lp) {
            let again = model.logp(u);
            assert!((again - lp).abs() <= 1e-8 * lp.abs().max(1.0), "{again} vs {lp}");
        }
        let stored: Vec<&Vec<f64>> = chains.flat_draws().collect();
        for (u, orig) in table.unconstrained.iter().zip(stored) {
            for (a, b) in u.iter().zip(orig) {
                assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
            }
        }
        assert_eq!(table.by_chain(&table.lp), chains.lp);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/x.json");
        write_json(&path, &vec![1.0, 2.0]).unwrap();
        write_json(&path, &vec![3.0]).unwrap();
        let back: Vec<f64> = read_json(&path).unwrap();
        assert_eq!(back, vec![3.0]);
        assert!(!dir.path().join("sub/x.json.tmp").exists());
    }
}
