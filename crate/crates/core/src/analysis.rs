//! Two-stage network regression: per-group sparse β-model fits supply
//! β-centrality and leader covariates, which then enter logistic regressions
//! of a binary outcome.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Result, SbmError};
use crate::graph::{eigenvector_centrality, load_edge_list, Graph, NodeLabels};
use crate::path::{select, solution_path, Criterion, PathEntry};
use crate::solver::FitConfig;

/// One group's network with its external node labels.
#[derive(Debug, Clone)]
pub struct GroupGraph {
    pub group: String,
    pub graph: Graph,
    pub labels: NodeLabels,
}

#[derive(Debug, Clone)]
pub struct GroupFitOptions {
    pub fit: FitConfig,
    /// Support cap as a fraction of the group size.
    pub cap_fraction: f64,
    pub criterion: Criterion,
    pub include_null: bool,
}

impl Default for GroupFitOptions {
    fn default() -> Self {
        GroupFitOptions {
            fit: FitConfig::default(),
            cap_fraction: 0.5,
            criterion: Criterion::Bic,
            include_null: false,
        }
    }
}

/// Selected path entry per group. Groups without edges are skipped with a
/// warning; any other failure aborts.
pub fn fit_by_group(groups: &[GroupGraph], opts: &GroupFitOptions) -> Result<BTreeMap<String, PathEntry>> {
    if !(opts.cap_fraction > 0.0 && opts.cap_fraction <= 1.0) {
        return Err(SbmError::InvalidConfig(format!(
            "cap_fraction must lie in (0, 1], got {}",
            opts.cap_fraction
        )));
    }
    let fits: Vec<Option<(String, PathEntry)>> = groups
        .par_iter()
        .map(|gg| {
            if gg.graph.d_plus() == 0 {
                log::warn!("group {} has no edges; skipped", gg.group);
                return Ok(None);
            }
            let cap = ((opts.cap_fraction * gg.graph.n() as f64).floor() as usize).max(1);
            let path = solution_path(&gg.graph, cap, &opts.fit)?;
            let entry = select(&path, opts.criterion, opts.include_null)?.clone();
            Ok(Some((gg.group.clone(), entry)))
        })
        .collect::<Result<_>>()?;
    let mut out = BTreeMap::new();
    for (group, entry) in fits.into_iter().flatten() {
        if out.insert(group.clone(), entry).is_some() {
            return Err(SbmError::InvalidConfig(format!("duplicate group id {group}")));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeRow {
    pub node_id: String,
    pub group_id: String,
    pub outcome: Option<bool>,
    pub degree: usize,
    pub eigenvector: f64,
    pub beta_hat: f64,
    pub mu_hat_group: f64,
    pub beta_star: f64,
    pub leader: bool,
}

impl NodeRow {
    /// `1{beta_hat > 0} + mu_hat / 2`
    pub fn leader_shifted(&self) -> f64 {
        f64::from(u8::from(self.leader)) + self.mu_hat_group / 2.0
    }
}

/// Binary outcome keyed by `(group_id, node_id)`. `None` marks a missing
/// response.
pub type Outcomes = HashMap<(String, String), Option<bool>>;

/// One row per node of every fitted group. Nodes without an outcome row get
/// `outcome = None`; outcome rows naming an unknown node are an error.
pub fn build_node_table(
    fits: &BTreeMap<String, PathEntry>,
    groups: &[GroupGraph],
    outcomes: &Outcomes,
) -> Result<Vec<NodeRow>> {
    let by_name: HashMap<&str, &GroupGraph> = groups.iter().map(|g| (g.group.as_str(), g)).collect();

    let mut missing: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (group, node) in outcomes.keys() {
        let known = by_name
            .get(group.as_str())
            .is_some_and(|gg| gg.labels.iter().any(|l| l == node));
        if !known {
            missing.entry(group.clone()).or_default().push(node.clone());
        }
    }
    if let Some((group, mut ids)) = missing.into_iter().next() {
        ids.sort();
        return Err(SbmError::MissingNodes { group, ids });
    }

    let mut rows = Vec::new();
    for gg in groups {
        let Some(entry) = fits.get(&gg.group) else {
            log::warn!("group {} has no fit; its nodes are left out", gg.group);
            continue;
        };
        let eig = eigenvector_centrality(&gg.graph, 1e-10)?;
        if !eig.unique {
            log::warn!("eigenvector centrality of group {} is not unique", gg.group);
        }
        let mu = entry.fit.mu();
        for i in 0..gg.graph.n() {
            let beta_hat = entry.fit.params.beta()[i];
            let node_id = gg.labels.label(i).to_string();
            let outcome = outcomes.get(&(gg.group.clone(), node_id.clone())).copied().flatten();
            rows.push(NodeRow {
                node_id,
                group_id: gg.group.clone(),
                outcome,
                degree: gg.graph.degree(i),
                eigenvector: eig.scores[i],
                beta_hat,
                mu_hat_group: mu,
                beta_star: beta_hat + mu / 2.0,
                leader: beta_hat > 0.0,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogitFit {
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub z_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub separation_flag: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

const LOGIT_GRAD_TOL: f64 = 1e-8;
const LOGIT_STEP_TOL: f64 = 1e-6;
const LOGIT_MAX_ITER: usize = 200;
const SEPARATION_BOUND: f64 = 50.0;

/// Maximum-likelihood logistic regression by damped Newton–Raphson.
/// `design` must already contain the intercept column.
pub fn logistic_fit(design: &DMatrix<f64>, y: &[bool]) -> Result<LogitFit> {
    let (rows, cols) = design.shape();
    if rows != y.len() {
        return Err(SbmError::InvalidConfig(format!(
            "design has {rows} rows but the response has {} entries",
            y.len()
        )));
    }
    if cols == 0 || rows < cols {
        return Err(SbmError::RankDeficient);
    }
    if design.iter().any(|v| !v.is_finite()) {
        return Err(SbmError::InvalidConfig("design contains non-finite values".into()));
    }
    let sv = design.singular_values();
    let smax = sv.max();
    if !(sv.min() > 1e-10 * smax.max(1e-300)) {
        return Err(SbmError::RankDeficient);
    }

    let yv = DVector::from_iterator(rows, y.iter().map(|&b| f64::from(u8::from(b))));
    let mut coef = DVector::zeros(cols);
    let mut state = logit_state(design, &yv, &coef);
    let mut iterations = 0;
    let mut converged = false;
    let mut separation = false;

    loop {
        let step = match state.information.clone().cholesky() {
            Some(chol) => chol.solve(&state.score),
            None => {
                // information has collapsed; the fit is running off to infinity
                separation = true;
                break;
            }
        };
        let grad_norm = state.score.norm();
        if grad_norm <= LOGIT_GRAD_TOL && step.amax() <= LOGIT_STEP_TOL {
            converged = true;
            break;
        }
        if coef.amax() > SEPARATION_BOUND {
            separation = true;
            break;
        }
        if iterations >= LOGIT_MAX_ITER {
            break;
        }
        iterations += 1;

        let mut t = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let trial = &coef + &step * t;
            let trial_state = logit_state(design, &yv, &trial);
            if trial_state.loglik >= state.loglik - 1e-12 * (1.0 + state.loglik.abs()) {
                next = Some((trial, trial_state));
                break;
            }
            t *= 0.5;
        }
        let Some((c, s)) = next else {
            break;
        };
        coef = c;
        state = s;
    }

    let standard_errors: Vec<f64> = match state.information.clone().try_inverse() {
        Some(inv) => (0..cols).map(|k| inv[(k, k)].max(0.0).sqrt()).collect(),
        None => vec![f64::NAN; cols],
    };
    let z_values: Vec<f64> = coef.iter().zip(&standard_errors).map(|(c, se)| c / se).collect();
    let p_values = z_values
        .iter()
        .map(|z| erfc(z.abs() / std::f64::consts::SQRT_2))
        .collect();
    Ok(LogitFit {
        coefficients: coef.iter().copied().collect(),
        standard_errors,
        z_values,
        p_values,
        loglik: state.loglik,
        converged,
        separation_flag: separation,
        iterations,
        gradient_norm: state.score.norm(),
    })
}

struct LogitState {
    loglik: f64,
    score: DVector<f64>,
    information: DMatrix<f64>,
}

fn logit_state(x: &DMatrix<f64>, y: &DVector<f64>, coef: &DVector<f64>) -> LogitState {
    let eta = x * coef;
    let mut loglik = 0.0;
    let mut resid = DVector::zeros(eta.len());
    let mut weights = DVector::zeros(eta.len());
    for i in 0..eta.len() {
        let e = eta[i];
        loglik += y[i] * e - crate::math::softplus(e);
        let p = crate::math::sigmoid(e);
        resid[i] = y[i] - p;
        weights[i] = crate::math::bernoulli_variance(e);
    }
    let score = x.transpose() * resid;
    let mut weighted = x.clone();
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= weights[i];
    }
    let information = x.transpose() * weighted;
    LogitState {
        loglik,
        score,
        information,
    }
}

/// A fitted take-up specification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TakeupModel {
    pub model: usize,
    /// Intercept first.
    pub terms: Vec<String>,
    pub n_obs: usize,
    pub fit: LogitFit,
}

/// Covariates of the eight take-up specifications, in order.
pub const TAKEUP_SPECS: [&[&str]; 8] = [
    &["degree"],
    &["eigenvector"],
    &["beta_star"],
    &["leader_shifted"],
    &["degree", "beta_star"],
    &["degree", "leader_shifted"],
    &["eigenvector", "beta_star"],
    &["eigenvector", "leader_shifted"],
];

fn covariate(row: &NodeRow, name: &str) -> f64 {
    match name {
        "degree" => row.degree as f64,
        "eigenvector" => row.eigenvector,
        "beta_star" => row.beta_star,
        "leader_shifted" => row.leader_shifted(),
        _ => unreachable!("unknown covariate {name}"),
    }
}

/// Fits all eight specifications on the rows with an observed outcome.
pub fn run_takeup_models(table: &[NodeRow]) -> Result<Vec<TakeupModel>> {
    let observed: Vec<&NodeRow> = table.iter().filter(|r| r.outcome.is_some()).collect();
    let dropped = table.len() - observed.len();
    if dropped > 0 {
        log::info!("{dropped} rows without an outcome dropped from the regressions");
    }
    let y: Vec<bool> = observed.iter().map(|r| r.outcome.expect("filtered")).collect();
    TAKEUP_SPECS
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let design = DMatrix::from_fn(observed.len(), spec.len() + 1, |i, j| {
                if j == 0 {
                    1.0
                } else {
                    covariate(observed[i], spec[j - 1])
                }
            });
            let fit = logistic_fit(&design, &y)?;
            let mut terms = vec!["intercept".to_string()];
            terms.extend(spec.iter().map(|s| s.to_string()));
            Ok(TakeupModel {
                model: k + 1,
                terms,
                n_obs: observed.len(),
                fit,
            })
        })
        .collect()
}

/// Long-format coefficient table, one line per (model, term).
pub fn takeup_table_csv(models: &[TakeupModel]) -> String {
    let mut out = String::from("model,term,coefficient,std_error,z_value,p_value,n_obs,loglik,converged,separation\n");
    for m in models {
        for (k, term) in m.terms.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                m.model,
                term,
                m.fit.coefficients[k],
                m.fit.standard_errors[k],
                m.fit.z_values[k],
                m.fit.p_values[k],
                m.n_obs,
                m.fit.loglik,
                m.fit.converged,
                m.fit.separation_flag
            );
        }
    }
    out
}

pub fn node_table_csv(rows: &[NodeRow]) -> String {
    let mut out = String::from("node_id,group_id,outcome,degree,eigenvector,beta_hat,mu_hat_group,beta_star,leader\n");
    for r in rows {
        let outcome = match r.outcome {
            Some(true) => "1",
            Some(false) => "0",
            None => "NA",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.node_id,
            r.group_id,
            outcome,
            r.degree,
            r.eigenvector,
            r.beta_hat,
            r.mu_hat_group,
            r.beta_star,
            u8::from(r.leader)
        );
    }
    out
}

/// Reads `node_id,group_id,takeup` rows. Empty or `NA` responses are kept as
/// missing.
pub fn parse_outcomes(reader: impl Read) -> Result<Outcomes> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| SbmError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| SbmError::Parse {
            line: 1,
            message: format!("missing column {name:?}"),
        })
    };
    let (node_col, group_col, y_col) = (col("node_id")?, col("group_id")?, col("takeup")?);

    let mut out = Outcomes::new();
    let mut missing = 0usize;
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| SbmError::Parse {
            line,
            message: e.to_string(),
        })?;
        let field = |k: usize| record.get(k).unwrap_or("");
        let value = match field(y_col) {
            "" | "NA" | "na" | "NaN" => {
                missing += 1;
                None
            }
            "1" | "1.0" | "true" => Some(true),
            "0" | "0.0" | "false" => Some(false),
            other => {
                return Err(SbmError::Parse {
                    line,
                    message: format!("takeup must be 0 or 1, got {other:?}"),
                })
            }
        };
        let key = (field(group_col).to_string(), field(node_col).to_string());
        if out.insert(key.clone(), value).is_some() {
            return Err(SbmError::Parse {
                line,
                message: format!("duplicate row for node {} in group {}", key.1, key.0),
            });
        }
    }
    if missing > 0 {
        log::info!("{missing} outcome rows have no response");
    }
    Ok(out)
}

pub fn load_outcomes(path: impl AsRef<Path>) -> Result<Outcomes> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| SbmError::io(path, e))?;
    parse_outcomes(file)
}

/// Loads every `<group>.tsv` edge list in `dir`, with an optional
/// `<group>.labels` sidecar. Groups come back sorted by id.
pub fn load_groups(dir: impl AsRef<Path>) -> Result<Vec<GroupGraph>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| SbmError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| SbmError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "tsv") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(SbmError::InvalidConfig(format!(
            "no .tsv edge lists in {}",
            dir.display()
        )));
    }
    paths
        .into_iter()
        .map(|path| {
            let group = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let graph = load_edge_list(&path)?;
            let sidecar = path.with_extension("labels");
            let labels = if sidecar.exists() {
                NodeLabels::load(&sidecar, graph.n())?
            } else {
                NodeLabels::identity(graph.n())
            };
            Ok(GroupGraph { group, graph, labels })
        })
        .collect()
}

/// Reads a square 0/1 adjacency matrix separated by commas or whitespace.
/// Any nonzero entry in either triangle becomes an undirected edge; the
/// diagonal is ignored.
pub fn parse_adjacency_matrix(text: &str) -> Result<Graph> {
    let mut rows: Vec<Vec<bool>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map(|v| v != 0.0).map_err(|e| SbmError::Parse {
                    line: idx + 1,
                    message: format!("bad matrix entry {t:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(SbmError::InvalidGraph(format!(
            "adjacency matrix row {} has {} entries, expected {n}",
            i + 1,
            r.len()
        )));
    }
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rows[u][v] || rows[v][u] {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn group(name: &str, g: Graph) -> GroupGraph {
        let n = g.n();
        GroupGraph {
            group: name.into(),
            graph: g,
            labels: NodeLabels::identity(n),
        }
    }

    #[test]
    fn triangles_select_null() {
        let groups = vec![
            group("a", Graph::complete(3).unwrap()),
            group("b", Graph::complete(3).unwrap()),
        ];
        let fits = fit_by_group(&groups, &GroupFitOptions::default()).unwrap();
        assert_eq!(fits.len(), 2);
        assert!(fits.values().all(|e| e.s == 0));
    }

    #[test]
    fn empty_group_is_skipped() {
        let groups = vec![
            group("a", Graph::empty(4).unwrap()),
            group("b", Graph::from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2)]).unwrap()),
        ];
        let fits = fit_by_group(&groups, &GroupFitOptions::default()).unwrap();
        assert_eq!(fits.keys().collect::<Vec<_>>(), vec!["b"]);
    }

    #[test]
    fn node_table_columns() {
        let groups = vec![
            group(
                "a",
                Graph::from_edges(5, [(0, 1), (0, 2), (0, 3), (1, 2), (3, 4)]).unwrap(),
            ),
            group("b", Graph::complete(3).unwrap()),
        ];
        let fits = fit_by_group(&groups, &GroupFitOptions::default()).unwrap();
        let mut outcomes = Outcomes::new();
        outcomes.insert(("a".into(), "0".into()), Some(true));
        outcomes.insert(("b".into(), "2".into()), None);
        let rows = build_node_table(&fits, &groups, &outcomes).unwrap();
        assert_eq!(rows.len(), 8);
        for r in &rows {
            assert_eq!(r.beta_star, r.beta_hat + r.mu_hat_group / 2.0);
            assert_eq!(r.leader, r.beta_hat > 0.0);
        }
        assert_eq!(rows[0].outcome, Some(true));
        assert!(rows[1..].iter().all(|r| r.outcome.is_none()));

        outcomes.insert(("b".into(), "7".into()), Some(false));
        let err = build_node_table(&fits, &groups, &outcomes).unwrap_err();
        assert!(matches!(err, SbmError::MissingNodes { ref group, ref ids } if group == "b" && ids == &["7"]));
    }

    #[test]
    fn leader_shift_examples() {
        let mut row = NodeRow {
            node_id: "1".into(),
            group_id: "g".into(),
            outcome: None,
            degree: 3,
            eigenvector: 1.0,
            beta_hat: 1.0,
            mu_hat_group: -2.0,
            beta_star: 0.0,
            leader: true,
        };
        assert_eq!(row.leader_shifted(), 0.0);
        row.leader = false;
        assert_eq!(row.leader_shifted(), -1.0);
    }

    #[test]
    fn intercept_only_half() {
        let x = DMatrix::from_element(4, 1, 1.0);
        let fit = logistic_fit(&x, &[true, false, true, false]).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.coefficients[0], 0.0);
        assert!((fit.standard_errors[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separated_design() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, -2.0, 1.0, -1.0, 1.0, 1.0, 1.0, 2.0]);
        let fit = logistic_fit(&x, &[false, false, true, true]).unwrap();
        assert!(fit.separation_flag);
        assert!(!fit.converged);

        let x = DMatrix::from_element(5, 1, 1.0);
        let fit = logistic_fit(&x, &[false; 5]).unwrap();
        assert!(fit.separation_flag && !fit.converged);
    }

    #[test]
    fn rank_deficient_design() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            logistic_fit(&x, &[true, false, true]),
            Err(SbmError::RankDeficient)
        ));
        let x = DMatrix::from_element(1, 2, 1.0);
        assert!(logistic_fit(&x, &[true]).is_err());
    }

    #[test]
    fn outcomes_csv() {
        let text = "node_id,group_id,takeup\n1,v1,1\n2,v1,0\n3,v1,NA\n4,v2,\n";
        let o = parse_outcomes(text.as_bytes()).unwrap();
        assert_eq!(o.len(), 4);
        assert_eq!(o[&("v1".into(), "1".into())], Some(true));
        assert_eq!(o[&("v1".into(), "3".into())], None);
        assert_eq!(o[&("v2".into(), "4".into())], None);
        assert!(parse_outcomes("node_id,group_id,takeup\n1,v,2\n".as_bytes()).is_err());
        assert!(parse_outcomes("node,group_id,takeup\n".as_bytes()).is_err());
    }

    #[test]
    fn adjacency_matrix() {
        let g = parse_adjacency_matrix("0,1,0\n0,0,1\n0,0,1\n").unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert!(parse_adjacency_matrix("0 1\n1\n").is_err());
    }
}
