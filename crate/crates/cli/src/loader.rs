//! Long-format CSV ingestion: one row per (id, time) observation.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use panelbreak::Panel;

/// Which input columns play which role.
#[derive(Debug, Clone)]
pub struct ColumnRoles {
    pub id: String,
    pub time: String,
    pub y: String,
    pub x: Vec<String>,
}

impl ColumnRoles {
    pub fn validate(&self) -> Result<()> {
        if self.x.is_empty() {
            bail!("at least one regressor column is required");
        }
        let mut seen: Vec<&str> = Vec::new();
        for name in [&self.id, &self.time, &self.y]
            .into_iter()
            .chain(self.x.iter())
        {
            if seen.contains(&name.as_str()) {
                bail!("column '{name}' is assigned to more than one role");
            }
            seen.push(name);
        }
        Ok(())
    }
}

/// A balanced panel plus the original id and time labels.
///
/// Internally individuals are `0..n` and periods `1..=t`; the label vectors
/// map those back to whatever the file used. Labels sort numerically when
/// every value parses as a number, lexicographically otherwise.
#[derive(Debug)]
pub struct LoadedPanel {
    pub panel: Panel,
    pub ids: Vec<String>,
    pub times: Vec<String>,
}

impl LoadedPanel {
    /// Original label of 1-based period `t`.
    pub fn time_label(&self, t: usize) -> &str {
        &self.times[t - 1]
    }
}

/// Sorts labels numerically when they all parse, lexicographically otherwise.
fn sort_labels(labels: &mut [String]) {
    let parsed: Option<Vec<f64>> = labels
        .iter()
        .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect();
    match parsed {
        Some(values) => {
            let mut order: Vec<usize> = (0..labels.len()).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            let snapshot: Vec<String> = labels.to_vec();
            for (slot, src) in order.into_iter().enumerate() {
                labels[slot] = snapshot[src].clone();
            }
        }
        None => labels.sort(),
    }
}

struct RawRow {
    id: String,
    time: String,
    y: f64,
    x: Vec<f64>,
    line: u64,
}

/// Reads a long-format CSV into a balanced panel.
///
/// Every (id, time) pair must appear exactly once; duplicates and missing
/// pairs are reported by label, unparseable cells by file line. With
/// `intercept` a leading all-ones column named `const` is prepended.
pub fn load_csv(path: &Path, roles: &ColumnRoles, intercept: bool) -> Result<LoadedPanel> {
    roles.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open '{}'", path.display()))?;

    let headers = reader.headers().context("reading the header row")?.clone();
    let col = |name: &str| -> Result<usize> {
        let mut hits = headers.iter().enumerate().filter(|(_, h)| *h == name);
        let first = hits.next();
        if hits.next().is_some() {
            bail!("column '{name}' appears more than once in the header");
        }
        first.map(|(i, _)| i).ok_or_else(|| {
            anyhow!(
                "column '{name}' not found; the header has: {}",
                headers.iter().collect::<Vec<_>>().join(", ")
            )
        })
    };
    let id_ix = col(&roles.id)?;
    let time_ix = col(&roles.time)?;
    let y_ix = col(&roles.y)?;
    let x_ix: Vec<usize> = roles.x.iter().map(|n| col(n)).collect::<Result<_>>()?;

    let mut rows: Vec<RawRow> = Vec::new();
    for record in reader.records() {
        let record = record.context("reading a data row")?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |ix: usize| {
            record
                .get(ix)
                .ok_or_else(|| anyhow!("line {line}: row has too few fields"))
        };
        let number = |ix: usize, name: &str| -> Result<f64> {
            let raw = field(ix)?;
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    anyhow!("line {line}: column '{name}': cannot parse '{raw}' as a number")
                })
        };
        rows.push(RawRow {
            id: field(id_ix)?.to_string(),
            time: field(time_ix)?.to_string(),
            y: number(y_ix, &roles.y)?,
            x: x_ix
                .iter()
                .zip(&roles.x)
                .map(|(&ix, name)| number(ix, name))
                .collect::<Result<_>>()?,
            line,
        });
    }
    if rows.is_empty() {
        bail!("'{}' has no data rows", path.display());
    }

    let mut ids: Vec<String> = rows.iter().map(|r| r.id.clone()).collect();
    ids.sort();
    ids.dedup();
    sort_labels(&mut ids);
    let mut times: Vec<String> = rows.iter().map(|r| r.time.clone()).collect();
    times.sort();
    times.dedup();
    sort_labels(&mut times);

    let id_slot: BTreeMap<&str, usize> = ids.iter().map(|s| s.as_str()).zip(0..).collect();
    let time_slot: BTreeMap<&str, usize> = times.iter().map(|s| s.as_str()).zip(0..).collect();

    let (n, t) = (ids.len(), times.len());
    if t < 2 {
        bail!("need at least two distinct time periods, got {t}");
    }
    let p_in = roles.x.len();
    let p = p_in + usize::from(intercept);

    let mut y = vec![f64::NAN; n * t];
    let mut x = vec![f64::NAN; n * t * p];
    let mut filled_line = vec![0u64; n * t];
    for row in &rows {
        let i = id_slot[row.id.as_str()];
        let ti = time_slot[row.time.as_str()];
        let cell = ti * n + i;
        if filled_line[cell] != 0 {
            bail!(
                "duplicate row for (id, time) = ('{}', '{}') at lines {} and {}",
                row.id,
                row.time,
                filled_line[cell],
                row.line
            );
        }
        filled_line[cell] = row.line;
        y[cell] = row.y;
        let base = cell * p;
        if intercept {
            x[base] = 1.0;
        }
        x[base + usize::from(intercept)..base + p].copy_from_slice(&row.x);
    }

    let missing: Vec<String> = (0..n * t)
        .filter(|&cell| filled_line[cell] == 0)
        .map(|cell| format!("('{}', '{}')", ids[cell % n], times[cell / n]))
        .collect();
    if !missing.is_empty() {
        let shown = missing
            .iter()
            .take(8)
            .cloned()
            .collect::<Vec<_>>()
            .join(", ");
        let more = missing.len().saturating_sub(8);
        let tail = if more > 0 {
            format!(" and {more} more")
        } else {
            String::new()
        };
        bail!("unbalanced panel: missing (id, time) pairs {shown}{tail}");
    }

    let mut names = Vec::with_capacity(p);
    if intercept {
        names.push("const".to_string());
    }
    names.extend(roles.x.iter().cloned());

    let panel =
        Panel::new(n, t, names, y, x, intercept).map_err(|e| anyhow!("assembling panel: {e}"))?;
    Ok(LoadedPanel { panel, ids, times })
}

/// Writes a panel back out in the long format `load_csv` reads.
///
/// Ids and periods become 1-based integers; regressor headers come from the
/// panel's column names. Floats print in shortest round-trip form.
pub fn write_panel_csv(panel: &Panel, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create '{}'", path.display()))?;
    let mut header = vec!["id".to_string(), "time".to_string(), "y".to_string()];
    header.extend(panel.names().iter().cloned());
    writer.write_record(&header)?;
    for i in 0..panel.n() {
        for t in 1..=panel.t_periods() {
            let mut record = vec![
                (i + 1).to_string(),
                t.to_string(),
                panel.y(i, t).to_string(),
            ];
            record.extend(panel.x(i, t).iter().map(|v| v.to_string()));
            writer.write_record(&record)?;
        }
    }
    writer.flush()?;
    Ok(())
}
