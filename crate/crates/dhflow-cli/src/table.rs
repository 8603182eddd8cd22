//! CSV result tables.
//!
//! Columns are ordered deterministically: grid/step coordinates first,
//! then outputs ascending by column name. Floating-point values are
//! rendered with 12 significant digits so two runs over the same inputs
//! produce byte-identical files and the values reparse to the printed
//! precision. Rows end in LF.

use std::fmt::Write as _;

use dhflow_core::{
    EquilibriumSolution, GroupStudy, NetworkSpec, QuantitySelection, SweepResult, VertexId,
};

/// 12 significant digits, scientific; negative zero normalized.
pub fn format_float(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.11e}")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(x) => format_float(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => {
                if s.contains([',', '"', '\n']) {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
            Cell::Empty => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: Vec<S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let mut first = true;
            for cell in row {
                if !first {
                    out.push(',');
                }
                first = false;
                let _ = write!(out, "{}", cell.render());
            }
            out.push('\n');
        }
        out
    }
}

/// Long-format table of one solved equilibrium: vertex pressures, edge
/// flows, consumer flows, pump throughput, then solver diagnostics.
pub fn solution_table(solution: &EquilibriumSolution) -> Table {
    let mut table = Table::new(vec!["kind", "id", "value"]);
    for (id, p) in &solution.pressures {
        table.push(vec![
            Cell::Text("pressure".into()),
            Cell::Text(id.to_string()),
            Cell::Float(*p),
        ]);
    }
    for ((tail, head), q) in &solution.edge_flows {
        table.push(vec![
            Cell::Text("edge_flow".into()),
            Cell::Text(format!("{tail}->{head}")),
            Cell::Float(*q),
        ]);
    }
    for (id, q) in &solution.consumer_flows {
        table.push(vec![
            Cell::Text("consumer_flow".into()),
            Cell::Text(id.to_string()),
            Cell::Float(*q),
        ]);
    }
    table.push(vec![
        Cell::Text("root_flow".into()),
        Cell::Text("0".into()),
        Cell::Float(solution.root_flow),
    ]);
    table.push(vec![
        Cell::Text("diagnostic".into()),
        Cell::Text("residual_inf_norm".into()),
        Cell::Float(solution.diagnostics.residual_inf_norm),
    ]);
    table.push(vec![
        Cell::Text("diagnostic".into()),
        Cell::Text("outer_iterations".into()),
        Cell::Int(solution.diagnostics.outer_iterations as i64),
    ]);
    table.push(vec![
        Cell::Text("diagnostic".into()),
        Cell::Text("method".into()),
        Cell::Text(solution.diagnostics.method.as_str().into()),
    ]);
    table
}

/// Grid table of a sweep: `u_<leaf>` coordinates, then the selected
/// outputs ascending by column name (`p_*`, `q_*`, `total`), then an
/// `error` column for rows whose solve failed.
pub fn sweep_table(net: &NetworkSpec, result: &SweepResult, q: QuantitySelection) -> Table {
    let mut columns: Vec<String> = result
        .swept_leaves
        .iter()
        .map(|l| format!("u_{l}"))
        .collect();
    let pressure_ids: Vec<VertexId> = if q.pressures {
        net.vertex_ids().to_vec()
    } else {
        Vec::new()
    };
    let consumer_ids: Vec<VertexId> = if q.per_consumer {
        net.leaves().to_vec()
    } else {
        Vec::new()
    };
    for id in &pressure_ids {
        columns.push(format!("p_{id}"));
    }
    for id in &consumer_ids {
        columns.push(format!("q_{id}"));
    }
    if q.total {
        columns.push("total".into());
    }
    columns.push("error".into());

    let mut table = Table::new(columns);
    for row in &result.rows {
        let mut cells: Vec<Cell> = row
            .coordinates
            .iter()
            .map(|(_, u)| Cell::Float(*u))
            .collect();
        match (&row.outputs, &row.error) {
            (Some(outputs), None) => {
                if q.pressures {
                    let p = outputs.pressures.as_ref().expect("pressures selected");
                    cells.extend(pressure_ids.iter().map(|id| Cell::Float(p[id])));
                }
                if q.per_consumer {
                    let per = outputs.per_consumer.as_ref().expect("per-consumer selected");
                    cells.extend(consumer_ids.iter().map(|id| Cell::Float(per[id])));
                }
                if q.total {
                    cells.push(Cell::Float(outputs.total.expect("total selected")));
                }
                cells.push(Cell::Empty);
            }
            (_, Some(err)) => {
                for _ in 0..(pressure_ids.len()
                    + consumer_ids.len()
                    + usize::from(q.total))
                {
                    cells.push(Cell::Empty);
                }
                cells.push(Cell::Text(err.to_string()));
            }
            (None, None) => unreachable!("rows carry outputs or an error"),
        }
        table.push(cells);
    }
    table
}

/// Per-step table of a group ramp study: step coordinates, per-group
/// inflows ascending by group name, then the total consumer flow.
pub fn group_table(study: &GroupStudy) -> Table {
    let mut order: Vec<usize> = (0..study.group_names.len()).collect();
    order.sort_by(|&a, &b| study.group_names[a].cmp(&study.group_names[b]));

    let mut columns = vec!["step".to_string(), "u".to_string()];
    for &g in &order {
        columns.push(study.group_names[g].clone());
    }
    columns.push("total".into());

    let mut table = Table::new(columns);
    for step in &study.steps {
        let mut cells = vec![Cell::Int(step.step as i64), Cell::Float(step.opening_value)];
        for &g in &order {
            cells.push(Cell::Float(step.group_flows[g]));
        }
        cells.push(Cell::Float(step.total_flow));
        table.push(cells);
    }
    table
}
