//! Covariates computed from per-dimension node attributes.
//!
//! A formula spec is a `;`-separated list of `key=value` items. Keys `d1`,
//! `d2`, ... name attribute files for that dimension; every other key defines
//! one feature, in order, as an expression over variables `dK.attr` and
//! `dK.node`:
//!
//! ```text
//! d1=origins.csv;d2=destinations.csv;same_city=d1.city==d2.city;dist=math::abs(d1.x-d2.x)
//! ```
//!
//! Attribute files have header `node,attr1,...`; values that parse as numbers
//! are numeric, the rest are strings. Boolean results map to 1 and 0.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use evalexpr::{
    build_operator_tree, Context, DefaultNumericTypes, EvalexprError, EvalexprResult, Node, Value,
};

use crate::covariates::CovariateProvider;
use crate::error::{file_error, PolyadsError, Result};

type V = Value<DefaultNumericTypes>;

#[derive(Clone, Debug, Default)]
struct AttributeTable {
    columns: HashMap<String, usize>,
    /// `rows[node - 1][column]`; `None` for nodes absent from the file.
    rows: Vec<Option<Vec<V>>>,
}

impl AttributeTable {
    fn parse(text: &str, source: &str, n_nodes: u32) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = rdr
            .headers()
            .map_err(|e| PolyadsError::parse(format!("{source}:1"), e.to_string()))?
            .clone();
        if header.get(0) != Some("node") {
            return Err(PolyadsError::parse(
                format!("{source}:1"),
                "first column must be named node",
            ));
        }
        let columns: HashMap<String, usize> = header
            .iter()
            .skip(1)
            .enumerate()
            .map(|(k, name)| (name.to_string(), k))
            .collect();
        let mut rows = vec![None; n_nodes as usize];
        for row in rdr.records() {
            let row = row.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                PolyadsError::parse(format!("{source}:{line}"), e.to_string())
            })?;
            let line = row.position().map_or(0, |p| p.line());
            let node = row[0]
                .parse::<u32>()
                .ok()
                .filter(|&v| v >= 1 && v <= n_nodes)
                .ok_or_else(|| {
                    PolyadsError::parse(
                        format!("{source}:{line}"),
                        format!("node {:?} outside 1..={n_nodes}", &row[0]),
                    )
                })?;
            let values = row
                .iter()
                .skip(1)
                .map(|v| match v.parse::<f64>() {
                    Ok(x) => V::from_float(x),
                    Err(_) => V::String(v.to_string()),
                })
                .collect();
            rows[node as usize - 1] = Some(values);
        }
        Ok(Self { columns, rows })
    }
}

/// Variables visible to one evaluation.
struct EdgeContext<'a> {
    tables: &'a [AttributeTable],
    nodes: &'a [Vec<V>],
    edge: &'a [u32],
}

impl EdgeContext<'_> {
    fn lookup(&self, identifier: &str) -> Option<&V> {
        let (dim, attr) = identifier.strip_prefix('d')?.split_once('.')?;
        let k = dim.parse::<usize>().ok()?.checked_sub(1)?;
        let node = *self.edge.get(k)? as usize;
        if attr == "node" {
            return self.nodes[k].get(node - 1);
        }
        let table = self.tables.get(k)?;
        let col = *table.columns.get(attr)?;
        table.rows.get(node - 1)?.as_ref()?.get(col)
    }
}

impl Context for EdgeContext<'_> {
    type NumericTypes = DefaultNumericTypes;

    fn get_value(&self, identifier: &str) -> Option<&V> {
        self.lookup(identifier)
    }

    fn call_function(
        &self,
        identifier: &str,
        _argument: &V,
    ) -> EvalexprResult<V, DefaultNumericTypes> {
        Err(EvalexprError::FunctionIdentifierNotFound(
            identifier.to_string(),
        ))
    }

    fn are_builtin_functions_disabled(&self) -> bool {
        false
    }

    fn set_builtin_functions_disabled(
        &mut self,
        disabled: bool,
    ) -> EvalexprResult<(), DefaultNumericTypes> {
        if disabled {
            Err(EvalexprError::CustomMessage(
                "builtin functions stay enabled".into(),
            ))
        } else {
            Ok(())
        }
    }
}

pub struct FormulaCovariates {
    names: Vec<String>,
    exprs: Vec<Node<DefaultNumericTypes>>,
    tables: Vec<AttributeTable>,
    nodes: Vec<Vec<V>>,
}

impl FormulaCovariates {
    /// Parses a spec; attribute paths are resolved against `base`.
    pub fn parse(spec: &str, dims: &[u32], base: &Path) -> Result<Self> {
        let mut files: Vec<Option<PathBuf>> = vec![None; dims.len()];
        let mut names = Vec::new();
        let mut exprs = Vec::new();
        for item in spec.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = item.split_once('=').ok_or_else(|| {
                PolyadsError::parse("formula", format!("{item:?} is not key=value"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let dim = key.strip_prefix('d').and_then(|k| k.parse::<usize>().ok());
            match dim {
                Some(k) if (1..=dims.len()).contains(&k) => files[k - 1] = Some(base.join(value)),
                Some(k) => {
                    return Err(PolyadsError::parse(
                        "formula",
                        format!(
                            "attribute file for d{k} but the graph has {} dimensions",
                            dims.len()
                        ),
                    ))
                }
                None => {
                    let tree = build_operator_tree::<DefaultNumericTypes>(value).map_err(|e| {
                        PolyadsError::parse("formula", format!("feature {key}: {e}"))
                    })?;
                    names.push(key.to_string());
                    exprs.push(tree);
                }
            }
        }
        let mut tables = Vec::with_capacity(dims.len());
        for (k, file) in files.iter().enumerate() {
            tables.push(match file {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(file_error(path))?;
                    AttributeTable::parse(&text, &path.display().to_string(), dims[k])?
                }
                None => AttributeTable::default(),
            });
        }
        Self::from_parts(names, exprs, tables, dims)
    }

    fn from_parts(
        names: Vec<String>,
        exprs: Vec<Node<DefaultNumericTypes>>,
        tables: Vec<AttributeTable>,
        dims: &[u32],
    ) -> Result<Self> {
        if exprs.is_empty() {
            return Err(PolyadsError::parse("formula", "no feature expressions"));
        }
        let nodes = dims
            .iter()
            .map(|&n| (1..=n).map(|v| V::from_float(v as f64)).collect())
            .collect();
        Ok(Self {
            names,
            exprs,
            tables,
            nodes,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Evaluates every feature at `edge`, reporting why a value is missing.
    pub fn evaluate(&self, edge: &[u32]) -> Result<Vec<f64>> {
        if edge.len() != self.nodes.len()
            || edge
                .iter()
                .zip(&self.nodes)
                .any(|(&c, n)| c == 0 || c as usize > n.len())
        {
            return Err(PolyadsError::DimensionMismatch(format!(
                "edge {edge:?} outside the formula grid"
            )));
        }
        let ctx = EdgeContext {
            tables: &self.tables,
            nodes: &self.nodes,
            edge,
        };
        self.exprs
            .iter()
            .zip(&self.names)
            .map(|(expr, name)| {
                let value = expr.eval_with_context(&ctx).map_err(|e| {
                    PolyadsError::InvalidParameter(format!("feature {name} at {edge:?}: {e}"))
                })?;
                match value {
                    Value::Float(x) => Ok(x),
                    Value::Int(x) => Ok(x as f64),
                    Value::Boolean(b) => Ok(if b { 1.0 } else { 0.0 }),
                    other => Err(PolyadsError::InvalidParameter(format!(
                        "feature {name} at {edge:?} is not numeric: {other}"
                    ))),
                }
            })
            .collect()
    }
}

impl CovariateProvider for FormulaCovariates {
    fn dim(&self) -> usize {
        self.exprs.len()
    }

    fn fill(&self, edge: &[u32], out: &mut [f64]) -> bool {
        match self.evaluate(edge) {
            Ok(x) if x.iter().all(|v| v.is_finite()) => {
                out.copy_from_slice(&x);
                true
            }
            _ => false,
        }
    }
}
