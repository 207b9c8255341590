//! JSON formats for spaces, variables, measures and dividend processes.
//!
//! Numbers are written with the shortest representation that round-trips
//! exactly; infinities are written as the strings `"inf"` and `"-inf"`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::de::{self, DeserializeOwned, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

use crate::dividends::DividendProcess;
use crate::error::{Error, Result};
use crate::lattice::{ExtReal, FilteredSpace, TVar, XVar};
use crate::measures::{Denominator, MeasureKind, MeasureSpec, PerformanceMeasure, RiskAversion, UtilitySpec};
use crate::scalar::Scalar;

/// An `f64` that serializes infinities as `"inf"`/`"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Num(pub f64);

impl Num {
    pub fn of<S: Scalar>(x: ExtReal<S>) -> Self {
        Num(x.get().as_f64())
    }

    pub fn to_ext<S: Scalar>(self) -> Result<ExtReal<S>> {
        ExtReal::new(S::lit(self.0))
    }
}

/// Converts a slice of extended reals for serialization.
pub fn nums<S: Scalar>(xs: &[ExtReal<S>]) -> Vec<Num> {
    xs.iter().map(|&x| Num::of(x)).collect()
}

impl Serialize for Num {
    fn serialize<Se: Serializer>(&self, s: Se) -> std::result::Result<Se::Ok, Se::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Num;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"inf\"/\"-inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Num, E> {
                Ok(Num(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Num, E> {
                Ok(Num(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Num, E> {
                Ok(Num(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Num, E> {
                match v {
                    "inf" | "+inf" => Ok(Num(f64::INFINITY)),
                    "-inf" => Ok(Num(f64::NEG_INFINITY)),
                    _ => v.parse::<f64>().map(Num).map_err(|_| E::custom(format!("bad number {v:?}"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

pub fn parse_err(what: &str, e: serde_json::Error) -> Error {
    Error::Parse(format!("{what}: {e} (line {}, column {})", e.line(), e.column()))
}

pub type NumMap = BTreeMap<String, Num>;

fn parse<T: DeserializeOwned>(what: &str, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| parse_err(what, e))
}

fn from_value<T: DeserializeOwned>(what: &str, v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

/// Pretty JSON with a trailing newline.
pub fn to_pretty<T: Serialize + ?Sized>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LeafDoc {
    id: String,
    p: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    times: Vec<usize>,
    leaves: Vec<LeafDoc>,
    atoms: BTreeMap<String, Vec<Vec<String>>>,
}

/// A space read from JSON together with its optional name.
#[derive(Debug, Clone)]
pub struct NamedSpace<S> {
    pub name: Option<String>,
    pub space: Arc<FilteredSpace<S>>,
}

/// `{"times":[0,..,T], "leaves":[{"id","p"}], "atoms":{"t":[[leaf ids]]}}`.
/// Stage 0 and stage `T` may be omitted from `atoms`; they default to the
/// root and the singletons.
pub fn space_from_json<S: Scalar>(text: &str) -> Result<NamedSpace<S>> {
    let doc: SpaceDoc = parse("space", text)?;
    if doc.times.is_empty() || doc.times.iter().enumerate().any(|(i, t)| *t != i) {
        return Err(Error::InvalidSpace(format!("times must be 0, 1, .., T; got {:?}", doc.times)));
    }
    let last = doc.times.len() - 1;
    let index: BTreeMap<&str, usize> = doc.leaves.iter().enumerate().map(|(i, l)| (l.id.as_str(), i)).collect();
    for key in doc.atoms.keys() {
        match key.parse::<usize>() {
            Ok(t) if t <= last => {}
            _ => return Err(Error::InvalidSpace(format!("atoms given for unknown stage {key:?}"))),
        }
    }
    let n = doc.leaves.len();
    let mut parts = Vec::with_capacity(last + 1);
    for t in 0..=last {
        let part = match doc.atoms.get(&t.to_string()) {
            Some(atoms) => atoms
                .iter()
                .map(|a| {
                    a.iter()
                        .map(|id| {
                            index.get(id.as_str()).copied().ok_or_else(|| {
                                Error::InvalidSpace(format!("atoms.{t}: unknown leaf id {id:?}"))
                            })
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?,
            None if t == 0 => vec![(0..n).collect()],
            None if t == last => (0..n).map(|i| vec![i]).collect(),
            None => return Err(Error::InvalidSpace(format!("atoms missing for stage {t}"))),
        };
        parts.push(part);
    }
    let leaves = doc.leaves.into_iter().map(|l| (l.id, S::lit(l.p))).collect();
    Ok(NamedSpace {
        name: doc.name,
        space: Arc::new(FilteredSpace::new(leaves, parts)?),
    })
}

pub fn space_to_json<S: Scalar>(space: &FilteredSpace<S>, name: Option<&str>) -> String {
    let ids = space.leaf_ids();
    let doc = SpaceDoc {
        name: name.map(str::to_string),
        times: (0..=space.last_stage()).collect(),
        leaves: ids.iter().zip(space.probs()).map(|(id, p)| LeafDoc { id: id.clone(), p: p.as_f64() }).collect(),
        atoms: space
            .partitions()
            .into_iter()
            .enumerate()
            .map(|(t, part)| (t.to_string(), part.into_iter().map(|a| a.into_iter().map(|l| ids[l].clone()).collect()).collect()))
            .collect(),
    };
    to_pretty(&doc)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VarDoc {
    #[serde(default)]
    space: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stage: Option<usize>,
    values: NumMap,
}

fn check_space_name(found: Option<&str>, expected: Option<&str>) -> Result<()> {
    match (found, expected) {
        (Some(a), Some(b)) if a != b => Err(Error::InvalidValue(format!("refers to space {a:?}, but space {b:?} was given"))),
        _ => Ok(()),
    }
}

/// `{"space": name, "values": {leaf id: num | "inf" | "-inf"}}`; every
/// leaf must be given exactly once.
pub fn xvar_from_json<S: Scalar>(text: &str, space: &NamedSpace<S>) -> Result<XVar<S>> {
    let doc: VarDoc = parse("variable", text)?;
    check_space_name(doc.space.as_deref(), space.name.as_deref())?;
    let sp = &space.space;
    let mut vals = vec![None; sp.num_leaves()];
    for (id, v) in &doc.values {
        let l = sp.leaf_index(id).ok_or_else(|| Error::InvalidValue(format!("values: unknown leaf id {id:?}")))?;
        vals[l] = Some(v.to_ext::<S>()?);
    }
    let vals = vals
        .into_iter()
        .enumerate()
        .map(|(l, v)| v.ok_or_else(|| Error::InvalidValue(format!("values: leaf {:?} missing", sp.leaf_ids()[l]))))
        .collect::<Result<Vec<_>>>()?;
    XVar::from_ext(sp.clone(), vals)
}

pub fn xvar_to_json<S: Scalar>(x: &XVar<S>, space_name: Option<&str>) -> String {
    let ids = x.space().leaf_ids();
    to_pretty(&VarDoc {
        space: space_name.map(str::to_string),
        stage: None,
        values: ids.iter().zip(x.values()).map(|(id, v)| (id.clone(), Num::of(*v))).collect(),
    })
}

/// Stage variables are keyed by atom id `"t:k"`.
pub fn tvar_to_value<S: Scalar>(v: &TVar<S>) -> Value {
    let sp = v.space();
    let vals: NumMap = (0..sp.num_atoms(v.stage())).map(|a| (sp.atom_id(v.stage(), a), Num::of(v.get(a)))).collect();
    json!({"stage": v.stage(), "values": vals})
}

/// Values keyed by atom ids or leaf ids; a leaf id stands for its atom.
fn stage_values<S: Scalar>(space: &FilteredSpace<S>, t: usize, map: &NumMap, what: &str) -> Result<Vec<ExtReal<S>>> {
    let mut vals: Vec<Option<ExtReal<S>>> = vec![None; space.num_atoms(t)];
    for (key, v) in map {
        let a = space.resolve_atom(t, key).map_err(|e| Error::InvalidValue(format!("{what}: {e}")))?;
        let v = v.to_ext::<S>()?;
        match vals[a] {
            Some(w) if w != v => {
                return Err(Error::InvalidValue(format!(
                    "{what}: conflicting values {w} and {v} for atom {}",
                    space.atom_id(t, a)
                )))
            }
            _ => vals[a] = Some(v),
        }
    }
    vals.into_iter()
        .enumerate()
        .map(|(a, v)| v.ok_or_else(|| Error::InvalidValue(format!("{what}: no value for atom {}", space.atom_id(t, a)))))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DividendDoc {
    #[serde(default)]
    space: Option<String>,
    payments: BTreeMap<String, NumMap>,
}

/// `{"space": name, "payments": {"t": {atom or leaf id: num | "inf"}}}`.
pub fn dividend_from_json<S: Scalar>(text: &str, space: &NamedSpace<S>) -> Result<DividendProcess<S>> {
    let doc: DividendDoc = parse("dividend process", text)?;
    check_space_name(doc.space.as_deref(), space.name.as_deref())?;
    let sp = &space.space;
    let payments = doc
        .payments
        .iter()
        .map(|(key, map)| {
            let t: usize = key
                .parse()
                .map_err(|_| Error::InvalidValue(format!("payments: stage key {key:?} is not an integer")))?;
            sp.check_stage(t)?;
            TVar::new(sp.clone(), t, stage_values(sp, t, map, &format!("payments.{t}"))?)
        })
        .collect::<Result<Vec<_>>>()?;
    DividendProcess::new(sp.clone(), payments)
}

pub fn dividend_to_json<S: Scalar>(d: &DividendProcess<S>, space_name: Option<&str>) -> String {
    let sp = d.space();
    let payments: BTreeMap<String, NumMap> = d
        .payments()
        .iter()
        .map(|(t, p)| (t.to_string(), (0..sp.num_atoms(*t)).map(|a| (sp.atom_id(*t, a), Num::of(p.get(a)))).collect()))
        .collect();
    to_pretty(&DividendDoc {
        space: space_name.map(str::to_string),
        payments,
    })
}

fn utility_value<S: Scalar>(u: &UtilitySpec<S>) -> Value {
    match u {
        UtilitySpec::Linear => json!({"type": "linear"}),
        UtilitySpec::Exponential { lambda } => json!({"type": "exponential", "lambda": lambda.as_f64()}),
        UtilitySpec::Power { eta } => json!({"type": "power", "eta": eta.as_f64()}),
        UtilitySpec::PiecewiseLinear { knots } => json!({
            "type": "piecewise_linear",
            "knots": knots.iter().map(|(x, y)| [x.as_f64(), y.as_f64()]).collect::<Vec<_>>(),
        }),
    }
}

fn utility_from<S: Scalar>(v: Value, what: &str) -> Result<UtilitySpec<S>> {
    let u: UtilitySpec<f64> = from_value(what, v)?;
    Ok(match u {
        UtilitySpec::Linear => UtilitySpec::Linear,
        UtilitySpec::Exponential { lambda } => UtilitySpec::Exponential { lambda: S::lit(lambda) },
        UtilitySpec::Power { eta } => UtilitySpec::Power { eta: S::lit(eta) },
        UtilitySpec::PiecewiseLinear { knots } => UtilitySpec::PiecewiseLinear {
            knots: knots.into_iter().map(|(x, y)| (S::lit(x), S::lit(y))).collect(),
        },
    })
}

fn leaf_values<S: Scalar>(space: Option<&FilteredSpace<S>>, v: Value, what: &str) -> Result<Vec<S>> {
    let sp = space.ok_or_else(|| Error::InvalidMeasure(format!("{what} is keyed by leaf ids and needs a space")))?;
    let map: NumMap = from_value(what, v)?;
    let x = stage_values(sp, sp.last_stage(), &map, what)?;
    x.into_iter()
        .map(|v| if v.is_finite() { Ok(v.get()) } else { Err(Error::InvalidMeasure(format!("{what} must be finite"))) })
        .collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureDoc {
    kind: String,
    #[serde(default)]
    params: serde_json::Map<String, Value>,
    #[serde(default)]
    z_d: Option<Num>,
    #[serde(default)]
    z_u: Option<Num>,
}

/// `{"kind", "params", "z_d", "z_u"}`.
///
/// Kinds and parameters:
/// - `glr`: none
/// - `cond_expectation`: optional `q` (leaf id → weight)
/// - `exp_utility`: `lambda`, a number or one array per stage of per-atom
///   values
/// - `expected_utility`: `utility`, or `utilities` (leaf id → utility);
///   optional `endowment` (leaf id → number)
/// - `certainty_equivalent`: `utility`
/// - `lpm_ratio`: `p`; optional `utility` (default linear)
/// - `avar_ratio`: `level`; optional `utility` (default linear)
///
/// Every kind accepts `eps_strict`, and the ratio kinds accept
/// `infinite_on_nonpositive_risk`. Utilities are objects tagged by
/// `type` (`linear`, `exponential`, `power`, `piecewise_linear`). The
/// bounds `z_d`, `z_u` are optional and, when given, must match the
/// measure. Leaf-keyed parameters need `space`.
pub fn measure_from_json<S: Scalar>(text: &str, space: Option<&FilteredSpace<S>>) -> Result<MeasureSpec<S>> {
    let doc: MeasureDoc = parse("measure", text)?;
    let mut p = doc.params;
    let mut take = |k: &str| p.remove(k);
    let num = |v: Option<Value>, k: &str| -> Result<S> {
        let v = v.ok_or_else(|| Error::InvalidMeasure(format!("{}: missing parameter {k:?}", doc.kind)))?;
        Ok(S::lit(from_value::<f64>(k, v)?))
    };
    let eps = take("eps_strict");
    let inf_risk = take("infinite_on_nonpositive_risk");
    let kind = match doc.kind.as_str() {
        "glr" => MeasureKind::Glr,
        "cond_expectation" => MeasureKind::CondExpectation {
            q: take("q").map(|v| leaf_values(space, v, "q")).transpose()?,
        },
        "exp_utility" => {
            let v = take("lambda").ok_or_else(|| Error::InvalidMeasure("exp_utility: missing parameter \"lambda\"".into()))?;
            let lambda = if v.is_number() {
                RiskAversion::Constant(num(Some(v), "lambda")?)
            } else {
                let raw: Vec<Vec<f64>> = from_value("lambda", v)?;
                RiskAversion::Process(raw.into_iter().map(|r| r.into_iter().map(S::lit).collect()).collect())
            };
            MeasureKind::ExponentialUtility { lambda }
        }
        "expected_utility" => {
            let utilities = match (take("utility"), take("utilities")) {
                (Some(u), None) => vec![utility_from(u, "utility")?],
                (None, Some(us)) => {
                    let sp = space.ok_or_else(|| Error::InvalidMeasure("utilities are keyed by leaf ids and need a space".into()))?;
                    let mut map: BTreeMap<String, Value> = from_value("utilities", us)?;
                    sp.leaf_ids()
                        .iter()
                        .map(|id| {
                            let u = map.remove(id).ok_or_else(|| Error::InvalidMeasure(format!("utilities: leaf {id:?} missing")))?;
                            utility_from(u, "utilities")
                        })
                        .collect::<Result<Vec<_>>>()?
                }
                _ => return Err(Error::InvalidMeasure("expected_utility needs exactly one of \"utility\", \"utilities\"".into())),
            };
            MeasureKind::ExpectedUtility {
                utilities,
                endowment: take("endowment").map(|v| leaf_values(space, v, "endowment")).transpose()?,
            }
        }
        "certainty_equivalent" => MeasureKind::CertaintyEquivalent {
            utility: utility_from(
                take("utility").ok_or_else(|| Error::InvalidMeasure("certainty_equivalent: missing parameter \"utility\"".into()))?,
                "utility",
            )?,
        },
        "lpm_ratio" | "avar_ratio" => {
            let utility = take("utility").map(|u| utility_from(u, "utility")).transpose()?.unwrap_or(UtilitySpec::Linear);
            let denominator = if doc.kind == "lpm_ratio" {
                Denominator::Lpm { p: num(take("p"), "p")? }
            } else {
                Denominator::AvarTrunc {
                    level: num(take("level"), "level")?,
                }
            };
            MeasureKind::RewardRisk {
                utility,
                denominator,
                infinite_on_nonpositive_risk: inf_risk.clone().map(|v| from_value("infinite_on_nonpositive_risk", v)).transpose()?.unwrap_or(false),
            }
        }
        other => return Err(Error::InvalidMeasure(format!("unknown measure kind {other:?}"))),
    };
    if !matches!(kind, MeasureKind::RewardRisk { .. }) && inf_risk.is_some() {
        return Err(Error::InvalidMeasure(format!("{}: unknown parameter \"infinite_on_nonpositive_risk\"", doc.kind)));
    }
    if let Some(k) = p.keys().next() {
        return Err(Error::InvalidMeasure(format!("{}: unknown parameter {k:?}", doc.kind)));
    }
    let mut m = MeasureSpec::new(kind)?;
    if let Some(e) = eps {
        m = m.with_eps_strict(S::lit(from_value::<f64>("eps_strict", e)?))?;
    }
    if let Some(sp) = space {
        m.validate_for(sp)?;
    }
    let (zd, zu) = m.bounds();
    for (given, actual, name) in [(doc.z_d, zd, "z_d"), (doc.z_u, zu, "z_u")] {
        if let Some(g) = given {
            if g.0 != actual.get().as_f64() {
                return Err(Error::InvalidMeasure(format!("{name} is {actual} for this measure, file says {}", g.0)));
            }
        }
    }
    Ok(m)
}

/// Inverse of [`measure_from_json`]; leaf-keyed parameters use the leaf
/// ids of `space`.
pub fn measure_to_value<S: Scalar>(m: &MeasureSpec<S>, space: Option<&FilteredSpace<S>>) -> Result<Value> {
    let leafwise = |v: &[S], what: &str| -> Result<Value> {
        let sp = space.ok_or_else(|| Error::InvalidMeasure(format!("{what} is keyed by leaf ids and needs a space")))?;
        Ok(Value::Object(sp.leaf_ids().iter().zip(v).map(|(id, x)| (id.clone(), json!(x.as_f64()))).collect()))
    };
    let (kind, mut params) = match &m.kind {
        MeasureKind::Glr => ("glr", json!({})),
        MeasureKind::CondExpectation { q } => (
            "cond_expectation",
            match q {
                Some(q) => json!({"q": leafwise(q, "q")?}),
                None => json!({}),
            },
        ),
        MeasureKind::ExponentialUtility { lambda } => (
            "exp_utility",
            match lambda {
                RiskAversion::Constant(l) => json!({"lambda": l.as_f64()}),
                RiskAversion::Process(p) => {
                    json!({"lambda": p.iter().map(|r| r.iter().map(|v| v.as_f64()).collect::<Vec<_>>()).collect::<Vec<_>>()})
                }
            },
        ),
        MeasureKind::ExpectedUtility { utilities, endowment } => {
            let mut o = if utilities.len() == 1 {
                json!({"utility": utility_value(&utilities[0])})
            } else {
                let sp = space.ok_or_else(|| Error::InvalidMeasure("utilities are keyed by leaf ids and need a space".into()))?;
                json!({"utilities": Value::Object(sp.leaf_ids().iter().zip(utilities).map(|(id, u)| (id.clone(), utility_value(u))).collect())})
            };
            if let Some(w) = endowment {
                o["endowment"] = leafwise(w, "endowment")?;
            }
            ("expected_utility", o)
        }
        MeasureKind::CertaintyEquivalent { utility } => ("certainty_equivalent", json!({"utility": utility_value(utility)})),
        MeasureKind::RewardRisk {
            utility,
            denominator,
            infinite_on_nonpositive_risk,
        } => {
            let (k, mut o) = match denominator {
                Denominator::Lpm { p } => ("lpm_ratio", json!({"p": p.as_f64()})),
                Denominator::AvarTrunc { level } => ("avar_ratio", json!({"level": level.as_f64()})),
            };
            if *utility != UtilitySpec::Linear {
                o["utility"] = utility_value(utility);
            }
            if *infinite_on_nonpositive_risk {
                o["infinite_on_nonpositive_risk"] = json!(true);
            }
            (k, o)
        }
    };
    if m.eps_strict != S::lit(crate::measures::EPS_STRICT) {
        params["eps_strict"] = json!(m.eps_strict.as_f64());
    }
    let (zd, zu) = m.bounds();
    Ok(json!({"kind": kind, "params": params, "z_d": Num::of(zd), "z_u": Num::of(zu)}))
}
