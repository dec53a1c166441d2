use num_bigint::BigUint;
use num_traits::ToPrimitive;

use super::config::{CancellationConfig, CombinatoricsConfig};
use super::{fmt_f64, CheckResult, Outcome, Table};
use crate::cancellation_oracle::{verify_expansion, verify_general_rule, verify_vanish1, verify_vanish2, Check, Method};
use crate::combinatorics::{
    bound_e, bound_p, compositions_count, compositions_with_min, count_e_bruteforce, count_e_formula,
    count_p_formula, enumerate_p_bruteforce, for_each_tuple, multinomial_sum, support, u_bound_chain, u_exact,
    v_count, v_enumerate, IndexTuple,
};
use crate::error::Result;
use crate::kernels::Kernel;
use crate::rng::{derive_seed, Purpose};

pub const COMBINATORICS_HEADER: [&str; 6] = ["lemma", "parameters", "exact", "formula", "bound", "pass"];
pub const CANCELLATION_HEADER: [&str; 9] = ["check", "I", "J", "n", "method", "value", "error", "tolerance", "pass"];

struct Rows {
    table: Table,
    checks: Vec<CheckResult>,
    corrupt: bool,
}

impl Rows {
    /// The closed form as reported; off by one under the fault hook.
    fn formula(&self, f: BigUint) -> BigUint {
        if self.corrupt {
            f + 1u8
        } else {
            f
        }
    }

    fn push(&mut self, lemma: &str, params: String, exact: &BigUint, formula: Option<&BigUint>, bound: Option<f64>, pass: bool) {
        self.table.push(vec![
            lemma.into(),
            params.clone(),
            exact.to_string(),
            formula.map(|f| f.to_string()).unwrap_or_default(),
            bound.map(fmt_f64).unwrap_or_default(),
            pass.to_string(),
        ]);
        self.checks.push(CheckResult::new(format!("{lemma} {params}"), pass, format!("exact {exact}")));
    }
}

fn as_f64(n: &BigUint) -> f64 {
    n.to_f64().unwrap_or(f64::INFINITY)
}

pub(crate) fn run_combinatorics_verify(c: &CombinatoricsConfig) -> Result<Outcome> {
    let mut rows = Rows {
        table: Table::new("combinatorics", &COMBINATORICS_HEADER),
        checks: Vec::new(),
        corrupt: c.inject_wrong_formula,
    };

    for q in 1..=c.q_max {
        for p in 1..=q.min(c.p_max) {
            let exact = count_e_bruteforce(q, p)?;
            let formula = rows.formula(count_e_formula(q, p));
            let bound = bound_e(q, p)?;
            let pass = exact == formula && as_f64(&exact) <= bound;
            rows.push("effective_set", format!("q={q} p={p}"), &exact, Some(&formula), Some(bound), pass);
        }
    }

    for n in 1..=c.p_n_max {
        for k in 1..=c.p_k_max {
            let mut tuples = Vec::new();
            for_each_tuple(n, 2 * k, |t| tuples.push(t.to_vec()))?;
            for t in tuples {
                let i = IndexTuple::new(t, n)?;
                if !i.is_effective() {
                    continue;
                }
                let l = support(&i).len();
                let exact = enumerate_p_bruteforce(&i, k)?;
                let formula = rows.formula(count_p_formula(l, n, k)?);
                let bound = (3 * k <= n).then(|| bound_p(n, k));
                let pass = exact == formula && bound.is_none_or(|b| as_f64(&exact) <= b);
                let label: Vec<String> = i.entries().iter().map(|e| e.to_string()).collect();
                let params = format!("N={n} k={k} I={}", label.join(" "));
                rows.push("admissible_set", params, &exact, Some(&formula), bound, pass);
            }
        }
    }

    for q in 1..=c.compositions_q_max {
        for p in 1..=q.min(c.compositions_p_max) {
            let exact = BigUint::from(compositions_with_min(q, p, 1).len());
            let formula = rows.formula(compositions_count(q, p)?);
            let pass = exact == formula;
            rows.push("compositions", format!("q={q} p={p}"), &exact, Some(&formula), None, pass);
        }
    }

    for k in 1..=c.u_k_max {
        for l in 1..=k {
            let exact = u_exact(k, l)?;
            let (mid, top) = u_bound_chain(k, l)?;
            let pass = as_f64(&exact) <= mid && mid <= top;
            rows.push("weighted_signatures", format!("k={k} l={l}"), &exact, None, Some(top), pass);
        }
    }

    for n in 1..=c.v_n_max {
        for k in 1..=c.v_k_max {
            let exact = v_enumerate(n, k)?;
            let formula = rows.formula(v_count(n, k)?);
            let pass = exact == formula;
            rows.push("multisets", format!("N={n} k={k}"), &exact, Some(&formula), None, pass);
        }
    }

    for l in 1..=c.multinomial_l_max {
        for p in 1..=c.multinomial_p_max {
            let exact = multinomial_sum(l, p);
            let formula = rows.formula(BigUint::from(l).pow(p as u32));
            let pass = exact == formula;
            rows.push("multinomial", format!("l={l} p={p}"), &exact, Some(&formula), None, pass);
        }
    }

    Ok(Outcome {
        tables: vec![rows.table],
        checks: rows.checks,
    })
}

fn labels(t: &[usize]) -> String {
    t.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(" ")
}

fn cancellation_row(table: &mut Table, checks: &mut Vec<CheckResult>, c: &Check) {
    table.push(vec![
        c.check.clone(),
        labels(&c.i),
        labels(&c.j),
        c.n.to_string(),
        c.method.into(),
        fmt_f64(c.value),
        fmt_f64(c.error),
        fmt_f64(c.tolerance),
        c.pass.to_string(),
    ]);
    checks.push(CheckResult::new(
        format!("{} n={} I=[{}] J=[{}] {}", c.check, c.n, labels(&c.i), labels(&c.j), c.method),
        c.pass,
        format!("value {:e}, tolerance {:e}", c.value, c.tolerance),
    ));
}

pub(crate) fn run_cancellation_verify(c: &CancellationConfig, seed: u64) -> Result<Outcome> {
    let law = c.law.build()?;
    let kernel = Kernel::on_torus_1d(c.kernel)?;
    let law = law.as_ref();
    let mut table = Table::new("cancellation", &CANCELLATION_HEADER);
    let mut checks = Vec::new();
    let mut stream = 0u64;
    let mut mc = || {
        stream += 1;
        Method::MonteCarlo {
            samples: c.samples,
            seed: derive_seed(seed, Purpose::Oracle, stream),
        }
    };
    let mut rows: Vec<Check> = Vec::new();
    if c.rule_p_max > 0 {
        for n in 1..=c.rule_n {
            rows.extend(verify_general_rule(law, &kernel, n, c.rule_p_max)?);
        }
    }
    for &n in &c.vanish1_quadrature_n {
        rows.push(verify_vanish1(law, &kernel, n, Method::Quadrature)?);
    }
    for &n in &c.vanish1_mc_n {
        rows.push(verify_vanish1(law, &kernel, n, mc())?);
    }
    for &n in &c.vanish2_quadrature_n {
        rows.extend(verify_vanish2(law, &kernel, n, Method::Quadrature)?);
    }
    for &n in &c.vanish2_mc_n {
        rows.extend(verify_vanish2(law, &kernel, n, mc())?);
    }
    for &n in &c.expansion_n {
        let Method::MonteCarlo { seed: s, .. } = mc() else { unreachable!() };
        rows.extend(verify_expansion(law, &kernel, n, 1, c.samples, s)?.checks);
    }
    for r in &rows {
        cancellation_row(&mut table, &mut checks, r);
    }
    Ok(Outcome {
        tables: vec![table],
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CombinatoricsConfig {
        CombinatoricsConfig {
            q_max: 4,
            p_max: 4,
            p_n_max: 3,
            p_k_max: 1,
            compositions_q_max: 5,
            compositions_p_max: 3,
            u_k_max: 3,
            v_n_max: 3,
            v_k_max: 2,
            multinomial_l_max: 3,
            multinomial_p_max: 4,
            inject_wrong_formula: false,
        }
    }

    #[test]
    fn small_grid_passes() {
        let out = run_combinatorics_verify(&small()).unwrap();
        assert!(!out.checks.is_empty());
        assert!(out.checks.iter().all(|c| c.pass), "{:?}", out.checks.iter().find(|c| !c.pass));
        let t = &out.tables[0];
        assert_eq!(t.header, COMBINATORICS_HEADER);
        // E_{3,2}: three tuples (a, a)
        let row = t.rows.iter().find(|r| r[0] == "effective_set" && r[1] == "q=3 p=2").unwrap();
        assert_eq!((row[2].as_str(), row[3].as_str()), ("3", "3"));
    }

    #[test]
    fn injected_fault_fails_formula_rows() {
        let out = run_combinatorics_verify(&CombinatoricsConfig {
            inject_wrong_formula: true,
            ..small()
        })
        .unwrap();
        let t = &out.tables[0];
        for (row, check) in t.rows.iter().zip(&out.checks) {
            let has_formula = !row[3].is_empty();
            assert_eq!(check.pass, !has_formula, "{row:?}");
        }
    }

    #[test]
    fn cancellation_small_grid() {
        let c = CancellationConfig {
            rule_n: 2,
            rule_p_max: 2,
            vanish1_quadrature_n: vec![2],
            vanish1_mc_n: vec![5],
            vanish2_quadrature_n: vec![2],
            vanish2_mc_n: vec![],
            expansion_n: vec![2],
            samples: 20_000,
            ..Default::default()
        };
        let out = run_cancellation_verify(&c, 1).unwrap();
        assert!(out.checks.iter().all(|c| c.pass), "{:?}", out.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>());
        assert_eq!(out.tables[0].header, CANCELLATION_HEADER);
        assert!(out.tables[0].rows.iter().any(|r| r[0] == "rule_single_j"));
    }
}
