//! Table verification: run live probes, compare every incremental-solve and
//! symbolic term count against the hard-coded reference integers.

use std::path::Path;

use serde_json::json;
use t4s_core::deriv::{measure_cost_tables, reference_counts};

use crate::output;

pub struct VerifyReport {
    pub mismatches: Vec<String>,
    pub json: serde_json::Value,
    pub rendered: String,
}

pub fn verify_tables() -> Result<VerifyReport, String> {
    let tables = measure_cost_tables(10).map_err(|e| e.to_string())?;
    let reference = reference_counts();
    let mut mismatches = Vec::new();

    let mut check = |name: &str, measured: &[u64], expected: &[u64]| {
        for (order, (m, e)) in measured.iter().zip(expected).enumerate() {
            if m != e {
                mismatches.push(format!(
                    "{name} order {}: measured {m}, expected {e}",
                    order + 1
                ));
            }
        }
    };
    check(
        "forward sym solves",
        &tables.forward_sym_solves,
        &reference.forward_sym_solves,
    );
    check(
        "forward asym solves",
        &tables.forward_asym_solves,
        &reference.forward_asym_solves,
    );
    check(
        "reverse sym solves",
        &tables.reverse_sym_solves,
        &reference.reverse_sym_solves,
    );
    check(
        "reverse asym solves",
        &tables.reverse_asym_solves,
        &reference.reverse_asym_solves,
    );
    check(
        "forward sym terms",
        &tables.forward_sym_terms,
        &reference.forward_sym_terms,
    );
    check(
        "forward asym terms",
        &tables.forward_asym_terms,
        &reference.forward_asym_terms,
    );

    let mut rendered = String::new();
    rendered.push_str("order | fwd solves asym/sym | rev solves asym/sym | terms asym/sym\n");
    for j in 0..10 {
        rendered.push_str(&format!(
            "{:>5} | {:>10} {:>8} | {:>10} {:>8} | {:>9} {:>6}\n",
            j + 1,
            tables.forward_asym_solves[j],
            tables.forward_sym_solves[j],
            tables.reverse_asym_solves[j],
            tables.reverse_sym_solves[j],
            tables.forward_asym_terms[j],
            tables.forward_sym_terms[j],
        ));
    }
    rendered.push_str(&format!(
        "diagnostic (our adjoint-equation decomposition of the reverse terms): {:?}\n",
        tables.reverse_adjoint_eq_terms
    ));

    let json = json!({
        "forward_sym_solves": tables.forward_sym_solves,
        "forward_asym_solves": tables.forward_asym_solves,
        "reverse_sym_solves": tables.reverse_sym_solves,
        "reverse_asym_solves": tables.reverse_asym_solves,
        "forward_sym_terms": tables.forward_sym_terms,
        "forward_asym_terms": tables.forward_asym_terms,
        "reverse_adjoint_eq_terms_diagnostic": tables.reverse_adjoint_eq_terms,
        "mismatches": mismatches,
    });
    Ok(VerifyReport {
        mismatches,
        json,
        rendered,
    })
}

pub fn run(out_dir: Option<&Path>) -> Result<bool, String> {
    let report = verify_tables()?;
    print!("{}", report.rendered);
    if let Some(dir) = out_dir {
        output::write_file(
            dir,
            "tables.json",
            &format!("{}\n", serde_json::to_string_pretty(&report.json).unwrap()),
        )?;
    }
    if report.mismatches.is_empty() {
        println!("all counts match the reference tables");
        Ok(true)
    } else {
        for m in &report.mismatches {
            eprintln!("MISMATCH: {m}");
        }
        Ok(false)
    }
}
