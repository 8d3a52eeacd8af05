//! Regime table: rate orders, the envelope each regime is certified against,
//! and the built-in experiment instantiating it.

use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub assumption: &'static str,
    pub values: &'static str,
    pub iterates: &'static str,
    /// Envelope as evaluated by the rates module.
    pub envelope: &'static str,
    pub experiment: &'static str,
}

pub fn rows() -> Vec<Row> {
    vec![
        Row {
            assumption: "inf f > -inf",
            values: "o(1)",
            iterates: "---",
            envelope: "none (monotone decrease only)",
            experiment: "counterexample_neg_alpha",
        },
        Row {
            assumption: "p in ]-inf,0[",
            values: "O(n^{p/(2-p)})",
            iterates: "---",
            envelope: "min(r0, C'^{p/(p-2)} n^{-p/(p-2)})",
            experiment: "counterexample_neg_alpha",
        },
        Row {
            assumption: "argmin f nonempty",
            values: "o(n^{-1})",
            iterates: "decreasing, o(1) in finite dimension",
            envelope: "C dist_0^2 / (2 lambda n)",
            experiment: "lasso_small",
        },
        Row {
            assumption: "p in ]2,+inf[",
            values: "O(n^{-p/(p-2)})",
            iterates: "O(n^{-1/(p-2)})",
            envelope: "min(r0, C'^{p/(p-2)} n^{-p/(p-2)})",
            experiment: "landweber_source",
        },
        Row {
            assumption: "p = 2",
            values: "Q-linear with ε=1/(1+κ)",
            iterates: "R-linear with ε=1/(1+κ)",
            envelope: "r0 / (1+kappa)^n",
            experiment: "strongly_convex_quadratic",
        },
        Row {
            assumption: "p in ]1,2[",
            values: "Q-superlinear of order 1/(p-1)",
            iterates: "R-superlinear of order 1/(p-1)",
            envelope: "e_{n+1} = min(e_n, (e_n/kappa)^{p/(2(p-1))})",
            experiment: "norm_pow_p",
        },
        Row {
            assumption: "p = 1",
            values: "finite",
            iterates: "finite",
            envelope: "max(r0 - n kappa, 0), zero after ceil(r0/kappa) steps",
            experiment: "norm_pow_p",
        },
    ]
}

/// Markdown table: a header row followed by one row per regime.
pub fn render(rows: &[Row]) -> String {
    let mut out = String::from("| assumption | f(x_n) - inf f | ||x_n - x_inf|| | envelope | experiment |\n");
    out.push_str("|---|---|---|---|---|\n");
    for r in rows {
        out.push_str(&format!("| {} | {} | {} | {} | {} |\n", r.assumption, r.values, r.iterates, r.envelope, r.experiment));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_rows_with_header() {
        let t = render(&rows());
        let lines: Vec<&str> = t.lines().filter(|l| !l.starts_with("|---")).collect();
        assert_eq!(lines.len(), 8);
    }

    #[test]
    fn key_entries() {
        let rs = rows();
        let p2 = rs.iter().find(|r| r.assumption == "p = 2").unwrap();
        assert!(p2.values.contains("Q-linear with ε=1/(1+κ)"));
        let pbig = rs.iter().find(|r| r.assumption == "p in ]2,+inf[").unwrap();
        assert!(pbig.values.contains("n^{-p/(p-2)}"));
    }
}
