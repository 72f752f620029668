//! Plain-text reports for the `--out table` mode.

use std::fmt::Write;

use metabal_core::egger::EggerFit;
use metabal_core::io::{Envelope, Estimates};
use metabal_core::pooling::{Heterogeneity, PooledEstimate};
use metabal_core::{BalanceState, LooEntry, Reference};

fn reference_name(r: Reference) -> &'static str {
    match r {
        Reference::Normal => "normal",
        Reference::StudentT => "t",
    }
}

fn opt(x: Option<f64>, width: usize, prec: usize) -> String {
    match x {
        Some(v) => format!("{v:>width$.prec$}"),
        None => format!("{:>width$}", "NA"),
    }
}

fn pvalue(p: Option<f64>) -> String {
    match p {
        Some(p) if p < 1e-4 => format!("{p:>10.2e}"),
        other => opt(other, 10, 4),
    }
}

fn header(out: &mut String) {
    let _ = writeln!(
        out,
        "{:<8} {:>12} {:>12} {:>10} {:>10}",
        "", "Est", "S.E", "t value", "p-value"
    );
}

fn row(out: &mut String, name: &str, est: f64, se: f64, stat: Option<f64>, p: Option<f64>) {
    let _ = writeln!(
        out,
        "{name:<8} {est:>12.6} {se:>12.6} {} {}",
        opt(stat, 10, 3),
        pvalue(p)
    );
}

fn pooled(out: &mut String, e: &PooledEstimate, h: Option<&Heterogeneity>) {
    header(out);
    row(out, "mu", e.mu_hat, e.se_mu, e.stat, e.p_value);
    let _ = writeln!(
        out,
        "{:.0}% CI: [{:.6}, {:.6}]",
        e.ci_level * 100.0,
        e.ci_low,
        e.ci_high
    );
    if let Some(h) = h {
        let _ = write!(
            out,
            "k = {}  Q = {:.4} on {} df  I2 = {:.1}%  tau2 = {:.6}",
            h.k,
            h.q,
            h.k.saturating_sub(1),
            h.i2 * 100.0,
            h.tau2
        );
        if let Some(phi) = h.phi {
            let _ = write!(out, "  phi = {phi:.6}");
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(out, "reference: {}", reference_name(e.reference));
}

fn egger(out: &mut String, f: &EggerFit) {
    header(out);
    row(
        out,
        "beta0",
        f.beta0_hat,
        f.se_beta0,
        f.stat_beta0,
        f.p_beta0,
    );
    row(out, "mu", f.mu_hat, f.se_mu, f.stat_mu, f.p_mu);
    let _ = writeln!(
        out,
        "{:.0}% CI for mu: [{:.6}, {:.6}]",
        f.ci_level * 100.0,
        f.ci_low,
        f.ci_high
    );
    let _ = writeln!(
        out,
        "phi = {:.6}  dof = {}  covariate = {}",
        f.phi_hat,
        f.dof,
        match f.metric {
            metabal_core::PrecisionMetric::InvSe => "se",
            metabal_core::PrecisionMetric::InvN => "1/n",
        }
    );
    let _ = writeln!(out, "reference: {}", reference_name(f.reference));
}

fn balance(out: &mut String, b: &BalanceState) {
    let _ = writeln!(
        out,
        "\n{:<12} {:>12} {:>9} {:>10}",
        "study", "position", "mass %", "hole"
    );
    for m in &b.masses {
        if m.excluded {
            let _ = writeln!(out, "{:<12} {:>12.6} {:>9} {:>10}", m.id, m.x, "excl", "");
        } else {
            let _ = writeln!(
                out,
                "{:<12} {:>12.6} {:>9.3} {:>10.5}",
                m.id, m.x, m.mass_pct, m.hole_len
            );
        }
    }
    let _ = writeln!(
        out,
        "pivot = {:.6}  stand = [{:.6}, {:.6}]",
        b.pivot, b.stand_low, b.stand_high
    );
}

fn loo(out: &mut String, entries: &[LooEntry]) {
    let _ = writeln!(
        out,
        "\nleave one out\n{:<12} {:>12} {:>12} {:>12} {:>10}",
        "excluded", "mu", "ci low", "ci high", "tau2"
    );
    for e in entries {
        match &e.fit {
            Some(fit) => {
                let (lo, hi) = fit.ci();
                let tau2 = fit.heterogeneity().map(|h| h.tau2);
                let _ = writeln!(
                    out,
                    "{:<12} {:>12.6} {:>12.6} {:>12.6} {}",
                    e.excluded_id,
                    fit.mu_hat(),
                    lo,
                    hi,
                    opt(tau2, 10, 6)
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "{:<12} {}",
                    e.excluded_id,
                    e.flag.as_deref().unwrap_or("not fitted")
                );
            }
        }
    }
}

/// Render an envelope as a fixed-width text report.
pub fn table(env: &Envelope) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "model: {}", env.model);
    match &env.estimates {
        Estimates::Pooled(e) => pooled(&mut out, e, env.heterogeneity.as_ref()),
        Estimates::Egger(f) => egger(&mut out, f),
    }
    if let Some(mr) = &env.mr {
        let _ = write!(
            out,
            "variants = {}  reoriented = {}",
            mr.variants, mr.reoriented
        );
        if let Some(p) = &mr.pleiotropy {
            match p.sigma2() {
                Some(s) => {
                    let _ = write!(out, "  sigma2_beta0 = {s:.6}");
                }
                None => {
                    let _ = write!(out, "  sigma2_beta0 not identified (phi <= 1)");
                }
            }
        }
        let _ = writeln!(out);
    }
    if let Some(b) = &env.balance {
        balance(&mut out, b);
    }
    if let Some(entries) = &env.leave_one_out {
        loo(&mut out, entries);
    }
    for w in &env.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    let _ = writeln!(
        out,
        "\np-values are two-sided; the t value column is a z statistic for pooled mu \
         (normal reference) and a t(k-2) statistic for Egger coefficients unless overridden."
    );
    out
}
