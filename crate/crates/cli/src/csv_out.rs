//! Time-series output. One row per accepted step, comma-delimited, `.`
//! decimal separator, LF line endings. The column set is part of the
//! tool's contract: the prefix through `energy_env` and the per-species
//! triples are frozen and golden-file tested.

use dpnp_core::diagnostics::DiagnosticsRecord;
use std::io::Write;

/// Column names for a run with the given species names, in row order.
pub fn header(species: &[String]) -> Vec<String> {
    let mut cols = vec![
        "t".to_string(),
        "outer_iters".to_string(),
        "clamp_events".to_string(),
        "entropy".to_string(),
        "entropy_env".to_string(),
        "charge_l2".to_string(),
        "energy_env".to_string(),
    ];
    for name in species {
        cols.push(format!("{name}_mass"));
        cols.push(format!("{name}_l2"));
        cols.push(format!("{name}_linf"));
    }
    for name in species {
        cols.push(format!("{name}_grad_l2"));
    }
    cols.extend(
        ["energy", "e_l2", "phi_l2", "q_l2", "p_l2", "compat_repairs", "halvings"]
            .map(String::from),
    );
    cols
}

fn row(record: &DiagnosticsRecord<f64>) -> Vec<String> {
    let mut fields = vec![
        record.t.to_string(),
        record.outer_iters.to_string(),
        record.clamp_events.to_string(),
        record.entropy.to_string(),
        record.envelopes.entropy.to_string(),
        record.charge_l2.to_string(),
        record.envelopes.energy.to_string(),
    ];
    for s in &record.species {
        fields.push(s.mass.to_string());
        fields.push(s.l2.to_string());
        fields.push(s.linf.to_string());
    }
    for s in &record.species {
        fields.push(s.grad_l2.to_string());
    }
    fields.push(record.energy.to_string());
    fields.push(record.e_l2.to_string());
    fields.push(record.phi_l2.to_string());
    fields.push(record.q_l2.to_string());
    fields.push(record.p_l2.to_string());
    fields.push(record.compat_repairs.to_string());
    fields.push(record.halvings.to_string());
    fields
}

/// Write header plus one row per record.
pub fn write_series<W: Write>(
    out: W,
    species: &[String],
    records: &[DiagnosticsRecord<f64>],
) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(b',')
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(header(species))?;
    for record in records {
        debug_assert_eq!(record.species.len(), species.len());
        w.write_record(row(record))?;
    }
    w.flush()?;
    Ok(())
}
