//! Writes five seasons of age-stratified weekly counts simulated from an
//! endemic-epidemic model with reciprocal contacts.
//!
//! Usage: `cargo run --example synthetic_data -- <contacts.csv> <out.csv> [seed]`

use std::error::Error;

use epiforecast::ee_model::{
    simulate_series, ComponentSpec, ContactMatrix, ContactStructure, IsoWeek, Model, ModelSpec,
    Seasonality, Sharing,
};

fn main() -> Result<(), Box<dyn Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 2 {
        return Err("usage: synthetic_data <contacts.csv> <out.csv> [seed]".into());
    }
    let seed: u64 = args.get(2).map_or(Ok(2011), |s| s.parse())?;
    let contacts = ContactMatrix::from_csv(&args[0])?;
    let labels = contacts.labels().to_vec();

    let mut spec = ModelSpec::new("truth");
    spec.endemic = ComponentSpec {
        intercept: Sharing::GroupSpecific,
        seasonality: Seasonality {
            harmonics: 1,
            sharing: Sharing::Shared,
        },
        holiday: true,
    };
    spec.epidemic = Some(ComponentSpec::intercepts_only());
    spec.contacts = ContactStructure::Fixed(contacts.row_normalize()?);
    let model = Model::new(spec, &labels)?;

    let endemic_level = [1.4, 0.2, 0.5, 1.1, 1.2, 1.9];
    let epidemic_level = [-0.9, -1.4, -1.3, -0.8, -0.7, -0.35];
    let sizes = [3.0, 5.0, 4.0, 6.0, 5.0, 8.0];
    let mut theta = Vec::new();
    theta.extend(endemic_level);
    // holiday, then sin and cos of the yearly wave peaking in winter
    theta.extend([-0.4, 0.25, 0.85]);
    theta.extend(epidemic_level);
    theta.extend(sizes.map(f64::ln));

    let first = IsoWeek::new(2011, 27)?;
    let data = simulate_series(
        &model,
        &theta,
        &labels,
        None,
        first,
        &[2, 0, 1, 2, 3, 6],
        261,
        seed,
    )?;

    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&args[1])?;
    let mut header = vec!["year".to_string(), "week".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for (t, week) in data.weeks().iter().enumerate() {
        let mut row = vec![week.year().to_string(), week.week().to_string()];
        row.extend(data.counts_at(t).iter().map(u64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    eprintln!("totals per group: {:?}", data.totals(0..data.n_times()));
    Ok(())
}
