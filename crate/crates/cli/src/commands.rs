//! The four verbs.

use std::path::{Path, PathBuf};

use glle::glle_direct::{direct_params, sample_direct, DirectParams};
use glle::glle_em::{fit_em, run_em, sample_posterior, EmConfig, EmFit, SampleSchedule};
use glle::lle::{embed_weights, lle_on_graph, save_embedding_csv, Embedding, LleOutput};
use glle::manifold_data::{load_csv, save_csv, severed_bowl, s_curve, swiss_roll};
use glle::metrics::{neighborhood_preservation, procrustes_residual, save_metrics_csv, ComparisonReport, MetricsRow};
use glle::neighborhood::build_knn;
use glle::{Dataset, Result};
use log::info;

use crate::config::{DataSource, Manifold, Method, RunConfig};
use crate::svg::render_svg;

pub fn generate_dataset(manifold: Manifold, n: usize, seed: u64) -> Result<Dataset> {
    match manifold {
        Manifold::SCurve => s_curve(n, seed),
        Manifold::SwissRoll => swiss_roll(n, false, seed),
        Manifold::SwissRollHole => swiss_roll(n, true, seed),
        Manifold::SeveredBowl => severed_bowl(n, seed),
    }
}

pub fn load_dataset(source: &DataSource) -> Result<Dataset> {
    match source {
        DataSource::Generated { manifold, n, seed } => {
            let mut ds = generate_dataset(*manifold, *n, *seed)?;
            ds.name = manifold.name().to_string();
            Ok(ds)
        }
        DataSource::Csv(path) => load_csv(path),
    }
}

/// Writes the dataset CSV. `generate` takes its data seed from `--seed`.
pub fn cmd_generate(cfg: &RunConfig) -> Result<PathBuf> {
    let source = match &cfg.source {
        DataSource::Generated { manifold, n, .. } => DataSource::Generated {
            manifold: *manifold,
            n: *n,
            seed: cfg.seed,
        },
        csv => csv.clone(),
    };
    let ds = load_dataset(&source)?;
    let path = match &cfg.out {
        Some(p) => p.clone(),
        None => cfg.out_dir.join(format!("{}.csv", ds.name)),
    };
    save_csv(&ds, &path)?;
    info!("wrote {} points to {}", ds.n(), path.display());
    Ok(path)
}

/// Everything that does not depend on the sampling seed or scale.
struct Prepared {
    reference: LleOutput,
    em: Option<EmFit>,
    direct: Option<DirectParams>,
}

impl Prepared {
    fn new(ds: &Dataset, cfg: &RunConfig) -> Result<Self> {
        let graph = build_knn(ds, cfg.k)?;
        let reference = lle_on_graph(ds, graph, cfg.p, cfg.reg)?;
        info!(
            "LLE: null dimension {}, eigenvalues {:?}",
            reference.embedding.null_dim, reference.embedding.eigenvalues
        );
        let em = match (cfg.method, cfg.em_sample) {
            (Method::GlleEm, SampleSchedule::AfterConvergence) => {
                let fit = fit_em(ds, &reference.graph, &em_config(cfg, cfg.seed, cfg.scale))?;
                info!(
                    "EM stopped after {} iterations (converged: {})",
                    fit.state.iteration, fit.state.converged
                );
                Some(fit)
            }
            _ => None,
        };
        let direct = match cfg.method {
            Method::GlleDirect => Some(direct_params(ds, &reference, cfg.gamma_reg)?),
            _ => None,
        };
        Ok(Self { reference, em, direct })
    }

    fn embedding(&self, ds: &Dataset, cfg: &RunConfig, seed: u64, scale: f64) -> Result<Embedding> {
        let graph = &self.reference.graph;
        let weights = match cfg.method {
            Method::Lle => return Ok(self.reference.embedding.clone()),
            Method::GlleEm => match &self.em {
                Some(fit) => sample_posterior(&fit.state, scale, seed)?,
                None => run_em(ds, graph, &em_config(cfg, seed, scale))?.0,
            },
            Method::GlleDirect => {
                let params = self.direct.as_ref().expect("direct parameters prepared");
                sample_direct(params, scale, seed, cfg.direct_mean)?
            }
        };
        embed_weights(&weights, graph, cfg.p)
    }
}

fn em_config(cfg: &RunConfig, seed: u64, scale: f64) -> EmConfig {
    EmConfig {
        max_iter: cfg.max_iter,
        tol: cfg.tol,
        seed,
        scale,
        second_moment: cfg.em_moment,
        schedule: cfg.em_sample,
    }
}

fn write_outputs(ds: &Dataset, emb: &Embedding, dir: &Path, stem: &str) -> Result<()> {
    save_embedding_csv(emb, &ds.param, dir.join(format!("{stem}.csv")))?;
    if emb.dim() == 2 {
        render_svg(&emb.coords, &ds.param, dir.join(format!("{stem}.svg")))?;
    } else {
        info!("p = {}, skipping the scatter plot for {stem}", emb.dim());
    }
    Ok(())
}

fn metrics_row(ds: &Dataset, cfg: &RunConfig, prep: &Prepared, emb: &Embedding, seed: u64, scale: f64) -> Result<MetricsRow> {
    Ok(MetricsRow {
        method: cfg.method.name().to_string(),
        seed,
        scale,
        preservation: neighborhood_preservation(ds, emb, cfg.k)?,
        procrustes_vs_lle: Some(procrustes_residual(&prep.reference.embedding.coords, &emb.coords)?),
    })
}

/// One embedding per generation, seeds `seed, seed + 1, ...`.
pub fn cmd_embed(cfg: &RunConfig) -> Result<Vec<MetricsRow>> {
    let ds = load_dataset(&cfg.source)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let prep = Prepared::new(&ds, cfg)?;
    let mut rows = Vec::with_capacity(cfg.generations);
    for g in 0..cfg.generations {
        let seed = cfg.seed.wrapping_add(g as u64);
        let emb = prep.embedding(&ds, cfg, seed, cfg.scale)?;
        write_outputs(&ds, &emb, &cfg.out_dir, &format!("{}_g{g}", cfg.method.name()))?;
        let row = metrics_row(&ds, cfg, &prep, &emb, seed, cfg.scale)?;
        info!("generation {g}: preservation {:.4}", row.preservation);
        rows.push(row);
    }
    save_metrics_csv(&rows, cfg.out_dir.join("metrics.csv"))?;
    Ok(rows)
}

/// One embedding per covariance scale, all with the same seed.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<MetricsRow>> {
    if cfg.method == Method::Lle {
        return Err(glle::GlleError::InvalidArgument(
            "sweep needs a generative method (glle-em or glle-direct)".into(),
        ));
    }
    let ds = load_dataset(&cfg.source)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let prep = Prepared::new(&ds, cfg)?;
    let mut rows = Vec::with_capacity(cfg.scales.len());
    for &scale in &cfg.scales {
        let emb = prep.embedding(&ds, cfg, cfg.seed, scale)?;
        write_outputs(&ds, &emb, &cfg.out_dir, &format!("{}_a{scale}", cfg.method.name()))?;
        let row = metrics_row(&ds, cfg, &prep, &emb, cfg.seed, scale)?;
        info!("scale {scale}: preservation {:.4}", row.preservation);
        rows.push(row);
    }
    save_metrics_csv(&rows, cfg.out_dir.join("metrics.csv"))?;
    Ok(rows)
}

/// LLE once, then each generation aligned against it.
pub fn cmd_compare(cfg: &RunConfig) -> Result<(ComparisonReport, Vec<MetricsRow>)> {
    let ds = load_dataset(&cfg.source)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let prep = Prepared::new(&ds, cfg)?;
    let reference_preservation = neighborhood_preservation(&ds, &prep.reference.embedding, cfg.k)?;
    let mut rows = Vec::with_capacity(cfg.generations);
    for g in 0..cfg.generations {
        let seed = cfg.seed.wrapping_add(g as u64);
        let emb = prep.embedding(&ds, cfg, seed, cfg.scale)?;
        rows.push(metrics_row(&ds, cfg, &prep, &emb, seed, cfg.scale)?);
    }
    save_metrics_csv(&rows, cfg.out_dir.join("compare.csv"))?;
    let report = ComparisonReport {
        neighborhood_preservation: reference_preservation,
        procrustes_residual: rows
            .iter()
            .filter_map(|r| r.procrustes_vs_lle)
            .fold(0.0, f64::max),
        per_generation: rows.iter().map(|r| (r.seed, r.preservation)).collect(),
    };
    Ok((report, rows))
}
