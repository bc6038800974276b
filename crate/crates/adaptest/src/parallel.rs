//! Chain-level parallelism. Each chain owns its RNG stream, so results are
//! identical to the sequential runners in `adaptest_core`.

use std::thread;

use adaptest_core::calibration::{Calibration, CalibrationPriors, CalibrationResult, ResponseMatrix};
use adaptest_core::eval::{
    center_on_original, check_paired, check_retest, icc_model, validity_model, IccPosterior, IccPriors,
    MeasurementError, PairedObservation, RetestObservation, ValidityPosterior, ValidityPriors,
};
use adaptest_core::mcmc::{run_chain, McmcConfig, McmcRun, Model};
use adaptest_core::Result;

fn fan_out<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    thread::scope(|s| {
        let handles: Vec<_> = (0..n).map(|c| s.spawn({ let f = &f; move || f(c) })).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    })
}

pub fn run_chains<F: Fn(&[f64]) -> f64 + Sync>(model: &Model<F>, config: &McmcConfig) -> Result<McmcRun> {
    let chains = fan_out(config.n_chains, |c| run_chain(model, config, c))?;
    McmcRun::from_chains(model.names.clone(), chains, config)
}

pub fn fit_2pl(matrix: &ResponseMatrix, priors: CalibrationPriors, config: &McmcConfig) -> Result<CalibrationResult> {
    let cal = Calibration::prepare(matrix, priors)?;
    let chains = fan_out(config.n_chains, |c| cal.run_chain(config, c))?;
    cal.assemble(chains)
}

pub fn fit_icc_model(
    obs: &[RetestObservation],
    priors: IccPriors,
    mode: MeasurementError,
    config: &McmcConfig,
) -> Result<IccPosterior> {
    check_retest(obs)?;
    let run = run_chains(&icc_model(obs, priors, mode), config)?;
    Ok(IccPosterior::from_run(&run))
}

pub fn fit_validity_model(
    obs: &[PairedObservation],
    priors: ValidityPriors,
    config: &McmcConfig,
) -> Result<ValidityPosterior> {
    check_paired(obs)?;
    let centered = center_on_original(obs);
    let run = run_chains(&validity_model(&centered, priors), config)?;
    Ok(ValidityPosterior::from_run(&run))
}
