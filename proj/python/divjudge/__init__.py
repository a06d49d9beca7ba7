"""Discriminator-based KL/JS divergence estimation between datasets.

Thin Python layer over the native ``_divjudge`` extension: Gaussian and
mixture distributions with Monte-Carlo divergence oracles, a probabilistic
MLP discriminator whose class posteriors yield density-ratio KL/JS
estimates, seed-ensemble entry points, diagonal-covariance GMM fitting via
EM, a mixed-type tabular CSV encoder, and JSON-level access to the
experiment harness.
"""

from ._divjudge import (
    ColumnSchema,
    DataError,
    DiscriminatorConfig,
    DivergenceEstimate,
    EMConfig,
    EncodeReport,
    EnsembleResult,
    GaussianDist,
    GmmFit,
    MixtureDist,
    NumericalError,
    RawTable,
    Schema,
    SeedOutcome,
    TrainedDiscriminator,
    __version__,
    compare_files,
    csv_series_from_json,
    decode_onehot,
    default_missing_tokens,
    encode,
    encode_with_report,
    ensemble_estimate,
    ensemble_estimate_datasets,
    estimate_js,
    estimate_kl,
    fit_gmm,
    fit_gmm_detailed,
    gaussian_kl_analytical,
    infer_schema,
    js_from_loss,
    load_csv,
    log_density_ratio,
    log_likelihood,
    logit,
    mc_js,
    mc_kl,
    parse_csv,
    random_gaussian_pair,
    result_fingerprint,
    run_experiment_json,
    train_discriminator,
)

__all__ = [
    "ColumnSchema",
    "DataError",
    "DiscriminatorConfig",
    "DivergenceEstimate",
    "EMConfig",
    "EncodeReport",
    "EnsembleResult",
    "GaussianDist",
    "GmmFit",
    "MixtureDist",
    "NumericalError",
    "RawTable",
    "Schema",
    "SeedOutcome",
    "TrainedDiscriminator",
    "__version__",
    "compare_files",
    "csv_series_from_json",
    "decode_onehot",
    "default_missing_tokens",
    "encode",
    "encode_with_report",
    "ensemble_estimate",
    "ensemble_estimate_datasets",
    "estimate_js",
    "estimate_kl",
    "fit_gmm",
    "fit_gmm_detailed",
    "gaussian_kl_analytical",
    "infer_schema",
    "js_from_loss",
    "load_csv",
    "log_density_ratio",
    "log_likelihood",
    "logit",
    "mc_js",
    "mc_kl",
    "parse_csv",
    "random_gaussian_pair",
    "result_fingerprint",
    "run_experiment_json",
    "train_discriminator",
]
