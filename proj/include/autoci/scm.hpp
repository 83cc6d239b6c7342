#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "autoci/dataset.hpp"
#include "autoci/rng.hpp"

namespace autoci {

struct InterventionSpec {
    enum class Kind { DoConstant, DoGaussian, Shift };
    int node = 0;  // never the target
    Kind kind = Kind::DoGaussian;
    double value = 0.0;  // DoConstant
    double mean = 0.0, var = 1.0;  // DoGaussian
    double shift = 0.0;  // Shift
};

// Linear-Gaussian structural causal model over n_vars nodes, one of which is
// the outcome. Latent nodes are sampled but never observed.
struct Scm {
    int n_vars = 0;
    std::vector<std::vector<int>> parents;  // per node
    Eigen::MatrixXd weights;                // weights(p, c) for edge p -> c
    Eigen::VectorXd noise_var;
    int target_index = 0;
    std::vector<bool> latent;
    std::vector<int> topo_order;

    // Observed non-target nodes in ascending node order; these become the
    // dataset columns.
    std::vector<int> observed_vars() const;

    // Ground-truth causal set in dataset-column coordinates: the observed
    // parents of the target.
    std::set<int> s_prox_columns() const;

    void check_acyclic() const;
};

// Random DAG from a random topological order with the given edge probability;
// edge weights uniform on +-[0.5, 2], noise variances uniform [0.5, 1.5]. The
// target always has at least one parent when edge_density > 0. When
// `confounded`, one parent of the target is hidden and given an observed
// child, so it acts as a latent confounder.
Scm random_scm(int n_vars, double edge_density, bool confounded, std::uint64_t seed);

// Ancestral sampling in topological order; intervened nodes ignore their
// structural assignment. Returns all node columns (including latent/target).
Eigen::MatrixXd sample_scm(const Scm& scm, int n, const std::vector<InterventionSpec>& interventions,
                           Rng& rng);

struct ToySettingConfig {
    int observational_rows = 1000;
    int interventional_rows = 1000;  // 10 for the ABCD setting
    double mean_lo = 1.0, mean_hi = 10.0;  // |mean| of the do_gaussian shift
    double intervention_var = 1.0;
};

// One observational environment plus one do_gaussian interventional
// environment per observed non-target variable.
EnvDataset make_setting(const Scm& scm, std::uint64_t seed, const ToySettingConfig& cfg);
EnvDataset make_finite_setting(const Scm& scm, std::uint64_t seed);
EnvDataset make_abcd_setting(const Scm& scm, std::uint64_t seed);

struct CovariateSpec {
    enum class Kind { Binary, Continuous };
    std::string name;
    Kind kind = Kind::Continuous;
    double beta = 0.0;
    // Per-trial distributions: Bernoulli(p) for binary, N(mean, sd) for
    // continuous, uniform on [lo, hi] when uniform = true.
    double p1 = 0.5, p2 = 0.5;
    double mean1 = 0.0, sd1 = 1.0, mean2 = 0.0, sd2 = 1.0;
    bool uniform = false;
    double lo = 0.0, hi = 1.0;
};

struct SurvivalCohortSpec {
    int n_trial1 = 400;
    int n_trial2 = 400;
    std::vector<CovariateSpec> covariates;
    double baseline_hazard = 0.1;
    double censoring_rate = 0.3;  // in [0, 1)

    void validate() const;
    std::set<int> causal_columns() const;
};

// Two-trial synthetic survival cohort: exponential event times with rate
// baseline * exp(beta . x) and independent exponential censoring calibrated
// to the requested censoring fraction.
EnvDataset gen_survival_cohort(const SurvivalCohortSpec& spec, std::uint64_t seed);

// Default cohort used by the survival experiment: three causal covariates
// with planted betas (ln 2, -ln 2, 0.5 ln 2) plus patient-id and tissue-area
// negative controls.
SurvivalCohortSpec default_cohort_spec();

}  // namespace autoci
