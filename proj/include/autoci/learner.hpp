#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "autoci/dataset.hpp"
#include "autoci/dsl.hpp"
#include "autoci/runtime.hpp"

namespace autoci {

struct LearnerConfig {
    double lr = 0.02;
    int warmup_epochs = 8;
    int finetune_epochs = 1;
    int batch_size = 64;
    double lambda = 5.0;  // disturbance threshold multiplier (5 toy, 1 survival)
    int runs = 1;         // 1 toy, 64 survival
    double cutoff = 0.5;
    std::uint64_t seed = 0;
    // When true (default) the baseline disturbance D0 is recomputed before
    // each candidate flip; otherwise the post-warm-up value is reused.
    bool recompute_baseline = true;
    int hidden_width = 16;

    void validate() const;
};

struct FlipDecision {
    int var = 0;
    std::string name;
    double d0 = 0.0, d1 = 0.0;      // disturbance before/after masking
    double loss0 = 0.0, loss1 = 0.0;
    bool restored = false;          // true: declared causal, mask back to 1
};

struct RunResult {
    Eigen::VectorXd mask;    // final mask (shared across gate instances)
    Eigen::VectorXd theta;   // final gate logits (averaged across instances)
    Eigen::VectorXd probs;   // p_i = mask_i * sigmoid(theta_i)
    std::vector<FlipDecision> decisions;
    std::set<int> s_pred;
    std::vector<double> warmup_loss_curve;              // full-data loss per epoch
    std::vector<Eigen::VectorXd> warmup_prob_curve;     // p per epoch
};

struct AggregateResult {
    Eigen::VectorXd mean_p;
    Eigen::VectorXd std_p;
    std::set<int> s_pred;  // {i : mean_p(i) >= cutoff}
};

// Trains all parameters (mask all-ones) for warmup_epochs of minibatch Adam
// over the pooled, shuffled environments. Appends per-epoch full-data loss
// and gate probabilities to the optional curves.
ParamStore warmup_train(const Term& term, const EnvDataset& data, const LearnerConfig& config,
                        std::vector<double>* loss_curve = nullptr,
                        std::vector<Eigen::VectorXd>* prob_curve = nullptr);

// Per-environment residual samples under the current model: y - f(x) for
// regression, martingale residuals event - H0(time) * exp(risk) with a pooled
// Breslow baseline for survival.
std::vector<std::vector<double>> residuals(const Term& term, const ParamStore& params,
                                           const EnvDataset& data);

// max over environments u of FID between the residual moments of u and of the
// pooled complement.
double mfid(const std::vector<std::vector<double>>& residuals_by_env);

// Greedy single pass over variables in ascending gate probability: mask the
// candidate, fine-tune, and keep it masked unless the disturbance satisfies
// D1 > lambda * max(D0, 1e-8), in which case the mask is restored and the
// model fine-tuned to recover.
RunResult mask_search(const Term& term, ParamStore& params, const EnvDataset& data,
                      const LearnerConfig& config);

// warmup_train followed by mask_search, fully determined by `seed`.
RunResult run_autoci(const Term& term, const EnvDataset& data, const LearnerConfig& config,
                     std::uint64_t seed);

AggregateResult aggregate_runs(const std::vector<RunResult>& results, double cutoff);

// One JSON record per flip decision.
void write_decision_log(std::ostream& out, const RunResult& result,
                        const std::vector<std::string>& var_names);

// CSV: variable, mean_p, std_p, in_s_pred.
void write_aggregate_csv(std::ostream& out, const AggregateResult& agg,
                         const std::vector<std::string>& var_names);

// Full-data task loss (pooled MSE or summed per-environment Cox partial
// likelihood) under the given parameters.
double full_data_loss(const Term& term, const ParamStore& params, const EnvDataset& data);

}  // namespace autoci
