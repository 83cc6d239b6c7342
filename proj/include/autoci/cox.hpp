#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace autoci {

struct CoxModel {
    Eigen::VectorXd beta;
    Eigen::MatrixXd covariance;  // inverse observed information at the optimum
    int n_events = 0;
    int iterations = 0;
};

struct HazardRow {
    std::string name;
    double hr = 1.0;
    double ci_low = 1.0;
    double ci_high = 1.0;
    double p = 1.0;
};

// Negative log partial likelihood with Breslow tie handling, computed per
// environment (strata) and summed. Empty env_ids means a single stratum.
// If `grad` is non-null it receives d(loss)/d(risk_i). Throws NoEvents when
// no stratum contains an event.
double cox_pl_loss(const Eigen::VectorXd& risk, const Eigen::VectorXd& time,
                   const Eigen::VectorXd& event, const std::vector<int>& env_ids,
                   Eigen::VectorXd* grad = nullptr);

// Newton-Raphson fit of the (optionally stratified) Breslow partial
// likelihood: converges when max |score| < 1e-8, caps at 50 iterations with
// step halving whenever the loss would increase.
CoxModel fit_cox(const Eigen::MatrixXd& x, const Eigen::VectorXd& time, const Eigen::VectorXd& event,
                 const std::vector<int>& strata = {});

// HR = exp(beta), 95% CI = exp(beta +- 1.96 SE), Wald chi-square p (1 dof).
std::vector<HazardRow> hazard_report(const CoxModel& model, const std::vector<std::string>& names);

}  // namespace autoci
