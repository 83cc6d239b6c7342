#pragma once

#include <Eigen/Dense>
#include <ostream>
#include <string>
#include <vector>

#include "autoci/errors.hpp"

namespace autoci {

enum class OutcomeKind { Regression, Survival };

struct Environment {
    std::string tag;
    Eigen::MatrixXd x;       // rows x n_vars
    Eigen::VectorXd y;       // regression outcome
    Eigen::VectorXd time;    // survival time (> 0)
    Eigen::VectorXd event;   // survival event indicator, 0 or 1
    Eigen::Index rows() const { return x.rows(); }
};

// Multi-environment dataset. All environments share the same variables in the
// same order; rows are complete (no missing values).
struct EnvDataset {
    OutcomeKind outcome = OutcomeKind::Regression;
    std::vector<std::string> var_names;
    std::vector<Environment> envs;

    int n_vars() const { return static_cast<int>(var_names.size()); }

    Eigen::Index total_rows() const {
        Eigen::Index n = 0;
        for (const auto& e : envs) n += e.rows();
        return n;
    }

    void validate() const;

    // Pools all environments into row-major arrays; env_ids[i] gives the
    // environment index of pooled row i.
    struct Pooled {
        Eigen::MatrixXd x;
        Eigen::VectorXd y;
        Eigen::VectorXd time;
        Eigen::VectorXd event;
        std::vector<int> env_ids;
    };
    Pooled pooled() const;

    // CSV with header env_tag, <vars...>, then y or time,event.
    void write_csv(std::ostream& out) const;
};

}  // namespace autoci
