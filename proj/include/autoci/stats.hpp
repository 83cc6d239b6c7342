#pragma once

#include <Eigen/Dense>
#include <set>
#include <vector>

#include "autoci/errors.hpp"

namespace autoci {

struct GaussianMoments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // symmetric PSD (eigenvalues clamped at 0 where used)
};

// Sample mean and unbiased covariance (divisor m-1). Throws DegenerateSample
// if fewer than 2 samples. Rows of `samples` are observations.
GaussianMoments fit_gaussian(const Eigen::MatrixXd& samples);
GaussianMoments fit_gaussian(const std::vector<double>& samples);

// Frechet distance between Gaussians:
//   |m1-m2|^2 + tr(S1 + S2 - 2 (S2^{1/2} S1 S2^{1/2})^{1/2}),
// matrix square roots via symmetric eigendecomposition with eigenvalues
// clamped at 0. Its square root is the W2 metric.
double fid(const GaussianMoments& g1, const GaussianMoments& g2);

enum class TestKind { WelchT, FVar, Levene, Wilcoxon };

struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

// Two-sided two-sample tests: Welch t (unequal variances), variance-ratio F,
// Brown-Forsythe Levene (absolute deviations from the median), and Wilcoxon
// rank-sum. Wilcoxon uses the normal approximation with tie and continuity
// corrections when min(n1, n2) >= 10 and an exact midrank subset-sum
// distribution below that (falling back to the approximation when the pooled
// size exceeds 30).
TestResult two_sample_test(const std::vector<double>& a, const std::vector<double>& b, TestKind kind);

// |A ∩ B| / |A ∪ B|; both empty counts as a perfect match (1).
double jaccard(const std::set<int>& s_pred, const std::set<int>& s_prox);

// Fraction of predicted sets that are not subsets of s_prox.
double fwer(const std::vector<std::set<int>>& predictions, const std::set<int>& s_prox);

// Harrell's concordance index; ties in risk score count 0.5.
double c_index(const Eigen::VectorXd& risk, const Eigen::VectorXd& time, const Eigen::VectorXd& event);

// Right-continuous product-limit survival estimate.
class KaplanMeier {
public:
    KaplanMeier(const Eigen::VectorXd& time, const Eigen::VectorXd& event);
    double at(double t) const;        // S(t)
    double at_left(double t) const;   // S(t-)
    const std::vector<double>& step_times() const { return times_; }
    const std::vector<double>& step_values() const { return values_; }

private:
    std::vector<double> times_;
    std::vector<double> values_;
};

KaplanMeier kaplan_meier(const Eigen::VectorXd& time, const Eigen::VectorXd& event);

// Inverse-probability-of-censoring-weighted Brier score at `horizon`;
// survival_probs are predicted P(T > horizon) per subject.
double brier_ipcw(const Eigen::VectorXd& survival_probs, const Eigen::VectorXd& time,
                  const Eigen::VectorXd& event, double horizon);

// IPCW binomial log-likelihood at `horizon` (probabilities clamped to
// [1e-7, 1 - 1e-7]); higher is better.
double binomial_ll(const Eigen::VectorXd& survival_probs, const Eigen::VectorXd& time,
                   const Eigen::VectorXd& event, double horizon);

// Distribution helpers shared by tests and reports.
double normal_cdf(double z);
double chi2_sf_1df(double x);

}  // namespace autoci
