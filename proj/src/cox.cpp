#include "autoci/cox.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "autoci/errors.hpp"
#include "autoci/stats.hpp"

namespace autoci {

namespace {

std::map<int, std::vector<Eigen::Index>> group_rows(Eigen::Index n, const std::vector<int>& env_ids) {
    std::map<int, std::vector<Eigen::Index>> groups;
    if (env_ids.empty()) {
        auto& g = groups[0];
        g.resize(static_cast<std::size_t>(n));
        std::iota(g.begin(), g.end(), 0);
    } else {
        for (Eigen::Index i = 0; i < n; ++i) groups[env_ids[static_cast<std::size_t>(i)]].push_back(i);
    }
    return groups;
}

}  // namespace

double cox_pl_loss(const Eigen::VectorXd& risk, const Eigen::VectorXd& time,
                   const Eigen::VectorXd& event, const std::vector<int>& env_ids,
                   Eigen::VectorXd* grad) {
    const Eigen::Index n = risk.size();
    if (time.size() != n || event.size() != n) throw Error("cox_pl_loss length mismatch");
    if (!env_ids.empty() && static_cast<Eigen::Index>(env_ids.size()) != n) {
        throw Error("cox_pl_loss env length mismatch");
    }
    if (grad) *grad = Eigen::VectorXd::Zero(n);

    double loss = 0.0;
    long long events_total = 0;

    for (auto& [env, rows] : group_rows(n, env_ids)) {
        (void)env;
        std::sort(rows.begin(), rows.end(), [&](Eigen::Index a, Eigen::Index b) { return time(a) < time(b); });
        const std::size_t m = rows.size();

        // Shift by the stratum max: the partial likelihood is invariant to a
        // constant added to all risk scores, and this keeps exp() in range.
        double shift = risk(rows[0]);
        for (Eigen::Index r : rows) shift = std::max(shift, risk(r));

        std::vector<double> ex(m);
        for (std::size_t i = 0; i < m; ++i) ex[i] = std::exp(risk(rows[i]) - shift);

        // Tie groups in ascending time; risk-set sums via a suffix pass.
        std::vector<std::size_t> group_start;
        for (std::size_t i = 0; i < m; ++i) {
            if (i == 0 || time(rows[i]) != time(rows[i - 1])) group_start.push_back(i);
        }
        std::vector<double> suffix(m + 1, 0.0);
        for (std::size_t i = m; i-- > 0;) suffix[i] = suffix[i + 1] + ex[i];

        double accum = 0.0;  // sum over event groups so far of d_g / RS_g
        for (std::size_t g = 0; g < group_start.size(); ++g) {
            const std::size_t lo = group_start[g];
            const std::size_t hi = (g + 1 < group_start.size()) ? group_start[g + 1] : m;
            const double rs = suffix[lo];
            long long d = 0;
            for (std::size_t i = lo; i < hi; ++i) {
                if (event(rows[i]) == 1.0) {
                    ++d;
                    loss += std::log(rs) + shift - risk(rows[i]);
                }
            }
            events_total += d;
            if (d > 0) accum += static_cast<double>(d) / rs;
            if (grad) {
                for (std::size_t i = lo; i < hi; ++i) {
                    (*grad)(rows[i]) = ex[i] * accum - (event(rows[i]) == 1.0 ? 1.0 : 0.0);
                }
            }
        }
    }

    if (events_total == 0) throw NoEvents();
    if (!std::isfinite(loss)) throw NonFiniteValue("cox_pl_loss");
    return loss;
}

namespace {

struct CoxDerivs {
    double loss = 0.0;
    Eigen::VectorXd score;      // gradient of the loss w.r.t. beta
    Eigen::MatrixXd information;  // observed information (Hessian of the loss)
};

CoxDerivs cox_derivs(const Eigen::MatrixXd& x, const Eigen::VectorXd& time,
                     const Eigen::VectorXd& event, const std::vector<int>& strata,
                     const Eigen::VectorXd& beta) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    CoxDerivs d;
    d.score = Eigen::VectorXd::Zero(p);
    d.information = Eigen::MatrixXd::Zero(p, p);
    const Eigen::VectorXd risk = x * beta;

    for (auto& [env, rows] : group_rows(n, strata)) {
        (void)env;
        std::sort(rows.begin(), rows.end(), [&](Eigen::Index a, Eigen::Index b) { return time(a) < time(b); });
        const std::size_t m = rows.size();
        double shift = risk(rows[0]);
        for (Eigen::Index r : rows) shift = std::max(shift, risk(r));

        // Suffix sums of e^r, e^r x, e^r x x^T in ascending-time order.
        std::vector<double> s0(m + 1, 0.0);
        std::vector<Eigen::VectorXd> s1(m + 1, Eigen::VectorXd::Zero(p));
        std::vector<Eigen::MatrixXd> s2(m + 1, Eigen::MatrixXd::Zero(p, p));
        for (std::size_t i = m; i-- > 0;) {
            const double e = std::exp(risk(rows[i]) - shift);
            const Eigen::VectorXd xi = x.row(rows[i]).transpose();
            s0[i] = s0[i + 1] + e;
            s1[i] = s1[i + 1] + e * xi;
            s2[i] = s2[i + 1] + e * (xi * xi.transpose());
        }

        std::size_t lo = 0;
        while (lo < m) {
            std::size_t hi = lo;
            while (hi + 1 < m && time(rows[hi + 1]) == time(rows[lo])) ++hi;
            long long deaths = 0;
            Eigen::VectorXd xsum = Eigen::VectorXd::Zero(p);
            for (std::size_t i = lo; i <= hi; ++i) {
                if (event(rows[i]) == 1.0) {
                    ++deaths;
                    xsum += x.row(rows[i]).transpose();
                    d.loss += std::log(s0[lo]) + shift - risk(rows[i]);
                }
            }
            if (deaths > 0) {
                const Eigen::VectorXd xbar = s1[lo] / s0[lo];
                d.score += static_cast<double>(deaths) * xbar - xsum;
                d.information +=
                    static_cast<double>(deaths) * (s2[lo] / s0[lo] - xbar * xbar.transpose());
            }
            lo = hi + 1;
        }
    }
    return d;
}

}  // namespace

CoxModel fit_cox(const Eigen::MatrixXd& x, const Eigen::VectorXd& time, const Eigen::VectorXd& event,
                 const std::vector<int>& strata) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    if (time.size() != n || event.size() != n) throw Error("fit_cox length mismatch");
    const long long n_events = static_cast<long long>(event.sum());
    if (n_events < p + 1) throw SingularFit("needs at least p+1 events");
    for (Eigen::Index c = 0; c < p; ++c) {
        if ((x.col(c).array() - x(0, c)).abs().maxCoeff() == 0.0) {
            throw SingularFit("constant column " + std::to_string(c));
        }
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    CoxDerivs cur = cox_derivs(x, time, event, strata, beta);
    int iter = 0;
    for (; iter < 50; ++iter) {
        if (cur.score.cwiseAbs().maxCoeff() < 1e-8) break;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cur.information);
        if (es.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff())) {
            throw SingularFit("information matrix is singular");
        }
        const Eigen::VectorXd step = es.eigenvectors() *
                                     es.eigenvalues().cwiseInverse().asDiagonal() *
                                     es.eigenvectors().transpose() * (-cur.score);
        double scale = 1.0;
        bool moved = false;
        for (int h = 0; h < 30; ++h) {
            const Eigen::VectorXd cand = beta + scale * step;
            const CoxDerivs next = cox_derivs(x, time, event, strata, cand);
            if (std::isfinite(next.loss) && next.loss <= cur.loss + 1e-12) {
                beta = cand;
                cur = next;
                moved = true;
                break;
            }
            scale *= 0.5;
        }
        if (!moved) throw ConvergenceFailure("step halving exhausted at iteration " + std::to_string(iter));
    }
    if (cur.score.cwiseAbs().maxCoeff() >= 1e-8) {
        throw ConvergenceFailure("score norm " + std::to_string(cur.score.cwiseAbs().maxCoeff()) +
                                 " after 50 iterations");
    }

    CoxModel model;
    model.beta = beta;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cur.information);
    if (es.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff())) {
        throw SingularFit("information matrix singular at optimum");
    }
    model.covariance = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                       es.eigenvectors().transpose();
    model.n_events = static_cast<int>(n_events);
    model.iterations = iter;
    return model;
}

std::vector<HazardRow> hazard_report(const CoxModel& model, const std::vector<std::string>& names) {
    std::vector<HazardRow> rows;
    for (Eigen::Index i = 0; i < model.beta.size(); ++i) {
        HazardRow r;
        r.name = i < static_cast<Eigen::Index>(names.size()) ? names[static_cast<std::size_t>(i)]
                                                             : "x" + std::to_string(i);
        const double se = std::sqrt(std::max(0.0, model.covariance(i, i)));
        r.hr = std::exp(model.beta(i));
        r.ci_low = std::exp(model.beta(i) - 1.96 * se);
        r.ci_high = std::exp(model.beta(i) + 1.96 * se);
        if (se > 0.0) {
            const double z = model.beta(i) / se;
            r.p = chi2_sf_1df(z * z);
        } else {
            r.p = model.beta(i) == 0.0 ? 1.0 : 0.0;
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace autoci
