#include "autoci/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numeric>

namespace autoci {

GaussianMoments fit_gaussian(const Eigen::MatrixXd& samples) {
    const Eigen::Index m = samples.rows();
    if (m < 2) throw DegenerateSample("fit_gaussian needs >= 2 samples");
    GaussianMoments g;
    g.mean = samples.colwise().mean();
    const Eigen::MatrixXd centered = samples.rowwise() - g.mean.transpose();
    g.cov = centered.transpose() * centered / static_cast<double>(m - 1);
    return g;
}

GaussianMoments fit_gaussian(const std::vector<double>& samples) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(samples.size()), 1);
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, 0) = samples[static_cast<std::size_t>(i)];
    return fit_gaussian(m);
}

namespace {

// Symmetric PSD square root; sampling noise can leave moments marginally
// indefinite, so eigenvalues are clamped at 0.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double fid(const GaussianMoments& g1, const GaussianMoments& g2) {
    if (g1.mean.size() != g2.mean.size()) throw Error("fid: dimension mismatch");
    const double mean_term = (g1.mean - g2.mean).squaredNorm();
    const Eigen::MatrixXd r2 = psd_sqrt(g2.cov);
    const Eigen::MatrixXd cross = psd_sqrt(r2 * g1.cov * r2);
    const double trace_term = g1.cov.trace() + g2.cov.trace() - 2.0 * cross.trace();
    return std::max(0.0, mean_term + trace_term);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double chi2_sf_1df(double x) { return x <= 0.0 ? 1.0 : std::erfc(std::sqrt(x / 2.0)); }

namespace {

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double var_of(const std::vector<double>& v, double mean) {
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / static_cast<double>(v.size() - 1);
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

TestResult welch_t(const std::vector<double>& a, const std::vector<double>& b) {
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double ma = mean_of(a), mb = mean_of(b);
    const double va = var_of(a, ma), vb = var_of(b, mb);
    const double se2 = va / na + vb / nb;
    if (se2 <= 0.0) {
        return ma == mb ? TestResult{0.0, 1.0} : TestResult{ma > mb ? HUGE_VAL : -HUGE_VAL, 0.0};
    }
    const double t = (ma - mb) / std::sqrt(se2);
    const double df = se2 * se2 / (va * va / (na * na * (na - 1.0)) + vb * vb / (nb * nb * (nb - 1.0)));
    boost::math::students_t dist(df);
    const double p = 2.0 * boost::math::cdf(dist, -std::abs(t));
    return {t, std::min(1.0, p)};
}

TestResult f_var(const std::vector<double>& a, const std::vector<double>& b) {
    const double va = var_of(a, mean_of(a));
    const double vb = var_of(b, mean_of(b));
    if (va <= 0.0 && vb <= 0.0) return {1.0, 1.0};
    if (vb <= 0.0) return {HUGE_VAL, 0.0};
    const double f = va / vb;
    boost::math::fisher_f dist(static_cast<double>(a.size() - 1), static_cast<double>(b.size() - 1));
    const double c = boost::math::cdf(dist, f);
    return {f, std::min(1.0, 2.0 * std::min(c, 1.0 - c))};
}

TestResult levene_bf(const std::vector<double>& a, const std::vector<double>& b) {
    // Brown-Forsythe: one-way ANOVA F on absolute deviations from group medians.
    const double mda = median_of(a), mdb = median_of(b);
    std::vector<double> za(a.size()), zb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) za[i] = std::abs(a[i] - mda);
    for (std::size_t i = 0; i < b.size(); ++i) zb[i] = std::abs(b[i] - mdb);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double n = na + nb;
    const double zma = mean_of(za), zmb = mean_of(zb);
    const double zm = (na * zma + nb * zmb) / n;
    const double between = na * (zma - zm) * (zma - zm) + nb * (zmb - zm) * (zmb - zm);
    double within = 0.0;
    for (double z : za) within += (z - zma) * (z - zma);
    for (double z : zb) within += (z - zmb) * (z - zmb);
    if (within <= 0.0) return between <= 0.0 ? TestResult{0.0, 1.0} : TestResult{HUGE_VAL, 0.0};
    const double f = (n - 2.0) * between / within;
    boost::math::fisher_f dist(1.0, n - 2.0);
    return {f, std::min(1.0, 1.0 - boost::math::cdf(dist, f))};
}

std::vector<double> midranks(const std::vector<double>& pooled) {
    const std::size_t n = pooled.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return pooled[i] < pooled[j]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

// Exact two-sided p for the rank-sum statistic via subset-sum counting over
// doubled midranks (doubling keeps tied half-ranks integral).
double wilcoxon_exact_p(const std::vector<double>& ranks, std::size_t n1, double w_obs) {
    const std::size_t n = ranks.size();
    std::vector<long long> r2(n);
    long long total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        r2[i] = static_cast<long long>(std::llround(2.0 * ranks[i]));
        total += r2[i];
    }
    // count[k][s]: subsets of size k with doubled-rank sum s.
    std::vector<std::vector<double>> count(n1 + 1, std::vector<double>(static_cast<std::size_t>(total) + 1, 0.0));
    count[0][0] = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = std::min(n1, i + 1); k >= 1; --k) {
            for (long long s = total; s >= r2[i]; --s) {
                count[k][static_cast<std::size_t>(s)] += count[k - 1][static_cast<std::size_t>(s - r2[i])];
            }
        }
    }
    const long long w2 = static_cast<long long>(std::llround(2.0 * w_obs));
    double below = 0.0, above = 0.0, all = 0.0;
    for (long long s = 0; s <= total; ++s) {
        const double c = count[n1][static_cast<std::size_t>(s)];
        all += c;
        if (s <= w2) below += c;
        if (s >= w2) above += c;
    }
    return std::min(1.0, 2.0 * std::min(below, above) / all);
}

TestResult wilcoxon(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n1 = a.size(), n2 = b.size();
    std::vector<double> pooled(a);
    pooled.insert(pooled.end(), b.begin(), b.end());
    const std::vector<double> ranks = midranks(pooled);
    double w = 0.0;
    for (std::size_t i = 0; i < n1; ++i) w += ranks[i];

    if (std::min(n1, n2) < 10 && n1 + n2 <= 30) {
        return {w, wilcoxon_exact_p(ranks, n1, w)};
    }

    const double n = static_cast<double>(n1 + n2);
    const double mu = static_cast<double>(n1) * (n + 1.0) / 2.0;
    // Tie-corrected variance.
    double tie_term = 0.0;
    {
        std::vector<double> sorted(pooled);
        std::sort(sorted.begin(), sorted.end());
        std::size_t i = 0;
        while (i < sorted.size()) {
            std::size_t j = i;
            while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
            const double t = static_cast<double>(j - i + 1);
            tie_term += t * t * t - t;
            i = j + 1;
        }
    }
    const double var = static_cast<double>(n1) * static_cast<double>(n2) / 12.0 *
                       ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if (var <= 0.0) return {w, 1.0};
    const double diff = w - mu;
    const double cc = diff > 0.0 ? -0.5 : (diff < 0.0 ? 0.5 : 0.0);
    const double z = (diff + cc) / std::sqrt(var);
    return {w, std::min(1.0, 2.0 * normal_cdf(-std::abs(z)))};
}

}  // namespace

TestResult two_sample_test(const std::vector<double>& a, const std::vector<double>& b, TestKind kind) {
    const std::size_t need = kind == TestKind::Wilcoxon ? 1 : 2;
    if (a.size() < need || b.size() < need) throw DegenerateSample("two_sample_test sample too small");
    switch (kind) {
        case TestKind::WelchT: return welch_t(a, b);
        case TestKind::FVar: return f_var(a, b);
        case TestKind::Levene: return levene_bf(a, b);
        case TestKind::Wilcoxon: return wilcoxon(a, b);
    }
    throw Error("unreachable test kind");
}

double jaccard(const std::set<int>& s_pred, const std::set<int>& s_prox) {
    if (s_pred.empty() && s_prox.empty()) return 1.0;
    std::size_t inter = 0;
    for (int i : s_pred) inter += s_prox.count(i);
    const std::size_t uni = s_pred.size() + s_prox.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double fwer(const std::vector<std::set<int>>& predictions, const std::set<int>& s_prox) {
    if (predictions.empty()) throw DegenerateSample("fwer needs >= 1 prediction");
    std::size_t violations = 0;
    for (const auto& p : predictions) {
        for (int i : p) {
            if (!s_prox.count(i)) {
                ++violations;
                break;
            }
        }
    }
    return static_cast<double>(violations) / static_cast<double>(predictions.size());
}

double c_index(const Eigen::VectorXd& risk, const Eigen::VectorXd& time, const Eigen::VectorXd& event) {
    if (risk.size() != time.size() || time.size() != event.size()) throw Error("c_index length mismatch");
    double concordant = 0.0;
    long long comparable = 0;
    for (Eigen::Index i = 0; i < time.size(); ++i) {
        if (event(i) != 1.0) continue;
        for (Eigen::Index j = 0; j < time.size(); ++j) {
            if (time(i) >= time(j)) continue;  // i must fail strictly first
            ++comparable;
            if (risk(i) > risk(j)) concordant += 1.0;
            else if (risk(i) == risk(j)) concordant += 0.5;
        }
    }
    if (comparable == 0) throw NoComparablePairs();
    return concordant / static_cast<double>(comparable);
}

KaplanMeier::KaplanMeier(const Eigen::VectorXd& time, const Eigen::VectorXd& event) {
    if (time.size() < 1) throw DegenerateSample("kaplan_meier needs >= 1 subject");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(time.size()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return time(i) < time(j); });
    double surv = 1.0;
    std::size_t i = 0;
    const std::size_t n = order.size();
    while (i < n) {
        std::size_t j = i;
        long long deaths = event(order[i]) == 1.0 ? 1 : 0;
        while (j + 1 < n && time(order[j + 1]) == time(order[i])) {
            ++j;
            if (event(order[j]) == 1.0) ++deaths;
        }
        if (deaths > 0) {
            const double at_risk = static_cast<double>(n - i);
            surv *= 1.0 - static_cast<double>(deaths) / at_risk;
            times_.push_back(time(order[i]));
            values_.push_back(surv);
        }
        i = j + 1;
    }
}

double KaplanMeier::at(double t) const {
    double s = 1.0;
    for (std::size_t i = 0; i < times_.size() && times_[i] <= t; ++i) s = values_[i];
    return s;
}

double KaplanMeier::at_left(double t) const {
    double s = 1.0;
    for (std::size_t i = 0; i < times_.size() && times_[i] < t; ++i) s = values_[i];
    return s;
}

KaplanMeier kaplan_meier(const Eigen::VectorXd& time, const Eigen::VectorXd& event) {
    return KaplanMeier(time, event);
}

namespace {

// Graf-style IPCW weights from the censoring Kaplan-Meier estimate.
double ipcw_accumulate(const Eigen::VectorXd& probs, const Eigen::VectorXd& time,
                       const Eigen::VectorXd& event, double horizon, bool log_likelihood) {
    if (probs.size() != time.size() || time.size() != event.size()) throw Error("ipcw length mismatch");
    if (time.size() < 1) throw DegenerateSample("ipcw needs subjects");
    const KaplanMeier censor_km(time, (1.0 - event.array()).matrix());
    double total = 0.0;
    for (Eigen::Index i = 0; i < time.size(); ++i) {
        double p = probs(i);
        if (log_likelihood) p = std::min(1.0 - 1e-7, std::max(1e-7, p));
        if (time(i) <= horizon && event(i) == 1.0) {
            const double g = censor_km.at_left(time(i));
            if (g <= 0.0) throw DegenerateSample("censoring weight degenerate at event time");
            total += (log_likelihood ? std::log(1.0 - p) : (0.0 - p) * (0.0 - p)) / g;
        } else if (time(i) > horizon) {
            const double g = censor_km.at(horizon);
            if (g <= 0.0) throw DegenerateSample("censoring weight degenerate at horizon");
            total += (log_likelihood ? std::log(p) : (1.0 - p) * (1.0 - p)) / g;
        }
        // Censored at or before the horizon: weight 0.
    }
    return total / static_cast<double>(time.size());
}

}  // namespace

double brier_ipcw(const Eigen::VectorXd& survival_probs, const Eigen::VectorXd& time,
                  const Eigen::VectorXd& event, double horizon) {
    return ipcw_accumulate(survival_probs, time, event, horizon, false);
}

double binomial_ll(const Eigen::VectorXd& survival_probs, const Eigen::VectorXd& time,
                   const Eigen::VectorXd& event, double horizon) {
    return ipcw_accumulate(survival_probs, time, event, horizon, true);
}

}  // namespace autoci
