#include "autoci/learner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "autoci/cox.hpp"
#include "autoci/csv.hpp"
#include "autoci/stats.hpp"

#include "json.hpp"

namespace autoci {

void LearnerConfig::validate() const {
    if (lr <= 0.0) throw ConfigError("learner.lr must be > 0");
    if (warmup_epochs < 1 || finetune_epochs < 1) throw ConfigError("learner epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("learner.batch_size must be >= 1");
    if (lambda <= 0.0) throw ConfigError("learner.lambda must be > 0");
    if (runs < 1) throw ConfigError("learner.runs must be >= 1");
    if (cutoff <= 0.0 || cutoff >= 1.0) throw ConfigError("learner.cutoff must be in (0, 1)");
}

namespace {

constexpr double kDisturbanceFloor = 1e-8;

Eigen::VectorXd gate_probs(const ParamStore& params, int n_vars) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n_vars);
    if (params.pred.empty()) return Eigen::VectorXd::Ones(n_vars);
    for (const auto& [id, pp] : params.pred) {
        (void)id;
        p += (pp.mask.array() * (1.0 / (1.0 + (-pp.theta.array()).exp()))).matrix();
    }
    return p / static_cast<double>(params.pred.size());
}

// Shared minibatch training loop over the pooled dataset.
class TrainingSession {
public:
    TrainingSession(const Term& term, const EnvDataset& data, const LearnerConfig& config,
                    ParamStore& params, Rng& rng)
        : term_(term),
          data_(data),
          config_(config),
          params_(params),
          rng_(rng),
          pooled_(data.pooled()),
          adam_(AdamState::init(params)) {
        order_.resize(static_cast<std::size_t>(pooled_.x.rows()));
        std::iota(order_.begin(), order_.end(), 0);
    }

    void epoch() {
        rng_.shuffle(order_);
        const Eigen::Index total = pooled_.x.rows();
        for (Eigen::Index at = 0; at < total; at += config_.batch_size) {
            const Eigen::Index b = std::min<Eigen::Index>(config_.batch_size, total - at);
            Eigen::MatrixXd xb(b, pooled_.x.cols());
            for (Eigen::Index r = 0; r < b; ++r) xb.row(r) = pooled_.x.row(order_[static_cast<std::size_t>(at + r)]);

            LossSpec loss;
            if (data_.outcome == OutcomeKind::Regression) {
                Eigen::VectorXd yb(b);
                for (Eigen::Index r = 0; r < b; ++r) yb(r) = pooled_.y(order_[static_cast<std::size_t>(at + r)]);
                loss = LossSpec::mse(std::move(yb));
            } else {
                Eigen::VectorXd tb(b), eb(b);
                std::vector<int> envb(static_cast<std::size_t>(b));
                double any_event = 0.0;
                for (Eigen::Index r = 0; r < b; ++r) {
                    const Eigen::Index src = order_[static_cast<std::size_t>(at + r)];
                    tb(r) = pooled_.time(src);
                    eb(r) = pooled_.event(src);
                    envb[static_cast<std::size_t>(r)] = pooled_.env_ids[static_cast<std::size_t>(src)];
                    any_event += eb(r);
                }
                if (any_event == 0.0) continue;  // no risk-set signal in this batch
                loss = LossSpec::cox(std::move(tb), std::move(eb), std::move(envb));
            }

            Trace trace(term_, params_, data_.n_vars());
            trace.run(xb);
            trace.attach_loss(loss);
            const GradientSet grads = trace.backward();
            adam_step(params_, grads, adam_, config_.lr);
        }
    }

private:
    const Term& term_;
    const EnvDataset& data_;
    const LearnerConfig& config_;
    ParamStore& params_;
    Rng& rng_;
    EnvDataset::Pooled pooled_;
    AdamState adam_;
    std::vector<Eigen::Index> order_;
};

Eigen::VectorXd pooled_risk(const Term& term, const ParamStore& params, const EnvDataset::Pooled& pooled,
                            int n_vars) {
    Trace trace(term, params, n_vars);
    trace.run(pooled.x);
    const BatchValue& out = trace.output();
    if (out.type.kind() != DslType::Kind::Tensor || out.type.dim() != 1) {
        throw Error("model output must be a scalar per row");
    }
    return out.parts[0].col(0);
}

}  // namespace

double full_data_loss(const Term& term, const ParamStore& params, const EnvDataset& data) {
    const EnvDataset::Pooled pooled = data.pooled();
    const Eigen::VectorXd risk = pooled_risk(term, params, pooled, data.n_vars());
    if (data.outcome == OutcomeKind::Regression) {
        return (risk - pooled.y).squaredNorm() / static_cast<double>(risk.size());
    }
    return cox_pl_loss(risk, pooled.time, pooled.event, pooled.env_ids);
}

ParamStore warmup_train(const Term& term, const EnvDataset& data, const LearnerConfig& config,
                        std::vector<double>* loss_curve, std::vector<Eigen::VectorXd>* prob_curve) {
    config.validate();
    data.validate();
    type_of(term, data.n_vars());

    Rng init_rng(Rng::derive(config.seed, 1));
    RuntimeConfig rc;
    rc.hidden_width = config.hidden_width;
    ParamStore params = ParamStore::init(term, data.n_vars(), init_rng, rc);

    Rng train_rng(Rng::derive(config.seed, 2));
    TrainingSession session(term, data, config, params, train_rng);
    for (int e = 0; e < config.warmup_epochs; ++e) {
        session.epoch();
        if (loss_curve) loss_curve->push_back(full_data_loss(term, params, data));
        if (prob_curve) prob_curve->push_back(gate_probs(params, data.n_vars()));
    }
    return params;
}

std::vector<std::vector<double>> residuals(const Term& term, const ParamStore& params,
                                           const EnvDataset& data) {
    const EnvDataset::Pooled pooled = data.pooled();
    const Eigen::VectorXd risk = pooled_risk(term, params, pooled, data.n_vars());
    std::vector<std::vector<double>> by_env(data.envs.size());

    if (data.outcome == OutcomeKind::Regression) {
        for (Eigen::Index i = 0; i < risk.size(); ++i) {
            by_env[static_cast<std::size_t>(pooled.env_ids[static_cast<std::size_t>(i)])].push_back(
                pooled.y(i) - risk(i));
        }
        return by_env;
    }

    // Martingale residuals with a pooled Breslow baseline. The shift keeps
    // exp() bounded and cancels between H0 and the per-subject factor.
    const Eigen::Index n = risk.size();
    const double shift = risk.maxCoeff();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return pooled.time(a) < pooled.time(b); });
    std::vector<double> suffix(static_cast<std::size_t>(n) + 1, 0.0);
    for (std::size_t i = static_cast<std::size_t>(n); i-- > 0;) {
        suffix[i] = suffix[i + 1] + std::exp(risk(order[i]) - shift);
    }
    // Cumulative baseline hazard at each sorted position (ties share a value).
    std::vector<double> h0_at(static_cast<std::size_t>(n), 0.0);
    double h0 = 0.0;
    std::size_t lo = 0;
    while (lo < static_cast<std::size_t>(n)) {
        std::size_t hi = lo;
        while (hi + 1 < static_cast<std::size_t>(n) && pooled.time(order[hi + 1]) == pooled.time(order[lo])) ++hi;
        long long d = 0;
        for (std::size_t i = lo; i <= hi; ++i) {
            if (pooled.event(order[i]) == 1.0) ++d;
        }
        if (d > 0) h0 += static_cast<double>(d) / suffix[lo];
        for (std::size_t i = lo; i <= hi; ++i) h0_at[i] = h0;
        lo = hi + 1;
    }
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
        const Eigen::Index row = order[i];
        const double r = pooled.event(row) - h0_at[i] * std::exp(risk(row) - shift);
        by_env[static_cast<std::size_t>(pooled.env_ids[static_cast<std::size_t>(row)])].push_back(r);
    }
    return by_env;
}

double mfid(const std::vector<std::vector<double>>& residuals_by_env) {
    if (residuals_by_env.size() < 2) throw DegenerateEnvironment("mfid needs >= 2 environments");
    for (const auto& r : residuals_by_env) {
        if (r.size() < 2) throw DegenerateEnvironment("mfid needs >= 2 samples per environment");
    }
    double worst = 0.0;
    for (std::size_t u = 0; u < residuals_by_env.size(); ++u) {
        std::vector<double> complement;
        for (std::size_t v = 0; v < residuals_by_env.size(); ++v) {
            if (v == u) continue;
            complement.insert(complement.end(), residuals_by_env[v].begin(), residuals_by_env[v].end());
        }
        worst = std::max(worst, fid(fit_gaussian(residuals_by_env[u]), fit_gaussian(complement)));
    }
    return worst;
}

RunResult mask_search(const Term& term, ParamStore& params, const EnvDataset& data,
                      const LearnerConfig& config) {
    config.validate();
    const int n = data.n_vars();
    RunResult result;

    if (params.pred.empty()) {
        // No gate in the program: nothing to reject, every variable stays in.
        result.mask = Eigen::VectorXd::Ones(n);
        result.theta = Eigen::VectorXd::Zero(n);
        result.probs = Eigen::VectorXd::Ones(n);
        for (int i = 0; i < n; ++i) result.s_pred.insert(i);
        return result;
    }

    Rng rng(Rng::derive(config.seed, 3));
    TrainingSession session(term, data, config, params, rng);

    // Candidate order: ascending gate probability so likely-spurious
    // variables are tested first.
    const Eigen::VectorXd initial_probs = gate_probs(params, n);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (initial_probs(a) != initial_probs(b)) return initial_probs(a) < initial_probs(b);
        return a < b;
    });

    auto set_mask = [&](int var, double value) {
        for (auto& [id, pp] : params.pred) {
            (void)id;
            pp.mask(var) = value;
        }
    };
    auto disturbance = [&] { return mfid(residuals(term, params, data)); };

    double d_base = disturbance();
    double l_base = full_data_loss(term, params, data);

    for (int var : order) {
        FlipDecision dec;
        dec.var = var;
        dec.name = var < static_cast<int>(data.var_names.size()) ? data.var_names[static_cast<std::size_t>(var)]
                                                                 : "x" + std::to_string(var);
        if (config.recompute_baseline) {
            dec.d0 = disturbance();
            dec.loss0 = full_data_loss(term, params, data);
        } else {
            dec.d0 = d_base;
            dec.loss0 = l_base;
        }

        set_mask(var, 0.0);
        for (int e = 0; e < config.finetune_epochs; ++e) session.epoch();
        dec.d1 = disturbance();
        dec.loss1 = full_data_loss(term, params, data);

        if (dec.d1 > config.lambda * std::max(dec.d0, kDisturbanceFloor)) {
            // Masking a causal variable disturbs the residual invariance:
            // restore and fine-tune to recover.
            set_mask(var, 1.0);
            for (int e = 0; e < config.finetune_epochs; ++e) session.epoch();
            dec.restored = true;
        } else {
            dec.restored = false;
        }
        result.decisions.push_back(dec);
    }

    const PredParams& first = params.pred.begin()->second;
    result.mask = first.mask;
    result.theta = Eigen::VectorXd::Zero(n);
    for (const auto& [id, pp] : params.pred) {
        (void)id;
        result.theta += pp.theta;
    }
    result.theta /= static_cast<double>(params.pred.size());
    result.probs = gate_probs(params, n);
    for (int i = 0; i < n; ++i) {
        if (result.mask(i) == 1.0) result.s_pred.insert(i);
    }
    return result;
}

RunResult run_autoci(const Term& term, const EnvDataset& data, const LearnerConfig& config,
                     std::uint64_t seed) {
    LearnerConfig cfg = config;
    cfg.seed = seed;
    std::vector<double> loss_curve;
    std::vector<Eigen::VectorXd> prob_curve;
    ParamStore params = warmup_train(term, data, cfg, &loss_curve, &prob_curve);
    RunResult result = mask_search(term, params, data, cfg);
    result.warmup_loss_curve = std::move(loss_curve);
    result.warmup_prob_curve = std::move(prob_curve);
    return result;
}

AggregateResult aggregate_runs(const std::vector<RunResult>& results, double cutoff) {
    if (results.empty()) throw Error("aggregate_runs needs >= 1 result");
    const Eigen::Index n = results.front().probs.size();
    AggregateResult agg;
    agg.mean_p = Eigen::VectorXd::Zero(n);
    for (const auto& r : results) {
        if (r.probs.size() != n) throw Error("aggregate_runs variable count mismatch");
        agg.mean_p += r.probs;
    }
    agg.mean_p /= static_cast<double>(results.size());
    agg.std_p = Eigen::VectorXd::Zero(n);
    if (results.size() > 1) {
        for (const auto& r : results) {
            agg.std_p += (r.probs - agg.mean_p).array().square().matrix();
        }
        agg.std_p = (agg.std_p / static_cast<double>(results.size() - 1)).cwiseSqrt();
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (agg.mean_p(i) >= cutoff) agg.s_pred.insert(static_cast<int>(i));
    }
    return agg;
}

void write_decision_log(std::ostream& out, const RunResult& result,
                        const std::vector<std::string>& var_names) {
    for (const auto& d : result.decisions) {
        nlohmann::json j;
        j["variable_index"] = d.var;
        j["variable"] = d.var < static_cast<int>(var_names.size())
                            ? var_names[static_cast<std::size_t>(d.var)]
                            : d.name;
        j["d0"] = d.d0;
        j["d1"] = d.d1;
        j["loss0"] = d.loss0;
        j["loss1"] = d.loss1;
        j["decision"] = d.restored ? "causal" : "rejected";
        out << j.dump() << "\n";
    }
}

void write_aggregate_csv(std::ostream& out, const AggregateResult& agg,
                         const std::vector<std::string>& var_names) {
    CsvWriter w(out);
    w.row({"variable", "mean_p", "std_p", "in_s_pred"});
    for (Eigen::Index i = 0; i < agg.mean_p.size(); ++i) {
        w.field(i < static_cast<Eigen::Index>(var_names.size()) ? var_names[static_cast<std::size_t>(i)]
                                                                : "x" + std::to_string(i));
        w.field(agg.mean_p(i));
        w.field(agg.std_p(i));
        w.field(static_cast<long long>(agg.s_pred.count(static_cast<int>(i)) ? 1 : 0));
        w.endrow();
    }
}

}  // namespace autoci
