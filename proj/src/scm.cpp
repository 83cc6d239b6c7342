#include "autoci/scm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace autoci {

std::vector<int> Scm::observed_vars() const {
    std::vector<int> out;
    for (int v = 0; v < n_vars; ++v) {
        if (v != target_index && !latent[static_cast<std::size_t>(v)]) out.push_back(v);
    }
    return out;
}

std::set<int> Scm::s_prox_columns() const {
    const std::vector<int> obs = observed_vars();
    std::set<int> cols;
    for (int p : parents[static_cast<std::size_t>(target_index)]) {
        if (latent[static_cast<std::size_t>(p)]) continue;
        const auto it = std::find(obs.begin(), obs.end(), p);
        if (it != obs.end()) cols.insert(static_cast<int>(it - obs.begin()));
    }
    return cols;
}

void Scm::check_acyclic() const {
    std::vector<int> pos(static_cast<std::size_t>(n_vars), -1);
    for (std::size_t i = 0; i < topo_order.size(); ++i) pos[static_cast<std::size_t>(topo_order[i])] = static_cast<int>(i);
    for (int v = 0; v < n_vars; ++v) {
        for (int p : parents[static_cast<std::size_t>(v)]) {
            if (pos[static_cast<std::size_t>(p)] >= pos[static_cast<std::size_t>(v)]) {
                throw Error("scm edge violates topological order");
            }
        }
    }
}

Scm random_scm(int n_vars, double edge_density, bool confounded, std::uint64_t seed) {
    if (n_vars < 2) throw Error("random_scm needs n_vars >= 2");
    Rng rng(Rng::derive(seed, 0x5c3));

    Scm scm;
    scm.n_vars = n_vars;
    scm.parents.assign(static_cast<std::size_t>(n_vars), {});
    scm.weights = Eigen::MatrixXd::Zero(n_vars, n_vars);
    scm.noise_var.resize(n_vars);
    scm.target_index = n_vars - 1;
    scm.latent.assign(static_cast<std::size_t>(n_vars), false);

    scm.topo_order.resize(static_cast<std::size_t>(n_vars));
    std::iota(scm.topo_order.begin(), scm.topo_order.end(), 0);
    rng.shuffle(scm.topo_order);

    // The target needs predecessors: at least one, two under confounding.
    if (edge_density > 0.0) {
        const int min_pos = confounded ? 2 : 1;
        auto it = std::find(scm.topo_order.begin(), scm.topo_order.end(), scm.target_index);
        const int cur = static_cast<int>(it - scm.topo_order.begin());
        if (cur < min_pos) {
            const int new_pos = min_pos + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_vars - min_pos)));
            std::swap(*it, scm.topo_order[static_cast<std::size_t>(new_pos)]);
        }
    }

    auto draw_weight = [&rng] {
        const double w = rng.uniform(0.5, 2.0);
        return rng.bernoulli(0.5) ? w : -w;
    };

    for (int i = 0; i < n_vars; ++i) {
        for (int j = i + 1; j < n_vars; ++j) {
            if (rng.bernoulli(edge_density)) {
                const int p = scm.topo_order[static_cast<std::size_t>(i)];
                const int c = scm.topo_order[static_cast<std::size_t>(j)];
                scm.parents[static_cast<std::size_t>(c)].push_back(p);
                scm.weights(p, c) = draw_weight();
            }
        }
    }
    for (int v = 0; v < n_vars; ++v) {
        scm.noise_var(v) = rng.uniform(0.5, 1.5);
        std::sort(scm.parents[static_cast<std::size_t>(v)].begin(), scm.parents[static_cast<std::size_t>(v)].end());
    }

    auto target_pos = [&] {
        return static_cast<int>(std::find(scm.topo_order.begin(), scm.topo_order.end(), scm.target_index) -
                                scm.topo_order.begin());
    };
    auto add_parent_of_target = [&] {
        const int tp = target_pos();
        for (int tries = 0; tries < 4 * n_vars; ++tries) {
            const int cand = scm.topo_order[static_cast<std::size_t>(rng.uniform_int(static_cast<std::uint64_t>(tp)))];
            auto& ps = scm.parents[static_cast<std::size_t>(scm.target_index)];
            if (std::find(ps.begin(), ps.end(), cand) == ps.end()) {
                ps.push_back(cand);
                std::sort(ps.begin(), ps.end());
                scm.weights(cand, scm.target_index) = draw_weight();
                return;
            }
        }
    };

    if (edge_density > 0.0) {
        const std::size_t min_parents = confounded ? 2 : 1;
        while (scm.parents[static_cast<std::size_t>(scm.target_index)].size() < min_parents) {
            add_parent_of_target();
        }
    }

    if (confounded && edge_density > 0.0) {
        auto& ps = scm.parents[static_cast<std::size_t>(scm.target_index)];
        const int hidden = ps[rng.uniform_int(ps.size())];
        scm.latent[static_cast<std::size_t>(hidden)] = true;
        // Give the hidden parent an observed child so it confounds.
        bool has_observed_child = false;
        for (int v = 0; v < n_vars && !has_observed_child; ++v) {
            if (v == scm.target_index || scm.latent[static_cast<std::size_t>(v)]) continue;
            const auto& pv = scm.parents[static_cast<std::size_t>(v)];
            has_observed_child = std::find(pv.begin(), pv.end(), hidden) != pv.end();
        }
        if (!has_observed_child) {
            const int hp = static_cast<int>(std::find(scm.topo_order.begin(), scm.topo_order.end(), hidden) -
                                            scm.topo_order.begin());
            std::vector<int> later;
            for (std::size_t i = static_cast<std::size_t>(hp) + 1; i < scm.topo_order.size(); ++i) {
                const int v = scm.topo_order[i];
                if (v != scm.target_index && !scm.latent[static_cast<std::size_t>(v)]) later.push_back(v);
            }
            if (!later.empty()) {
                const int child = later[rng.uniform_int(later.size())];
                scm.parents[static_cast<std::size_t>(child)].push_back(hidden);
                std::sort(scm.parents[static_cast<std::size_t>(child)].begin(),
                          scm.parents[static_cast<std::size_t>(child)].end());
                scm.weights(hidden, child) = draw_weight();
            }
        }
    }

    scm.check_acyclic();
    return scm;
}

Eigen::MatrixXd sample_scm(const Scm& scm, int n, const std::vector<InterventionSpec>& interventions,
                           Rng& rng) {
    if (n < 1) throw Error("sample_scm needs n >= 1");
    std::vector<const InterventionSpec*> by_node(static_cast<std::size_t>(scm.n_vars), nullptr);
    for (const auto& iv : interventions) {
        if (iv.node == scm.target_index) throw Error("interventions never target the outcome");
        by_node[static_cast<std::size_t>(iv.node)] = &iv;
    }

    Eigen::MatrixXd data(n, scm.n_vars);
    for (int r = 0; r < n; ++r) {
        for (int v : scm.topo_order) {
            const InterventionSpec* iv = by_node[static_cast<std::size_t>(v)];
            if (iv && iv->kind == InterventionSpec::Kind::DoConstant) {
                data(r, v) = iv->value;
                continue;
            }
            if (iv && iv->kind == InterventionSpec::Kind::DoGaussian) {
                data(r, v) = rng.normal(iv->mean, std::sqrt(iv->var));
                continue;
            }
            double x = rng.normal(0.0, std::sqrt(scm.noise_var(v)));
            for (int p : scm.parents[static_cast<std::size_t>(v)]) x += scm.weights(p, v) * data(r, p);
            if (iv) x += iv->shift;
            data(r, v) = x;
        }
    }
    return data;
}

EnvDataset make_setting(const Scm& scm, std::uint64_t seed, const ToySettingConfig& cfg) {
    const std::vector<int> obs = scm.observed_vars();
    EnvDataset data;
    data.outcome = OutcomeKind::Regression;
    for (int v : obs) data.var_names.push_back("x" + std::to_string(v));

    auto take = [&](const Eigen::MatrixXd& full, const std::string& tag) {
        Environment env;
        env.tag = tag;
        env.x.resize(full.rows(), static_cast<Eigen::Index>(obs.size()));
        for (std::size_t c = 0; c < obs.size(); ++c) env.x.col(static_cast<Eigen::Index>(c)) = full.col(obs[c]);
        env.y = full.col(scm.target_index);
        data.envs.push_back(std::move(env));
    };

    {
        Rng rng(Rng::derive(seed, 1));
        take(sample_scm(scm, cfg.observational_rows, {}, rng), "obs");
    }
    for (std::size_t k = 0; k < obs.size(); ++k) {
        Rng rng(Rng::derive(seed, 100 + k));
        InterventionSpec iv;
        iv.node = obs[k];
        iv.kind = InterventionSpec::Kind::DoGaussian;
        const double mag = rng.uniform(cfg.mean_lo, cfg.mean_hi);
        iv.mean = rng.bernoulli(0.5) ? mag : -mag;
        iv.var = cfg.intervention_var;
        take(sample_scm(scm, cfg.interventional_rows, {iv}, rng), "int_x" + std::to_string(obs[k]));
    }
    return data;
}

EnvDataset make_finite_setting(const Scm& scm, std::uint64_t seed) {
    ToySettingConfig cfg;
    cfg.observational_rows = 1000;
    cfg.interventional_rows = 1000;
    return make_setting(scm, seed, cfg);
}

EnvDataset make_abcd_setting(const Scm& scm, std::uint64_t seed) {
    ToySettingConfig cfg;
    cfg.observational_rows = 1000;
    cfg.interventional_rows = 10;
    return make_setting(scm, seed, cfg);
}

void SurvivalCohortSpec::validate() const {
    if (n_trial1 < 1 || n_trial2 < 1) throw Error("cohort trials must be non-empty");
    if (censoring_rate < 0.0 || censoring_rate >= 1.0) throw Error("censoring rate must be in [0, 1)");
    int causal = 0, null = 0;
    for (const auto& c : covariates) {
        if (!std::isfinite(c.beta)) throw Error("covariate beta must be finite");
        if (c.beta != 0.0) ++causal;
        else ++null;
    }
    if (causal < 2 || null < 1) throw Error("cohort needs >= 2 causal and >= 1 null covariate");
}

std::set<int> SurvivalCohortSpec::causal_columns() const {
    std::set<int> s;
    for (std::size_t i = 0; i < covariates.size(); ++i) {
        if (covariates[i].beta != 0.0) s.insert(static_cast<int>(i));
    }
    return s;
}

EnvDataset gen_survival_cohort(const SurvivalCohortSpec& spec, std::uint64_t seed) {
    spec.validate();
    const int p = static_cast<int>(spec.covariates.size());
    EnvDataset data;
    data.outcome = OutcomeKind::Survival;
    for (const auto& c : spec.covariates) data.var_names.push_back(c.name);

    Rng rng(Rng::derive(seed, 0xc0));
    std::vector<Eigen::MatrixXd> xs;
    std::vector<Eigen::VectorXd> rates;
    for (int trial = 0; trial < 2; ++trial) {
        const int n = trial == 0 ? spec.n_trial1 : spec.n_trial2;
        Eigen::MatrixXd x(n, p);
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < p; ++c) {
                const auto& cv = spec.covariates[static_cast<std::size_t>(c)];
                if (cv.uniform) {
                    x(r, c) = rng.uniform(cv.lo, cv.hi);
                } else if (cv.kind == CovariateSpec::Kind::Binary) {
                    x(r, c) = rng.bernoulli(trial == 0 ? cv.p1 : cv.p2) ? 1.0 : 0.0;
                } else {
                    x(r, c) = trial == 0 ? rng.normal(cv.mean1, cv.sd1) : rng.normal(cv.mean2, cv.sd2);
                }
            }
        }
        Eigen::VectorXd rate(n);
        for (int r = 0; r < n; ++r) {
            double lp = 0.0;
            for (int c = 0; c < p; ++c) lp += spec.covariates[static_cast<std::size_t>(c)].beta * x(r, c);
            rate(r) = spec.baseline_hazard * std::exp(lp);
        }
        xs.push_back(std::move(x));
        rates.push_back(std::move(rate));
    }

    // Censoring rate c solves mean_i c / (c + rate_i) = target via bisection.
    double censor_rate = 0.0;
    if (spec.censoring_rate > 0.0) {
        auto censored_fraction = [&](double c) {
            double s = 0.0;
            long long n = 0;
            for (const auto& rate : rates) {
                for (Eigen::Index i = 0; i < rate.size(); ++i) {
                    s += c / (c + rate(i));
                    ++n;
                }
            }
            return s / static_cast<double>(n);
        };
        double lo = 1e-12, hi = 1.0;
        while (censored_fraction(hi) < spec.censoring_rate) hi *= 2.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (censored_fraction(mid) < spec.censoring_rate ? lo : hi) = mid;
        }
        censor_rate = 0.5 * (lo + hi);
    }

    for (int trial = 0; trial < 2; ++trial) {
        const int n = trial == 0 ? spec.n_trial1 : spec.n_trial2;
        Environment env;
        env.tag = trial == 0 ? "trial-1" : "trial-2";
        env.x = xs[static_cast<std::size_t>(trial)];
        env.time.resize(n);
        env.event.resize(n);
        for (int r = 0; r < n; ++r) {
            const double t_event = rng.exponential(rates[static_cast<std::size_t>(trial)](r));
            if (censor_rate > 0.0) {
                const double t_censor = rng.exponential(censor_rate);
                env.time(r) = std::min(t_event, t_censor);
                env.event(r) = t_event <= t_censor ? 1.0 : 0.0;
            } else {
                env.time(r) = t_event;
                env.event(r) = 1.0;
            }
        }
        data.envs.push_back(std::move(env));
    }
    return data;
}

SurvivalCohortSpec default_cohort_spec() {
    SurvivalCohortSpec spec;
    spec.n_trial1 = 600;
    spec.n_trial2 = 600;
    spec.baseline_hazard = 0.1;
    spec.censoring_rate = 0.3;

    CovariateSpec grade;
    grade.name = "grade_high";
    grade.kind = CovariateSpec::Kind::Binary;
    grade.beta = std::log(2.0);
    grade.p1 = 0.35;
    grade.p2 = 0.55;

    CovariateSpec immune;
    immune.name = "immune_marker";
    immune.kind = CovariateSpec::Kind::Binary;
    immune.beta = -std::log(2.0);
    immune.p1 = 0.5;
    immune.p2 = 0.3;

    CovariateSpec invasion;
    invasion.name = "invasion_depth";
    invasion.kind = CovariateSpec::Kind::Continuous;
    invasion.beta = 0.5 * std::log(2.0);
    invasion.mean1 = 0.0;
    invasion.sd1 = 1.0;
    invasion.mean2 = 0.6;
    invasion.sd2 = 1.2;

    CovariateSpec patient_id;
    patient_id.name = "patient_id";
    patient_id.beta = 0.0;
    patient_id.uniform = true;
    patient_id.lo = 0.0;
    patient_id.hi = 1.0;

    CovariateSpec area;
    area.name = "tissue_area";
    area.kind = CovariateSpec::Kind::Continuous;
    area.beta = 0.0;
    area.mean1 = 1.0;
    area.sd1 = 0.2;
    area.mean2 = 1.1;
    area.sd2 = 0.25;

    spec.covariates = {grade, immune, invasion, patient_id, area};
    return spec;
}

}  // namespace autoci
