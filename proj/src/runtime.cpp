#include "autoci/runtime.hpp"

#include <cmath>

#include "autoci/cox.hpp"
#include "autoci/errors.hpp"

namespace autoci {

LossSpec LossSpec::mse(Eigen::VectorXd targets) {
    LossSpec l;
    l.kind = Kind::Mse;
    l.y = std::move(targets);
    return l;
}

LossSpec LossSpec::cox(Eigen::VectorXd time, Eigen::VectorXd event, std::vector<int> env_ids) {
    LossSpec l;
    l.kind = Kind::Cox;
    l.time = std::move(time);
    l.event = std::move(event);
    l.env_ids = std::move(env_ids);
    return l;
}

namespace {

Eigen::MatrixXd glorot(int rows, int cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(-limit, limit);
    }
    return m;
}

void init_prims(const Term& t, int n_vars, Rng& rng, const RuntimeConfig& cfg, ParamStore& out) {
    if (t.kind == TermKind::Prim) {
        if (t.prim == PrimName::Nn) {
            NnParams p;
            const int h = cfg.hidden_width;
            p.w1 = glorot(n_vars, h, rng);
            p.b1 = Eigen::VectorXd::Zero(h);
            p.w2 = glorot(h, h, rng);
            p.b2 = Eigen::VectorXd::Zero(h);
            p.w3 = glorot(h, 1, rng);
            p.b3 = Eigen::VectorXd::Zero(1);
            out.nn.emplace(t.instance_id, std::move(p));
        } else {
            PredParams p;
            p.theta = Eigen::VectorXd::Zero(n_vars);
            p.mask = Eigen::VectorXd::Ones(n_vars);
            out.pred.emplace(t.instance_id, std::move(p));
        }
        return;
    }
    for (const auto& c : t.children) init_prims(c, n_vars, rng, cfg, out);
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    const Eigen::Index cols = rows == 0 ? 0 : static_cast<Eigen::Index>(j[0].size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
    return v;
}

}  // namespace

ParamStore ParamStore::init(const Term& term, int n_vars, Rng& rng, const RuntimeConfig& cfg) {
    ParamStore store;
    init_prims(term, n_vars, rng, cfg, store);
    return store;
}

nlohmann::json ParamStore::to_json() const {
    nlohmann::json j;
    j["nn"] = nlohmann::json::object();
    j["pred"] = nlohmann::json::object();
    for (const auto& [id, p] : nn) {
        nlohmann::json e;
        e["w1"] = matrix_json(p.w1);
        e["b1"] = vector_json(p.b1);
        e["w2"] = matrix_json(p.w2);
        e["b2"] = vector_json(p.b2);
        e["w3"] = matrix_json(p.w3);
        e["b3"] = vector_json(p.b3);
        j["nn"][std::to_string(id)] = std::move(e);
    }
    for (const auto& [id, p] : pred) {
        nlohmann::json e;
        e["theta"] = vector_json(p.theta);
        e["mask"] = vector_json(p.mask);
        j["pred"][std::to_string(id)] = std::move(e);
    }
    return j;
}

ParamStore ParamStore::from_json(const nlohmann::json& j) {
    ParamStore store;
    for (auto it = j.at("nn").begin(); it != j.at("nn").end(); ++it) {
        NnParams p;
        p.w1 = matrix_from_json(it.value().at("w1"));
        p.b1 = vector_from_json(it.value().at("b1"));
        p.w2 = matrix_from_json(it.value().at("w2"));
        p.b2 = vector_from_json(it.value().at("b2"));
        p.w3 = matrix_from_json(it.value().at("w3"));
        p.b3 = vector_from_json(it.value().at("b3"));
        store.nn.emplace(std::stoi(it.key()), std::move(p));
    }
    for (auto it = j.at("pred").begin(); it != j.at("pred").end(); ++it) {
        PredParams p;
        p.theta = vector_from_json(it.value().at("theta"));
        p.mask = vector_from_json(it.value().at("mask"));
        store.pred.emplace(std::stoi(it.key()), std::move(p));
    }
    return store;
}

Trace::Trace(const Term& term, const ParamStore& params, int n_vars)
    : term_(&term), params_(&params), n_vars_(n_vars) {
    type_of(term, n_vars);  // reject generic programs up front
}

int Trace::new_node(Eigen::MatrixXd v, const char* where) {
    if (!v.allFinite()) throw NonFiniteValue(where);
    vals_.push_back(std::move(v));
    return static_cast<int>(vals_.size()) - 1;
}

Eigen::MatrixXd& Trace::grad(int slot) {
    if (grads_[static_cast<std::size_t>(slot)].size() == 0) {
        grads_[static_cast<std::size_t>(slot)] =
            Eigen::MatrixXd::Zero(vals_[static_cast<std::size_t>(slot)].rows(), vals_[static_cast<std::size_t>(slot)].cols());
    }
    return grads_[static_cast<std::size_t>(slot)];
}

Trace::ValRef Trace::eval(const Term& t, const ValRef& in) {
    switch (t.kind) {
        case TermKind::Prim: {
            if (t.prim == PrimName::Pred) {
                const PredParams& p = params_->pred.at(t.instance_id);
                ValRef out;
                out.type = in.type;
                const int id = t.instance_id;
                for (int i = 0; i < static_cast<int>(in.slots.size()); ++i) {
                    const double gate = p.mask(i) / (1.0 + std::exp(-p.theta(i)));
                    const int xs = in.slots[static_cast<std::size_t>(i)];
                    const int os = new_node(vals_[static_cast<std::size_t>(xs)] * gate, "pred");
                    out.slots.push_back(os);
                    back_ops_.push_back([this, id, i, xs, os] {
                        const PredParams& pp = params_->pred.at(id);
                        const double sig = 1.0 / (1.0 + std::exp(-pp.theta(i)));
                        const Eigen::MatrixXd& go = grad(os);
                        // Multiplying by mask keeps rejected coordinates at exactly +0.0.
                        grad(xs) += go * (pp.mask(i) * sig);
                        grad_out_.pred_theta.at(id)(i) +=
                            pp.mask(i) * sig * (1.0 - sig) * (go.array() * vals_[static_cast<std::size_t>(xs)].array()).sum();
                    });
                }
                return out;
            }
            // nn: two tanh hidden layers, linear scalar output.
            const NnParams& p = params_->nn.at(t.instance_id);
            const int xs = in.slots[0];
            const Eigen::MatrixXd& x = vals_[static_cast<std::size_t>(xs)];
            Eigen::MatrixXd h1 = ((x * p.w1).rowwise() + p.b1.transpose()).array().tanh();
            const int h1s = new_node(std::move(h1), "nn.h1");
            Eigen::MatrixXd h2 = ((vals_[static_cast<std::size_t>(h1s)] * p.w2).rowwise() + p.b2.transpose()).array().tanh();
            const int h2s = new_node(std::move(h2), "nn.h2");
            const int os =
                new_node((vals_[static_cast<std::size_t>(h2s)] * p.w3).rowwise() + p.b3.transpose(), "nn.out");
            const int id = t.instance_id;
            back_ops_.push_back([this, id, xs, h1s, h2s, os] {
                const NnParams& pp = params_->nn.at(id);
                NnParams& g = grad_out_.nn.at(id);
                const Eigen::MatrixXd& go = grad(os);
                const Eigen::MatrixXd& h2v = vals_[static_cast<std::size_t>(h2s)];
                const Eigen::MatrixXd& h1v = vals_[static_cast<std::size_t>(h1s)];
                const Eigen::MatrixXd& xv = vals_[static_cast<std::size_t>(xs)];
                g.w3 += h2v.transpose() * go;
                g.b3 += go.colwise().sum().transpose();
                Eigen::MatrixXd ga2 = (go * pp.w3.transpose()).array() * (1.0 - h2v.array().square());
                g.w2 += h1v.transpose() * ga2;
                g.b2 += ga2.colwise().sum().transpose();
                Eigen::MatrixXd ga1 = (ga2 * pp.w2.transpose()).array() * (1.0 - h1v.array().square());
                g.w1 += xv.transpose() * ga1;
                g.b1 += ga1.colwise().sum().transpose();
                grad(xs) += ga1 * pp.w1.transpose();
            });
            ValRef out;
            out.type = DslType::tensor(1);
            out.slots.push_back(os);
            return out;
        }

        case TermKind::Comp: {
            ValRef mid = eval(t.inner(), in);
            return eval(t.outer(), mid);
        }

        case TermKind::Cat: {
            ValRef lst = eval(t.inner(), in);
            const int k = static_cast<int>(lst.slots.size());
            const Eigen::Index batch = vals_[static_cast<std::size_t>(lst.slots[0])].rows();
            Eigen::MatrixXd catv(batch, k);
            for (int i = 0; i < k; ++i) catv.col(i) = vals_[static_cast<std::size_t>(lst.slots[static_cast<std::size_t>(i)])];
            const int os = new_node(std::move(catv), "cat");
            const std::vector<int> elems = lst.slots;
            back_ops_.push_back([this, os, elems] {
                const Eigen::MatrixXd& go = grad(os);
                for (int i = 0; i < static_cast<int>(elems.size()); ++i) {
                    grad(elems[static_cast<std::size_t>(i)]) += go.col(i);
                }
            });
            ValRef out;
            out.type = DslType::tensor(k);
            out.slots.push_back(os);
            return out;
        }

        case TermKind::Filter:
            // The gate is itself the element-wise filter.
            return eval(t.inner(), in);

        case TermKind::Map: {
            ValRef out;
            std::vector<ValRef> mapped;
            for (int i = 0; i < static_cast<int>(in.slots.size()); ++i) {
                ValRef elem;
                elem.type = in.type.elem();
                elem.slots.push_back(in.slots[static_cast<std::size_t>(i)]);
                mapped.push_back(eval(t.inner(), elem));
            }
            out.type = DslType::list(mapped[0].type, static_cast<int>(mapped.size()));
            for (const auto& m : mapped) out.slots.push_back(m.slots[0]);
            return out;
        }

        case TermKind::Fold: {
            const DslType step_type = type_of(t.inner(), n_vars_);
            const int acc_dim = step_type.ret().dim();
            const Eigen::Index batch = vals_[static_cast<std::size_t>(in.slots[0])].rows();
            int acc = new_node(Eigen::MatrixXd::Constant(batch, acc_dim, t.fold_init), "fold.init");
            for (std::size_t i = 0; i < in.slots.size(); ++i) {
                const int elem = in.slots[i];
                const Eigen::Index ed = vals_[static_cast<std::size_t>(elem)].cols();
                Eigen::MatrixXd cc(batch, acc_dim + ed);
                cc.leftCols(acc_dim) = vals_[static_cast<std::size_t>(acc)];
                cc.rightCols(ed) = vals_[static_cast<std::size_t>(elem)];
                const int ccs = new_node(std::move(cc), "fold.concat");
                const int acc_in = acc;
                back_ops_.push_back([this, ccs, acc_in, elem, acc_dim] {
                    const Eigen::MatrixXd& go = grad(ccs);
                    grad(acc_in) += go.leftCols(acc_dim);
                    grad(elem) += go.rightCols(go.cols() - acc_dim);
                });
                ValRef step_in;
                step_in.type = step_type.arg();
                step_in.slots.push_back(ccs);
                acc = eval(t.inner(), step_in).slots[0];
            }
            ValRef out;
            out.type = step_type.ret();
            out.slots.push_back(acc);
            return out;
        }
    }
    throw Error("unreachable term kind");
}

void Trace::run(const Eigen::MatrixXd& input) {
    if (input.cols() != n_vars_) throw Error("input has wrong variable count");
    if (input.rows() < 1) throw Error("batch must be non-empty");
    vals_.clear();
    grads_.clear();
    back_ops_.clear();
    grad_out_ = GradientSet{};
    loss_slot_ = -1;

    for (const auto& [id, p] : params_->nn) {
        NnParams g;
        g.w1 = Eigen::MatrixXd::Zero(p.w1.rows(), p.w1.cols());
        g.b1 = Eigen::VectorXd::Zero(p.b1.size());
        g.w2 = Eigen::MatrixXd::Zero(p.w2.rows(), p.w2.cols());
        g.b2 = Eigen::VectorXd::Zero(p.b2.size());
        g.w3 = Eigen::MatrixXd::Zero(p.w3.rows(), p.w3.cols());
        g.b3 = Eigen::VectorXd::Zero(p.b3.size());
        grad_out_.nn.emplace(id, std::move(g));
    }
    for (const auto& [id, p] : params_->pred) {
        grad_out_.pred_theta.emplace(id, Eigen::VectorXd::Zero(p.theta.size()));
    }

    input_ref_ = ValRef{};
    input_ref_.type = DslType::list(DslType::tensor(1), n_vars_);
    for (int i = 0; i < n_vars_; ++i) {
        input_ref_.slots.push_back(new_node(input.col(i), "input"));
    }
    out_ref_ = eval(*term_, input_ref_);

    output_ = BatchValue{};
    output_.type = out_ref_.type;
    for (int s : out_ref_.slots) output_.parts.push_back(vals_[static_cast<std::size_t>(s)]);
    ran_ = true;
}

void Trace::attach_loss(const LossSpec& loss) {
    if (!ran_) throw Error("attach_loss before run");
    switch (loss.kind) {
        case LossSpec::Kind::Sum: {
            double total = 0.0;
            for (int s : out_ref_.slots) total += vals_[static_cast<std::size_t>(s)].sum();
            const int ls = new_node(Eigen::MatrixXd::Constant(1, 1, total), "sum_loss");
            const std::vector<int> outs = out_ref_.slots;
            back_ops_.push_back([this, ls, outs] {
                const double gl = grad(ls)(0, 0);
                for (int s : outs) grad(s).array() += gl;
            });
            loss_slot_ = ls;
            break;
        }
        case LossSpec::Kind::Mse: {
            const int os = out_ref_.slots.at(0);
            const Eigen::MatrixXd& o = vals_[static_cast<std::size_t>(os)];
            if (o.cols() != 1 || o.rows() != loss.y.size()) throw Error("mse target shape mismatch");
            const Eigen::VectorXd diff = o.col(0) - loss.y;
            const double v = diff.squaredNorm() / static_cast<double>(o.rows());
            const int ls = new_node(Eigen::MatrixXd::Constant(1, 1, v), "mse_loss");
            const Eigen::VectorXd y = loss.y;
            back_ops_.push_back([this, ls, os, y] {
                const double gl = grad(ls)(0, 0);
                const Eigen::MatrixXd& o2 = vals_[static_cast<std::size_t>(os)];
                grad(os) += gl * 2.0 / static_cast<double>(o2.rows()) * (o2.col(0) - y);
            });
            loss_slot_ = ls;
            break;
        }
        case LossSpec::Kind::Cox: {
            const int os = out_ref_.slots.at(0);
            const Eigen::MatrixXd& o = vals_[static_cast<std::size_t>(os)];
            if (o.cols() != 1 || o.rows() != loss.time.size()) throw Error("cox shape mismatch");
            Eigen::VectorXd g(o.rows());
            const double v = cox_pl_loss(o.col(0), loss.time, loss.event, loss.env_ids, &g);
            const int ls = new_node(Eigen::MatrixXd::Constant(1, 1, v), "cox_loss");
            back_ops_.push_back([this, ls, os, g] {
                grad(os) += grad(ls)(0, 0) * g;
            });
            loss_slot_ = ls;
            break;
        }
    }
}

double Trace::loss_value() const {
    if (loss_slot_ < 0) throw Error("no loss attached");
    return vals_[static_cast<std::size_t>(loss_slot_)](0, 0);
}

GradientSet Trace::backward() {
    if (loss_slot_ < 0) throw Error("backward requires a scalar loss head");
    grads_.assign(vals_.size(), Eigen::MatrixXd());
    grad(loss_slot_)(0, 0) = 1.0;
    for (auto it = back_ops_.rbegin(); it != back_ops_.rend(); ++it) (*it)();

    grad_out_.input.clear();
    for (int s : input_ref_.slots) {
        grad_out_.input.push_back(grad(s).col(0));
    }
    for (const auto& [id, g] : grad_out_.nn) {
        (void)id;
        if (!g.w1.allFinite() || !g.w2.allFinite() || !g.w3.allFinite() || !g.b1.allFinite() ||
            !g.b2.allFinite() || !g.b3.allFinite()) {
            throw NonFiniteValue("backward nn gradient");
        }
    }
    for (const auto& [id, g] : grad_out_.pred_theta) {
        (void)id;
        if (!g.allFinite()) throw NonFiniteValue("backward pred gradient");
    }
    return grad_out_;
}

BatchValue eval_forward(const Term& term, const ParamStore& params, const Eigen::MatrixXd& input) {
    Trace t(term, params, static_cast<int>(input.cols()));
    t.run(input);
    return t.output();
}

AdamState AdamState::init(const ParamStore& params) {
    AdamState s;
    for (const auto& [id, p] : params.nn) {
        NnParams z;
        z.w1 = Eigen::MatrixXd::Zero(p.w1.rows(), p.w1.cols());
        z.b1 = Eigen::VectorXd::Zero(p.b1.size());
        z.w2 = Eigen::MatrixXd::Zero(p.w2.rows(), p.w2.cols());
        z.b2 = Eigen::VectorXd::Zero(p.b2.size());
        z.w3 = Eigen::MatrixXd::Zero(p.w3.rows(), p.w3.cols());
        z.b3 = Eigen::VectorXd::Zero(p.b3.size());
        s.m_nn.emplace(id, z);
        s.v_nn.emplace(id, z);
    }
    for (const auto& [id, p] : params.pred) {
        s.m_theta.emplace(id, Eigen::VectorXd::Zero(p.theta.size()));
        s.v_theta.emplace(id, Eigen::VectorXd::Zero(p.theta.size()));
    }
    return s;
}

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void adam_update(Eigen::Ref<Eigen::MatrixXd> p, const Eigen::MatrixXd& g, Eigen::MatrixXd& m,
                 Eigen::MatrixXd& v, double lr, double bc1, double bc2) {
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    v = kBeta2 * v.array().matrix() + (1.0 - kBeta2) * g.array().square().matrix();
    p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + kAdamEps);
}

void adam_update_vec(Eigen::VectorXd& p, const Eigen::VectorXd& g, Eigen::VectorXd& m,
                     Eigen::VectorXd& v, double lr, double bc1, double bc2) {
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    v = kBeta2 * v.array().matrix() + (1.0 - kBeta2) * g.array().square().matrix();
    p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + kAdamEps);
}

}  // namespace

void adam_step(ParamStore& params, const GradientSet& grads, AdamState& state, double lr) {
    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step_count));
    for (auto& [id, p] : params.nn) {
        const NnParams& g = grads.nn.at(id);
        NnParams& m = state.m_nn.at(id);
        NnParams& v = state.v_nn.at(id);
        adam_update(p.w1, g.w1, m.w1, v.w1, lr, bc1, bc2);
        adam_update(p.w2, g.w2, m.w2, v.w2, lr, bc1, bc2);
        adam_update(p.w3, g.w3, m.w3, v.w3, lr, bc1, bc2);
        adam_update_vec(p.b1, g.b1, m.b1, v.b1, lr, bc1, bc2);
        adam_update_vec(p.b2, g.b2, m.b2, v.b2, lr, bc1, bc2);
        adam_update_vec(p.b3, g.b3, m.b3, v.b3, lr, bc1, bc2);
    }
    for (auto& [id, p] : params.pred) {
        const Eigen::VectorXd& g = grads.pred_theta.at(id);
        adam_update_vec(p.theta, g, state.m_theta.at(id), state.v_theta.at(id), lr, bc1, bc2);
    }
}

namespace {

double loss_at(const Term& term, const ParamStore& params, const Eigen::MatrixXd& input,
               const LossSpec& loss) {
    Trace t(term, params, static_cast<int>(input.cols()));
    t.run(input);
    t.attach_loss(loss);
    return t.loss_value();
}

double rel_err(double ad, double fd) {
    const double denom = std::max(std::abs(ad) + std::abs(fd), 1e-3);
    return std::abs(ad - fd) / denom;
}

}  // namespace

double grad_check(const Term& term, const ParamStore& params, const Eigen::MatrixXd& input,
                  const LossSpec& loss, double eps) {
    Trace t(term, params, static_cast<int>(input.cols()));
    t.run(input);
    t.attach_loss(loss);
    const GradientSet ad = t.backward();

    double worst = 0.0;
    ParamStore p = params;
    auto probe_entry = [&](double& slot, double adval) {
        const double keep = slot;
        slot = keep + eps;
        const double up = loss_at(term, p, input, loss);
        slot = keep - eps;
        const double dn = loss_at(term, p, input, loss);
        slot = keep;
        worst = std::max(worst, rel_err(adval, (up - dn) / (2.0 * eps)));
    };

    for (auto& [id, np] : p.nn) {
        const NnParams& g = ad.nn.at(id);
        auto probe_mat = [&](Eigen::MatrixXd& m, const Eigen::MatrixXd& gm) {
            for (Eigen::Index r = 0; r < m.rows(); ++r) {
                for (Eigen::Index c = 0; c < m.cols(); ++c) probe_entry(m(r, c), gm(r, c));
            }
        };
        auto probe_vec = [&](Eigen::VectorXd& v, const Eigen::VectorXd& gv) {
            for (Eigen::Index i = 0; i < v.size(); ++i) probe_entry(v(i), gv(i));
        };
        probe_mat(np.w1, g.w1);
        probe_vec(np.b1, g.b1);
        probe_mat(np.w2, g.w2);
        probe_vec(np.b2, g.b2);
        probe_mat(np.w3, g.w3);
        probe_vec(np.b3, g.b3);
    }
    for (auto& [id, pp] : p.pred) {
        const Eigen::VectorXd& g = ad.pred_theta.at(id);
        for (Eigen::Index i = 0; i < pp.theta.size(); ++i) probe_entry(pp.theta(i), g(i));
    }

    Eigen::MatrixXd x = input;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            const double keep = x(r, c);
            x(r, c) = keep + eps;
            const double up = loss_at(term, params, x, loss);
            x(r, c) = keep - eps;
            const double dn = loss_at(term, params, x, loss);
            x(r, c) = keep;
            worst = std::max(worst, rel_err(ad.input[static_cast<std::size_t>(c)](r), (up - dn) / (2.0 * eps)));
        }
    }
    return worst;
}

}  // namespace autoci
