#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "json.hpp"

#include "autoci/dsl.hpp"
#include "autoci/rng.hpp"

namespace autoci {

struct RuntimeConfig {
    int hidden_width = 16;  // nn: 2 hidden tanh layers of this width, linear output
};

struct NnParams {
    Eigen::MatrixXd w1, w2, w3;
    Eigen::VectorXd b1, b2, b3;
};

struct PredParams {
    Eigen::VectorXd theta;  // gate logits
    Eigen::VectorXd mask;   // entries exactly 0 or 1; flipped only by mask search
};

// Per-instance parameters of every Prim in a term, keyed by canonical
// instance id. Serializable to a JSON checkpoint (see README for the schema).
struct ParamStore {
    std::map<int, NnParams> nn;
    std::map<int, PredParams> pred;

    // Fresh parameters for `term`: nn weights Glorot-uniform from `rng`,
    // biases zero; pred theta zero (gate probability 0.5), mask all-ones.
    static ParamStore init(const Term& term, int n_vars, Rng& rng, const RuntimeConfig& cfg = {});

    nlohmann::json to_json() const;
    static ParamStore from_json(const nlohmann::json& j);
};

// Gradients mirroring ParamStore shapes plus the gradient w.r.t. each input
// variable (one batch-length vector per variable). pred masks receive no
// gradient by construction.
struct GradientSet {
    std::map<int, NnParams> nn;
    std::map<int, Eigen::VectorXd> pred_theta;
    std::vector<Eigen::VectorXd> input;
};

// Value shaped per DslType with a leading batch dimension. Tensor values use
// parts[0] (batch x dim); list values hold one part per element.
struct BatchValue {
    DslType type = DslType::tensor(1);
    std::vector<Eigen::MatrixXd> parts;
};

struct LossSpec {
    enum class Kind { Sum, Mse, Cox };
    Kind kind = Kind::Sum;
    Eigen::VectorXd y;  // Mse target
    Eigen::VectorXd time, event;
    std::vector<int> env_ids;  // Cox stratification

    static LossSpec sum() { return {}; }
    static LossSpec mse(Eigen::VectorXd targets);
    static LossSpec cox(Eigen::VectorXd time, Eigen::VectorXd event, std::vector<int> env_ids);
};

// One forward evaluation of a term on a batch, retaining everything backward
// needs. The input matrix holds one row per sample and one column per
// variable. Throws NonFiniteValue if any intermediate is NaN/Inf.
class Trace {
public:
    Trace(const Term& term, const ParamStore& params, int n_vars);

    void run(const Eigen::MatrixXd& input);
    const BatchValue& output() const { return output_; }

    void attach_loss(const LossSpec& loss);
    double loss_value() const;

    // Exact reverse-mode gradients of the attached scalar loss. Input-gradient
    // coordinate i is exactly +0.0 whenever every gate masks variable i.
    GradientSet backward();

private:
    struct ValRef {
        DslType type = DslType::tensor(1);
        std::vector<int> slots;
    };

    int new_node(Eigen::MatrixXd v, const char* where);
    ValRef eval(const Term& t, const ValRef& in);
    Eigen::MatrixXd& grad(int slot);

    const Term* term_;
    const ParamStore* params_;
    int n_vars_;
    std::vector<Eigen::MatrixXd> vals_;
    std::vector<Eigen::MatrixXd> grads_;
    std::vector<std::function<void()>> back_ops_;
    ValRef input_ref_;
    ValRef out_ref_;
    BatchValue output_;
    int loss_slot_ = -1;
    bool ran_ = false;
    GradientSet grad_out_;
};

// Convenience one-shot forward.
BatchValue eval_forward(const Term& term, const ParamStore& params, const Eigen::MatrixXd& input);

struct AdamState {
    std::map<int, NnParams> m_nn, v_nn;
    std::map<int, Eigen::VectorXd> m_theta, v_theta;
    long step_count = 0;

    static AdamState init(const ParamStore& params);
};

// Standard Adam (beta1 0.9, beta2 0.999, eps 1e-8). Masks are untouched;
// masked theta coordinates receive exactly-zero gradients and therefore
// accumulate no fresh moment.
void adam_step(ParamStore& params, const GradientSet& grads, AdamState& state, double lr);

// Max guarded relative error |ad - fd| / max(|ad| + |fd|, 1e-3) between
// reverse-mode and central finite differences over all parameters and inputs.
double grad_check(const Term& term, const ParamStore& params, const Eigen::MatrixXd& input,
                  const LossSpec& loss, double eps = 1e-5);

}  // namespace autoci
