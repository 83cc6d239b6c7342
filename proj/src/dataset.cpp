#include "autoci/dataset.hpp"

#include "autoci/csv.hpp"

namespace autoci {

void EnvDataset::validate() const {
    if (envs.size() < 2) throw DegenerateEnvironment("need >= 2 environments");
    const int n = n_vars();
    for (const auto& e : envs) {
        if (e.x.cols() != n) throw Error("environment '" + e.tag + "' has wrong variable count");
        if (e.rows() < 1) throw DegenerateEnvironment("environment '" + e.tag + "' is empty");
        if (outcome == OutcomeKind::Regression) {
            if (e.y.size() != e.rows()) throw Error("outcome length mismatch in '" + e.tag + "'");
        } else {
            if (e.time.size() != e.rows() || e.event.size() != e.rows()) {
                throw Error("survival outcome length mismatch in '" + e.tag + "'");
            }
        }
        if (!e.x.allFinite()) throw NonFiniteValue("dataset environment '" + e.tag + "'");
    }
}

EnvDataset::Pooled EnvDataset::pooled() const {
    Pooled p;
    const Eigen::Index total = total_rows();
    p.x.resize(total, n_vars());
    if (outcome == OutcomeKind::Regression) {
        p.y.resize(total);
    } else {
        p.time.resize(total);
        p.event.resize(total);
    }
    p.env_ids.resize(static_cast<std::size_t>(total));
    Eigen::Index at = 0;
    for (std::size_t u = 0; u < envs.size(); ++u) {
        const auto& e = envs[u];
        p.x.middleRows(at, e.rows()) = e.x;
        if (outcome == OutcomeKind::Regression) {
            p.y.segment(at, e.rows()) = e.y;
        } else {
            p.time.segment(at, e.rows()) = e.time;
            p.event.segment(at, e.rows()) = e.event;
        }
        for (Eigen::Index r = 0; r < e.rows(); ++r) p.env_ids[static_cast<std::size_t>(at + r)] = static_cast<int>(u);
        at += e.rows();
    }
    return p;
}

void EnvDataset::write_csv(std::ostream& out) const {
    CsvWriter w(out);
    w.field(std::string("env_tag"));
    for (const auto& v : var_names) w.field(v);
    if (outcome == OutcomeKind::Regression) {
        w.field(std::string("y"));
    } else {
        w.field(std::string("time"));
        w.field(std::string("event"));
    }
    w.endrow();
    for (const auto& e : envs) {
        for (Eigen::Index r = 0; r < e.rows(); ++r) {
            w.field(e.tag);
            for (int c = 0; c < n_vars(); ++c) w.field(e.x(r, c));
            if (outcome == OutcomeKind::Regression) {
                w.field(e.y(r));
            } else {
                w.field(e.time(r));
                w.field(e.event(r));
            }
            w.endrow();
        }
    }
}

}  // namespace autoci
