#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace autoci {

// Shortest round-trippable decimal rendering, stable across runs. All report
// files go through this so reruns are byte-identical.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) {
        for (int prec = 1; prec < 17; ++prec) {
            char shorter[40];
            std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
            std::sscanf(shorter, "%lf", &back);
            if (back == v) return shorter;
        }
    }
    return buf;
}

class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}

    CsvWriter& field(const std::string& s) {
        sep();
        bool quote = s.find_first_of(",\"\n") != std::string::npos;
        if (!quote) {
            out_ << s;
        } else {
            out_ << '"';
            for (char c : s) {
                if (c == '"') out_ << '"';
                out_ << c;
            }
            out_ << '"';
        }
        return *this;
    }

    CsvWriter& field(double v) {
        sep();
        out_ << fmt_double(v);
        return *this;
    }

    CsvWriter& field(long long v) {
        sep();
        out_ << v;
        return *this;
    }

    CsvWriter& field(int v) { return field(static_cast<long long>(v)); }
    CsvWriter& field(std::size_t v) { return field(static_cast<long long>(v)); }

    void endrow() {
        out_ << '\n';
        first_ = true;
    }

    void row(const std::vector<std::string>& fields) {
        for (const auto& f : fields) field(f);
        endrow();
    }

private:
    void sep() {
        if (!first_) out_ << ',';
        first_ = false;
    }

    std::ostream& out_;
    bool first_ = true;
};

}  // namespace autoci
