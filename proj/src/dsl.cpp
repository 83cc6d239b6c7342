#include "autoci/dsl.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

namespace autoci {

DslType DslType::tensor(int dim) {
    if (dim < 1) throw Error("tensor dim must be >= 1");
    return DslType(Kind::Tensor, dim);
}

DslType DslType::list(const DslType& elem, int length) {
    if (length < 1) throw Error("list length must be >= 1");
    DslType t(Kind::List, length);
    t.a_ = std::make_shared<const DslType>(elem);
    return t;
}

DslType DslType::fn(const DslType& arg, const DslType& ret) {
    DslType t(Kind::Fn, 0);
    t.a_ = std::make_shared<const DslType>(arg);
    t.b_ = std::make_shared<const DslType>(ret);
    return t;
}

bool DslType::operator==(const DslType& o) const {
    if (kind_ != o.kind_ || n_ != o.n_) return false;
    switch (kind_) {
        case Kind::Tensor: return true;
        case Kind::List: return elem() == o.elem();
        case Kind::Fn: return arg() == o.arg() && ret() == o.ret();
    }
    return false;
}

std::string DslType::str() const {
    std::ostringstream os;
    switch (kind_) {
        case Kind::Tensor:
            os << "tensor<" << n_ << ">";
            break;
        case Kind::List:
            os << "list<" << elem().str() << ", " << n_ << ">";
            break;
        case Kind::Fn:
            os << "fn(" << arg().str() << " -> " << ret().str() << ")";
            break;
    }
    return os.str();
}

bool Term::operator==(const Term& o) const {
    if (kind != o.kind) return false;
    if (kind == TermKind::Prim) return prim == o.prim && instance_id == o.instance_id;
    if (kind == TermKind::Fold && fold_init != o.fold_init) return false;
    if (children.size() != o.children.size()) return false;
    for (std::size_t i = 0; i < children.size(); ++i) {
        if (children[i] != o.children[i]) return false;
    }
    return true;
}

Term nn_prim() {
    Term t;
    t.kind = TermKind::Prim;
    t.prim = PrimName::Nn;
    return t;
}

Term pred_prim() {
    Term t;
    t.kind = TermKind::Prim;
    t.prim = PrimName::Pred;
    return t;
}

static Term unary(TermKind k, Term inner) {
    Term t;
    t.kind = k;
    t.children.push_back(std::move(inner));
    return t;
}

Term comp(Term outer, Term inner) {
    Term t;
    t.kind = TermKind::Comp;
    t.children.push_back(std::move(outer));
    t.children.push_back(std::move(inner));
    return t;
}

Term cat(Term inner) { return unary(TermKind::Cat, std::move(inner)); }
Term filter(Term inner) { return unary(TermKind::Filter, std::move(inner)); }
Term map_term(Term inner) { return unary(TermKind::Map, std::move(inner)); }

Term fold(Term inner, double init) {
    Term t = unary(TermKind::Fold, std::move(inner));
    t.fold_init = init;
    return t;
}

static void assign_ids(Term& t, int& counter) {
    if (t.kind == TermKind::Prim) {
        t.instance_id = counter++;
        return;
    }
    for (auto& c : t.children) assign_ids(c, counter);
}

void canonicalize(Term& t) {
    int counter = 0;
    assign_ids(t, counter);
}

int trainable_size(const Term& term) {
    if (term.kind == TermKind::Prim) return 1;
    int n = 0;
    for (const auto& c : term.children) n += trainable_size(c);
    return n;
}

void collect_prims_impl(const Term& t, PrimName name, std::vector<const Term*>& out) {
    if (t.kind == TermKind::Prim) {
        if (t.prim == name) out.push_back(&t);
        return;
    }
    for (const auto& c : t.children) collect_prims_impl(c, name, out);
}

std::vector<const Term*> collect_prims(const Term& term, PrimName name) {
    std::vector<const Term*> out;
    collect_prims_impl(term, name, out);
    return out;
}

namespace {

// Core checker. Every type is already monomorphic given n_vars: nn has the
// scheme tensor<n> -> tensor<1>, pred has list<tensor<1>, n> -> same, and the
// combinators propagate those shapes structurally.
bool check(const Term& t, int n, DslType* out, TypeErrorInfo* err) {
    auto fail = [&](const Term& sub, const std::string& expected, const std::string& found) {
        if (err) {
            err->subterm = pretty_print(sub);
            err->expected = expected;
            err->found = found;
        }
        return false;
    };

    const DslType t1 = DslType::tensor(1);
    const DslType row = DslType::list(t1, n);

    switch (t.kind) {
        case TermKind::Prim:
            *out = (t.prim == PrimName::Nn) ? DslType::fn(DslType::tensor(n), t1)
                                            : DslType::fn(row, row);
            return true;

        case TermKind::Comp: {
            DslType tg = t1, th = t1;
            if (!check(t.outer(), n, &tg, err)) return false;
            if (!check(t.inner(), n, &th, err)) return false;
            if (tg.arg() != th.ret()) {
                return fail(t.inner(), "fn(_ -> " + tg.arg().str() + ")", th.str());
            }
            *out = DslType::fn(th.arg(), tg.ret());
            return true;
        }

        case TermKind::Cat: {
            DslType ti = t1;
            if (!check(t.inner(), n, &ti, err)) return false;
            const DslType& r = ti.ret();
            if (r.kind() != DslType::Kind::List || r.elem() != t1) {
                return fail(t.inner(), "fn(_ -> list<tensor<1>, k>)", ti.str());
            }
            *out = DslType::fn(ti.arg(), DslType::tensor(r.length()));
            return true;
        }

        case TermKind::Filter: {
            DslType tp = t1;
            if (!check(t.inner(), n, &tp, err)) return false;
            const bool pred_scheme = tp.arg().kind() == DslType::Kind::List &&
                                     tp.arg().elem() == t1 && tp.arg() == tp.ret();
            if (!pred_scheme) {
                return fail(t.inner(), "fn(list<tensor<1>, k> -> list<tensor<1>, k>)", tp.str());
            }
            *out = tp;
            return true;
        }

        case TermKind::Map: {
            DslType tf = t1;
            if (!check(t.inner(), n, &tf, err)) return false;
            *out = DslType::fn(DslType::list(tf.arg(), n), DslType::list(tf.ret(), n));
            return true;
        }

        case TermKind::Fold: {
            DslType tf = t1;
            if (!check(t.inner(), n, &tf, err)) return false;
            // Step function takes the accumulator and one element concatenated:
            // fn(tensor<d+e> -> tensor<d>) folds list<tensor<e>, n> to tensor<d>.
            const bool shape_ok = tf.arg().kind() == DslType::Kind::Tensor &&
                                  tf.ret().kind() == DslType::Kind::Tensor &&
                                  tf.arg().dim() > tf.ret().dim();
            if (!shape_ok) {
                return fail(t.inner(), "fn(tensor<d+e> -> tensor<d>)", tf.str());
            }
            const int elem_dim = tf.arg().dim() - tf.ret().dim();
            *out = DslType::fn(DslType::list(DslType::tensor(elem_dim), n), tf.ret());
            return true;
        }
    }
    return false;
}

}  // namespace

std::optional<DslType> try_type_of(const Term& term, int n_vars, TypeErrorInfo* err) {
    if (n_vars < 1) throw Error("n_vars must be >= 1");
    DslType out = DslType::tensor(1);
    TypeErrorInfo local;
    if (!check(term, n_vars, &out, err ? err : &local)) return std::nullopt;
    return out;
}

DslType type_of(const Term& term, int n_vars) {
    TypeErrorInfo err;
    auto t = try_type_of(term, n_vars, &err);
    if (!t) throw TypeError(err.subterm, err.expected, err.found);
    return *t;
}

std::string pretty_print(const Term& term) {
    switch (term.kind) {
        case TermKind::Prim:
            return term.prim == PrimName::Nn ? "nn" : "pred";
        case TermKind::Comp:
            return "COMP(" + pretty_print(term.outer()) + ", " + pretty_print(term.inner()) + ")";
        case TermKind::Cat:
            return "CAT(" + pretty_print(term.inner()) + ")";
        case TermKind::Filter:
            return "FILTER(" + pretty_print(term.inner()) + ")";
        case TermKind::Map:
            return "MAP(" + pretty_print(term.inner()) + ")";
        case TermKind::Fold: {
            std::ostringstream os;
            os << "FOLD(" << pretty_print(term.inner()) << ", ";
            if (term.fold_init == std::floor(term.fold_init) && std::abs(term.fold_init) < 1e15) {
                os << static_cast<long long>(term.fold_init);
            } else {
                os << term.fold_init;
            }
            os << ")";
            return os.str();
        }
    }
    return "?";
}

namespace {

struct Parser {
    const std::string& s;
    std::size_t pos = 0;

    explicit Parser(const std::string& text) : s(text) {}

    void skip_ws() {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }

    bool eat(char c) {
        skip_ws();
        if (pos < s.size() && s[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!eat(c)) throw ParseError(std::string("expected '") + c + "' at offset " + std::to_string(pos));
    }

    std::string ident() {
        skip_ws();
        std::size_t start = pos;
        while (pos < s.size() && std::isalpha(static_cast<unsigned char>(s[pos]))) ++pos;
        if (start == pos) throw ParseError("expected identifier at offset " + std::to_string(pos));
        return s.substr(start, pos - start);
    }

    double number() {
        skip_ws();
        std::size_t start = pos;
        while (pos < s.size() &&
               (std::isdigit(static_cast<unsigned char>(s[pos])) || s[pos] == '.' || s[pos] == '-' ||
                s[pos] == '+' || s[pos] == 'e' || s[pos] == 'E')) {
            ++pos;
        }
        if (start == pos) throw ParseError("expected number at offset " + std::to_string(pos));
        return std::stod(s.substr(start, pos - start));
    }

    Term term() {
        const std::string name = ident();
        if (name == "nn") return nn_prim();
        if (name == "pred") return pred_prim();
        if (name == "COMP") {
            expect('(');
            Term a = term();
            expect(',');
            Term b = term();
            expect(')');
            return comp(std::move(a), std::move(b));
        }
        if (name == "CAT" || name == "FILTER" || name == "MAP") {
            expect('(');
            Term a = term();
            expect(')');
            if (name == "CAT") return cat(std::move(a));
            if (name == "FILTER") return filter(std::move(a));
            return map_term(std::move(a));
        }
        if (name == "FOLD") {
            expect('(');
            Term a = term();
            expect(',');
            const double init = number();
            expect(')');
            return fold(std::move(a), init);
        }
        throw ParseError("unknown combinator '" + name + "'");
    }
};

}  // namespace

Term parse(const std::string& text) {
    Parser p(text);
    Term t = p.term();
    p.skip_ws();
    if (p.pos != text.size()) throw ParseError("trailing input at offset " + std::to_string(p.pos));
    canonicalize(t);
    return t;
}

}  // namespace autoci
