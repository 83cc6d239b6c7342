#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "autoci/errors.hpp"

namespace autoci {

// Static type of a DSL term: fixed-dimension tensors, fixed-length lists and
// (non-recursive) function types. List lengths and tensor dims are part of
// the type, so every shape mismatch is a type error.
class DslType {
public:
    enum class Kind { Tensor, List, Fn };

    static DslType tensor(int dim);
    static DslType list(const DslType& elem, int length);
    static DslType fn(const DslType& arg, const DslType& ret);

    Kind kind() const { return kind_; }
    int dim() const { return n_; }      // Tensor
    int length() const { return n_; }   // List
    const DslType& elem() const { return *a_; }
    const DslType& arg() const { return *a_; }
    const DslType& ret() const { return *b_; }

    bool operator==(const DslType& o) const;
    bool operator!=(const DslType& o) const { return !(*this == o); }

    std::string str() const;

private:
    DslType(Kind k, int n) : kind_(k), n_(n) {}
    Kind kind_;
    int n_ = 0;
    std::shared_ptr<const DslType> a_;
    std::shared_ptr<const DslType> b_;
};

enum class TermKind { Prim, Comp, Cat, Filter, Map, Fold };
enum class PrimName { Nn, Pred };

// AST of a program. Trees only: no sharing, no cycles. Each Prim node owns an
// instance id (canonical pre-order index) so that repeated nn/pred uses have
// distinct parameters.
struct Term {
    TermKind kind = TermKind::Prim;
    PrimName prim = PrimName::Nn;
    int instance_id = -1;
    std::vector<Term> children;  // Comp: {outer, inner}; unary: {inner}
    double fold_init = 0.0;

    const Term& outer() const { return children[0]; }
    const Term& inner() const { return children.back(); }

    bool operator==(const Term& o) const;
    bool operator!=(const Term& o) const { return !(*this == o); }
};

// Builders. Instance ids are assigned on the finished tree via canonicalize().
Term nn_prim();
Term pred_prim();
Term comp(Term outer, Term inner);
Term cat(Term inner);
Term filter(Term inner);
Term map_term(Term inner);
Term fold(Term inner, double init = 0.0);

// Re-numbers Prim instance ids in pre-order, 0-based. parse() and the
// synthesis enumerator always emit canonical terms.
void canonicalize(Term& t);

// Principal type of `term` treated as a function over rows of n_vars scalar
// variables (input type LIST(T1, n_vars)). Throws TypeError for generic
// (non-type-safe) programs, naming the offending subterm.
DslType type_of(const Term& term, int n_vars);

struct TypeErrorInfo {
    std::string subterm;
    std::string expected;
    std::string found;
};

// Non-throwing variant for enumeration hot loops.
std::optional<DslType> try_type_of(const Term& term, int n_vars, TypeErrorInfo* err = nullptr);

// Number of trainable primitives (nn + pred nodes).
int trainable_size(const Term& term);

// Canonical text form, e.g. "COMP(nn, CAT(FILTER(pred)))"; round-trips with
// parse().
std::string pretty_print(const Term& term);

Term parse(const std::string& text);

std::vector<const Term*> collect_prims(const Term& term, PrimName name);

}  // namespace autoci
