#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "autoci/dataset.hpp"
#include "autoci/dsl.hpp"
#include "autoci/learner.hpp"

namespace autoci {

struct SynthesisBudget {
    int max_trainable_size = 3;  // the "size": max number of nn/pred nodes
    int max_ast_nodes = 9;
    int n_vars = 4;              // input arity of the task
    DslType goal_type = DslType::fn(DslType::list(DslType::tensor(1), 4), DslType::tensor(1));

    static SynthesisBudget for_task(int size, int n_vars, int max_ast_nodes = 9);
};

// Streams every well-formed AST with trainable_size <= max_trainable_size and
// node count <= max_ast_nodes, each exactly once. Order is deterministic:
// iterative deepening on node count; at equal count the root kind follows
// Prim(nn) < Prim(pred) < Comp < Cat < Filter < Map < Fold, and Comp splits
// enumerate by ascending outer-subtree size. Terms arrive canonicalized.
void enumerate_generic(const SynthesisBudget& budget, const std::function<void(const Term&)>& yield);

// The subset of enumerate_generic whose principal type equals goal_type.
std::vector<Term> enumerate_typesafe(const SynthesisBudget& budget);

std::size_t count_generic(const SynthesisBudget& budget);

struct CandidateScore {
    Term term;
    double mean_score = 0.0;
    double std_score = 0.0;
};

struct CandidateRanking {
    // Sorted descending by mean score; ties broken by smaller trainable_size
    // then lexicographic pretty_print.
    std::vector<CandidateScore> entries;
};

// Trains each candidate `repeats` times and ranks by mean score: Jaccard
// similarity against s_prox for regression tasks, negative held-out loss for
// survival tasks. Candidates whose training fails score 0.
CandidateRanking rank_candidates(const std::vector<Term>& terms, const EnvDataset& data,
                                 const LearnerConfig& config, int repeats,
                                 const std::set<int>& s_prox = {});

}  // namespace autoci
