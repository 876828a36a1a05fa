#ifndef TBN_ORACLE_HPP
#define TBN_ORACLE_HPP

// Reference inference over the fully unrolled net: one joint table, then a
// single marginalization. No factoring of any kind, so it shares no code
// path with the planner beyond the factor primitives.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "tbn/error.hpp"
#include "tbn/factor.hpp"
#include "tbn/model.hpp"
#include "tbn/stream.hpp"

namespace tbn {

inline constexpr std::size_t kDefaultOracleCap = std::size_t{1} << 24;

struct UnrolledNode {
    std::string name; // "a" for static nodes, "d@3" for dynamic copies
    Var var;
    std::size_t card = 0;
    std::vector<Var> parents;
    Factor cpt; // over (parents..., var)
};

struct UnrolledNet {
    std::vector<UnrolledNode> nodes;

    const UnrolledNode* find(Var v) const {
        for (const auto& n : nodes)
            if (n.var == v) return &n;
        return nullptr;
    }
};

// The fully-extended net for slices 0..t: S, the initial transitional copies
// at slice -1, and every dynamic node at slices 0..t, each with the template
// CPT renamed to its slice.
inline UnrolledNet unroll(const TbnModel& m, int t) {
    if (t < 0) throw ModelError("unroll: time step must be >= 0, got " + std::to_string(t));
    const Classification c = classify(m);
    UnrolledNet net;
    auto name_of = [&](Var v) {
        const std::string& id = m.node(v.node).id;
        return v.is_static() ? id : id + "@" + std::to_string(v.slice);
    };
    auto add = [&](Factor f) {
        UnrolledNode n;
        n.var = f.vars().back();
        n.card = f.cards().back();
        n.name = name_of(n.var);
        n.parents.assign(f.vars().begin(), f.vars().end() - 1);
        n.cpt = std::move(f);
        net.nodes.push_back(std::move(n));
    };
    for (std::uint32_t s : c.statics) add(cpt_factor(m, s));
    for (std::uint32_t tr : c.transitional) add(initial_factor(m, tr, -1));
    for (int i = 0; i <= t; ++i)
        for (std::uint32_t d : c.dynamics) add(cpt_factor(m, d, i));
    return net;
}

// P(target | evidence of slices 0..t) for each target, by full joint
// enumeration. Dynamic targets are reported at slice t.
inline std::vector<std::vector<double>> query_brute_all(const TbnModel& m, const std::vector<std::uint32_t>& targets,
                                                        const std::vector<SliceEvidence>& evidence, int t,
                                                        std::size_t cap = kDefaultOracleCap) {
    const UnrolledNet net = unroll(m, t);
    std::size_t joint = 1;
    for (const auto& n : net.nodes) {
        if (joint > cap / n.card) {
            joint = cap + 1;
            break;
        }
        joint *= n.card;
    }
    if (joint > cap)
        throw CapacityError("oracle infeasible: " + std::to_string(net.nodes.size()) +
                            " unrolled variables, joint table exceeds cap of " + std::to_string(cap) + " entries");

    for (std::size_t k = 0; k < evidence.size() && static_cast<int>(k) <= t; ++k)
        for (const auto& [node, lik] : evidence[k])
            if (node >= m.size() || !m.node(node).observable)
                throw ModelError("evidence posted on non-observable node '" +
                                 (node < m.size() ? m.node(node).id : std::to_string(node)) + "'");

    Factor product;
    for (const auto& n : net.nodes) {
        product = multiply(product, n.cpt);
        if (n.var.is_static()) continue;
        const auto k = static_cast<std::size_t>(n.var.slice);
        if (n.var.slice < 0 || k >= evidence.size()) continue;
        auto it = evidence[k].find(n.var.node);
        if (it == evidence[k].end()) continue;
        product = multiply(product, evidence_factor(n.var, n.card, std::span<const double>(it->second)));
    }
    std::vector<std::vector<double>> out;
    for (std::uint32_t target : targets) {
        const Var keep[] = {m.node(target).is_static() ? static_var(target) : Var{target, t}};
        out.push_back(normalize(marginalize_onto(product, keep), "oracle query on '" + m.node(target).id + "'").values());
    }
    return out;
}

inline std::vector<double> query_brute(const TbnModel& m, std::uint32_t target,
                                       const std::vector<SliceEvidence>& evidence, int t,
                                       std::size_t cap = kDefaultOracleCap) {
    return query_brute_all(m, {target}, evidence, t, cap).front();
}

// Same quantities by plain variable elimination over the unrolled net, for
// horizons where the joint no longer fits. Eliminates whichever variable
// yields the smallest product next; shares nothing with the planner.
inline std::vector<std::vector<double>> query_eliminate_all(const TbnModel& m,
                                                            const std::vector<std::uint32_t>& targets,
                                                            const std::vector<SliceEvidence>& evidence, int t,
                                                            std::size_t cap = kDefaultOracleCap) {
    const UnrolledNet net = unroll(m, t);
    std::vector<Factor> pool;
    for (const auto& n : net.nodes) {
        pool.push_back(n.cpt);
        if (n.var.is_static() || n.var.slice < 0) continue;
        const auto k = static_cast<std::size_t>(n.var.slice);
        if (k >= evidence.size()) continue;
        auto it = evidence[k].find(n.var.node);
        if (it != evidence[k].end())
            pool.push_back(evidence_factor(n.var, n.card, std::span<const double>(it->second)));
    }
    std::vector<Var> keep;
    for (std::uint32_t target : targets) keep.push_back(m.node(target).is_static() ? static_var(target) : Var{target, t});

    std::vector<Var> pending;
    for (const auto& n : net.nodes)
        if (std::find(keep.begin(), keep.end(), n.var) == keep.end()) pending.push_back(n.var);
    auto card_of = [&](Var v) { return net.find(v)->card; };
    while (!pending.empty()) {
        std::size_t best = 0, best_size = SIZE_MAX;
        for (std::size_t i = 0; i < pending.size(); ++i) {
            std::vector<Var> scope;
            for (const Factor& f : pool)
                if (std::find(f.vars().begin(), f.vars().end(), pending[i]) != f.vars().end())
                    for (Var v : f.vars())
                        if (std::find(scope.begin(), scope.end(), v) == scope.end()) scope.push_back(v);
            std::size_t size = 1;
            for (Var v : scope) size = size > cap ? size : size * card_of(v);
            if (size < best_size) {
                best = i;
                best_size = size;
            }
        }
        if (best_size > cap)
            throw CapacityError("oracle infeasible: elimination needs a table over " + std::to_string(best_size) +
                                " entries, cap is " + std::to_string(cap));
        const Var v = pending[best];
        pending.erase(pending.begin() + static_cast<std::ptrdiff_t>(best));
        Factor product;
        std::vector<Factor> rest;
        for (Factor& f : pool) {
            if (std::find(f.vars().begin(), f.vars().end(), v) != f.vars().end())
                product = multiply(product, f);
            else
                rest.push_back(std::move(f));
        }
        const Var out[] = {v};
        rest.push_back(marginalize(product, out));
        pool = std::move(rest);
    }
    Factor joint;
    for (const Factor& f : pool) joint = multiply(joint, f);
    std::vector<std::vector<double>> result;
    for (std::size_t q = 0; q < targets.size(); ++q) {
        const Var only[] = {keep[q]};
        result.push_back(
            normalize(marginalize_onto(joint, only), "oracle query on '" + m.node(targets[q]).id + "'").values());
    }
    return result;
}

} // namespace tbn

#endif // TBN_ORACLE_HPP
