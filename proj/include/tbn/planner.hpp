#ifndef TBN_PLANNER_HPP
#define TBN_PLANNER_HPP

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "tbn/error.hpp"
#include "tbn/factor.hpp"
#include "tbn/model.hpp"

namespace tbn {

using Scope = std::vector<Var>; // kept sorted

namespace detail {

inline Scope sorted_scope(std::vector<Var> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

inline Scope scope_union(const Scope& a, const Scope& b) {
    Scope out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline bool scope_contains(const Scope& s, Var v) { return std::binary_search(s.begin(), s.end(), v); }

inline bool scope_includes(const Scope& big, const Scope& small) {
    return std::includes(big.begin(), big.end(), small.begin(), small.end());
}

inline std::size_t table_size(const TbnModel& m, const Scope& s) {
    std::size_t n = 1;
    for (Var v : s) {
        const std::size_t c = m.card(v);
        if (n > std::numeric_limits<std::size_t>::max() / c) return std::numeric_limits<std::size_t>::max();
        n *= c;
    }
    return n;
}

// Disjoint-set forest over indices.
class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<std::size_t> parent_;
};

} // namespace detail

// ---------------------------------------------------------------------------
// Expressions of the one-slice net

struct ExpressionRef {
    enum class Kind { NodeCpt, InitCpt, Evidence, PastFactor, Constant };
    Kind kind = Kind::NodeCpt;
    std::uint32_t index = 0; // node index, past-factor index or constant index
    std::vector<Var> scope;  // the table's variables in table order
    std::optional<Var> head; // a CPT's own variable

    bool varies() const { return kind == Kind::Evidence || kind == Kind::PastFactor; }
    bool mentions(Var v) const { return std::find(scope.begin(), scope.end(), v) != scope.end(); }
};

inline ExpressionRef cpt_expression(const TbnModel& m, std::uint32_t i) {
    const Factor f = cpt_factor(m, i);
    return {ExpressionRef::Kind::NodeCpt, i, f.vars(), f.vars().back()};
}

inline ExpressionRef evidence_expression(std::uint32_t o) {
    return {ExpressionRef::Kind::Evidence, o, {cur_var(o)}, std::nullopt};
}

inline std::string describe(const TbnModel& m, const ExpressionRef& e) {
    auto scope = [&] {
        std::string s = "(";
        for (std::size_t i = 0; i < e.scope.size(); ++i) s += (i ? "," : "") + m.var_name(e.scope[i]);
        return s + ")";
    };
    switch (e.kind) {
    case ExpressionRef::Kind::NodeCpt: return "phi[" + m.node(e.index).id + "]" + scope();
    case ExpressionRef::Kind::InitCpt: return "init[" + m.node(e.index).id + "]" + scope();
    case ExpressionRef::Kind::Evidence: return "lambda[" + m.node(e.index).id + "]" + scope();
    case ExpressionRef::Kind::PastFactor: return "psi" + std::to_string(e.index) + scope();
    case ExpressionRef::Kind::Constant: return "const" + std::to_string(e.index) + scope();
    }
    return {};
}

// Indices (ascending) of the expressions that can influence the preserved
// variables: iterated barren-CPT removal, then dropping every connected
// component that mentions no preserved variable. Evidence is soft (a virtual
// child), so it never blocks a path; under that reading these two steps are
// exactly the d-separation requisite set. Dropped components contribute only
// a constant factor.
inline std::vector<std::size_t> relevant_expressions(const std::vector<ExpressionRef>& exprs,
                                                     std::span<const Var> preserve) {
    const std::size_t n = exprs.size();
    std::vector<bool> alive(n, true);
    auto preserved = [&](Var v) { return std::find(preserve.begin(), preserve.end(), v) != preserve.end(); };

    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const ExpressionRef& e = exprs[i];
            if (!alive[i] || !e.head || preserved(*e.head)) continue;
            if (e.kind != ExpressionRef::Kind::NodeCpt && e.kind != ExpressionRef::Kind::InitCpt) continue;
            bool used = false;
            for (std::size_t j = 0; j < n && !used; ++j) used = j != i && alive[j] && exprs[j].mentions(*e.head);
            if (!used) {
                alive[i] = false;
                changed = true;
            }
        }
    }

    detail::UnionFind uf(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (!alive[i] || !alive[j]) continue;
            for (Var v : exprs[i].scope)
                if (exprs[j].mentions(v)) {
                    uf.unite(i, j);
                    break;
                }
        }
    std::vector<bool> keep_root(n, false);
    for (std::size_t i = 0; i < n; ++i)
        if (alive[i])
            for (Var v : exprs[i].scope)
                if (preserved(v)) keep_root[uf.find(i)] = true;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n; ++i)
        if (alive[i] && keep_root[uf.find(i)]) out.push_back(i);
    return out;
}

// ---------------------------------------------------------------------------
// Factorization of the past expression

// Scopes over the interface; T variables in current-slice naming.
struct Factorization {
    std::vector<Scope> factors;

    bool empty() const { return factors.empty(); }
    friend bool operator==(const Factorization&, const Factorization&) = default;
};

namespace detail {

inline bool has_dynamic(const Scope& s) {
    return std::any_of(s.begin(), s.end(), [](Var v) { return !v.is_static(); });
}

inline auto factor_key(const Scope& s) {
    Scope dyn, stat;
    for (Var v : s) (v.is_static() ? stat : dyn).push_back(v);
    return std::make_tuple(dyn.empty(), dyn, stat);
}

inline void canonicalize(std::vector<Scope>& fs) {
    for (Scope& s : fs) s = sorted_scope(std::move(s));
    std::sort(fs.begin(), fs.end(), [](const Scope& a, const Scope& b) { return factor_key(a) < factor_key(b); });
}

} // namespace detail

// Renders as the transitional variables then the static ones, e.g. "(b,a)".
inline std::string format_scope(const TbnModel& m, const Scope& s) {
    std::string out = "(";
    bool first = true;
    for (int pass = 0; pass < 2; ++pass)
        for (Var v : s)
            if (v.is_static() == (pass == 1)) {
                out += (first ? "" : ",") + m.node(v.node).id;
                first = false;
            }
    return out + ")";
}

inline std::string format_factorization(const TbnModel& m, const Factorization& f) {
    std::string out = "{";
    for (std::size_t i = 0; i < f.factors.size(); ++i) out += (i ? "," : "") + format_scope(m, f.factors[i]);
    return out + "}";
}

// Whether every factor of `fine` lies inside some factor of `coarse`.
inline bool refines(const Factorization& fine, const Factorization& coarse) {
    for (const Scope& s : fine.factors) {
        bool inside = false;
        for (const Scope& c : coarse.factors) inside = inside || detail::scope_includes(c, s);
        if (!inside) return false;
    }
    return true;
}

// An intermediate of symbolic elimination: its scope and the expressions it combines.
struct SymbolicGroup {
    Scope scope;
    std::vector<std::size_t> members;
};

enum class EliminationOrder {
    MinScope, // smallest resulting scope first, ties by variable order
    Reverse,  // largest variable first
};

// Symbolic variable elimination over scopes only. Each step combines every
// intermediate mentioning the chosen variable. O(n^3) in the number of variables.
inline std::vector<SymbolicGroup> symbolic_eliminate(const std::vector<ExpressionRef>& exprs,
                                                     const std::vector<std::size_t>& use, const Scope& eliminate,
                                                     EliminationOrder order = EliminationOrder::MinScope) {
    std::vector<SymbolicGroup> items;
    for (std::size_t i : use) items.push_back({detail::sorted_scope(exprs[i].scope), {i}});
    Scope pending = eliminate;
    while (!pending.empty()) {
        std::optional<std::size_t> best;
        std::size_t best_size = 0;
        for (std::size_t k = 0; k < pending.size(); ++k) {
            Scope merged;
            bool present = false;
            for (const auto& it : items)
                if (detail::scope_contains(it.scope, pending[k])) {
                    merged = detail::scope_union(merged, it.scope);
                    present = true;
                }
            if (!present) continue;
            const std::size_t size = merged.size() - 1;
            bool better = !best;
            if (best) {
                if (order == EliminationOrder::MinScope) better = size < best_size;
                else better = pending[k] > pending[*best];
            }
            if (better) {
                best = k;
                best_size = size;
            }
        }
        if (!best) break;
        const Var v = pending[*best];
        pending.erase(pending.begin() + static_cast<std::ptrdiff_t>(*best));
        SymbolicGroup merged;
        std::vector<SymbolicGroup> rest;
        for (auto& it : items) {
            if (detail::scope_contains(it.scope, v)) {
                merged.scope = detail::scope_union(merged.scope, it.scope);
                merged.members.insert(merged.members.end(), it.members.begin(), it.members.end());
            } else {
                rest.push_back(std::move(it));
            }
        }
        merged.scope.erase(std::remove(merged.scope.begin(), merged.scope.end(), v), merged.scope.end());
        std::sort(merged.members.begin(), merged.members.end());
        rest.push_back(std::move(merged));
        items = std::move(rest);
    }
    return items;
}

// Turns the intermediates left after elimination into past-expression
// factors: intermediates sharing a transitional variable are one factor;
// a factor over static parents only is folded into the first factor that
// covers it. Scalars are dropped.
inline std::vector<SymbolicGroup> group_interface(std::vector<SymbolicGroup> items) {
    std::erase_if(items, [](const SymbolicGroup& g) { return g.scope.empty(); });
    const std::size_t n = items.size();
    detail::UnionFind uf(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            for (Var v : items[i].scope)
                if (!v.is_static() && detail::scope_contains(items[j].scope, v)) {
                    uf.unite(i, j);
                    break;
                }
    std::vector<SymbolicGroup> comps;
    std::vector<std::size_t> slot(n, SIZE_MAX);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = uf.find(i);
        if (slot[r] == SIZE_MAX) {
            slot[r] = comps.size();
            comps.emplace_back();
        }
        SymbolicGroup& c = comps[slot[r]];
        c.scope = detail::scope_union(c.scope, items[i].scope);
        c.members.insert(c.members.end(), items[i].members.begin(), items[i].members.end());
    }
    std::vector<SymbolicGroup> kept, statics;
    for (auto& c : comps) (detail::has_dynamic(c.scope) ? kept : statics).push_back(std::move(c));
    std::sort(kept.begin(), kept.end(),
              [](const auto& a, const auto& b) { return detail::factor_key(a.scope) < detail::factor_key(b.scope); });
    std::sort(statics.begin(), statics.end(), [](const auto& a, const auto& b) {
        return std::make_pair(b.scope.size(), a.scope) < std::make_pair(a.scope.size(), b.scope);
    });
    for (auto& s : statics) {
        auto home = std::find_if(kept.begin(), kept.end(),
                                 [&](const SymbolicGroup& k) { return detail::scope_includes(k.scope, s.scope); });
        if (home != kept.end())
            home->members.insert(home->members.end(), s.members.begin(), s.members.end());
        else
            kept.push_back(std::move(s));
    }
    for (auto& k : kept) std::sort(k.members.begin(), k.members.end());
    std::sort(kept.begin(), kept.end(),
              [](const auto& a, const auto& b) { return detail::factor_key(a.scope) < detail::factor_key(b.scope); });
    return kept;
}

// Expressions of one advance step over a past factorization: the past
// factors (read at the previous slice), every dynamic CPT and every evidence
// vector of the current slice.
inline std::vector<ExpressionRef> advance_expressions(const TbnModel& m, const Classification& c,
                                                      const Factorization& prev) {
    std::vector<ExpressionRef> exprs;
    for (std::uint32_t k = 0; k < prev.factors.size(); ++k) {
        std::vector<Var> s;
        for (Var v : prev.factors[k]) s.push_back(shifted(v, -1));
        exprs.push_back({ExpressionRef::Kind::PastFactor, k, s, std::nullopt});
    }
    for (std::uint32_t d : c.dynamics) exprs.push_back(cpt_expression(m, d));
    for (std::uint32_t o : c.observables) exprs.push_back(evidence_expression(o));
    return exprs;
}

struct AdvanceStructure {
    std::vector<ExpressionRef> exprs;
    std::vector<SymbolicGroup> groups; // members index into exprs
};

inline AdvanceStructure advance_structure(const TbnModel& m, const Classification& c, const Factorization& prev,
                                          EliminationOrder order = EliminationOrder::MinScope) {
    AdvanceStructure a;
    a.exprs = advance_expressions(m, c, prev);
    const std::vector<Var> keep = c.interface_vars();
    const auto use = relevant_expressions(a.exprs, keep);
    Scope eliminate;
    for (std::size_t i : use)
        for (Var v : a.exprs[i].scope)
            if (std::find(keep.begin(), keep.end(), v) == keep.end()) eliminate.push_back(v);
    eliminate = detail::sorted_scope(std::move(eliminate));
    a.groups = group_interface(symbolic_eliminate(a.exprs, use, eliminate, order));
    return a;
}

// The past-expression structure one step after `prev`.
inline Factorization symbolic_advance(const TbnModel& m, const Classification& c, const Factorization& prev,
                                      EliminationOrder order = EliminationOrder::MinScope) {
    Factorization f;
    for (auto& g : advance_structure(m, c, prev, order).groups) f.factors.push_back(std::move(g.scope));
    detail::canonicalize(f.factors);
    return f;
}

// Structure of the initial past expression: the initial CPTs grouped by shared
// transitional variables.
inline Factorization initial_factorization(const TbnModel& m, const Classification& c) {
    std::vector<SymbolicGroup> items;
    for (std::uint32_t t : c.transitional) {
        const Factor f = initial_factor(m, t);
        items.push_back({detail::sorted_scope(f.vars()), {}});
    }
    Factorization out;
    for (auto& g : group_interface(std::move(items))) out.factors.push_back(std::move(g.scope));
    detail::canonicalize(out.factors);
    return out;
}

// Smallest factorization covering both (factors that overlap on a
// transitional variable, or nest, are merged).
inline Factorization coarsen(const Factorization& a, const Factorization& b) {
    std::vector<SymbolicGroup> items;
    for (const Scope& s : a.factors) items.push_back({s, {}});
    for (const Scope& s : b.factors) items.push_back({s, {}});
    Factorization out;
    for (auto& g : group_interface(std::move(items))) out.factors.push_back(std::move(g.scope));
    detail::canonicalize(out.factors);
    return out;
}

struct Stabilization {
    Factorization stable;
    std::size_t iterations = 0;          // applications of symbolic_advance before the structure repeats
    std::vector<Factorization> sequence; // sequence[0] is the initial structure
};

// Iterates symbolic_advance from the initial structure until it repeats;
// nullopt when no fixpoint appears within |T| + 1 iterations (the structure
// cycles, which happens when initial CPTs depend on static parents).
inline std::optional<Stabilization> try_stabilize(const TbnModel& m, const Classification& c) {
    Stabilization s;
    s.sequence.push_back(initial_factorization(m, c));
    const std::size_t limit = c.transitional.size() + 2;
    for (std::size_t k = 1; k <= limit; ++k) {
        Factorization next = symbolic_advance(m, c, s.sequence.back());
        if (next == s.sequence.back()) {
            s.iterations = k - 1;
            s.stable = std::move(next);
            return s;
        }
        s.sequence.push_back(std::move(next));
    }
    return std::nullopt;
}

inline Stabilization stabilize(const TbnModel& m, const Classification& c) {
    auto s = try_stabilize(m, c);
    if (!s)
        throw PlanError("past-expression structure has no fixpoint within " +
                        std::to_string(c.transitional.size() + 1) + " iterations");
    return std::move(*s);
}

// The factorization the compiled plan stores the past in. It is the stable
// structure when that also embeds the initial one; otherwise (or when there
// is no fixpoint) the least structure that covers the initial one and is
// closed under symbolic_advance.
struct PastLayout {
    Factorization factors;
    bool joined = false;
    std::size_t iterations = 0; // plain stabilization count, or merge rounds when joined
    std::optional<Stabilization> plain;
};

inline PastLayout past_layout(const TbnModel& m, const Classification& c) {
    PastLayout out;
    out.plain = try_stabilize(m, c);
    if (out.plain && refines(out.plain->sequence.front(), out.plain->stable)) {
        out.factors = out.plain->stable;
        out.iterations = out.plain->iterations;
        return out;
    }
    out.joined = true;
    Factorization cur = initial_factorization(m, c);
    const std::size_t join_limit = (c.transitional.size() + 1) * (c.static_parents.size() + 1) + 2;
    for (std::size_t k = 1; k <= join_limit + 1; ++k) {
        Factorization next = coarsen(cur, symbolic_advance(m, c, cur));
        if (next == cur) {
            out.iterations = k - 1;
            out.factors = std::move(cur);
            return out;
        }
        cur = std::move(next);
    }
    throw PlanError("past layout did not converge");
}

// ---------------------------------------------------------------------------
// Factoring trees

struct TreeNode {
    int left = -1, right = -1; // children of a product node
    int leaf = -1;             // expression index for a leaf
    Scope product;             // scope before elimination
    Scope eliminate;           // summed out right after this node
    Scope scope;               // product minus eliminate
    std::size_t first_leaf = 0;

    bool is_leaf() const { return leaf >= 0; }
};

struct FactoringTree {
    std::vector<ExpressionRef> leaves;
    std::vector<TreeNode> nodes;
    int root = -1;
    Scope preserve;

    const TreeNode& at(int i) const { return nodes.at(static_cast<std::size_t>(i)); }
};

// Greedy pairwise combination: always merge the pair with the smallest product
// table, ties by fewer variables, then smaller sorted scope, then smaller leaf
// indices. A variable is summed out at the first node above which no other
// subtree mentions it, unless it is preserved.
inline FactoringTree build_factoring_tree(const TbnModel& m, std::vector<ExpressionRef> exprs,
                                          const Scope& preserve) {
    if (exprs.empty()) throw PlanError("factoring tree over no expressions");
    FactoringTree t;
    t.leaves = std::move(exprs);
    t.preserve = detail::sorted_scope(preserve);
    std::vector<int> forest;

    auto settle = [&](TreeNode& node, const std::vector<int>& others) {
        for (Var v : node.product) {
            if (detail::scope_contains(t.preserve, v)) continue;
            bool elsewhere = false;
            for (int o : others) elsewhere = elsewhere || detail::scope_contains(t.at(o).scope, v);
            if (!elsewhere) node.eliminate.push_back(v);
        }
        std::set_difference(node.product.begin(), node.product.end(), node.eliminate.begin(), node.eliminate.end(),
                            std::back_inserter(node.scope));
    };

    for (std::size_t i = 0; i < t.leaves.size(); ++i) {
        TreeNode n;
        n.leaf = static_cast<int>(i);
        n.product = detail::sorted_scope(t.leaves[i].scope);
        n.scope = n.product;
        n.first_leaf = i;
        t.nodes.push_back(n);
        forest.push_back(static_cast<int>(i));
    }
    // leaf-level elimination sees the raw scopes of every other leaf
    for (std::size_t i = 0; i < t.leaves.size(); ++i) {
        std::vector<int> others;
        for (int o : forest)
            if (o != static_cast<int>(i)) others.push_back(o);
        TreeNode& n = t.nodes[i];
        n.scope.clear();
        n.eliminate.clear();
        settle(n, others);
    }

    while (forest.size() > 1) {
        using Key = std::tuple<std::size_t, std::size_t, Scope, std::size_t, std::size_t>;
        std::optional<Key> best;
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < forest.size(); ++i)
            for (std::size_t j = i + 1; j < forest.size(); ++j) {
                const TreeNode& a = t.at(forest[i]);
                const TreeNode& b = t.at(forest[j]);
                Scope u = detail::scope_union(a.scope, b.scope);
                Key k{detail::table_size(m, u), u.size(), std::move(u), std::min(a.first_leaf, b.first_leaf),
                      std::max(a.first_leaf, b.first_leaf)};
                if (!best || k < *best) {
                    best = std::move(k);
                    bi = i;
                    bj = j;
                }
            }
        TreeNode n;
        n.left = forest[bi];
        n.right = forest[bj];
        n.product = detail::scope_union(t.at(n.left).scope, t.at(n.right).scope);
        n.first_leaf = std::min(t.at(n.left).first_leaf, t.at(n.right).first_leaf);
        forest.erase(forest.begin() + static_cast<std::ptrdiff_t>(bj));
        forest.erase(forest.begin() + static_cast<std::ptrdiff_t>(bi));
        settle(n, forest);
        t.nodes.push_back(std::move(n));
        forest.push_back(static_cast<int>(t.nodes.size() - 1));
    }
    t.root = forest.front();
    return t;
}

// Evaluates the subtree at `node` given one table per leaf.
inline Factor evaluate_tree(const FactoringTree& t, int node, const std::vector<Factor>& leaf_tables) {
    const TreeNode& n = t.at(node);
    Factor f = n.is_leaf() ? leaf_tables.at(static_cast<std::size_t>(n.leaf))
                           : multiply(evaluate_tree(t, n.left, leaf_tables), evaluate_tree(t, n.right, leaf_tables));
    return marginalize(f, n.eliminate);
}

inline Factor evaluate_tree(const FactoringTree& t, const std::vector<Factor>& leaf_tables) {
    return evaluate_tree(t, t.root, leaf_tables);
}

struct StaticSplit {
    std::vector<int> constant_roots; // node ids in the original tree, in post-order
    FactoringTree residual;          // constant subtrees replaced by Constant leaves (index = position above)
};

// Cuts out every maximal subtree that has no evidence or past-factor leaf.
// Their values never change between steps.
inline StaticSplit split_static_branches(const FactoringTree& t) {
    std::vector<bool> constant(t.nodes.size(), false);
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
        const TreeNode& n = t.nodes[i];
        constant[i] = n.is_leaf() ? !t.leaves[static_cast<std::size_t>(n.leaf)].varies()
                                  : constant[static_cast<std::size_t>(n.left)] && constant[static_cast<std::size_t>(n.right)];
    }
    StaticSplit out;
    out.residual.preserve = t.preserve;
    std::function<int(int)> copy = [&](int id) -> int {
        const TreeNode& n = t.at(id);
        TreeNode r = n;
        if (constant[static_cast<std::size_t>(id)]) {
            ExpressionRef e{ExpressionRef::Kind::Constant, static_cast<std::uint32_t>(out.constant_roots.size()),
                            n.scope, std::nullopt};
            out.constant_roots.push_back(id);
            r.left = r.right = -1;
            r.leaf = static_cast<int>(out.residual.leaves.size());
            r.product = n.scope;
            r.eliminate.clear();
            out.residual.leaves.push_back(std::move(e));
        } else if (n.is_leaf()) {
            r.leaf = static_cast<int>(out.residual.leaves.size());
            out.residual.leaves.push_back(t.leaves[static_cast<std::size_t>(n.leaf)]);
        } else {
            r.left = copy(n.left);
            r.right = copy(n.right);
        }
        out.residual.nodes.push_back(std::move(r));
        return static_cast<int>(out.residual.nodes.size() - 1);
    };
    out.residual.root = copy(t.root);
    return out;
}

inline void render_tree(const TbnModel& m, const FactoringTree& t, int node, int depth, std::vector<std::string>& out) {
    auto scope = [&](const Scope& s) {
        std::string r = "{";
        for (std::size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + m.var_name(s[i]);
        return r + "}";
    };
    const TreeNode& n = t.at(node);
    std::string line(static_cast<std::size_t>(depth) * 2, ' ');
    if (n.is_leaf())
        line += describe(m, t.leaves[static_cast<std::size_t>(n.leaf)]);
    else
        line += "x " + scope(n.product);
    if (!n.eliminate.empty()) line += " sum " + scope(n.eliminate);
    out.push_back(std::move(line));
    if (!n.is_leaf()) {
        render_tree(m, t, n.left, depth + 1, out);
        render_tree(m, t, n.right, depth + 1, out);
    }
}

} // namespace tbn

#endif // TBN_PLANNER_HPP
