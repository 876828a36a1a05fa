#ifndef TBN_PLAN_HPP
#define TBN_PLAN_HPP

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tbn/error.hpp"
#include "tbn/factor.hpp"
#include "tbn/model.hpp"
#include "tbn/planner.hpp"

namespace tbn {

inline constexpr std::size_t kDefaultBufferCap = std::size_t{1} << 26;

enum class BufferRole { Constant, Evidence, Past, Scratch, Output };

inline const char* role_name(BufferRole r) {
    switch (r) {
    case BufferRole::Constant: return "constant";
    case BufferRole::Evidence: return "evidence";
    case BufferRole::Past: return "past";
    case BufferRole::Scratch: return "scratch";
    case BufferRole::Output: return "output";
    }
    return "?";
}

struct BufferSpec {
    std::vector<Var> vars;
    std::vector<std::size_t> cards;
    std::size_t size = 1;
    BufferRole role = BufferRole::Scratch;

    friend bool operator==(const BufferSpec&, const BufferSpec&) = default;
};

// Past pairs are addressed indirectly: Cur reads the buffer holding the
// previous slice's factor (its transitional variables at t-1), Next the one
// being written. SwapPast exchanges them.
struct Operand {
    enum class Kind : std::uint8_t { Buffer, PastCur, PastNext };
    Kind kind = Kind::Buffer;
    std::uint32_t index = 0;

    static Operand buffer(std::uint32_t id) { return {Kind::Buffer, id}; }
    static Operand past_cur(std::uint32_t j) { return {Kind::PastCur, j}; }
    static Operand past_next(std::uint32_t j) { return {Kind::PastNext, j}; }

    friend bool operator==(const Operand&, const Operand&) = default;
};

// Loop nest of one instruction, derived from the operand layouts.
struct LoopNest {
    std::vector<std::size_t> dims;
    std::vector<std::size_t> stride_dst, stride_a, stride_b;
    std::size_t total = 1;
};

struct Instruction {
    enum class Op : std::uint8_t {
        Multiply,  // dst = sum over vars not in dst of a * b (dst may broadcast when it is a past factor)
        SumOut,    // dst = sum over vars not in dst of a
        Normalize, // dst /= total(dst)
        SwapPast,  // exchange the buffers of past pair `pair`
    };
    Op op = Op::Normalize;
    Operand dst, a, b;
    std::uint32_t pair = 0;
    LoopNest loop; // filled by prepare(); not part of the plan's identity

    friend bool operator==(const Instruction& x, const Instruction& y) {
        return x.op == y.op && x.dst == y.dst && x.a == y.a && x.b == y.b && x.pair == y.pair;
    }
};

struct PastPair {
    std::uint32_t buffers[2] = {0, 0};
    std::vector<Var> vars; // current-slice naming
    std::vector<std::size_t> cards;

    friend bool operator==(const PastPair& x, const PastPair& y) {
        return x.buffers[0] == y.buffers[0] && x.buffers[1] == y.buffers[1] && x.vars == y.vars && x.cards == y.cards;
    }
};

struct Routine {
    std::string name;            // "advance" or "query <id>"
    std::uint32_t target = 0;    // query target node (queries only)
    std::uint32_t output = 0;    // output buffer (queries only)
    std::vector<Instruction> code;
    std::size_t precomputed_multiplications = 0;
    std::size_t precomputed_largest = 0;
    std::vector<std::string> listing; // rendered factoring trees

    friend bool operator==(const Routine&, const Routine&) = default;
};

struct RoutineStats {
    std::string name;
    std::size_t instructions = 0;
    std::size_t multiplications = 0;
    std::size_t largest_intermediate = 0;
    std::size_t precomputed_multiplications = 0;

    friend bool operator==(const RoutineStats&, const RoutineStats&) = default;
};

struct PlanStats {
    std::size_t total_nodes = 0, static_nodes = 0, dynamic_nodes = 0, transitional_nodes = 0, static_parents = 0,
                observables = 0;
    std::size_t psi_factors = 0, largest_psi_entries = 0, largest_psi_vars = 0, psi_entries = 0;
    std::vector<RoutineStats> routines;
    std::size_t largest_intermediate_table = 0;
    std::size_t constant_table_entries = 0;
    std::size_t precomputed_entries = 0;
    std::size_t total_buffer_entries = 0;

    friend bool operator==(const PlanStats&, const PlanStats&) = default;
};

struct PlanNode {
    std::string id;
    std::size_t card = 0;
    bool is_static = false;
    bool observable = false;
    bool transitional = false;
    bool static_parent = false;

    friend bool operator==(const PlanNode&, const PlanNode&) = default;
};

struct EvaluationPlan {
    std::vector<PlanNode> nodes;
    std::vector<BufferSpec> buffers;
    std::map<std::uint32_t, std::vector<double>> constants; // constant buffer id -> values
    std::vector<std::uint32_t> computed_constants;          // constants produced by precomputed branches
    std::vector<PastPair> past;
    std::vector<std::vector<double>> initial_past; // initial past factor per pair, layout = pair vars
    std::vector<std::pair<std::uint32_t, std::uint32_t>> evidence; // observable node -> evidence buffer
    Routine advance;
    std::vector<Routine> queries;
    Factorization factorization;
    std::size_t stabilization_iterations = 0;
    bool joined = false;
    bool monolithic = false;
    PlanStats stats;

    std::string var_name(Var v) const {
        const std::string& id = nodes.at(v.node).id;
        if (v.is_static()) return id;
        if (v.slice == kCurrent) return id + "@t";
        if (v.slice == kPrevious) return id + "@t-1";
        return id + "@" + std::to_string(v.slice);
    }

    std::string scope_name(const Scope& s) const {
        std::string out = "(";
        bool first = true;
        for (int pass = 0; pass < 2; ++pass)
            for (Var v : s)
                if (v.is_static() == (pass == 1)) {
                    out += (first ? "" : ",") + nodes.at(v.node).id;
                    first = false;
                }
        return out + ")";
    }

    std::string factorization_name() const {
        std::string out = "{";
        for (std::size_t i = 0; i < factorization.factors.size(); ++i)
            out += (i ? "," : "") + scope_name(factorization.factors[i]);
        return out + "}";
    }

    const Routine* query_routine(std::string_view target) const {
        for (const Routine& q : queries)
            if (nodes.at(q.target).id == target) return &q;
        return nullptr;
    }

    friend bool operator==(const EvaluationPlan& a, const EvaluationPlan& b) {
        return a.nodes == b.nodes && a.buffers == b.buffers && a.constants == b.constants &&
               a.computed_constants == b.computed_constants && a.past == b.past && a.initial_past == b.initial_past &&
               a.evidence == b.evidence && a.advance == b.advance && a.queries == b.queries &&
               a.factorization == b.factorization && a.stabilization_iterations == b.stabilization_iterations &&
               a.joined == b.joined && a.monolithic == b.monolithic && a.stats == b.stats;
    }
};

// ---------------------------------------------------------------------------
// Operand layouts, loop nests, statistics, linting

struct Layout {
    std::vector<Var> vars;
    std::vector<std::size_t> cards;
};

inline std::optional<Layout> operand_layout(const EvaluationPlan& p, const Operand& o) {
    switch (o.kind) {
    case Operand::Kind::Buffer:
        if (o.index >= p.buffers.size()) return std::nullopt;
        return Layout{p.buffers[o.index].vars, p.buffers[o.index].cards};
    case Operand::Kind::PastCur: {
        if (o.index >= p.past.size()) return std::nullopt;
        Layout l{p.past[o.index].vars, p.past[o.index].cards};
        for (Var& v : l.vars) v = shifted(v, -1);
        return l;
    }
    case Operand::Kind::PastNext:
        if (o.index >= p.past.size()) return std::nullopt;
        return Layout{p.past[o.index].vars, p.past[o.index].cards};
    }
    return std::nullopt;
}

namespace detail {

inline std::size_t layout_size(const Layout& l) { return checked_product(l.cards); }

inline std::vector<std::size_t> layout_strides(const Layout& l, const std::vector<Var>& loop) {
    const auto own = row_major_strides(l.cards);
    std::vector<std::size_t> out(loop.size(), 0);
    for (std::size_t d = 0; d < loop.size(); ++d) {
        auto it = std::find(l.vars.begin(), l.vars.end(), loop[d]);
        if (it != l.vars.end()) out[d] = own[static_cast<std::size_t>(it - l.vars.begin())];
    }
    return out;
}

// Loop over dst's variables, then each source's new ones.
inline LoopNest make_loop(const Layout& dst, const Layout& a, const Layout* b) {
    std::vector<Var> loop = dst.vars;
    std::vector<std::size_t> dims = dst.cards;
    auto extend = [&](const Layout& l) {
        for (std::size_t i = 0; i < l.vars.size(); ++i)
            if (std::find(loop.begin(), loop.end(), l.vars[i]) == loop.end()) {
                loop.push_back(l.vars[i]);
                dims.push_back(l.cards[i]);
            }
    };
    extend(a);
    if (b) extend(*b);
    LoopNest n;
    n.stride_dst = layout_strides(dst, loop);
    n.stride_a = layout_strides(a, loop);
    if (b) n.stride_b = layout_strides(*b, loop);
    n.total = checked_product(dims);
    n.dims = std::move(dims);
    return n;
}

} // namespace detail

// Derives every instruction's loop nest from the buffer layouts.
inline void prepare(EvaluationPlan& p) {
    auto prep = [&](Instruction& ins) {
        if (ins.op != Instruction::Op::Multiply && ins.op != Instruction::Op::SumOut) return;
        auto d = operand_layout(p, ins.dst);
        auto a = operand_layout(p, ins.a);
        if (!d || !a) throw PlanError("instruction references an undeclared buffer");
        if (ins.op == Instruction::Op::Multiply) {
            auto b = operand_layout(p, ins.b);
            if (!b) throw PlanError("instruction references an undeclared buffer");
            ins.loop = detail::make_loop(*d, *a, &*b);
        } else {
            ins.loop = detail::make_loop(*d, *a, nullptr);
        }
    };
    for (Instruction& i : p.advance.code) prep(i);
    for (Routine& q : p.queries)
        for (Instruction& i : q.code) prep(i);
}

inline RoutineStats routine_stats(const Routine& r) {
    RoutineStats s;
    s.name = r.name;
    s.instructions = r.code.size();
    s.precomputed_multiplications = r.precomputed_multiplications;
    s.largest_intermediate = r.precomputed_largest;
    for (const Instruction& i : r.code) {
        if (i.op != Instruction::Op::Multiply) continue;
        s.multiplications += i.loop.total;
        s.largest_intermediate = std::max(s.largest_intermediate, i.loop.total);
    }
    return s;
}

// Exact statistics from the instruction scopes; requires prepare().
inline PlanStats compute_stats(const EvaluationPlan& p) {
    PlanStats s;
    s.total_nodes = p.nodes.size();
    for (const PlanNode& n : p.nodes) {
        s.static_nodes += n.is_static;
        s.dynamic_nodes += !n.is_static;
        s.transitional_nodes += n.transitional;
        s.static_parents += n.static_parent;
        s.observables += n.observable;
    }
    s.psi_factors = p.past.size();
    for (const PastPair& pp : p.past) {
        const std::size_t n = detail::checked_product(pp.cards);
        s.psi_entries += n;
        s.largest_psi_entries = std::max(s.largest_psi_entries, n);
        s.largest_psi_vars = std::max(s.largest_psi_vars, pp.vars.size());
    }
    s.routines.push_back(routine_stats(p.advance));
    for (const Routine& q : p.queries) s.routines.push_back(routine_stats(q));
    for (const RoutineStats& r : s.routines) s.largest_intermediate_table = std::max(s.largest_intermediate_table, r.largest_intermediate);
    for (std::uint32_t id = 0; id < p.buffers.size(); ++id) {
        const BufferSpec& b = p.buffers[id];
        if (b.role == BufferRole::Constant) {
            s.constant_table_entries += b.size;
            if (std::find(p.computed_constants.begin(), p.computed_constants.end(), id) != p.computed_constants.end())
                s.precomputed_entries += b.size;
        } else {
            s.total_buffer_entries += b.size;
        }
    }
    return s;
}

// Static consistency checks; empty result means the plan is well formed.
inline std::vector<std::string> lint(const EvaluationPlan& p) {
    std::vector<std::string> out;
    auto bad = [&](std::string s) { out.push_back(std::move(s)); };

    for (std::uint32_t id = 0; id < p.buffers.size(); ++id) {
        const BufferSpec& b = p.buffers[id];
        if (b.vars.size() != b.cards.size() || b.size != detail::checked_product(b.cards))
            bad("buffer " + std::to_string(id) + ": size does not match its variables");
        for (std::size_t i = 0; i < b.vars.size(); ++i)
            if (b.vars[i].node >= p.nodes.size() || p.nodes[b.vars[i].node].card != b.cards[i])
                bad("buffer " + std::to_string(id) + ": variable cardinality disagrees with the node table");
        if (b.role == BufferRole::Constant) {
            auto it = p.constants.find(id);
            if (it == p.constants.end() || it->second.size() != b.size)
                bad("constant buffer " + std::to_string(id) + " has no values of the right size");
        }
    }
    for (const auto& [id, v] : p.constants)
        if (id >= p.buffers.size() || p.buffers[id].role != BufferRole::Constant)
            bad("constant values for non-constant buffer " + std::to_string(id));
    if (p.initial_past.size() != p.past.size()) bad("initial past values do not match the past pairs");
    for (std::uint32_t j = 0; j < p.past.size(); ++j) {
        const PastPair& pp = p.past[j];
        for (std::uint32_t b : pp.buffers)
            if (b >= p.buffers.size() || p.buffers[b].role != BufferRole::Past || p.buffers[b].vars != pp.vars)
                bad("past pair " + std::to_string(j) + " does not reference two matching past buffers");
        if (j < p.initial_past.size() && p.initial_past[j].size() != detail::checked_product(pp.cards))
            bad("initial values of past pair " + std::to_string(j) + " have the wrong size");
    }
    for (const auto& [node, buf] : p.evidence)
        if (node >= p.nodes.size() || buf >= p.buffers.size() || p.buffers[buf].role != BufferRole::Evidence ||
            p.buffers[buf].vars != std::vector<Var>{cur_var(node)})
            bad("evidence binding for node " + std::to_string(node) + " is inconsistent");

    auto check_routine = [&](const Routine& r, bool is_advance) {
        const std::string where = r.name + ": ";
        std::vector<bool> written(p.past.size(), false), normalized(p.past.size(), false), swapped(p.past.size(), false);
        for (std::size_t k = 0; k < r.code.size(); ++k) {
            const Instruction& ins = r.code[k];
            const std::string at = where + "instruction " + std::to_string(k) + ": ";
            if (ins.op == Instruction::Op::SwapPast) {
                if (!is_advance || ins.pair >= p.past.size() || swapped[ins.pair]) bad(at + "invalid swap");
                else if (!normalized[ins.pair]) bad(at + "swap of a past factor that was not recomputed");
                else swapped[ins.pair] = true;
                continue;
            }
            auto d = operand_layout(p, ins.dst);
            if (!d) {
                bad(at + "undeclared destination");
                continue;
            }
            const bool past_dst = ins.dst.kind == Operand::Kind::PastNext;
            if (ins.dst.kind == Operand::Kind::PastCur) bad(at + "writes the live past factor");
            if (ins.dst.kind == Operand::Kind::Buffer) {
                const BufferRole role = p.buffers[ins.dst.index].role;
                if (role != BufferRole::Scratch && role != BufferRole::Output) bad(at + "writes a read-only buffer");
            }
            if (past_dst && !is_advance) bad(at + "query routine writes a past factor");
            if (ins.op == Instruction::Op::Normalize) {
                if (past_dst) {
                    if (!written[ins.dst.index]) bad(at + "normalizes an unwritten past factor");
                    normalized[ins.dst.index] = true;
                }
                continue;
            }
            if (past_dst) written[ins.dst.index] = true;
            std::vector<Layout> srcs;
            for (const Operand* o : {&ins.a, &ins.b}) {
                if (o == &ins.b && ins.op != Instruction::Op::Multiply) break;
                auto l = operand_layout(p, *o);
                if (!l) {
                    bad(at + "undeclared source");
                    continue;
                }
                if (*o == ins.dst) bad(at + "destination aliases a source");
                if (o->kind == Operand::Kind::PastNext) bad(at + "reads a past factor being written");
                srcs.push_back(*l);
            }
            std::map<Var, std::size_t> cards;
            bool ok = true;
            auto note = [&](const Layout& l) {
                for (std::size_t i = 0; i < l.vars.size(); ++i) {
                    auto [it, fresh] = cards.emplace(l.vars[i], l.cards[i]);
                    if (!fresh && it->second != l.cards[i]) ok = false;
                }
            };
            note(*d);
            for (const Layout& l : srcs) note(l);
            if (!ok) bad(at + "operand cardinalities disagree");
            if (!past_dst)
                for (Var v : d->vars) {
                    bool covered = false;
                    for (const Layout& l : srcs) covered = covered || std::find(l.vars.begin(), l.vars.end(), v) != l.vars.end();
                    if (!covered) bad(at + "destination variable " + p.var_name(v) + " is not produced by the sources");
                }
            // the prepared loop nest must be the one the layouts imply
            if (srcs.size() == (ins.op == Instruction::Op::Multiply ? 2u : 1u)) {
                const LoopNest expect = detail::make_loop(*d, srcs[0], srcs.size() > 1 ? &srcs[1] : nullptr);
                if (expect.dims != ins.loop.dims || expect.stride_dst != ins.loop.stride_dst ||
                    expect.stride_a != ins.loop.stride_a || expect.stride_b != ins.loop.stride_b)
                    bad(at + "loop nest does not match operand layouts");
            }
        }
        if (is_advance) {
            for (std::uint32_t j = 0; j < p.past.size(); ++j)
                if (!swapped[j]) bad(where + "past factor " + std::to_string(j) + " is never recomputed and swapped");
            for (std::size_t k = r.code.size() - std::min(r.code.size(), p.past.size()); k < r.code.size(); ++k)
                if (r.code[k].op != Instruction::Op::SwapPast) bad(where + "does not end with the past swaps");
        } else {
            if (r.output >= p.buffers.size() || p.buffers[r.output].role != BufferRole::Output ||
                p.buffers[r.output].vars != std::vector<Var>{p.nodes.at(r.target).is_static ? static_var(r.target) : cur_var(r.target)})
                bad(where + "output buffer does not match the target");
            if (r.code.empty() || r.code.back().op != Instruction::Op::Normalize ||
                !(r.code.back().dst == Operand::buffer(r.output)))
                bad(where + "does not end by normalizing its output");
        }
    };
    check_routine(p.advance, true);
    for (const Routine& q : p.queries) check_routine(q, false);
    return out;
}

// ---------------------------------------------------------------------------
// Compilation

struct CompileOptions {
    std::size_t cap = kDefaultBufferCap; // entries per buffer and per product loop
    bool monolithic = false;             // one past factor over the whole interface
};

namespace detail {

class PlanCompiler {
public:
    PlanCompiler(const TbnModel& m, const Classification& c, CompileOptions opt) : m_(m), c_(c), opt_(opt) {}

    EvaluationPlan run(const PastLayout& st) {
        for (std::uint32_t i = 0; i < m_.size(); ++i) {
            const NodeDecl& n = m_.node(i);
            plan_.nodes.push_back({n.id, n.card(), n.is_static(), n.observable, c_.is_transitional(i),
                                   c_.is_static_parent(i)});
        }
        Factorization layout = st.factors;
        if (opt_.monolithic && !layout.empty()) {
            Scope all;
            for (const Scope& s : layout.factors) all = scope_union(all, s);
            layout.factors = {all};
        }
        plan_.factorization = layout;
        plan_.stabilization_iterations = st.iterations;
        plan_.joined = st.joined;
        plan_.monolithic = opt_.monolithic;

        for (std::uint32_t o : c_.observables)
            plan_.evidence.push_back({o, add_buffer({cur_var(o)}, BufferRole::Evidence)});
        for (const Scope& s : layout.factors) {
            PastPair pp;
            pp.vars = s;
            for (Var v : s) pp.cards.push_back(m_.card(v));
            pp.buffers[0] = add_buffer(s, BufferRole::Past);
            pp.buffers[1] = add_buffer(s, BufferRole::Past);
            plan_.past.push_back(std::move(pp));
        }
        initial_values(layout);
        compile_advance(layout);
        for (std::uint32_t t : m_.query_targets()) compile_query(layout, t);
        prepare(plan_);
        plan_.stats = compute_stats(plan_);
        return std::move(plan_);
    }

private:
    std::vector<std::string> culprits(const Scope& s) const {
        std::vector<std::string> names;
        for (Var v : s)
            if (c_.in_interface(v.node)) names.push_back(m_.node(v.node).id);
        if (names.empty())
            for (Var v : s) names.push_back(m_.var_name(v));
        std::sort(names.begin(), names.end());
        names.erase(std::unique(names.begin(), names.end()), names.end());
        return names;
    }

    void check_cap(const Scope& s, const char* what) const {
        const std::size_t n = table_size(m_, s);
        if (n <= opt_.cap) return;
        auto names = culprits(s);
        std::string list;
        for (const auto& x : names) list += (list.empty() ? "" : ", ") + x;
        throw CapacityError(std::string(what) + " of " + (n == SIZE_MAX ? std::string("overflowing size") : std::to_string(n) + " entries") +
                                " exceeds the cap of " + std::to_string(opt_.cap) + "; interface nodes involved: " + list,
                            std::move(names));
    }

    std::uint32_t add_buffer(const std::vector<Var>& vars, BufferRole role) {
        check_cap(sorted_scope(vars), "table");
        BufferSpec b;
        b.vars = vars;
        for (Var v : vars) b.cards.push_back(m_.card(v));
        b.size = checked_product(b.cards);
        b.role = role;
        plan_.buffers.push_back(std::move(b));
        return static_cast<std::uint32_t>(plan_.buffers.size() - 1);
    }

    std::uint32_t add_constant(const Factor& f, bool computed) {
        for (const auto& [id, values] : plan_.constants)
            if (plan_.buffers[id].vars == f.vars() && values == f.values()) {
                if (computed && std::find(plan_.computed_constants.begin(), plan_.computed_constants.end(), id) ==
                                    plan_.computed_constants.end())
                    plan_.computed_constants.push_back(id);
                return id;
            }
        const std::uint32_t id = add_buffer(f.vars(), BufferRole::Constant);
        plan_.constants[id] = f.values();
        if (computed) plan_.computed_constants.push_back(id);
        std::sort(plan_.computed_constants.begin(), plan_.computed_constants.end());
        return id;
    }

    Factor leaf_table(const ExpressionRef& e) const {
        switch (e.kind) {
        case ExpressionRef::Kind::NodeCpt: return cpt_factor(m_, e.index);
        case ExpressionRef::Kind::InitCpt: return initial_factor(m_, e.index);
        default: throw PlanError("leaf has no compile-time value");
        }
    }

    void initial_values(const Factorization& layout) {
        std::vector<Factor> acc(layout.factors.size());
        for (std::uint32_t t : c_.transitional) {
            std::size_t home = layout.factors.size();
            for (std::size_t j = 0; j < layout.factors.size(); ++j)
                if (scope_contains(layout.factors[j], cur_var(t))) home = j;
            if (home == layout.factors.size())
                throw PlanError("transitional node '" + m_.node(t).id + "' is missing from the past layout");
            acc[home] = multiply(acc[home], initial_factor(m_, t));
        }
        for (std::size_t j = 0; j < layout.factors.size(); ++j) {
            const PastPair& pp = plan_.past[j];
            for (Var v : acc[j].vars())
                if (!scope_contains(pp.vars, v))
                    throw PlanError("initial past expression does not fit the past layout");
            plan_.initial_past.push_back(normalize(align(acc[j], pp.vars, pp.cards), "initial past factor").values());
        }
    }

    // Emits the residual tree below `node`; returns the operand holding its value.
    Operand emit(const FactoringTree& r, int node, const std::vector<std::uint32_t>& const_ids, Routine& out,
                 std::optional<Operand> final_dst) {
        const TreeNode& n = r.at(node);
        if (n.is_leaf()) {
            const ExpressionRef& e = r.leaves[static_cast<std::size_t>(n.leaf)];
            Operand src;
            switch (e.kind) {
            case ExpressionRef::Kind::Constant: src = Operand::buffer(const_ids.at(e.index)); break;
            case ExpressionRef::Kind::Evidence: src = Operand::buffer(evidence_buffer(e.index)); break;
            case ExpressionRef::Kind::PastFactor: src = Operand::past_cur(e.index); break;
            default: throw PlanError("unexpected leaf in residual tree");
            }
            if (!final_dst && n.eliminate.empty()) return src;
            const Operand dst = final_dst ? *final_dst : Operand::buffer(add_buffer(n.scope, BufferRole::Scratch));
            Instruction ins;
            ins.op = Instruction::Op::SumOut;
            ins.dst = dst;
            ins.a = src;
            out.code.push_back(ins);
            return dst;
        }
        const Operand a = emit(r, n.left, const_ids, out, std::nullopt);
        const Operand b = emit(r, n.right, const_ids, out, std::nullopt);
        check_cap(n.product, "product");
        const Operand dst = final_dst ? *final_dst : Operand::buffer(add_buffer(n.scope, BufferRole::Scratch));
        Instruction ins;
        ins.op = Instruction::Op::Multiply;
        ins.dst = dst;
        ins.a = a;
        ins.b = b;
        out.code.push_back(ins);
        return dst;
    }

    std::uint32_t evidence_buffer(std::uint32_t node) const {
        for (const auto& [o, b] : plan_.evidence)
            if (o == node) return b;
        throw PlanError("no evidence buffer for node '" + m_.node(node).id + "'");
    }

    // Tree construction, precomputation of static branches and emission.
    void compile_tree(std::vector<ExpressionRef> exprs, const Scope& preserve, Operand final_dst, Routine& out) {
        const FactoringTree tree = build_factoring_tree(m_, std::move(exprs), preserve);
        const StaticSplit split = split_static_branches(tree);
        std::vector<Factor> tables;
        for (const ExpressionRef& e : tree.leaves) tables.push_back(e.varies() ? Factor() : leaf_table(e));
        std::vector<std::uint32_t> const_ids;
        for (int root : split.constant_roots) {
            std::size_t mults = 0, largest = 0;
            bool computed = false;
            std::function<void(int)> walk = [&](int id) {
                const TreeNode& n = tree.at(id);
                check_cap(n.product, "precomputed product");
                computed = computed || !n.eliminate.empty();
                if (n.is_leaf()) return;
                computed = true;
                const std::size_t size = table_size(m_, n.product);
                mults += size;
                largest = std::max(largest, size);
                walk(n.left);
                walk(n.right);
            };
            walk(root);
            out.precomputed_multiplications += mults;
            out.precomputed_largest = std::max(out.precomputed_largest, largest);
            const_ids.push_back(add_constant(evaluate_tree(tree, root, tables), computed));
        }
        render_tree(m_, tree, tree.root, 1, out.listing);
        emit(split.residual, split.residual.root, const_ids, out, final_dst);
    }

    void compile_advance(const Factorization& layout) {
        Routine& out = plan_.advance;
        out.name = "advance";
        if (layout.empty()) return;
        const AdvanceStructure a = advance_structure(m_, c_, layout);
        std::vector<std::vector<std::size_t>> members(layout.factors.size());
        for (const SymbolicGroup& g : a.groups) {
            std::optional<std::size_t> home;
            for (std::size_t j = 0; j < layout.factors.size() && !home; ++j) {
                bool fits = scope_includes(layout.factors[j], g.scope);
                if (has_dynamic(g.scope)) {
                    bool shares = false;
                    for (Var v : g.scope) shares = shares || (!v.is_static() && scope_contains(layout.factors[j], v));
                    fits = fits && shares;
                }
                if (fits) home = j;
            }
            if (!home) throw PlanError("advance result " + format_scope(m_, g.scope) + " does not fit the past layout");
            members[*home].insert(members[*home].end(), g.members.begin(), g.members.end());
        }
        for (std::uint32_t j = 0; j < layout.factors.size(); ++j) {
            const Operand dst = Operand::past_next(j);
            out.listing.push_back("psi" + std::to_string(j) + " " + format_scope(m_, layout.factors[j]) + ":");
            if (members[j].empty()) {
                Instruction fill;
                fill.op = Instruction::Op::SumOut;
                fill.dst = dst;
                fill.a = Operand::buffer(add_constant(Factor::scalar(1.0), false));
                out.code.push_back(fill);
                out.listing.push_back("  (uniform)");
            } else {
                std::sort(members[j].begin(), members[j].end());
                std::vector<ExpressionRef> exprs;
                for (std::size_t i : members[j]) exprs.push_back(a.exprs[i]);
                compile_tree(std::move(exprs), layout.factors[j], dst, out);
            }
            Instruction norm;
            norm.op = Instruction::Op::Normalize;
            norm.dst = dst;
            out.code.push_back(norm);
        }
        for (std::uint32_t j = 0; j < layout.factors.size(); ++j) {
            Instruction swap;
            swap.op = Instruction::Op::SwapPast;
            swap.pair = j;
            out.code.push_back(swap);
        }
    }

    void compile_query(const Factorization& layout, std::uint32_t target) {
        Routine out;
        out.name = "query " + m_.node(target).id;
        out.target = target;
        const Var tv = m_.self_var(target);
        out.output = add_buffer({tv}, BufferRole::Output);

        std::vector<ExpressionRef> exprs;
        for (std::uint32_t s : c_.statics) exprs.push_back(cpt_expression(m_, s));
        for (std::uint32_t k = 0; k < layout.factors.size(); ++k) {
            std::vector<Var> sc;
            for (Var v : layout.factors[k]) sc.push_back(shifted(v, -1));
            exprs.push_back({ExpressionRef::Kind::PastFactor, k, sc, std::nullopt});
        }
        for (std::uint32_t d : c_.dynamics) exprs.push_back(cpt_expression(m_, d));
        for (std::uint32_t o : c_.observables) exprs.push_back(evidence_expression(o));

        const Var keep[] = {tv};
        const auto use = relevant_expressions(exprs, keep);
        std::vector<ExpressionRef> relevant;
        for (std::size_t i : use) relevant.push_back(exprs[i]);
        bool present = false;
        for (const auto& e : relevant) present = present || e.mentions(tv);
        if (!present) throw PlanError("query target '" + m_.node(target).id + "' is not in the one-slice net");
        compile_tree(std::move(relevant), {tv}, Operand::buffer(out.output), out);
        Instruction norm;
        norm.op = Instruction::Op::Normalize;
        norm.dst = Operand::buffer(out.output);
        out.code.push_back(norm);
        plan_.queries.push_back(std::move(out));
    }

    const TbnModel& m_;
    const Classification& c_;
    CompileOptions opt_;
    EvaluationPlan plan_;
};

} // namespace detail

// Compiles a validated model into a fixed evaluation plan.
inline EvaluationPlan compile(const TbnModel& m, const PastLayout& st, CompileOptions opt = {}) {
    const ValidationReport report = validate(m);
    if (!report.empty()) throw ModelError("model is not valid:\n" + format_report(report));
    const Classification c = classify(m);
    return detail::PlanCompiler(m, c, opt).run(st);
}

inline EvaluationPlan compile(const TbnModel& m, CompileOptions opt = {}) {
    const ValidationReport report = validate(m);
    if (!report.empty()) throw ModelError("model is not valid:\n" + format_report(report));
    const Classification c = classify(m);
    return detail::PlanCompiler(m, c, opt).run(past_layout(m, c));
}

// ---------------------------------------------------------------------------
// Plan file: canonical text, byte-deterministic, checksummed.

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string plan_var(const EvaluationPlan& p, Var v) { return p.var_name(v); }

inline std::string operand_token(const Operand& o) {
    switch (o.kind) {
    case Operand::Kind::Buffer: return "b" + std::to_string(o.index);
    case Operand::Kind::PastCur: return "cur" + std::to_string(o.index);
    case Operand::Kind::PastNext: return "next" + std::to_string(o.index);
    }
    return "?";
}

inline void write_stats(std::ostream& os, const PlanStats& s) {
    os << "stats nodes " << s.total_nodes << ' ' << s.static_nodes << ' ' << s.dynamic_nodes << ' '
       << s.transitional_nodes << ' ' << s.static_parents << ' ' << s.observables << '\n';
    os << "stats psi " << s.psi_factors << ' ' << s.psi_entries << ' ' << s.largest_psi_entries << ' '
       << s.largest_psi_vars << '\n';
    os << "stats tables " << s.largest_intermediate_table << ' ' << s.constant_table_entries << ' '
       << s.precomputed_entries << ' ' << s.total_buffer_entries << '\n';
    for (const RoutineStats& r : s.routines)
        os << "stats routine " << r.instructions << ' ' << r.multiplications << ' ' << r.largest_intermediate << ' '
           << r.precomputed_multiplications << ' ' << r.name << '\n';
}

inline void write_routine(std::ostream& os, const EvaluationPlan& p, const Routine& r) {
    os << "routine " << r.precomputed_multiplications << ' ' << r.precomputed_largest << ' ' << r.code.size() << ' ';
    if (r.name == "advance")
        os << "advance\n";
    else
        os << "query " << p.nodes.at(r.target).id << ' ' << r.output << '\n';
    for (const Instruction& i : r.code) {
        switch (i.op) {
        case Instruction::Op::Multiply:
            os << "  mul " << operand_token(i.dst) << ' ' << operand_token(i.a) << ' ' << operand_token(i.b) << '\n';
            break;
        case Instruction::Op::SumOut: os << "  sum " << operand_token(i.dst) << ' ' << operand_token(i.a) << '\n'; break;
        case Instruction::Op::Normalize: os << "  norm " << operand_token(i.dst) << '\n'; break;
        case Instruction::Op::SwapPast: os << "  swap " << i.pair << '\n'; break;
        }
    }
    os << "listing " << r.listing.size() << '\n';
    for (const std::string& l : r.listing) os << "| " << l << '\n';
}

} // namespace detail

inline std::string serialize_plan(const EvaluationPlan& p) {
    std::ostringstream os;
    os << "tbn-plan 1\n";
    for (const PlanNode& n : p.nodes) {
        os << "node " << n.id << ' ' << n.card << ' ' << (n.is_static ? "static" : "dynamic");
        if (n.observable) os << " observable";
        if (n.transitional) os << " transitional";
        if (n.static_parent) os << " static-parent";
        os << '\n';
    }
    os << "layout " << p.stabilization_iterations << ' ' << (p.joined ? "joined" : "plain") << ' '
       << (p.monolithic ? "monolithic" : "factored") << ' ' << p.factorization.factors.size() << '\n';
    for (const Scope& s : p.factorization.factors) {
        os << "factor";
        for (Var v : s) os << ' ' << p.var_name(v);
        os << '\n';
    }
    for (const BufferSpec& b : p.buffers) {
        os << "buffer " << role_name(b.role) << ' ' << b.size;
        for (Var v : b.vars) os << ' ' << p.var_name(v);
        os << '\n';
    }
    for (const auto& [id, values] : p.constants) {
        const bool computed =
            std::find(p.computed_constants.begin(), p.computed_constants.end(), id) != p.computed_constants.end();
        os << "constant " << id << ' ' << (computed ? "computed" : "table");
        for (double v : values) os << ' ' << detail::format_double(v);
        os << '\n';
    }
    for (std::size_t j = 0; j < p.past.size(); ++j) {
        os << "past " << p.past[j].buffers[0] << ' ' << p.past[j].buffers[1];
        for (double v : p.initial_past.at(j)) os << ' ' << detail::format_double(v);
        os << '\n';
    }
    for (const auto& [node, buf] : p.evidence) os << "evidence " << p.nodes.at(node).id << ' ' << buf << '\n';
    detail::write_routine(os, p, p.advance);
    for (const Routine& q : p.queries) detail::write_routine(os, p, q);
    detail::write_stats(os, p.stats);
    std::string body = os.str();
    char sum[32];
    std::snprintf(sum, sizeof sum, "%016llx", static_cast<unsigned long long>(detail::fnv1a(body)));
    return body + "checksum " + sum + "\n";
}

inline EvaluationPlan parse_plan(std::string_view text) {
    auto fail = [](std::size_t line, const std::string& what) -> void { throw PlanError("plan line " + std::to_string(line) + ": " + what); };

    const std::size_t cpos = text.rfind("checksum ");
    if (cpos == std::string_view::npos || (cpos > 0 && text[cpos - 1] != '\n')) throw PlanError("plan has no checksum");
    {
        std::string_view tail = text.substr(cpos + 9);
        while (!tail.empty() && (tail.back() == '\n' || tail.back() == '\r')) tail.remove_suffix(1);
        char sum[32];
        std::snprintf(sum, sizeof sum, "%016llx", static_cast<unsigned long long>(detail::fnv1a(text.substr(0, cpos))));
        if (tail != sum) throw PlanError("plan checksum mismatch (file is corrupt or was edited)");
    }

    EvaluationPlan p;
    std::map<std::string, std::uint32_t, std::less<>> index;
    auto lines = detail::tokenize_lines(text.substr(0, cpos));
    // listing lines are kept verbatim, so re-split the raw text alongside the tokens
    std::vector<std::string_view> raw;
    {
        std::string_view body = text.substr(0, cpos);
        std::size_t pos = 0;
        while (pos < body.size()) {
            std::size_t end = body.find('\n', pos);
            if (end == std::string_view::npos) end = body.size();
            raw.push_back(body.substr(pos, end - pos));
            pos = end + 1;
        }
    }
    auto number = [&](const detail::Token& t) -> std::size_t {
        std::size_t v = 0;
        auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
        if (ec != std::errc() || ptr != t.text.data() + t.text.size()) fail(t.line, "expected an integer, got '" + t.text + "'");
        return v;
    };
    auto real = [&](const detail::Token& t) {
        auto v = detail::parse_double(t.text);
        if (!v) fail(t.line, "expected a number, got '" + t.text + "'");
        return *v;
    };
    auto var = [&](const detail::Token& t) -> Var {
        const auto at = t.text.find('@');
        const std::string id = t.text.substr(0, at);
        auto it = index.find(id);
        if (it == index.end()) fail(t.line, "unknown node '" + id + "'");
        if (at == std::string::npos) return static_var(it->second);
        const std::string slice = t.text.substr(at + 1);
        if (slice == "t") return cur_var(it->second);
        if (slice == "t-1") return prev_var(it->second);
        fail(t.line, "bad variable '" + t.text + "'");
        return {};
    };
    auto operand = [&](const detail::Token& t) -> Operand {
        const std::string& s = t.text;
        auto tail = [&](std::size_t n) {
            detail::Token u = t;
            u.text = s.substr(n);
            return static_cast<std::uint32_t>(number(u));
        };
        if (s.rfind("next", 0) == 0) return Operand::past_next(tail(4));
        if (s.rfind("cur", 0) == 0) return Operand::past_cur(tail(3));
        if (s.rfind("b", 0) == 0) return Operand::buffer(tail(1));
        fail(t.line, "bad operand '" + s + "'");
        return {};
    };

    std::size_t li = 0;
    auto next_line = [&]() -> const std::vector<detail::Token>* {
        while (li < lines.size() && lines[li].empty()) ++li;
        return li < lines.size() ? &lines[li++] : nullptr;
    };
    const auto* first = next_line();
    if (!first || first->size() != 2 || (*first)[0].text != "tbn-plan" || (*first)[1].text != "1")
        throw PlanError("not a version-1 plan file");

    Routine* current = nullptr;
    std::size_t pending_code = 0, pending_listing = 0, pending_factors = 0;
    bool advance_seen = false;
    while (const auto* tl = next_line()) {
        const auto& t = *tl;
        const std::string& kw = t[0].text;
        const std::size_t line = t[0].line;
        auto need = [&](std::size_t n) {
            if (t.size() < n) fail(line, "truncated '" + kw + "' record");
        };
        if (kw == "|") {
            if (!current || pending_listing == 0) fail(line, "unexpected listing line");
            std::string_view r = raw.at(line - 1);
            r.remove_prefix(std::min<std::size_t>(2, r.size()));
            current->listing.emplace_back(r);
            --pending_listing;
            continue;
        }
        if (pending_listing > 0) fail(line, "listing is shorter than declared");
        if (kw == "mul" || kw == "sum" || kw == "norm" || kw == "swap") {
            if (!current || pending_code == 0) fail(line, "instruction outside of a routine");
            Instruction ins;
            if (kw == "mul") {
                need(4);
                ins.op = Instruction::Op::Multiply;
                ins.dst = operand(t[1]);
                ins.a = operand(t[2]);
                ins.b = operand(t[3]);
            } else if (kw == "sum") {
                need(3);
                ins.op = Instruction::Op::SumOut;
                ins.dst = operand(t[1]);
                ins.a = operand(t[2]);
            } else if (kw == "norm") {
                need(2);
                ins.op = Instruction::Op::Normalize;
                ins.dst = operand(t[1]);
            } else {
                need(2);
                ins.op = Instruction::Op::SwapPast;
                ins.pair = static_cast<std::uint32_t>(number(t[1]));
            }
            current->code.push_back(ins);
            --pending_code;
            continue;
        }
        if (pending_code > 0) fail(line, "routine is shorter than declared");
        if (pending_factors > 0 && kw != "factor") fail(line, "layout is shorter than declared");
        if (kw == "node") {
            need(4);
            PlanNode n;
            n.id = t[1].text;
            n.card = number(t[2]);
            if (t[3].text != "static" && t[3].text != "dynamic") fail(line, "bad node kind");
            n.is_static = t[3].text == "static";
            for (std::size_t i = 4; i < t.size(); ++i) {
                if (t[i].text == "observable") n.observable = true;
                else if (t[i].text == "transitional") n.transitional = true;
                else if (t[i].text == "static-parent") n.static_parent = true;
                else fail(line, "bad node flag '" + t[i].text + "'");
            }
            index.emplace(n.id, static_cast<std::uint32_t>(p.nodes.size()));
            p.nodes.push_back(std::move(n));
        } else if (kw == "layout") {
            need(5);
            p.stabilization_iterations = number(t[1]);
            p.joined = t[2].text == "joined";
            p.monolithic = t[3].text == "monolithic";
            pending_factors = number(t[4]);
        } else if (kw == "factor") {
            if (pending_factors == 0) fail(line, "unexpected factor record");
            Scope s;
            for (std::size_t i = 1; i < t.size(); ++i) s.push_back(var(t[i]));
            p.factorization.factors.push_back(std::move(s));
            --pending_factors;
        } else if (kw == "buffer") {
            need(3);
            BufferSpec b;
            const std::string& role = t[1].text;
            if (role == "constant") b.role = BufferRole::Constant;
            else if (role == "evidence") b.role = BufferRole::Evidence;
            else if (role == "past") b.role = BufferRole::Past;
            else if (role == "scratch") b.role = BufferRole::Scratch;
            else if (role == "output") b.role = BufferRole::Output;
            else fail(line, "bad buffer role '" + role + "'");
            b.size = number(t[2]);
            for (std::size_t i = 3; i < t.size(); ++i) {
                const Var v = var(t[i]);
                b.vars.push_back(v);
                b.cards.push_back(p.nodes.at(v.node).card);
            }
            p.buffers.push_back(std::move(b));
        } else if (kw == "constant") {
            need(3);
            const auto id = static_cast<std::uint32_t>(number(t[1]));
            if (t[2].text == "computed") p.computed_constants.push_back(id);
            else if (t[2].text != "table") fail(line, "bad constant kind");
            std::vector<double> v;
            for (std::size_t i = 3; i < t.size(); ++i) v.push_back(real(t[i]));
            if (!p.constants.emplace(id, std::move(v)).second) fail(line, "constant defined twice");
        } else if (kw == "past") {
            need(3);
            PastPair pp;
            pp.buffers[0] = static_cast<std::uint32_t>(number(t[1]));
            pp.buffers[1] = static_cast<std::uint32_t>(number(t[2]));
            if (pp.buffers[0] >= p.buffers.size()) fail(line, "past pair references an undeclared buffer");
            pp.vars = p.buffers[pp.buffers[0]].vars;
            pp.cards = p.buffers[pp.buffers[0]].cards;
            std::vector<double> v;
            for (std::size_t i = 3; i < t.size(); ++i) v.push_back(real(t[i]));
            p.past.push_back(std::move(pp));
            p.initial_past.push_back(std::move(v));
        } else if (kw == "evidence") {
            need(3);
            auto it = index.find(t[1].text);
            if (it == index.end()) fail(line, "unknown observable '" + t[1].text + "'");
            p.evidence.push_back({it->second, static_cast<std::uint32_t>(number(t[2]))});
        } else if (kw == "routine") {
            need(5);
            Routine r;
            r.precomputed_multiplications = number(t[1]);
            r.precomputed_largest = number(t[2]);
            pending_code = number(t[3]);
            if (t[4].text == "advance") {
                if (advance_seen) fail(line, "two advance routines");
                advance_seen = true;
                r.name = "advance";
                p.advance = std::move(r);
                current = &p.advance;
            } else if (t[4].text == "query") {
                need(7);
                auto it = index.find(t[5].text);
                if (it == index.end()) fail(line, "unknown query target '" + t[5].text + "'");
                r.name = "query " + t[5].text;
                r.target = it->second;
                r.output = static_cast<std::uint32_t>(number(t[6]));
                p.queries.push_back(std::move(r));
                current = &p.queries.back();
            } else {
                fail(line, "bad routine kind");
            }
        } else if (kw == "listing") {
            need(2);
            if (!current) fail(line, "listing outside of a routine");
            pending_listing = number(t[1]);
        } else if (kw == "stats") {
            need(2);
            const std::string& what = t[1].text;
            PlanStats& s = p.stats;
            if (what == "nodes") {
                need(8);
                s.total_nodes = number(t[2]);
                s.static_nodes = number(t[3]);
                s.dynamic_nodes = number(t[4]);
                s.transitional_nodes = number(t[5]);
                s.static_parents = number(t[6]);
                s.observables = number(t[7]);
            } else if (what == "psi") {
                need(6);
                s.psi_factors = number(t[2]);
                s.psi_entries = number(t[3]);
                s.largest_psi_entries = number(t[4]);
                s.largest_psi_vars = number(t[5]);
            } else if (what == "tables") {
                need(6);
                s.largest_intermediate_table = number(t[2]);
                s.constant_table_entries = number(t[3]);
                s.precomputed_entries = number(t[4]);
                s.total_buffer_entries = number(t[5]);
            } else if (what == "routine") {
                need(7);
                RoutineStats r;
                r.instructions = number(t[2]);
                r.multiplications = number(t[3]);
                r.largest_intermediate = number(t[4]);
                r.precomputed_multiplications = number(t[5]);
                for (std::size_t i = 6; i < t.size(); ++i) r.name += (i > 6 ? " " : "") + t[i].text;
                s.routines.push_back(std::move(r));
            } else {
                fail(line, "bad stats record");
            }
        } else {
            fail(line, "unknown record '" + kw + "'");
        }
    }
    if (pending_code || pending_listing || pending_factors) throw PlanError("plan is truncated");
    if (!advance_seen) throw PlanError("plan has no advance routine");
    for (std::uint32_t j = 0; j < p.past.size(); ++j)
        if (p.past[j].buffers[1] >= p.buffers.size()) throw PlanError("past pair references an undeclared buffer");

    prepare(p);
    const auto problems = lint(p);
    if (!problems.empty()) throw PlanError("plan is inconsistent: " + problems.front());
    if (compute_stats(p) != p.stats) throw PlanError("plan statistics do not match its instructions");
    return p;
}

inline std::string format_stats(const PlanStats& s) {
    std::ostringstream os;
    os << "total nodes            " << s.total_nodes << '\n'
       << "static nodes           " << s.static_nodes << '\n'
       << "dynamic nodes          " << s.dynamic_nodes << '\n'
       << "transitional nodes     " << s.transitional_nodes << '\n'
       << "static parents         " << s.static_parents << '\n'
       << "dynamic observables    " << s.observables << '\n'
       << "past factors           " << s.psi_factors << '\n'
       << "past entries           " << s.psi_entries << '\n'
       << "largest past factor    " << s.largest_psi_entries << " entries over " << s.largest_psi_vars << " nodes\n"
       << "largest intermediate   " << s.largest_intermediate_table << '\n'
       << "constant table entries " << s.constant_table_entries << '\n'
       << "precomputed entries    " << s.precomputed_entries << '\n'
       << "buffer entries         " << s.total_buffer_entries << '\n';
    for (const RoutineStats& r : s.routines)
        os << r.name << ": " << r.instructions << " instructions, " << r.multiplications << " multiplications, largest "
           << r.largest_intermediate << ", precomputed " << r.precomputed_multiplications << " multiplications\n";
    return os.str();
}

} // namespace tbn

#endif // TBN_PLAN_HPP
