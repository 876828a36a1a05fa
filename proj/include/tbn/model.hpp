#ifndef TBN_MODEL_HPP
#define TBN_MODEL_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tbn/error.hpp"
#include "tbn/factor.hpp"

namespace tbn {

enum class NodeKind { Static, Dynamic };

// Template-level parent reference. lag 1 means "the same node one slice back".
struct ParentRef {
    std::uint32_t node = 0;
    int lag = 0;

    friend bool operator==(const ParentRef&, const ParentRef&) = default;
};

struct InitialCpt {
    std::vector<std::uint32_t> parents; // static parents or transitional nodes, all at slice -1
    std::vector<double> values;         // layout as for NodeDecl::cpt

    friend bool operator==(const InitialCpt&, const InitialCpt&) = default;
};

struct NodeDecl {
    std::string id;
    NodeKind kind = NodeKind::Static;
    std::vector<std::string> states;
    std::vector<ParentRef> parents;
    // Row-major over (parents..., self); parent configurations iterate
    // rightmost-parent-fastest, one conditional distribution per configuration.
    std::vector<double> cpt;
    bool observable = false;
    bool declares_init = false; // "transitional-init" flag on the node line
    std::optional<InitialCpt> initial;

    std::size_t card() const { return states.size(); }
    bool is_static() const { return kind == NodeKind::Static; }

    friend bool operator==(const NodeDecl&, const NodeDecl&) = default;
};

class TbnModel {
public:
    TbnModel() = default;
    TbnModel(std::vector<NodeDecl> nodes, std::vector<std::uint32_t> query_targets)
        : nodes_(std::move(nodes)), query_targets_(std::move(query_targets)) {
        for (std::uint32_t i = 0; i < nodes_.size(); ++i) index_.emplace(nodes_[i].id, i);
    }

    const std::vector<NodeDecl>& nodes() const { return nodes_; }
    const NodeDecl& node(std::uint32_t i) const { return nodes_.at(i); }
    std::size_t size() const { return nodes_.size(); }
    const std::vector<std::uint32_t>& query_targets() const { return query_targets_; }

    std::optional<std::uint32_t> find(std::string_view id) const {
        auto it = index_.find(id);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::uint32_t index_of(std::string_view id) const {
        auto i = find(id);
        if (!i) throw ModelError("unknown node '" + std::string(id) + "'");
        return *i;
    }

    std::size_t card(std::uint32_t i) const { return nodes_.at(i).card(); }
    std::size_t card(Var v) const { return card(v.node); }

    // The variable a node takes in the one-slice view.
    Var self_var(std::uint32_t i) const { return nodes_.at(i).is_static() ? static_var(i) : cur_var(i); }

    Var parent_var(const ParentRef& p) const {
        if (nodes_.at(p.node).is_static()) return static_var(p.node);
        return p.lag == 0 ? cur_var(p.node) : prev_var(p.node);
    }

    std::string var_name(Var v) const {
        const std::string& id = nodes_.at(v.node).id;
        if (v.is_static()) return id;
        if (v.slice == kCurrent) return id + "@t";
        if (v.slice == kPrevious) return id + "@t-1";
        return id + "@" + std::to_string(v.slice);
    }

    friend bool operator==(const TbnModel& a, const TbnModel& b) {
        return a.nodes_ == b.nodes_ && a.query_targets_ == b.query_targets_;
    }

private:
    std::vector<NodeDecl> nodes_;
    std::vector<std::uint32_t> query_targets_;
    std::map<std::string, std::uint32_t, std::less<>> index_;
};

// ---------------------------------------------------------------------------
// Factor views of the template tables

// CPT of node i over (parents..., self) with the node's own variable at `slice`.
inline Factor cpt_factor(const TbnModel& m, std::uint32_t i, std::int32_t slice = kCurrent) {
    const NodeDecl& n = m.node(i);
    std::vector<Var> vars;
    std::vector<std::size_t> cards;
    for (const ParentRef& p : n.parents) {
        vars.push_back(shifted(m.parent_var(p), slice));
        cards.push_back(m.card(p.node));
    }
    vars.push_back(n.is_static() ? static_var(i) : Var{i, slice});
    cards.push_back(n.card());
    return Factor(std::move(vars), std::move(cards), n.cpt);
}

// Initial CPT of transitional node i over (init parents..., self), dynamic
// variables placed at `slice`.
inline Factor initial_factor(const TbnModel& m, std::uint32_t i, std::int32_t slice = kCurrent) {
    const NodeDecl& n = m.node(i);
    if (!n.initial) throw ModelError("node '" + n.id + "' has no initial CPT");
    std::vector<Var> vars;
    std::vector<std::size_t> cards;
    for (std::uint32_t p : n.initial->parents) {
        vars.push_back(m.node(p).is_static() ? static_var(p) : Var{p, slice});
        cards.push_back(m.card(p));
    }
    vars.push_back(Var{i, slice});
    cards.push_back(n.card());
    return Factor(std::move(vars), std::move(cards), n.initial->values);
}

// ---------------------------------------------------------------------------
// Construction from names

struct RawParent {
    std::string id;
    int lag = 0;
    std::size_t line = 0, column = 0;
};

struct RawNode {
    std::string id;
    NodeKind kind = NodeKind::Static;
    bool observable = false;
    bool declares_init = false;
    std::vector<std::string> states;
    std::vector<RawParent> parents;
    std::vector<double> cpt;
    bool has_initial = false;
    std::vector<RawParent> init_parents;
    std::vector<double> init_values;
    std::size_t line = 0, column = 0;
};

struct RawTarget {
    std::string id;
    std::size_t line = 0, column = 0;
};

namespace detail {

[[noreturn]] inline void raise_at(std::size_t line, std::size_t column, const std::string& what) {
    if (line == 0) throw ModelError(what);
    throw ParseError(line, column, what);
}

} // namespace detail

// Resolves names into indices. Raises on duplicate ids and undeclared references.
inline TbnModel resolve(const std::vector<RawNode>& raw, const std::vector<RawTarget>& targets) {
    std::map<std::string, std::uint32_t, std::less<>> index;
    for (std::uint32_t i = 0; i < raw.size(); ++i)
        if (!index.emplace(raw[i].id, i).second)
            detail::raise_at(raw[i].line, raw[i].column, "duplicate node id '" + raw[i].id + "'");

    auto lookup = [&](const std::string& id, std::size_t line, std::size_t col) {
        auto it = index.find(id);
        if (it == index.end()) detail::raise_at(line, col, "reference to undeclared node '" + id + "'");
        return it->second;
    };

    std::vector<NodeDecl> nodes;
    nodes.reserve(raw.size());
    for (const RawNode& r : raw) {
        NodeDecl n;
        n.id = r.id;
        n.kind = r.kind;
        n.states = r.states;
        n.observable = r.observable;
        n.declares_init = r.declares_init;
        n.cpt = r.cpt;
        for (const RawParent& p : r.parents) n.parents.push_back({lookup(p.id, p.line, p.column), p.lag});
        if (r.has_initial) {
            InitialCpt init;
            for (const RawParent& p : r.init_parents) init.parents.push_back(lookup(p.id, p.line, p.column));
            init.values = r.init_values;
            n.initial = std::move(init);
        }
        nodes.push_back(std::move(n));
    }
    std::vector<std::uint32_t> q;
    for (const RawTarget& t : targets) q.push_back(lookup(t.id, t.line, t.column));
    return TbnModel(std::move(nodes), std::move(q));
}

// Programmatic construction; parents are written as in the model format
// ("b" or "prev(e)").
class ModelBuilder {
public:
    ModelBuilder& static_node(std::string id, std::vector<std::string> states, std::vector<std::string> parents,
                              std::vector<double> cpt) {
        return add(std::move(id), NodeKind::Static, std::move(states), parents, std::move(cpt), false);
    }

    ModelBuilder& dynamic_node(std::string id, std::vector<std::string> states, std::vector<std::string> parents,
                               std::vector<double> cpt, bool observable = false) {
        return add(std::move(id), NodeKind::Dynamic, std::move(states), parents, std::move(cpt), observable);
    }

    ModelBuilder& initial(const std::string& id, std::vector<std::string> parents, std::vector<double> values) {
        for (RawNode& r : raw_)
            if (r.id == id) {
                r.has_initial = true;
                r.declares_init = true;
                r.init_parents.clear();
                for (auto& p : parents) r.init_parents.push_back({p, 0});
                r.init_values = std::move(values);
                return *this;
            }
        throw ModelError("initial: unknown node '" + id + "'");
    }

    ModelBuilder& query(std::string id) {
        targets_.push_back({std::move(id)});
        return *this;
    }

    TbnModel build() const { return resolve(raw_, targets_); }

    static std::vector<std::string> binary() { return {"s0", "s1"}; }

private:
    ModelBuilder& add(std::string id, NodeKind kind, std::vector<std::string> states,
                      const std::vector<std::string>& parents, std::vector<double> cpt, bool observable) {
        RawNode r;
        r.id = std::move(id);
        r.kind = kind;
        r.states = std::move(states);
        r.cpt = std::move(cpt);
        r.observable = observable;
        for (const std::string& p : parents) {
            if (p.rfind("prev(", 0) == 0 && p.size() > 6 && p.back() == ')')
                r.parents.push_back({p.substr(5, p.size() - 6), 1});
            else
                r.parents.push_back({p, 0});
        }
        raw_.push_back(std::move(r));
        return *this;
    }

    std::vector<RawNode> raw_;
    std::vector<RawTarget> targets_;
};

// ---------------------------------------------------------------------------
// Text format

namespace detail {

struct Token {
    std::string text;
    std::size_t line = 0, column = 0;
};

inline std::vector<std::vector<Token>> tokenize_lines(std::string_view text) {
    std::vector<std::vector<Token>> lines;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        ++line_no;
        std::vector<Token> toks;
        std::size_t i = 0;
        while (i < line.size()) {
            const char c = line[i];
            if (c == '#') break;
            if (c == ' ' || c == '\t' || c == '\r') {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r' && line[j] != '#') ++j;
            toks.push_back({std::string(line.substr(i, j - i)), line_no, i + 1});
            i = j;
        }
        lines.push_back(std::move(toks));
        if (end == text.size()) break;
        pos = end + 1;
    }
    return lines;
}

inline std::optional<double> parse_double(std::string_view s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) return std::nullopt;
    return v;
}

inline bool valid_id(std::string_view s) {
    if (s.empty()) return false;
    auto head = [](char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; };
    if (!head(s[0])) return false;
    for (char c : s)
        if (!(head(c) || (c >= '0' && c <= '9') || c == '.' || c == '-')) return false;
    return true;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

inline TbnModel parse_model(std::string_view text) {
    using detail::Token;
    auto lines = detail::tokenize_lines(text);
    std::vector<RawNode> raw;
    std::vector<RawTarget> targets;
    std::set<std::string> seen_attrs;
    std::vector<double>* numbers = nullptr; // open numeric list that may continue on following lines

    auto fail = [](const Token& t, const std::string& what) -> void { throw ParseError(t.line, t.column, what); };
    auto need_node = [&](const Token& t) -> RawNode& {
        if (raw.empty()) fail(t, "'" + t.text + "' outside of a node block");
        return raw.back();
    };
    auto once = [&](const Token& t) {
        if (!seen_attrs.insert(t.text).second) fail(t, "repeated '" + t.text + "' in node '" + raw.back().id + "'");
    };
    auto read_numbers = [&](const std::vector<Token>& toks, std::size_t from, std::vector<double>& out) {
        for (std::size_t i = from; i < toks.size(); ++i) {
            auto v = detail::parse_double(toks[i].text);
            if (!v) fail(toks[i], "expected a number, got '" + toks[i].text + "'");
            out.push_back(*v);
        }
    };
    auto read_parent = [&](const Token& t, bool allow_lag) {
        RawParent p{t.text, 0, t.line, t.column};
        if (t.text.rfind("prev(", 0) == 0) {
            if (!allow_lag) fail(t, "prev() is not allowed here");
            if (t.text.size() < 7 || t.text.back() != ')') fail(t, "malformed parent reference '" + t.text + "'");
            p.id = t.text.substr(5, t.text.size() - 6);
            p.lag = 1;
            if (p.id.rfind("prev(", 0) == 0) fail(t, "lags deeper than one slice are not supported");
        }
        if (!detail::valid_id(p.id)) fail(t, "invalid node reference '" + t.text + "'");
        return p;
    };
    auto finish_node = [&]() {
        if (raw.empty()) return;
        RawNode& n = raw.back();
        if (n.states.empty()) throw ParseError(n.line, n.column, "node '" + n.id + "' has no states line");
        if (!seen_attrs.count("cpt")) throw ParseError(n.line, n.column, "node '" + n.id + "' has no cpt");
        if (seen_attrs.count("initparents") && !n.has_initial)
            throw ParseError(n.line, n.column, "node '" + n.id + "' has initparents but no initcpt");
    };

    for (const auto& toks : lines) {
        if (toks.empty()) continue;
        const Token& head = toks.front();
        if (numbers && detail::parse_double(head.text)) {
            read_numbers(toks, 0, *numbers);
            continue;
        }
        numbers = nullptr;
        const std::string& kw = head.text;
        if (kw == "node") {
            finish_node();
            seen_attrs.clear();
            if (toks.size() < 3) fail(head, "expected 'node <id> static|dynamic'");
            RawNode n;
            n.id = toks[1].text;
            n.line = toks[1].line;
            n.column = toks[1].column;
            if (!detail::valid_id(n.id)) fail(toks[1], "invalid node id '" + n.id + "'");
            if (toks[2].text == "static")
                n.kind = NodeKind::Static;
            else if (toks[2].text == "dynamic")
                n.kind = NodeKind::Dynamic;
            else
                fail(toks[2], "expected 'static' or 'dynamic', got '" + toks[2].text + "'");
            for (std::size_t i = 3; i < toks.size(); ++i) {
                if (toks[i].text == "observable" && !n.observable)
                    n.observable = true;
                else if (toks[i].text == "transitional-init" && !n.declares_init)
                    n.declares_init = true;
                else
                    fail(toks[i], "unexpected '" + toks[i].text + "' on node line");
            }
            raw.push_back(std::move(n));
        } else if (kw == "states") {
            RawNode& n = need_node(head);
            once(head);
            for (std::size_t i = 1; i < toks.size(); ++i) n.states.push_back(toks[i].text);
            if (n.states.empty()) fail(head, "states line lists no states");
        } else if (kw == "parents") {
            RawNode& n = need_node(head);
            once(head);
            for (std::size_t i = 1; i < toks.size(); ++i) n.parents.push_back(read_parent(toks[i], true));
        } else if (kw == "cpt") {
            RawNode& n = need_node(head);
            once(head);
            read_numbers(toks, 1, n.cpt);
            numbers = &n.cpt;
        } else if (kw == "initparents") {
            RawNode& n = need_node(head);
            once(head);
            for (std::size_t i = 1; i < toks.size(); ++i) n.init_parents.push_back(read_parent(toks[i], false));
        } else if (kw == "initcpt") {
            RawNode& n = need_node(head);
            once(head);
            n.has_initial = true;
            read_numbers(toks, 1, n.init_values);
            numbers = &n.init_values;
        } else if (kw == "query") {
            finish_node();
            if (toks.size() < 2) fail(head, "query needs a node id");
            for (std::size_t i = 1; i < toks.size(); ++i) {
                if (!detail::valid_id(toks[i].text)) fail(toks[i], "invalid node id '" + toks[i].text + "'");
                targets.push_back({toks[i].text, toks[i].line, toks[i].column});
            }
        } else {
            fail(head, "unknown keyword '" + kw + "'");
        }
    }
    finish_node();
    return resolve(raw, targets);
}

// Canonical text form; parse_model(to_text(m)) == m.
inline std::string to_text(const TbnModel& m) {
    std::ostringstream os;
    for (std::uint32_t i = 0; i < m.size(); ++i) {
        const NodeDecl& n = m.node(i);
        os << "node " << n.id << (n.is_static() ? " static" : " dynamic");
        if (n.observable) os << " observable";
        if (n.declares_init) os << " transitional-init";
        os << "\n  states";
        for (const auto& s : n.states) os << ' ' << s;
        os << "\n  parents";
        for (const auto& p : n.parents) {
            const std::string& pid = m.node(p.node).id;
            if (p.lag == 1)
                os << " prev(" << pid << ')';
            else
                os << ' ' << pid;
        }
        auto rows = [&](const char* kw, const std::vector<double>& v) {
            os << "\n  " << kw;
            const std::size_t width = std::max<std::size_t>(1, n.card());
            for (std::size_t k = 0; k < v.size(); ++k) {
                if (k > 0 && k % width == 0) os << "\n     ";
                os << ' ' << detail::format_double(v[k]);
            }
        };
        rows("cpt", n.cpt);
        if (n.initial) {
            if (!n.initial->parents.empty()) {
                os << "\n  initparents";
                for (std::uint32_t p : n.initial->parents) os << ' ' << m.node(p).id;
            }
            rows("initcpt", n.initial->values);
        }
        os << '\n';
    }
    for (std::uint32_t q : m.query_targets()) os << "query " << m.node(q).id << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Classification

struct Classification {
    std::vector<std::uint32_t> statics;         // S
    std::vector<std::uint32_t> dynamics;        // D
    std::vector<std::uint32_t> transitional;    // T
    std::vector<std::uint32_t> nontransitional; // N
    std::vector<std::uint32_t> static_parents;  // R
    std::vector<std::uint32_t> observables;     // O
    std::vector<std::uint32_t> interface_nodes; // I = R u T

    std::vector<bool> is_transitional_;
    std::vector<bool> is_static_parent_;

    bool is_transitional(std::uint32_t i) const { return i < is_transitional_.size() && is_transitional_[i]; }
    bool is_static_parent(std::uint32_t i) const { return i < is_static_parent_.size() && is_static_parent_[i]; }
    bool in_interface(std::uint32_t i) const { return is_transitional(i) || is_static_parent(i); }

    // Interface as one-slice variables: R static, T current.
    std::vector<Var> interface_vars() const {
        std::vector<Var> out;
        for (std::uint32_t i : interface_nodes) out.push_back(is_transitional(i) ? cur_var(i) : static_var(i));
        return out;
    }
};

namespace detail {

inline Classification classify_structure(const TbnModel& m) {
    Classification c;
    const std::size_t n = m.size();
    c.is_transitional_.assign(n, false);
    c.is_static_parent_.assign(n, false);
    for (std::uint32_t i = 0; i < n; ++i) {
        const NodeDecl& d = m.node(i);
        if (d.is_static()) continue;
        for (const ParentRef& p : d.parents) {
            if (p.lag == 1) c.is_transitional_[p.node] = true;
            if (p.lag == 0 && m.node(p.node).is_static()) c.is_static_parent_[p.node] = true;
        }
    }
    for (std::uint32_t i = 0; i < n; ++i) {
        const NodeDecl& d = m.node(i);
        if (d.is_static()) {
            c.statics.push_back(i);
            if (c.is_static_parent_[i]) c.static_parents.push_back(i);
        } else {
            c.dynamics.push_back(i);
            (c.is_transitional_[i] ? c.transitional : c.nontransitional).push_back(i);
            if (d.observable) c.observables.push_back(i);
        }
        if (c.is_transitional_[i] || c.is_static_parent_[i]) c.interface_nodes.push_back(i);
    }
    return c;
}

} // namespace detail

// Static/dynamic split, transitional nodes, static parents and interface.
// Purely structural; throws when a transitional node lacks an initial CPT.
inline Classification classify(const TbnModel& m) {
    Classification c = detail::classify_structure(m);
    for (std::uint32_t t : c.transitional)
        if (!m.node(t).initial)
            throw ModelError("transitional node '" + m.node(t).id + "' has no initial CPT (initcpt)");
    return c;
}

// ---------------------------------------------------------------------------
// Validation

struct Violation {
    std::string rule;
    std::string message;
};

using ValidationReport = std::vector<Violation>;

inline constexpr double kCptTolerance = 1e-9;

namespace detail {

// Reports a cycle among `nodes` given adjacency parents(i); returns one node on a cycle.
template <class ParentsOf>
std::optional<std::uint32_t> find_cycle(std::size_t n, ParentsOf&& parents_of) {
    std::vector<int> state(n, 0); // 0 new, 1 on stack, 2 done
    std::optional<std::uint32_t> hit;
    std::vector<std::pair<std::uint32_t, std::size_t>> stack;
    for (std::uint32_t root = 0; root < n && !hit; ++root) {
        if (state[root]) continue;
        stack.push_back({root, 0});
        state[root] = 1;
        while (!stack.empty() && !hit) {
            auto& [v, k] = stack.back();
            const std::vector<std::uint32_t> ps = parents_of(v);
            if (k < ps.size()) {
                const std::uint32_t p = ps[k++];
                if (state[p] == 1)
                    hit = p;
                else if (state[p] == 0) {
                    state[p] = 1;
                    stack.push_back({p, 0});
                }
            } else {
                state[v] = 2;
                stack.pop_back();
            }
        }
    }
    return hit;
}

inline void check_table(const TbnModel& m, const NodeDecl& n, const std::vector<double>& values,
                        const std::vector<std::uint32_t>& parent_nodes, const char* what, ValidationReport& out) {
    std::size_t expected = n.card();
    for (std::uint32_t p : parent_nodes) expected *= m.card(p);
    if (values.size() != expected) {
        out.push_back({"cpt-shape", std::string(what) + " of '" + n.id + "' has " + std::to_string(values.size()) +
                                        " entries, expected " + std::to_string(expected)});
        return;
    }
    for (double v : values)
        if (!std::isfinite(v) || v < 0.0) {
            out.push_back({"cpt-range", std::string(what) + " of '" + n.id + "' has a negative or non-finite entry"});
            return;
        }
    const std::size_t k = n.card();
    if (k == 0) return;
    for (std::size_t row = 0; row * k < values.size(); ++row) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += values[row * k + j];
        if (std::abs(s - 1.0) > kCptTolerance) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.12g", s);
            out.push_back({"cpt-normalization", std::string(what) + " of '" + n.id + "': distribution for parent configuration " +
                                                    std::to_string(row) + " sums to " + buf});
        }
    }
}

} // namespace detail

// Every violated structural or numeric rule; empty means valid.
inline ValidationReport validate(const TbnModel& m) {
    ValidationReport out;
    const std::size_t n = m.size();
    const Classification c = detail::classify_structure(m);

    for (std::uint32_t i = 0; i < n; ++i) {
        const NodeDecl& d = m.node(i);
        if (d.card() < 2)
            out.push_back({"cardinality", "node '" + d.id + "' has " + std::to_string(d.card()) +
                                              " state(s); at least 2 are required"});
        {
            std::set<std::string> labels(d.states.begin(), d.states.end());
            if (labels.size() != d.states.size())
                out.push_back({"state-labels", "node '" + d.id + "' repeats a state label"});
        }
        if (d.observable && d.is_static())
            out.push_back({"observable-kind", "static node '" + d.id + "' is marked observable; only dynamic nodes can be observed"});

        std::vector<ParentRef> seen;
        for (const ParentRef& p : d.parents) {
            const NodeDecl& pd = m.node(p.node);
            if (std::find(seen.begin(), seen.end(), p) != seen.end())
                out.push_back({"duplicate-parent", "node '" + d.id + "' lists parent '" + pd.id + "' twice"});
            seen.push_back(p);
            if (d.is_static() && !pd.is_static())
                out.push_back({"static-parent", "dynamic node '" + pd.id + "' is a parent of static node '" + d.id +
                                                    "' (edge " + pd.id + " -> " + d.id + "); static nodes may only have static parents"});
            if (d.is_static() && p.lag != 0)
                out.push_back({"static-parent", "static node '" + d.id + "' has a previous-slice parent prev(" + pd.id + ")"});
            if (p.lag == 1 && pd.is_static())
                out.push_back({"lag-target", "prev(" + pd.id + ") in '" + d.id + "' refers to a static node; only dynamic nodes have a previous slice"});
            if (p.lag != 0 && p.lag != 1)
                out.push_back({"lag-range", "node '" + d.id + "' has a parent with lag " + std::to_string(p.lag)});
        }
        std::vector<std::uint32_t> pnodes;
        for (const ParentRef& p : d.parents) pnodes.push_back(p.node);
        detail::check_table(m, d, d.cpt, pnodes, "cpt", out);

        const bool transitional = c.is_transitional(i);
        if (transitional && !d.initial)
            out.push_back({"initial-missing", "transitional node '" + d.id + "' has no initial CPT"});
        if (!transitional && d.initial)
            out.push_back({"initial-extra", "node '" + d.id + "' is not transitional but declares an initial CPT"});
        if (d.declares_init && !d.initial)
            out.push_back({"initial-flag", "node '" + d.id + "' is marked transitional-init but has no initcpt"});
        if (d.initial) {
            std::set<std::uint32_t> ip;
            for (std::uint32_t p : d.initial->parents) {
                const NodeDecl& pd = m.node(p);
                if (!ip.insert(p).second)
                    out.push_back({"duplicate-parent", "initial CPT of '" + d.id + "' lists '" + pd.id + "' twice"});
                if (p == i)
                    out.push_back({"initial-cycle", "initial CPT of '" + d.id + "' lists the node itself as a parent"});
                else if (!c.in_interface(p))
                    out.push_back({"initial-parent", "initial CPT of '" + d.id + "' has parent '" + pd.id +
                                                         "', which is neither a static parent nor a transitional node"});
            }
            detail::check_table(m, d, d.initial->values, d.initial->parents, "initcpt", out);
        }
    }

    auto lag0 = [&](std::uint32_t v) {
        std::vector<std::uint32_t> ps;
        for (const ParentRef& p : m.node(v).parents)
            if (p.lag == 0) ps.push_back(p.node);
        return ps;
    };
    if (auto hit = detail::find_cycle(n, lag0))
        out.push_back({"cycle", "same-slice arcs form a cycle through '" + m.node(*hit).id + "'"});
    auto init_graph = [&](std::uint32_t v) {
        std::vector<std::uint32_t> ps;
        if (m.node(v).initial)
            for (std::uint32_t p : m.node(v).initial->parents)
                if (p != v) ps.push_back(p);
        return ps;
    };
    if (auto hit = detail::find_cycle(n, init_graph))
        out.push_back({"initial-cycle", "initial CPT parents form a cycle through '" + m.node(*hit).id + "'"});

    if (m.query_targets().empty())
        out.push_back({"query", "no query target declared"});
    {
        std::set<std::uint32_t> q;
        for (std::uint32_t t : m.query_targets())
            if (!q.insert(t).second) out.push_back({"query", "query target '" + m.node(t).id + "' declared twice"});
    }
    return out;
}

inline std::string format_report(const ValidationReport& r) {
    std::string s;
    for (const Violation& v : r) s += "[" + v.rule + "] " + v.message + "\n";
    return s;
}

} // namespace tbn

#endif // TBN_MODEL_HPP
