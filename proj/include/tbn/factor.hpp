#ifndef TBN_FACTOR_HPP
#define TBN_FACTOR_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tbn/error.hpp"

namespace tbn {

// Slice tag of a variable. Dynamic variables carry a time index; the compiled
// one-slice net only ever uses kCurrent and kPrevious, the unrolled reference
// net uses any t >= -1.
inline constexpr std::int32_t kStaticSlice = std::numeric_limits<std::int32_t>::min();
inline constexpr std::int32_t kCurrent = 0;
inline constexpr std::int32_t kPrevious = -1;

// Total mass at or below this is treated as zero.
inline constexpr double kUnderflowGuard = 1e-300;

struct Var {
    std::uint32_t node = 0;
    std::int32_t slice = kStaticSlice;

    bool is_static() const { return slice == kStaticSlice; }

    friend auto operator<=>(const Var&, const Var&) = default;
};

inline Var static_var(std::uint32_t node) { return {node, kStaticSlice}; }
inline Var cur_var(std::uint32_t node) { return {node, kCurrent}; }
inline Var prev_var(std::uint32_t node) { return {node, kPrevious}; }

// Same node, moved by `shift` slices. Static variables are left alone.
inline Var shifted(Var v, std::int32_t shift) {
    if (!v.is_static()) v.slice += shift;
    return v;
}

namespace detail {

inline constexpr std::size_t kMaxRank = 64;

// Row-major strides, last variable fastest.
inline std::vector<std::size_t> row_major_strides(std::span<const std::size_t> cards) {
    std::vector<std::size_t> strides(cards.size());
    std::size_t s = 1;
    for (std::size_t i = cards.size(); i-- > 0;) {
        strides[i] = s;
        s *= cards[i];
    }
    return strides;
}

// Saturating product; returns SIZE_MAX when the product overflows.
inline std::size_t checked_product(std::span<const std::size_t> cards) {
    std::size_t n = 1;
    for (std::size_t c : cards) {
        if (c != 0 && n > std::numeric_limits<std::size_t>::max() / c) return std::numeric_limits<std::size_t>::max();
        n *= c;
    }
    return n;
}

// Odometer over a mixed-radix index space; body receives one running offset
// per operand. The counter lives on the stack so the loop never allocates.
template <std::size_t N, class Body>
void strided_loop(std::span<const std::size_t> dims,
                  const std::array<const std::size_t*, N>& strides,
                  Body&& body) {
    const std::size_t rank = dims.size();
    std::array<std::size_t, N> off{};
    if (rank == 0) {
        body(off);
        return;
    }
    for (std::size_t d : dims)
        if (d == 0) return;
    std::array<std::size_t, kMaxRank> counter{};
    for (;;) {
        body(off);
        std::size_t d = rank;
        while (d-- > 0) {
            ++counter[d];
            for (std::size_t k = 0; k < N; ++k) off[k] += strides[k][d];
            if (counter[d] < dims[d]) break;
            for (std::size_t k = 0; k < N; ++k) off[k] -= strides[k][d] * dims[d];
            counter[d] = 0;
            if (d == 0) return;
        }
    }
}

} // namespace detail

// Dense nonnegative table over an ordered variable list, row-major with the
// last variable fastest. An empty variable list is a scalar.
class Factor {
public:
    Factor() : values_{1.0} {}

    Factor(std::vector<Var> vars, std::vector<std::size_t> cards, std::vector<double> values)
        : vars_(std::move(vars)), cards_(std::move(cards)), values_(std::move(values)) {
        if (vars_.size() != cards_.size()) throw ShapeError("factor: variable and cardinality lists differ in length");
        if (vars_.size() > detail::kMaxRank) throw ShapeError("factor: too many variables");
        for (std::size_t i = 0; i < vars_.size(); ++i) {
            if (cards_[i] == 0) throw ShapeError("factor: zero cardinality");
            for (std::size_t j = 0; j < i; ++j)
                if (vars_[j] == vars_[i]) throw ShapeError("factor: repeated variable");
        }
        if (values_.size() != detail::checked_product(cards_))
            throw ShapeError("factor: value count " + std::to_string(values_.size()) +
                             " does not match cardinality product");
        for (double v : values_)
            if (!std::isfinite(v) || v < 0.0) throw ShapeError("factor: values must be finite and nonnegative");
    }

    static Factor scalar(double v) { return Factor({}, {}, {v}); }

    static Factor ones(std::vector<Var> vars, std::vector<std::size_t> cards) {
        const std::size_t n = detail::checked_product(cards);
        return Factor(std::move(vars), std::move(cards), std::vector<double>(n, 1.0));
    }

    const std::vector<Var>& vars() const { return vars_; }
    const std::vector<std::size_t>& cards() const { return cards_; }
    const std::vector<double>& values() const { return values_; }
    std::size_t size() const { return values_.size(); }
    std::size_t rank() const { return vars_.size(); }

    std::optional<std::size_t> axis(Var v) const {
        auto it = std::find(vars_.begin(), vars_.end(), v);
        if (it == vars_.end()) return std::nullopt;
        return static_cast<std::size_t>(it - vars_.begin());
    }

    bool contains(Var v) const { return axis(v).has_value(); }

    std::size_t card_of(Var v) const {
        auto a = axis(v);
        if (!a) throw ShapeError("factor: variable not in scope");
        return cards_[*a];
    }

    // Value at a full assignment given in this factor's variable order.
    double at(std::span<const std::size_t> assignment) const {
        if (assignment.size() != vars_.size()) throw ShapeError("factor: assignment rank mismatch");
        std::size_t idx = 0;
        for (std::size_t i = 0; i < vars_.size(); ++i) {
            if (assignment[i] >= cards_[i]) throw ShapeError("factor: assignment out of range");
            idx = idx * cards_[i] + assignment[i];
        }
        return values_[idx];
    }

    double total() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }

    std::vector<std::size_t> strides() const { return detail::row_major_strides(cards_); }

private:
    std::vector<Var> vars_;
    std::vector<std::size_t> cards_;
    std::vector<double> values_;
};

namespace detail {

// Strides of `f` laid against loop variables `loop`; zero where `f` lacks the variable.
inline std::vector<std::size_t> strides_against(const Factor& f, std::span<const Var> loop) {
    const auto own = f.strides();
    std::vector<std::size_t> out(loop.size(), 0);
    for (std::size_t d = 0; d < loop.size(); ++d)
        if (auto a = f.axis(loop[d])) out[d] = own[*a];
    return out;
}

} // namespace detail

// Pointwise product under index alignment. Result order: f's variables, then
// g's variables that f lacks.
inline Factor multiply(const Factor& f, const Factor& g) {
    std::vector<Var> vars = f.vars();
    std::vector<std::size_t> cards = f.cards();
    for (std::size_t i = 0; i < g.rank(); ++i) {
        const Var v = g.vars()[i];
        if (auto a = f.axis(v)) {
            if (f.cards()[*a] != g.cards()[i])
                throw ShapeError("multiply: cardinality mismatch on shared variable (node " +
                                 std::to_string(v.node) + ")");
        } else {
            vars.push_back(v);
            cards.push_back(g.cards()[i]);
        }
    }
    std::vector<double> values(detail::checked_product(cards));
    const auto out_strides = detail::row_major_strides(cards);
    const auto fs = detail::strides_against(f, vars);
    const auto gs = detail::strides_against(g, vars);
    const double* fv = f.values().data();
    const double* gv = g.values().data();
    detail::strided_loop<3>(cards, {out_strides.data(), fs.data(), gs.data()},
                            [&](const std::array<std::size_t, 3>& o) { values[o[0]] = fv[o[1]] * gv[o[2]]; });
    return Factor(std::move(vars), std::move(cards), std::move(values));
}

// Re-express `f` over `vars`: variables of f missing from `vars` are summed
// out, variables in `vars` missing from f are broadcast, order follows `vars`.
inline Factor align(const Factor& f, std::vector<Var> vars, std::vector<std::size_t> cards) {
    if (vars.size() != cards.size()) throw ShapeError("align: variable and cardinality lists differ in length");
    for (std::size_t i = 0; i < vars.size(); ++i)
        if (auto a = f.axis(vars[i]); a && f.cards()[*a] != cards[i])
            throw ShapeError("align: cardinality mismatch");
    // loop over f's variables followed by the broadcast ones
    std::vector<Var> loop = f.vars();
    std::vector<std::size_t> dims = f.cards();
    for (std::size_t i = 0; i < vars.size(); ++i)
        if (!f.contains(vars[i])) {
            loop.push_back(vars[i]);
            dims.push_back(cards[i]);
        }
    Factor shape = Factor::ones(vars, cards);
    std::vector<double> values(shape.size(), 0.0);
    const auto ds = detail::strides_against(shape, loop);
    const auto fs = detail::strides_against(f, loop);
    const double* fv = f.values().data();
    detail::strided_loop<2>(dims, {ds.data(), fs.data()},
                            [&](const std::array<std::size_t, 2>& o) { values[o[0]] += fv[o[1]]; });
    return Factor(std::move(vars), std::move(cards), std::move(values));
}

// Sum over every configuration of `out`; remaining variables keep their order.
inline Factor marginalize(const Factor& f, std::span<const Var> out) {
    for (Var v : out)
        if (!f.contains(v))
            throw ShapeError("marginalize: variable (node " + std::to_string(v.node) + ") not in factor scope");
    if (out.empty()) return f;
    std::vector<Var> vars;
    std::vector<std::size_t> cards;
    for (std::size_t i = 0; i < f.rank(); ++i)
        if (std::find(out.begin(), out.end(), f.vars()[i]) == out.end()) {
            vars.push_back(f.vars()[i]);
            cards.push_back(f.cards()[i]);
        }
    return align(f, std::move(vars), std::move(cards));
}

inline Factor marginalize(const Factor& f, std::initializer_list<Var> out) {
    return marginalize(f, std::span<const Var>(out.begin(), out.size()));
}

// Keep only `keep` (in f's order), summing out everything else.
inline Factor marginalize_onto(const Factor& f, std::span<const Var> keep) {
    std::vector<Var> out;
    for (Var v : f.vars())
        if (std::find(keep.begin(), keep.end(), v) == keep.end()) out.push_back(v);
    return marginalize(f, out);
}

// Scale to unit total mass.
inline Factor normalize(const Factor& f, std::string_view label = {}) {
    const double z = f.total();
    if (!(z > kUnderflowGuard)) {
        std::string msg = "impossible or vanishing evidence";
        if (!label.empty()) msg += " in ";
        msg += label;
        msg += " (total mass " + std::to_string(z) + ")";
        throw ImpossibleEvidence(msg);
    }
    std::vector<double> values = f.values();
    for (double& v : values) v /= z;
    return Factor(f.vars(), f.cards(), std::move(values));
}

// Throws unless `lik` is a usable likelihood vector for a variable of `card` states.
// Does not allocate on success.
inline void check_likelihood(std::span<const double> lik, std::size_t card) {
    if (lik.size() != card)
        throw ShapeError("likelihood has " + std::to_string(lik.size()) + " entries, expected " + std::to_string(card));
    bool any_positive = false;
    for (double v : lik) {
        if (!std::isfinite(v) || v < 0.0) throw ShapeError("likelihood entries must be finite and nonnegative");
        any_positive = any_positive || v > 0.0;
    }
    if (!any_positive) throw ShapeError("likelihood vector is all zero");
}

// Likelihood factor for one observable. An absent observation is uniform.
inline Factor evidence_factor(Var o, std::size_t card, std::optional<std::span<const double>> lik = std::nullopt) {
    if (!lik) return Factor::ones({o}, {card});
    check_likelihood(*lik, card);
    return Factor({o}, {card}, std::vector<double>(lik->begin(), lik->end()));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace tbn

#endif // TBN_FACTOR_HPP
