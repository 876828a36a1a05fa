// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "alloc_counter.hpp"
#include "fixtures.hpp"

using namespace tbn;
using namespace tbn::testing;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

double mass(std::span<const double> p) {
    double z = 0;
    for (double v : p) z += v;
    return z;
}

// Worst deviation from unit mass over everything the criteria emit.
double g_worst_mass = 0.0;
bool g_nan_seen = false;

void note_distribution(std::span<const double> p) {
    for (double v : p) g_nan_seen = g_nan_seen || !std::isfinite(v);
    g_worst_mass = std::max(g_worst_mass, std::abs(mass(p) - 1.0));
}

Outcome oracle_equivalence() {
    constexpr int kModels = 200;
    constexpr int kMaxT = 5;
    constexpr std::size_t kCap = std::size_t{1} << 24;
    std::mt19937_64 rng(20240601);
    double worst = 0.0;
    std::size_t compared = 0, models_full = 0, steps_skipped = 0, by_joint = 0, by_elimination = 0;
    std::map<int, int> reached; // deepest step compared -> models
    for (int i = 0; i < kModels; ++i) {
        const TbnModel m = random_model(rng);
        const int horizon = std::uniform_int_distribution<int>(0, kMaxT)(rng);
        RuntimeInstance rt(std::make_shared<const EvaluationPlan>(compile(m)));
        std::vector<SliceEvidence> ev;
        int deepest = -1;
        for (int t = 0; t <= horizon; ++t) {
            ev.push_back(random_evidence(rng, m));
            post_all(rt, m, ev.back());
            std::vector<std::vector<double>> want;
            try {
                want = query_brute_all(m, m.query_targets(), ev, t, kCap);
                ++by_joint;
            } catch (const CapacityError&) {
                try {
                    want = query_eliminate_all(m, m.query_targets(), ev, t, kCap);
                    ++by_elimination;
                } catch (const CapacityError&) {
                    steps_skipped += static_cast<std::size_t>(horizon - t + 1);
                    break;
                }
            }
            for (std::size_t q = 0; q < want.size(); ++q) {
                const auto got = rt.query(m.node(m.query_targets()[q]).id);
                note_distribution(got);
                worst = std::max(worst, max_abs_diff(got, want[q]));
                ++compared;
            }
            deepest = t;
            rt.advance();
        }
        if (deepest == horizon) ++models_full;
        ++reached[deepest];
    }
    std::string hist;
    for (const auto& [t, n] : reached) hist += (hist.empty() ? "" : " ") + ("t" + std::to_string(t) + ":" + std::to_string(n));
    return {worst <= 1e-9 && compared > 0,
            std::to_string(kModels) + " models, " + std::to_string(compared) + " posteriors, max |diff| " +
                fmt_double(worst) + "; reference by full joint at " + std::to_string(by_joint) +
                " steps, by unrolled elimination at " + std::to_string(by_elimination) + "; " +
                std::to_string(models_full) + " models compared to their full horizon, " +
                std::to_string(steps_skipped) + " steps beyond the oracle cap; deepest step per model {" + hist + "}"};
}

Outcome shared_parent_factorization() {
    const TbnModel m = load("figure4.tbn");
    const Classification c = classify(m);
    const Stabilization s = stabilize(m, c);
    const std::string got = format_factorization(m, s.stable);
    const EvaluationPlan p = compile(m);
    const bool ok = got == "{(b,a),(c,a),(d,a)}" && s.iterations == 1 && p.stats.psi_factors == 3 && !p.joined;
    return {ok, "stable " + got + " after " + std::to_string(s.iterations) + " iteration(s), plan stores " +
                    std::to_string(p.stats.psi_factors) + " past factors"};
}

Outcome ring_stabilization() {
    const TbnModel m = load("figure5.tbn");
    const Stabilization s = stabilize(m, classify(m));
    const std::vector<std::string> want = {"{(b,a),(c),(d)}", "{(b,a),(c,a),(d)}", "{(b,a),(c,a),(d,a)}"};
    std::string seq;
    bool ok = s.sequence.size() == want.size() + 1 && s.iterations == 3;
    for (std::size_t k = 1; k < s.sequence.size(); ++k) {
        const std::string f = format_factorization(m, s.sequence[k]);
        seq += (k > 1 ? " -> " : "") + f;
        ok = ok && k - 1 < want.size() && f == want[k - 1];
    }
    return {ok, seq + ", fixpoint at iteration " + std::to_string(s.iterations)};
}

Outcome four_parent_merges() {
    const TbnModel m = load("fourparents.tbn");
    const Classification c = classify(m);
    std::vector<ExpressionRef> exprs;
    for (auto s : c.statics) exprs.push_back(cpt_expression(m, s));
    const FactoringTree t = build_factoring_tree(m, exprs, {static_var(m.index_of("h"))});
    auto merge = [&](std::size_t k) {
        const TreeNode& n = t.nodes.at(exprs.size() + k);
        std::vector<std::string> names;
        for (int side : {n.left, n.right}) {
            const TreeNode& l = t.at(side);
            names.push_back(l.is_leaf() ? describe(m, t.leaves[static_cast<std::size_t>(l.leaf)]) : "(merge)");
        }
        std::sort(names.begin(), names.end());
        return names[0] + " x " + names[1];
    };
    const std::string a = merge(0), b = merge(1);
    return {a == "phi[a](a) x phi[b](b)" && b == "phi[c](c) x phi[d](d)", "first merges: " + a + ", then " + b};
}

Outcome fixed_resources() {
    constexpr int kCycles = 10000;
    const TbnModel m = chains(10);
    RuntimeInstance rt(std::make_shared<const EvaluationPlan>(compile(m)));
    std::mt19937_64 rng(99);
    // evidence vectors are prepared up front so the loop itself only touches the instance
    std::vector<std::vector<double>> liks;
    for (int i = 0; i < 64; ++i) liks.push_back({0.05 + std::uniform_real_distribution<double>(0, 1)(rng), 0.5});
    std::vector<std::string> observables;
    for (int i = 1; i <= 10; ++i) observables.push_back("o" + std::to_string(i));
    std::vector<double> step_ns(kCycles);
    const std::size_t before = allocation_count();
    for (int t = 0; t < kCycles; ++t) {
        const auto start = std::chrono::steady_clock::now();
        for (std::size_t o = 0; o < observables.size(); ++o)
            rt.post_observation(observables[o], liks[(static_cast<std::size_t>(t) + o) % liks.size()]);
        const auto pa = rt.query("a");
        const auto px = rt.query("x1");
        g_worst_mass = std::max({g_worst_mass, std::abs(mass(pa) - 1.0), std::abs(mass(px) - 1.0)});
        rt.advance();
        step_ns[static_cast<std::size_t>(t)] =
            std::chrono::duration<double, std::nano>(std::chrono::steady_clock::now() - start).count();
    }
    const std::size_t allocations = allocation_count() - before;
    const std::size_t decile = kCycles / 10;
    double first = 0, last = 0;
    for (std::size_t i = 0; i < decile; ++i) {
        first += step_ns[i];
        last += step_ns[kCycles - decile + i];
    }
    first /= decile;
    last /= decile;
    const double ratio = last / first;
    return {allocations == 0 && ratio <= 1.5,
            std::to_string(kCycles) + " cycles on 10 chains, " + std::to_string(allocations) +
                " allocations after construction, mean step " + fmt_double(first / 1000) + " us (first decile) vs " +
                fmt_double(last / 1000) + " us (last decile), ratio " + fmt_double(ratio)};
}

Outcome factorization_payoff() {
    bool ok = true;
    std::string bad;
    std::size_t largest_monolithic = 0;
    for (std::size_t k = 1; k <= 20; ++k) {
        const TbnModel m = chains(k);
        std::size_t interface_entries = 1;
        for (auto i : classify(m).interface_nodes) interface_entries *= m.node(i).card();
        const EvaluationPlan f = compile(m);
        bool row_ok = f.stats.psi_entries == 4 * k && interface_entries == (std::size_t{1} << (k + 1));
        CompileOptions mono;
        mono.monolithic = true;
        try {
            row_ok = row_ok && compile(m, mono).stats.psi_entries == interface_entries;
            largest_monolithic = k;
        } catch (const CapacityError&) {
        }
        if (!row_ok) {
            ok = false;
            bad += " k=" + std::to_string(k);
        }
    }
    bool factored_ok = false, mono_refused = false;
    try {
        factored_ok = compile(chains(20)).stats.psi_entries == 80;
    } catch (const CapacityError&) {
    }
    CompileOptions mono;
    mono.monolithic = true;
    try {
        compile(chains(20), mono);
    } catch (const CapacityError&) {
        mono_refused = true;
    }
    ok = ok && factored_ok && mono_refused;
    return {ok, "past storage 4k entries factored vs 2^(k+1) monolithic for k=1..20" +
                    (bad.empty() ? std::string() : " (mismatch at" + bad + ")") +
                    "; monolithic plans fit the default cap up to k=" + std::to_string(largest_monolithic) +
                    "; at k=20 factored " + (factored_ok ? "compiles (80 entries)" : "FAILS") + ", monolithic " +
                    (mono_refused ? "is refused" : "is NOT refused")};
}

Outcome normalization_and_impossible_evidence() {
    ModelBuilder b;
    b.dynamic_node("x", ModelBuilder::binary(), {"prev(x)"}, {1.0, 0.0, 1.0, 0.0});
    b.initial("x", {}, {1.0, 0.0});
    b.dynamic_node("y", ModelBuilder::binary(), {"x"}, {1.0, 0.0, 0.0, 1.0}, true).query("x");
    const TbnModel m = b.build();
    RuntimeInstance rt(std::make_shared<const EvaluationPlan>(compile(m)));
    const std::vector<double> contradiction = {0.0, 1.0};
    rt.post_observation("y", contradiction);
    bool query_raised = false, advance_raised = false;
    try {
        const auto p = rt.query("x");
        note_distribution(p);
    } catch (const ImpossibleEvidence&) {
        query_raised = true;
    }
    try {
        rt.advance();
    } catch (const ImpossibleEvidence&) {
        advance_raised = true;
    }
    const bool ok = g_worst_mass <= 1e-9 && !g_nan_seen && query_raised && advance_raised;
    return {ok, "max |sum - 1| over all emitted distributions " + fmt_double(g_worst_mass) +
                    (g_nan_seen ? ", NaN emitted" : ", no NaN") + "; contradictory evidence raises on query: " +
                    (query_raised ? "yes" : "no") + ", on advance: " + (advance_raised ? "yes" : "no")};
}

Outcome deterministic_plans() {
    std::size_t files = 0;
    std::vector<std::string> differing;
    std::vector<std::filesystem::path> paths;
    for (const auto& e : std::filesystem::directory_iterator(models_dir()))
        if (e.path().extension() == ".tbn") paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
        ++files;
        const std::string first = serialize_plan(compile(parse_model(read_text(p.string()))));
        for (int rep = 0; rep < 3; ++rep)
            if (serialize_plan(compile(parse_model(read_text(p.string())))) != first) {
                differing.push_back(p.filename().string());
                break;
            }
    }
    std::string d;
    for (const auto& x : differing) d += " " + x;
    return {files > 0 && differing.empty(),
            std::to_string(files) + " corpus models, 4 compilations each, " +
                (differing.empty() ? std::string("all byte-identical") : "differing:" + d)};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"oracle equivalence on random models", oracle_equivalence},
        {"shared-parent factorization", shared_parent_factorization},
        {"ring stabilization sequence", ring_stabilization},
        {"four-parent greedy merges", four_parent_merges},
        {"fixed-resource streaming", fixed_resources},
        {"factorization payoff", factorization_payoff},
        {"normalization and impossible evidence", normalization_and_impossible_evidence},
        {"deterministic plan files", deterministic_plans},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        const auto start = std::chrono::steady_clock::now();
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failed += !o.pass;
        std::printf("%s [%zu] %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
