#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <map>
#include <random>

#include "fixtures.hpp"

using namespace tbn;
using namespace tbn::testing;

namespace {

// Assignment-by-assignment enumeration straight from the model's tables.
std::vector<double> enumerate(const TbnModel& m, std::uint32_t target, const std::vector<SliceEvidence>& ev, int t) {
    const Classification c = classify(m);
    struct Slot {
        std::uint32_t node;
        int slice; // INT32_MIN static, -1 initial
    };
    std::vector<Slot> slots;
    for (auto s : c.statics) slots.push_back({s, kStaticSlice});
    for (auto tr : c.transitional) slots.push_back({tr, -1});
    for (int k = 0; k <= t; ++k)
        for (auto d : c.dynamics) slots.push_back({d, k});
    auto slot_of = [&](std::uint32_t node, int slice) {
        for (std::size_t i = 0; i < slots.size(); ++i)
            if (slots[i].node == node && slots[i].slice == slice) return i;
        throw std::logic_error("missing slot");
    };
    const bool is_static = m.node(target).is_static();
    std::vector<double> out(m.card(target), 0.0);
    std::vector<std::size_t> x(slots.size(), 0);
    for (;;) {
        double p = 1.0;
        for (std::size_t i = 0; i < slots.size() && p > 0; ++i) {
            const NodeDecl& n = m.node(slots[i].node);
            const int sl = slots[i].slice;
            std::size_t row = 0;
            if (sl == -1) {
                for (auto q : n.initial->parents) {
                    const std::size_t j = m.node(q).is_static() ? slot_of(q, kStaticSlice) : slot_of(q, -1);
                    row = row * m.card(q) + x[j];
                }
                p *= n.initial->values[row * n.card() + x[i]];
                continue;
            }
            for (const ParentRef& q : n.parents) {
                const std::size_t j = m.node(q.node).is_static() ? slot_of(q.node, kStaticSlice)
                                                                 : slot_of(q.node, sl - q.lag);
                row = row * m.card(q.node) + x[j];
            }
            p *= n.cpt[row * n.card() + x[i]];
            if (sl >= 0 && static_cast<std::size_t>(sl) < ev.size()) {
                auto it = ev[static_cast<std::size_t>(sl)].find(slots[i].node);
                if (it != ev[static_cast<std::size_t>(sl)].end()) p *= it->second[x[i]];
            }
        }
        out[x[slot_of(target, is_static ? kStaticSlice : t)]] += p;
        std::size_t d = 0;
        for (; d < slots.size(); ++d) {
            if (++x[d] < m.card(slots[d].node)) break;
            x[d] = 0;
        }
        if (d == slots.size()) break;
    }
    double z = 0;
    for (double v : out) z += v;
    for (double& v : out) v /= z;
    return out;
}

} // namespace

TEST(Oracle, UnrollCountsAndNames) {
    const TbnModel m = load("figure2.tbn");
    const UnrolledNet net = unroll(m, 2);
    EXPECT_EQ(net.nodes.size(), 3u + 1u + 3u * 3u);
    ASSERT_NE(net.find(Var{m.index_of("e"), -1}), nullptr);
    EXPECT_EQ(net.find(Var{m.index_of("e"), 2})->name, "e@2");
    EXPECT_EQ(net.find(Var{m.index_of("e"), 2})->parents,
              (std::vector<Var>{static_var(m.index_of("b")), Var{m.index_of("e"), 1}}));
    EXPECT_EQ(net.find(static_var(m.index_of("a")))->name, "a");
    EXPECT_THROW(unroll(m, -1), ModelError);
}

TEST(Oracle, StaticPriorWithoutEvidence) {
    const TbnModel m = load("fourparents.tbn");
    const auto p = query_brute(m, m.index_of("a"), {}, 0);
    EXPECT_NEAR(p[0], 0.5, 1e-15);
    // P(h=h0) = sum over parents of prior * cpt
    const auto h = query_brute(m, m.index_of("h"), {}, 0);
    double want = 0;
    const double pa[] = {0.5, 0.5}, pb[] = {0.2, 0.8}, pc[] = {0.7, 0.3}, pd[] = {0.35, 0.65};
    const NodeDecl& hn = m.node(m.index_of("h"));
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c)
                for (int d = 0; d < 2; ++d)
                    want += pa[a] * pb[b] * pc[c] * pd[d] * hn.cpt[static_cast<std::size_t>(((a * 2 + b) * 2 + c) * 2 + d) * 2];
    EXPECT_NEAR(h[0], want, 1e-14);
}

TEST(Oracle, MatchesForwardAlgorithmOnHmm) {
    // two-state chain, noisy observation, hard and soft evidence
    ModelBuilder b;
    b.dynamic_node("x", ModelBuilder::binary(), {"prev(x)"}, {0.7, 0.3, 0.2, 0.8});
    b.initial("x", {}, {0.6, 0.4});
    b.dynamic_node("y", ModelBuilder::binary(), {"x"}, {0.9, 0.1, 0.25, 0.75}, true).query("x");
    const TbnModel m = b.build();
    const std::vector<std::vector<double>> lik = {{1, 0}, {0.3, 0.9}, {0, 1}, {0.5, 0.5}, {0.8, 0.1}};
    std::vector<SliceEvidence> ev;
    std::array<double, 2> alpha{0.6, 0.4}; // belief over x at -1
    for (std::size_t t = 0; t < lik.size(); ++t) {
        SliceEvidence s;
        s[m.index_of("y")] = lik[t];
        ev.push_back(s);
        std::array<double, 2> next{};
        const double T[2][2] = {{0.7, 0.3}, {0.2, 0.8}};
        const double E[2][2] = {{0.9, 0.1}, {0.25, 0.75}};
        for (int j = 0; j < 2; ++j) {
            for (int i = 0; i < 2; ++i) next[j] += alpha[i] * T[i][j];
            next[j] *= E[j][0] * lik[t][0] + E[j][1] * lik[t][1];
        }
        const double z = next[0] + next[1];
        alpha = {next[0] / z, next[1] / z};
        const auto p = query_brute(m, m.index_of("x"), ev, static_cast<int>(t));
        EXPECT_NEAR(p[0], alpha[0], 1e-13) << "t=" << t;
    }
}

TEST(Oracle, MatchesEnumerationOnCorpus) {
    for (const char* f : {"figure2.tbn", "figure4.tbn", "figure5.tbn"}) {
        const TbnModel m = load(f);
        std::mt19937_64 rng(3);
        std::vector<SliceEvidence> ev;
        for (int t = 0; t <= 1; ++t) {
            ev.push_back(random_evidence(rng, m));
            for (auto q : m.query_targets()) {
                const auto got = query_brute(m, q, ev, t);
                const auto want = enumerate(m, q, ev, t);
                EXPECT_LE(max_abs_diff(got, want), 1e-12) << f << " " << m.node(q).id << " t=" << t;
            }
        }
    }
}

TEST(Oracle, MatchesEnumerationOnRandomModels) {
    std::mt19937_64 rng(5);
    int checked = 0;
    for (int i = 0; i < 40; ++i) {
        RandomModelLimits lim;
        lim.max_dynamic = 4;
        const TbnModel m = random_model(rng, lim);
        std::vector<SliceEvidence> ev{random_evidence(rng, m), random_evidence(rng, m)};
        for (auto q : m.query_targets()) {
            std::vector<double> got;
            try {
                got = query_brute(m, q, ev, 1, std::size_t{1} << 16);
            } catch (const CapacityError&) {
                continue;
            }
            EXPECT_LE(max_abs_diff(got, enumerate(m, q, ev, 1)), 1e-12);
            ++checked;
        }
    }
    EXPECT_GT(checked, 50);
}

TEST(Oracle, EliminationAgreesWithJoint) {
    std::mt19937_64 rng(8);
    int checked = 0;
    for (int i = 0; i < 60; ++i) {
        const TbnModel m = random_model(rng);
        std::vector<SliceEvidence> ev;
        for (int t = 0; t < 3; ++t) {
            ev.push_back(random_evidence(rng, m));
            std::vector<std::vector<double>> joint;
            try {
                joint = query_brute_all(m, m.query_targets(), ev, t, std::size_t{1} << 18);
            } catch (const CapacityError&) {
                break;
            }
            const auto elim = query_eliminate_all(m, m.query_targets(), ev, t);
            for (std::size_t q = 0; q < joint.size(); ++q) EXPECT_LE(max_abs_diff(joint[q], elim[q]), 1e-12);
            ++checked;
        }
    }
    EXPECT_GT(checked, 60);
}

TEST(Oracle, EliminationReachesLongHorizons) {
    const TbnModel m = chains(3);
    std::vector<SliceEvidence> ev(12);
    for (auto& e : ev) e[m.index_of("o2")] = {0.3, 0.9};
    const auto got = query_eliminate_all(m, {m.index_of("a")}, ev, 11).front();
    EXPECT_NEAR(got[0] + got[1], 1.0, 1e-12);
    EXPECT_THROW(query_brute(m, m.index_of("a"), ev, 11), CapacityError);
}

TEST(Oracle, RefusesOversizedJoint) {
    const TbnModel m = chains(10);
    try {
        query_brute(m, m.index_of("a"), {}, 3);
        FAIL();
    } catch (const CapacityError& e) {
        EXPECT_NE(std::string(e.what()).find("oracle infeasible"), std::string::npos);
    }
}

TEST(Oracle, RejectsEvidenceOnHiddenNodes) {
    const TbnModel m = load("figure2.tbn");
    std::vector<SliceEvidence> ev(1);
    ev[0][m.index_of("d")] = {1, 1, 1};
    EXPECT_THROW(query_brute(m, m.index_of("e"), ev, 0), ModelError);
}

TEST(Oracle, ImpossibleEvidence) {
    ModelBuilder b;
    b.dynamic_node("x", ModelBuilder::binary(), {}, {1.0, 0.0});
    b.dynamic_node("y", ModelBuilder::binary(), {"x"}, {1.0, 0.0, 0.0, 1.0}, true).query("x");
    const TbnModel m = b.build();
    std::vector<SliceEvidence> ev(1);
    ev[0][m.index_of("y")] = {0, 1};
    EXPECT_THROW(query_brute(m, m.index_of("x"), ev, 0), ImpossibleEvidence);
}
