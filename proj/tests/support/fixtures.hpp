#ifndef TBN_TEST_FIXTURES_HPP
#define TBN_TEST_FIXTURES_HPP

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tbn/tbn.hpp"

#ifndef TBN_MODELS_DIR
#error "TBN_MODELS_DIR must point at the models/ directory"
#endif

namespace tbn::testing {

inline std::string models_dir() { return TBN_MODELS_DIR; }

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline TbnModel load(const std::string& name) { return parse_model(read_text(models_dir() + "/" + name)); }

inline std::vector<std::string> states(std::size_t k) {
    std::vector<std::string> s;
    for (std::size_t i = 0; i < k; ++i) s.push_back("s" + std::to_string(i));
    return s;
}

// k binary chains x1..xk sharing the static parent a; each chain has an
// observable child o1..ok. Queries a and x1.
inline TbnModel chains(std::size_t k) {
    ModelBuilder b;
    b.static_node("a", ModelBuilder::binary(), {}, {0.35, 0.65});
    for (std::size_t i = 1; i <= k; ++i) {
        const std::string x = "x" + std::to_string(i);
        const double u = 0.05 + 0.8 * static_cast<double>(i) / static_cast<double>(k + 1);
        b.dynamic_node(x, ModelBuilder::binary(), {"a", "prev(" + x + ")"},
                       {0.9, 0.1, 1 - u, u, 0.6, 0.4, 0.25, 0.75});
        b.initial(x, {}, {u, 1 - u});
    }
    for (std::size_t i = 1; i <= k; ++i) {
        const std::string x = "x" + std::to_string(i);
        b.dynamic_node("o" + std::to_string(i), ModelBuilder::binary(), {x}, {0.8, 0.2, 0.3, 0.7}, true);
    }
    b.query("a").query("x1");
    return b.build();
}

inline std::vector<double> random_distribution(std::mt19937_64& rng, std::size_t k) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::vector<double> p(k);
    double z = 0;
    for (double& v : p) z += v = u(rng);
    for (double& v : p) v /= z;
    return p;
}

inline std::vector<double> random_table(std::mt19937_64& rng, std::size_t rows, std::size_t k) {
    std::vector<double> t;
    for (std::size_t r = 0; r < rows; ++r) {
        auto p = random_distribution(rng, k);
        t.insert(t.end(), p.begin(), p.end());
    }
    return t;
}

struct RandomModelLimits {
    std::size_t max_static = 4;
    std::size_t max_dynamic = 6;
    std::size_t max_transitional = 3;
    std::size_t max_states = 3;
};

// Random valid model with strictly positive tables; every node is a query target.
inline TbnModel random_model(std::mt19937_64& rng, RandomModelLimits lim = {}) {
    auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
    auto coin = [&](double p) { return std::bernoulli_distribution(p)(rng); };
    const std::size_t ns = pick(0, lim.max_static);
    const std::size_t nd = pick(1, lim.max_dynamic);
    std::vector<std::string> sid, did;
    std::vector<std::size_t> scard, dcard;
    for (std::size_t i = 0; i < ns; ++i) {
        sid.push_back("s" + std::to_string(i));
        scard.push_back(pick(2, lim.max_states));
    }
    for (std::size_t i = 0; i < nd; ++i) {
        did.push_back("d" + std::to_string(i));
        dcard.push_back(pick(2, lim.max_states));
    }
    std::vector<std::vector<std::pair<std::string, std::size_t>>> sparents(ns), dparents(nd);
    for (std::size_t i = 0; i < ns; ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (sparents[i].size() < 2 && coin(0.4)) sparents[i].push_back({sid[j], scard[j]});
    for (std::size_t i = 0; i < nd; ++i) {
        for (std::size_t j = 0; j < ns; ++j)
            if (dparents[i].size() < 2 && coin(0.3)) dparents[i].push_back({sid[j], scard[j]});
        for (std::size_t j = 0; j < i; ++j)
            if (dparents[i].size() < 3 && coin(0.4)) dparents[i].push_back({did[j], dcard[j]});
    }
    // transitional nodes: each feeds at least one dynamic node through prev()
    std::vector<std::size_t> order(nd);
    for (std::size_t i = 0; i < nd; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t nt = pick(0, std::min(lim.max_transitional, nd));
    std::vector<std::size_t> trans(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(nt));
    std::sort(trans.begin(), trans.end());
    for (std::size_t t : trans) {
        std::size_t child = coin(0.5) ? t : pick(0, nd - 1);
        dparents[child].push_back({"prev(" + did[t] + ")", dcard[t]});
        const std::size_t extra = pick(0, nd - 1);
        if (extra != child && dparents[extra].size() < 4 && coin(0.3))
            dparents[extra].push_back({"prev(" + did[t] + ")", dcard[t]});
    }

    ModelBuilder b;
    auto rows = [](const std::vector<std::pair<std::string, std::size_t>>& ps) {
        std::size_t r = 1;
        for (const auto& p : ps) r *= p.second;
        return r;
    };
    auto names = [](const std::vector<std::pair<std::string, std::size_t>>& ps) {
        std::vector<std::string> n;
        for (const auto& p : ps) n.push_back(p.first);
        return n;
    };
    std::set<std::string> static_parents;
    for (std::size_t i = 0; i < nd; ++i)
        for (const auto& p : dparents[i])
            if (p.first[0] == 's') static_parents.insert(p.first);
    for (std::size_t i = 0; i < ns; ++i)
        b.static_node(sid[i], states(scard[i]), names(sparents[i]), random_table(rng, rows(sparents[i]), scard[i]));
    for (std::size_t i = 0; i < nd; ++i)
        b.dynamic_node(did[i], states(dcard[i]), names(dparents[i]), random_table(rng, rows(dparents[i]), dcard[i]),
                       coin(0.6));
    std::vector<std::pair<std::string, std::size_t>> init_pool;
    for (std::size_t i = 0; i < ns; ++i)
        if (static_parents.count(sid[i])) init_pool.push_back({sid[i], scard[i]});
    for (std::size_t t : trans) {
        std::vector<std::pair<std::string, std::size_t>> ip;
        for (const auto& c : init_pool)
            if (ip.size() < 2 && coin(0.35)) ip.push_back(c);
        b.initial(did[t], names(ip), random_table(rng, rows(ip), dcard[t]));
        init_pool.push_back({did[t], dcard[t]}); // later initial CPTs may depend on this one
    }
    for (const auto& s : sid) b.query(s);
    for (const auto& d : did) b.query(d);
    return b.build();
}

// Random per-slice evidence: soft vectors, some hard (one-hot) observations.
inline SliceEvidence random_evidence(std::mt19937_64& rng, const TbnModel& m, double hard = 0.3) {
    SliceEvidence ev;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::uint32_t i = 0; i < m.size(); ++i) {
        if (!m.node(i).observable || u(rng) > 0.75) continue;
        const std::size_t k = m.card(i);
        std::vector<double> lik(k, 0.0);
        if (u(rng) < hard) {
            lik[std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)] = 1.0;
        } else {
            for (double& v : lik) v = 0.02 + u(rng);
        }
        ev[i] = std::move(lik);
    }
    return ev;
}

// Posts one slice of evidence to a runtime instance.
inline void post_all(RuntimeInstance& rt, const TbnModel& m, const SliceEvidence& ev) {
    for (const auto& [node, lik] : ev) rt.post_observation(m.node(node).id, lik);
}

} // namespace tbn::testing

#endif // TBN_TEST_FIXTURES_HPP
