// tbnc: validate, compile, run and check temporal Bayes net models.
//
// Exit codes: 0 success, 1 invalid model / capacity / failed comparison,
// 2 usage, 3 unreadable or malformed input, 4 impossible evidence.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tbn/tbn.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kInput = 3;
constexpr int kNumeric = 4;

struct InputError : tbn::Error {
    using tbn::Error::Error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

tbn::TbnModel load_model(const std::string& path) {
    try {
        return tbn::parse_model(read_file(path));
    } catch (const tbn::ParseError& e) {
        throw InputError(path + ": " + e.what());
    }
}

tbn::EvidenceStream load_stream(const std::string& path) {
    try {
        return tbn::parse_stream(read_file(path));
    } catch (const tbn::ParseError& e) {
        throw InputError(path + ": " + e.what());
    }
}

std::string format_probs(std::span<const double> p, char sep) {
    std::string out;
    char buf[40];
    for (double v : p) {
        std::snprintf(buf, sizeof buf, "%.12g", v);
        out += sep;
        out += buf;
    }
    return out;
}

void print_posterior(std::ostream& os, const std::string& format, int step, const std::string& id,
                     std::span<const double> p) {
    if (format == "tsv")
        os << step << '\t' << id << format_probs(p, '\t') << '\n';
    else
        os << "t=" << step << ' ' << id << format_probs(p, ' ') << '\n';
}

// Targets named on the command line, or every query target of the plan.
std::vector<std::string> pick_targets(const tbn::EvaluationPlan& plan, const std::vector<std::string>& requested) {
    if (!requested.empty()) {
        for (const std::string& t : requested)
            if (!plan.query_routine(t)) throw tbn::ModelError("'" + t + "' is not a query target of the plan");
        return requested;
    }
    std::vector<std::string> all;
    for (const tbn::Routine& q : plan.queries) all.push_back(plan.nodes.at(q.target).id);
    return all;
}

void post(tbn::RuntimeInstance& rt, const tbn::StreamRecord& r) {
    try {
        rt.post_observation(r.id, r.likelihood);
    } catch (const tbn::Error& e) {
        throw InputError("stream line " + std::to_string(r.line) + ": " + e.what());
    }
}

int cmd_validate(const std::string& path) {
    const tbn::TbnModel m = load_model(path);
    const tbn::ValidationReport report = tbn::validate(m);
    if (!report.empty()) {
        std::cout << tbn::format_report(report);
        return kFailed;
    }
    const tbn::Classification c = tbn::classify(m);
    std::cout << "ok: " << m.size() << " nodes, " << c.statics.size() << " static, " << c.dynamics.size()
              << " dynamic, " << c.transitional.size() << " transitional, " << c.static_parents.size()
              << " static parents, " << c.observables.size() << " observable\n";
    return kOk;
}

int cmd_compile(const std::string& path, const std::string& out, std::size_t cap, bool monolithic) {
    const tbn::TbnModel m = load_model(path);
    const tbn::ValidationReport report = tbn::validate(m);
    if (!report.empty()) {
        std::cout << tbn::format_report(report);
        return kFailed;
    }
    tbn::CompileOptions opt;
    opt.cap = cap;
    opt.monolithic = monolithic;
    const tbn::EvaluationPlan plan = tbn::compile(m, opt);
    const std::string text = tbn::serialize_plan(plan);
    {
        std::ofstream os(out, std::ios::binary);
        if (!os || !(os << text)) throw InputError("cannot write '" + out + "'");
    }
    std::cout << "past factorization     " << plan.factorization_name() << '\n'
              << "stabilized after       " << plan.stabilization_iterations << " iteration(s)"
              << (plan.joined ? " (merged layout)" : "") << '\n'
              << tbn::format_stats(plan.stats) << "wrote " << out << '\n';
    return kOk;
}

int cmd_run(const std::string& plan_path, const std::string& stream_path, const std::vector<std::string>& targets_in,
            const std::string& format) {
    auto plan = std::make_shared<const tbn::EvaluationPlan>(tbn::parse_plan(read_file(plan_path)));
    const tbn::EvidenceStream stream = load_stream(stream_path);
    const auto targets = pick_targets(*plan, targets_in);
    tbn::RuntimeInstance rt(plan);
    if (format == "tsv") {
        std::cout << "step\ttarget\tposterior\n";
    }
    for (const tbn::StreamRecord& r : stream.records) {
        switch (r.kind) {
        case tbn::StreamRecord::Kind::Observe: post(rt, r); break;
        case tbn::StreamRecord::Kind::Query:
            if (!plan->query_routine(r.id))
                throw InputError("stream line " + std::to_string(r.line) + ": '" + r.id + "' is not a query target");
            print_posterior(std::cout, format, rt.pending_step(), r.id, rt.query(r.id));
            break;
        case tbn::StreamRecord::Kind::Advance:
            for (const std::string& t : targets) print_posterior(std::cout, format, rt.pending_step(), t, rt.query(t));
            rt.advance();
            break;
        }
    }
    return kOk;
}

int cmd_oracle(const std::string& model_path, const std::string& stream_path, const std::vector<std::string>& targets_in,
               int t, std::size_t cap) {
    const tbn::TbnModel m = load_model(model_path);
    const tbn::ValidationReport report = tbn::validate(m);
    if (!report.empty()) {
        std::cout << tbn::format_report(report);
        return kFailed;
    }
    const tbn::EvidenceStream stream = load_stream(stream_path);
    const auto evidence = tbn::slice_evidence(stream, m);
    if (t < 0) t = static_cast<int>(stream.advances() > 0 ? stream.advances() - 1 : 0);
    std::vector<std::string> targets = targets_in;
    if (targets.empty())
        for (std::uint32_t q : m.query_targets()) targets.push_back(m.node(q).id);
    for (const std::string& id : targets) {
        auto i = m.find(id);
        if (!i) throw tbn::ModelError("unknown node '" + id + "'");
        print_posterior(std::cout, "records", t, id, tbn::query_brute(m, *i, evidence, t, cap));
    }
    return kOk;
}

int cmd_diff(const std::string& model_path, const std::string& stream_path, const std::vector<std::string>& targets_in,
             const std::string& plan_path, double tolerance, std::size_t cap) {
    const tbn::TbnModel m = load_model(model_path);
    const tbn::ValidationReport report = tbn::validate(m);
    if (!report.empty()) {
        std::cout << tbn::format_report(report);
        return kFailed;
    }
    auto plan = std::make_shared<const tbn::EvaluationPlan>(plan_path.empty() ? tbn::compile(m)
                                                                              : tbn::parse_plan(read_file(plan_path)));
    const tbn::EvidenceStream stream = load_stream(stream_path);
    const auto targets = pick_targets(*plan, targets_in);
    std::vector<tbn::SliceEvidence> evidence(1);
    tbn::RuntimeInstance rt(plan);
    double worst = 0.0;
    std::size_t compared = 0;
    auto compare = [&](const std::string& id) {
        const auto live = rt.query(id);
        const std::vector<double> got(live.begin(), live.end());
        std::vector<double> want;
        try {
            want = tbn::query_brute(m, *m.find(id), evidence, rt.pending_step(), cap);
        } catch (const tbn::CapacityError& e) {
            throw tbn::CapacityError(std::string(e.what()) + " at step " + std::to_string(rt.pending_step()) +
                                     "; nothing was compared past this point");
        }
        const double d = tbn::max_abs_diff(got, want);
        worst = std::max(worst, d);
        ++compared;
        if (d > tolerance) {
            std::cout << "mismatch t=" << rt.pending_step() << ' ' << id << ": plan" << format_probs(got, ' ')
                      << " oracle" << format_probs(want, ' ') << '\n';
        }
    };
    for (const tbn::StreamRecord& r : stream.records) {
        switch (r.kind) {
        case tbn::StreamRecord::Kind::Observe: {
            post(rt, r);
            evidence.back()[*m.find(r.id)] = r.likelihood;
            break;
        }
        case tbn::StreamRecord::Kind::Query:
            if (!plan->query_routine(r.id))
                throw InputError("stream line " + std::to_string(r.line) + ": '" + r.id + "' is not a query target");
            compare(r.id);
            break;
        case tbn::StreamRecord::Kind::Advance:
            for (const std::string& t : targets) compare(t);
            rt.advance();
            evidence.emplace_back();
            break;
        }
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", worst);
    std::cout << compared << " posteriors compared, max abs difference " << buf << " (tolerance " << tolerance
              << ")\n";
    return worst <= tolerance ? kOk : kFailed;
}

int cmd_inspect(const std::string& plan_path) {
    const tbn::EvaluationPlan plan = tbn::parse_plan(read_file(plan_path));
    std::cout << "past factorization " << plan.factorization_name() << ", stabilized after "
              << plan.stabilization_iterations << " iteration(s)" << (plan.joined ? " (merged layout)" : "")
              << (plan.monolithic ? ", monolithic" : "") << '\n';
    auto routine = [&](const tbn::Routine& r) {
        std::cout << '\n' << r.name << '\n';
        if (r.code.empty()) {
            std::cout << "  (none)\n";
            return;
        }
        for (const std::string& l : r.listing) std::cout << "  " << l << '\n';
        for (const tbn::Instruction& i : r.code) {
            std::cout << "    ";
            switch (i.op) {
            case tbn::Instruction::Op::Multiply:
                std::cout << "mul  " << tbn::detail::operand_token(i.dst) << " <- " << tbn::detail::operand_token(i.a)
                          << " * " << tbn::detail::operand_token(i.b) << "  (" << i.loop.total << ")";
                break;
            case tbn::Instruction::Op::SumOut:
                std::cout << "sum  " << tbn::detail::operand_token(i.dst) << " <- " << tbn::detail::operand_token(i.a);
                break;
            case tbn::Instruction::Op::Normalize: std::cout << "norm " << tbn::detail::operand_token(i.dst); break;
            case tbn::Instruction::Op::SwapPast: std::cout << "swap " << i.pair; break;
            }
            std::cout << '\n';
        }
    };
    routine(plan.advance);
    for (const tbn::Routine& q : plan.queries) routine(q);
    std::cout << '\n' << tbn::format_stats(plan.stats);
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"tbnc: compile temporal Bayes nets into fixed evaluation plans"};
    app.require_subcommand(1);

    std::string model, plan, stream, out, format = "records";
    std::vector<std::string> targets;
    std::size_t cap = tbn::kDefaultBufferCap;
    std::size_t oracle_cap = tbn::kDefaultOracleCap;
    bool monolithic = false;
    int step = -1;
    double tolerance = 1e-9;

    auto* validate = app.add_subcommand("validate", "check a model against the structural rules");
    validate->add_option("model", model, "model file")->required();

    auto* compile = app.add_subcommand("compile", "compile a model into a plan file");
    compile->add_option("model", model, "model file")->required();
    compile->add_option("-o,--output", out, "plan file to write")->required();
    compile->add_option("--cap", cap, "maximum entries of any table or product");
    compile->add_flag("--monolithic", monolithic, "keep the past as one factor over the whole interface");

    auto* run = app.add_subcommand("run", "run an evidence stream through a plan");
    run->add_option("plan", plan, "plan file")->required();
    run->add_option("stream", stream, "evidence stream")->required();
    run->add_option("--target", targets, "targets to report on each advance (default: all)");
    run->add_option("--format", format, "output format")->check(CLI::IsMember({"records", "tsv"}));

    auto* oracle = app.add_subcommand("oracle", "reference posterior by full enumeration");
    oracle->add_option("model", model, "model file")->required();
    oracle->add_option("stream", stream, "evidence stream")->required();
    oracle->add_option("--target", targets, "targets (default: the model's query targets)");
    oracle->add_option("--t", step, "time step (default: the last committed step)");
    oracle->add_option("--cap", oracle_cap, "maximum joint table entries");

    auto* diff = app.add_subcommand("diff", "compare a plan against the reference on a stream");
    diff->add_option("model", model, "model file")->required();
    diff->add_option("stream", stream, "evidence stream")->required();
    diff->add_option("--target", targets, "targets to compare (default: all)");
    diff->add_option("--plan", plan, "plan file (default: compile the model)");
    diff->add_option("--tolerance", tolerance, "maximum absolute difference");
    diff->add_option("--cap", oracle_cap, "maximum joint table entries of the reference");

    auto* inspect = app.add_subcommand("inspect", "print a plan's factorization, trees, routines and statistics");
    inspect->add_option("plan", plan, "plan file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*validate) return cmd_validate(model);
        if (*compile) return cmd_compile(model, out, cap, monolithic);
        if (*run) return cmd_run(plan, stream, targets, format);
        if (*oracle) return cmd_oracle(model, stream, targets, step, oracle_cap);
        if (*diff) return cmd_diff(model, stream, targets, plan, tolerance, oracle_cap);
        if (*inspect) return cmd_inspect(plan);
    } catch (const tbn::ImpossibleEvidence& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumeric;
    } catch (const tbn::CapacityError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailed;
    } catch (const tbn::ModelError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return *run || *diff ? kInput : kFailed;
    } catch (const tbn::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInput;
    }
    return 2;
}
