#ifndef TBN_RUNTIME_HPP
#define TBN_RUNTIME_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tbn/error.hpp"
#include "tbn/factor.hpp"
#include "tbn/plan.hpp"

namespace tbn {

// Streaming state for one sequence. All storage is reserved when the instance
// is created; posting evidence, advancing and querying never allocate.
class RuntimeInstance {
public:
    explicit RuntimeInstance(std::shared_ptr<const EvaluationPlan> plan) : plan_(std::move(plan)) {
        if (!plan_) throw PlanError("runtime instance needs a plan");
        const EvaluationPlan& p = *plan_;
        std::size_t total = 0;
        offset_.reserve(p.buffers.size());
        for (const BufferSpec& b : p.buffers) {
            offset_.push_back(total);
            total += b.size;
        }
        arena_.assign(total, 0.0);
        for (const auto& [id, values] : p.constants) std::copy(values.begin(), values.end(), arena_.begin() + static_cast<std::ptrdiff_t>(offset_[id]));
        live_.assign(p.past.size(), 0);
        for (const auto& [node, buf] : p.evidence) evidence_.emplace(p.nodes.at(node).id, buf);
        for (const Routine& q : p.queries) queries_.emplace(p.nodes.at(q.target).id, &q);
        reset();
    }

    // Back to the state before any step: past factors at their initial values,
    // no evidence posted.
    void reset() {
        const EvaluationPlan& p = *plan_;
        for (std::size_t j = 0; j < p.past.size(); ++j) {
            live_[j] = 0;
            const auto& init = p.initial_past[j];
            std::copy(init.begin(), init.end(), buffer(p.past[j].buffers[0]));
        }
        clear_evidence();
        time_ = -1;
    }

    // Likelihood for an observable at the pending step; replaces any earlier one.
    void post_observation(std::string_view observable, std::span<const double> likelihood) {
        auto it = evidence_.find(observable);
        if (it == evidence_.end()) throw ModelError("'" + std::string(observable) + "' is not an observable node");
        const BufferSpec& b = plan_->buffers[it->second];
        check_likelihood(likelihood, b.size);
        std::copy(likelihood.begin(), likelihood.end(), buffer(it->second));
    }

    // Commits the pending step. On failure the instance is unchanged.
    void advance() {
        for (const Instruction& ins : plan_->advance.code) {
            if (ins.op == Instruction::Op::SwapPast) break;
            execute(ins, plan_->advance.name);
        }
        for (const Instruction& ins : plan_->advance.code)
            if (ins.op == Instruction::Op::SwapPast) live_[ins.pair] ^= 1;
        clear_evidence();
        ++time_;
    }

    // Posterior of a query target at the pending step. The span stays valid
    // until the next query of the same target.
    std::span<const double> query(std::string_view target) {
        auto it = queries_.find(target);
        if (it == queries_.end()) throw ModelError("'" + std::string(target) + "' is not a query target of this plan");
        const Routine& r = *it->second;
        for (const Instruction& ins : r.code) execute(ins, r.name);
        return {buffer(r.output), plan_->buffers[r.output].size};
    }

    // Number of committed steps minus one: -1 before the first advance.
    int time_step() const { return time_; }
    int pending_step() const { return time_ + 1; }

    std::span<const double> past(std::size_t j) const {
        const PastPair& pp = plan_->past.at(j);
        const std::uint32_t id = pp.buffers[live_[j]];
        return {arena_.data() + offset_[id], plan_->buffers[id].size};
    }

    const EvaluationPlan& plan() const { return *plan_; }

private:
    double* buffer(std::uint32_t id) { return arena_.data() + offset_[id]; }

    double* resolve(const Operand& o) {
        switch (o.kind) {
        case Operand::Kind::Buffer: return buffer(o.index);
        case Operand::Kind::PastCur: return buffer(plan_->past[o.index].buffers[live_[o.index]]);
        case Operand::Kind::PastNext: return buffer(plan_->past[o.index].buffers[live_[o.index] ^ 1]);
        }
        return nullptr;
    }

    std::size_t size_of(const Operand& o) const {
        if (o.kind == Operand::Kind::Buffer) return plan_->buffers[o.index].size;
        return plan_->buffers[plan_->past[o.index].buffers[0]].size;
    }

    void execute(const Instruction& ins, const std::string& where) {
        double* dst = resolve(ins.dst);
        const std::size_t n = size_of(ins.dst);
        switch (ins.op) {
        case Instruction::Op::Multiply: {
            const double* a = resolve(ins.a);
            const double* b = resolve(ins.b);
            std::fill(dst, dst + n, 0.0);
            const std::array<const std::size_t*, 3> strides{ins.loop.stride_dst.data(), ins.loop.stride_a.data(),
                                                            ins.loop.stride_b.data()};
            detail::strided_loop<3>(ins.loop.dims, strides, [&](const std::array<std::size_t, 3>& off) {
                dst[off[0]] += a[off[1]] * b[off[2]];
            });
            break;
        }
        case Instruction::Op::SumOut: {
            const double* a = resolve(ins.a);
            std::fill(dst, dst + n, 0.0);
            const std::array<const std::size_t*, 2> strides{ins.loop.stride_dst.data(), ins.loop.stride_a.data()};
            detail::strided_loop<2>(ins.loop.dims, strides,
                                    [&](const std::array<std::size_t, 2>& off) { dst[off[0]] += a[off[1]]; });
            break;
        }
        case Instruction::Op::Normalize: {
            double z = 0.0;
            for (std::size_t i = 0; i < n; ++i) z += dst[i];
            if (!(z > kUnderflowGuard) || !std::isfinite(z))
                throw ImpossibleEvidence("impossible or vanishing evidence at step " + std::to_string(time_ + 1) +
                                         " (" + where + ")");
            const double inv = 1.0 / z;
            for (std::size_t i = 0; i < n; ++i) dst[i] *= inv;
            break;
        }
        case Instruction::Op::SwapPast: break;
        }
    }

    void clear_evidence() {
        for (const auto& [node, buf] : plan_->evidence) std::fill_n(buffer(buf), plan_->buffers[buf].size, 1.0);
    }

    std::shared_ptr<const EvaluationPlan> plan_;
    std::vector<double> arena_;
    std::vector<std::size_t> offset_;
    std::vector<unsigned char> live_;
    std::map<std::string, std::uint32_t, std::less<>> evidence_;
    std::map<std::string, const Routine*, std::less<>> queries_;
    int time_ = -1;
};

} // namespace tbn

#endif // TBN_RUNTIME_HPP
