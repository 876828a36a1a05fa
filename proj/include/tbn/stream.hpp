#ifndef TBN_STREAM_HPP
#define TBN_STREAM_HPP

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tbn/error.hpp"
#include "tbn/model.hpp"

namespace tbn {

// One line of an evidence stream:
//   obs <observable-id> <v1> <v2> ...   likelihood for the pending step
//   advance                             commit the pending step
//   query <target-id>                   report the target at the pending step
struct StreamRecord {
    enum class Kind { Observe, Advance, Query };
    Kind kind = Kind::Advance;
    std::string id;
    std::vector<double> likelihood;
    std::size_t line = 0;
};

struct EvidenceStream {
    std::vector<StreamRecord> records;

    std::size_t advances() const {
        std::size_t n = 0;
        for (const auto& r : records) n += r.kind == StreamRecord::Kind::Advance;
        return n;
    }
};

// Observations for one slice, keyed by node index. Later records for the same
// observable overwrite earlier ones.
using SliceEvidence = std::map<std::uint32_t, std::vector<double>>;

inline EvidenceStream parse_stream(std::string_view text) {
    EvidenceStream s;
    for (const auto& toks : detail::tokenize_lines(text)) {
        if (toks.empty()) continue;
        const auto& head = toks.front();
        StreamRecord r;
        r.line = head.line;
        if (head.text == "obs") {
            if (toks.size() < 3) throw ParseError(head.line, head.column, "expected 'obs <observable-id> <v1> ...'");
            r.kind = StreamRecord::Kind::Observe;
            r.id = toks[1].text;
            for (std::size_t i = 2; i < toks.size(); ++i) {
                auto v = detail::parse_double(toks[i].text);
                if (!v) throw ParseError(toks[i].line, toks[i].column, "expected a number, got '" + toks[i].text + "'");
                r.likelihood.push_back(*v);
            }
        } else if (head.text == "advance") {
            if (toks.size() != 1) throw ParseError(toks[1].line, toks[1].column, "'advance' takes no arguments");
            r.kind = StreamRecord::Kind::Advance;
        } else if (head.text == "query") {
            if (toks.size() != 2) throw ParseError(head.line, head.column, "expected 'query <target-id>'");
            r.kind = StreamRecord::Kind::Query;
            r.id = toks[1].text;
        } else {
            throw ParseError(head.line, head.column, "unknown stream record '" + head.text + "'");
        }
        s.records.push_back(std::move(r));
    }
    return s;
}

// Per-slice evidence: slice k collects the observations posted after k advances.
inline std::vector<SliceEvidence> slice_evidence(const EvidenceStream& s, const TbnModel& m) {
    std::vector<SliceEvidence> slices(1);
    for (const auto& r : s.records) {
        switch (r.kind) {
        case StreamRecord::Kind::Observe: {
            auto i = m.find(r.id);
            if (!i) throw ParseError(r.line, 1, "unknown observable '" + r.id + "'");
            slices.back()[*i] = r.likelihood;
            break;
        }
        case StreamRecord::Kind::Advance: slices.emplace_back(); break;
        case StreamRecord::Kind::Query: break;
        }
    }
    return slices;
}

} // namespace tbn

#endif // TBN_STREAM_HPP
