#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "softthink/decode.hpp"

namespace softthink {

inline constexpr const char* kTraceSchema = "softthink.trace.v1";

/// Doubles are serialized with 17 significant digits so parsing recovers
/// the exact bit pattern and replays compare equal.
inline std::string fmt_double(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

namespace detail {

inline void json_escape_to(std::string& out, const std::string& s) {
    out.push_back('"');
    for (const char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out += buf;
                } else {
                    out.push_back(c);
                }
        }
    }
    out.push_back('"');
}

inline void entries_to_json(std::string& out, const SoftToken& st) {
    out.push_back('[');
    for (std::size_t i = 0; i < st.entries.size(); ++i) {
        if (i) out.push_back(',');
        out += "[" + std::to_string(st.entries[i].id) + "," + fmt_double(st.entries[i].weight) + "]";
    }
    out.push_back(']');
}

inline std::string config_to_json(const DecodeConfig& c) {
    std::string out = "{";
    out += "\"mode\":\"" + std::string(mode_name(c.mode)) + "\"";
    out += ",\"temperature\":" + fmt_double(c.temperature);
    out += ",\"top_k\":" + std::to_string(c.top_k);
    out += ",\"top_p\":" + fmt_double(c.top_p);
    out += ",\"gamma\":" + fmt_double(c.gamma);
    out += ",\"tau\":" + fmt_double(c.tau);
    out += ",\"max_len\":" + std::to_string(c.max_len);
    out += ",\"seed\":" + std::to_string(c.seed);
    out += ",\"eot_id\":" + std::to_string(c.eot_id);
    out += ",\"answer_mode\":\"" + std::string(answer_mode_name(c.answer_mode)) + "\"";
    out += ",\"eot_check_pre_randomizer\":" + std::string(c.eot_check_pre_randomizer ? "true" : "false");
    out += ",\"zero_temp_limit\":" + std::string(c.zero_temp_limit ? "true" : "false");
    out += ",\"resample_top_k\":" + std::to_string(c.resample_top_k);
    out += ",\"resample_top_p\":" + fmt_double(c.resample_top_p);
    out += "}";
    return out;
}

inline std::string card_to_json_line(const ModelCard& c) {
    std::string out = "{";
    out += "\"vocab_size\":" + std::to_string(c.vocab_size);
    out += ",\"dim\":" + std::to_string(c.dim);
    out += ",\"layers\":" + std::to_string(c.layers);
    out += ",\"heads\":" + std::to_string(c.heads);
    out += ",\"context\":" + std::to_string(c.context);
    out += ",\"eot_id\":" + std::to_string(c.eot_id);
    out += ",\"tied_head\":" + std::string(c.tied_head ? "true" : "false");
    out += ",\"positional\":";
    json_escape_to(out, c.positional);
    out += ",\"arch\":\"" + std::string(arch_name(c.arch)) + "\"";
    out += "}";
    return out;
}

inline DecodeConfig config_from_json(const nlohmann::json& j) {
    DecodeConfig c;
    c.mode = mode_from_name(j.at("mode").get<std::string>());
    c.temperature = j.at("temperature").get<double>();
    c.top_k = j.at("top_k").get<int>();
    c.top_p = j.at("top_p").get<double>();
    c.gamma = j.at("gamma").get<double>();
    c.tau = j.at("tau").get<double>();
    c.max_len = j.at("max_len").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.eot_id = j.at("eot_id").get<TokenId>();
    c.answer_mode = answer_mode_from_name(j.at("answer_mode").get<std::string>());
    c.eot_check_pre_randomizer = j.at("eot_check_pre_randomizer").get<bool>();
    c.zero_temp_limit = j.at("zero_temp_limit").get<bool>();
    c.resample_top_k = j.at("resample_top_k").get<int>();
    c.resample_top_p = j.at("resample_top_p").get<double>();
    return c;
}

inline SoftToken entries_from_json(const nlohmann::json& j) {
    SoftToken st;
    for (const auto& pair : j)
        st.entries.push_back({pair.at(0).get<TokenId>(), pair.at(1).get<double>()});
    return st;
}

} // namespace detail

/// Serialize one trace as JSONL: a header object, one object per step,
/// and a termination footer.
inline std::string trace_to_jsonl(const Trace& trace, const std::string& spec_hash = "",
                                  std::uint64_t root_seed = 0) {
    std::string out;
    out += "{\"schema\":\"" + std::string(kTraceSchema) + "\"";
    out += ",\"entropy_norm\":\"ln_support\"";
    out += ",\"spec_hash\":";
    detail::json_escape_to(out, spec_hash);
    out += ",\"root_seed\":" + std::to_string(root_seed == 0 ? trace.config.seed : root_seed);
    out += ",\"model_ref\":";
    detail::json_escape_to(out, trace.model_ref);
    out += ",\"card\":" + detail::card_to_json_line(trace.card);
    out += ",\"config\":" + detail::config_to_json(trace.config);
    out += ",\"prompt\":[";
    for (std::size_t i = 0; i < trace.prompt.size(); ++i) {
        if (i) out.push_back(',');
        out += std::to_string(trace.prompt[i]);
    }
    out += "]}\n";

    for (const TraceStep& s : trace.steps) {
        out += "{\"step\":" + std::to_string(s.index);
        out += ",\"phase\":\"" + std::string(phase_name(s.phase)) + "\"";
        if (!s.soft.empty()) {
            out += ",\"soft\":";
            detail::entries_to_json(out, s.soft);
        }
        if (s.randomized) {
            out += ",\"rand\":{\"kind\":\"" + std::string(randomizer_name(s.randomized->source)) + "\"";
            out += ",\"param\":" + fmt_double(s.randomized->param);
            out += ",\"token\":";
            detail::entries_to_json(out, s.randomized->token);
            out += "}";
        }
        out += ",\"dominant\":" + std::to_string(s.dominant);
        out += ",\"entropy\":" + fmt_double(s.entropy);
        if (s.committed) out += ",\"committed\":" + std::to_string(*s.committed);
        out += ",\"child_seed\":" + std::to_string(s.child_seed);
        out += "}\n";
    }

    out += "{\"termination\":\"" + std::string(termination_name(trace.termination)) + "\"}\n";
    return out;
}

inline void write_trace(const Trace& trace, const std::string& path,
                        const std::string& spec_hash = "", std::uint64_t root_seed = 0) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("write_trace: cannot open " + path);
    out << trace_to_jsonl(trace, spec_hash, root_seed);
    if (!out) throw DataError("write_trace: write failed: " + path);
}

struct TraceFile {
    Trace trace;
    std::string spec_hash;
    std::uint64_t root_seed = 0;
};

inline TraceFile trace_from_jsonl(std::istream& in, const std::string& origin) {
    TraceFile result;
    std::string line;
    bool have_header = false;
    bool have_footer = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("trace " + origin + ": bad JSON line: " + e.what());
        }
        if (!have_header) {
            if (j.value("schema", "") != kTraceSchema)
                throw DataError("trace " + origin + ": unknown schema");
            result.spec_hash = j.at("spec_hash").get<std::string>();
            result.root_seed = j.at("root_seed").get<std::uint64_t>();
            result.trace.model_ref = j.at("model_ref").get<std::string>();
            result.trace.card = card_from_json(j.at("card"));
            result.trace.config = detail::config_from_json(j.at("config"));
            result.trace.prompt = j.at("prompt").get<std::vector<TokenId>>();
            have_header = true;
        } else if (j.contains("termination")) {
            result.trace.termination = termination_from_name(j.at("termination").get<std::string>());
            have_footer = true;
        } else {
            TraceStep s;
            s.index = j.at("step").get<int>();
            s.phase = phase_from_name(j.at("phase").get<std::string>());
            if (j.contains("soft")) s.soft = detail::entries_from_json(j.at("soft"));
            if (j.contains("rand")) {
                const auto& r = j.at("rand");
                RandomizedSoftToken rst;
                const std::string kind = r.at("kind").get<std::string>();
                if (kind == "dirichlet") rst.source = Randomizer::dirichlet;
                else if (kind == "gumbel_softmax") rst.source = Randomizer::gumbel_softmax;
                else throw DataError("trace " + origin + ": unknown randomizer " + kind);
                rst.param = r.at("param").get<double>();
                rst.token = detail::entries_from_json(r.at("token"));
                s.randomized = std::move(rst);
            }
            s.dominant = j.at("dominant").get<TokenId>();
            s.entropy = j.at("entropy").get<double>();
            if (j.contains("committed")) s.committed = j.at("committed").get<TokenId>();
            s.child_seed = j.at("child_seed").get<std::uint64_t>();
            result.trace.steps.push_back(std::move(s));
        }
    }
    if (!have_header) throw DataError("trace " + origin + ": missing header line");
    if (!have_footer) throw DataError("trace " + origin + ": missing termination line");
    return result;
}

inline TraceFile read_trace(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("read_trace: cannot open " + path);
    return trace_from_jsonl(in, path);
}

} // namespace softthink
