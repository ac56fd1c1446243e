#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "softthink/decode.hpp"
#include "softthink/model.hpp"
#include "softthink/probes.hpp"
#include "softthink/trace_io.hpp"

namespace softthink {

// ---------------------------------------------------------------------------
// Experiment specification
// ---------------------------------------------------------------------------

struct ToySource {
    ToyModelSpec spec;
    std::uint64_t seed = 7;
};

struct LinearSource {
    int vocab = tokens::kVocabSize;
    std::uint64_t seed = 7;
    double eot_floor = 0.02;
    TokenId eot_id = tokens::kEot;
};

struct ModelSource {
    enum class Kind { toy, linear, path };
    Kind kind = Kind::toy;
    ToySource toy;
    LinearSource linear;
    std::string path;
};

struct ProbeParams {
    double temperature = 1.0;    // softmax temperature for probe forwards
    double js_threshold = 0.3;   // branching-point cutoff
    int lens_max_points = 4;
    int linearity_max_steps = 8;
    int linearity_max_support = 8;
    int prefix_stride = 1;
    std::vector<double> gamma_grid; // empty -> ScanGrid defaults
    std::vector<double> tau_grid;
    int scan_max_len = 64;
};

/// Everything one run needs: model, prompts, decode settings, probe
/// parameters, replication count. Fully serializable; its hash is stamped
/// into every artifact.
struct ExperimentSpec {
    ModelSource model;
    std::vector<std::string> prompts;
    DecodeConfig decode;
    int replications = 1;
    ProbeParams probes;
};

namespace detail {

inline nlohmann::json decode_config_to_json(const DecodeConfig& c) {
    return {
        {"mode", mode_name(c.mode)},
        {"temperature", c.temperature},
        {"top_k", c.top_k},
        {"top_p", c.top_p},
        {"gamma", c.gamma},
        {"tau", c.tau},
        {"max_len", c.max_len},
        {"seed", c.seed},
        {"eot_id", c.eot_id},
        {"answer_mode", answer_mode_name(c.answer_mode)},
        {"eot_check_pre_randomizer", c.eot_check_pre_randomizer},
        {"zero_temp_limit", c.zero_temp_limit},
        {"resample_top_k", c.resample_top_k},
        {"resample_top_p", c.resample_top_p},
    };
}

inline DecodeConfig decode_config_from_json(const nlohmann::json& j) {
    DecodeConfig c;
    c.mode = mode_from_name(j.value("mode", "soft_vanilla"));
    c.temperature = j.value("temperature", c.temperature);
    c.top_k = j.value("top_k", c.top_k);
    c.top_p = j.value("top_p", c.top_p);
    c.gamma = j.value("gamma", c.gamma);
    c.tau = j.value("tau", c.tau);
    c.max_len = j.value("max_len", c.max_len);
    c.seed = j.value("seed", c.seed);
    c.eot_id = j.value("eot_id", c.eot_id);
    c.answer_mode = answer_mode_from_name(j.value("answer_mode", "discrete_sample"));
    c.eot_check_pre_randomizer = j.value("eot_check_pre_randomizer", false);
    c.zero_temp_limit = j.value("zero_temp_limit", false);
    c.resample_top_k = j.value("resample_top_k", 0);
    c.resample_top_p = j.value("resample_top_p", 0.0);
    return c;
}

} // namespace detail

inline nlohmann::json spec_to_json(const ExperimentSpec& spec) {
    nlohmann::json model;
    switch (spec.model.kind) {
        case ModelSource::Kind::toy:
            model = {{"toy",
                      {{"seed", spec.model.toy.seed},
                       {"layers", spec.model.toy.spec.layers},
                       {"dim", spec.model.toy.spec.dim},
                       {"heads", spec.model.toy.spec.heads},
                       {"vocab", spec.model.toy.spec.vocab},
                       {"context", spec.model.toy.spec.context},
                       {"eot_id", spec.model.toy.spec.eot_id},
                       {"tied_head", spec.model.toy.spec.tied_head}}}};
            break;
        case ModelSource::Kind::linear:
            model = {{"linear",
                      {{"seed", spec.model.linear.seed},
                       {"vocab", spec.model.linear.vocab},
                       {"eot_floor", spec.model.linear.eot_floor},
                       {"eot_id", spec.model.linear.eot_id}}}};
            break;
        case ModelSource::Kind::path:
            model = {{"path", spec.model.path}};
            break;
    }
    return {
        {"model", model},
        {"prompts", spec.prompts},
        {"decode", detail::decode_config_to_json(spec.decode)},
        {"replications", spec.replications},
        {"probes",
         {{"temperature", spec.probes.temperature},
          {"js_threshold", spec.probes.js_threshold},
          {"lens_max_points", spec.probes.lens_max_points},
          {"linearity_max_steps", spec.probes.linearity_max_steps},
          {"linearity_max_support", spec.probes.linearity_max_support},
          {"prefix_stride", spec.probes.prefix_stride},
          {"gamma_grid", spec.probes.gamma_grid},
          {"tau_grid", spec.probes.tau_grid},
          {"scan_max_len", spec.probes.scan_max_len}}},
    };
}

inline ExperimentSpec spec_from_json(const nlohmann::json& j,
                                     const std::filesystem::path& base_dir = {}) {
    ExperimentSpec spec;
    const nlohmann::json model = j.value("model", nlohmann::json::object());
    if (model.contains("path")) {
        spec.model.kind = ModelSource::Kind::path;
        spec.model.path = model.at("path").get<std::string>();
    } else if (model.contains("linear")) {
        spec.model.kind = ModelSource::Kind::linear;
        const auto& l = model.at("linear");
        spec.model.linear.seed = l.value("seed", spec.model.linear.seed);
        spec.model.linear.vocab = l.value("vocab", spec.model.linear.vocab);
        spec.model.linear.eot_floor = l.value("eot_floor", spec.model.linear.eot_floor);
        spec.model.linear.eot_id = l.value("eot_id", spec.model.linear.eot_id);
    } else {
        spec.model.kind = ModelSource::Kind::toy;
        const auto t = model.value("toy", nlohmann::json::object());
        spec.model.toy.seed = t.value("seed", spec.model.toy.seed);
        spec.model.toy.spec.layers = t.value("layers", spec.model.toy.spec.layers);
        spec.model.toy.spec.dim = t.value("dim", spec.model.toy.spec.dim);
        spec.model.toy.spec.heads = t.value("heads", spec.model.toy.spec.heads);
        spec.model.toy.spec.vocab = t.value("vocab", spec.model.toy.spec.vocab);
        spec.model.toy.spec.context = t.value("context", spec.model.toy.spec.context);
        spec.model.toy.spec.eot_id = t.value("eot_id", spec.model.toy.spec.eot_id);
        spec.model.toy.spec.tied_head = t.value("tied_head", spec.model.toy.spec.tied_head);
    }

    if (j.contains("prompts")) {
        const auto& p = j.at("prompts");
        if (p.is_array()) {
            spec.prompts = p.get<std::vector<std::string>>();
        } else if (p.is_object() && p.contains("file")) {
            std::filesystem::path file = p.at("file").get<std::string>();
            if (file.is_relative() && !base_dir.empty()) file = base_dir / file;
            std::ifstream in(file);
            if (!in) throw DataError("spec: cannot open prompt file " + file.string());
            std::string line;
            while (std::getline(in, line)) {
                if (!line.empty() && line.back() == '\r') line.pop_back();
                if (!line.empty()) spec.prompts.push_back(line);
            }
        } else {
            throw DataError("spec: prompts must be an array or {\"file\": ...}");
        }
    }
    if (j.contains("decode")) spec.decode = detail::decode_config_from_json(j.at("decode"));
    spec.replications = j.value("replications", 1);
    if (j.contains("probes")) {
        const auto& p = j.at("probes");
        spec.probes.temperature = p.value("temperature", spec.probes.temperature);
        spec.probes.js_threshold = p.value("js_threshold", spec.probes.js_threshold);
        spec.probes.lens_max_points = p.value("lens_max_points", spec.probes.lens_max_points);
        spec.probes.linearity_max_steps =
            p.value("linearity_max_steps", spec.probes.linearity_max_steps);
        spec.probes.linearity_max_support =
            p.value("linearity_max_support", spec.probes.linearity_max_support);
        spec.probes.prefix_stride = p.value("prefix_stride", spec.probes.prefix_stride);
        spec.probes.gamma_grid = p.value("gamma_grid", spec.probes.gamma_grid);
        spec.probes.tau_grid = p.value("tau_grid", spec.probes.tau_grid);
        spec.probes.scan_max_len = p.value("scan_max_len", spec.probes.scan_max_len);
    }
    if (spec.prompts.empty()) throw DataError("spec: no prompts given");
    if (spec.replications < 1) throw DataError("spec: replications must be >= 1");
    return spec;
}

inline ExperimentSpec load_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("spec: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("spec: bad JSON: ") + e.what());
    }
    return spec_from_json(j, std::filesystem::path(path).parent_path());
}

/// FNV-1a 64 over the canonical spec JSON, as 16 hex digits.
inline std::string spec_hash(const ExperimentSpec& spec) {
    const std::string canonical = spec_to_json(spec).dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const unsigned char c : canonical) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Model resolution
// ---------------------------------------------------------------------------

inline std::string model_ref_string(const ModelSource& source) {
    switch (source.kind) {
        case ModelSource::Kind::toy: {
            const ToySource& t = source.toy;
            std::ostringstream out;
            out << "toy:seed=" << t.seed << ",layers=" << t.spec.layers << ",dim=" << t.spec.dim
                << ",heads=" << t.spec.heads << ",vocab=" << t.spec.vocab
                << ",context=" << t.spec.context << ",eot=" << t.spec.eot_id
                << ",tied=" << (t.spec.tied_head ? 1 : 0);
            return out.str();
        }
        case ModelSource::Kind::linear: {
            const LinearSource& l = source.linear;
            std::ostringstream out;
            out << "linear:seed=" << l.seed << ",vocab=" << l.vocab << ",eot_floor="
                << fmt_double(l.eot_floor) << ",eot=" << l.eot_id;
            return out.str();
        }
        case ModelSource::Kind::path:
            return source.path;
    }
    return source.path;
}

namespace detail {

inline std::map<std::string, std::string> parse_kv(const std::string& body) {
    std::map<std::string, std::string> kv;
    std::stringstream stream(body);
    std::string item;
    while (std::getline(stream, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw DataError("model ref: bad key=value pair " + item);
        kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return kv;
}

} // namespace detail

/// Instantiate the model a reference string describes: "toy:..." and
/// "linear:..." re-initialize deterministically; anything else is a
/// container path.
inline ModelWeights resolve_model_ref(const std::string& ref) {
    if (ref.rfind("toy:", 0) == 0) {
        const auto kv = detail::parse_kv(ref.substr(4));
        ToyModelSpec spec;
        std::uint64_t seed = 7;
        for (const auto& [key, value] : kv) {
            if (key == "seed") seed = std::stoull(value);
            else if (key == "layers") spec.layers = std::stoi(value);
            else if (key == "dim") spec.dim = std::stoi(value);
            else if (key == "heads") spec.heads = std::stoi(value);
            else if (key == "vocab") spec.vocab = std::stoi(value);
            else if (key == "context") spec.context = std::stoi(value);
            else if (key == "eot") spec.eot_id = std::stoi(value);
            else if (key == "tied") spec.tied_head = (value != "0");
            else throw DataError("model ref: unknown key " + key);
        }
        return init_toy_model(spec, seed);
    }
    if (ref.rfind("linear:", 0) == 0) {
        const auto kv = detail::parse_kv(ref.substr(7));
        LinearSource l;
        for (const auto& [key, value] : kv) {
            if (key == "seed") l.seed = std::stoull(value);
            else if (key == "vocab") l.vocab = std::stoi(value);
            else if (key == "eot_floor") l.eot_floor = std::stod(value);
            else if (key == "eot") l.eot_id = std::stoi(value);
            else throw DataError("model ref: unknown key " + key);
        }
        return init_linear_model(l.vocab, l.seed, l.eot_floor, l.eot_id);
    }
    if (ref.empty()) throw DataError("model ref: empty (pass --model)");
    return load_model(ref);
}

inline ModelWeights resolve_model(const ModelSource& source) {
    return resolve_model_ref(model_ref_string(source));
}

/// Prompts are discrete byte tokens behind a BOS marker.
inline std::vector<TokenId> prompt_to_ids(const std::string& text) {
    std::vector<TokenId> ids{tokens::kBos};
    for (const TokenId id : tokenize(text)) ids.push_back(id);
    return ids;
}

// ---------------------------------------------------------------------------
// Decode command
// ---------------------------------------------------------------------------

struct DecodeOutputs {
    std::string out_dir;
    std::vector<std::string> trace_files;
};

namespace detail {

inline std::string index_name(const char* prefix, int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%s%02d", prefix, index);
    return buf;
}

} // namespace detail

/// Decode every (prompt, replication) pair into
/// {out_root}/{spec-hash}/traces/pNN_rNN.jsonl. Per-trace seeds derive
/// from (root seed, prompt index, replication index). Prompt-level jobs
/// fan out over a bounded worker pool; output names are fixed by index,
/// so completion order does not matter. Partial outputs are removed on
/// failure.
inline DecodeOutputs cmd_decode(const ExperimentSpec& spec, const std::string& out_root,
                                int workers = 1) {
    const std::string hash = spec_hash(spec);
    const std::filesystem::path out_dir = std::filesystem::path(out_root) / hash;
    const std::filesystem::path trace_dir = out_dir / "traces";

    const ModelWeights weights = resolve_model(spec.model);
    const std::string ref = model_ref_string(spec.model);
    std::filesystem::create_directories(trace_dir);

    struct Job {
        int prompt_index;
        int rep_index;
        std::string path;
    };
    std::vector<Job> jobs;
    for (int pi = 0; pi < static_cast<int>(spec.prompts.size()); ++pi)
        for (int rep = 0; rep < spec.replications; ++rep)
            jobs.push_back({pi, rep,
                            (trace_dir / (detail::index_name("p", pi) + "_" +
                                          detail::index_name("r", rep) + ".jsonl"))
                                .string()});

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string error_message;
    std::mutex error_mutex;

    auto run_job = [&](const Job& job) {
        DecodeConfig config = spec.decode;
        config.seed = derive_seed(derive_seed(spec.decode.seed, static_cast<std::uint64_t>(job.prompt_index)),
                                  static_cast<std::uint64_t>(job.rep_index));
        const Trace trace = decode(prompt_to_ids(spec.prompts[static_cast<std::size_t>(job.prompt_index)]),
                                   config, weights, ref);
        write_trace(trace, job.path, hash, spec.decode.seed);
    };
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size() || failed.load()) return;
            try {
                run_job(jobs[i]);
            } catch (const std::exception& e) {
                failed.store(true);
                std::lock_guard<std::mutex> lock(error_mutex);
                if (error_message.empty()) error_message = e.what();
                return;
            }
        }
    };

    const int pool = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
    if (pool == 1) {
        try {
            for (const Job& job : jobs) run_job(job);
        } catch (...) {
            for (const Job& job : jobs) std::filesystem::remove(job.path);
            throw;
        }
    } else {
        std::vector<std::thread> threads;
        for (int i = 0; i < pool; ++i) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
        if (failed.load()) {
            for (const Job& job : jobs) std::filesystem::remove(job.path);
            throw DataError("decode failed: " + error_message);
        }
    }

    // canonical spec snapshot beside the traces
    std::ofstream spec_out(out_dir / "spec.json", std::ios::binary | std::ios::trunc);
    spec_out << spec_to_json(spec).dump(2) << "\n";

    DecodeOutputs outputs;
    outputs.out_dir = out_dir.string();
    for (const Job& job : jobs) outputs.trace_files.push_back(job.path);
    return outputs;
}

// ---------------------------------------------------------------------------
// Probe command
// ---------------------------------------------------------------------------

enum class ProbeKind { js, lens, similarity, scan, linearity };

inline ProbeKind probe_kind_from_name(const std::string& name) {
    if (name == "js") return ProbeKind::js;
    if (name == "lens") return ProbeKind::lens;
    if (name == "similarity") return ProbeKind::similarity;
    if (name == "scan") return ProbeKind::scan;
    if (name == "linearity") return ProbeKind::linearity;
    throw std::invalid_argument("unknown probe kind: " + name);
}

inline const char* probe_kind_name(ProbeKind kind) {
    switch (kind) {
        case ProbeKind::js: return "js";
        case ProbeKind::lens: return "lens";
        case ProbeKind::similarity: return "similarity";
        case ProbeKind::scan: return "scan";
        case ProbeKind::linearity: return "linearity";
    }
    return "js";
}

namespace detail {

struct LoadedTrace {
    std::string label;
    TraceFile file;
};

inline std::vector<LoadedTrace> load_traces(std::vector<std::string> paths) {
    if (paths.empty()) throw DataError("probe: no trace files given");
    std::sort(paths.begin(), paths.end());
    std::vector<LoadedTrace> traces;
    std::map<std::string, int> stem_uses;
    for (const std::string& path : paths) {
        LoadedTrace lt;
        lt.label = std::filesystem::path(path).stem().string();
        const int uses = stem_uses[lt.label]++;
        if (uses > 0) lt.label += "#" + std::to_string(uses);
        lt.file = read_trace(path);
        traces.push_back(std::move(lt));
    }
    for (const auto& lt : traces) {
        if (!(lt.file.trace.card == traces.front().file.trace.card) ||
            lt.file.trace.model_ref != traces.front().file.trace.model_ref)
            throw DataError("probe: traces were produced by different models");
    }
    return traces;
}

/// Writes a probe artifact pair: JSONL (header record then data records)
/// and a flat CSV with a stable documented header.
class ProbeWriter {
public:
    ProbeWriter(const std::filesystem::path& dir, const std::string& kind,
                const std::string& hash, std::uint64_t root_seed, const std::string& params,
                const std::string& csv_header, const std::string& note = "") {
        std::filesystem::create_directories(dir);
        jsonl_.open(dir / (kind + ".jsonl"), std::ios::binary | std::ios::trunc);
        csv_.open(dir / (kind + ".csv"), std::ios::binary | std::ios::trunc);
        if (!jsonl_ || !csv_) throw DataError("probe: cannot write outputs in " + dir.string());
        jsonl_ << "{\"schema\":\"softthink.probe." << kind << ".v1\",\"spec_hash\":\"" << hash
               << "\",\"root_seed\":" << root_seed << ",\"params\":" << params;
        if (!note.empty()) jsonl_ << ",\"note\":\"" << note << "\"";
        jsonl_ << "}\n";
        csv_ << "# softthink.probe." << kind << ".v1 spec=" << hash << " seed=" << root_seed
             << "\n";
        csv_ << csv_header << "\n";
    }

    void record(const std::string& json_line, const std::string& csv_line) {
        jsonl_ << json_line << "\n";
        csv_ << csv_line << "\n";
    }

private:
    std::ofstream jsonl_;
    std::ofstream csv_;
};

} // namespace detail

/// Run one probe kind over trace files and emit JSONL + CSV under
/// {out_dir}/probes/. The model is reconstructed from the traces'
/// model_ref unless an override path is given.
inline std::vector<std::string> cmd_probe(ProbeKind kind, const std::vector<std::string>& trace_paths,
                                          const ProbeParams& params, const std::string& out_dir,
                                          const std::string& model_override = "") {
    const auto traces = detail::load_traces(trace_paths);
    const ModelWeights weights = model_override.empty()
                                     ? resolve_model_ref(traces.front().file.trace.model_ref)
                                     : load_model(model_override);
    if (!(weights.card == traces.front().file.trace.card))
        throw DataError("probe: model card does not match the traces");
    const std::string hash = traces.front().file.spec_hash;
    const std::uint64_t root_seed = traces.front().file.root_seed;
    const std::filesystem::path probes_dir = std::filesystem::path(out_dir) / "probes";
    const std::string kind_name = probe_kind_name(kind);

    std::size_t soft_steps = 0;
    for (const auto& lt : traces)
        if (is_soft_mode(lt.file.trace.config.mode))
            for (const auto& s : lt.file.trace.steps)
                if (s.phase == Phase::thinking && s.fed_token().size() >= 2) ++soft_steps;

    switch (kind) {
        case ProbeKind::js: {
            const std::string note =
                soft_steps == 0 ? "no multi-support soft thinking steps in the inputs" : "";
            detail::ProbeWriter out(probes_dir, kind_name, hash, root_seed,
                                    "{\"temperature\":" + fmt_double(params.temperature) + "}",
                                    "trace,step,entropy,top1_weight,top2_weight,js_top1,js_top2",
                                    note);
            for (const auto& lt : traces) {
                for (const JsProbeRecord& r : js_probe(lt.file.trace, weights, params.temperature)) {
                    std::ostringstream js, csv;
                    js << "{\"trace\":\"" << lt.label << "\",\"step\":" << r.step
                       << ",\"entropy\":" << fmt_double(r.entropy)
                       << ",\"top1_weight\":" << fmt_double(r.top1_weight)
                       << ",\"top2_weight\":" << fmt_double(r.top2_weight)
                       << ",\"js_top1\":" << fmt_double(r.js_top1)
                       << ",\"js_top2\":" << fmt_double(r.js_top2) << "}";
                    csv << lt.label << "," << r.step << "," << fmt_double(r.entropy) << ","
                        << fmt_double(r.top1_weight) << "," << fmt_double(r.top2_weight) << ","
                        << fmt_double(r.js_top1) << "," << fmt_double(r.js_top2);
                    out.record(js.str(), csv.str());
                }
            }
            break;
        }
        case ProbeKind::lens: {
            detail::ProbeWriter out(
                probes_dir, kind_name, hash, root_seed,
                "{\"js_threshold\":" + fmt_double(params.js_threshold) +
                    ",\"temperature\":" + fmt_double(params.temperature) +
                    ",\"max_points\":" + std::to_string(params.lens_max_points) + "}",
                "trace,step,token1,token2,layer,token1_frac,token2_frac");
            for (const auto& lt : traces) {
                const auto records =
                    lens_scan(lt.file.trace, weights, params.js_threshold, params.temperature,
                              static_cast<std::size_t>(params.lens_max_points));
                for (const LensRecord& r : records) {
                    for (std::size_t layer = 0; layer < r.curve.token1.size(); ++layer) {
                        std::ostringstream js, csv;
                        js << "{\"trace\":\"" << lt.label << "\",\"step\":" << r.step
                           << ",\"token1\":" << r.token1 << ",\"token2\":" << r.token2
                           << ",\"layer\":" << layer
                           << ",\"token1_frac\":" << fmt_double(r.curve.token1[layer])
                           << ",\"token2_frac\":" << fmt_double(r.curve.token2[layer]) << "}";
                        csv << lt.label << "," << r.step << "," << r.token1 << "," << r.token2
                            << "," << layer << "," << fmt_double(r.curve.token1[layer]) << ","
                            << fmt_double(r.curve.token2[layer]);
                        out.record(js.str(), csv.str());
                    }
                }
            }
            break;
        }
        case ProbeKind::similarity: {
            // references pair by prompt: each candidate is compared against
            // the greedy trace of the same prompt
            std::map<std::vector<TokenId>, const detail::LoadedTrace*> references;
            for (const auto& lt : traces)
                if (lt.file.trace.config.mode == DecodeMode::greedy &&
                    !references.count(lt.file.trace.prompt))
                    references[lt.file.trace.prompt] = &lt;
            if (references.empty())
                throw DataError("similarity probe needs a greedy reference trace among the inputs");
            detail::ProbeWriter out(probes_dir, kind_name, hash, root_seed,
                                    "{\"stride\":" + std::to_string(params.prefix_stride) + "}",
                                    "trace,mode,reference,prefix_len,f1");
            for (const auto& lt : traces) {
                if (lt.file.trace.config.mode == DecodeMode::greedy) continue;
                const auto it = references.find(lt.file.trace.prompt);
                if (it == references.end())
                    throw DataError("similarity probe: no greedy reference for the prompt of " +
                                    lt.label);
                const detail::LoadedTrace* reference = it->second;
                const std::vector<TokenId> ref_ids = reference->file.trace.thinking_top1_ids();
                const std::vector<TokenId> cand = lt.file.trace.thinking_top1_ids();
                if (cand.empty() || ref_ids.empty()) continue;
                std::vector<int> lengths;
                const int longest = static_cast<int>(std::max(cand.size(), ref_ids.size()));
                for (int len = 1; len <= longest; len += std::max(1, params.prefix_stride))
                    lengths.push_back(len);
                for (const auto& [len, f1] : prefix_curve(cand, ref_ids, lengths)) {
                    std::ostringstream js, csv;
                    js << "{\"trace\":\"" << lt.label << "\",\"mode\":\""
                       << mode_name(lt.file.trace.config.mode) << "\",\"reference\":\""
                       << reference->label << "\",\"prefix_len\":" << len
                       << ",\"f1\":" << fmt_double(f1) << "}";
                    csv << lt.label << "," << mode_name(lt.file.trace.config.mode) << ","
                        << reference->label << "," << len << "," << fmt_double(f1);
                    out.record(js.str(), csv.str());
                }
            }
            break;
        }
        case ProbeKind::scan: {
            ScanGrid grid;
            grid.gamma_values = params.gamma_grid;
            grid.tau_values = params.tau_grid;
            if (grid.gamma_values.empty() && grid.tau_values.empty()) grid = ScanGrid::defaults();

            std::vector<std::vector<TokenId>> prompts;
            std::set<std::vector<TokenId>> seen;
            for (const auto& lt : traces)
                if (seen.insert(lt.file.trace.prompt).second)
                    prompts.push_back(lt.file.trace.prompt);

            DecodeConfig base = traces.front().file.trace.config;
            base.max_len = params.scan_max_len;
            base.seed = root_seed;

            std::ostringstream grid_json;
            grid_json << "{\"gamma_grid\":[";
            for (std::size_t i = 0; i < grid.gamma_values.size(); ++i)
                grid_json << (i ? "," : "") << fmt_double(grid.gamma_values[i]);
            grid_json << "],\"tau_grid\":[";
            for (std::size_t i = 0; i < grid.tau_values.size(); ++i)
                grid_json << (i ? "," : "") << fmt_double(grid.tau_values[i]);
            grid_json << "],\"scan_max_len\":" << params.scan_max_len << "}";

            detail::ProbeWriter out(probes_dir, kind_name, hash, root_seed, grid_json.str(),
                                    "randomizer,hyperparam,prompt,step,softness,randomness");
            for (const ScanRecord& r : randomness_softness_scan(prompts, weights, grid, base)) {
                std::ostringstream js, csv;
                js << "{\"randomizer\":\"" << randomizer_name(r.randomizer)
                   << "\",\"hyperparam\":" << fmt_double(r.param) << ",\"prompt\":" << r.prompt_index
                   << ",\"step\":" << r.step << ",\"softness\":" << fmt_double(r.softness)
                   << ",\"randomness\":" << fmt_double(r.randomness) << "}";
                csv << randomizer_name(r.randomizer) << "," << fmt_double(r.param) << ","
                    << r.prompt_index << "," << r.step << "," << fmt_double(r.softness) << ","
                    << fmt_double(r.randomness);
                out.record(js.str(), csv.str());
            }
            break;
        }
        case ProbeKind::linearity: {
            detail::ProbeWriter out(
                probes_dir, kind_name, hash, root_seed,
                "{\"temperature\":" + fmt_double(params.temperature) +
                    ",\"max_support\":" + std::to_string(params.linearity_max_support) +
                    ",\"max_steps\":" + std::to_string(params.linearity_max_steps) + "}",
                "trace,step,support,js");
            for (const auto& lt : traces) {
                const auto records = linearity_probe(
                    lt.file.trace, weights, params.temperature,
                    static_cast<std::size_t>(params.linearity_max_support),
                    static_cast<std::size_t>(params.linearity_max_steps));
                for (const LinearityRecord& r : records) {
                    std::ostringstream js, csv;
                    js << "{\"trace\":\"" << lt.label << "\",\"step\":" << r.step
                       << ",\"support\":" << r.support << ",\"js\":" << fmt_double(r.js) << "}";
                    csv << lt.label << "," << r.step << "," << r.support << "," << fmt_double(r.js);
                    out.record(js.str(), csv.str());
                }
            }
            break;
        }
    }
    const std::string base = (probes_dir / kind_name).string();
    return {base + ".jsonl", base + ".csv"};
}

// ---------------------------------------------------------------------------
// Figures command
// ---------------------------------------------------------------------------

namespace detail {

struct ProbeFile {
    nlohmann::json header;
    std::vector<nlohmann::json> records;
};

inline ProbeFile read_probe_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("figures: cannot open " + path.string());
    ProbeFile file;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        if (first) {
            file.header = std::move(j);
            first = false;
        } else {
            file.records.push_back(std::move(j));
        }
    }
    if (first) throw DataError("figures: empty probe file " + path.string());
    return file;
}

inline std::ofstream open_figure(const std::filesystem::path& dir, const std::string& name,
                                 const std::string& schema, const nlohmann::json& header) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("figures: cannot write " + (dir / name).string());
    out << "# " << schema << " spec=" << header.value("spec_hash", "") << " seed="
        << header.value("root_seed", 0ull) << "\n";
    return out;
}

} // namespace detail

/// Assemble plot-ready CSV bundles from prior probe outputs: fig3 from the
/// js probe, fig4 from lens, fig5 from similarity, fig7 from scan. No
/// rendering; downstream plotting is out of scope.
inline std::vector<std::string> cmd_figures(const std::string& out_dir) {
    const std::filesystem::path probes_dir = std::filesystem::path(out_dir) / "probes";
    const std::filesystem::path figures_dir = std::filesystem::path(out_dir) / "figures";

    const std::map<std::string, std::string> needed = {
        {"js", "fig3"}, {"lens", "fig4"}, {"similarity", "fig5"}, {"scan", "fig7"}};
    std::vector<std::string> missing;
    for (const auto& [probe, figure] : needed) {
        (void)figure;
        if (!std::filesystem::exists(probes_dir / (probe + ".jsonl")))
            missing.push_back("softthink probe --kind " + probe);
    }
    if (!missing.empty()) {
        std::string message = "figures: missing probe outputs; run:";
        for (const std::string& cmd : missing) message += "\n  " + cmd;
        throw DataError(message);
    }
    std::filesystem::create_directories(figures_dir);
    std::vector<std::string> written;

    {
        const auto js = detail::read_probe_jsonl(probes_dir / "js.jsonl");
        auto out = detail::open_figure(figures_dir, "fig3.csv", "softthink.figures.fig3.v1", js.header);
        out << "entropy,top1_weight,top2_weight,js_top1,js_top2\n";
        for (const auto& r : js.records)
            out << fmt_double(r.at("entropy").get<double>()) << ","
                << fmt_double(r.at("top1_weight").get<double>()) << ","
                << fmt_double(r.at("top2_weight").get<double>()) << ","
                << fmt_double(r.at("js_top1").get<double>()) << ","
                << fmt_double(r.at("js_top2").get<double>()) << "\n";
        written.push_back((figures_dir / "fig3.csv").string());

        // observation bands reported for the probed regime; emitted as
        // plot annotations, not assertions
        auto bands = detail::open_figure(figures_dir, "fig3_bands.csv",
                                         "softthink.figures.fig3_bands.v1", js.header);
        bands << "band,value\n";
        bands << "entropy_low,0.05\n";
        bands << "top1_high,0.7\n";
        written.push_back((figures_dir / "fig3_bands.csv").string());
    }
    {
        const auto lens = detail::read_probe_jsonl(probes_dir / "lens.jsonl");
        auto out = detail::open_figure(figures_dir, "fig4.csv", "softthink.figures.fig4.v1", lens.header);
        out << "point,layer,token1_frac,token2_frac\n";
        for (const auto& r : lens.records)
            out << r.at("trace").get<std::string>() << ":" << r.at("step").get<int>() << ","
                << r.at("layer").get<int>() << ","
                << fmt_double(r.at("token1_frac").get<double>()) << ","
                << fmt_double(r.at("token2_frac").get<double>()) << "\n";
        written.push_back((figures_dir / "fig4.csv").string());
    }
    {
        const auto sim = detail::read_probe_jsonl(probes_dir / "similarity.jsonl");
        auto out = detail::open_figure(figures_dir, "fig5.csv", "softthink.figures.fig5.v1", sim.header);
        out << "trace,mode,reference,prefix_len,f1\n";
        for (const auto& r : sim.records)
            out << r.at("trace").get<std::string>() << "," << r.at("mode").get<std::string>() << ","
                << r.at("reference").get<std::string>() << "," << r.at("prefix_len").get<int>()
                << "," << fmt_double(r.at("f1").get<double>()) << "\n";
        written.push_back((figures_dir / "fig5.csv").string());
    }
    {
        const auto scan = detail::read_probe_jsonl(probes_dir / "scan.jsonl");
        auto out = detail::open_figure(figures_dir, "fig7.csv", "softthink.figures.fig7.v1", scan.header);
        out << "randomizer,hyperparam,softness,randomness\n";
        for (const auto& r : scan.records)
            out << r.at("randomizer").get<std::string>() << ","
                << fmt_double(r.at("hyperparam").get<double>()) << ","
                << fmt_double(r.at("softness").get<double>()) << ","
                << fmt_double(r.at("randomness").get<double>()) << "\n";
        written.push_back((figures_dir / "fig7.csv").string());
    }
    return written;
}

// ---------------------------------------------------------------------------
// Replay command
// ---------------------------------------------------------------------------

/// Re-execute a stored trace and compare structurally. Returns true when
/// the replay reproduces the trace bit-exactly.
inline bool cmd_replay(const std::string& trace_path, const std::string& model_override = "") {
    const TraceFile stored = read_trace(trace_path);
    const ModelWeights weights = model_override.empty()
                                     ? resolve_model_ref(stored.trace.model_ref)
                                     : load_model(model_override);
    const Trace replayed = replay(stored.trace, weights);
    return trace_equal(stored.trace, replayed);
}

} // namespace softthink
