#pragma once

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "softthink/harness.hpp"

namespace softthink {

namespace detail {

inline std::vector<double> parse_grid(const std::string& csv) {
    std::vector<double> values;
    std::stringstream stream(csv);
    std::string item;
    while (std::getline(stream, item, ','))
        if (!item.empty()) values.push_back(std::stod(item));
    return values;
}

inline std::string default_out_root() {
    if (const char* env = std::getenv("SOFTTHINK_OUT")) return env;
    return "out";
}

/// A positional that names an experiment directory expands to its traces.
inline std::vector<std::string> expand_trace_args(const std::vector<std::string>& args) {
    std::vector<std::string> files;
    for (const std::string& arg : args) {
        if (std::filesystem::is_directory(arg)) {
            const std::filesystem::path traces = std::filesystem::path(arg) / "traces";
            if (!std::filesystem::is_directory(traces))
                throw DataError("probe: no traces/ directory under " + arg);
            for (const auto& entry : std::filesystem::directory_iterator(traces))
                if (entry.path().extension() == ".jsonl") files.push_back(entry.path().string());
        } else {
            files.push_back(arg);
        }
    }
    return files;
}

} // namespace detail

/// Exit codes: 0 success, 1 usage, 2 data/compatibility, 3 numeric.
inline int cli_main(int argc, const char* const* argv) {
    CLI::App app{"soft-token decoding engine and probing toolkit"};
    app.require_subcommand(1);

    // --- init-toy -----------------------------------------------------
    auto* init = app.add_subcommand("init-toy", "create and save a toy model");
    std::string init_out;
    std::string init_arch = "toy";
    std::uint64_t init_seed = 7;
    ToyModelSpec init_spec;
    double init_eot_floor = 0.02;
    init->add_option("--out", init_out, "weights path (.safetensors)")->required();
    init->add_option("--arch", init_arch, "toy | linear")->check(CLI::IsMember({"toy", "linear"}));
    init->add_option("--seed", init_seed, "init seed");
    init->add_option("--layers", init_spec.layers, "block count");
    init->add_option("--dim", init_spec.dim, "model width");
    init->add_option("--heads", init_spec.heads, "attention heads");
    init->add_option("--vocab", init_spec.vocab, "vocabulary size");
    init->add_option("--context", init_spec.context, "context length");
    init->add_option("--eot", init_spec.eot_id, "end-of-thinking token id");
    init->add_option("--eot-floor", init_eot_floor, "linear arch: EOT probability floor");
    bool init_untied = false;
    init->add_flag("--untied", init_untied, "separate LM head");

    // --- decode --------------------------------------------------------
    auto* dec = app.add_subcommand("decode", "run seeded decodes and write traces");
    std::string dec_spec_path, dec_out, dec_model_path, dec_prompt_file, dec_mode, dec_answer_mode;
    std::vector<std::string> dec_prompts;
    std::uint64_t dec_toy_seed = 7, dec_linear_seed = 7, dec_seed = 0;
    double dec_temperature = 0, dec_top_p = 0, dec_gamma = 0, dec_tau = 0, dec_linear_floor = 0.02;
    int dec_top_k = 0, dec_max_len = 0, dec_reps = 0, dec_workers = 1;
    auto* spec_opt = dec->add_option("--spec", dec_spec_path, "experiment spec JSON");
    dec->add_option("--out", dec_out, "output root (default $SOFTTHINK_OUT or ./out)");
    auto* model_opt = dec->add_option("--model", dec_model_path, "weights path");
    auto* toy_opt = dec->add_option("--toy-seed", dec_toy_seed, "use a toy model with this seed");
    auto* linear_opt =
        dec->add_option("--linear-seed", dec_linear_seed, "use a linear model with this seed");
    dec->add_option("--linear-floor", dec_linear_floor, "linear model EOT floor");
    int dec_layers = 0, dec_dim = 0, dec_heads = 0;
    auto* layers_opt = dec->add_option("--layers", dec_layers, "toy model blocks");
    auto* dim_opt = dec->add_option("--dim", dec_dim, "toy model width");
    auto* heads_opt = dec->add_option("--heads", dec_heads, "toy model heads");
    auto* prompts_opt = dec->add_option("--prompt", dec_prompts, "prompt text (repeatable)");
    auto* prompt_file_opt = dec->add_option("--prompt-file", dec_prompt_file, "one prompt per line");
    auto* mode_opt = dec->add_option(
        "--mode", dec_mode, "greedy | sample | soft_vanilla | soft_dirichlet | soft_gumbel");
    auto* temp_opt = dec->add_option("--temperature", dec_temperature, "softmax temperature");
    auto* topk_opt = dec->add_option("--top-k", dec_top_k, "top-k truncation");
    auto* topp_opt = dec->add_option("--top-p", dec_top_p, "nucleus threshold");
    auto* gamma_opt = dec->add_option("--gamma", dec_gamma, "Dirichlet concentration scale");
    auto* tau_opt = dec->add_option("--tau", dec_tau, "Gumbel-Softmax temperature");
    auto* maxlen_opt = dec->add_option("--max-len", dec_max_len, "step budget");
    auto* seed_opt = dec->add_option("--seed", dec_seed, "root seed");
    auto* reps_opt = dec->add_option("--reps", dec_reps, "replications per prompt");
    auto* ans_opt =
        dec->add_option("--answer-mode", dec_answer_mode, "discrete_sample | discrete_greedy");
    TokenId dec_eot = 0;
    int dec_resample_k = 0;
    double dec_resample_p = 0;
    bool dec_eot_pre = false, dec_zero_temp = false;
    auto* eot_opt = dec->add_option("--eot", dec_eot, "end-of-thinking token id");
    auto* eot_pre_opt = dec->add_flag("--eot-check-pre", dec_eot_pre,
                                      "check the EOT switch on the pre-randomizer token");
    auto* zero_temp_opt = dec->add_flag("--zero-temp-limit", dec_zero_temp,
                                        "emit one-hot argmax distributions");
    auto* resk_opt =
        dec->add_option("--resample-top-k", dec_resample_k, "Dirichlet resample truncation k");
    auto* resp_opt =
        dec->add_option("--resample-top-p", dec_resample_p, "Dirichlet resample truncation p");
    dec->add_option("--workers", dec_workers, "prompt-level worker count");

    // --- probe ---------------------------------------------------------
    auto* probe = app.add_subcommand("probe", "run an analysis probe over traces");
    std::string probe_kind, probe_out, probe_model, probe_gamma_grid, probe_tau_grid;
    std::vector<std::string> probe_inputs;
    ProbeParams probe_params;
    probe->add_option("--kind", probe_kind, "js | lens | similarity | scan | linearity")
        ->required()
        ->check(CLI::IsMember({"js", "lens", "similarity", "scan", "linearity"}));
    probe->add_option("inputs", probe_inputs, "experiment dir or trace files")->required();
    probe->add_option("--out", probe_out, "output dir (default: the experiment dir)");
    probe->add_option("--model", probe_model, "weights path override");
    probe->add_option("--temperature", probe_params.temperature, "probe softmax temperature");
    probe->add_option("--threshold", probe_params.js_threshold, "branching JS threshold");
    probe->add_option("--lens-points", probe_params.lens_max_points, "branching points per trace");
    probe->add_option("--max-support", probe_params.linearity_max_support,
                      "linearity support limit");
    probe->add_option("--max-steps", probe_params.linearity_max_steps,
                      "linearity steps per trace");
    probe->add_option("--stride", probe_params.prefix_stride, "similarity prefix stride");
    probe->add_option("--gamma-grid", probe_gamma_grid, "comma-separated gamma values");
    probe->add_option("--tau-grid", probe_tau_grid, "comma-separated tau values");
    probe->add_option("--scan-max-len", probe_params.scan_max_len, "scan decode step budget");

    // --- figures ---------------------------------------------------------
    auto* figures = app.add_subcommand("figures", "bundle probe outputs into figure CSVs");
    std::string figures_dir;
    figures->add_option("dir", figures_dir, "experiment dir with probes/")->required();

    // --- replay ----------------------------------------------------------
    auto* rep = app.add_subcommand("replay", "re-execute a trace and verify it");
    std::string replay_trace, replay_model;
    rep->add_option("trace", replay_trace, "trace file")->required();
    rep->add_option("--model", replay_model, "weights path override");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) { // --help
            std::cout << app.help() << std::endl;
            return 0;
        }
        std::cerr << e.what() << std::endl;
        return 1;
    }

    try {
        if (init->parsed()) {
            ModelWeights w;
            if (init_arch == "linear") {
                w = init_linear_model(init_spec.vocab, init_seed, init_eot_floor, init_spec.eot_id);
            } else {
                init_spec.tied_head = !init_untied;
                w = init_toy_model(init_spec, init_seed);
            }
            save_model(w, init_out);
            std::cout << "wrote " << init_out << " (" << arch_name(w.card.arch) << ", vocab "
                      << w.card.vocab_size << ", dim " << w.card.dim << ")" << std::endl;
            return 0;
        }

        if (dec->parsed()) {
            ExperimentSpec spec;
            if (spec_opt->count()) {
                spec = load_spec(dec_spec_path);
            } else {
                spec.prompts.clear();
            }
            // flags win over the file
            if (model_opt->count()) {
                spec.model.kind = ModelSource::Kind::path;
                spec.model.path = dec_model_path;
            } else if (linear_opt->count()) {
                spec.model.kind = ModelSource::Kind::linear;
                spec.model.linear.seed = dec_linear_seed;
                spec.model.linear.eot_floor = dec_linear_floor;
            } else if (toy_opt->count()) {
                spec.model.kind = ModelSource::Kind::toy;
                spec.model.toy.seed = dec_toy_seed;
            }
            if (layers_opt->count()) spec.model.toy.spec.layers = dec_layers;
            if (dim_opt->count()) spec.model.toy.spec.dim = dec_dim;
            if (heads_opt->count()) spec.model.toy.spec.heads = dec_heads;
            if (prompts_opt->count()) spec.prompts = dec_prompts;
            if (prompt_file_opt->count()) {
                std::ifstream in(dec_prompt_file);
                if (!in) throw DataError("decode: cannot open prompt file " + dec_prompt_file);
                spec.prompts.clear();
                std::string line;
                while (std::getline(in, line)) {
                    if (!line.empty() && line.back() == '\r') line.pop_back();
                    if (!line.empty()) spec.prompts.push_back(line);
                }
            }
            if (mode_opt->count()) spec.decode.mode = mode_from_name(dec_mode);
            if (temp_opt->count()) spec.decode.temperature = dec_temperature;
            if (topk_opt->count()) spec.decode.top_k = dec_top_k;
            if (topp_opt->count()) spec.decode.top_p = dec_top_p;
            if (gamma_opt->count()) spec.decode.gamma = dec_gamma;
            if (tau_opt->count()) spec.decode.tau = dec_tau;
            if (maxlen_opt->count()) spec.decode.max_len = dec_max_len;
            if (seed_opt->count()) spec.decode.seed = dec_seed;
            if (reps_opt->count()) spec.replications = dec_reps;
            if (ans_opt->count()) spec.decode.answer_mode = answer_mode_from_name(dec_answer_mode);
            if (eot_opt->count()) spec.decode.eot_id = dec_eot;
            if (eot_pre_opt->count()) spec.decode.eot_check_pre_randomizer = dec_eot_pre;
            if (zero_temp_opt->count()) spec.decode.zero_temp_limit = dec_zero_temp;
            if (resk_opt->count()) spec.decode.resample_top_k = dec_resample_k;
            if (resp_opt->count()) spec.decode.resample_top_p = dec_resample_p;
            if (spec.prompts.empty()) throw DataError("decode: no prompts given");

            const std::string out_root = dec_out.empty() ? detail::default_out_root() : dec_out;
            const DecodeOutputs outputs = cmd_decode(spec, out_root, dec_workers);
            std::cout << outputs.out_dir << std::endl;
            for (const std::string& f : outputs.trace_files) std::cout << "  " << f << std::endl;
            return 0;
        }

        if (probe->parsed()) {
            if (!probe_gamma_grid.empty()) probe_params.gamma_grid = detail::parse_grid(probe_gamma_grid);
            if (!probe_tau_grid.empty()) probe_params.tau_grid = detail::parse_grid(probe_tau_grid);
            std::string out_dir = probe_out;
            if (out_dir.empty()) {
                if (probe_inputs.size() == 1 && std::filesystem::is_directory(probe_inputs[0]))
                    out_dir = probe_inputs[0];
                else
                    throw DataError("probe: --out is required when passing trace files");
            }
            const auto files = detail::expand_trace_args(probe_inputs);
            const auto written =
                cmd_probe(probe_kind_from_name(probe_kind), files, probe_params, out_dir, probe_model);
            for (const std::string& f : written) std::cout << f << std::endl;
            return 0;
        }

        if (figures->parsed()) {
            for (const std::string& f : cmd_figures(figures_dir)) std::cout << f << std::endl;
            return 0;
        }

        if (rep->parsed()) {
            const TraceFile stored = read_trace(replay_trace);
            if (cmd_replay(replay_trace, replay_model)) {
                std::cout << "replay ok: " << stored.trace.steps.size() << " steps match"
                          << std::endl;
                return 0;
            }
            std::cerr << "replay mismatch: re-execution differs from the stored trace"
                      << std::endl;
            return 2;
        }
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << std::endl;
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }
    return 0;
}

} // namespace softthink
