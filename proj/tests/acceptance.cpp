// Acceptance suite: one line per criterion, nonzero exit on any failure.
// Each criterion pins its tolerances and time budget in code.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "softthink/harness.hpp"

using namespace softthink;
namespace fs = std::filesystem;

namespace {

struct Check {
    bool ok = true;
    std::ostringstream detail;

    void require(bool condition, const std::string& what) {
        if (!condition) {
            ok = false;
            if (detail.tellp() > 0) detail << "; ";
            detail << what;
        }
    }
    void note(const std::string& what) {
        if (detail.tellp() > 0) detail << "; ";
        detail << what;
    }
};

std::vector<TokenId> prompt(const std::string& text) { return prompt_to_ids(text); }

ModelWeights toy_model(int dim = 32, int layers = 2, std::uint64_t seed = 7) {
    ToyModelSpec spec;
    spec.dim = dim;
    spec.layers = layers;
    spec.heads = 4;
    return init_toy_model(spec, seed);
}

ProbVector random_distribution(RngState& rng, int vocab, int max_support) {
    const int support = 1 + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(max_support));
    ProbVector p(static_cast<std::size_t>(vocab), 0.0);
    std::vector<int> ids(static_cast<std::size_t>(vocab));
    for (int i = 0; i < vocab; ++i) ids[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < support; ++i) {
        const int j = i + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(vocab - i));
        std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
    }
    double sum = 0.0;
    for (int i = 0; i < support; ++i) {
        const double w = -std::log(rng.uniform_open01());
        p[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])] = w;
        sum += w;
    }
    for (double& w : p) w /= sum;
    return p;
}

// --- criterion 1: simplex property suite -----------------------------------

void criterion_simplex(Check& c) {
    const double ln2 = std::log(2.0);
    RngState rng(1001);
    for (int it = 0; it < 1000; ++it) {
        const ProbVector p = random_distribution(rng, 48, 20);
        const ProbVector q = random_distribution(rng, 48, 20);
        const int k = 1 + static_cast<int>(rng.next_u64() % 24);
        const double threshold = 0.05 + 0.95 * rng.uniform01();

        const SoftToken st = truncate(p, k, threshold);
        double sum = 0.0;
        for (const auto& e : st.entries) {
            sum += e.weight;
            c.require(e.weight > 0.0, "nonpositive weight after truncate");
        }
        c.require(std::abs(sum - 1.0) <= 1e-9, "truncate sum off by more than 1e-9");

        const SoftToken twice = truncate(st, k, threshold);
        c.require(twice == st, "truncation not idempotent");

        for (std::size_t i = 1; i < st.entries.size(); ++i) {
            const double before = p[static_cast<std::size_t>(st.entries[i].id)] /
                                  p[static_cast<std::size_t>(st.entries[0].id)];
            const double after = st.entries[i].weight / st.entries[0].weight;
            c.require(std::abs(before - after) <= 1e-9 * std::max(1.0, std::abs(before)),
                      "truncation broke weight ratios");
        }

        const double js_pq = js_divergence(p, q);
        c.require(js_pq >= 0.0 && js_pq <= ln2 + 1e-12, "JS out of [0, ln 2]");
        c.require(std::abs(js_pq - js_divergence(q, p)) < 1e-12, "JS not symmetric");
        c.require(js_divergence(p, p) < 1e-12, "JS(p,p) not ~0");
    }
    c.note("1000 randomized cases");
}

// --- criterion 2: Gumbel-Max marginal law -----------------------------------

void criterion_gumbel_max(Check& c) {
    const SoftToken st{{{0, 0.5}, {1, 0.3}, {2, 0.2}}};
    RngState rng(2024);
    const int draws = 100000;
    int counts[3] = {0, 0, 0};
    for (int i = 0; i < draws; ++i) counts[gumbel_argmax(st, rng)]++;
    const double expected[3] = {0.5, 0.3, 0.2};
    std::ostringstream freqs;
    for (int i = 0; i < 3; ++i) {
        const double f = counts[i] / static_cast<double>(draws);
        freqs << (i ? " " : "") << f;
        c.require(std::abs(f - expected[i]) <= 0.01, "frequency off by more than 0.01");
    }
    c.note("frequencies " + freqs.str());
}

// --- criterion 3: Gumbel-top-k ordered sampling law --------------------------

void criterion_gumbel_top_k(Check& c) {
    // all 12 ordered pairs of a 4-class distribution vs the
    // without-replacement product formula
    const double pi[4] = {0.4, 0.3, 0.2, 0.1};
    SoftToken st;
    for (int i = 0; i < 4; ++i) st.entries.push_back({i, pi[i]});
    const int draws = 200000;
    std::map<std::pair<TokenId, TokenId>, int> counts;
    RngState rng(3003);
    for (int i = 0; i < draws; ++i) {
        const auto ids = gumbel_top_k(st, 2, rng);
        counts[{ids[0], ids[1]}]++;
    }
    double worst = 0.0;
    for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
            if (a == b) continue;
            const double expected = pi[a] * pi[b] / (1.0 - pi[a]);
            const double observed = counts[{a, b}] / static_cast<double>(draws);
            worst = std::max(worst, std::abs(observed - expected));
        }
    }
    c.require(worst <= 0.01, "an ordered pair deviates by more than 0.01");
    c.note("12 ordered pairs, max deviation " + std::to_string(worst));

    // the named example: P(I1=0, I2=1) = 0.5 * 0.3/(0.3+0.2) = 0.30
    const SoftToken example{{{0, 0.5}, {1, 0.3}, {2, 0.2}}};
    RngState rng2(3004);
    int hits = 0;
    for (int i = 0; i < draws; ++i) {
        const auto ids = gumbel_top_k(example, 2, rng2);
        if (ids[0] == 0 && ids[1] == 1) ++hits;
    }
    c.require(std::abs(hits / static_cast<double>(draws) - 0.30) <= 0.01,
              "P(I1=0,I2=1) off by more than 0.01");
}

// --- criterion 4: Dirichlet moments ------------------------------------------

void criterion_dirichlet(Check& c) {
    const SoftToken st{{{0, 0.5}, {1, 0.3}, {2, 0.2}}};
    const int draws = 100000;
    double previous_variance = 1e9;
    for (const double gamma : {1.0, 4.0, 10.0}) {
        RngState rng(4000 + static_cast<std::uint64_t>(gamma));
        double mean[3] = {0, 0, 0};
        double sq0 = 0.0;
        for (int i = 0; i < draws; ++i) {
            const RandomizedSoftToken rst = dirichlet_resample(st, gamma, rng);
            double w0 = 0.0;
            for (const auto& e : rst.token.entries) {
                mean[e.id] += e.weight;
                if (e.id == 0) w0 = e.weight;
            }
            sq0 += w0 * w0;
        }
        const double expected[3] = {0.5, 0.3, 0.2};
        for (int i = 0; i < 3; ++i)
            c.require(std::abs(mean[i] / draws - expected[i]) <= 0.01,
                      "Dirichlet mean off at gamma " + std::to_string(gamma));
        const double m0 = mean[0] / draws;
        const double variance = sq0 / draws - m0 * m0;
        c.require(variance < previous_variance, "component variance not decreasing in gamma");
        previous_variance = variance;
    }
    c.note("means within 0.01 for gamma {1,4,10}, variance strictly decreasing");
}

// --- criterion 5: softness/randomness scan shape -----------------------------

void criterion_scan_shape(Check& c) {
    const ModelWeights w = toy_model();
    std::vector<std::vector<TokenId>> prompts;
    for (const auto* text : {"2+2=", "7*6=", "reverse: abc", "count: 1 2 3", "10-4=", "a b c",
                             "x=y+z", "sort: b a c"})
        prompts.push_back(prompt(text));
    DecodeConfig base;
    base.max_len = 160;
    base.seed = 5;

    ScanGrid grid;
    grid.tau_values = {0.3, 0.6, 0.9};
    grid.gamma_values = {1.0, 10.0};
    const auto records = randomness_softness_scan(prompts, w, grid, base);

    std::map<double, std::pair<double, int>> tau_softness;
    std::map<double, std::pair<double, int>> gamma_randomness;
    for (const auto& r : records) {
        if (r.randomizer == Randomizer::gumbel_softmax) {
            tau_softness[r.param].first += r.softness;
            tau_softness[r.param].second += 1;
        } else {
            gamma_randomness[r.param].first += r.randomness;
            gamma_randomness[r.param].second += 1;
        }
    }
    double previous = -1.0;
    for (const double tau : grid.tau_values) {
        const auto& [total, count] = tau_softness[tau];
        c.require(count >= 1000, "fewer than 1000 pooled steps at tau " + std::to_string(tau));
        const double mean = total / count;
        c.require(mean > previous, "mean softness not increasing in tau");
        previous = mean;
    }
    const auto& [r1_total, r1_count] = gamma_randomness[1.0];
    const auto& [r10_total, r10_count] = gamma_randomness[10.0];
    c.require(r1_count >= 1000 && r10_count >= 1000, "fewer than 1000 pooled steps per gamma");
    c.require(r10_total / r10_count < r1_total / r1_count,
              "mean Dirichlet randomness not decreasing from gamma 1 to 10");
    c.note("pooled " + std::to_string(r1_count) + " steps per grid point");
}

// --- criterion 6: one-hot equivalence ----------------------------------------

void criterion_one_hot_equivalence(Check& c) {
    const ModelWeights w = toy_model();
    const char* texts[10] = {"2+2=",  "7*6=",       "10-4=",  "reverse: abc", "count: 1 2 3",
                             "a b c", "sort: b a c", "x=y+z", "9/3=",         "echo hi"};
    DecodeConfig greedy_config;
    greedy_config.mode = DecodeMode::greedy;
    greedy_config.max_len = 48;
    DecodeConfig soft_config;
    soft_config.mode = DecodeMode::soft_vanilla;
    soft_config.top_k = 1;
    soft_config.max_len = 48;
    for (const char* text : texts) {
        const Trace greedy = decode(prompt(text), greedy_config, w);
        const Trace soft = decode(prompt(text), soft_config, w);
        const auto g = greedy.thinking_top1_ids();
        const auto s = soft.thinking_top1_ids();
        c.require(g.size() == s.size() && g == s,
                  std::string("dominant-id mismatch on prompt ") + text);
    }
    c.note("10 prompts, exact full-length match");
}

// --- criterion 7: engine consistency -----------------------------------------

void criterion_engine_consistency(Check& c) {
    const ModelWeights w = toy_model();
    const auto ids = prompt("2+2=");
    std::vector<std::vector<float>> inputs;
    for (const TokenId id : ids) inputs.push_back(embed_token(id, w));

    DecoderCache cache = make_cache(w.card);
    std::vector<float> cached_logits = forward(inputs, w, cache).logits;

    double worst = 0.0;
    for (int step = 0; step < 64; ++step) {
        // full recompute from scratch over the same inputs
        DecoderCache fresh = make_cache(w.card);
        const std::vector<float> full_logits = forward(inputs, w, fresh).logits;
        for (std::size_t i = 0; i < full_logits.size(); ++i) {
            const double scale = std::max(1.0f, std::abs(full_logits[i]));
            worst = std::max(worst, std::abs(cached_logits[i] - full_logits[i]) / scale);
        }
        // next soft-thinking input
        const SoftToken st = truncate(softmax(cached_logits, 0.6), 30, 0.95);
        inputs.push_back(embed_soft(st, w));
        cached_logits = forward({inputs.back()}, w, cache).logits;
    }
    c.require(worst <= 1e-5, "cache vs recompute relative error above 1e-5");
    c.note("max relative logit error " + std::to_string(worst));

    // lens at the final layer reproduces the output distribution
    DecoderCache lens_cache = make_cache(w.card);
    std::vector<std::vector<float>> lens_inputs;
    for (const TokenId id : ids) lens_inputs.push_back(embed_token(id, w));
    const ForwardResult fw = forward(lens_inputs, w, lens_cache, true);
    const double js = js_divergence(logit_lens(fw.activations.states.back(), w),
                                    softmax(fw.logits, 1.0));
    c.require(js < 1e-6, "final-layer lens JS not below 1e-6");
}

// --- criterion 8: linearity boundary -----------------------------------------

void criterion_linearity(Check& c) {
    // exact on the single-linear-layer model
    const ModelWeights linear = init_linear_model(tokens::kVocabSize, 11, 0.02);
    const SoftToken pair{{{50, 0.5}, {51, 0.5}}};
    const LinearityResult exact = linearity_check(prompt("ab"), pair, linear);
    c.require(exact.js < 1e-6, "linear model js not below 1e-6");

    // exact for one-hot inputs on the full transformer
    const ModelWeights w = toy_model();
    const LinearityResult hot = linearity_check(prompt("ab"), SoftToken::one_hot(50), w);
    c.require(hot.js < 1e-9, "one-hot js not below 1e-9");

    // strictly positive on the full transformer with a 2-token soft input
    const SoftToken skew{{{97, 0.6}, {98, 0.4}}};
    const LinearityResult fuzzy = linearity_check(prompt("ab"), skew, w);
    c.require(fuzzy.js > 0.0, "transformer js not positive");
    std::ostringstream note;
    note << "linear js " << exact.js << ", one-hot js " << hot.js << ", transformer js "
         << fuzzy.js;
    c.note(note.str());
}

// --- criterion 9: ROUGE-L against brute force ---------------------------------

int lcs_brute_force(const std::vector<TokenId>& candidate, const std::vector<TokenId>& reference) {
    const int n = static_cast<int>(candidate.size());
    int best = 0;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        std::vector<TokenId> sub;
        for (int i = 0; i < n; ++i)
            if (mask & (1u << i)) sub.push_back(candidate[static_cast<std::size_t>(i)]);
        if (static_cast<int>(sub.size()) <= best) continue;
        std::size_t j = 0;
        for (const TokenId id : reference)
            if (j < sub.size() && sub[j] == id) ++j;
        if (j == sub.size()) best = static_cast<int>(sub.size());
    }
    return best;
}

void criterion_rouge(Check& c) {
    RngState rng(9009);
    for (int it = 0; it < 500; ++it) {
        const int alphabet = 2 + static_cast<int>(rng.next_u64() % 6);
        std::vector<TokenId> a(1 + rng.next_u64() % 12), b(1 + rng.next_u64() % 12);
        for (auto& t : a) t = static_cast<TokenId>(rng.next_u64() % static_cast<std::uint64_t>(alphabet));
        for (auto& t : b) t = static_cast<TokenId>(rng.next_u64() % static_cast<std::uint64_t>(alphabet));
        const int oracle = lcs_brute_force(a, b);
        const double p = static_cast<double>(oracle) / static_cast<double>(a.size());
        const double r = static_cast<double>(oracle) / static_cast<double>(b.size());
        const double expected = (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
        if (rouge_l(a, b).f1 != expected) {
            c.require(false, "f1 differs from brute force at case " + std::to_string(it));
            return;
        }
    }
    const RougeScore named = rouge_l(std::vector<TokenId>{10, 11, 12, 13},
                                     std::vector<TokenId>{10, 12, 11, 13});
    c.require(named.f1 == 0.75, "named example f1 != 0.75");
    c.note("500 random pairs exact, named example 0.75");
}

// --- criterion 10: greedy-pitfall direction -----------------------------------

void criterion_greedy_pitfall(Check& c) {
    const ModelWeights w = toy_model(64);
    DecodeConfig base;
    base.max_len = 96;
    int wins = 0, total = 0;
    for (const auto* text : {"2+2=", "7*6=", "reverse: abc", "count: 1 2 3"}) {
        const auto ids = prompt(text);
        DecodeConfig greedy_config = base;
        greedy_config.mode = DecodeMode::greedy;
        const std::vector<TokenId> ref = decode(ids, greedy_config, w).thinking_top1_ids();

        DecodeConfig soft_config = base;
        soft_config.mode = DecodeMode::soft_vanilla;
        soft_config.seed = 1;
        const std::vector<TokenId> soft = decode(ids, soft_config, w).thinking_top1_ids();

        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            DecodeConfig sample_config = base;
            sample_config.mode = DecodeMode::sample;
            sample_config.seed = seed;
            const std::vector<TokenId> sampled =
                decode(ids, sample_config, w).thinking_top1_ids();

            std::vector<int> lengths;
            const int longest =
                static_cast<int>(std::max({ref.size(), soft.size(), sampled.size()}));
            for (int len = 1; len <= longest; ++len) lengths.push_back(len);
            const auto soft_curve = prefix_curve(soft, ref, lengths);
            const auto sample_curve = prefix_curve(sampled, ref, lengths);
            for (std::size_t i = 0; i < lengths.size(); ++i) {
                ++total;
                if (soft_curve[i].second >= sample_curve[i].second) ++wins;
            }
        }
    }
    const double fraction = static_cast<double>(wins) / static_cast<double>(total);
    c.require(fraction >= 0.80, "soft curve dominates at fewer than 80% of prefix lengths");
    std::ostringstream note;
    note << "soft >= sample at " << fraction * 100.0 << "% of " << total
         << " (seed, length) points";
    c.note(note.str());
}

// --- criterion 11: end-to-end determinism -------------------------------------

void run_pipeline(const std::string& out_root) {
    ExperimentSpec spec;
    spec.model.kind = ModelSource::Kind::toy;
    spec.model.toy.spec.dim = 32;
    spec.model.toy.spec.layers = 2;
    spec.model.toy.spec.heads = 4;
    spec.model.toy.seed = 7;
    spec.prompts = {"2+2=", "7*6=", "reverse: abc"};
    spec.decode.mode = DecodeMode::soft_vanilla;
    spec.decode.max_len = 32;
    spec.decode.seed = 1;
    spec.probes.js_threshold = 0.05;
    spec.probes.lens_max_points = 2;
    spec.probes.gamma_grid = {1.0, 4.0};
    spec.probes.tau_grid = {0.5};
    spec.probes.scan_max_len = 16;

    const DecodeOutputs soft = cmd_decode(spec, out_root);

    ExperimentSpec greedy_spec = spec;
    greedy_spec.decode.mode = DecodeMode::greedy;
    const DecodeOutputs greedy = cmd_decode(greedy_spec, out_root);

    ExperimentSpec sample_spec = spec;
    sample_spec.decode.mode = DecodeMode::sample;
    const DecodeOutputs sampled = cmd_decode(sample_spec, out_root);

    cmd_probe(ProbeKind::js, soft.trace_files, spec.probes, soft.out_dir);
    cmd_probe(ProbeKind::lens, soft.trace_files, spec.probes, soft.out_dir);
    cmd_probe(ProbeKind::linearity, soft.trace_files, spec.probes, soft.out_dir);
    std::vector<std::string> all = soft.trace_files;
    all.insert(all.end(), greedy.trace_files.begin(), greedy.trace_files.end());
    all.insert(all.end(), sampled.trace_files.begin(), sampled.trace_files.end());
    cmd_probe(ProbeKind::similarity, all, spec.probes, soft.out_dir);
    cmd_probe(ProbeKind::scan, soft.trace_files, spec.probes, soft.out_dir);
    cmd_figures(soft.out_dir);
}

void criterion_determinism(Check& c) {
    const fs::path root = fs::temp_directory_path() / "softthink_acceptance_e2e";
    const fs::path run1 = root / "run1";
    const fs::path run2 = root / "run2";
    fs::remove_all(root);
    fs::create_directories(run1);
    fs::create_directories(run2);

    run_pipeline(run1.string());
    run_pipeline(run2.string());

    // collect relative paths from both runs
    auto collect = [](const fs::path& base) {
        std::set<std::string> rel;
        for (const auto& entry : fs::recursive_directory_iterator(base))
            if (entry.is_regular_file()) rel.insert(fs::relative(entry.path(), base).string());
        return rel;
    };
    const auto files1 = collect(run1);
    const auto files2 = collect(run2);
    c.require(files1 == files2, "file sets differ between runs");
    c.require(!files1.empty(), "pipeline produced no files");

    int compared = 0;
    for (const std::string& rel : files1) {
        std::ifstream a(run1 / rel, std::ios::binary), b(run2 / rel, std::ios::binary);
        const std::string ba((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
        const std::string bb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
        if (ba != bb) {
            c.require(false, "byte mismatch in " + rel);
            return;
        }
        ++compared;
    }
    c.note(std::to_string(compared) + " files byte-identical across two full pipeline runs");
    fs::remove_all(root);
}

} // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double budget_seconds;
        std::function<void(Check&)> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "simplex property suite", 5.0, criterion_simplex},
        {2, "Gumbel-Max marginal law", 5.0, criterion_gumbel_max},
        {3, "Gumbel-top-k ordered sampling law", 30.0, criterion_gumbel_top_k},
        {4, "Dirichlet moments", 30.0, criterion_dirichlet},
        {5, "softness/randomness scan shape", 120.0, criterion_scan_shape},
        {6, "one-hot equivalence (soft top-k 1 vs greedy)", 60.0, criterion_one_hot_equivalence},
        {7, "engine consistency (cache + lens)", 60.0, criterion_engine_consistency},
        {8, "linearity boundary", 30.0, criterion_linearity},
        {9, "ROUGE-L brute-force oracle", 5.0, criterion_rouge},
        {10, "greedy-pitfall direction", 300.0, criterion_greedy_pitfall},
        {11, "end-to-end determinism", 600.0, criterion_determinism},
    };

    int failures = 0;
    for (const Criterion& criterion : criteria) {
        Check check;
        const auto start = std::chrono::steady_clock::now();
        try {
            criterion.run(check);
        } catch (const std::exception& e) {
            check.require(false, std::string("exception: ") + e.what());
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (seconds > criterion.budget_seconds)
            check.require(false, "time budget exceeded");
        if (!check.ok) ++failures;
        std::printf("[%s] criterion %2d: %s (%.2fs)%s%s\n", check.ok ? "PASS" : "FAIL",
                    criterion.id, criterion.name, seconds,
                    check.detail.tellp() > 0 ? " - " : "", check.detail.str().c_str());
        std::fflush(stdout);
    }
    if (failures > 0) {
        std::printf("%d of %zu criteria failed\n", failures, criteria.size());
        return 1;
    }
    std::printf("all %zu acceptance criteria passed\n", criteria.size());
    return 0;
}
