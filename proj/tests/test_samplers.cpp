#include <doctest.h>

#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "softthink/samplers.hpp"

using namespace softthink;

namespace {

SoftToken three_class() {
    return SoftToken{{{0, 0.5}, {1, 0.3}, {2, 0.2}}};
}

} // namespace

TEST_CASE("rng streams are deterministic and child-derived") {
    RngState a(42), b(42);
    for (int i = 0; i < 64; ++i) CHECK(a.next_u64() == b.next_u64());

    RngState c1 = RngState::child(7, 3);
    RngState c2 = RngState::child(7, 3);
    RngState c3 = RngState::child(7, 4);
    CHECK(c1.next_u64() == c2.next_u64());
    CHECK(c1.next_u64() != c3.next_u64());
}

TEST_CASE("sample_categorical") {
    RngState rng(1);
    const SoftToken hot = SoftToken::one_hot(7);
    for (int i = 0; i < 32; ++i) CHECK(sample_categorical(hot, rng) == 7);

    // binomial check: p = 0.5, 100k draws, 3-sigma band
    const SoftToken fair{{{0, 0.5}, {1, 0.5}}};
    RngState rng2(9);
    int zeros = 0;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i)
        if (sample_categorical(fair, rng2) == 0) ++zeros;
    const double freq = static_cast<double>(zeros) / draws;
    CHECK(freq >= 0.494);
    CHECK(freq <= 0.506);

    RngState s1(42), s2(42);
    CHECK(sample_categorical(three_class(), s1) == sample_categorical(three_class(), s2));
}

TEST_CASE("sample_gumbel moments match the known law") {
    RngState rng(123);
    const int n = 1000000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = sample_gumbel(1, rng)[0];
        CHECK(std::isfinite(g));
        sum += g;
        sum_sq += g * g;
    }
    const double mean = sum / n;
    const double variance = sum_sq / n - mean * mean;
    CHECK(std::abs(mean - 0.5772156649) < 0.01);               // Euler-Mascheroni
    CHECK(std::abs(variance - 1.6449340668) < 0.02);           // pi^2 / 6
}

TEST_CASE("gumbel_argmax marginal law") {
    RngState rng(5);
    const SoftToken hot = SoftToken::one_hot(3);
    for (int i = 0; i < 16; ++i) CHECK(gumbel_argmax(hot, rng) == 3);

    const SoftToken st = three_class();
    std::array<int, 3> counts{0, 0, 0};
    const int draws = 100000;
    RngState rng2(31);
    for (int i = 0; i < draws; ++i) counts[static_cast<std::size_t>(gumbel_argmax(st, rng2))]++;
    CHECK(std::abs(counts[0] / static_cast<double>(draws) - 0.5) < 0.01);
    CHECK(std::abs(counts[1] / static_cast<double>(draws) - 0.3) < 0.01);
    CHECK(std::abs(counts[2] / static_cast<double>(draws) - 0.2) < 0.01);
}

TEST_CASE("gumbel_argmax is invariant to weight scaling under shared noise") {
    RngState rng(77);
    for (int it = 0; it < 100; ++it) {
        const std::vector<double> noise = sample_gumbel(3, rng);
        SoftToken st = three_class();
        SoftToken scaled = st;
        for (auto& e : scaled.entries) e.weight *= 13.5; // unnormalized on purpose
        CHECK(detail::perturbed_argmax(st, noise) == detail::perturbed_argmax(scaled, noise));
    }
}

TEST_CASE("gumbel_top_k") {
    const SoftToken st = three_class();
    RngState rng(2);

    // k = support size gives a permutation
    for (int it = 0; it < 50; ++it) {
        const auto ids = gumbel_top_k(st, 3, rng);
        std::vector<TokenId> sorted = ids;
        std::sort(sorted.begin(), sorted.end());
        CHECK(sorted == std::vector<TokenId>{0, 1, 2});
    }

    // k = 1 is gumbel_argmax in law (and bit-identical under the same seed)
    RngState a(99), b(99);
    for (int it = 0; it < 50; ++it)
        CHECK(gumbel_top_k(st, 1, a)[0] == gumbel_argmax(st, b));

    CHECK_THROWS_AS(gumbel_top_k(st, 4, rng), std::invalid_argument);

    // ordered-pair law: P(I1=0, I2=1) = 0.5 * 0.3/0.5 = 0.30
    RngState rng2(17);
    const int draws = 200000;
    int hits = 0;
    for (int i = 0; i < draws; ++i) {
        const auto ids = gumbel_top_k(st, 2, rng2);
        if (ids[0] == 0 && ids[1] == 1) ++hits;
    }
    CHECK(std::abs(hits / static_cast<double>(draws) - 0.30) < 0.01);
}

TEST_CASE("gumbel_top_k ordered pairs match the product formula on 4 classes") {
    const SoftToken st{{{0, 0.4}, {1, 0.3}, {2, 0.2}, {3, 0.1}}};
    const int draws = 200000;
    std::map<std::pair<TokenId, TokenId>, int> counts;
    RngState rng(271828);
    for (int i = 0; i < draws; ++i) {
        const auto ids = gumbel_top_k(st, 2, rng);
        counts[{ids[0], ids[1]}]++;
    }
    const double pi[4] = {0.4, 0.3, 0.2, 0.1};
    for (int first = 0; first < 4; ++first) {
        for (int second = 0; second < 4; ++second) {
            if (first == second) continue;
            const double expected = pi[first] * pi[second] / (1.0 - pi[first]);
            const double observed =
                counts[{first, second}] / static_cast<double>(draws);
            CHECK(std::abs(observed - expected) < 0.01);
        }
    }
}

TEST_CASE("gumbel_softmax") {
    RngState rng(3);
    const RandomizedSoftToken hot = gumbel_softmax(SoftToken::one_hot(5), 0.7, rng);
    REQUIRE(hot.token.size() == 1);
    CHECK(hot.token.entries[0].id == 5);
    CHECK(hot.token.entries[0].weight == 1.0);
    CHECK(hot.source == Randomizer::gumbel_softmax);

    CHECK_THROWS_AS(gumbel_softmax(three_class(), 0.0, rng), std::invalid_argument);
    CHECK_THROWS_AS(gumbel_softmax(three_class(), -0.5, rng), std::invalid_argument);

    // same noise realization: argmax independent of tau, equal to gumbel_argmax
    for (int it = 0; it < 100; ++it) {
        const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(it);
        RngState base(seed);
        const TokenId hard = gumbel_argmax(three_class(), base);
        for (const double tau : {0.01, 0.5, 2.0}) {
            RngState same(seed);
            const RandomizedSoftToken soft = gumbel_softmax(three_class(), tau, same);
            CHECK(soft.token.dominant() == hard);
        }
    }

    // validness
    RngState rng2(12);
    for (int it = 0; it < 500; ++it) {
        const RandomizedSoftToken rst = gumbel_softmax(three_class(), 0.3 + 0.1 * (it % 7), rng2);
        CHECK(is_valid(rst.token));
    }
}

TEST_CASE("gumbel_softmax collapses toward one-hot at small tau") {
    // Monte-Carlo measured law: the top-2 perturbed gap is O(1), so at
    // tau = 0.01 a small fraction of draws still lands below 0.99.
    RngState rng(8);
    const int draws = 10000;
    int collapsed = 0;
    for (int i = 0; i < draws; ++i) {
        const RandomizedSoftToken rst = gumbel_softmax(three_class(), 0.01, rng);
        if (rst.token.entries[0].weight > 0.99) ++collapsed;
    }
    CHECK(collapsed / static_cast<double>(draws) > 0.95);
}

TEST_CASE("gumbel_softmax mean softness is nondecreasing in tau") {
    const SoftToken st = three_class();
    const int draws = 30000;
    double previous = -1.0;
    for (int i = 0; i <= 6; ++i) {
        const double tau = 0.3 + 0.1 * i;
        RngState rng(404 + static_cast<std::uint64_t>(i));
        double total = 0.0;
        for (int d = 0; d < draws; ++d)
            total += entropy_normalized(gumbel_softmax(st, tau, rng).token);
        const double mean = total / draws;
        CHECK(mean >= previous);
        previous = mean;
    }
}

TEST_CASE("gamma_variate moments") {
    for (const double shape : {0.3, 1.0, 2.5, 4.0}) {
        RngState rng(55 + static_cast<std::uint64_t>(shape * 10));
        const int n = 200000;
        double sum = 0.0, sum_sq = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = gamma_variate(shape, rng);
            CHECK(x > 0.0);
            sum += x;
            sum_sq += x * x;
        }
        const double mean = sum / n;
        const double variance = sum_sq / n - mean * mean;
        CHECK(std::abs(mean - shape) < 0.05 * std::max(1.0, shape));
        CHECK(std::abs(variance - shape) < 0.1 * std::max(1.0, shape));
    }
    RngState rng(1);
    CHECK_THROWS_AS(gamma_variate(0.0, rng), std::invalid_argument);
}

TEST_CASE("dirichlet_resample") {
    RngState rng(21);
    const RandomizedSoftToken hot = dirichlet_resample(SoftToken::one_hot(4), 2.0, rng);
    REQUIRE(hot.token.size() == 1);
    CHECK(hot.token.entries[0].id == 4);
    CHECK(hot.token.entries[0].weight == 1.0);
    CHECK(hot.source == Randomizer::dirichlet);

    CHECK_THROWS_AS(dirichlet_resample(three_class(), 0.0, rng), std::invalid_argument);

    // mean of Dir(gamma * p) is p
    const SoftToken st = three_class();
    RngState rng2(34);
    const int draws = 100000;
    double mean0 = 0.0, mean1 = 0.0, mean2 = 0.0;
    for (int i = 0; i < draws; ++i) {
        const RandomizedSoftToken rst = dirichlet_resample(st, 4.0, rng2);
        CHECK(is_valid(rst.token));
        for (const auto& e : rst.token.entries) {
            if (e.id == 0) mean0 += e.weight;
            if (e.id == 1) mean1 += e.weight;
            if (e.id == 2) mean2 += e.weight;
        }
    }
    CHECK(std::abs(mean0 / draws - 0.5) < 0.01);
    CHECK(std::abs(mean1 / draws - 0.3) < 0.01);
    CHECK(std::abs(mean2 / draws - 0.2) < 0.01);
}

TEST_CASE("dirichlet variance shrinks as gamma grows") {
    const SoftToken fair{{{0, 0.5}, {1, 0.5}}};
    auto component0_variance = [&](double gamma, std::uint64_t seed) {
        RngState rng(seed);
        const int draws = 50000;
        double sum = 0.0, sum_sq = 0.0;
        for (int i = 0; i < draws; ++i) {
            const RandomizedSoftToken rst = dirichlet_resample(fair, gamma, rng);
            double w0 = 0.0;
            for (const auto& e : rst.token.entries)
                if (e.id == 0) w0 = e.weight;
            sum += w0;
            sum_sq += w0 * w0;
        }
        const double mean = sum / draws;
        return sum_sq / draws - mean * mean;
    };
    const double var_tight = component0_variance(10.0, 61);
    const double var_loose = component0_variance(2.0, 62);
    CHECK(var_tight < var_loose);
    // analytic: Var = p(1-p)/(gamma+1)
    CHECK(std::abs(var_tight - 0.25 / 11.0) < 0.005);
    CHECK(std::abs(var_loose - 0.25 / 3.0) < 0.01);
}

TEST_CASE("dirichlet softness rises and randomness falls with gamma") {
    const SoftToken st = three_class();
    const int draws = 30000;
    double prev_entropy = -1.0;
    double prev_js = 10.0;
    for (int gamma = 1; gamma <= 10; ++gamma) {
        RngState rng(700 + static_cast<std::uint64_t>(gamma));
        double entropy_total = 0.0, js_total = 0.0;
        for (int d = 0; d < draws; ++d) {
            const RandomizedSoftToken rst = dirichlet_resample(st, gamma, rng);
            entropy_total += entropy_normalized(rst.token);
            js_total += js_divergence(st, rst.token);
        }
        const double mean_entropy = entropy_total / draws;
        const double mean_js = js_total / draws;
        CHECK(mean_entropy >= prev_entropy);
        CHECK(mean_js <= prev_js);
        prev_entropy = mean_entropy;
        prev_js = mean_js;
    }
}

TEST_CASE("dirichlet_resample honors post-truncation settings") {
    const SoftToken st = three_class();
    RngState rng(9001);
    for (int it = 0; it < 200; ++it) {
        const RandomizedSoftToken rst = dirichlet_resample(st, 4.0, rng, 2, 1.0);
        CHECK(rst.token.size() <= 2);
        CHECK(is_valid(rst.token));
    }
}

TEST_CASE("samplers are bit-deterministic under a fixed seed") {
    const SoftToken st = three_class();
    for (int repeat = 0; repeat < 2; ++repeat) {
        RngState r1(2024), r2(2024);
        for (int i = 0; i < 50; ++i) {
            CHECK(sample_categorical(st, r1) == sample_categorical(st, r2));
            const auto g1 = gumbel_softmax(st, 0.5, r1);
            const auto g2 = gumbel_softmax(st, 0.5, r2);
            CHECK(g1.token == g2.token);
            const auto d1 = dirichlet_resample(st, 4.0, r1);
            const auto d2 = dirichlet_resample(st, 4.0, r2);
            CHECK(d1.token == d2.token);
        }
    }
}
