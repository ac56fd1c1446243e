#pragma once

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "softthink/tokenizer.hpp"

namespace test_util {

inline std::vector<softthink::TokenId> prompt_ids(const std::string& text) {
    std::vector<softthink::TokenId> ids{softthink::tokens::kBos};
    for (const softthink::TokenId id : softthink::tokenize(text)) ids.push_back(id);
    return ids;
}

inline void check_close_json(const nlohmann::json& expected, const nlohmann::json& actual,
                             double tolerance) {
    if (expected.is_number() && actual.is_number()) {
        const double e = expected.get<double>();
        const double a = actual.get<double>();
        CHECK(std::abs(e - a) <= tolerance * std::max(1.0, std::abs(e)));
        return;
    }
    REQUIRE(expected.type() == actual.type());
    if (expected.is_object()) {
        REQUIRE(expected.size() == actual.size());
        for (const auto& [key, value] : expected.items()) {
            REQUIRE(actual.contains(key));
            check_close_json(value, actual.at(key), tolerance);
        }
    } else if (expected.is_array()) {
        REQUIRE(expected.size() == actual.size());
        for (std::size_t i = 0; i < expected.size(); ++i)
            check_close_json(expected[i], actual[i], tolerance);
    } else {
        CHECK(expected == actual);
    }
}

/// Snapshot check: the first run records the value, later runs compare
/// against it (1e-6 relative on floats).
inline void golden_check(const std::string& name, const nlohmann::json& value,
                         double tolerance = 1e-6) {
    const std::filesystem::path dir = TEST_GOLDEN_DIR;
    const std::filesystem::path path = dir / (name + ".json");
    if (!std::filesystem::exists(path)) {
        std::filesystem::create_directories(dir);
        std::ofstream out(path);
        out << value.dump(2) << "\n";
        MESSAGE("golden_check: recorded new golden ", name);
        return;
    }
    std::ifstream in(path);
    nlohmann::json expected;
    in >> expected;
    INFO("golden file: ", name);
    check_close_json(expected, value, tolerance);
}

} // namespace test_util
